//! The `mvembed` command line: dataset synthesis, training, evaluation and
//! dump extraction as subcommands of one binary. Exit codes: 0 on success,
//! 1 on usage errors, 2 on runtime failures.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::warn;

use crate::attention::{load_classification, load_links, LabeledSet};
use crate::eval::{
    degree_buckets, evaluate_link, f1_scores, fit_ovr, sample_negative_pairs,
    split_classification, OvrConfig,
};
use crate::graph::{GraphBuilder, MultiViewGraph, NodeId, Vocab};
use crate::synth::{generate, write_dataset, SynthSpec, ViewKind};
use crate::trainer::{
    load_config_file, parse_view_spec, train, write_outputs, DumpSelection, FileConfig, ViewSpec,
};

#[derive(Parser)]
#[command(
    name = "mvembed",
    version,
    about = "Multi-view network embedding: train per-view node vectors with shared contexts, learn per-node view weights from a few labels, and vote robust representations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic multi-view dataset with planted communities
    Synth(SynthArgs),
    /// Train embeddings on one or more views and write all dumps
    Train(TrainArgs),
    /// One-vs-rest classification of an embedding dump, scored with macro/micro-F1
    EvalClassify(EvalClassifyArgs),
    /// Link prediction over an embedding dump, scored with cosine AUC
    EvalLink(EvalLinkArgs),
    /// Train and write only the view-weight table
    DumpWeights(TrainArgs),
    /// Train and write only the embedding tables
    DumpEmbeddings(TrainArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the generated files
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 400)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    communities: usize,
    /// Add a community-aligned view: P_IN,P_OUT (repeatable)
    #[arg(long = "sbm", value_name = "P_IN,P_OUT")]
    sbm: Vec<String>,
    /// Add a community-free noise view: P (repeatable)
    #[arg(long = "er", value_name = "P")]
    er: Vec<String>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Fraction of informative-view edges withheld as link positives
    #[arg(long, default_value_t = 0.1)]
    heldout_frac: f64,
    /// Number of nodes written to attn_labels.txt
    #[arg(long, default_value_t = 40)]
    labeled: usize,
    /// Number of held-out pairs written to attn_pairs.txt
    #[arg(long, default_value_t = 100)]
    labeled_pairs: usize,
    /// Draw integer edge weights in 1..=3 instead of unit weights
    #[arg(long)]
    weighted: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// key=value config file; explicit flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel SGD workers; 1 keeps the run deterministic
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    /// Edge samples per iteration
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Keep uniform view weights (skip weight learning)
    #[arg(long)]
    no_attention: bool,
    /// Per-view context tables and no regularizer
    #[arg(long)]
    no_collab: bool,
    /// Pick views proportionally to edge counts instead of uniformly
    #[arg(long)]
    view_pick_by_size: bool,
    #[arg(long)]
    attention_step: Option<f64>,
    #[arg(long)]
    attention_epochs: Option<usize>,
    /// Training view (repeatable)
    #[arg(long = "view", value_name = "NAME=PATH[:directed]")]
    views: Vec<String>,
    /// Labeled nodes for classification-driven weights: "TOKEN LABEL[,LABEL...]"
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Labeled pairs for link-driven weights: "TOKEN TOKEN"
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalClassifyArgs {
    /// Embedding dump; repeat to concatenate features per node
    #[arg(long = "embeddings", required = true)]
    embeddings: Vec<PathBuf>,
    /// Ground-truth labels file: "TOKEN LABEL[,LABEL...]"
    #[arg(long)]
    labels: PathBuf,
    /// Nodes never placed in the test split (first token per line)
    #[arg(long)]
    exclude: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    train_frac: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    penalty: f64,
    /// Also report micro-F1 over N test groups bucketed by total degree
    /// (requires --view flags for the degree computation)
    #[arg(long)]
    buckets: Option<usize>,
    /// Training view used only for degree bucketing (repeatable)
    #[arg(long = "view", value_name = "NAME=PATH[:directed]")]
    views: Vec<String>,
    /// Directory for metrics.txt; metrics always go to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalLinkArgs {
    /// Embedding dump; repeat to concatenate features per node
    #[arg(long = "embeddings", required = true)]
    embeddings: Vec<PathBuf>,
    /// Held-out positive pairs: "TOKEN TOKEN"
    #[arg(long)]
    pairs: PathBuf,
    /// Pairs excluded from evaluation (e.g. attention-labeled pairs)
    #[arg(long)]
    exclude_pairs: Option<PathBuf>,
    /// Training views; sampled negatives avoid their edges (repeatable)
    #[arg(long = "view", value_name = "NAME=PATH[:directed]")]
    views: Vec<String>,
    #[arg(long, default_value_t = 1)]
    negatives_per_positive: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for metrics.txt; metrics always go to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> CliError {
        let mut message = e.to_string();
        let mut source = e.source();
        while let Some(s) = source {
            message.push_str(&format!(": {s}"));
            source = s.source();
        }
        CliError::Runtime(message)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parse and run one invocation. 0 on success, 1 on usage errors, 2 on
/// runtime failures.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    let result = match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Train(args) => run_train(args, DumpSelection::all()),
        Command::EvalClassify(args) => run_eval_classify(args),
        Command::EvalLink(args) => run_eval_link(args),
        Command::DumpWeights(args) => run_train(
            args,
            DumpSelection {
                vocab: false,
                embeddings: false,
                weights: true,
            },
        ),
        Command::DumpEmbeddings(args) => run_train(
            args,
            DumpSelection {
                vocab: true,
                embeddings: true,
                weights: false,
            },
        ),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn run_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut views = Vec::new();
    for spec in &args.sbm {
        let (p_in, p_out) = spec
            .split_once(',')
            .ok_or_else(|| usage(format!("--sbm '{spec}' is not P_IN,P_OUT")))?;
        views.push(ViewKind::Informative {
            p_in: p_in
                .trim()
                .parse()
                .map_err(|_| usage(format!("invalid probability '{p_in}'")))?,
            p_out: p_out
                .trim()
                .parse()
                .map_err(|_| usage(format!("invalid probability '{p_out}'")))?,
        });
    }
    for spec in &args.er {
        views.push(ViewKind::Noise {
            p: spec
                .trim()
                .parse()
                .map_err(|_| usage(format!("invalid probability '{spec}'")))?,
        });
    }
    if views.is_empty() {
        views.push(ViewKind::Informative { p_in: 0.2, p_out: 0.01 });
        views.push(ViewKind::Noise { p: 0.05 });
    }
    let spec = SynthSpec {
        nodes: args.nodes,
        communities: args.communities,
        views,
        heldout_frac: args.heldout_frac,
        weighted: args.weighted,
        seed: args.seed,
    };
    let data = generate(&spec)?;
    write_dataset(&data, &args.out, args.labeled, args.labeled_pairs, args.seed)?;
    println!(
        "wrote {} views over {} nodes ({} held-out pairs) to {}",
        data.view_pairs.len(),
        data.graph.node_count(),
        data.heldout.len(),
        args.out.display()
    );
    Ok(())
}

fn resolve_settings(args: &TrainArgs) -> Result<FileConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => load_config_file(path)?,
        None => FileConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = args.workers {
        cfg.train.workers = v;
    }
    if let Some(v) = args.dim {
        cfg.train.dim = v;
    }
    if let Some(v) = args.negatives {
        cfg.train.negatives = v;
    }
    if let Some(v) = args.eta {
        cfg.train.eta = v;
    }
    if let Some(v) = args.lr {
        cfg.train.initial_lr = v;
    }
    if let Some(v) = args.samples {
        cfg.train.samples_per_iter = v;
    }
    if let Some(v) = args.iterations {
        cfg.train.iterations = v;
    }
    if args.no_attention {
        cfg.train.no_attention = true;
    }
    if args.no_collab {
        cfg.train.no_collaboration = true;
    }
    if args.view_pick_by_size {
        cfg.train.view_pick_by_size = true;
    }
    if let Some(v) = args.attention_step {
        cfg.train.attention_step = v;
    }
    if let Some(v) = args.attention_epochs {
        cfg.train.attention_epochs = v;
    }
    if !args.views.is_empty() {
        cfg.views = parse_views(&args.views)?;
    }
    if args.labels.is_some() {
        cfg.labels = args.labels.clone();
    }
    if args.pairs.is_some() {
        cfg.pairs = args.pairs.clone();
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    Ok(cfg)
}

fn parse_views(specs: &[String]) -> Result<Vec<ViewSpec>, CliError> {
    specs.iter().map(|s| parse_view_spec(s).map_err(usage)).collect()
}

fn build_graph(views: &[ViewSpec]) -> Result<MultiViewGraph, CliError> {
    let mut builder = GraphBuilder::new();
    for v in views {
        builder.add_view_file(&v.name, &v.path, v.directedness)?;
    }
    Ok(builder.build()?)
}

fn run_train(args: TrainArgs, selection: DumpSelection) -> Result<(), CliError> {
    let cfg = resolve_settings(&args)?;
    if cfg.views.is_empty() {
        return Err(usage("at least one --view NAME=PATH[:directed] is required"));
    }
    if cfg.labels.is_some() && cfg.pairs.is_some() {
        return Err(usage("--labels and --pairs are mutually exclusive"));
    }
    let out = cfg
        .out
        .as_ref()
        .ok_or_else(|| usage("--out DIR is required"))?
        .clone();
    cfg.train.validate().map_err(|e| usage(e.to_string()))?;

    let graph = build_graph(&cfg.views)?;
    let labeled = match (&cfg.labels, &cfg.pairs) {
        (Some(path), None) => Some(LabeledSet::Classification(load_classification(
            path,
            graph.vocab(),
        )?)),
        (None, Some(path)) => Some(LabeledSet::Link(load_links(path, graph.vocab())?)),
        _ => None,
    };

    let output = train(&cfg.train, &graph, labeled.as_ref(), None)?;
    write_outputs(&out, &graph, &output.store, &output.weights, selection)?;
    println!(
        "trained {} views over {} nodes in {:.2}s (embedding {:.2}s, attention {:.2}s); outputs in {}",
        graph.view_count(),
        graph.node_count(),
        output.stats.total_secs,
        output.stats.embed_secs,
        output.stats.attention_secs,
        out.display()
    );
    Ok(())
}

/// Read one or more embedding dumps; later files are concatenated column-wise
/// and must list the same tokens in the same order.
fn read_embeddings(paths: &[PathBuf]) -> Result<(Vocab, Vec<Vec<f64>>), CliError> {
    let mut vocab = Vocab::new();
    let mut matrix: Vec<Vec<f64>> = Vec::new();
    for (file_index, path) in paths.iter().enumerate() {
        let file = File::open(path).map_err(|e| {
            CliError::Runtime(format!("cannot open {}: {e}", path.display()))
        })?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let header = match lines.next() {
            Some((_, Ok(h))) => h,
            _ => return Err(CliError::Runtime(format!("{}: missing header", path.display()))),
        };
        let mut fields = header.split_whitespace();
        let (count, dim): (usize, usize) = match (
            fields.next().and_then(|f| f.parse().ok()),
            fields.next().and_then(|f| f.parse().ok()),
        ) {
            (Some(c), Some(d)) => (c, d),
            _ => {
                return Err(CliError::Runtime(format!(
                    "{}: header is not '|V| d'",
                    path.display()
                )))
            }
        };
        let mut rows = 0usize;
        for (lineno, line) in lines {
            let line = line.map_err(|e| {
                CliError::Runtime(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields
                .next()
                .ok_or_else(|| CliError::Runtime(format!("{}:{}: empty line", path.display(), lineno + 1)))?;
            let values: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Runtime(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            if values.len() != dim {
                return Err(CliError::Runtime(format!(
                    "{}:{}: expected {} values, found {}",
                    path.display(),
                    lineno + 1,
                    dim,
                    values.len()
                )));
            }
            if file_index == 0 {
                if vocab.get(token).is_some() {
                    return Err(CliError::Runtime(format!(
                        "{}:{}: duplicate token '{token}'",
                        path.display(),
                        lineno + 1
                    )));
                }
                vocab.intern(token);
                matrix.push(values);
            } else {
                if rows >= matrix.len() || vocab.token(NodeId(rows)) != token {
                    return Err(CliError::Runtime(format!(
                        "{}: token order differs from {}",
                        path.display(),
                        paths[0].display()
                    )));
                }
                matrix[rows].extend_from_slice(&values);
            }
            rows += 1;
        }
        if rows != count {
            return Err(CliError::Runtime(format!(
                "{}: header promises {} rows, found {}",
                path.display(),
                count,
                rows
            )));
        }
        if file_index > 0 && rows != matrix.len() {
            return Err(CliError::Runtime(format!(
                "{}: row count differs from {}",
                path.display(),
                paths[0].display()
            )));
        }
    }
    Ok((vocab, matrix))
}

fn read_token_set(path: &Path, vocab: &Vocab) -> Result<HashSet<NodeId>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
    let mut out = HashSet::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let token = trimmed.split_whitespace().next().unwrap_or_default();
        match vocab.get(token) {
            Some(id) => {
                out.insert(id);
            }
            None => warn!("{}: unknown token '{token}' ignored", path.display()),
        }
    }
    Ok(out)
}

fn write_metrics(out: Option<&Path>, lines: &[(String, f64)]) -> Result<(), CliError> {
    for (name, value) in lines {
        println!("{name}={value:.4}");
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join("metrics.txt");
        let file = File::create(&path)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        for (name, value) in lines {
            writeln!(w, "{name}={value:.4}")
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(())
}

fn run_eval_classify(args: EvalClassifyArgs) -> Result<(), CliError> {
    if !(0.0..1.0).contains(&args.train_frac) || args.train_frac <= 0.0 {
        return Err(usage("--train-frac must be in (0, 1)"));
    }
    let (vocab, features) = read_embeddings(&args.embeddings)?;
    let labels = load_classification(&args.labels, &vocab)?;
    if labels.items.is_empty() {
        return Err(CliError::Runtime("labels file has no entries".to_string()));
    }
    let exclude = match &args.exclude {
        Some(path) => read_token_set(path, &vocab)?,
        None => HashSet::new(),
    };
    let split = split_classification(&labels, args.train_frac, &exclude, args.seed);
    let cfg = OvrConfig {
        penalty: args.penalty,
        epochs: args.epochs,
        ..OvrConfig::default()
    };
    let feature_of = |item: usize| features[labels.items[item].0 .0].clone();
    let train_x: Vec<Vec<f64>> = split.train.iter().map(|&i| feature_of(i)).collect();
    let train_y: Vec<Vec<f64>> = split.train.iter().map(|&i| labels.items[i].1.clone()).collect();
    let clf = fit_ovr(&train_x, &train_y, &cfg);
    let score = |items: &[usize]| -> Result<(f64, f64), CliError> {
        let predictions: Vec<Vec<bool>> =
            items.iter().map(|&i| clf.predict(&feature_of(i))).collect();
        let truth: Vec<Vec<bool>> = items
            .iter()
            .map(|&i| labels.items[i].1.iter().map(|&v| v > 0.5).collect())
            .collect();
        Ok(f1_scores(&predictions, &truth)?)
    };
    let (macro_f1, micro_f1) = score(&split.test)?;
    println!(
        "classification over {} test nodes ({} train): macro-F1 {:.2}, micro-F1 {:.2}",
        split.test.len(),
        split.train.len(),
        macro_f1,
        micro_f1
    );
    let mut metrics = vec![
        ("macro_f1".to_string(), macro_f1),
        ("micro_f1".to_string(), micro_f1),
    ];

    if let Some(buckets) = args.buckets {
        if args.views.is_empty() {
            return Err(usage("--buckets needs --view flags to compute degrees"));
        }
        let graph = build_graph(&parse_views(&args.views)?)?;
        let degree_of = |item: usize| -> f64 {
            let node = labels.items[item].0;
            match graph.vocab().get(vocab.token(node)) {
                Some(gid) => graph.views().map(|(_, v)| v.total_degree(gid)).sum(),
                None => 0.0,
            }
        };
        for (b, group) in degree_buckets(&split.test, degree_of, buckets)
            .iter()
            .enumerate()
        {
            let (_, bucket_micro) = score(group)?;
            println!(
                "degree bucket {} ({} nodes, densest first): micro-F1 {:.2}",
                b,
                group.len(),
                bucket_micro
            );
            metrics.push((format!("bucket{b}_micro_f1"), bucket_micro));
        }
    }
    write_metrics(args.out.as_deref(), &metrics)
}

fn run_eval_link(args: EvalLinkArgs) -> Result<(), CliError> {
    let (vocab, features) = read_embeddings(&args.embeddings)?;
    let positives_set = load_links(&args.pairs, &vocab)?;
    let excluded = match &args.exclude_pairs {
        Some(path) => load_links(path, &vocab)?.pairs,
        None => Vec::new(),
    };
    let canonical = |a: NodeId, b: NodeId| (a.0.min(b.0), a.0.max(b.0));
    let excluded_set: HashSet<(usize, usize)> =
        excluded.iter().map(|&(a, b)| canonical(a, b)).collect();
    let positives: Vec<(usize, usize)> = positives_set
        .pairs
        .iter()
        .map(|&(a, b)| canonical(a, b))
        .filter(|p| !excluded_set.contains(p))
        .collect();
    if positives.is_empty() {
        return Err(CliError::Runtime(
            "no positive pairs left to evaluate".to_string(),
        ));
    }

    let mut forbidden: HashSet<(usize, usize)> = positives.iter().copied().collect();
    forbidden.extend(excluded_set.iter().copied());
    if args.views.is_empty() {
        warn!("no --view flags given; sampled negatives only avoid the positive pairs");
    } else {
        let graph = build_graph(&parse_views(&args.views)?)?;
        for (_, view) in graph.views() {
            for e in 0..view.edge_count() {
                let (s, d, _) = view.edge(e);
                let (Some(a), Some(b)) = (
                    vocab.get(graph.vocab().token(s)),
                    vocab.get(graph.vocab().token(d)),
                ) else {
                    continue;
                };
                forbidden.insert(canonical(a, b));
            }
        }
    }

    let negatives = sample_negative_pairs(
        vocab.len(),
        positives.len() * args.negatives_per_positive,
        |a, b| forbidden.contains(&(a, b)),
        args.seed,
    )?;
    let auc = evaluate_link(&features, &positives, &negatives)?;
    println!(
        "link prediction over {} positives and {} negatives: AUC {:.4}",
        positives.len(),
        negatives.len(),
        auc
    );
    write_metrics(args.out.as_deref(), &[("auc".to_string(), auc)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Directedness;

    #[test]
    fn view_spec_parsing() {
        let v = parse_view_spec("coauthor=data/v0.txt").unwrap();
        assert_eq!(v.name, "coauthor");
        assert_eq!(v.directedness, Directedness::Undirected);
        let v = parse_view_spec("cite=data/v1.txt:directed").unwrap();
        assert_eq!(v.directedness, Directedness::Directed);
        assert!(parse_view_spec("nopath=").is_err());
        assert!(parse_view_spec("justaname").is_err());
    }

    #[test]
    fn help_exits_zero_and_unknown_flag_exits_one() {
        assert_eq!(dispatch(["mvembed", "--help"]), 0);
        assert_eq!(dispatch(["mvembed", "train", "--definitely-not-a-flag"]), 1);
    }

    #[test]
    fn missing_required_path_is_usage_error() {
        assert_eq!(dispatch(["mvembed", "eval-link"]), 1);
        assert_eq!(dispatch(["mvembed", "train", "--out", "/tmp/x"]), 1);
    }
}
