//! Orchestration of the full optimization loop: alternating phases of
//! edge-sampled SGD over the views, attention weight learning on the labeled
//! set, per-node weight refresh, and robust-vector voting, repeated for a
//! fixed iteration budget.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attention::{
    train_attention, weights_for_all, AttentionError, AttentionParams, AttentionReport,
    LabeledSet,
};
use crate::embedding::{
    learning_rate, ConfigError, EmbedError, EmbeddingStore, SgdScratch, TrainConfig, WeightMatrix,
};
use crate::graph::{
    AliasTable, Directedness, GraphError, MultiViewGraph, NegativeSampler, NodeId, ViewId,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Pick the view for one sample: uniform over views by default, or by the
/// provided edge-count table. A single view consumes no randomness.
#[inline]
pub fn pick_view<R: Rng + ?Sized>(
    rng: &mut R,
    num_views: usize,
    by_size: Option<&AliasTable>,
) -> ViewId {
    if num_views == 1 {
        return ViewId(0);
    }
    match by_size {
        Some(table) => ViewId(table.sample(rng)),
        None => ViewId(rng.random_range(0..num_views)),
    }
}

/// Draw one negative from the view's noise distribution, resampling only
/// while it collides with the positive target.
#[inline]
pub fn draw_negative<R: Rng + ?Sized>(
    sampler: &NegativeSampler,
    k: ViewId,
    target: NodeId,
    rng: &mut R,
) -> NodeId {
    loop {
        let v = sampler.draw(k, rng);
        if v != target {
            return v;
        }
    }
}

/// Wall-time accounting per phase, accumulated across iterations.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainStats {
    pub embed_secs: f64,
    pub attention_secs: f64,
    pub total_secs: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct IterationReport {
    pub iteration: usize,
    /// Mean per-sample surrogate objective (higher is better).
    pub mean_edge_objective: f64,
    pub attention: Option<AttentionReport>,
}

struct SamplePhase<'a> {
    graph: &'a MultiViewGraph,
    store: &'a EmbeddingStore,
    weights: &'a WeightMatrix,
    edge_tables: &'a [AliasTable],
    negatives: &'a NegativeSampler,
    view_by_size: Option<&'a AliasTable>,
    config: &'a TrainConfig,
    counter: &'a AtomicU64,
    total_samples: u64,
}

impl SamplePhase<'_> {
    /// Run `samples` SGD samples with the given RNG; returns the summed
    /// pre-step surrogate objective.
    fn run(&self, samples: u64, rng: &mut ChaCha8Rng) -> Result<f64, TrainError> {
        let cfg = self.config;
        let regularize = cfg.eta > 0.0 && !cfg.no_collaboration;
        let mut scratch = SgdScratch::new();
        let mut negs: Vec<NodeId> = Vec::with_capacity(cfg.negatives);
        let mut objective_sum = 0.0;
        for _ in 0..samples {
            let t = self.counter.fetch_add(1, Ordering::Relaxed);
            let rate = learning_rate(t, cfg.initial_lr, self.total_samples);
            let k = pick_view(rng, self.graph.view_count(), self.view_by_size);
            let view = self.graph.view(k);
            let (src, dst, _) = view.edge(self.edge_tables[k.0].sample(rng));
            negs.clear();
            for _ in 0..cfg.negatives {
                negs.push(draw_negative(self.negatives, k, dst, rng));
            }
            objective_sum += self
                .store
                .sgd_edge_step(k, src, dst, &negs, rate, &mut scratch)?;
            if regularize {
                self.store
                    .regularization_step(k, src, self.weights.weight(src, k), cfg.eta, rate);
            }
        }
        Ok(objective_sum)
    }
}

/// The mutable state of one training run.
pub struct Trainer<'a> {
    graph: &'a MultiViewGraph,
    config: &'a TrainConfig,
    labeled: Option<&'a LabeledSet>,
    store: EmbeddingStore,
    weights: WeightMatrix,
    attention: AttentionParams,
    edge_tables: Vec<AliasTable>,
    negatives: NegativeSampler,
    view_by_size: Option<AliasTable>,
    rng: ChaCha8Rng,
    counter: AtomicU64,
    total_samples: u64,
    iteration: usize,
    stats: TrainStats,
}

impl<'a> Trainer<'a> {
    pub fn new(
        config: &'a TrainConfig,
        graph: &'a MultiViewGraph,
        labeled: Option<&'a LabeledSet>,
    ) -> Result<Trainer<'a>, TrainError> {
        let num_nodes = graph.node_count();
        let num_views = graph.view_count();
        let store = EmbeddingStore::init(
            num_nodes,
            num_views,
            config.dim,
            !config.no_collaboration,
            config.seed,
        );
        let weights = WeightMatrix::uniform(num_nodes, num_views);
        let attention = AttentionParams::new(
            num_views,
            num_views * config.dim,
            config.attention_step,
            config.attention_epochs,
        );
        let edge_tables = graph
            .views()
            .map(|(k, _)| graph.build_edge_alias(k))
            .collect::<Result<Vec<_>, _>>()?;
        let negatives = NegativeSampler::build(graph)?;
        let view_by_size = if config.view_pick_by_size {
            let counts: Vec<f64> = graph.views().map(|(_, v)| v.edge_count() as f64).collect();
            Some(AliasTable::new(&counts)?)
        } else {
            None
        };
        Ok(Trainer {
            graph,
            config,
            labeled,
            store,
            weights,
            attention,
            edge_tables,
            negatives,
            view_by_size,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            counter: AtomicU64::new(0),
            total_samples: config.samples_per_iter * config.iterations as u64,
            iteration: 0,
            stats: TrainStats::default(),
        })
    }

    pub fn store(&self) -> &EmbeddingStore {
        &self.store
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn attention_params(&self) -> &AttentionParams {
        &self.attention
    }

    pub fn stats(&self) -> TrainStats {
        self.stats
    }

    pub fn samples_consumed(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    /// One full iteration: T SGD samples (with the collaboration penalty
    /// applied to each sampled source under the weights from the previous
    /// barrier), then attention training, weight refresh and robust voting.
    pub fn run_iteration(&mut self) -> Result<IterationReport, TrainError> {
        let cfg = self.config;
        let samples = cfg.samples_per_iter;

        let embed_start = Instant::now();
        let phase = SamplePhase {
            graph: self.graph,
            store: &self.store,
            weights: &self.weights,
            edge_tables: &self.edge_tables,
            negatives: &self.negatives,
            view_by_size: self.view_by_size.as_ref(),
            config: cfg,
            counter: &self.counter,
            total_samples: self.total_samples,
        };
        let objective_sum = if cfg.workers <= 1 {
            phase.run(samples, &mut self.rng)?
        } else {
            let workers = cfg.workers as u64;
            let iteration = self.iteration as u64;
            std::thread::scope(|scope| {
                let mut handles = Vec::new();
                for w in 0..workers {
                    let share = samples / workers + u64::from(w < samples % workers);
                    let phase = &phase;
                    let seed = cfg
                        .seed
                        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(iteration * workers + w + 1));
                    handles.push(scope.spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        phase.run(share, &mut rng)
                    }));
                }
                let mut total = 0.0;
                for h in handles {
                    total += h.join().expect("sample worker panicked")?;
                }
                Ok::<f64, TrainError>(total)
            })?
        };
        self.stats.embed_secs += embed_start.elapsed().as_secs_f64();
        self.stats.samples += samples;

        // Attention phase, at the barrier.
        let mut attention_report = None;
        if !cfg.no_attention {
            if let Some(labeled) = self.labeled {
                let attn_start = Instant::now();
                let report = train_attention(labeled, &self.store, &mut self.attention)?;
                self.stats.attention_secs += attn_start.elapsed().as_secs_f64();
                self.weights = weights_for_all(&self.store, &self.attention.z);
                attention_report = Some(report);
            }
        }

        self.store.vote_robust(&self.weights)?;
        self.store.check_finite()?;
        self.iteration += 1;

        Ok(IterationReport {
            iteration: self.iteration,
            mean_edge_objective: if samples > 0 {
                objective_sum / samples as f64
            } else {
                0.0
            },
            attention: attention_report,
        })
    }
}

/// Final result of a training run.
pub struct TrainOutput {
    pub store: EmbeddingStore,
    pub weights: WeightMatrix,
    pub attention: AttentionParams,
    pub stats: TrainStats,
}

/// Which output files to write.
#[derive(Debug, Clone, Copy)]
pub struct DumpSelection {
    pub vocab: bool,
    pub embeddings: bool,
    pub weights: bool,
}

impl DumpSelection {
    pub fn all() -> DumpSelection {
        DumpSelection {
            vocab: true,
            embeddings: true,
            weights: true,
        }
    }
}

/// Run the configured number of iterations and optionally write all dumps.
pub fn train(
    config: &TrainConfig,
    graph: &MultiViewGraph,
    labeled: Option<&LabeledSet>,
    out_dir: Option<&Path>,
) -> Result<TrainOutput, TrainError> {
    config.validate()?;
    if !config.no_attention && labeled.is_none_or(|l| l.is_empty()) {
        warn!("no labeled data provided; view weights stay uniform");
    }
    let run_start = Instant::now();
    let mut trainer = Trainer::new(config, graph, labeled)?;
    for _ in 0..config.iterations {
        let report = trainer.run_iteration()?;
        match report.attention {
            Some(attn) => info!(
                "iteration {}/{}: mean edge objective {:.6}, attention loss {:.6} -> {:.6} ({} epochs)",
                report.iteration,
                config.iterations,
                report.mean_edge_objective,
                attn.initial_loss,
                attn.best_loss,
                attn.epochs_run
            ),
            None => info!(
                "iteration {}/{}: mean edge objective {:.6}",
                report.iteration, config.iterations, report.mean_edge_objective
            ),
        }
    }
    let mut stats = trainer.stats;
    stats.total_secs = run_start.elapsed().as_secs_f64();

    let output = TrainOutput {
        store: trainer.store,
        weights: trainer.weights,
        attention: trainer.attention,
        stats,
    };
    if let Some(dir) = out_dir {
        write_outputs(dir, graph, &output.store, &output.weights, DumpSelection::all())?;
    }
    Ok(output)
}

/// Write the selected dumps into `dir` (created if missing): vocab.txt,
/// robust.emb, view{k}.emb and weights.txt.
pub fn write_outputs(
    dir: &Path,
    graph: &MultiViewGraph,
    store: &EmbeddingStore,
    weights: &WeightMatrix,
    selection: DumpSelection,
) -> Result<(), TrainError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    if selection.vocab {
        graph.write_vocab(&dir.join("vocab.txt"))?;
    }
    if selection.embeddings {
        let robust_path = dir.join("robust.emb");
        let out = File::create(&robust_path).map_err(io_err(&robust_path))?;
        store
            .write_robust(BufWriter::new(out), graph.vocab())
            .map_err(io_err(&robust_path))?;
        for k in 0..store.num_views() {
            let path = dir.join(format!("view{}.emb", k));
            let out = File::create(&path).map_err(io_err(&path))?;
            store
                .write_view(ViewId(k), BufWriter::new(out), graph.vocab())
                .map_err(io_err(&path))?;
        }
    }
    if selection.weights {
        let path = dir.join("weights.txt");
        let out = File::create(&path).map_err(io_err(&path))?;
        weights
            .write(BufWriter::new(out), graph.vocab())
            .map_err(io_err(&path))?;
    }
    Ok(())
}

/// A view named on the command line or in a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSpec {
    pub name: String,
    pub path: PathBuf,
    pub directedness: Directedness,
}

/// Parse "NAME=PATH[:directed]".
pub fn parse_view_spec(spec: &str) -> Result<ViewSpec, String> {
    let (name, rest) = spec
        .split_once('=')
        .ok_or_else(|| format!("view spec '{spec}' is not NAME=PATH[:directed]"))?;
    if name.is_empty() {
        return Err(format!("view spec '{spec}' has an empty name"));
    }
    let (path, directedness) = match rest.strip_suffix(":directed") {
        Some(p) => (p, Directedness::Directed),
        None => match rest.strip_suffix(":undirected") {
            Some(p) => (p, Directedness::Undirected),
            None => (rest, Directedness::Undirected),
        },
    };
    if path.is_empty() {
        return Err(format!("view spec '{spec}' has an empty path"));
    }
    Ok(ViewSpec {
        name: name.to_string(),
        path: PathBuf::from(path),
        directedness,
    })
}

/// Settings read from a flat key=value config file. Any CLI flag overrides
/// the corresponding key.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    pub train: TrainConfig,
    pub views: Vec<ViewSpec>,
    pub labels: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Parse a flat key=value config file; '#' lines are comments. The `view`
/// key may repeat.
pub fn load_config_file(path: &Path) -> Result<FileConfig, TrainError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut cfg = FileConfig::default();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(io_err(path))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("{}:{}: expected key=value", path.display(), lineno)))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| ConfigError(format!("{}:{}: {}", path.display(), lineno, what));
        match key {
            "dim" | "d" => cfg.train.dim = value.parse().map_err(|_| bad("invalid dim"))?,
            "negatives" => {
                cfg.train.negatives = value.parse().map_err(|_| bad("invalid negatives"))?
            }
            "samples_per_iter" | "samples" => {
                cfg.train.samples_per_iter = value.parse().map_err(|_| bad("invalid samples"))?
            }
            "iterations" => {
                cfg.train.iterations = value.parse().map_err(|_| bad("invalid iterations"))?
            }
            "eta" => cfg.train.eta = value.parse().map_err(|_| bad("invalid eta"))?,
            "lr" => cfg.train.initial_lr = value.parse().map_err(|_| bad("invalid lr"))?,
            "seed" => cfg.train.seed = value.parse().map_err(|_| bad("invalid seed"))?,
            "workers" => cfg.train.workers = value.parse().map_err(|_| bad("invalid workers"))?,
            "no_attention" => {
                cfg.train.no_attention = parse_bool(value).ok_or_else(|| bad("invalid bool"))?
            }
            "no_collab" | "no_collaboration" => {
                cfg.train.no_collaboration =
                    parse_bool(value).ok_or_else(|| bad("invalid bool"))?
            }
            "view_pick_by_size" => {
                cfg.train.view_pick_by_size =
                    parse_bool(value).ok_or_else(|| bad("invalid bool"))?
            }
            "attention_step" => {
                cfg.train.attention_step = value.parse().map_err(|_| bad("invalid step"))?
            }
            "attention_epochs" => {
                cfg.train.attention_epochs = value.parse().map_err(|_| bad("invalid epochs"))?
            }
            "view" => cfg
                .views
                .push(parse_view_spec(value).map_err(|e| bad(&e))?),
            "labels" => cfg.labels = Some(PathBuf::from(value)),
            "pairs" => cfg.pairs = Some(PathBuf::from(value)),
            "out" => cfg.out = Some(PathBuf::from(value)),
            other => return Err(bad(&format!("unknown key '{other}'")).into()),
        }
    }
    Ok(cfg)
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}
