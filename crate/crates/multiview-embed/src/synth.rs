//! Seeded synthetic multi-view graphs with planted community structure.
//! Informative views follow a stochastic block model over one shared
//! community assignment; noise views are Erdos-Renyi. A fraction of the
//! informative-view edges is withheld as link-prediction positives and
//! removed from every training view.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attention::{ClassificationSet, LinkSet};
use crate::graph::{GraphBuilder, GraphError, MultiViewGraph, NodeId, RawEdge};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViewKind {
    /// Stochastic block model aligned with the planted communities.
    Informative { p_in: f64, p_out: f64 },
    /// Erdos-Renyi noise carrying no community signal.
    Noise { p: f64 },
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub nodes: usize,
    pub communities: usize,
    pub views: Vec<ViewKind>,
    /// Fraction of each informative view's edges withheld as held-out
    /// link-prediction positives.
    pub heldout_frac: f64,
    /// Draw integer edge weights in 1..=3 instead of unit weights.
    pub weighted: bool,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.nodes < 2 {
            return Err(SynthError::InvalidSpec("need at least 2 nodes".into()));
        }
        if self.communities == 0 || self.communities > self.nodes {
            return Err(SynthError::InvalidSpec(format!(
                "communities must be in 1..={}",
                self.nodes
            )));
        }
        if self.views.is_empty() {
            return Err(SynthError::InvalidSpec("need at least one view".into()));
        }
        for (k, v) in self.views.iter().enumerate() {
            match *v {
                ViewKind::Informative { p_in, p_out } => {
                    if !(0.0..=1.0).contains(&p_in)
                        || !(0.0..=1.0).contains(&p_out)
                        || p_out > p_in
                    {
                        return Err(SynthError::InvalidSpec(format!(
                            "view {k}: need 0 <= p_out <= p_in <= 1"
                        )));
                    }
                }
                ViewKind::Noise { p } => {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(SynthError::InvalidSpec(format!(
                            "view {k}: need 0 <= p <= 1"
                        )));
                    }
                }
            }
        }
        if !(0.0..1.0).contains(&self.heldout_frac) {
            return Err(SynthError::InvalidSpec("heldout_frac must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Community of node `i`; communities partition the nodes evenly with the
    /// remainder going to the last one.
    pub fn community_of(&self, i: usize) -> usize {
        let base = self.nodes / self.communities;
        (i / base).min(self.communities - 1)
    }
}

/// One generated dataset: the training graph, ground-truth community labels
/// for every node, and the withheld link-prediction positives.
pub struct SynthData {
    pub graph: MultiViewGraph,
    pub labels: ClassificationSet,
    pub heldout: Vec<(NodeId, NodeId)>,
    /// Undirected training edges per view, canonicalized as (min, max),
    /// in deterministic order.
    pub view_pairs: Vec<Vec<(usize, usize, f64)>>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.nodes;

    // Undirected pair lists per view, (i < j).
    let mut views: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(spec.views.len());
    for kind in &spec.views {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let p = match *kind {
                    ViewKind::Informative { p_in, p_out } => {
                        if spec.community_of(i) == spec.community_of(j) {
                            p_in
                        } else {
                            p_out
                        }
                    }
                    ViewKind::Noise { p } => p,
                };
                if p > 0.0 && rng.random::<f64>() < p {
                    let w = if spec.weighted {
                        rng.random_range(1..=3) as f64
                    } else {
                        1.0
                    };
                    pairs.push((i, j, w));
                }
            }
        }
        views.push(pairs);
    }

    // Withhold a seeded fraction of each informative view's edges; the
    // withheld pairs are removed from every view so they never appear in
    // training.
    let mut withheld: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (kind, pairs) in spec.views.iter().zip(&views) {
        if matches!(kind, ViewKind::Informative { .. }) {
            let count = (spec.heldout_frac * pairs.len() as f64).floor() as usize;
            let mut indices: Vec<usize> = (0..pairs.len()).collect();
            for i in (1..indices.len()).rev() {
                let j = rng.random_range(0..=i);
                indices.swap(i, j);
            }
            for &idx in indices.iter().take(count) {
                withheld.insert((pairs[idx].0, pairs[idx].1));
            }
        }
    }
    for pairs in &mut views {
        pairs.retain(|&(i, j, _)| !withheld.contains(&(i, j)));
    }

    // Guarantee every node appears in some view so the token universe is
    // complete; wire stragglers to a community mate, avoiding withheld pairs.
    let mut seen = vec![false; n];
    for pairs in &views {
        for &(i, j, _) in pairs {
            seen[i] = true;
            seen[j] = true;
        }
    }
    for (i, &is_seen) in seen.iter().enumerate() {
        if is_seen {
            continue;
        }
        let partner = (1..n)
            .map(|step| (i + step) % n)
            .find(|&j| !withheld.contains(&(i.min(j), i.max(j))))
            .ok_or_else(|| SynthError::InvalidSpec("no partner for isolated node".into()))?;
        views[0].push((i.min(partner), i.max(partner), 1.0));
    }
    for pairs in &mut views {
        pairs.sort_unstable_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
        if pairs.is_empty() {
            return Err(SynthError::InvalidSpec(
                "a view ended up with no edges".into(),
            ));
        }
    }

    // Materialize the graph: tokens n0..n{V-1}, undirected edges mirrored.
    let mut builder = GraphBuilder::new();
    for i in 0..n {
        builder.vocab_mut().intern(&format!("n{i}"));
    }
    for (k, pairs) in views.iter().enumerate() {
        let mut edges = Vec::with_capacity(pairs.len() * 2);
        for &(i, j, w) in pairs {
            edges.push(RawEdge { src: NodeId(i), dst: NodeId(j), weight: w });
            edges.push(RawEdge { src: NodeId(j), dst: NodeId(i), weight: w });
        }
        builder.add_view_edges(&format!("view{k}"), edges)?;
    }
    let graph = builder.build()?;

    let labels = ClassificationSet {
        label_names: (0..spec.communities).map(|c| format!("c{c}")).collect(),
        items: (0..n)
            .map(|i| {
                let mut y = vec![0.0; spec.communities];
                y[spec.community_of(i)] = 1.0;
                (NodeId(i), y)
            })
            .collect(),
    };

    let heldout = withheld
        .iter()
        .map(|&(i, j)| (NodeId(i), NodeId(j)))
        .collect();

    Ok(SynthData {
        graph,
        labels,
        heldout,
        view_pairs: views,
    })
}

/// Seeded subset of the full label set, for attention training.
pub fn sample_labeled_nodes(labels: &ClassificationSet, count: usize, seed: u64) -> ClassificationSet {
    let mut indices: Vec<usize> = (0..labels.items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let mut take: Vec<usize> = indices.into_iter().take(count).collect();
    take.sort_unstable();
    ClassificationSet {
        label_names: labels.label_names.clone(),
        items: take.into_iter().map(|i| labels.items[i].clone()).collect(),
    }
}

/// Seeded split of the held-out pairs into attention-labeled pairs and
/// evaluation pairs; the labeled pairs are excluded from evaluation.
pub fn split_heldout_pairs(
    heldout: &[(NodeId, NodeId)],
    labeled_count: usize,
    seed: u64,
) -> (LinkSet, Vec<(NodeId, NodeId)>) {
    let mut indices: Vec<usize> = (0..heldout.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let labeled_count = labeled_count.min(heldout.len());
    let mut labeled: Vec<usize> = indices[..labeled_count].to_vec();
    let mut eval: Vec<usize> = indices[labeled_count..].to_vec();
    labeled.sort_unstable();
    eval.sort_unstable();
    (
        LinkSet {
            pairs: labeled.into_iter().map(|i| heldout[i]).collect(),
        },
        eval.into_iter().map(|i| heldout[i]).collect(),
    )
}

/// Write the dataset as standard files: view{k}.txt, labels.txt,
/// heldout_pairs.txt, plus the attention/evaluation splits
/// (attn_labels.txt, attn_pairs.txt, eval_pairs.txt).
pub fn write_dataset(
    data: &SynthData,
    dir: &Path,
    labeled_nodes: usize,
    labeled_pairs: usize,
    seed: u64,
) -> Result<(), SynthError> {
    fs::create_dir_all(dir).map_err(|source| SynthError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let create = |name: &str| -> Result<BufWriter<File>, SynthError> {
        let path = dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|source| SynthError::Io { path, source })
    };
    let token = |i: usize| data.graph.vocab().token(NodeId(i)).to_string();

    for (k, pairs) in data.view_pairs.iter().enumerate() {
        let mut out = create(&format!("view{k}.txt"))?;
        for &(i, j, w) in pairs {
            writeln!(out, "{} {} {}", token(i), token(j), w).map_err(|source| SynthError::Io {
                path: dir.join(format!("view{k}.txt")),
                source,
            })?;
        }
    }

    let io = |name: &str| {
        let path = dir.join(name);
        move |source| SynthError::Io { path, source }
    };

    let mut out = create("labels.txt")?;
    for (node, y) in &data.labels.items {
        let names: Vec<&str> = y
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.5)
            .map(|(c, _)| data.labels.label_names[c].as_str())
            .collect();
        writeln!(out, "{} {}", token(node.0), names.join(",")).map_err(io("labels.txt"))?;
    }

    let mut out = create("heldout_pairs.txt")?;
    for &(a, b) in &data.heldout {
        writeln!(out, "{} {}", token(a.0), token(b.0)).map_err(io("heldout_pairs.txt"))?;
    }

    let attn_labels = sample_labeled_nodes(&data.labels, labeled_nodes, seed);
    let mut out = create("attn_labels.txt")?;
    for (node, y) in &attn_labels.items {
        let names: Vec<&str> = y
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.5)
            .map(|(c, _)| attn_labels.label_names[c].as_str())
            .collect();
        writeln!(out, "{} {}", token(node.0), names.join(",")).map_err(io("attn_labels.txt"))?;
    }

    let (attn_pairs, eval_pairs) = split_heldout_pairs(&data.heldout, labeled_pairs, seed);
    let mut out = create("attn_pairs.txt")?;
    for &(a, b) in &attn_pairs.pairs {
        writeln!(out, "{} {}", token(a.0), token(b.0)).map_err(io("attn_pairs.txt"))?;
    }
    let mut out = create("eval_pairs.txt")?;
    for &(a, b) in &eval_pairs {
        writeln!(out, "{} {}", token(a.0), token(b.0)).map_err(io("eval_pairs.txt"))?;
    }

    Ok(())
}
