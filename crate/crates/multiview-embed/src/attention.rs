//! Per-node view weights learned from a small labeled set. Each view k has a
//! feature vector z_k living in the concatenated-representation space; a
//! softmax over z_k . x_i^C gives node i's weight for view k. The z vectors
//! are trained by full-batch gradient descent on a task loss evaluated at the
//! voted robust representations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use log::warn;
use thiserror::Error;

use crate::embedding::{EmbeddingStore, WeightMatrix};
use crate::graph::{NodeId, ViewId, Vocab};
use crate::vecmath::{axpy, dot, norm};

#[derive(Debug, Error)]
pub enum AttentionError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label vector length {found} does not match classifier rows {expected}")]
    LabelMismatch { expected: usize, found: usize },
    #[error("attention loss became non-finite (step size {step_size})")]
    NonFiniteLoss { step_size: f64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed labeled line: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("unknown node token '{0}' in labeled set")]
    UnknownToken(String),
}

/// Softmax parameters: one feature vector per view over the concatenated
/// representation space, plus the task classifier for the square loss.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    /// K vectors of dimension K*d.
    pub z: Vec<Vec<f64>>,
    /// Classifier matrix, label count x d; classification task only.
    pub classifier: Option<Vec<Vec<f64>>>,
    pub step_size: f64,
    pub epochs: usize,
}

impl AttentionParams {
    /// Zero-initialized z, giving uniform initial attention.
    pub fn new(num_views: usize, concat_dim: usize, step_size: f64, epochs: usize) -> AttentionParams {
        AttentionParams {
            z: vec![vec![0.0; concat_dim]; num_views],
            classifier: None,
            step_size,
            epochs,
        }
    }
}

/// Labeled data for weight learning: (node, label vector) pairs for the
/// classification task, or positive node pairs for the link task.
#[derive(Debug, Clone)]
pub enum LabeledSet {
    Classification(ClassificationSet),
    Link(LinkSet),
}

impl LabeledSet {
    pub fn is_empty(&self) -> bool {
        match self {
            LabeledSet::Classification(c) => c.items.is_empty(),
            LabeledSet::Link(l) => l.pairs.is_empty(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ClassificationSet {
    pub label_names: Vec<String>,
    /// (node, multi-hot label vector); every vector has `label_names.len()`
    /// entries.
    pub items: Vec<(NodeId, Vec<f64>)>,
}

#[derive(Debug, Clone, Default)]
pub struct LinkSet {
    pub pairs: Vec<(NodeId, NodeId)>,
}

/// Parse "TOKEN LABEL[,LABEL...]" lines. Label indices are assigned in first
/// appearance order.
pub fn load_classification(path: &Path, vocab: &Vocab) -> Result<ClassificationSet, AttentionError> {
    let reader = open(path)?;
    let mut label_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut sparse: Vec<(NodeId, Vec<usize>)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|source| AttentionError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let (token, labels) = match (fields.next(), fields.next(), fields.next()) {
            (Some(t), Some(l), None) => (t, l),
            _ => {
                return Err(AttentionError::MalformedLine {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason: "expected 'TOKEN LABEL[,LABEL...]'".to_string(),
                })
            }
        };
        let node = vocab
            .get(token)
            .ok_or_else(|| AttentionError::UnknownToken(token.to_string()))?;
        let mut ids = Vec::new();
        for l in labels.split(',').filter(|l| !l.is_empty()) {
            let next = label_names.len();
            let id = *label_index.entry(l.to_string()).or_insert_with(|| {
                label_names.push(l.to_string());
                next
            });
            ids.push(id);
        }
        if ids.is_empty() {
            return Err(AttentionError::MalformedLine {
                path: path.to_path_buf(),
                line: lineno,
                reason: "node has no labels".to_string(),
            });
        }
        sparse.push((node, ids));
    }
    let num_labels = label_names.len();
    let items = sparse
        .into_iter()
        .map(|(node, ids)| {
            let mut y = vec![0.0; num_labels];
            for id in ids {
                y[id] = 1.0;
            }
            (node, y)
        })
        .collect();
    Ok(ClassificationSet { label_names, items })
}

/// Parse "TOKEN TOKEN" lines into positive pairs.
pub fn load_links(path: &Path, vocab: &Vocab) -> Result<LinkSet, AttentionError> {
    let reader = open(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|source| AttentionError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(AttentionError::MalformedLine {
                path: path.to_path_buf(),
                line: lineno,
                reason: format!("expected 2 tokens, found {}", fields.len()),
            });
        }
        let a = vocab
            .get(fields[0])
            .ok_or_else(|| AttentionError::UnknownToken(fields[0].to_string()))?;
        let b = vocab
            .get(fields[1])
            .ok_or_else(|| AttentionError::UnknownToken(fields[1].to_string()))?;
        pairs.push((a, b));
    }
    Ok(LinkSet { pairs })
}

fn open(path: &Path) -> Result<BufReader<File>, AttentionError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| AttentionError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Softmax view weights for one node: lambda_k proportional to
/// exp(z_k . x^C), computed with max-subtraction. Every entry is strictly
/// positive and the row sums to 1.
pub fn view_weights(concat: &[f64], z: &[Vec<f64>]) -> Vec<f64> {
    let logits: Vec<f64> = z.iter().map(|zk| dot(zk, concat)).collect();
    softmax(&logits)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .map(|&s| (s - max).exp().max(1e-300))
        .collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Robust vectors for a set of nodes under the weights induced by `z`,
/// kept in deterministic (node-sorted) order.
#[derive(Debug, Clone, Default)]
pub struct RobustSet {
    map: BTreeMap<usize, Vec<f64>>,
}

impl RobustSet {
    pub fn compute(store: &EmbeddingStore, z: &[Vec<f64>], nodes: &[NodeId]) -> RobustSet {
        let mut map = BTreeMap::new();
        let mut concat = Vec::with_capacity(store.concat_dim());
        for &node in nodes {
            map.entry(node.0).or_insert_with(|| {
                store.concat_vec(node, &mut concat);
                let lambda = view_weights(&concat, z);
                let mut x = vec![0.0; store.dim()];
                for (k, &w) in lambda.iter().enumerate() {
                    axpy(w, store.view_vec(ViewId(k), node), &mut x);
                }
                x
            });
        }
        RobustSet { map }
    }

    pub fn from_entries(entries: Vec<(NodeId, Vec<f64>)>) -> RobustSet {
        RobustSet {
            map: entries.into_iter().map(|(n, v)| (n.0, v)).collect(),
        }
    }

    pub fn get(&self, node: NodeId) -> &[f64] {
        &self.map[&node.0]
    }
}

/// Loss gradients with respect to the robust vectors, one entry per node
/// (or per item), in deterministic order.
pub type NodeGradients = Vec<(NodeId, Vec<f64>)>;

/// Square classification loss over the labeled items evaluated at the given
/// robust vectors: sum_i ||W x_i - y_i||^2. Returns the loss and the
/// per-item gradient with respect to x_i, which is 2 W^T (W x_i - y_i).
pub fn classification_loss(
    items: &[(NodeId, Vec<f64>)],
    robust: &RobustSet,
    classifier: &[Vec<f64>],
) -> Result<(f64, NodeGradients), AttentionError> {
    let num_labels = classifier.len();
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(items.len());
    for (node, y) in items {
        if y.len() != num_labels {
            return Err(AttentionError::LabelMismatch {
                expected: num_labels,
                found: y.len(),
            });
        }
        let x = robust.get(*node);
        let mut grad = vec![0.0; x.len()];
        for (row, &target) in classifier.iter().zip(y) {
            let residual = dot(row, x) - target;
            loss += residual * residual;
            axpy(2.0 * residual, row, &mut grad);
        }
        grads.push((*node, grad));
    }
    Ok((loss, grads))
}

/// Gradient of the classification loss with respect to the classifier:
/// dW[l] = sum_i 2 (W x_i - y_i)[l] x_i.
pub fn classifier_gradient(
    items: &[(NodeId, Vec<f64>)],
    robust: &RobustSet,
    classifier: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let dim = classifier.first().map_or(0, |r| r.len());
    let mut grad = vec![vec![0.0; dim]; classifier.len()];
    for (node, y) in items {
        let x = robust.get(*node);
        for ((row, &target), g) in classifier.iter().zip(y).zip(&mut grad) {
            let residual = dot(row, x) - target;
            axpy(2.0 * residual, x, g);
        }
    }
    grad
}

/// Pairwise link loss: -sum cos(x_i, x_j) over positive pairs, with the
/// cosine gradient accumulated per endpoint. Pairs with a zero-norm robust
/// vector are skipped with a warning.
pub fn link_loss(pairs: &[(NodeId, NodeId)], robust: &RobustSet) -> (f64, NodeGradients) {
    let mut loss = 0.0;
    let mut grads: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(a, b) in pairs {
        let xa = robust.get(a);
        let xb = robust.get(b);
        let na = norm(xa);
        let nb = norm(xb);
        if na == 0.0 || nb == 0.0 {
            warn!("skipping labeled pair ({}, {}): zero-norm robust vector", a.0, b.0);
            continue;
        }
        let cos = dot(xa, xb) / (na * nb);
        loss -= cos;
        // d(-cos)/dxa = -(xb / (na nb) - cos * xa / na^2), symmetric for xb.
        let ga = grads.entry(a.0).or_insert_with(|| vec![0.0; xa.len()]);
        axpy(-1.0 / (na * nb), xb, ga);
        axpy(cos / (na * na), xa, ga);
        let gb = grads.entry(b.0).or_insert_with(|| vec![0.0; xb.len()]);
        axpy(-1.0 / (na * nb), xa, gb);
        axpy(cos / (nb * nb), xb, gb);
    }
    let grads = grads
        .into_iter()
        .map(|(n, g)| (NodeId(n), g))
        .collect();
    (loss, grads)
}

/// Gradient of the task loss with respect to each z_k, given the per-node
/// loss gradients dO/dx_i:
///
///   dO/dz_k = sum_i [ sum_l (dO/dlambda_i^k - dO/dlambda_i^l)
///                     lambda_i^k lambda_i^l ] x_i^C
///
/// where dO/dlambda_i^k = (dO/dx_i) . x_i^k. The outer factor is the
/// concatenated representation, matching the dimension of z_k.
pub fn attention_gradient(
    node_grads: &[(NodeId, Vec<f64>)],
    store: &EmbeddingStore,
    z: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, AttentionError> {
    let num_views = store.num_views();
    if z.len() != num_views {
        return Err(AttentionError::DimensionMismatch(format!(
            "{} z vectors for {} views",
            z.len(),
            num_views
        )));
    }
    let concat_dim = store.concat_dim();
    for zk in z {
        if zk.len() != concat_dim {
            return Err(AttentionError::DimensionMismatch(format!(
                "z vector length {} but concatenated dimension is {}",
                zk.len(),
                concat_dim
            )));
        }
    }
    let mut out = vec![vec![0.0; concat_dim]; num_views];
    let mut concat = Vec::with_capacity(concat_dim);
    for (node, grad) in node_grads {
        if grad.len() != store.dim() {
            return Err(AttentionError::DimensionMismatch(format!(
                "loss gradient length {} but dimension is {}",
                grad.len(),
                store.dim()
            )));
        }
        store.concat_vec(*node, &mut concat);
        let lambda = view_weights(&concat, z);
        let g_lambda: Vec<f64> = (0..num_views)
            .map(|k| dot(grad, store.view_vec(ViewId(k), *node)))
            .collect();
        for k in 0..num_views {
            let mut coef = 0.0;
            for l in 0..num_views {
                coef += (g_lambda[k] - g_lambda[l]) * lambda[k] * lambda[l];
            }
            axpy(coef, &concat, &mut out[k]);
        }
    }
    Ok(out)
}

/// Softmax weights for every node in the store.
pub fn weights_for_all(store: &EmbeddingStore, z: &[Vec<f64>]) -> WeightMatrix {
    let mut concat = Vec::with_capacity(store.concat_dim());
    let rows: Vec<Vec<f64>> = (0..store.num_nodes())
        .map(|i| {
            store.concat_vec(NodeId(i), &mut concat);
            view_weights(&concat, z)
        })
        .collect();
    WeightMatrix::from_rows(rows)
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionReport {
    pub initial_loss: f64,
    pub best_loss: f64,
    pub epochs_run: usize,
}

/// Full-batch gradient descent on the task loss. Each epoch alternates one
/// step on the classifier (classification task only) and one step on all
/// z_k, recomputing weights and robust vectors between steps. The
/// view-specific vectors are read-only during this phase.
///
/// Gradients are averaged over the labeled set so the step size does not
/// depend on |S|, and a step that fails to decrease the loss is rolled back
/// with the working step halved, so the loss is non-increasing across
/// epochs. Stops once the per-epoch improvement falls below 1e-6; the
/// returned parameters are those with the lowest observed loss.
pub fn train_attention(
    labeled: &LabeledSet,
    store: &EmbeddingStore,
    params: &mut AttentionParams,
) -> Result<AttentionReport, AttentionError> {
    let (nodes, batch): (Vec<NodeId>, usize) = match labeled {
        LabeledSet::Classification(c) => (
            c.items.iter().map(|(n, _)| *n).collect(),
            c.items.len(),
        ),
        LabeledSet::Link(l) => (
            l.pairs.iter().flat_map(|&(a, b)| [a, b]).collect(),
            l.pairs.len(),
        ),
    };
    if nodes.is_empty() || params.epochs == 0 {
        let robust = RobustSet::compute(store, &params.z, &nodes);
        let loss = evaluate_loss(labeled, &robust, params)?;
        return Ok(AttentionReport {
            initial_loss: loss,
            best_loss: loss,
            epochs_run: 0,
        });
    }
    let scale = 1.0 / batch as f64;

    if let LabeledSet::Classification(c) = labeled {
        let num_labels = c.label_names.len().max(
            c.items.first().map_or(0, |(_, y)| y.len()),
        );
        if params.classifier.is_none() {
            params.classifier = Some(vec![vec![0.0; store.dim()]; num_labels]);
        }
    }

    let mut robust = RobustSet::compute(store, &params.z, &nodes);
    let initial_loss = evaluate_loss(labeled, &robust, params)?;
    if !initial_loss.is_finite() {
        return Err(AttentionError::NonFiniteLoss {
            step_size: params.step_size,
        });
    }

    let mut loss = initial_loss;
    let mut classifier_step = params.step_size;
    let mut z_step = params.step_size;
    let mut epochs_run = 0;

    for _ in 0..params.epochs {
        let before_epoch = loss;
        let mut halved = false;

        // Classifier step; robust vectors are unchanged by it.
        if let LabeledSet::Classification(c) = labeled {
            let w = params.classifier.as_mut().expect("classifier initialized");
            let grad = classifier_gradient(&c.items, &robust, w);
            let saved = w.clone();
            for (row, g) in w.iter_mut().zip(&grad) {
                axpy(-classifier_step * scale, g, row);
            }
            let trial = evaluate_loss(labeled, &robust, params)?;
            if trial.is_finite() && trial <= loss {
                loss = trial;
            } else {
                *params.classifier.as_mut().expect("classifier initialized") = saved;
                classifier_step *= 0.5;
                halved = true;
            }
        }

        // Weight-vector step, using loss gradients at the updated classifier.
        let node_grads = match labeled {
            LabeledSet::Classification(c) => {
                let w = params.classifier.as_ref().expect("classifier initialized");
                classification_loss(&c.items, &robust, w)?.1
            }
            LabeledSet::Link(l) => link_loss(&l.pairs, &robust).1,
        };
        let z_grad = attention_gradient(&node_grads, store, &params.z)?;
        let saved_z = params.z.clone();
        for (zk, g) in params.z.iter_mut().zip(&z_grad) {
            axpy(-z_step * scale, g, zk);
        }
        let trial_robust = RobustSet::compute(store, &params.z, &nodes);
        let trial = evaluate_loss(labeled, &trial_robust, params)?;
        if trial.is_finite() && trial <= loss {
            loss = trial;
            robust = trial_robust;
        } else {
            params.z = saved_z;
            z_step *= 0.5;
            halved = true;
        }

        epochs_run += 1;
        // A halved step may still make progress next epoch; stop only once
        // the steps have settled and the improvement stalls, or both steps
        // have collapsed.
        if (!halved && before_epoch - loss < 1e-6)
            || (classifier_step < 1e-12 && z_step < 1e-12)
        {
            break;
        }
    }

    Ok(AttentionReport {
        initial_loss,
        best_loss: loss,
        epochs_run,
    })
}

fn evaluate_loss(
    labeled: &LabeledSet,
    robust: &RobustSet,
    params: &AttentionParams,
) -> Result<f64, AttentionError> {
    match labeled {
        LabeledSet::Classification(c) => {
            let dim = robust
                .map
                .values()
                .next()
                .map_or(0, |v| v.len());
            let fallback;
            let w = match params.classifier.as_ref() {
                Some(w) => w,
                None => {
                    let num_labels = c.items.first().map_or(0, |(_, y)| y.len());
                    fallback = vec![vec![0.0; dim]; num_labels];
                    &fallback
                }
            };
            Ok(classification_loss(&c.items, robust, w)?.0)
        }
        LabeledSet::Link(l) => Ok(link_loss(&l.pairs, robust).0),
    }
}
