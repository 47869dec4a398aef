//! Task evaluation: one-vs-rest linear classification scored with
//! macro/micro-F1, and link prediction ranked by cosine similarity and
//! scored with AUC.

use std::collections::HashSet;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attention::ClassificationSet;
use crate::embedding::EmbeddingStore;
use crate::graph::{MultiViewGraph, NodeId, ViewId};
use crate::vecmath::{axpy, cosine, dot, sigmoid, softplus};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction/truth length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no positive pairs to score")]
    NoPositives,
    #[error("no negative pairs to score")]
    NoNegatives,
    #[error("empty training split")]
    EmptyTrain,
    #[error("cannot sample {requested} negative pairs ({sampled} found)")]
    NegativeSampling { requested: usize, sampled: usize },
}

/// Which representation to evaluate as features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Robust,
    View(usize),
    Concat,
}

/// Extract one feature vector per node from the store.
pub fn features_from_store(store: &EmbeddingStore, rep: Representation) -> Vec<Vec<f64>> {
    let mut concat = Vec::new();
    (0..store.num_nodes())
        .map(|i| match rep {
            Representation::Robust => store.robust_vec(NodeId(i)).to_vec(),
            Representation::View(k) => store.view_vec(ViewId(k), NodeId(i)).to_vec(),
            Representation::Concat => {
                store.concat_vec(NodeId(i), &mut concat);
                concat.clone()
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct OvrConfig {
    /// L2 penalty on the weight vector (bias unpenalized).
    pub penalty: f64,
    pub epochs: usize,
    pub initial_step: f64,
}

impl Default for OvrConfig {
    fn default() -> OvrConfig {
        OvrConfig {
            penalty: 1.0,
            epochs: 200,
            initial_step: 1.0,
        }
    }
}

/// One binary L2-regularized logistic probe.
#[derive(Debug, Clone)]
pub struct BinaryLogistic {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// No positive examples were seen in training; always predicts negative.
    pub degenerate: bool,
}

impl BinaryLogistic {
    pub fn margin(&self, x: &[f64]) -> f64 {
        if self.degenerate {
            f64::NEG_INFINITY
        } else {
            dot(&self.weights, x) + self.bias
        }
    }
}

/// Regularized logistic objective and its gradient:
/// 0.5 * penalty * ||w||^2 + sum_i log(1 + exp(-y_i (w.x_i + b))).
pub fn logistic_objective(
    features: &[Vec<f64>],
    targets: &[bool],
    weights: &[f64],
    bias: f64,
    penalty: f64,
) -> (f64, Vec<f64>, f64) {
    let mut loss = 0.5 * penalty * dot(weights, weights);
    let mut grad_w = weights.iter().map(|w| penalty * w).collect::<Vec<_>>();
    let mut grad_b = 0.0;
    for (x, &t) in features.iter().zip(targets) {
        let y = if t { 1.0 } else { -1.0 };
        let margin = dot(weights, x) + bias;
        loss += softplus(-y * margin);
        let coef = -y * sigmoid(-y * margin);
        axpy(coef, x, &mut grad_w);
        grad_b += coef;
    }
    (loss, grad_w, grad_b)
}

/// Fit one binary problem by gradient descent with backtracking, so the
/// objective never increases across epochs. Returns the classifier and the
/// per-epoch objective values.
pub fn fit_binary(
    features: &[Vec<f64>],
    targets: &[bool],
    cfg: &OvrConfig,
) -> (BinaryLogistic, Vec<f64>) {
    let dim = features.first().map_or(0, |f| f.len());
    if !targets.iter().any(|&t| t) {
        return (
            BinaryLogistic {
                weights: vec![0.0; dim],
                bias: 0.0,
                degenerate: true,
            },
            Vec::new(),
        );
    }
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut step = cfg.initial_step;
    let (mut loss, mut grad_w, mut grad_b) =
        logistic_objective(features, targets, &weights, bias, cfg.penalty);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut accepted = false;
        for _ in 0..40 {
            let trial_w: Vec<f64> = weights
                .iter()
                .zip(&grad_w)
                .map(|(w, g)| w - step * g)
                .collect();
            let trial_b = bias - step * grad_b;
            let (trial_loss, trial_gw, trial_gb) =
                logistic_objective(features, targets, &trial_w, trial_b, cfg.penalty);
            if trial_loss <= loss {
                weights = trial_w;
                bias = trial_b;
                loss = trial_loss;
                grad_w = trial_gw;
                grad_b = trial_gb;
                step *= 1.1;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        losses.push(loss);
        if !accepted || step < 1e-14 {
            break;
        }
    }
    (
        BinaryLogistic {
            weights,
            bias,
            degenerate: false,
        },
        losses,
    )
}

/// One-vs-rest bundle: one binary classifier per label.
#[derive(Debug, Clone)]
pub struct ClassifierOvR {
    pub classifiers: Vec<BinaryLogistic>,
}

impl ClassifierOvR {
    /// All labels with positive margin; when none is positive, the single
    /// best-margin label.
    pub fn predict(&self, x: &[f64]) -> Vec<bool> {
        let margins: Vec<f64> = self.classifiers.iter().map(|c| c.margin(x)).collect();
        let mut out: Vec<bool> = margins.iter().map(|&m| m > 0.0).collect();
        if !out.iter().any(|&p| p) {
            if let Some((best, m)) = margins
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite margins"))
            {
                if m.is_finite() {
                    out[best] = true;
                }
            }
        }
        out
    }
}

/// Train one-vs-rest logistic probes over multi-hot labels. Labels with no
/// positive training example produce an always-negative classifier with a
/// warning.
pub fn fit_ovr(features: &[Vec<f64>], labels: &[Vec<f64>], cfg: &OvrConfig) -> ClassifierOvR {
    let num_labels = labels.first().map_or(0, |y| y.len());
    let classifiers = (0..num_labels)
        .map(|l| {
            let targets: Vec<bool> = labels.iter().map(|y| y[l] > 0.5).collect();
            let (clf, _) = fit_binary(features, &targets, cfg);
            if clf.degenerate {
                warn!("label {l} has no positive training examples; predicting negative");
            }
            clf
        })
        .collect();
    ClassifierOvR { classifiers }
}

/// Macro/micro-F1 over multi-hot predictions, both in [0, 100]. Micro pools
/// TP/FP/FN over all labels. Macro averages per-label F1; a label with no
/// positives in truth or predictions is excluded, and one with predicted
/// positives but no true positives counts as 0.
pub fn f1_scores(predictions: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<(f64, f64), EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), truth.len()));
    }
    let num_labels = truth.first().map_or(0, |y| y.len());
    let mut macro_sum = 0.0;
    let mut macro_count = 0usize;
    let (mut tp_all, mut fp_all, mut fn_all) = (0u64, 0u64, 0u64);
    for l in 0..num_labels {
        let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
        for (p, t) in predictions.iter().zip(truth) {
            if p.len() != num_labels || t.len() != num_labels {
                return Err(EvalError::LengthMismatch(p.len(), num_labels));
            }
            match (p[l], t[l]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fnn += 1,
                (false, false) => {}
            }
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fnn;
        if tp + fp + fnn == 0 {
            continue;
        }
        macro_sum += 2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fnn as f64);
        macro_count += 1;
    }
    let micro = if tp_all + fp_all + fn_all == 0 {
        1.0
    } else {
        2.0 * tp_all as f64 / (2.0 * tp_all as f64 + fp_all as f64 + fn_all as f64)
    };
    let macro_f1 = if macro_count == 0 {
        1.0
    } else {
        macro_sum / macro_count as f64
    };
    Ok((macro_f1 * 100.0, micro * 100.0))
}

/// Exact AUC by rank statistics: P(score_pos > score_neg) with ties counted
/// half.
pub fn link_auc(scored: &[(f64, bool)]) -> Result<f64, EvalError> {
    let positives = scored.iter().filter(|(_, p)| *p).count();
    let negatives = scored.len() - positives;
    if positives == 0 {
        return Err(EvalError::NoPositives);
    }
    if negatives == 0 {
        return Err(EvalError::NoNegatives);
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.partial_cmp(&scored[b].0).expect("finite scores"));
    let mut ranks = vec![0.0; scored.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        // 1-based average rank over the tie block [i, j].
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = scored
        .iter()
        .zip(&ranks)
        .filter(|((_, p), _)| *p)
        .map(|(_, r)| r)
        .sum();
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Train/test node split over a labeled set.
#[derive(Debug, Clone)]
pub struct EvalSplit {
    /// Indices into the labeled items.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded random split: `train_frac` of the items train the probe and the
/// rest are tested, minus any node in `exclude_from_test` (attention-labeled
/// nodes are allowed in train but never tested on).
pub fn split_classification(
    set: &ClassificationSet,
    train_frac: f64,
    exclude_from_test: &HashSet<NodeId>,
    seed: u64,
) -> EvalSplit {
    let n = set.items.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let train_count = ((train_frac * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
    let train: Vec<usize> = indices[..train_count].to_vec();
    let test: Vec<usize> = indices[train_count..]
        .iter()
        .copied()
        .filter(|&i| !exclude_from_test.contains(&set.items[i].0))
        .collect();
    debug_assert!(train.iter().all(|i| !test.contains(i)));
    EvalSplit { train, test }
}

/// Fit a probe on the split's train items and score the test items.
pub fn evaluate_classification(
    store: &EmbeddingStore,
    rep: Representation,
    labels: &ClassificationSet,
    split: &EvalSplit,
    cfg: &OvrConfig,
) -> Result<(f64, f64), EvalError> {
    if split.train.is_empty() {
        return Err(EvalError::EmptyTrain);
    }
    let feature_of = |item: usize| -> Vec<f64> {
        let node = labels.items[item].0;
        match rep {
            Representation::Robust => store.robust_vec(node).to_vec(),
            Representation::View(k) => store.view_vec(ViewId(k), node).to_vec(),
            Representation::Concat => {
                let mut buf = Vec::new();
                store.concat_vec(node, &mut buf);
                buf
            }
        }
    };
    let train_x: Vec<Vec<f64>> = split.train.iter().map(|&i| feature_of(i)).collect();
    let train_y: Vec<Vec<f64>> = split.train.iter().map(|&i| labels.items[i].1.clone()).collect();
    let clf = fit_ovr(&train_x, &train_y, cfg);
    let predictions: Vec<Vec<bool>> = split
        .test
        .iter()
        .map(|&i| clf.predict(&feature_of(i)))
        .collect();
    let truth: Vec<Vec<bool>> = split
        .test
        .iter()
        .map(|&i| labels.items[i].1.iter().map(|&v| v > 0.5).collect())
        .collect();
    f1_scores(&predictions, &truth)
}

/// Cosine similarity between two feature rows; zero-norm rows score 0.
pub fn pair_score(features: &[Vec<f64>], a: usize, b: usize) -> f64 {
    cosine(&features[a], &features[b]).unwrap_or(0.0)
}

/// AUC of cosine-scored positives against negatives over the same features.
pub fn evaluate_link(
    features: &[Vec<f64>],
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Result<f64, EvalError> {
    let mut scored = Vec::with_capacity(positives.len() + negatives.len());
    for &(a, b) in positives {
        scored.push((pair_score(features, a, b), true));
    }
    for &(a, b) in negatives {
        scored.push((pair_score(features, a, b), false));
    }
    link_auc(&scored)
}

/// Sample `count` distinct node pairs for which `is_forbidden(min, max)` is
/// false; typically the predicate covers every training-view edge plus the
/// held-out positives.
pub fn sample_negative_pairs(
    num_nodes: usize,
    count: usize,
    is_forbidden: impl Fn(usize, usize) -> bool,
    seed: u64,
) -> Result<Vec<(usize, usize)>, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: HashSet<(usize, usize)> = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let max_attempts = count.saturating_mul(1000).max(10_000);
    while out.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(EvalError::NegativeSampling {
                requested: count,
                sampled: out.len(),
            });
        }
        let a = rng.random_range(0..num_nodes);
        let b = rng.random_range(0..num_nodes);
        if a == b {
            continue;
        }
        let pair = (a.min(b), a.max(b));
        if chosen.contains(&pair) || is_forbidden(pair.0, pair.1) {
            continue;
        }
        chosen.insert(pair);
        out.push(pair);
    }
    Ok(out)
}

/// Forbidden-pair predicate covering every directed edge of the graph, in
/// either direction.
pub fn graph_edge_predicate(graph: &MultiViewGraph) -> impl Fn(usize, usize) -> bool + '_ {
    |a, b| {
        graph
            .views()
            .any(|(_, v)| v.has_edge(NodeId(a), NodeId(b)) || v.has_edge(NodeId(b), NodeId(a)))
    }
}

/// Bucket test items by a per-node degree measure, highest degree first,
/// into near-equal groups.
pub fn degree_buckets(
    items: &[usize],
    degree_of: impl Fn(usize) -> f64,
    buckets: usize,
) -> Vec<Vec<usize>> {
    let mut sorted: Vec<usize> = items.to_vec();
    sorted.sort_by(|&a, &b| {
        degree_of(b)
            .partial_cmp(&degree_of(a))
            .expect("finite degrees")
            .then(a.cmp(&b))
    });
    let buckets = buckets.max(1).min(sorted.len().max(1));
    let base = sorted.len() / buckets;
    let extra = sorted.len() % buckets;
    let mut out = Vec::with_capacity(buckets);
    let mut start = 0;
    for b in 0..buckets {
        let len = base + usize::from(b < extra);
        out.push(sorted[start..start + len].to_vec());
        start += len;
    }
    out
}
