//! Parameter storage and the SGD updates for the collaboration objective:
//! per-view skip-gram terms with negative sampling plus the attention-weighted
//! regularizer that pulls view-specific vectors toward the voted robust
//! representation.

use std::cell::UnsafeCell;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{NodeId, ViewId, Vocab};
use crate::vecmath::{all_finite, axpy, dot, log_sigmoid, sigmoid};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("non-finite value while updating node {node} in view {view}")]
    NonFinite { node: usize, view: usize },
    #[error("voting weights for node {node} sum to {sum:.9}, not 1")]
    SimplexViolation { node: usize, sum: f64 },
    #[error("non-finite parameter in {table} at barrier")]
    NonFiniteAtBarrier { table: String },
}

#[derive(Debug, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

/// All training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Embedding dimension d.
    pub dim: usize,
    /// Negative samples per positive edge, N.
    pub negatives: usize,
    /// Edge samples per iteration, T.
    pub samples_per_iter: u64,
    /// Number of outer iterations (the convergence budget).
    pub iterations: usize,
    /// Regularizer weight.
    pub eta: f64,
    /// Initial learning rate.
    pub initial_lr: f64,
    pub seed: u64,
    /// Skip weight learning; all views voted with equal weight.
    pub no_attention: bool,
    /// Per-view context tables instead of one shared table, and no
    /// regularizer: views train in separate spaces.
    pub no_collaboration: bool,
    /// Pick views proportionally to their edge counts instead of uniformly.
    pub view_pick_by_size: bool,
    pub workers: usize,
    pub attention_step: f64,
    pub attention_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            dim: 100,
            negatives: 5,
            samples_per_iter: 10_000_000,
            iterations: 10,
            eta: 0.05,
            initial_lr: 0.025,
            seed: 1,
            no_attention: false,
            no_collaboration: false,
            view_pick_by_size: false,
            workers: 1,
            attention_step: 0.1,
            attention_epochs: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dim < 1 {
            return Err(ConfigError("dim must be >= 1".into()));
        }
        if self.negatives < 1 {
            return Err(ConfigError("negatives must be >= 1".into()));
        }
        if self.samples_per_iter < 1 {
            return Err(ConfigError("samples_per_iter must be >= 1".into()));
        }
        if self.iterations < 1 {
            return Err(ConfigError("iterations must be >= 1".into()));
        }
        if self.eta < 0.0 || !self.eta.is_finite() {
            return Err(ConfigError("eta must be >= 0".into()));
        }
        if self.initial_lr <= 0.0 || !self.initial_lr.is_finite() {
            return Err(ConfigError("lr must be > 0".into()));
        }
        if self.workers < 1 {
            return Err(ConfigError("workers must be >= 1".into()));
        }
        Ok(())
    }
}

/// Linearly decayed learning rate with a floor: rho0 * max(1e-4, 1 - t/total).
pub fn learning_rate(samples_consumed: u64, rho0: f64, total_samples: u64) -> f64 {
    let frac = if total_samples == 0 {
        0.0
    } else {
        samples_consumed as f64 / total_samples as f64
    };
    rho0 * (1.0 - frac).max(1e-4)
}

/// Dense row-major parameter matrix with interior mutability.
///
/// Workers in parallel mode update rows through a shared reference without
/// locking; colliding updates may be lost, which the sparse-update training
/// scheme tolerates. In deterministic mode a single worker owns the store
/// and no row is ever aliased.
pub(crate) struct ParamTable {
    rows: usize,
    dim: usize,
    data: UnsafeCell<Vec<f64>>,
}

unsafe impl Send for ParamTable {}
unsafe impl Sync for ParamTable {}

impl ParamTable {
    fn zeros(rows: usize, dim: usize) -> ParamTable {
        ParamTable {
            rows,
            dim,
            data: UnsafeCell::new(vec![0.0; rows * dim]),
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        debug_assert!(i < self.rows);
        unsafe {
            let v = &*self.data.get();
            &v[i * self.dim..(i + 1) * self.dim]
        }
    }

    /// Mutable row access through a shared reference; see the type-level
    /// contract.
    #[inline]
    #[allow(clippy::mut_from_ref)]
    fn row_mut(&self, i: usize) -> &mut [f64] {
        debug_assert!(i < self.rows);
        unsafe {
            let v = &mut *self.data.get();
            &mut v[i * self.dim..(i + 1) * self.dim]
        }
    }

    fn as_slice(&self) -> &[f64] {
        unsafe { &*self.data.get() }
    }
}

impl Clone for ParamTable {
    fn clone(&self) -> ParamTable {
        ParamTable {
            rows: self.rows,
            dim: self.dim,
            data: UnsafeCell::new(self.as_slice().to_vec()),
        }
    }
}

enum ContextTable {
    Shared(ParamTable),
    PerView(Vec<ParamTable>),
}

impl ContextTable {
    fn table(&self, view: usize) -> &ParamTable {
        match self {
            ContextTable::Shared(t) => t,
            ContextTable::PerView(ts) => &ts[view],
        }
    }
}

/// Per-node view weights (lambda), one simplex row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    num_views: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn uniform(num_nodes: usize, num_views: usize) -> WeightMatrix {
        WeightMatrix {
            num_views,
            data: vec![1.0 / num_views as f64; num_nodes * num_views],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> WeightMatrix {
        let num_views = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * num_views);
        for r in rows {
            assert_eq!(r.len(), num_views);
            data.extend_from_slice(&r);
        }
        WeightMatrix { num_views, data }
    }

    pub fn num_nodes(&self) -> usize {
        self.data.len().checked_div(self.num_views).unwrap_or(0)
    }

    pub fn num_views(&self) -> usize {
        self.num_views
    }

    pub fn row(&self, node: NodeId) -> &[f64] {
        &self.data[node.0 * self.num_views..(node.0 + 1) * self.num_views]
    }

    pub fn weight(&self, node: NodeId, view: ViewId) -> f64 {
        self.data[node.0 * self.num_views + view.0]
    }

    /// "TOKEN w_1 ... w_K" per node, 6-decimal fixed point.
    pub fn write<W: Write>(&self, mut out: W, vocab: &Vocab) -> std::io::Result<()> {
        for i in 0..self.num_nodes() {
            write!(out, "{}", vocab.token(NodeId(i)))?;
            for w in self.row(NodeId(i)) {
                write!(out, " {:.6}", w)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// View-specific vectors, context vectors shared across views (or per-view
/// in the no-collaboration ablation), and the voted robust vectors.
pub struct EmbeddingStore {
    num_nodes: usize,
    num_views: usize,
    dim: usize,
    views: Vec<ParamTable>,
    contexts: ContextTable,
    robust: ParamTable,
}

impl Clone for EmbeddingStore {
    fn clone(&self) -> EmbeddingStore {
        EmbeddingStore {
            num_nodes: self.num_nodes,
            num_views: self.num_views,
            dim: self.dim,
            views: self.views.clone(),
            contexts: match &self.contexts {
                ContextTable::Shared(t) => ContextTable::Shared(t.clone()),
                ContextTable::PerView(ts) => ContextTable::PerView(ts.clone()),
            },
            robust: self.robust.clone(),
        }
    }
}

impl EmbeddingStore {
    /// View-specific components drawn uniformly from [-0.5/d, 0.5/d],
    /// contexts all zero, robust vectors set to the per-node mean of the
    /// view-specific vectors. Identical seeds give bitwise-identical stores.
    pub fn init(
        num_nodes: usize,
        num_views: usize,
        dim: usize,
        shared_contexts: bool,
        seed: u64,
    ) -> EmbeddingStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut views = Vec::with_capacity(num_views);
        for _ in 0..num_views {
            let table = ParamTable::zeros(num_nodes, dim);
            for i in 0..num_nodes {
                for v in table.row_mut(i).iter_mut() {
                    *v = (rng.random::<f64>() - 0.5) / dim as f64;
                }
            }
            views.push(table);
        }
        let contexts = if shared_contexts {
            ContextTable::Shared(ParamTable::zeros(num_nodes, dim))
        } else {
            ContextTable::PerView((0..num_views).map(|_| ParamTable::zeros(num_nodes, dim)).collect())
        };
        let robust = ParamTable::zeros(num_nodes, dim);
        for i in 0..num_nodes {
            let r = robust.row_mut(i);
            for table in &views {
                axpy(1.0 / num_views as f64, table.row(i), r);
            }
        }
        EmbeddingStore {
            num_nodes,
            num_views,
            dim,
            views,
            contexts,
            robust,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_views(&self) -> usize {
        self.num_views
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dimension of the concatenated representation, K*d.
    pub fn concat_dim(&self) -> usize {
        self.num_views * self.dim
    }

    pub fn has_shared_contexts(&self) -> bool {
        matches!(self.contexts, ContextTable::Shared(_))
    }

    pub fn view_vec(&self, k: ViewId, i: NodeId) -> &[f64] {
        self.views[k.0].row(i.0)
    }

    pub fn context_vec(&self, k: ViewId, i: NodeId) -> &[f64] {
        self.contexts.table(k.0).row(i.0)
    }

    pub fn robust_vec(&self, i: NodeId) -> &[f64] {
        self.robust.row(i.0)
    }

    /// Concatenation of the view-specific vectors of `i`, in view order.
    pub fn concat_vec(&self, i: NodeId, out: &mut Vec<f64>) {
        out.clear();
        for k in 0..self.num_views {
            out.extend_from_slice(self.views[k].row(i.0));
        }
    }

    pub fn set_view_vec(&mut self, k: ViewId, i: NodeId, values: &[f64]) {
        self.views[k.0].row_mut(i.0).copy_from_slice(values);
    }

    pub fn set_context_vec(&mut self, k: ViewId, i: NodeId, values: &[f64]) {
        self.contexts.table(k.0).row_mut(i.0).copy_from_slice(values);
    }

    pub fn set_robust_vec(&mut self, i: NodeId, values: &[f64]) {
        self.robust.row_mut(i.0).copy_from_slice(values);
    }

    /// The negative-sampling surrogate for one sampled edge at the current
    /// parameters: log sigma(c_j . x_i^k) + sum_n log sigma(-c_n . x_i^k).
    pub fn edge_objective(
        &self,
        k: ViewId,
        src: NodeId,
        dst: NodeId,
        negatives: &[NodeId],
    ) -> f64 {
        let x = self.views[k.0].row(src.0);
        let ctx = self.contexts.table(k.0);
        let mut obj = log_sigmoid(dot(x, ctx.row(dst.0)));
        for &v in negatives {
            obj += log_sigmoid(-dot(x, ctx.row(v.0)));
        }
        obj
    }

    /// One stochastic ascent step on the per-edge surrogate, updating the
    /// source's view-specific vector, the target context and each negative
    /// context at rate `rate`. Returns the surrogate value before the step.
    ///
    /// All dot products are taken at the pre-step parameters, so the applied
    /// update is the exact simultaneous gradient even when negatives repeat.
    pub fn sgd_edge_step(
        &self,
        k: ViewId,
        src: NodeId,
        dst: NodeId,
        negatives: &[NodeId],
        rate: f64,
        scratch: &mut SgdScratch,
    ) -> Result<f64, EmbedError> {
        let ctx = self.contexts.table(k.0);
        scratch.x.clear();
        scratch.x.extend_from_slice(self.views[k.0].row(src.0));
        let x = &scratch.x;

        let pos_dot = dot(x, ctx.row(dst.0));
        if !pos_dot.is_finite() {
            return Err(EmbedError::NonFinite { node: src.0, view: k.0 });
        }
        let pos_sig = sigmoid(pos_dot);
        let mut objective = log_sigmoid(pos_dot);

        scratch.x_delta.clear();
        scratch.x_delta.resize(self.dim, 0.0);
        axpy(1.0 - pos_sig, ctx.row(dst.0), &mut scratch.x_delta);

        scratch.neg_sig.clear();
        for &v in negatives {
            let neg_dot = dot(x, ctx.row(v.0));
            if !neg_dot.is_finite() {
                return Err(EmbedError::NonFinite { node: v.0, view: k.0 });
            }
            let s = sigmoid(neg_dot);
            scratch.neg_sig.push(s);
            objective += log_sigmoid(-neg_dot);
            axpy(-s, ctx.row(v.0), &mut scratch.x_delta);
        }

        axpy(rate * (1.0 - pos_sig), x, ctx.row_mut(dst.0));
        for (&v, &s) in negatives.iter().zip(&scratch.neg_sig) {
            axpy(-rate * s, x, ctx.row_mut(v.0));
        }
        axpy(rate, &scratch.x_delta, self.views[k.0].row_mut(src.0));

        Ok(objective)
    }

    /// One descent step on the collaboration penalty for (i, k):
    /// x_i^k <- x_i^k - rate * eta * lambda * 2 (x_i^k - robust_i).
    /// The robust vector is held constant; it is refreshed by voting.
    pub fn regularization_step(
        &self,
        k: ViewId,
        i: NodeId,
        lambda: f64,
        eta: f64,
        rate: f64,
    ) {
        let coef = 2.0 * rate * eta * lambda;
        if coef == 0.0 {
            return;
        }
        let robust = self.robust.row(i.0);
        let x = self.views[k.0].row_mut(i.0);
        for (xv, rv) in x.iter_mut().zip(robust) {
            *xv -= coef * (*xv - *rv);
        }
    }

    /// Recompute every robust vector as the weight-voted combination of the
    /// view-specific vectors. Each weight row must sum to 1 within 1e-6.
    pub fn vote_robust(&self, weights: &WeightMatrix) -> Result<(), EmbedError> {
        assert_eq!(weights.num_views(), self.num_views);
        for i in 0..self.num_nodes {
            let row = weights.row(NodeId(i));
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(EmbedError::SimplexViolation { node: i, sum });
            }
            let r = self.robust.row_mut(i);
            r.fill(0.0);
            for (k, &w) in row.iter().enumerate() {
                axpy(w, self.views[k].row(i), r);
            }
        }
        Ok(())
    }

    /// Full finiteness scan, run at trainer barriers.
    pub fn check_finite(&self) -> Result<(), EmbedError> {
        for (k, t) in self.views.iter().enumerate() {
            if !all_finite(t.as_slice()) {
                return Err(EmbedError::NonFiniteAtBarrier {
                    table: format!("view {}", k),
                });
            }
        }
        let context_tables: Vec<&ParamTable> = match &self.contexts {
            ContextTable::Shared(t) => vec![t],
            ContextTable::PerView(ts) => ts.iter().collect(),
        };
        for t in context_tables {
            if !all_finite(t.as_slice()) {
                return Err(EmbedError::NonFiniteAtBarrier {
                    table: "contexts".to_string(),
                });
            }
        }
        if !all_finite(self.robust.as_slice()) {
            return Err(EmbedError::NonFiniteAtBarrier {
                table: "robust".to_string(),
            });
        }
        Ok(())
    }

    /// "|V| d" header then one "TOKEN f1 ... fd" line per node.
    pub fn write_robust<W: Write>(&self, out: W, vocab: &Vocab) -> std::io::Result<()> {
        self.write_table(&self.robust, out, vocab)
    }

    pub fn write_view<W: Write>(&self, k: ViewId, out: W, vocab: &Vocab) -> std::io::Result<()> {
        self.write_table(&self.views[k.0], out, vocab)
    }

    fn write_table<W: Write>(
        &self,
        table: &ParamTable,
        mut out: W,
        vocab: &Vocab,
    ) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.num_nodes, self.dim)?;
        for i in 0..self.num_nodes {
            write!(out, "{}", vocab.token(NodeId(i)))?;
            for v in table.row(i) {
                write!(out, " {:.6}", v)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Reusable buffers for `sgd_edge_step`.
#[derive(Debug, Default)]
pub struct SgdScratch {
    x: Vec<f64>,
    x_delta: Vec<f64>,
    neg_sig: Vec<f64>,
}

impl SgdScratch {
    pub fn new() -> SgdScratch {
        SgdScratch::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecmath::log_sigmoid;

    fn store_with(dim: usize, views: usize, nodes: usize, seed: u64) -> EmbeddingStore {
        EmbeddingStore::init(nodes, views, dim, true, seed)
    }

    #[test]
    fn init_components_within_range() {
        let store = store_with(4, 2, 10, 42);
        for k in 0..2 {
            for i in 0..10 {
                for &v in store.view_vec(ViewId(k), NodeId(i)) {
                    assert!(v.abs() <= 0.125, "component {} out of range", v);
                }
            }
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = store_with(8, 3, 20, 7);
        let b = store_with(8, 3, 20, 7);
        for k in 0..3 {
            for i in 0..20 {
                assert_eq!(
                    a.view_vec(ViewId(k), NodeId(i)),
                    b.view_vec(ViewId(k), NodeId(i))
                );
            }
        }
    }

    #[test]
    fn init_contexts_zero_and_robust_is_mean() {
        let store = store_with(4, 2, 5, 3);
        for i in 0..5 {
            assert!(store.context_vec(ViewId(0), NodeId(i)).iter().all(|&v| v == 0.0));
            // sigma(c.x) = 0.5 for any x when c = 0
            assert_eq!(
                sigmoid(dot(
                    store.context_vec(ViewId(0), NodeId(i)),
                    store.view_vec(ViewId(0), NodeId(i))
                )),
                0.5
            );
            for t in 0..4 {
                let mean = (store.view_vec(ViewId(0), NodeId(i))[t]
                    + store.view_vec(ViewId(1), NodeId(i))[t])
                    / 2.0;
                assert!((store.robust_vec(NodeId(i))[t] - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sgd_step_with_zero_contexts_leaves_source_vector() {
        let store = store_with(6, 1, 4, 9);
        let before = store.view_vec(ViewId(0), NodeId(0)).to_vec();
        let mut scratch = SgdScratch::new();
        store
            .sgd_edge_step(ViewId(0), NodeId(0), NodeId(1), &[NodeId(2), NodeId(3)], 0.5, &mut scratch)
            .unwrap();
        assert_eq!(store.view_vec(ViewId(0), NodeId(0)), before.as_slice());
    }

    #[test]
    fn sgd_step_hand_case() {
        // d=1, x=[1], c_j=[0], one negative c_n=[0], rate 1:
        // c_j -> [0.5], c_n -> [-0.5].
        let mut store = store_with(1, 1, 3, 0);
        store.set_view_vec(ViewId(0), NodeId(0), &[1.0]);
        store.set_context_vec(ViewId(0), NodeId(1), &[0.0]);
        store.set_context_vec(ViewId(0), NodeId(2), &[0.0]);
        let mut scratch = SgdScratch::new();
        let obj = store
            .sgd_edge_step(ViewId(0), NodeId(0), NodeId(1), &[NodeId(2)], 1.0, &mut scratch)
            .unwrap();
        assert!((store.context_vec(ViewId(0), NodeId(1))[0] - 0.5).abs() < 1e-15);
        assert!((store.context_vec(ViewId(0), NodeId(2))[0] + 0.5).abs() < 1e-15);
        assert!((obj - 2.0 * log_sigmoid(0.0)).abs() < 1e-15);
    }

    #[test]
    fn sgd_gradient_matches_finite_differences() {
        // Check the applied update against central differences of the
        // surrogate, coordinate by coordinate, on random instances.
        let dim = 8;
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut store = store_with(dim, 1, 6, seed);
            // Randomize contexts so gradients are nontrivial.
            for i in 0..6 {
                let c: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
                store.set_context_vec(ViewId(0), NodeId(i), &c);
            }
            let negs = [NodeId(2), NodeId(3), NodeId(4)];
            let (src, dst) = (NodeId(0), NodeId(1));

            let h = 1e-5;
            let numeric = |store: &mut EmbeddingStore, set: &dyn Fn(&mut EmbeddingStore, f64), base: f64| {
                set(store, base + h);
                let up = store.edge_objective(ViewId(0), src, dst, &negs);
                set(store, base - h);
                let down = store.edge_objective(ViewId(0), src, dst, &negs);
                set(store, base);
                (up - down) / (2.0 * h)
            };

            // Implied analytic gradient from one unit-rate step.
            let stepped = store.clone();
            let mut scratch = SgdScratch::new();
            stepped
                .sgd_edge_step(ViewId(0), src, dst, &negs, 1.0, &mut scratch)
                .unwrap();

            let mut max_rel = 0.0f64;
            let mut check = |analytic: f64, fd: f64| {
                let denom = fd.abs().max(1e-8);
                max_rel = max_rel.max((analytic - fd).abs() / denom);
            };

            for t in 0..dim {
                let base = store.view_vec(ViewId(0), src)[t];
                let fd = numeric(
                    &mut store,
                    &move |s: &mut EmbeddingStore, v: f64| {
                        let mut row = s.view_vec(ViewId(0), src).to_vec();
                        row[t] = v;
                        s.set_view_vec(ViewId(0), src, &row);
                    },
                    base,
                );
                let analytic = stepped.view_vec(ViewId(0), src)[t] - base;
                check(analytic, fd);
            }
            for &node in [dst].iter().chain(&negs) {
                for t in 0..dim {
                    let base = store.context_vec(ViewId(0), node)[t];
                    let fd = numeric(
                        &mut store,
                        &move |s: &mut EmbeddingStore, v: f64| {
                            let mut row = s.context_vec(ViewId(0), node).to_vec();
                            row[t] = v;
                            s.set_context_vec(ViewId(0), node, &row);
                        },
                        base,
                    );
                    let analytic = stepped.context_vec(ViewId(0), node)[t] - base;
                    check(analytic, fd);
                }
            }
            assert!(max_rel < 1e-4, "relative error {max_rel} on seed {seed}");
        }
    }

    #[test]
    fn sgd_step_increases_surrogate_at_small_rate() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
            let mut store = store_with(8, 1, 8, seed);
            for i in 0..8 {
                let c: Vec<f64> = (0..8).map(|_| rng.random::<f64>() - 0.5).collect();
                store.set_context_vec(ViewId(0), NodeId(i), &c);
            }
            let negs = [NodeId(3), NodeId(4)];
            let before = store.edge_objective(ViewId(0), NodeId(0), NodeId(1), &negs);
            let mut scratch = SgdScratch::new();
            store
                .sgd_edge_step(ViewId(0), NodeId(0), NodeId(1), &negs, 1e-3, &mut scratch)
                .unwrap();
            let after = store.edge_objective(ViewId(0), NodeId(0), NodeId(1), &negs);
            assert!(after > before, "surrogate did not increase (seed {seed})");
        }
    }

    #[test]
    fn regularization_step_cases() {
        let mut store = store_with(1, 1, 2, 0);
        // x == robust: no change
        store.set_view_vec(ViewId(0), NodeId(0), &[0.7]);
        store.set_robust_vec(NodeId(0), &[0.7]);
        store.regularization_step(ViewId(0), NodeId(0), 0.5, 0.05, 1.0);
        assert_eq!(store.view_vec(ViewId(0), NodeId(0)), &[0.7]);

        // lambda == 0: no change
        store.set_view_vec(ViewId(0), NodeId(1), &[2.0]);
        store.set_robust_vec(NodeId(1), &[0.0]);
        store.regularization_step(ViewId(0), NodeId(1), 0.0, 0.05, 1.0);
        assert_eq!(store.view_vec(ViewId(0), NodeId(1)), &[2.0]);

        // hand case: 2 - 1*0.05*1*2*2 = 1.8
        store.regularization_step(ViewId(0), NodeId(1), 1.0, 0.05, 1.0);
        assert!((store.view_vec(ViewId(0), NodeId(1))[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn vote_robust_cases() {
        let mut store = store_with(1, 3, 1, 0);
        store.set_view_vec(ViewId(0), NodeId(0), &[1.0]);
        store.set_view_vec(ViewId(1), NodeId(0), &[2.0]);
        store.set_view_vec(ViewId(2), NodeId(0), &[4.0]);

        let w = WeightMatrix::from_rows(vec![vec![0.2, 0.3, 0.5]]);
        store.vote_robust(&w).unwrap();
        assert!((store.robust_vec(NodeId(0))[0] - 2.8).abs() < 1e-15);

        // vertex of the simplex
        let w = WeightMatrix::from_rows(vec![vec![1.0, 0.0, 0.0]]);
        store.vote_robust(&w).unwrap();
        assert_eq!(store.robust_vec(NodeId(0)), &[1.0]);

        // equal weights = arithmetic mean
        let third = 1.0 / 3.0;
        let w = WeightMatrix::from_rows(vec![vec![third, third, third]]);
        store.vote_robust(&w).unwrap();
        assert!((store.robust_vec(NodeId(0))[0] - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn vote_robust_is_idempotent() {
        let store = store_with(6, 2, 10, 11);
        let w = WeightMatrix::uniform(10, 2);
        store.vote_robust(&w).unwrap();
        let first: Vec<Vec<f64>> = (0..10).map(|i| store.robust_vec(NodeId(i)).to_vec()).collect();
        store.vote_robust(&w).unwrap();
        for (i, row) in first.iter().enumerate() {
            assert_eq!(store.robust_vec(NodeId(i)), row.as_slice());
        }
    }

    #[test]
    fn vote_robust_rejects_simplex_violation() {
        let store = store_with(2, 2, 2, 0);
        let w = WeightMatrix::from_rows(vec![vec![0.6, 0.6], vec![0.5, 0.5]]);
        assert!(matches!(
            store.vote_robust(&w),
            Err(EmbedError::SimplexViolation { node: 0, .. })
        ));
    }

    #[test]
    fn learning_rate_schedule() {
        assert_eq!(learning_rate(0, 0.025, 1000), 0.025);
        assert!((learning_rate(500, 0.025, 1000) - 0.0125).abs() < 1e-15);
        assert!((learning_rate(1000, 0.025, 1000) - 0.025 * 1e-4).abs() < 1e-18);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.dim = 0;
        assert!(cfg.validate().is_err());
        cfg.dim = 8;
        cfg.eta = -0.1;
        assert!(cfg.validate().is_err());
        cfg.eta = 0.0;
        cfg.initial_lr = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dump_format() {
        let mut store = store_with(2, 1, 2, 0);
        store.set_view_vec(ViewId(0), NodeId(0), &[1.0, -0.5]);
        store.set_view_vec(ViewId(0), NodeId(1), &[0.25, 2.0]);
        let mut vocab = Vocab::new();
        vocab.intern("a");
        vocab.intern("b");
        let mut out = Vec::new();
        store.write_view(ViewId(0), &mut out, &vocab).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "2 2\na 1.000000 -0.500000\nb 0.250000 2.000000\n"
        );
    }
}
