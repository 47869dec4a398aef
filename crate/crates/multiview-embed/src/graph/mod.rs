//! Multi-view graph data model: one node universe shared by K weighted
//! directed edge sets, per-view degree bookkeeping, and the two sampling
//! distributions used during training (edge sampling per view, degree^{3/4}
//! negative node sampling per view).

mod alias;

pub use alias::AliasTable;

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rand::Rng;
use thiserror::Error;

/// Internal node index, contiguous in `[0, |V|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// View index in `[0, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ViewId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed edge line: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: non-positive weight")]
    NonPositiveWeight { path: PathBuf, line: usize },
    #[error("view file {path} contains no edges")]
    EmptyViewFile { path: PathBuf },
    #[error("view {0} has no edges")]
    EmptyView(usize),
    #[error("graph has no views")]
    NoViews,
    #[error("unknown node token '{0}'")]
    UnknownToken(String),
    #[error("node {node} has no out-edges in view {view}")]
    NoOutEdges { node: usize, view: usize },
    #[error("view index {0} out of range")]
    ViewOutOfRange(usize),
    #[error("cannot build a sampler over an empty distribution")]
    EmptyDistribution,
    #[error("sampler weights must be finite and non-negative")]
    InvalidWeight,
}

/// Whether a view file lists each edge once (directed) or describes a
/// symmetric relation that is mirrored into two directed edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Directedness {
    Directed,
    #[default]
    Undirected,
}

/// Bijection between external string tokens and internal indices.
/// Indices are assigned in first-appearance order and stay stable.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Vocab {
        Vocab::default()
    }

    pub fn intern(&mut self, token: &str) -> NodeId {
        if let Some(&i) = self.index.get(token) {
            return NodeId(i);
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        NodeId(i)
    }

    pub fn get(&self, token: &str) -> Option<NodeId> {
        self.index.get(token).map(|&i| NodeId(i))
    }

    pub fn token(&self, id: NodeId) -> &str {
        &self.tokens[id.0]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Write "INDEX TOKEN" lines in index order.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, tok) in self.tokens.iter().enumerate() {
            writeln!(out, "{} {}", i, tok)?;
        }
        Ok(())
    }
}

/// A parsed edge before the graph is finalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub weight: f64,
}

/// Parse one view file: "SRC DST [WEIGHT]" per line, '#' comments ignored,
/// missing weight defaults to 1.0. Undirected inputs are mirrored. Self-loops
/// are dropped with a warning. New tokens extend `vocab`.
pub fn load_view(
    path: &Path,
    directedness: Directedness,
    vocab: &mut Vocab,
) -> Result<Vec<RawEdge>, GraphError> {
    let file = File::open(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(GraphError::MalformedLine {
                path: path.to_path_buf(),
                line: lineno,
                reason: format!("expected 2 or 3 fields, found {}", fields.len()),
            });
        }
        let weight = if fields.len() == 3 {
            fields[2].parse::<f64>().map_err(|_| GraphError::MalformedLine {
                path: path.to_path_buf(),
                line: lineno,
                reason: format!("cannot parse weight '{}'", fields[2]),
            })?
        } else {
            1.0
        };
        if !weight.is_finite() || weight <= 0.0 {
            return Err(GraphError::NonPositiveWeight {
                path: path.to_path_buf(),
                line: lineno,
            });
        }
        let src = vocab.intern(fields[0]);
        let dst = vocab.intern(fields[1]);
        if src == dst {
            warn!("{}:{}: dropping self-loop on '{}'", path.display(), lineno, fields[0]);
            continue;
        }
        edges.push(RawEdge { src, dst, weight });
        if directedness == Directedness::Undirected {
            edges.push(RawEdge { src: dst, dst: src, weight });
        }
    }
    if edges.is_empty() {
        return Err(GraphError::EmptyViewFile {
            path: path.to_path_buf(),
        });
    }
    Ok(edges)
}

/// One finalized edge set in compressed sparse row form, with neighbor
/// lists sorted by target. Duplicate (src, dst) pairs have been merged by
/// summing weights.
#[derive(Debug, Clone)]
pub struct View {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    weights: Vec<f64>,
    sources: Vec<NodeId>,
    out_degree: Vec<f64>,
    total_degree: Vec<f64>,
}

impl View {
    fn from_raw(num_nodes: usize, mut raw: Vec<RawEdge>) -> View {
        raw.sort_unstable_by_key(|e| (e.src, e.dst));
        let mut merged: Vec<RawEdge> = Vec::with_capacity(raw.len());
        for e in raw {
            match merged.last_mut() {
                Some(last) if last.src == e.src && last.dst == e.dst => last.weight += e.weight,
                _ => merged.push(e),
            }
        }

        let mut offsets = vec![0usize; num_nodes + 1];
        let mut out_degree = vec![0.0; num_nodes];
        let mut total_degree = vec![0.0; num_nodes];
        for e in &merged {
            offsets[e.src.0 + 1] += 1;
            out_degree[e.src.0] += e.weight;
            total_degree[e.src.0] += e.weight;
            total_degree[e.dst.0] += e.weight;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let targets = merged.iter().map(|e| e.dst).collect();
        let weights = merged.iter().map(|e| e.weight).collect();
        let sources = merged.iter().map(|e| e.src).collect();
        View {
            offsets,
            targets,
            weights,
            sources,
            out_degree,
            total_degree,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// The directed edge stored at index `e`.
    pub fn edge(&self, e: usize) -> (NodeId, NodeId, f64) {
        (self.sources[e], self.targets[e], self.weights[e])
    }

    /// Sum of outgoing edge weights of `node`.
    pub fn out_degree(&self, node: NodeId) -> f64 {
        self.out_degree[node.0]
    }

    /// Sum of incoming plus outgoing edge weights of `node`; this is the
    /// mass that feeds the negative-sampling distribution.
    pub fn total_degree(&self, node: NodeId) -> f64 {
        self.total_degree[node.0]
    }

    /// Outgoing neighbors of `node` with weights, sorted by target index.
    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        let lo = self.offsets[node.0];
        let hi = self.offsets[node.0 + 1];
        self.targets[lo..hi]
            .iter()
            .copied()
            .zip(self.weights[lo..hi].iter().copied())
    }

    /// Weight of the directed edge (src, dst), if present.
    pub fn weight_between(&self, src: NodeId, dst: NodeId) -> Option<f64> {
        let lo = self.offsets[src.0];
        let hi = self.offsets[src.0 + 1];
        self.targets[lo..hi]
            .binary_search(&dst)
            .ok()
            .map(|i| self.weights[lo + i])
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId) -> bool {
        self.weight_between(src, dst).is_some()
    }
}

/// Node universe plus K weighted directed edge sets. Immutable after
/// construction; safe for concurrent reads.
#[derive(Debug, Clone)]
pub struct MultiViewGraph {
    vocab: Vocab,
    names: Vec<String>,
    views: Vec<View>,
}

impl MultiViewGraph {
    pub fn node_count(&self) -> usize {
        self.vocab.len()
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn view(&self, k: ViewId) -> &View {
        &self.views[k.0]
    }

    pub fn view_name(&self, k: ViewId) -> &str {
        &self.names[k.0]
    }

    pub fn views(&self) -> impl Iterator<Item = (ViewId, &View)> {
        self.views.iter().enumerate().map(|(k, v)| (ViewId(k), v))
    }

    /// Total number of stored directed edges across all views.
    pub fn total_edges(&self) -> usize {
        self.views.iter().map(|v| v.edge_count()).sum()
    }

    /// Empirical neighbor probability: weight(i, j) / out_degree(i) in view
    /// k, and 0 when the edge is absent. Errors when i has no out-edges.
    pub fn empirical_neighbor_prob(
        &self,
        i: NodeId,
        j: NodeId,
        k: ViewId,
    ) -> Result<f64, GraphError> {
        let view = self.views.get(k.0).ok_or(GraphError::ViewOutOfRange(k.0))?;
        let d = view.out_degree(i);
        if d <= 0.0 {
            return Err(GraphError::NoOutEdges { node: i.0, view: k.0 });
        }
        Ok(view.weight_between(i, j).unwrap_or(0.0) / d)
    }

    /// Alias table over the edges of view k, weighted by edge weight.
    pub fn build_edge_alias(&self, k: ViewId) -> Result<AliasTable, GraphError> {
        let view = self.views.get(k.0).ok_or(GraphError::ViewOutOfRange(k.0))?;
        if view.edge_count() == 0 {
            return Err(GraphError::EmptyView(k.0));
        }
        AliasTable::new(&view.weights)
    }

    /// Alias table over nodes with unnormalized mass total_degree^{3/4} in
    /// view k. Nodes with zero degree in the view have zero probability.
    pub fn build_negative_alias(&self, k: ViewId) -> Result<AliasTable, GraphError> {
        let view = self.views.get(k.0).ok_or(GraphError::ViewOutOfRange(k.0))?;
        let masses: Vec<f64> = view.total_degree.iter().map(|d| d.powf(0.75)).collect();
        AliasTable::new(&masses)
    }

    pub fn write_vocab(&self, path: &Path) -> Result<(), GraphError> {
        let file = File::create(path).map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut out = BufWriter::new(file);
        self.vocab.write(&mut out).map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Negative-node sampler: one alias table per view over the
/// degree^{3/4} distribution.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    per_view: Vec<AliasTable>,
}

impl NegativeSampler {
    pub fn build(graph: &MultiViewGraph) -> Result<NegativeSampler, GraphError> {
        let per_view = graph
            .views()
            .map(|(k, _)| graph.build_negative_alias(k))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(NegativeSampler { per_view })
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, k: ViewId, rng: &mut R) -> NodeId {
        NodeId(self.per_view[k.0].sample(rng))
    }

    pub fn table(&self, k: ViewId) -> &AliasTable {
        &self.per_view[k.0]
    }
}

/// Accumulates views (from files or in-memory edge lists) over one shared
/// vocabulary, then finalizes degrees and CSR structure.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    vocab: Vocab,
    names: Vec<String>,
    raw: Vec<Vec<RawEdge>>,
}

impl GraphBuilder {
    pub fn new() -> GraphBuilder {
        GraphBuilder::default()
    }

    pub fn vocab_mut(&mut self) -> &mut Vocab {
        &mut self.vocab
    }

    pub fn add_view_file(
        &mut self,
        name: &str,
        path: &Path,
        directedness: Directedness,
    ) -> Result<ViewId, GraphError> {
        let edges = load_view(path, directedness, &mut self.vocab)?;
        self.names.push(name.to_string());
        self.raw.push(edges);
        Ok(ViewId(self.raw.len() - 1))
    }

    /// Add a view from directed edges already expressed over this builder's
    /// vocabulary.
    pub fn add_view_edges(&mut self, name: &str, edges: Vec<RawEdge>) -> Result<ViewId, GraphError> {
        if edges.is_empty() {
            return Err(GraphError::EmptyView(self.raw.len()));
        }
        self.names.push(name.to_string());
        self.raw.push(edges);
        Ok(ViewId(self.raw.len() - 1))
    }

    pub fn build(self) -> Result<MultiViewGraph, GraphError> {
        if self.raw.is_empty() {
            return Err(GraphError::NoViews);
        }
        let n = self.vocab.len();
        for (k, edges) in self.raw.iter().enumerate() {
            if edges.is_empty() {
                return Err(GraphError::EmptyView(k));
            }
        }
        let views = self.raw.into_iter().map(|r| View::from_raw(n, r)).collect();
        Ok(MultiViewGraph {
            vocab: self.vocab,
            names: self.names,
            views,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn view_file(contents: &str) -> tempfile::NamedTempFile {
        use std::io::Write as _;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn graph_from(contents: &str, directedness: Directedness) -> MultiViewGraph {
        let f = view_file(contents);
        let mut b = GraphBuilder::new();
        b.add_view_file("v", f.path(), directedness).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn parses_directed_with_default_weight() {
        let g = graph_from("a b 2.0\nb c\n", Directedness::Directed);
        let v = g.view(ViewId(0));
        assert_eq!(v.edge_count(), 2);
        let a = g.vocab().get("a").unwrap();
        let b = g.vocab().get("b").unwrap();
        let c = g.vocab().get("c").unwrap();
        assert_eq!(v.weight_between(a, b), Some(2.0));
        assert_eq!(v.weight_between(b, c), Some(1.0));
        assert_eq!(v.weight_between(b, a), None);
    }

    #[test]
    fn undirected_edges_are_mirrored() {
        let g = graph_from("a b 1\n", Directedness::Undirected);
        let v = g.view(ViewId(0));
        let a = g.vocab().get("a").unwrap();
        let b = g.vocab().get("b").unwrap();
        assert_eq!(v.edge_count(), 2);
        assert_eq!(v.weight_between(a, b), Some(1.0));
        assert_eq!(v.weight_between(b, a), Some(1.0));
    }

    #[test]
    fn rejects_non_positive_weight_with_line_number() {
        let f = view_file("a b -1\n");
        let mut vocab = Vocab::new();
        let err = load_view(f.path(), Directedness::Directed, &mut vocab).unwrap_err();
        match err {
            GraphError::NonPositiveWeight { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_line() {
        let f = view_file("# comment\na b 1.0 extra\n");
        let mut vocab = Vocab::new();
        let err = load_view(f.path(), Directedness::Directed, &mut vocab).unwrap_err();
        match err {
            GraphError::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_file() {
        let f = view_file("# only a comment\n\n");
        let mut vocab = Vocab::new();
        assert!(matches!(
            load_view(f.path(), Directedness::Directed, &mut vocab),
            Err(GraphError::EmptyViewFile { .. })
        ));
    }

    #[test]
    fn self_loops_are_dropped() {
        let g = graph_from("a a 3\na b 1\n", Directedness::Directed);
        assert_eq!(g.view(ViewId(0)).edge_count(), 1);
    }

    #[test]
    fn duplicate_edges_merge_by_summing() {
        let g = graph_from("a b 1\na b 2.5\n", Directedness::Directed);
        let a = g.vocab().get("a").unwrap();
        let b = g.vocab().get("b").unwrap();
        assert_eq!(g.view(ViewId(0)).weight_between(a, b), Some(3.5));
        assert_eq!(g.view(ViewId(0)).edge_count(), 1);
    }

    #[test]
    fn degrees_are_exact_sums() {
        let g = graph_from("a b 2\na c 3\nc a 1\n", Directedness::Directed);
        let v = g.view(ViewId(0));
        let a = g.vocab().get("a").unwrap();
        let b = g.vocab().get("b").unwrap();
        let c = g.vocab().get("c").unwrap();
        assert_eq!(v.out_degree(a), 5.0);
        assert_eq!(v.out_degree(b), 0.0);
        assert_eq!(v.out_degree(c), 1.0);
        // in+out mass for negative sampling
        assert_eq!(v.total_degree(a), 6.0);
        assert_eq!(v.total_degree(b), 2.0);
        assert_eq!(v.total_degree(c), 4.0);
    }

    #[test]
    fn empirical_neighbor_prob_cases() {
        let g = graph_from("i a 1\ni b 3\nx y 1\n", Directedness::Directed);
        let i = g.vocab().get("i").unwrap();
        let a = g.vocab().get("a").unwrap();
        let b = g.vocab().get("b").unwrap();
        let y = g.vocab().get("y").unwrap();
        let x = g.vocab().get("x").unwrap();
        let k = ViewId(0);
        assert_eq!(g.empirical_neighbor_prob(i, a, k).unwrap(), 0.25);
        assert_eq!(g.empirical_neighbor_prob(i, b, k).unwrap(), 0.75);
        // single out-edge
        assert_eq!(g.empirical_neighbor_prob(x, y, k).unwrap(), 1.0);
        // absent edge
        assert_eq!(g.empirical_neighbor_prob(i, y, k).unwrap(), 0.0);
        // no out-edges
        assert!(matches!(
            g.empirical_neighbor_prob(a, i, k),
            Err(GraphError::NoOutEdges { .. })
        ));
    }

    #[test]
    fn neighbor_probs_sum_to_one() {
        let g = graph_from(
            "a b 2\na c 0.5\na d 7\nb c 1\n",
            Directedness::Undirected,
        );
        let v = g.view(ViewId(0));
        for i in 0..g.node_count() {
            let node = NodeId(i);
            if v.out_degree(node) > 0.0 {
                let total: f64 = v
                    .neighbors(node)
                    .map(|(j, _)| g.empirical_neighbor_prob(node, j, ViewId(0)).unwrap())
                    .sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn negative_sampler_mass_is_degree_three_quarters() {
        // Totals per node: x=16, y=81, z=97. The 3/4-power masses of the
        // first two are exactly 8 and 27.
        let mut b = GraphBuilder::new();
        let x = b.vocab_mut().intern("x");
        let y = b.vocab_mut().intern("y");
        let z = b.vocab_mut().intern("z");
        b.add_view_edges(
            "v",
            vec![
                RawEdge { src: x, dst: z, weight: 16.0 },
                RawEdge { src: y, dst: z, weight: 81.0 },
            ],
        )
        .unwrap();
        let g = b.build().unwrap();
        let table = g.build_negative_alias(ViewId(0)).unwrap();
        let m: Vec<f64> = vec![16f64.powf(0.75), 81f64.powf(0.75), 97f64.powf(0.75)];
        let total: f64 = m.iter().sum();
        assert!((m[0] - 8.0).abs() < 1e-9);
        assert!((m[1] - 27.0).abs() < 1e-9);
        for (i, mass) in m.iter().enumerate() {
            assert!((table.probability(i) - mass / total).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_degree_nodes_never_drawn_as_negatives() {
        let mut b = GraphBuilder::new();
        let a = b.vocab_mut().intern("a");
        let _isolated = b.vocab_mut().intern("iso");
        let c = b.vocab_mut().intern("c");
        b.add_view_edges(
            "v",
            vec![RawEdge { src: a, dst: c, weight: 4.0 }],
        )
        .unwrap();
        let g = b.build().unwrap();
        let sampler = NegativeSampler::build(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            assert_ne!(sampler.draw(ViewId(0), &mut rng), NodeId(1));
        }
    }

    #[test]
    fn vocab_dump_format() {
        let g = graph_from("a b 1\n", Directedness::Directed);
        let mut out = Vec::new();
        g.vocab().write(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0 a\n1 b\n");
    }

    proptest::proptest! {
        /// External -> internal -> external round-trips identically.
        #[test]
        fn vocab_round_trip(tokens in proptest::collection::vec("[a-zA-Z0-9_]{1,12}", 1..50)) {
            let mut vocab = Vocab::new();
            for t in &tokens {
                vocab.intern(t);
            }
            for t in &tokens {
                let id = vocab.get(t).unwrap();
                proptest::prop_assert_eq!(vocab.token(id), t.as_str());
            }
        }
    }
}
