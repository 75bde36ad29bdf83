//! Attributed graph data model.
//!
//! A [`Graph`] holds `n` nodes with categorical classes in `0..a` and an
//! undirected edge label for every unordered node pair, with classes in
//! `0..b`. Edge class `0` means "no edge"; the diagonal is always class `0`.
//! Labels are stored densely, which is the same information as the one-hot
//! `X` (n×a) and `E` (n×n×b) tensors; [`Graph::node_onehot`] and
//! [`Graph::edge_onehot`] materialize those when a network needs them.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance used when checking that probability rows sum to one.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Graph {
    a: usize,
    b: usize,
    nodes: Vec<usize>,
    edges: Vec<usize>,
}

impl Graph {
    /// Graph with `n` nodes of class 0 and no edges.
    pub fn empty(n: usize, a: usize, b: usize) -> Result<Self> {
        if a == 0 || b == 0 {
            return Err(Error::InvalidGraph(format!(
                "class counts must be positive (a={a}, b={b})"
            )));
        }
        Ok(Graph {
            a,
            b,
            nodes: vec![0; n],
            edges: vec![0; n * n],
        })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Number of node classes.
    pub fn a(&self) -> usize {
        self.a
    }

    /// Number of edge classes, including "no edge".
    pub fn b(&self) -> usize {
        self.b
    }

    pub fn node(&self, i: usize) -> usize {
        self.nodes[i]
    }

    pub fn edge(&self, i: usize, j: usize) -> usize {
        self.edges[i * self.n() + j]
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Row-major n×n edge labels.
    pub fn edge_labels(&self) -> &[usize] {
        &self.edges
    }

    pub fn set_node(&mut self, i: usize, class: usize) -> Result<()> {
        if class >= self.a {
            return Err(Error::InvalidGraph(format!(
                "node class {class} out of range (a={})",
                self.a
            )));
        }
        self.nodes[i] = class;
        Ok(())
    }

    /// Sets the label of the unordered pair `{i, j}`.
    pub fn set_edge(&mut self, i: usize, j: usize, class: usize) -> Result<()> {
        if class >= self.b {
            return Err(Error::InvalidGraph(format!(
                "edge class {class} out of range (b={})",
                self.b
            )));
        }
        if i == j {
            if class != 0 {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            return Ok(());
        }
        let n = self.n();
        self.edges[i * n + j] = class;
        self.edges[j * n + i] = class;
        Ok(())
    }

    /// Unordered pairs `(i, j)` with `i < j` whose class is not "no edge".
    pub fn edge_list(&self) -> Vec<(usize, usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let c = self.edges[i * n + j];
                if c != 0 {
                    out.push((i, j, c));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edge_list().len()
    }

    /// n×a one-hot matrix, row-major.
    pub fn node_onehot(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n() * self.a];
        for (i, &c) in self.nodes.iter().enumerate() {
            x[i * self.a + c] = 1.0;
        }
        x
    }

    /// n×n×b one-hot tensor, row-major.
    pub fn edge_onehot(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.edges.len() * self.b];
        for (k, &c) in self.edges.iter().enumerate() {
            e[k * self.b + c] = 1.0;
        }
        e
    }

    /// Binarized adjacency: any edge class other than 0 counts as an edge.
    pub fn adjacency(&self) -> Adjacency {
        Adjacency {
            n: self.n(),
            bits: self.edges.iter().map(|&c| u8::from(c != 0)).collect(),
        }
    }

    /// Induced subgraph on `0..k`.
    pub fn prefix(&self, k: usize) -> Graph {
        let n = self.n();
        let mut edges = vec![0; k * k];
        for i in 0..k {
            for j in 0..k {
                edges[i * k + j] = self.edges[i * n + j];
            }
        }
        Graph {
            a: self.a,
            b: self.b,
            nodes: self.nodes[..k].to_vec(),
            edges,
        }
    }
}

/// Dense 0/1 adjacency matrix of a simple undirected graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    bits: Vec<u8>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency {
            n,
            bits: vec![0; n * n],
        }
    }

    /// Builds a symmetric adjacency from an edge list; duplicates are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = Adjacency::empty(n);
        for &(i, j) in edges {
            adj.bits[i * n + j] = 1;
            adj.bits[j * n + i] = 1;
        }
        adj
    }

    /// Takes a raw row-major matrix without checking it.
    pub fn from_raw(n: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != n * n {
            return Err(Error::Shape {
                op: "adjacency",
                left: vec![n, n],
                right: vec![bits.len()],
            });
        }
        Ok(Adjacency { n, bits })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j] != 0
    }

    pub fn raw(&self) -> &[u8] {
        &self.bits
    }

    pub fn degree(&self, i: usize) -> usize {
        self.bits[i * self.n..(i + 1) * self.n]
            .iter()
            .map(|&b| b as usize)
            .sum()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.has(i, j))
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum::<usize>() / 2
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self.has(i, j) == self.has(j, i)))
    }

    pub fn has_self_loop(&self) -> bool {
        (0..self.n).any(|i| self.has(i, i))
    }

    /// Component id per node, numbered by first appearance.
    pub fn components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..self.n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for v in self.neighbors(u) {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn component_count(&self) -> usize {
        self.components().into_iter().max().map_or(0, |c| c + 1)
    }

    pub fn is_connected(&self) -> bool {
        self.n > 0 && self.component_count() == 1
    }
}

/// Graph-shaped tensor of probability vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftGraph {
    pub n: usize,
    pub a: usize,
    pub b: usize,
    /// n×a, row-major.
    pub x: Vec<f64>,
    /// n×n×b, row-major.
    pub e: Vec<f64>,
}

impl SoftGraph {
    pub fn from_graph(g: &Graph) -> Self {
        SoftGraph {
            n: g.n(),
            a: g.a(),
            b: g.b(),
            x: g.node_onehot(),
            e: g.edge_onehot(),
        }
    }

    pub fn node_probs(&self, i: usize) -> &[f64] {
        &self.x[i * self.a..(i + 1) * self.a]
    }

    pub fn edge_probs(&self, i: usize, j: usize) -> &[f64] {
        let k = i * self.n + j;
        &self.e[k * self.b..(k + 1) * self.b]
    }

    pub fn node_probs_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.x[i * self.a..(i + 1) * self.a]
    }

    pub fn edge_probs_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let k = i * self.n + j;
        &mut self.e[k * self.b..(k + 1) * self.b]
    }

    /// Checks nonnegativity, normalization and edge symmetry.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.x.len() != self.n * self.a || self.e.len() != self.n * self.n * self.b {
            return Err(Error::Shape {
                op: "soft graph",
                left: vec![self.n, self.a, self.b],
                right: vec![self.x.len(), self.e.len()],
            });
        }
        let check = |row: &[f64], what: String| -> Result<()> {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > tol {
                return Err(Error::InvalidGraph(format!(
                    "{what} is not a probability vector: {row:?}"
                )));
            }
            Ok(())
        };
        for i in 0..self.n {
            check(self.node_probs(i), format!("node row {i}"))?;
            for j in 0..self.n {
                check(self.edge_probs(i, j), format!("edge slice ({i},{j})"))?;
                if self.edge_probs(i, j) != self.edge_probs(j, i) {
                    return Err(Error::InvalidGraph(format!(
                        "edge slices ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Empirical node/edge type marginals and node-count distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub node_marginals: Vec<f64>,
    pub edge_marginals: Vec<f64>,
    pub node_counts: BTreeMap<usize, f64>,
}

impl DatasetStats {
    pub fn a(&self) -> usize {
        self.node_marginals.len()
    }

    pub fn b(&self) -> usize {
        self.edge_marginals.len()
    }

    pub fn sample_node_count<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let sizes: Vec<usize> = self.node_counts.keys().copied().collect();
        let probs: Vec<f64> = self.node_counts.values().copied().collect();
        sizes[sample_categorical(&probs, rng)]
    }

    /// `ln p(n)`, or `-inf` for sizes never seen in the data.
    pub fn log_prob_node_count(&self, n: usize) -> f64 {
        self.node_counts
            .get(&n)
            .map_or(f64::NEG_INFINITY, |p| p.ln())
    }
}

/// Draws an index from a (possibly unnormalized within rounding) probability
/// vector. Zero-probability entries are never returned.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = k;
            if u < acc {
                return k;
            }
        }
    }
    last_positive
}

/// Builds a one-hot graph from class labels.
///
/// `labels_e` is the row-major n×n label matrix; it must be symmetric with a
/// zero diagonal.
pub fn encode_graph(labels_x: &[usize], labels_e: &[usize], a: usize, b: usize) -> Result<Graph> {
    let n = labels_x.len();
    if labels_e.len() != n * n {
        return Err(Error::Shape {
            op: "encode_graph",
            left: vec![n, n],
            right: vec![labels_e.len()],
        });
    }
    let mut g = Graph::empty(n, a, b)?;
    for (i, &c) in labels_x.iter().enumerate() {
        g.set_node(i, c)?;
    }
    for i in 0..n {
        if labels_e[i * n + i] != 0 {
            return Err(Error::InvalidGraph(format!(
                "diagonal label at node {i} must be 0"
            )));
        }
        for j in i + 1..n {
            let (c, c_t) = (labels_e[i * n + j], labels_e[j * n + i]);
            if c != c_t {
                return Err(Error::InvalidGraph(format!(
                    "asymmetric edge labels at ({i},{j}): {c} vs {c_t}"
                )));
            }
            g.set_edge(i, j, c)?;
        }
    }
    Ok(g)
}

/// Samples a hard graph from a soft one. Edges are drawn for `i < j` and
/// mirrored; the diagonal stays "no edge".
pub fn collapse<R: Rng + ?Sized>(soft: &SoftGraph, rng: &mut R) -> Result<Graph> {
    soft.validate(NORMALIZATION_TOL)?;
    let n = soft.n;
    let mut g = Graph::empty(n, soft.a, soft.b)?;
    for i in 0..n {
        g.nodes[i] = sample_categorical(soft.node_probs(i), rng);
    }
    for i in 0..n {
        for j in i + 1..n {
            let c = sample_categorical(soft.edge_probs(i, j), rng);
            g.edges[i * n + j] = c;
            g.edges[j * n + i] = c;
        }
    }
    Ok(g)
}

/// A permutation of node indices: node `k` moves to position `perm[k]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::arg(format!("not a permutation: {perm:?}")));
            }
            seen[p] = true;
        }
        Ok(Permutation(perm))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        use rand::seq::SliceRandom;
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(rng);
        Permutation(p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (k, &p) in self.0.iter().enumerate() {
            inv[p] = k;
        }
        Permutation(inv)
    }

    /// Moves row `k` (of width `width`) to row `perm[k]`.
    pub fn permute_rows<T: Copy + Default>(&self, data: &[T], width: usize) -> Vec<T> {
        let mut out = vec![T::default(); data.len()];
        for (k, &p) in self.0.iter().enumerate() {
            out[p * width..(p + 1) * width].copy_from_slice(&data[k * width..(k + 1) * width]);
        }
        out
    }

    /// Relabels both node axes of a row-major n×n×`width` tensor.
    pub fn permute_pairs<T: Copy + Default>(&self, data: &[T], width: usize) -> Vec<T> {
        let n = self.0.len();
        let mut out = vec![T::default(); data.len()];
        for i in 0..n {
            for j in 0..n {
                let src = (i * n + j) * width;
                let dst = (self.0[i] * n + self.0[j]) * width;
                out[dst..dst + width].copy_from_slice(&data[src..src + width]);
            }
        }
        out
    }
}

pub fn permute(g: &Graph, perm: &Permutation) -> Result<Graph> {
    if perm.len() != g.n() {
        return Err(Error::arg(format!(
            "permutation of length {} applied to graph with {} nodes",
            perm.len(),
            g.n()
        )));
    }
    Ok(Graph {
        a: g.a,
        b: g.b,
        nodes: perm.permute_rows(&g.nodes, 1),
        edges: perm.permute_pairs(&g.edges, 1),
    })
}

pub fn permute_soft(g: &SoftGraph, perm: &Permutation) -> SoftGraph {
    SoftGraph {
        n: g.n,
        a: g.a,
        b: g.b,
        x: perm.permute_rows(&g.x, g.a),
        e: perm.permute_pairs(&g.e, g.b),
    }
}

/// Pools node and edge class frequencies over a dataset.
///
/// Edge frequencies count each unordered pair once. A dataset without any
/// node pair gets the one-hot "no edge" marginal.
pub fn compute_stats(graphs: &[Graph]) -> Result<DatasetStats> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::arg("cannot compute statistics of an empty dataset"))?;
    let (a, b) = (first.a(), first.b());
    let mut node_counts = vec![0u64; a];
    let mut edge_counts = vec![0u64; b];
    let mut sizes: BTreeMap<usize, u64> = BTreeMap::new();
    for g in graphs {
        if g.a() != a || g.b() != b {
            return Err(Error::arg(format!(
                "inconsistent class counts: ({a},{b}) vs ({},{})",
                g.a(),
                g.b()
            )));
        }
        for &c in g.nodes() {
            node_counts[c] += 1;
        }
        let n = g.n();
        for i in 0..n {
            for j in i + 1..n {
                edge_counts[g.edge(i, j)] += 1;
            }
        }
        *sizes.entry(n).or_default() += 1;
    }
    let normalize = |counts: &[u64]| -> Vec<f64> {
        let total: u64 = counts.iter().sum();
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    };
    let node_total: u64 = node_counts.iter().sum();
    let node_marginals = if node_total == 0 {
        let mut m = vec![0.0; a];
        m[0] = 1.0;
        m
    } else {
        normalize(&node_counts)
    };
    let edge_marginals = if edge_counts.iter().sum::<u64>() == 0 {
        let mut m = vec![0.0; b];
        m[0] = 1.0;
        m
    } else {
        normalize(&edge_counts)
    };
    let count = graphs.len() as f64;
    Ok(DatasetStats {
        node_marginals,
        edge_marginals,
        node_counts: sizes
            .into_iter()
            .map(|(n, c)| (n, c as f64 / count))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triangle() -> Graph {
        encode_graph(&[0, 0, 0], &[0, 1, 1, 1, 0, 1, 1, 1, 0], 1, 2).unwrap()
    }

    fn check_invariants(g: &Graph) {
        let x = g.node_onehot();
        for i in 0..g.n() {
            assert_eq!(x[i * g.a()..(i + 1) * g.a()].iter().sum::<f64>(), 1.0);
        }
        let e = g.edge_onehot();
        let n = g.n();
        for i in 0..n {
            for j in 0..n {
                let k = (i * n + j) * g.b();
                assert_eq!(e[k..k + g.b()].iter().sum::<f64>(), 1.0);
                assert_eq!(g.edge(i, j), g.edge(j, i));
            }
            assert_eq!(g.edge(i, i), 0);
        }
    }

    #[test]
    fn single_node() {
        let g = encode_graph(&[1], &[0], 2, 2).unwrap();
        assert_eq!(g.node_onehot(), vec![0.0, 1.0]);
        assert_eq!(g.edge_onehot(), vec![1.0, 0.0]);
    }

    #[test]
    fn two_nodes_symmetric() {
        let g = encode_graph(&[0, 0], &[0, 1, 1, 0], 1, 2).unwrap();
        let e = g.edge_onehot();
        assert_eq!(&e[2..4], &[0.0, 1.0]);
        assert_eq!(&e[4..6], &[0.0, 1.0]);
    }

    #[test]
    fn triangle_invariants() {
        let g = triangle();
        check_invariants(&g);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.edge(i, j), usize::from(i != j));
            }
        }
    }

    #[test]
    fn encode_rejects_bad_input() {
        assert!(encode_graph(&[0, 0], &[0, 1, 0, 0], 1, 2).is_err());
        assert!(encode_graph(&[2], &[0], 2, 2).is_err());
        assert!(encode_graph(&[0, 0], &[0, 2, 2, 0], 1, 2).is_err());
        assert!(encode_graph(&[0], &[1], 1, 2).is_err());
    }

    #[test]
    fn collapse_one_hot_is_identity() {
        let g = triangle();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(collapse(&SoftGraph::from_graph(&g), &mut rng).unwrap(), g);
    }

    #[test]
    fn collapse_frequency() {
        let soft = SoftGraph {
            n: 1,
            a: 2,
            b: 2,
            x: vec![0.5, 0.5],
            e: vec![1.0, 0.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hits = (0..10_000)
            .filter(|_| collapse(&soft, &mut rng).unwrap().node(0) == 1)
            .count();
        assert!((hits as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn collapse_mirrors_edges_and_rejects_unnormalized() {
        let n = 4;
        let mut soft = SoftGraph::from_graph(&Graph::empty(n, 1, 3).unwrap());
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    soft.edge_probs_mut(i, j).copy_from_slice(&[0.2, 0.3, 0.5]);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            check_invariants(&collapse(&soft, &mut rng).unwrap());
        }
        soft.x[0] = 0.5;
        assert!(collapse(&soft, &mut rng).is_err());
    }

    #[test]
    fn permutation_basics() {
        let g = encode_graph(&[0, 1], &[0, 1, 1, 0], 2, 2).unwrap();
        assert_eq!(permute(&g, &Permutation::identity(2)).unwrap(), g);
        let swap = Permutation::new(vec![1, 0]).unwrap();
        let once = permute(&g, &swap).unwrap();
        assert_eq!(once.nodes(), &[1, 0]);
        assert_eq!(permute(&once, &swap).unwrap(), g);
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
    }

    #[test]
    fn rotated_path_keeps_degrees() {
        let g = encode_graph(&[0, 0, 0], &[0, 1, 0, 1, 0, 1, 0, 1, 0], 1, 2).unwrap();
        let rot = Permutation::new(vec![1, 2, 0]).unwrap();
        let h = permute(&g, &rot).unwrap();
        let mut d1 = g.adjacency().degrees();
        let mut d2 = h.adjacency().degrees();
        d1.sort();
        d2.sort();
        assert_eq!(d1, d2);
        assert_eq!(h.adjacency().degree(2), 2);
    }

    #[test]
    fn stats_examples() {
        let s = compute_stats(&[triangle()]).unwrap();
        assert_eq!(s.node_marginals, vec![1.0]);
        assert_eq!(s.edge_marginals, vec![0.0, 1.0]);

        let lone = encode_graph(&[0], &[0], 1, 2).unwrap();
        let s = compute_stats(&[lone]).unwrap();
        assert_eq!(s.edge_marginals, vec![1.0, 0.0]);

        let g2 = encode_graph(&[0, 0], &[0, 1, 1, 0], 1, 2).unwrap();
        let s = compute_stats(&[g2, triangle()]).unwrap();
        assert_eq!(s.node_counts.get(&2), Some(&0.5));
        assert_eq!(s.node_counts.get(&3), Some(&0.5));
        assert!(compute_stats(&[]).is_err());
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (1usize..7, 1usize..4, 1usize..4).prop_flat_map(|(n, a, b)| {
            (
                proptest::collection::vec(0..a, n),
                proptest::collection::vec(0..b, n * (n - 1) / 2),
            )
                .prop_map(move |(xs, es)| {
                    let mut g = Graph::empty(n, a, b).unwrap();
                    for (i, &c) in xs.iter().enumerate() {
                        g.set_node(i, c).unwrap();
                    }
                    let mut k = 0;
                    for i in 0..n {
                        for j in i + 1..n {
                            g.set_edge(i, j, es[k]).unwrap();
                            k += 1;
                        }
                    }
                    g
                })
        })
    }

    proptest! {
        #[test]
        fn permute_roundtrip(g in arb_graph(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = Permutation::random(g.n(), &mut rng);
            let back = permute(&permute(&g, &p).unwrap(), &p.inverse()).unwrap();
            prop_assert_eq!(back, g);
        }

        #[test]
        fn stats_permutation_invariant(g in arb_graph(), seed in any::<u64>()) {
            let h = g.prefix(g.n().div_ceil(2));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gp = permute(&g, &Permutation::random(g.n(), &mut rng)).unwrap();
            prop_assert_eq!(
                compute_stats(&[g.clone(), h.clone()]).unwrap(),
                compute_stats(&[gp, h]).unwrap()
            );
        }
    }
}
