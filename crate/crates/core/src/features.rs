//! Auxiliary features appended to the denoiser input.
//!
//! Column order of [`FeatureBundle::node_feats`], by enabled family:
//! cycles `[X3, X4, X5]`, spectral `[largest component, v1, v2]`,
//! molecular `[valency]`.
//!
//! Column order of [`FeatureBundle::graph_feats`]: cycles `[y3, y4, y5, y6]`,
//! spectral `[components, λ1..λ5]`, molecular `[weight]`, then `t/T`.
//!
//! All structural features use the binarized adjacency (any class other
//! than 0 is an edge).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, Graph};

pub const NUM_EIGENVALUES: usize = 5;
pub const NUM_EIGENVECTORS: usize = 2;
pub const EIGEN_ZERO_TOL: f64 = 1e-6;

/// Serialized as its [`fmt::Display`] string, e.g. `"cycles+spectral"`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureFlags {
    pub cycles: bool,
    pub spectral: bool,
    pub molecular: bool,
}

impl FeatureFlags {
    pub const NONE: FeatureFlags = FeatureFlags {
        cycles: false,
        spectral: false,
        molecular: false,
    };
    pub const CYCLES: FeatureFlags = FeatureFlags {
        cycles: true,
        spectral: false,
        molecular: false,
    };
    pub const ALL: FeatureFlags = FeatureFlags {
        cycles: true,
        spectral: true,
        molecular: true,
    };

    pub fn node_dim(&self) -> usize {
        3 * self.cycles as usize
            + (1 + NUM_EIGENVECTORS) * self.spectral as usize
            + self.molecular as usize
    }

    pub fn graph_dim(&self) -> usize {
        4 * self.cycles as usize
            + (1 + NUM_EIGENVALUES) * self.spectral as usize
            + self.molecular as usize
            + 1
    }
}

impl FromStr for FeatureFlags {
    type Err = Error;

    /// Accepts `none`, `all`, or a `+`/`,` separated list of
    /// `cycles`, `spectral`, `molecular`.
    fn from_str(s: &str) -> Result<Self> {
        let mut flags = FeatureFlags::NONE;
        for part in s.split(['+', ',']).map(str::trim) {
            match part {
                "none" => {}
                "all" => flags = FeatureFlags::ALL,
                "cycles" => flags.cycles = true,
                "spectral" => flags.spectral = true,
                "molecular" => flags.molecular = true,
                other => return Err(Error::arg(format!("unknown feature family '{other}'"))),
            }
        }
        Ok(flags)
    }
}

impl TryFrom<String> for FeatureFlags {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureFlags> for String {
    fn from(f: FeatureFlags) -> String {
        f.to_string()
    }
}

impl fmt::Display for FeatureFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.cycles {
            parts.push("cycles");
        }
        if self.spectral {
            parts.push("spectral");
        }
        if self.molecular {
            parts.push("molecular");
        }
        if parts.is_empty() {
            write!(f, "none")
        } else {
            write!(f, "{}", parts.join("+"))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBundle {
    pub n: usize,
    pub node_dim: usize,
    /// Row-major n×node_dim.
    pub node_feats: Vec<f64>,
    pub graph_feats: Vec<f64>,
}

impl FeatureBundle {
    pub fn node_row(&self, i: usize) -> &[f64] {
        &self.node_feats[i * self.node_dim..(i + 1) * self.node_dim]
    }
}

/// Cycle statistics, kept in integers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleCounts {
    /// Per node: number of 3-, 4- and 5-cycles through the node.
    pub node: Vec<[i64; 3]>,
    /// Number of 3-, 4-, 5- and 6-cycles.
    pub graph: [i64; 4],
}

fn check_simple(adj: &Adjacency) -> Result<()> {
    if !adj.is_symmetric() {
        return Err(Error::InvalidGraph("adjacency is not symmetric".into()));
    }
    if adj.has_self_loop() {
        return Err(Error::InvalidGraph("adjacency has a self-loop".into()));
    }
    Ok(())
}

fn matmul_i64(a: &[i64], b: &[i64], n: usize) -> Vec<i64> {
    let mut out = vec![0i64; n * n];
    for i in 0..n {
        for k in 0..n {
            let v = a[i * n + k];
            if v == 0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += v * b[k * n + j];
            }
        }
    }
    out
}

fn exact_div(num: i64, den: i64, what: &str) -> Result<i64> {
    if num % den != 0 {
        return Err(Error::Numeric(format!("{what}: {num} not divisible by {den}")));
    }
    Ok(num / den)
}

/// Closed-form cycle counts from traces and diagonals of powers of `A`.
pub fn cycle_features(adj: &Adjacency) -> Result<CycleCounts> {
    check_simple(adj)?;
    let n = adj.n();
    let a: Vec<i64> = adj.raw().iter().map(|&b| b as i64).collect();
    let a2 = matmul_i64(&a, &a, n);
    let a3 = matmul_i64(&a2, &a, n);
    let a4 = matmul_i64(&a3, &a, n);
    let a5 = matmul_i64(&a4, &a, n);
    let a6 = matmul_i64(&a5, &a, n);
    let diag = |m: &[i64]| (0..n).map(|i| m[i * n + i]).collect::<Vec<i64>>();
    let (d, d3, d4, d5) = (diag(&a2), diag(&a3), diag(&a4), diag(&a5));
    let matvec = |v: &[i64]| {
        (0..n)
            .map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum::<i64>())
            .collect::<Vec<i64>>()
    };
    let a_d = matvec(&d);
    let a_d3 = matvec(&d3);
    // Σ_j A_ij (A²)_ij d_j counts closed 5-walks that run around a triangle
    // through i with a back-and-forth step at one of the other corners
    let spur: Vec<i64> = (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j] * a2[i * n + j] * d[j]).sum())
        .collect();

    let mut node = Vec::with_capacity(n);
    for i in 0..n {
        let x3 = exact_div(d3[i], 2, "X3")?;
        let x4 = exact_div(d4[i] - d[i] * (d[i] - 1) - a_d[i], 2, "X4")?;
        let x5 = exact_div(
            d5[i] - 2 * d3[i] * d[i] - a_d3[i] - 2 * spur[i] + 5 * d3[i],
            2,
            "X5",
        )?;
        node.push([x3, x4, x5]);
    }
    let sum_col = |k: usize| node.iter().map(|r| r[k]).sum::<i64>();
    let y3 = exact_div(sum_col(0), 3, "y3")?;
    let y4 = exact_div(sum_col(1), 4, "y4")?;
    let y5 = exact_div(sum_col(2), 5, "y5")?;

    let trace = |m: &[i64]| (0..n).map(|i| m[i * n + i]).sum::<i64>();
    let t1 = trace(&a6);
    let t2: i64 = d3.iter().map(|v| v * v).sum();
    let t3: i64 = (0..n * n).map(|k| a[k] * a2[k] * a2[k]).sum();
    let t4: i64 = d.iter().zip(&d4).map(|(x, y)| x * y).sum();
    let t5 = trace(&a4);
    let t6 = trace(&a3);
    let t7: i64 = d.iter().map(|v| v * v * v).sum();
    let t8: i64 = a3.iter().sum();
    let t9: i64 = d.iter().map(|v| v * v).sum();
    let t10 = trace(&a2);
    let c6 = t1 - 3 * t2 + 9 * t3 - 6 * t4 + 6 * t5 - 4 * t6 + 4 * t7 + 3 * t8 - 12 * t9 + 4 * t10;
    let y6 = exact_div(c6, 12, "y6")?;
    Ok(CycleCounts {
        node,
        graph: [y3, y4, y5, y6],
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFeatures {
    pub components: usize,
    /// Smallest nonzero Laplacian eigenvalues, zero-padded.
    pub eigenvalues: [f64; NUM_EIGENVALUES],
    /// 1 for nodes in a largest connected component.
    pub largest_component: Vec<f64>,
    /// Per node, entries of the first nonzero-eigenvalue eigenvectors.
    pub eigenvectors: Vec<[f64; NUM_EIGENVECTORS]>,
}

/// Flips `v` so its largest-magnitude entry (lowest index on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigen-features of the combinatorial Laplacian `L = D − A`.
pub fn spectral_features(adj: &Adjacency) -> Result<SpectralFeatures> {
    check_simple(adj)?;
    let n = adj.n();
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if adj.has(i, j) {
                lap[(i, j)] = -1.0;
                lap[(i, i)] += 1.0;
            }
        }
    }
    let eig = SymmetricEigen::try_new(lap, f64::EPSILON, 10_000 * n.max(1))
        .ok_or_else(|| Error::Numeric(format!("Laplacian eigendecomposition of {n} nodes did not converge")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lambda_max = order.last().map_or(0.0, |&k| eig.eigenvalues[k]);
    let tol = EIGEN_ZERO_TOL * lambda_max.max(1.0);
    let components = order.iter().filter(|&&k| eig.eigenvalues[k] < tol).count();
    let nonzero: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&k| eig.eigenvalues[k] >= tol)
        .collect();

    let mut eigenvalues = [0.0; NUM_EIGENVALUES];
    for (slot, &k) in eigenvalues.iter_mut().zip(&nonzero) {
        *slot = eig.eigenvalues[k];
    }
    let mut eigenvectors = vec![[0.0; NUM_EIGENVECTORS]; n];
    for (c, &k) in nonzero.iter().take(NUM_EIGENVECTORS).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        fix_sign(&mut v);
        for (row, x) in eigenvectors.iter_mut().zip(v) {
            row[c] = x;
        }
    }

    let comp = adj.components();
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in &comp {
        *sizes.entry(c).or_default() += 1;
    }
    let biggest = sizes.values().copied().max().unwrap_or(0);
    let largest_component = comp
        .iter()
        .map(|c| if sizes[c] == biggest { 1.0 } else { 0.0 })
        .collect();
    Ok(SpectralFeatures {
        components,
        eigenvalues,
        largest_component,
        eigenvectors,
    })
}

/// Atom symbols, valences and weights per node class, bond order per edge class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MolecularTable {
    pub symbols: Vec<String>,
    pub valences: Vec<u32>,
    pub weights: Vec<f64>,
    pub bond_orders: Vec<u32>,
}

impl Default for MolecularTable {
    /// C, N, O, F, H with bond classes none, single, double, triple.
    fn default() -> Self {
        MolecularTable {
            symbols: ["C", "N", "O", "F", "H"].map(String::from).to_vec(),
            valences: vec![4, 3, 2, 1, 1],
            weights: vec![12.0, 14.0, 16.0, 19.0, 1.0],
            bond_orders: vec![0, 1, 2, 3],
        }
    }
}

impl MolecularTable {
    /// Builds a table from symbol→valence and symbol→weight maps, keeping the
    /// order of `symbols`.
    pub fn from_maps(
        symbols: &[String],
        valences: &BTreeMap<String, u32>,
        weights: &BTreeMap<String, f64>,
        bond_orders: Vec<u32>,
    ) -> Result<Self> {
        let mut v = Vec::new();
        let mut w = Vec::new();
        for s in symbols {
            v.push(*valences
                .get(s)
                .ok_or_else(|| Error::Config(format!("no valence for atom '{s}'")))?);
            w.push(*weights
                .get(s)
                .ok_or_else(|| Error::Config(format!("no weight for atom '{s}'")))?);
        }
        Ok(MolecularTable {
            symbols: symbols.to_vec(),
            valences: v,
            weights: w,
            bond_orders,
        })
    }

    pub fn check(&self, g: &Graph) -> Result<()> {
        if g.a() > self.valences.len() || g.a() > self.weights.len() {
            return Err(Error::arg(format!(
                "molecular table maps {} atom classes, graph has {}",
                self.valences.len().min(self.weights.len()),
                g.a()
            )));
        }
        if g.b() > self.bond_orders.len() {
            return Err(Error::arg(format!(
                "molecular table maps {} bond classes, graph has {}",
                self.bond_orders.len(),
                g.b()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MolecularFeatures {
    pub valency: Vec<u32>,
    pub weight: f64,
}

pub fn molecular_features(g: &Graph, table: &MolecularTable) -> Result<MolecularFeatures> {
    table.check(g)?;
    let n = g.n();
    let valency = (0..n)
        .map(|i| (0..n).map(|j| table.bond_orders[g.edge(i, j)]).sum())
        .collect();
    let weight = g.nodes().iter().map(|&c| table.weights[c]).sum();
    Ok(MolecularFeatures { valency, weight })
}

/// Features of `g` at timestep `t` of `steps`.
pub fn assemble_features(
    g: &Graph,
    t: usize,
    steps: usize,
    flags: FeatureFlags,
    table: &MolecularTable,
) -> Result<FeatureBundle> {
    if steps == 0 || t > steps {
        return Err(Error::arg(format!("timestep {t} outside 0..={steps}")));
    }
    let n = g.n();
    let node_dim = flags.node_dim();
    let mut node_feats = vec![0.0; n * node_dim];
    let mut graph_feats = Vec::with_capacity(flags.graph_dim());
    let mut col = 0;
    let adj = g.adjacency();
    if flags.cycles {
        let c = cycle_features(&adj)?;
        for (i, row) in c.node.iter().enumerate() {
            for k in 0..3 {
                node_feats[i * node_dim + col + k] = row[k] as f64;
            }
        }
        col += 3;
        graph_feats.extend(c.graph.iter().map(|&y| y as f64));
    }
    if flags.spectral {
        let s = spectral_features(&adj)?;
        for i in 0..n {
            node_feats[i * node_dim + col] = s.largest_component[i];
            for k in 0..NUM_EIGENVECTORS {
                node_feats[i * node_dim + col + 1 + k] = s.eigenvectors[i][k];
            }
        }
        col += 1 + NUM_EIGENVECTORS;
        graph_feats.push(s.components as f64);
        graph_feats.extend(s.eigenvalues);
    }
    if flags.molecular {
        let m = molecular_features(g, table)?;
        for i in 0..n {
            node_feats[i * node_dim + col] = m.valency[i] as f64;
        }
        graph_feats.push(m.weight);
    }
    graph_feats.push(t as f64 / steps as f64);
    Ok(FeatureBundle {
        n,
        node_dim,
        node_feats,
        graph_feats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{encode_graph, permute, Permutation};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Simple cycles by length, counted by DFS from each cycle's minimum vertex.
    pub(crate) fn brute_cycles(adj: &Adjacency) -> (Vec<[i64; 3]>, [i64; 4]) {
        let n = adj.n();
        let mut node = vec![[0i64; 3]; n];
        let mut graph = [0i64; 4];
        fn dfs(
            adj: &Adjacency,
            start: usize,
            path: &mut Vec<usize>,
            node: &mut [[i64; 3]],
            graph: &mut [i64; 4],
        ) {
            let u = *path.last().unwrap();
            for v in adj.neighbors(u) {
                if v == start && path.len() >= 3 {
                    // each cycle is seen once per direction
                    let len = path.len();
                    if len <= 6 {
                        graph[len - 3] += 1;
                    }
                    if len <= 5 {
                        for &w in path.iter() {
                            node[w][len - 3] += 1;
                        }
                    }
                } else if v > start && !path.contains(&v) && path.len() < 6 {
                    path.push(v);
                    dfs(adj, start, path, node, graph);
                    path.pop();
                }
            }
        }
        for s in 0..n {
            let mut path = vec![s];
            dfs(adj, s, &mut path, &mut node, &mut graph);
        }
        for row in &mut node {
            for v in row.iter_mut() {
                *v /= 2;
            }
        }
        for v in &mut graph {
            *v /= 2;
        }
        (node, graph)
    }

    fn cycle_graph(n: usize) -> Adjacency {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Adjacency::from_edges(n, &edges)
    }

    fn complete(n: usize) -> Adjacency {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Adjacency::from_edges(n, &edges)
    }

    #[test]
    fn cycle_examples() {
        let c = cycle_features(&complete(3)).unwrap();
        assert_eq!(c.node, vec![[1, 0, 0]; 3]);
        assert_eq!(c.graph[0], 1);
        let c = cycle_features(&cycle_graph(4)).unwrap();
        assert_eq!(c.node, vec![[0, 1, 0]; 4]);
        assert_eq!(c.graph, [0, 1, 0, 0]);
        let c = cycle_features(&cycle_graph(6)).unwrap();
        assert_eq!(c.graph, [0, 0, 0, 1]);
        let c = cycle_features(&Adjacency::empty(5)).unwrap();
        assert_eq!(c.graph, [0; 4]);
        assert!(c.node.iter().all(|r| *r == [0; 3]));
        let bad = Adjacency::from_raw(2, vec![0, 1, 0, 0]).unwrap();
        assert!(cycle_features(&bad).is_err());
        let looped = Adjacency::from_raw(1, vec![1]).unwrap();
        assert!(cycle_features(&looped).is_err());
    }

    #[test]
    fn cycles_match_enumeration_on_connected_graphs_up_to_six_nodes() {
        for n in 1..=6usize {
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect();
            for mask in 0u64..(1u64 << pairs.len()) {
                let edges: Vec<_> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask >> k & 1 == 1)
                    .map(|(_, &p)| p)
                    .collect();
                let adj = Adjacency::from_edges(n, &edges);
                if !adj.is_connected() {
                    continue;
                }
                let c = cycle_features(&adj).unwrap();
                let (node, graph) = brute_cycles(&adj);
                assert_eq!(c.node, node, "n={n} mask={mask}");
                assert_eq!(c.graph, graph, "n={n} mask={mask}");
            }
        }
    }

    #[test]
    fn spectral_examples() {
        let two = Adjacency::from_edges(4, &[(0, 1), (2, 3)]);
        let s = spectral_features(&two).unwrap();
        assert_eq!(s.components, 2);
        assert_eq!(s.largest_component, vec![1.0; 4]);

        let p2 = Adjacency::from_edges(2, &[(0, 1)]);
        let s = spectral_features(&p2).unwrap();
        assert_eq!(s.components, 1);
        assert!((s.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert_eq!(&s.eigenvalues[1..], &[0.0; 4]);
        // eigenvector (1, -1)/√2 with a tie broken toward index 0
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.eigenvectors[0][0] - r).abs() < 1e-12);
        assert!((s.eigenvectors[1][0] + r).abs() < 1e-12);

        for n in 2..8 {
            let s = spectral_features(&complete(n)).unwrap();
            assert_eq!(s.components, 1);
            assert!((s.eigenvalues[0] - n as f64).abs() < 1e-9);
        }

        let lone = Adjacency::from_edges(4, &[(0, 1), (1, 2)]);
        let s = spectral_features(&lone).unwrap();
        assert_eq!(s.components, 2);
        assert_eq!(s.largest_component, vec![1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn molecular_examples() {
        let table = MolecularTable::default();
        // carbon bonded to four hydrogens
        let mut e = vec![0; 25];
        for h in 1..5 {
            e[h] = 1;
            e[h * 5] = 1;
        }
        let g = encode_graph(&[0, 4, 4, 4, 4], &e, 5, 4).unwrap();
        let m = molecular_features(&g, &table).unwrap();
        assert_eq!(m.valency, vec![4, 1, 1, 1, 1]);
        assert_eq!(m.weight, 16.0);

        let g = encode_graph(&[2], &[0], 5, 4).unwrap();
        assert_eq!(molecular_features(&g, &table).unwrap().valency, vec![0]);

        let g = encode_graph(&[0, 2], &[0, 2, 2, 0], 5, 4).unwrap();
        assert_eq!(molecular_features(&g, &table).unwrap().valency, vec![2, 2]);

        let wide = Graph::empty(1, 6, 4).unwrap();
        assert!(molecular_features(&wide, &table).is_err());
    }

    #[test]
    fn assemble_examples() {
        let table = MolecularTable::default();
        let g = encode_graph(&[0, 0, 0], &[0, 1, 1, 1, 0, 1, 1, 1, 0], 1, 2).unwrap();
        let b = assemble_features(&g, 3, 10, FeatureFlags::NONE, &table).unwrap();
        assert_eq!(b.graph_feats, vec![0.3]);
        assert_eq!(b.node_dim, 0);

        let flags = FeatureFlags {
            cycles: true,
            spectral: true,
            molecular: false,
        };
        let b = assemble_features(&g, 0, 10, flags, &table).unwrap();
        assert_eq!(b.graph_feats.len(), flags.graph_dim());
        assert_eq!(b.graph_feats[0], 1.0);
        assert_eq!(b.graph_feats[4], 1.0);
        assert_eq!(b.node_row(1)[..4], [1.0, 0.0, 0.0, 1.0]);
        assert!(assemble_features(&g, 11, 10, flags, &table).is_err());
    }

    #[test]
    fn flags_parse() {
        assert_eq!("none".parse::<FeatureFlags>().unwrap(), FeatureFlags::NONE);
        assert_eq!("all".parse::<FeatureFlags>().unwrap(), FeatureFlags::ALL);
        assert_eq!("cycles".parse::<FeatureFlags>().unwrap(), FeatureFlags::CYCLES);
        let f: FeatureFlags = "cycles+molecular".parse().unwrap();
        assert!(f.cycles && f.molecular && !f.spectral);
        assert_eq!(f.to_string(), "cycles+molecular");
        assert!("rings".parse::<FeatureFlags>().is_err());
    }

    fn random_adjacency(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Adjacency {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        Adjacency::from_edges(n, &edges)
    }

    #[test]
    fn cycles_match_enumeration_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..=8);
            let p = rng.random_range(0.1..0.9);
            let adj = random_adjacency(&mut rng, n, p);
            let c = cycle_features(&adj).unwrap();
            let (node, graph) = brute_cycles(&adj);
            assert_eq!((c.node, c.graph), (node, graph));
        }
    }

    #[test]
    fn component_count_matches_union_find() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let n = rng.random_range(1..=12);
            let p = rng.random_range(0.0..0.5);
            let adj = random_adjacency(&mut rng, n, p);
            let mut parent: Vec<usize> = (0..n).collect();
            fn find(p: &mut [usize], x: usize) -> usize {
                if p[x] != x {
                    let r = find(p, p[x]);
                    p[x] = r;
                }
                p[x]
            }
            for i in 0..n {
                for j in adj.neighbors(i).collect::<Vec<_>>() {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri] = rj;
                }
            }
            let roots = (0..n).filter(|&i| find(&mut parent, i) == i).count();
            assert_eq!(spectral_features(&adj).unwrap().components, roots);
        }
    }

    fn arb_molecule() -> impl Strategy<Value = Graph> {
        (1usize..9).prop_flat_map(|n| {
            (
                proptest::collection::vec(0usize..5, n),
                proptest::collection::vec(prop_oneof![3 => Just(0usize), 1 => 1usize..4], n * (n - 1) / 2),
                any::<u64>(),
            )
                .prop_map(move |(xs, es, _)| {
                    let mut g = Graph::empty(n, 5, 4).unwrap();
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
        fn combinatorial_features_equivariant(g in arb_molecule(), seed in any::<u64>(), t in 0usize..=10) {
            let flags = FeatureFlags { cycles: true, spectral: false, molecular: true };
            let table = MolecularTable::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = Permutation::random(g.n(), &mut rng);
            let base = assemble_features(&g, t, 10, flags, &table).unwrap();
            let moved = assemble_features(&permute(&g, &p).unwrap(), t, 10, flags, &table).unwrap();
            prop_assert_eq!(&moved.graph_feats, &base.graph_feats);
            prop_assert_eq!(moved.node_feats, p.permute_rows(&base.node_feats, base.node_dim));
        }

        #[test]
        fn spectral_features_equivariant(g in arb_molecule(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = Permutation::random(g.n(), &mut rng);
            let base = spectral_features(&g.adjacency()).unwrap();
            let moved = spectral_features(&permute(&g, &p).unwrap().adjacency()).unwrap();
            prop_assert_eq!(base.components, moved.components);
            for (x, y) in base.eigenvalues.iter().zip(&moved.eigenvalues) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            prop_assert_eq!(
                p.permute_rows(&base.largest_component, 1),
                moved.largest_component.clone()
            );
        }
    }
}
