//! Synthetic datasets: stochastic block models, Delaunay planar graphs,
//! cycles and small valence-respecting molecules.
//!
//! Every generator takes a seed and draws graph `k` from its own random
//! stream, so output is reproducible and independent of the thread count.

use std::ops::RangeInclusive;

use delaunator::{triangulate, Point};
use petgraph::graph::UnGraph;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rustworkx_core::planar::is_planar;
use serde::{Deserialize, Serialize};

use crate::engine::par_generate;
use crate::error::{Error, Result};
use crate::features::MolecularTable;
use crate::graph::{sample_categorical, Graph};

/// Stochastic block model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbmConfig {
    pub communities: RangeInclusive<usize>,
    pub community_size: RangeInclusive<usize>,
    pub p_intra: f64,
    pub p_inter: f64,
}

impl SbmConfig {
    /// Two communities of eight nodes.
    pub fn desk() -> Self {
        SbmConfig {
            communities: 2..=2,
            community_size: 8..=8,
            p_intra: 0.7,
            p_inter: 0.05,
        }
    }

    /// Two to five communities of 20 to 40 nodes.
    pub fn full() -> Self {
        SbmConfig {
            communities: 2..=5,
            community_size: 20..=40,
            p_intra: 0.3,
            p_inter: 0.005,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_inter && self.p_inter < self.p_intra && self.p_intra <= 1.0) {
            return Err(Error::arg(format!(
                "SBM needs 0 <= p_inter < p_intra <= 1, got p_inter={} p_intra={}",
                self.p_inter, self.p_intra
            )));
        }
        if self.communities.is_empty() || *self.communities.start() == 0 {
            return Err(Error::arg("SBM community count range must be nonempty and positive"));
        }
        if self.community_size.is_empty() || *self.community_size.start() == 0 {
            return Err(Error::arg("SBM community size range must be nonempty and positive"));
        }
        Ok(())
    }
}

impl Default for SbmConfig {
    fn default() -> Self {
        SbmConfig::desk()
    }
}

/// Nodes of community `c` are contiguous; one node class, one edge class.
fn sbm_graph(cfg: &SbmConfig, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let k = rng.random_range(cfg.communities.clone());
    let mut block = Vec::new();
    for c in 0..k {
        let size = rng.random_range(cfg.community_size.clone());
        block.extend(std::iter::repeat_n(c, size));
    }
    let n = block.len();
    let mut g = Graph::empty(n, 1, 2)?;
    for i in 0..n {
        for j in i + 1..n {
            let p = if block[i] == block[j] { cfg.p_intra } else { cfg.p_inter };
            if rng.random_bool(p) {
                g.set_edge(i, j, 1)?;
            }
        }
    }
    Ok(g)
}

pub fn gen_sbm(count: usize, cfg: &SbmConfig, seed: u64) -> Result<Vec<Graph>> {
    cfg.validate()?;
    par_generate(count, seed, |_, rng| sbm_graph(cfg, rng))
}

/// Planarity of the binarized graph: edge-count bound `m ≤ 3n − 6`, then a
/// left-right planarity test.
pub fn planarity_check(g: &Graph) -> bool {
    let n = g.n();
    let edges = g.edge_list();
    if n >= 3 && edges.len() > 3 * n - 6 {
        return false;
    }
    let mut pg = UnGraph::<(), ()>::with_capacity(n, edges.len());
    let ids: Vec<_> = (0..n).map(|_| pg.add_node(())).collect();
    for (i, j, _) in edges {
        pg.add_edge(ids[i], ids[j], ());
    }
    is_planar(&pg)
}

const PLANAR_RETRIES: usize = 10;

fn delaunay_graph(n: usize, rng: &mut ChaCha8Rng) -> Result<Graph> {
    for _ in 0..=PLANAR_RETRIES {
        let points: Vec<Point> = (0..n)
            .map(|_| Point {
                x: rng.random(),
                y: rng.random(),
            })
            .collect();
        let tri = triangulate(&points);
        let mut g = Graph::empty(n, 1, 2)?;
        for t in tri.triangles.chunks_exact(3) {
            for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                g.set_edge(u, v, 1)?;
            }
        }
        if g.adjacency().is_connected() && planarity_check(&g) {
            return Ok(g);
        }
    }
    Err(Error::Numeric(format!(
        "no connected planar triangulation of {n} points after {PLANAR_RETRIES} retries"
    )))
}

/// Delaunay triangulations of `n` uniform points in the unit square.
pub fn gen_planar(count: usize, n: usize, seed: u64) -> Result<Vec<Graph>> {
    if n < 3 {
        return Err(Error::arg(format!("planar graphs need n >= 3, got {n}")));
    }
    par_generate(count, seed, |_, rng| delaunay_graph(n, rng))
}

/// Cycles `C_n` with `n` uniform in `sizes`; one node class, one edge class.
pub fn gen_cycles(count: usize, sizes: RangeInclusive<usize>, seed: u64) -> Result<Vec<Graph>> {
    if sizes.is_empty() || *sizes.start() < 3 {
        return Err(Error::arg(format!("cycle sizes must be at least 3, got {sizes:?}")));
    }
    par_generate(count, seed, |_, rng| {
        let n = rng.random_range(sizes.clone());
        let mut g = Graph::empty(n, 1, 2)?;
        for i in 0..n {
            g.set_edge(i, (i + 1) % n, 1)?;
        }
        Ok(g)
    })
}

/// Toy molecule generator settings. Atom and bond classes index into the
/// molecular table passed alongside; bond class `k` has order `bond_orders[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoleculeConfig {
    /// Probability of each atom class.
    pub mixture: Vec<f64>,
    pub atoms: RangeInclusive<usize>,
    /// Relative weight of each bond class when a bond is placed (class 0 ignored).
    pub bond_weights: Vec<f64>,
    /// Chance of closing a ring between two non-bonded atoms with free valence.
    pub ring_prob: f64,
}

/// Largest heavy-atom count of a toy molecule.
pub const MAX_ATOMS: usize = 9;

/// Heavy atoms C, N, O, F with bond classes none, single, double, triple.
pub fn heavy_atom_table() -> MolecularTable {
    MolecularTable {
        symbols: ["C", "N", "O", "F"].map(String::from).to_vec(),
        valences: vec![4, 3, 2, 1],
        weights: vec![12.0, 14.0, 16.0, 19.0],
        bond_orders: vec![0, 1, 2, 3],
    }
}

impl Default for MoleculeConfig {
    /// Mixture over [`heavy_atom_table`] with 3 to 9 atoms, mostly single bonds.
    fn default() -> Self {
        MoleculeConfig {
            mixture: vec![0.7, 0.12, 0.14, 0.04],
            atoms: 3..=MAX_ATOMS,
            bond_weights: vec![0.0, 0.8, 0.15, 0.05],
            ring_prob: 0.1,
        }
    }
}

impl MoleculeConfig {
    pub fn validate(&self, t: &MolecularTable) -> Result<()> {
        if t.symbols.is_empty() || t.valences.len() != t.symbols.len() || t.weights.len() != t.symbols.len() {
            return Err(Error::arg("molecular table needs one valence and weight per symbol"));
        }
        if t.bond_orders.first() != Some(&0) || t.bond_orders.len() < 2 {
            return Err(Error::arg("bond class 0 must have order 0 and at least one bond class must exist"));
        }
        if self.mixture.len() != t.symbols.len() || self.mixture.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::arg("mixture needs one nonnegative weight per atom class"));
        }
        if (self.mixture.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::arg("mixture must sum to 1"));
        }
        if self.bond_weights.len() != t.bond_orders.len() || self.bond_weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::arg("bond_weights needs one nonnegative weight per bond class"));
        }
        if self.atoms.is_empty() || *self.atoms.start() == 0 || *self.atoms.end() > MAX_ATOMS {
            return Err(Error::arg(format!("atom count range must lie in 1..={MAX_ATOMS}")));
        }
        if !(0.0..=1.0).contains(&self.ring_prob) {
            return Err(Error::arg("ring_prob must be in [0, 1]"));
        }
        Ok(())
    }

    /// Random bond class with order at most `room`, or `None` if none fits.
    fn bond_class(&self, t: &MolecularTable, room: u32, rng: &mut ChaCha8Rng) -> Option<usize> {
        let w: Vec<f64> = self
            .bond_weights
            .iter()
            .zip(&t.bond_orders)
            .map(|(&w, &o)| if o > 0 && o <= room { w } else { 0.0 })
            .collect();
        let total: f64 = w.iter().sum();
        (total > 0.0).then(|| sample_categorical(&w.iter().map(|v| v / total).collect::<Vec<_>>(), rng))
    }
}

/// Rejection budget per molecule before giving up.
const MOLECULE_ATTEMPTS: usize = 1000;

/// Spanning tree grown in order of decreasing valence, then optional ring
/// bonds; the atom order is shuffled at the end. `None` if the drawn
/// composition cannot be connected.
fn try_molecule(cfg: &MoleculeConfig, t: &MolecularTable, n: usize, rng: &mut ChaCha8Rng) -> Result<Option<Graph>> {
    let mut atoms: Vec<usize> = (0..n).map(|_| sample_categorical(&cfg.mixture, rng)).collect();
    atoms.sort_by_key(|&c| std::cmp::Reverse(t.valences[c]));
    let mut free: Vec<u32> = atoms.iter().map(|&c| t.valences[c]).collect();
    let mut bonds = vec![0usize; n * n];
    for i in 1..n {
        let hosts: Vec<usize> = (0..i).filter(|&j| free[j] > 0).collect();
        let Some(&j) = hosts.get(rng.random_range(0..hosts.len().max(1))) else {
            return Ok(None);
        };
        let Some(c) = cfg.bond_class(t, free[i].min(free[j]), rng) else {
            return Ok(None);
        };
        bonds[i * n + j] = c;
        bonds[j * n + i] = c;
        free[i] -= t.bond_orders[c];
        free[j] -= t.bond_orders[c];
    }
    for i in 0..n {
        for j in i + 1..n {
            if bonds[i * n + j] == 0 && free[i] > 0 && free[j] > 0 && rng.random_bool(cfg.ring_prob) {
                let c = cfg.bond_class(t, 1, rng).unwrap_or(0);
                if c != 0 {
                    bonds[i * n + j] = c;
                    free[i] -= t.bond_orders[c];
                    free[j] -= t.bond_orders[c];
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut g = Graph::empty(n, t.symbols.len(), t.bond_orders.len())?;
    for (new, &old) in order.iter().enumerate() {
        g.set_node(new, atoms[old])?;
    }
    for u in 0..n {
        for v in u + 1..n {
            g.set_edge(u, v, bonds[order[u] * n + order[v]])?;
        }
    }
    Ok(Some(g))
}

/// Connected molecules that respect the valence table.
pub fn gen_toy_molecules(count: usize, cfg: &MoleculeConfig, table: &MolecularTable, seed: u64) -> Result<Vec<Graph>> {
    cfg.validate(table)?;
    par_generate(count, seed, |_, rng| {
        for _ in 0..MOLECULE_ATTEMPTS {
            let n = rng.random_range(cfg.atoms.clone());
            if let Some(g) = try_molecule(cfg, table, n, rng)? {
                return Ok(g);
            }
        }
        Err(Error::Numeric(format!(
            "no valid molecule in {MOLECULE_ATTEMPTS} attempts; check the mixture and valences"
        )))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::validity;

    fn from_edges(n: usize, edges: &[(usize, usize)]) -> Graph {
        let mut g = Graph::empty(n, 1, 2).unwrap();
        for &(i, j) in edges {
            g.set_edge(i, j, 1).unwrap();
        }
        g
    }

    fn complete(n: usize) -> Graph {
        let e: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        from_edges(n, &e)
    }

    #[test]
    fn sbm_deterministic_limit() {
        let cfg = SbmConfig {
            communities: 2..=2,
            community_size: 3..=3,
            p_intra: 1.0,
            p_inter: 0.0,
        };
        let g = &gen_sbm(1, &cfg, 0).unwrap()[0];
        let expected = from_edges(6, &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]);
        assert_eq!(g, &expected);
    }

    #[test]
    fn sbm_intra_density() {
        let cfg = SbmConfig {
            p_intra: 0.6,
            p_inter: 0.0,
            ..SbmConfig::desk()
        };
        let graphs = gen_sbm(500, &cfg, 1).unwrap();
        let (mut hit, mut total) = (0usize, 0usize);
        for g in &graphs {
            assert!(g.adjacency().component_count() >= 2);
            for block in [0..8, 8..16] {
                for i in block.clone() {
                    for j in i + 1..block.end {
                        hit += usize::from(g.edge(i, j) == 1);
                        total += 1;
                    }
                }
            }
        }
        assert!((hit as f64 / total as f64 - 0.6).abs() < 0.02);
    }

    #[test]
    fn sbm_rejects_bad_probabilities() {
        for (pi, po) in [(0.3, 0.3), (0.2, 0.5), (1.5, 0.1), (0.5, -0.1)] {
            let cfg = SbmConfig {
                p_intra: pi,
                p_inter: po,
                ..SbmConfig::desk()
            };
            assert!(gen_sbm(1, &cfg, 0).is_err());
        }
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(gen_sbm(5, &SbmConfig::desk(), 3).unwrap(), gen_sbm(5, &SbmConfig::desk(), 3).unwrap());
        assert_eq!(gen_planar(5, 12, 3).unwrap(), gen_planar(5, 12, 3).unwrap());
        let (m, t) = (MoleculeConfig::default(), heavy_atom_table());
        assert_eq!(gen_toy_molecules(5, &m, &t, 3).unwrap(), gen_toy_molecules(5, &m, &t, 3).unwrap());
        assert_ne!(gen_planar(5, 12, 3).unwrap(), gen_planar(5, 12, 4).unwrap());
    }

    #[test]
    fn kuratowski_graphs_are_not_planar() {
        assert!(!planarity_check(&complete(5)));
        let k33: Vec<_> = (0..3).flat_map(|i| (3..6).map(move |j| (i, j))).collect();
        assert!(!planarity_check(&from_edges(6, &k33)));
        assert!(planarity_check(&complete(4)));
        // K5 minus an edge passes the edge-count bound and is planar.
        let mut k5e = complete(5);
        k5e.set_edge(0, 1, 0).unwrap();
        assert!(planarity_check(&k5e));
    }

    #[test]
    fn trees_are_planar() {
        let mut rng = crate::engine::stream_rng(5, 0);
        for n in 1..30 {
            let e: Vec<_> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
            assert!(planarity_check(&from_edges(n, &e)));
        }
    }

    #[test]
    fn delaunay_outputs_are_planar_and_connected() {
        for g in gen_planar(50, 64, 9).unwrap() {
            assert!(planarity_check(&g));
            assert!(g.adjacency().is_connected());
        }
        assert_eq!(gen_planar(1, 3, 0).unwrap()[0], complete(3));
        assert!(gen_planar(1, 2, 0).is_err());
    }

    #[test]
    fn cycles_are_two_regular_and_connected() {
        for g in gen_cycles(50, 6..=8, 2).unwrap() {
            assert!((6..=8).contains(&g.n()));
            assert!(g.adjacency().degrees().iter().all(|&d| d == 2));
            assert!(g.adjacency().is_connected());
        }
        assert!(gen_cycles(1, 2..=4, 0).is_err());
    }

    #[test]
    fn molecules_are_valid_and_follow_the_mixture() {
        let cfg = MoleculeConfig::default();
        let table = heavy_atom_table();
        let graphs = gen_toy_molecules(10_000, &cfg, &table, 0).unwrap();
        let mut counts = [0.0; 4];
        let mut total = 0.0;
        for g in &graphs {
            assert!(g.n() <= MAX_ATOMS);
            assert!(validity(g, &table).is_valid(), "{g:?}");
            for &c in g.nodes() {
                counts[c] += 1.0;
                total += 1.0;
            }
        }
        for (c, p) in counts.iter().zip(&cfg.mixture) {
            assert!((c / total - p).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn molecule_config_validation() {
        let table = heavy_atom_table();
        let mut cfg = MoleculeConfig::default();
        cfg.atoms = 1..=10;
        assert!(cfg.validate(&table).is_err());
        cfg = MoleculeConfig::default();
        cfg.mixture = vec![0.5, 0.5, 0.5, 0.0];
        assert!(cfg.validate(&table).is_err());
        cfg = MoleculeConfig {
            mixture: vec![0.0, 0.0, 0.0, 1.0],
            atoms: 3..=3,
            ..MoleculeConfig::default()
        };
        assert!(gen_toy_molecules(1, &cfg, &table, 0).is_err());
    }
}
