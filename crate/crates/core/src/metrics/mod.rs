//! Sample-quality metrics for generated graph sets.
//!
//! Structural statistics (degree, clustering and 4-node orbit descriptors)
//! are compared with a squared MMD under a Gaussian kernel on the
//! total-variation distance, reported as a ratio against the train/test
//! discrepancy. Molecule-style graphs are scored for validity against a
//! valence table and for uniqueness and novelty up to isomorphism.
//!
//! The orbit descriptor is the per-node mean of the orbit counts, so its
//! "total-variation" distance is half the L1 distance of unnormalized means.

mod descriptors;
mod isomorphism;
mod mmd;

use std::collections::HashSet;

use rayon::prelude::*;

pub use descriptors::{
    clustering_coefficients, clustering_hist, degree_hist, orbit4_counts, orbit_profile, Descriptor, CLUSTERING_BINS,
    ORBITS,
};
pub use isomorphism::{isomorphic, isomorphism_classes, wl_hash};
pub use mmd::{
    bootstrap_ratio_ci, gaussian_tv_kernel, median_bandwidth, mmd_ratio, mmd_ratio_with, mmd_squared, tv_distance,
    MmdEstimate, MmdReport, RATIO_FLOOR,
};

use crate::error::{Error, Result};
use crate::features::MolecularTable;
use crate::graph::Graph;

/// Descriptor vectors of every graph in `graphs`.
pub fn describe(graphs: &[Graph], d: Descriptor) -> Vec<Vec<f64>> {
    graphs.par_iter().map(|g| d.of(g)).collect()
}

/// MMD ratio for one descriptor on graph sets.
pub fn graph_mmd_ratio(
    gen: &[Graph],
    train: &[Graph],
    test: &[Graph],
    d: Descriptor,
    sigma: Option<f64>,
) -> Result<MmdReport> {
    mmd_ratio(&describe(gen, d), &describe(train, d), &describe(test, d), sigma)
}

/// Outcome of the valence check. Invalid variants carry the first offending node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Disconnected,
    OverValence { node: usize, bonds: u32, valence: u32 },
    UnmappedAtom { node: usize },
    UnmappedBond { node: usize },
}

impl Validity {
    pub fn is_valid(self) -> bool {
        self == Validity::Valid
    }
}

/// Connected, every atom class known and every bond-order sum within the
/// atom's valence (open valences count as implicit hydrogens).
pub fn validity(g: &Graph, table: &MolecularTable) -> Validity {
    let n = g.n();
    for i in 0..n {
        if g.node(i) >= table.valences.len() {
            return Validity::UnmappedAtom { node: i };
        }
    }
    for i in 0..n {
        let mut bonds = 0;
        for j in 0..n {
            let e = g.edge(i, j);
            match table.bond_orders.get(e) {
                Some(&o) => bonds += o,
                None => return Validity::UnmappedBond { node: i },
            }
        }
        let valence = table.valences[g.node(i)];
        if bonds > valence {
            return Validity::OverValence { node: i, bonds, valence };
        }
    }
    if !g.adjacency().is_connected() {
        return Validity::Disconnected;
    }
    Validity::Valid
}

/// Fraction of `graphs` passing [`validity`].
pub fn validity_rate(graphs: &[Graph], table: &MolecularTable) -> Result<f64> {
    nonempty(graphs, "validity")?;
    let ok = graphs.par_iter().filter(|g| validity(g, table).is_valid()).count();
    Ok(ok as f64 / graphs.len() as f64)
}

fn nonempty(graphs: &[Graph], what: &str) -> Result<()> {
    if graphs.is_empty() {
        return Err(Error::arg(format!("{what} needs a nonempty graph set")));
    }
    Ok(())
}

/// Number of isomorphism classes divided by the set size.
pub fn uniqueness(graphs: &[Graph]) -> Result<f64> {
    nonempty(graphs, "uniqueness")?;
    let classes: HashSet<usize> = isomorphism_classes(graphs).into_iter().collect();
    Ok(classes.len() as f64 / graphs.len() as f64)
}

/// Fraction of the isomorphism classes of `generated` that do not occur in `train`.
pub fn novelty(generated: &[Graph], train: &[Graph]) -> Result<f64> {
    nonempty(generated, "novelty")?;
    let mut all = generated.to_vec();
    all.extend_from_slice(train);
    let classes = isomorphism_classes(&all);
    let seen: HashSet<usize> = classes[generated.len()..].iter().copied().collect();
    let gen: HashSet<usize> = classes[..generated.len()].iter().copied().collect();
    let novel = gen.iter().filter(|c| !seen.contains(c)).count();
    Ok(novel as f64 / gen.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn molecule(nodes: &[usize], edges: &[(usize, usize, usize)]) -> Graph {
        let mut g = Graph::empty(nodes.len(), 5, 4).unwrap();
        for (i, &c) in nodes.iter().enumerate() {
            g.set_node(i, c).unwrap();
        }
        for &(i, j, c) in edges {
            g.set_edge(i, j, c).unwrap();
        }
        g
    }

    #[test]
    fn carbon_with_five_bonds_is_invalid() {
        let table = MolecularTable::default();
        let g = molecule(&[0, 4, 4, 4, 4, 4], &[(0, 1, 1), (0, 2, 1), (0, 3, 1), (0, 4, 1), (0, 5, 1)]);
        assert_eq!(validity(&g, &table), Validity::OverValence { node: 0, bonds: 5, valence: 4 });
        let methane = g.prefix(5);
        assert_eq!(validity(&methane, &table), Validity::Valid);
    }

    #[test]
    fn validity_flags() {
        let table = MolecularTable::default();
        let co2 = molecule(&[2, 0, 2], &[(0, 1, 2), (1, 2, 2)]);
        assert!(validity(&co2, &table).is_valid());
        let split = molecule(&[0, 0], &[]);
        assert_eq!(validity(&split, &table), Validity::Disconnected);
        let mut small = table.clone();
        small.valences.truncate(2);
        assert_eq!(validity(&co2, &small), Validity::UnmappedAtom { node: 0 });
        small = table.clone();
        small.bond_orders.truncate(2);
        assert_eq!(validity(&co2, &small), Validity::UnmappedBond { node: 0 });
        assert_eq!(validity_rate(&[co2, split], &table).unwrap(), 0.5);
    }

    #[test]
    fn uniqueness_of_copies() {
        let g = molecule(&[0, 1], &[(0, 1, 1)]);
        for k in 1..6 {
            assert_eq!(uniqueness(&vec![g.clone(); k]).unwrap(), 1.0 / k as f64);
        }
        assert!(uniqueness(&[]).is_err());
    }

    #[test]
    fn novelty_cases() {
        let a = molecule(&[0, 1], &[(0, 1, 1)]);
        let b = molecule(&[1, 0], &[(0, 1, 1)]);
        let c = molecule(&[0, 0], &[(0, 1, 2)]);
        assert_eq!(novelty(&[b.clone(), a.clone()], &[a.clone(), c.clone()]).unwrap(), 0.0);
        assert_eq!(novelty(&[a.clone(), c.clone()], &[b]).unwrap(), 0.5);
        assert_eq!(novelty(&[c], &[a]).unwrap(), 1.0);
    }

    #[test]
    fn descriptors_over_sets() {
        let k3 = molecule(&[0, 0, 0], &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]);
        let path = molecule(&[0, 0, 0], &[(0, 1, 1), (1, 2, 1)]);
        let d = describe(&[k3.clone(), path.clone()], Descriptor::Degree);
        assert_eq!(d, vec![vec![0.0, 0.0, 1.0], vec![0.0, 2.0 / 3.0, 1.0 / 3.0]]);
        let set = vec![k3, path];
        let r = graph_mmd_ratio(&set, &set, &set, Descriptor::Clustering, Some(1.0)).unwrap();
        assert!(r.gen_test.abs() < 1e-12 && r.train_test.abs() < 1e-12);
        // both sides sit on the floor
        assert_eq!(r.ratio, 1.0);
    }
}
