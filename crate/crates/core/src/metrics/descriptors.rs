use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, Graph};

/// Number of uniform clustering-coefficient bins on `[0, 1]`.
pub const CLUSTERING_BINS: usize = 100;

/// Node orbits of the connected 4-node graphlets, numbered 4 to 14.
pub const ORBITS: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Descriptor {
    Degree,
    Clustering,
    Orbit,
}

impl Descriptor {
    pub const ALL: [Descriptor; 3] = [Descriptor::Degree, Descriptor::Clustering, Descriptor::Orbit];

    pub fn name(self) -> &'static str {
        match self {
            Descriptor::Degree => "degree",
            Descriptor::Clustering => "clustering",
            Descriptor::Orbit => "orbit",
        }
    }

    /// Descriptor vector of one graph.
    pub fn of(self, g: &Graph) -> Vec<f64> {
        let adj = g.adjacency();
        match self {
            Descriptor::Degree => degree_hist(&adj),
            Descriptor::Clustering => clustering_hist(&adj),
            Descriptor::Orbit => orbit_profile(&adj),
        }
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Descriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Descriptor::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown descriptor '{s}'")))
    }
}

/// Fraction of nodes with degree `k`, for `k` in `0..n`.
pub fn degree_hist(adj: &Adjacency) -> Vec<f64> {
    let n = adj.n();
    let mut h = vec![0.0; n];
    for d in adj.degrees() {
        h[d] += 1.0;
    }
    h.iter_mut().for_each(|v| *v /= n as f64);
    h
}

/// Local clustering coefficient of every node; 0 below degree 2.
pub fn clustering_coefficients(adj: &Adjacency) -> Vec<f64> {
    (0..adj.n())
        .map(|i| {
            let nb: Vec<usize> = adj.neighbors(i).collect();
            let d = nb.len();
            if d < 2 {
                return 0.0;
            }
            let mut links = 0usize;
            for (p, &u) in nb.iter().enumerate() {
                links += nb[p + 1..].iter().filter(|&&v| adj.has(u, v)).count();
            }
            links as f64 / (d * (d - 1) / 2) as f64
        })
        .collect()
}

/// Clustering coefficients binned into [`CLUSTERING_BINS`] bins and
/// normalized by the node count. A coefficient of exactly 1 falls in the last bin.
pub fn clustering_hist(adj: &Adjacency) -> Vec<f64> {
    let mut h = vec![0.0; CLUSTERING_BINS];
    let n = adj.n() as f64;
    for c in clustering_coefficients(adj) {
        let bin = ((c * CLUSTERING_BINS as f64) as usize).min(CLUSTERING_BINS - 1);
        h[bin] += 1.0 / n;
    }
    h
}

/// Orbit of each position of an induced connected 4-node subgraph, given the
/// subgraph's edge count and the position's degree inside it.
fn orbit_of(edges: usize, degree: usize, degrees: &[usize; 4]) -> usize {
    match edges {
        3 if degrees.contains(&3) => [0, 6, 0, 7][degree],
        3 => [0, 4, 5][degree],
        4 if degrees.contains(&3) => [0, 9, 10, 11][degree],
        4 => 8,
        5 => [0, 0, 12, 13][degree],
        6 => 14,
        _ => unreachable!("connected 4-node subgraphs have 3 to 6 edges"),
    }
}

/// Per-node counts of orbits 4–14: for every connected induced 4-node
/// subgraph containing the node, the node's orbit within it.
///
/// Orbits: path end (4) and middle (5), star leaf (6) and centre (7),
/// 4-cycle (8), tailed triangle tail (9), degree-2 corner (10) and
/// degree-3 corner (11), diamond degree-2 (12) and degree-3 (13), clique (14).
pub fn orbit4_counts(adj: &Adjacency) -> Vec<[u64; ORBITS]> {
    let mut counts = vec![[0u64; ORBITS]; adj.n()];
    for_each_connected_quad(adj, |quad| {
        let mut deg = [0usize; 4];
        let mut edges = 0;
        for p in 0..4 {
            for q in p + 1..4 {
                if adj.has(quad[p], quad[q]) {
                    deg[p] += 1;
                    deg[q] += 1;
                    edges += 1;
                }
            }
        }
        for p in 0..4 {
            counts[quad[p]][orbit_of(edges, deg[p], &deg) - 4] += 1;
        }
    });
    counts
}

/// Mean orbit-count vector over the nodes of the graph.
pub fn orbit_profile(adj: &Adjacency) -> Vec<f64> {
    let mut mean = vec![0.0; ORBITS];
    let counts = orbit4_counts(adj);
    for c in &counts {
        for (m, &v) in mean.iter_mut().zip(c) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= counts.len().max(1) as f64);
    mean
}

/// Visits every connected 4-node vertex set exactly once (ESU enumeration:
/// grow from the smallest vertex through exclusive neighbourhoods).
fn for_each_connected_quad(adj: &Adjacency, mut visit: impl FnMut([usize; 4])) {
    fn extend(adj: &Adjacency, sub: &mut Vec<usize>, ext: Vec<usize>, root: usize, visit: &mut dyn FnMut([usize; 4])) {
        if sub.len() == 4 {
            visit([sub[0], sub[1], sub[2], sub[3]]);
            return;
        }
        let mut ext = ext;
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            for u in adj.neighbors(w) {
                let exclusive =
                    u > root && !sub.contains(&u) && !sub.iter().any(|&s| adj.has(s, u)) && !next.contains(&u);
                if exclusive {
                    next.push(u);
                }
            }
            sub.push(w);
            extend(adj, sub, next, root, visit);
            sub.pop();
        }
    }
    for v in 0..adj.n() {
        let ext = adj.neighbors(v).filter(|&u| u > v).collect();
        extend(adj, &mut vec![v], ext, v, &mut visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Permutation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn adj(n: usize, edges: &[(usize, usize)]) -> Adjacency {
        Adjacency::from_edges(n, edges)
    }

    fn complete(n: usize) -> Adjacency {
        let e: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        adj(n, &e)
    }

    fn random_adj(n: usize, p: f64, rng: &mut impl Rng) -> Adjacency {
        let e: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|_| rng.random_bool(p))
            .collect();
        adj(n, &e)
    }

    /// Orbit templates as (edge list, orbit of positions 0..4).
    fn templates() -> Vec<(Vec<(usize, usize)>, [usize; 4])> {
        vec![
            (vec![(0, 1), (1, 2), (2, 3)], [4, 5, 5, 4]),
            (vec![(0, 1), (0, 2), (0, 3)], [7, 6, 6, 6]),
            (vec![(0, 1), (1, 2), (2, 3), (3, 0)], [8, 8, 8, 8]),
            (vec![(0, 1), (1, 2), (2, 0), (0, 3)], [11, 10, 10, 9]),
            (vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], [13, 12, 13, 12]),
            (vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], [14; 4]),
        ]
    }

    fn all_perms4() -> Vec<[usize; 4]> {
        let mut out = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        let p = [a, b, c, d];
                        if (0..4).all(|k| p.contains(&k)) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    }

    /// Every 4-subset, matched against the templates under all 24 relabellings.
    fn naive_orbits(g: &Adjacency) -> Vec<[u64; ORBITS]> {
        let n = g.n();
        let mut counts = vec![[0u64; ORBITS]; n];
        let templates = templates();
        let perms = all_perms4();
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    for d in c + 1..n {
                        let s = [a, b, c, d];
                        'search: for (edges, orbits) in &templates {
                            for p in &perms {
                                // position k of the template is vertex s[p[k]]
                                let matches = (0..4).all(|x| {
                                    (x + 1..4).all(|y| {
                                        let t = edges.contains(&(x, y)) || edges.contains(&(y, x));
                                        t == g.has(s[p[x]], s[p[y]])
                                    })
                                });
                                if matches {
                                    for k in 0..4 {
                                        counts[s[p[k]]][orbits[k] - 4] += 1;
                                    }
                                    break 'search;
                                }
                            }
                        }
                    }
                }
            }
        }
        counts
    }

    #[test]
    fn clique_has_unit_clustering() {
        assert_eq!(clustering_coefficients(&complete(4)), vec![1.0; 4]);
        let h = clustering_hist(&complete(4));
        assert_eq!(h[CLUSTERING_BINS - 1], 1.0);
        assert_eq!(h.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn star_degrees() {
        let star = adj(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_eq!(star.degrees(), vec![4, 1, 1, 1, 1]);
        assert_eq!(degree_hist(&star), vec![0.0, 0.8, 0.0, 0.0, 0.2]);
        assert_eq!(clustering_coefficients(&star), vec![0.0; 5]);
    }

    #[test]
    fn small_graph_orbits() {
        let c4 = adj(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let counts = orbit4_counts(&c4);
        assert_eq!(counts, naive_orbits(&c4));
        assert!(counts.iter().all(|c| c[8 - 4] == 1 && c.iter().sum::<u64>() == 1));

        let k4 = orbit4_counts(&complete(4));
        assert!(k4.iter().all(|c| c[14 - 4] == 1));

        let star = orbit4_counts(&adj(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]));
        assert_eq!(star[0][7 - 4], 4);
        assert!(star[1..].iter().all(|c| c[6 - 4] == 3));
        assert_eq!(star, naive_orbits(&adj(5, &[(0, 1), (0, 2), (0, 3), (0, 4)])));
    }

    #[test]
    fn orbits_match_subset_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..=12);
            let p = rng.random_range(0.1..0.9);
            let g = random_adj(n, p, &mut rng);
            assert_eq!(orbit4_counts(&g), naive_orbits(&g));
        }
    }

    #[test]
    fn descriptor_names_round_trip() {
        for d in Descriptor::ALL {
            assert_eq!(d.name().parse::<Descriptor>().unwrap(), d);
        }
        assert!("graphlet".parse::<Descriptor>().is_err());
    }

    proptest! {
        #[test]
        fn descriptors_are_permutation_invariant(seed in any::<u64>(), n in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_adj(n, 0.4, &mut rng);
            let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| g.has(i, j)).collect();
            let perm = Permutation::random(n, &mut rng);
            let p = perm.as_slice();
            let moved: Vec<_> = edges.iter().map(|&(i, j)| (p[i], p[j])).collect();
            let h = adj(n, &moved);
            prop_assert_eq!(degree_hist(&g), degree_hist(&h));
            prop_assert_eq!(clustering_hist(&g), clustering_hist(&h));
            prop_assert_eq!(orbit_profile(&g), orbit_profile(&h));
            let cg = orbit4_counts(&g);
            let ch = orbit4_counts(&h);
            let permuted: Vec<_> = (0..n).map(|i| ch[p[i]]).collect();
            prop_assert_eq!(permuted, cg);
        }
    }
}
