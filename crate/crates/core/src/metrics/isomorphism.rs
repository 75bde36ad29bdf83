use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use petgraph::algo::is_isomorphic_matching;
use petgraph::graph::UnGraph;
use rayon::prelude::*;

use crate::graph::Graph;

fn hash_of<T: Hash>(v: &T) -> u64 {
    let mut h = DefaultHasher::new();
    v.hash(&mut h);
    h.finish()
}

/// Colour-refinement hash over node and edge classes. Isomorphic graphs
/// always share a hash; the converse needs [`isomorphic`].
pub fn wl_hash(g: &Graph) -> u64 {
    let n = g.n();
    let mut colors: Vec<u64> = (0..n).map(|i| hash_of(&g.node(i))).collect();
    let mut distinct = 0;
    let mut rounds = 0;
    loop {
        let next: Vec<u64> = (0..n)
            .map(|i| {
                let mut nb: Vec<(usize, u64)> = (0..n)
                    .filter(|&j| j != i && g.edge(i, j) > 0)
                    .map(|j| (g.edge(i, j), colors[j]))
                    .collect();
                nb.sort_unstable();
                hash_of(&(colors[i], nb))
            })
            .collect();
        colors = next;
        rounds += 1;
        let mut sorted = colors.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() == distinct || rounds >= n.max(1) {
            break;
        }
        distinct = sorted.len();
    }
    colors.sort_unstable();
    hash_of(&(n, g.a(), g.b(), rounds, colors))
}

fn to_petgraph(g: &Graph) -> UnGraph<usize, usize> {
    let mut pg = UnGraph::with_capacity(g.n(), g.edge_count());
    let ids: Vec<_> = g.nodes().iter().map(|&c| pg.add_node(c)).collect();
    for (i, j, c) in g.edge_list() {
        pg.add_edge(ids[i], ids[j], c);
    }
    pg
}

/// Exact class-preserving isomorphism test.
pub fn isomorphic(g: &Graph, h: &Graph) -> bool {
    if g.n() != h.n() || g.a() != h.a() || g.b() != h.b() || g.edge_count() != h.edge_count() {
        return false;
    }
    is_isomorphic_matching(&to_petgraph(g), &to_petgraph(h), |x, y| x == y, |x, y| x == y)
}

/// Assigns each graph the index of its isomorphism class (classes numbered
/// by first appearance). Only graphs with equal hashes are compared exactly.
pub fn isomorphism_classes(graphs: &[Graph]) -> Vec<usize> {
    let hashes: Vec<u64> = graphs.par_iter().map(wl_hash).collect();
    let mut buckets: HashMap<u64, Vec<(usize, usize)>> = HashMap::new();
    let mut class = Vec::with_capacity(graphs.len());
    let mut next = 0;
    for (k, g) in graphs.iter().enumerate() {
        let bucket = buckets.entry(hashes[k]).or_default();
        match bucket.iter().find(|&&(rep, _)| isomorphic(&graphs[rep], g)) {
            Some(&(_, c)) => class.push(c),
            None => {
                bucket.push((k, next));
                class.push(next);
                next += 1;
            }
        }
    }
    class
}
