use rand::Rng;

use super::DiffusionModel;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Fixed subgraph occupying the first `n_s` nodes of every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaffoldMask {
    scaffold: Graph,
}

impl ScaffoldMask {
    pub fn new(scaffold: Graph) -> Self {
        ScaffoldMask { scaffold }
    }

    pub fn size(&self) -> usize {
        self.scaffold.n()
    }

    pub fn scaffold(&self) -> &Graph {
        &self.scaffold
    }

    /// `M_X` as an `n×a` 0/1 matrix.
    pub fn node_mask(&self, n: usize) -> Vec<f64> {
        let a = self.scaffold.a();
        (0..n * a).map(|k| f64::from(u8::from(k / a < self.size()))).collect()
    }

    /// `M_E` as an `n×n×b` 0/1 tensor.
    pub fn edge_mask(&self, n: usize) -> Vec<f64> {
        let (b, s) = (self.scaffold.b(), self.size());
        (0..n * n * b)
            .map(|k| {
                let (i, j) = (k / b / n, k / b % n);
                f64::from(u8::from(i < s && j < s))
            })
            .collect()
    }

    /// `G ← M ⊙ S + (1 − M) ⊙ G`.
    pub fn apply(&self, g: &mut Graph) -> Result<()> {
        let s = self.size();
        if s > g.n() || g.a() != self.scaffold.a() || g.b() != self.scaffold.b() {
            return Err(Error::arg(format!(
                "scaffold of {s} nodes with (a, b) = ({}, {}) does not fit a graph of {} nodes with ({}, {})",
                self.scaffold.a(),
                self.scaffold.b(),
                g.n(),
                g.a(),
                g.b()
            )));
        }
        for i in 0..s {
            g.set_node(i, self.scaffold.node(i))?;
            for j in i + 1..s {
                g.set_edge(i, j, self.scaffold.edge(i, j))?;
            }
        }
        Ok(())
    }
}

impl DiffusionModel {
    /// Ancestral sampling with the scaffold written back after every reverse step.
    pub fn scaffold_sample<R: Rng + ?Sized>(&self, mask: &ScaffoldMask, n: usize, rng: &mut R) -> Result<Graph> {
        self.check_graph(mask.scaffold())?;
        if mask.size() > n {
            return Err(Error::arg(format!(
                "scaffold has {} nodes but the sample has {n}",
                mask.size()
            )));
        }
        let n = self.resolve_size(Some(n), rng)?;
        let mut g = self.noise.sample_prior(n, rng)?;
        for t in (1..=self.steps()).rev() {
            g = self.reverse_step(&g, t, rng)?;
            mask.apply(&mut g)?;
        }
        Ok(g)
    }
}
