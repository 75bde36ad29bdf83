use crate::error::{Error, Result};
use crate::graph::{Graph, SoftGraph};
use crate::noise::{posterior_single, NoiseModel, StochasticMatrix};

/// `q(z^{t−1} | z^t = z, x)` for every `(z, x)`; `None` where `q(z^t = z | x) = 0`.
#[derive(Clone, Debug)]
pub struct PosteriorTable {
    d: usize,
    entries: Vec<Option<Vec<f64>>>,
}

impl PosteriorTable {
    pub fn new(q_t: &StochasticMatrix, qbar_t: &StochasticMatrix, qbar_prev: &StochasticMatrix) -> Result<Self> {
        let d = q_t.dim();
        let mut entries = Vec::with_capacity(d * d);
        for z in 0..d {
            for x in 0..d {
                entries.push(if qbar_t.get(x, z) > 0.0 {
                    Some(posterior_single(z, x, q_t, qbar_prev)?)
                } else {
                    None
                });
            }
        }
        Ok(PosteriorTable { d, entries })
    }

    pub fn nodes(noise: &NoiseModel, t: usize) -> Result<Self> {
        Self::new(&noise.node_step(t), &noise.node_cumulative(t), &noise.node_cumulative(t - 1))
    }

    pub fn edges(noise: &NoiseModel, t: usize) -> Result<Self> {
        Self::new(&noise.edge_step(t), &noise.edge_cumulative(t), &noise.edge_cumulative(t - 1))
    }

    pub fn get(&self, z: usize, x: usize) -> Option<&[f64]> {
        self.entries[z * self.d + x].as_deref()
    }

    /// `Σ_x q(· | z, x) p̂(x)` over reachable `x`, renormalized only if some
    /// `x` was unreachable.
    pub fn marginalize(&self, z: usize, pred: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        let mut dropped = false;
        for (x, &p) in pred.iter().enumerate() {
            match self.get(z, x) {
                Some(post) => {
                    if p != 0.0 {
                        for (o, q) in out.iter_mut().zip(post) {
                            *o += p * q;
                        }
                    }
                }
                None => dropped |= p > 0.0,
            }
        }
        if dropped {
            let s: f64 = out.iter().sum();
            if !(s > 0.0) {
                return Err(Error::Numeric(format!(
                    "reverse distribution for state {z} has no mass"
                )));
            }
            out.iter_mut().for_each(|v| *v /= s);
        } else if !out.iter().any(|&v| v > 0.0) {
            return Err(Error::Numeric(format!(
                "reverse distribution for state {z} has no mass"
            )));
        }
        Ok(())
    }
}

/// `p_θ(G^{t−1} | G^t)` per node and unordered edge, marginalizing the
/// exact posterior over the predicted clean classes.
pub fn reverse_distributions(g_t: &Graph, pred: &SoftGraph, t: usize, noise: &NoiseModel) -> Result<SoftGraph> {
    if t == 0 || t > noise.steps() {
        return Err(Error::arg(format!("reverse step {t} outside 1..={}", noise.steps())));
    }
    let n = g_t.n();
    if pred.n != n || pred.a != g_t.a() || pred.b != g_t.b() {
        return Err(Error::Shape {
            op: "reverse_distributions",
            left: vec![n, g_t.a(), g_t.b()],
            right: vec![pred.n, pred.a, pred.b],
        });
    }
    let nodes = PosteriorTable::nodes(noise, t)?;
    let edges = PosteriorTable::edges(noise, t)?;
    let mut out = SoftGraph::from_graph(&Graph::empty(n, g_t.a(), g_t.b())?);
    let mut buf = vec![0.0; g_t.a().max(g_t.b())];
    for i in 0..n {
        let a = g_t.a();
        nodes.marginalize(g_t.node(i), pred.node_probs(i), &mut buf[..a])?;
        out.node_probs_mut(i).copy_from_slice(&buf[..a]);
    }
    let b = g_t.b();
    for i in 0..n {
        for j in i + 1..n {
            edges.marginalize(g_t.edge(i, j), pred.edge_probs(i, j), &mut buf[..b])?;
            out.edge_probs_mut(i, j).copy_from_slice(&buf[..b]);
            out.edge_probs_mut(j, i).copy_from_slice(&buf[..b]);
        }
    }
    Ok(out)
}
