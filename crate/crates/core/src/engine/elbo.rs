use rand::Rng;

use super::{reverse_distributions, DiffusionModel};
use crate::error::{Error, Result};
use crate::graph::{Graph, SoftGraph};
use crate::noise::{apply_discrete_noise, posterior_single};

/// Largest number of noisy states [`ElboEstimator::Exhaustive`] will enumerate per step.
pub const MAX_EXHAUSTIVE_STATES: usize = 4096;

/// How the expectation over `G^t ~ q(G^t | G)` is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElboEstimator {
    /// Average over this many sampled `G^t` per step.
    MonteCarlo(usize),
    /// Exact sum over every reachable `G^t`.
    Exhaustive,
}

/// Terms of the variational bound, in nats.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboReport {
    pub n: usize,
    /// `ln p(n)`; `-inf` if the size never occurs in the training data.
    pub log_pn: f64,
    /// `KL[q(G^T | G) ‖ q_X × q_E]`.
    pub prior: f64,
    /// `L_t` for `t = 2..=T`, in that order.
    pub diffusion: Vec<f64>,
    /// `E_{q(G^1 | G)} ln p_θ(G | G^1)`.
    pub reconstruction: f64,
    /// `ln p(n) − prior − Σ L_t + reconstruction`.
    pub total: f64,
}

impl ElboReport {
    pub fn diffusion_total(&self) -> f64 {
        self.diffusion.iter().sum()
    }
}

/// `Σ_k q_k ln(q_k / p_k)`; infinite when `p` misses mass of `q`.
pub(crate) fn kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(&qk, _)| qk > 0.0)
        .map(|(&qk, &pk)| if pk > 0.0 { qk * (qk / pk).ln() } else { f64::INFINITY })
        .sum()
}

/// Every `G^t` with `q(G^t | G) > 0`, with its probability.
fn enumerate_noisy(g: &Graph, model: &DiffusionModel, t: usize) -> Result<Vec<(Graph, f64)>> {
    let n = g.n();
    let qx = model.noise.node_cumulative(t);
    let qe = model.noise.edge_cumulative(t);
    let mut slots: Vec<Vec<(usize, f64)>> = Vec::new();
    let support = |row: &[f64]| -> Vec<(usize, f64)> {
        row.iter().copied().enumerate().filter(|&(_, p)| p > 0.0).collect()
    };
    for i in 0..n {
        slots.push(support(qx.row(g.node(i))));
    }
    for i in 0..n {
        for j in i + 1..n {
            slots.push(support(qe.row(g.edge(i, j))));
        }
    }
    let count = slots
        .iter()
        .try_fold(1usize, |acc, s| acc.checked_mul(s.len()).filter(|&c| c <= MAX_EXHAUSTIVE_STATES));
    if count.is_none() {
        return Err(Error::arg(format!(
            "exhaustive bound needs more than {MAX_EXHAUSTIVE_STATES} states at t={t}; use Monte Carlo"
        )));
    }
    let mut states = Vec::new();
    let mut digits = vec![0usize; slots.len()];
    loop {
        let mut h = Graph::empty(n, g.a(), g.b())?;
        let mut w = 1.0;
        let mut s = 0;
        for i in 0..n {
            let (c, p) = slots[s][digits[s]];
            h.set_node(i, c)?;
            w *= p;
            s += 1;
        }
        for i in 0..n {
            for j in i + 1..n {
                let (c, p) = slots[s][digits[s]];
                h.set_edge(i, j, c)?;
                w *= p;
                s += 1;
            }
        }
        states.push((h, w));
        let mut k = 0;
        loop {
            if k == slots.len() {
                return Ok(states);
            }
            digits[k] += 1;
            if digits[k] < slots[k].len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

impl DiffusionModel {
    /// `p_θ(G^{t−1} | G^t)`.
    pub fn reverse_distribution(&self, g_t: &Graph, t: usize) -> Result<SoftGraph> {
        let pred = self.net.predict(g_t, &self.features(g_t, t)?)?;
        reverse_distributions(g_t, &pred, t, &self.noise)
    }

    /// `Σ KL[q(G^{t−1} | G^t, G) ‖ p_θ(G^{t−1} | G^t)]` over nodes and edges `i < j`.
    fn step_kl(&self, g: &Graph, g_t: &Graph, t: usize) -> Result<f64> {
        let p = self.reverse_distribution(g_t, t)?;
        let (qx, qe) = (self.noise.node_step(t), self.noise.edge_step(t));
        let (px, pe) = (self.noise.node_cumulative(t - 1), self.noise.edge_cumulative(t - 1));
        let n = g.n();
        let mut total = 0.0;
        for i in 0..n {
            let q = posterior_single(g_t.node(i), g.node(i), &qx, &px)?;
            total += kl(&q, p.node_probs(i));
        }
        for i in 0..n {
            for j in i + 1..n {
                let q = posterior_single(g_t.edge(i, j), g.edge(i, j), &qe, &pe)?;
                total += kl(&q, p.edge_probs(i, j));
            }
        }
        Ok(total)
    }

    /// `ln p_θ(G | G^1)`.
    fn reconstruction_term(&self, g: &Graph, g1: &Graph) -> Result<f64> {
        let p = self.reverse_distribution(g1, 1)?;
        let n = g.n();
        let mut total = 0.0;
        for i in 0..n {
            total += p.node_probs(i)[g.node(i)].ln();
        }
        for i in 0..n {
            for j in i + 1..n {
                total += p.edge_probs(i, j)[g.edge(i, j)].ln();
            }
        }
        Ok(total)
    }

    fn expect<R, F>(&self, g: &Graph, t: usize, est: ElboEstimator, rng: &mut R, f: F) -> Result<f64>
    where
        R: Rng + ?Sized,
        F: Fn(&Graph) -> Result<f64>,
    {
        match est {
            ElboEstimator::MonteCarlo(draws) => {
                let mut acc = 0.0;
                for _ in 0..draws {
                    acc += f(&apply_discrete_noise(g, t, &self.noise, rng)?)?;
                }
                Ok(acc / draws as f64)
            }
            ElboEstimator::Exhaustive => {
                let mut acc = 0.0;
                for (h, w) in enumerate_noisy(g, self, t)? {
                    let v = f(&h)?;
                    // zero-weight states are never enumerated, so 0·inf cannot occur
                    acc += w * v;
                }
                Ok(acc)
            }
        }
    }

    /// Variational lower bound on `ln p_θ(G)`.
    pub fn elbo<R: Rng + ?Sized>(&self, g: &Graph, est: ElboEstimator, rng: &mut R) -> Result<ElboReport> {
        self.check_graph(g)?;
        if est == ElboEstimator::MonteCarlo(0) {
            return Err(Error::arg("Monte Carlo bound needs at least one draw"));
        }
        let steps = self.steps();
        let n = g.n();
        let log_pn = self.stats.log_prob_node_count(n);

        let (qx, qe) = (self.noise.node_cumulative(steps), self.noise.edge_cumulative(steps));
        let mut prior = 0.0;
        for i in 0..n {
            prior += kl(qx.row(g.node(i)), self.noise.node_limit());
        }
        for i in 0..n {
            for j in i + 1..n {
                prior += kl(qe.row(g.edge(i, j)), self.noise.edge_limit());
            }
        }

        let mut diffusion = Vec::with_capacity(steps.saturating_sub(1));
        for t in 2..=steps {
            diffusion.push(self.expect(g, t, est, rng, |h| self.step_kl(g, h, t))?);
        }
        let reconstruction = self.expect(g, 1, est, rng, |h| self.reconstruction_term(g, h))?;
        let total = log_pn - prior - diffusion.iter().sum::<f64>() + reconstruction;
        Ok(ElboReport {
            n,
            log_pn,
            prior,
            diffusion,
            reconstruction,
            total,
        })
    }
}
