//! Markov noise models.
//!
//! The discrete process corrupts every node and every unordered edge
//! independently with row-stochastic transition matrices
//! `Q^t = α^t I + (1 − α^t) 1 m'`, where `m` is either the uniform
//! distribution or the dataset marginal. Because `(1 m')² = 1 m'`, the
//! cumulative matrix keeps the same form with `ᾱ^t` in place of `α^t`.
//!
//! Time runs over `1..=T`; time `0` is the clean graph, so `Q̄^0 = I`. The
//! cosine schedule value at `t = 0` is kept in the table for reference only.
//!
//! The Gaussian (variance-preserving) model used by the continuous baseline
//! lives at the bottom of this file.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{sample_categorical, DatasetStats, Graph};

pub const DEFAULT_COSINE_OFFSET: f64 = 0.008;
pub const DEFAULT_STEPS: usize = 500;

/// Floor on the per-step signal ratio `(α^{t|t−1})²` of the continuous model.
pub const MIN_CONTINUOUS_STEP_RATIO: f64 = 1e-3;

/// `cos(0.5π (t/T + s) / (1 + s))²`, clamped to `[0, 1]`.
pub fn cosine_alpha_bar(t: usize, steps: usize, offset: f64) -> Result<f64> {
    if steps == 0 || t > steps {
        return Err(Error::arg(format!("timestep {t} outside 0..={steps}")));
    }
    if !(offset > 0.0) {
        return Err(Error::arg(format!("cosine offset must be positive, got {offset}")));
    }
    if t == steps {
        return Ok(0.0);
    }
    let angle = 0.5 * std::f64::consts::PI * (t as f64 / steps as f64 + offset) / (1.0 + offset);
    Ok(angle.cos().powi(2).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    offset: f64,
    alpha_bar: Vec<f64>,
    alpha: Vec<f64>,
}

impl NoiseSchedule {
    pub fn cosine(steps: usize, offset: f64) -> Result<Self> {
        let alpha_bar = (0..=steps)
            .map(|t| cosine_alpha_bar(t, steps, offset))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_alpha_bar(steps, offset, alpha_bar))
    }

    fn from_alpha_bar(steps: usize, offset: f64, alpha_bar: Vec<f64>) -> Self {
        let mut alpha = vec![1.0; steps + 1];
        if steps >= 1 {
            alpha[1] = alpha_bar[1];
        }
        for t in 2..=steps {
            alpha[t] = if alpha_bar[t - 1] == 0.0 {
                0.0
            } else {
                alpha_bar[t] / alpha_bar[t - 1]
            };
        }
        NoiseSchedule {
            steps,
            offset,
            alpha_bar,
            alpha,
        }
    }

    /// Rebuilds a schedule from [`NoiseSchedule::offset`] and the full
    /// `ᾱ^0..=ᾱ^T` table.
    pub fn from_table(offset: f64, alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 || alpha_bar.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::arg(format!("invalid schedule table {alpha_bar:?}")));
        }
        Ok(Self::from_alpha_bar(alpha_bar.len() - 1, offset, alpha_bar))
    }

    pub fn table(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Schedule with explicit cumulative values for `t = 1..=T`.
    pub fn from_cumulative(cumulative: &[f64]) -> Result<Self> {
        if cumulative.is_empty() {
            return Err(Error::arg("schedule needs at least one step"));
        }
        let mut alpha_bar = vec![1.0];
        let mut prev = 1.0;
        for &v in cumulative {
            if !(0.0..=1.0).contains(&v) || v > prev {
                return Err(Error::arg(format!(
                    "cumulative schedule must be nonincreasing in [0,1], got {cumulative:?}"
                )));
            }
            alpha_bar.push(v);
            prev = v;
        }
        Ok(Self::from_alpha_bar(cumulative.len(), 0.0, alpha_bar))
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Cosine value `ᾱ^t`; at `t = 0` this is the formula value, not 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// Cumulative signal level of the discrete process, with `Q̄^0 = I`.
    pub fn cumulative_alpha(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t]
        }
    }

    /// Per-step `α^t` for `t ≥ 1`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn beta(&self, t: usize) -> f64 {
        1.0 - self.alpha[t]
    }
}

/// Small dense row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    d: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    pub fn identity(d: usize) -> Self {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        StochasticMatrix { d, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::arg("matrix rows must be square"));
        }
        Ok(StochasticMatrix {
            d,
            data: rows.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn matmul(&self, other: &StochasticMatrix) -> StochasticMatrix {
        let d = self.d;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let v = self.get(i, k);
                for j in 0..d {
                    data[i * d + j] += v * other.get(k, j);
                }
            }
        }
        StochasticMatrix { d, data }
    }

    /// `m' Q` for a row vector `m`.
    pub fn left_apply(&self, m: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|j| (0..self.d).map(|i| m[i] * self.get(i, j)).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &StochasticMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
            && (0..self.d).all(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs() <= tol)
    }
}

fn check_distribution(m: &[f64], what: &str) -> Result<()> {
    let s: f64 = m.iter().sum();
    if m.is_empty() || m.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
        return Err(Error::arg(format!("{what} is not a probability vector: {m:?}")));
    }
    Ok(())
}

/// `α I + (1 − α) 1 m'`.
fn mix_with_limit(alpha: f64, limit: &[f64]) -> StochasticMatrix {
    let d = limit.len();
    let beta = 1.0 - alpha;
    let mut data = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            data[i * d + j] = beta * limit[j];
        }
        data[i * d + i] += alpha;
    }
    StochasticMatrix { d, data }
}

pub fn uniform_transition(alpha: f64, d: usize) -> Result<StochasticMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::arg(format!("alpha {alpha} outside [0,1]")));
    }
    if d == 0 {
        return Err(Error::arg("transition dimension must be positive"));
    }
    Ok(mix_with_limit(alpha, &vec![1.0 / d as f64; d]))
}

/// `α I + β 1 m'` with `α + β = 1`.
pub fn marginal_transition(alpha: f64, beta: f64, m: &[f64]) -> Result<StochasticMatrix> {
    if !(0.0..=1.0).contains(&alpha) || (alpha + beta - 1.0).abs() > 1e-12 {
        return Err(Error::arg(format!(
            "need alpha in [0,1] and alpha + beta = 1, got ({alpha}, {beta})"
        )));
    }
    check_distribution(m, "marginal")?;
    Ok(mix_with_limit(alpha, m))
}

/// Closed-form `Q̄ = ᾱ I + β̄ 1 m'` for a limit distribution `m`.
pub fn cumulative_transition(alpha_bar: f64, limit: &[f64]) -> Result<StochasticMatrix> {
    if !(0.0..=1.0).contains(&alpha_bar) {
        return Err(Error::arg(format!("alpha_bar {alpha_bar} outside [0,1]")));
    }
    check_distribution(limit, "limit distribution")?;
    Ok(mix_with_limit(alpha_bar, limit))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransitionKind {
    Uniform,
    #[default]
    Marginal,
}

impl std::str::FromStr for TransitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(TransitionKind::Uniform),
            "marginal" => Ok(TransitionKind::Marginal),
            other => Err(Error::arg(format!("unknown transition kind '{other}'"))),
        }
    }
}

/// Limit distributions `(q_X, q_E)` of a transition kind.
pub fn limit_distributions(stats: &DatasetStats, kind: TransitionKind) -> (Vec<f64>, Vec<f64>) {
    match kind {
        TransitionKind::Uniform => {
            let (a, b) = (stats.a(), stats.b());
            (vec![1.0 / a as f64; a], vec![1.0 / b as f64; b])
        }
        TransitionKind::Marginal => (stats.node_marginals.clone(), stats.edge_marginals.clone()),
    }
}

/// Schedule plus node and edge limit distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    pub schedule: NoiseSchedule,
    pub kind: TransitionKind,
    node_limit: Vec<f64>,
    edge_limit: Vec<f64>,
}

impl NoiseModel {
    pub fn new(schedule: NoiseSchedule, kind: TransitionKind, stats: &DatasetStats) -> Result<Self> {
        let (node_limit, edge_limit) = limit_distributions(stats, kind);
        check_distribution(&node_limit, "node limit")?;
        check_distribution(&edge_limit, "edge limit")?;
        Ok(NoiseModel {
            schedule,
            kind,
            node_limit,
            edge_limit,
        })
    }

    /// Noise model with explicit limit distributions.
    pub fn from_limits(
        schedule: NoiseSchedule,
        kind: TransitionKind,
        node_limit: Vec<f64>,
        edge_limit: Vec<f64>,
    ) -> Result<Self> {
        check_distribution(&node_limit, "node limit")?;
        check_distribution(&edge_limit, "edge limit")?;
        Ok(NoiseModel {
            schedule,
            kind,
            node_limit,
            edge_limit,
        })
    }

    pub fn steps(&self) -> usize {
        self.schedule.steps()
    }

    pub fn node_limit(&self) -> &[f64] {
        &self.node_limit
    }

    pub fn edge_limit(&self) -> &[f64] {
        &self.edge_limit
    }

    pub fn node_step(&self, t: usize) -> StochasticMatrix {
        mix_with_limit(self.schedule.alpha(t), &self.node_limit)
    }

    pub fn edge_step(&self, t: usize) -> StochasticMatrix {
        mix_with_limit(self.schedule.alpha(t), &self.edge_limit)
    }

    pub fn node_cumulative(&self, t: usize) -> StochasticMatrix {
        if t == 0 {
            return StochasticMatrix::identity(self.node_limit.len());
        }
        mix_with_limit(self.schedule.cumulative_alpha(t), &self.node_limit)
    }

    pub fn edge_cumulative(&self, t: usize) -> StochasticMatrix {
        if t == 0 {
            return StochasticMatrix::identity(self.edge_limit.len());
        }
        mix_with_limit(self.schedule.cumulative_alpha(t), &self.edge_limit)
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Graph> {
        let mut g = Graph::empty(n, self.node_limit.len(), self.edge_limit.len())?;
        for i in 0..n {
            g.set_node(i, sample_categorical(&self.node_limit, rng))?;
        }
        for i in 0..n {
            for j in i + 1..n {
                g.set_edge(i, j, sample_categorical(&self.edge_limit, rng))?;
            }
        }
        Ok(g)
    }
}

/// Samples `G^t ~ q(G^t | G)`: nodes from `x_i Q̄_X^t`, edges `i < j` from
/// `e_ij Q̄_E^t`, then mirrored.
pub fn apply_discrete_noise<R: Rng + ?Sized>(
    g: &Graph,
    t: usize,
    model: &NoiseModel,
    rng: &mut R,
) -> Result<Graph> {
    if t == 0 || t > model.steps() {
        return Err(Error::arg(format!(
            "noise timestep {t} outside 1..={}",
            model.steps()
        )));
    }
    let qx = model.node_cumulative(t);
    let qe = model.edge_cumulative(t);
    let n = g.n();
    let mut out = Graph::empty(n, g.a(), g.b())?;
    for i in 0..n {
        out.set_node(i, sample_categorical(qx.row(g.node(i)), rng))?;
    }
    for i in 0..n {
        for j in i + 1..n {
            out.set_edge(i, j, sample_categorical(qe.row(g.edge(i, j)), rng))?;
        }
    }
    Ok(out)
}

/// `q(z^{t−1} | z^t, x) ∝ z^t (Q^t)' ⊙ x Q̄^{t−1}` for class indices.
pub fn posterior_single(
    z_t: usize,
    x: usize,
    q_t: &StochasticMatrix,
    qbar_prev: &StochasticMatrix,
) -> Result<Vec<f64>> {
    let d = q_t.dim();
    if qbar_prev.dim() != d || z_t >= d || x >= d {
        return Err(Error::Shape {
            op: "posterior",
            left: vec![d, z_t, x],
            right: vec![qbar_prev.dim()],
        });
    }
    let mut v: Vec<f64> = (0..d).map(|k| q_t.get(k, z_t) * qbar_prev.get(x, k)).collect();
    let mass: f64 = v.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::Numeric(format!(
            "posterior has zero mass for z_t={z_t}, x={x}"
        )));
    }
    for p in &mut v {
        *p /= mass;
    }
    Ok(v)
}

pub fn sample_prior<R: Rng + ?Sized>(
    n: usize,
    stats: &DatasetStats,
    kind: TransitionKind,
    rng: &mut R,
) -> Result<Graph> {
    if n == 0 {
        return Err(Error::arg("graph size must be at least 1"));
    }
    let (qx, qe) = limit_distributions(stats, kind);
    let mut g = Graph::empty(n, qx.len(), qe.len())?;
    for i in 0..n {
        g.set_node(i, sample_categorical(&qx, rng))?;
    }
    for i in 0..n {
        for j in i + 1..n {
            g.set_edge(i, j, sample_categorical(&qe, rng))?;
        }
    }
    Ok(g)
}

/// Signal levels `α^t` with `(σ^t)² = 1 − (α^t)²` for `t = 0..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousSchedule {
    alpha: Vec<f64>,
    sigma: Vec<f64>,
}

/// Per-step parameters of the variance-preserving process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuousNoiseParams {
    pub t: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub alpha_prev: f64,
    pub sigma_prev: f64,
    /// `α^{t|t−1} = α^t / α^{t−1}`.
    pub alpha_cond: f64,
    /// `σ^{t|t−1}`.
    pub sigma_cond: f64,
    /// `σ^{t→t−1} = σ^{t|t−1} σ^{t−1} / σ^t`.
    pub sigma_post: f64,
}

impl ContinuousSchedule {
    /// Derives `α^t = sqrt(ᾱ^t)` from the cosine table, with the per-step
    /// ratio floored at [`MIN_CONTINUOUS_STEP_RATIO`] so the last reverse
    /// step stays finite.
    pub fn from_discrete(schedule: &NoiseSchedule) -> Self {
        let steps = schedule.steps();
        let mut abar = Vec::with_capacity(steps + 1);
        abar.push(schedule.alpha_bar(0));
        for t in 1..=steps {
            let prev = abar[t - 1];
            let ratio = if prev > 0.0 {
                schedule.alpha_bar(t) / prev
            } else {
                0.0
            };
            abar.push(prev * ratio.max(MIN_CONTINUOUS_STEP_RATIO));
        }
        let alpha: Vec<f64> = abar.iter().map(|v: &f64| v.sqrt()).collect();
        Self::from_alphas(alpha).expect("cosine schedule is monotone")
    }

    /// Explicit `α^t` for `t = 0..=T`; must be nonincreasing in `(0, 1]`.
    pub fn from_alphas(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::arg("continuous schedule needs at least one step"));
        }
        for w in alpha.windows(2) {
            if !(w[1] > 0.0 && w[1] <= w[0] && w[0] <= 1.0) {
                return Err(Error::arg(format!(
                    "continuous alphas must be nonincreasing in (0,1]: {alpha:?}"
                )));
            }
        }
        let sigma = alpha.iter().map(|a| (1.0 - a * a).max(0.0).sqrt()).collect();
        Ok(ContinuousSchedule { alpha, sigma })
    }

    pub fn steps(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t]
    }
}

pub fn vp_params(t: usize, schedule: &ContinuousSchedule) -> Result<ContinuousNoiseParams> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::arg(format!(
            "timestep {t} outside 1..={}",
            schedule.steps()
        )));
    }
    let (alpha, sigma) = (schedule.alpha(t), schedule.sigma(t));
    let (alpha_prev, sigma_prev) = (schedule.alpha(t - 1), schedule.sigma(t - 1));
    let alpha_cond = alpha / alpha_prev;
    let var_cond = sigma * sigma - alpha_cond * alpha_cond * sigma_prev * sigma_prev;
    if var_cond < -1e-12 {
        return Err(Error::Numeric(format!(
            "negative conditional variance {var_cond} at t={t}"
        )));
    }
    let sigma_cond = var_cond.max(0.0).sqrt();
    let sigma_post = if sigma > 0.0 {
        sigma_cond * sigma_prev / sigma
    } else {
        0.0
    };
    Ok(ContinuousNoiseParams {
        t,
        alpha,
        sigma,
        alpha_prev,
        sigma_prev,
        alpha_cond,
        sigma_cond,
        sigma_post,
    })
}

/// Noisy continuous graph together with the injected noise.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianNoised {
    pub n: usize,
    /// n×a.
    pub x: Vec<f64>,
    /// n×n×b; symmetric, diagonal noise-free.
    pub e: Vec<f64>,
    pub eps_x: Vec<f64>,
    pub eps_e: Vec<f64>,
}

/// Standard normal noise shaped like a graph: symmetric edges, zero diagonal.
pub fn graph_shaped_noise<R: Rng + ?Sized>(
    n: usize,
    a: usize,
    b: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let eps_x: Vec<f64> = (0..n * a).map(|_| rng.sample(StandardNormal)).collect();
    let mut eps_e = vec![0.0; n * n * b];
    for i in 0..n {
        for j in i + 1..n {
            for k in 0..b {
                let v: f64 = rng.sample(StandardNormal);
                eps_e[(i * n + j) * b + k] = v;
                eps_e[(j * n + i) * b + k] = v;
            }
        }
    }
    (eps_x, eps_e)
}

/// `z^t = α^t (X, E) + σ^t (ε_X, ε_E)`.
pub fn apply_gaussian_noise<R: Rng + ?Sized>(
    g: &Graph,
    t: usize,
    schedule: &ContinuousSchedule,
    rng: &mut R,
) -> Result<GaussianNoised> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::arg(format!(
            "timestep {t} outside 1..={}",
            schedule.steps()
        )));
    }
    let (alpha, sigma) = (schedule.alpha(t), schedule.sigma(t));
    let (eps_x, eps_e) = graph_shaped_noise(g.n(), g.a(), g.b(), rng);
    let x = g
        .node_onehot()
        .iter()
        .zip(&eps_x)
        .map(|(v, e)| alpha * v + sigma * e)
        .collect();
    let e = g
        .edge_onehot()
        .iter()
        .zip(&eps_e)
        .map(|(v, e)| alpha * v + sigma * e)
        .collect();
    Ok(GaussianNoised {
        n: g.n(),
        x,
        e,
        eps_x,
        eps_e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{compute_stats, encode_graph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cosine_values() {
        assert_eq!(cosine_alpha_bar(10, 10, 0.008).unwrap(), 0.0);
        // high-precision evaluation of the formula
        assert!(close(cosine_alpha_bar(0, 10, 0.008).unwrap(), 0.999_845_2, 1e-6));
        assert!(close(cosine_alpha_bar(50, 100, 0.008).unwrap(), 0.493_767, 1e-5));
        assert!(cosine_alpha_bar(11, 10, 0.008).is_err());
        assert!(cosine_alpha_bar(1, 10, 0.0).is_err());
    }

    #[test]
    fn schedule_invariants() {
        let s = NoiseSchedule::cosine(500, DEFAULT_COSINE_OFFSET).unwrap();
        assert_eq!(s.alpha_bar(500), 0.0);
        let mut prod = 1.0;
        for t in 1..=500 {
            prod *= s.alpha(t);
            assert!(close(prod, s.cumulative_alpha(t), 1e-10), "t={t}");
            assert!(s.alpha_bar(t) <= s.alpha_bar(t - 1));
        }
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform_transition(1.0, 3).unwrap(), StochasticMatrix::identity(3));
        let q = uniform_transition(0.0, 2).unwrap();
        assert_eq!(q.row(0), &[0.5, 0.5]);
        let q = uniform_transition(0.5, 2).unwrap();
        assert_eq!(q.row(0), &[0.75, 0.25]);
        assert_eq!(q.row(1), &[0.25, 0.75]);
        assert!(uniform_transition(1.5, 2).is_err());
    }

    #[test]
    fn marginal_examples() {
        let m = [0.9, 0.1];
        let q = marginal_transition(0.0, 1.0, &m).unwrap();
        assert_eq!(q.row(1), &m);
        let q = marginal_transition(0.5, 0.5, &m).unwrap();
        assert!(close(q.get(0, 0), 0.95, 1e-15) && close(q.get(0, 1), 0.05, 1e-15));
        assert!(close(q.get(1, 0), 0.45, 1e-15) && close(q.get(1, 1), 0.55, 1e-15));
        let u = [0.25; 4];
        assert_eq!(
            marginal_transition(0.3, 0.7, &u).unwrap(),
            uniform_transition(0.3, 4).unwrap()
        );
        assert!(marginal_transition(0.5, 0.5, &[0.5, 0.6]).is_err());
    }

    #[test]
    fn cumulative_matches_product() {
        let s = NoiseSchedule::cosine(50, 0.008).unwrap();
        let m = [0.4, 0.3, 0.2, 0.1];
        let mut prod = StochasticMatrix::identity(4);
        for t in 1..=50 {
            prod = prod.matmul(&marginal_transition(s.alpha(t), s.beta(t), &m).unwrap());
            let closed = cumulative_transition(s.cumulative_alpha(t), &m).unwrap();
            assert!(prod.max_abs_diff(&closed) < 1e-10);
        }
        assert_eq!(cumulative_transition(1.0, &m).unwrap(), StochasticMatrix::identity(4));
        let limit = cumulative_transition(0.0, &m).unwrap();
        for i in 0..4 {
            assert_eq!(limit.row(i), &m);
        }
    }

    #[test]
    fn marginal_is_stationary() {
        let m = [0.6, 0.25, 0.15];
        let q = marginal_transition(0.37, 0.63, &m).unwrap();
        for (x, y) in q.left_apply(&m).iter().zip(&m) {
            assert!(close(*x, *y, 1e-12));
        }
    }

    fn two_class_stats() -> DatasetStats {
        let g = encode_graph(&[0, 1, 0, 0], &[0; 16], 2, 2).unwrap();
        let mut s = compute_stats(&[g]).unwrap();
        s.edge_marginals = vec![0.7, 0.3];
        s
    }

    #[test]
    fn noise_identity_and_limit() {
        let stats = two_class_stats();
        let sched = NoiseSchedule::from_cumulative(&[1.0, 0.0]).unwrap();
        let model = NoiseModel::new(sched, TransitionKind::Marginal, &stats).unwrap();
        let g = encode_graph(&[1], &[0], 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(apply_discrete_noise(&g, 1, &model, &mut rng).unwrap(), g);
        let hits = (0..10_000)
            .filter(|_| apply_discrete_noise(&g, 2, &model, &mut rng).unwrap().node(0) == 0)
            .count();
        assert!(close(hits as f64 / 1e4, stats.node_marginals[0], 0.02));
    }

    #[test]
    fn noise_binomial_rate() {
        // uniform a=2 with alpha_bar = 0.9 gives Q̄ = [[0.95, 0.05], ...]
        let stats = two_class_stats();
        let sched = NoiseSchedule::from_cumulative(&[0.9]).unwrap();
        let model = NoiseModel::new(sched, TransitionKind::Uniform, &stats).unwrap();
        assert!(close(model.node_cumulative(1).get(0, 0), 0.95, 1e-15));
        let g = encode_graph(&[0], &[0], 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let hits = (0..10_000)
            .filter(|_| apply_discrete_noise(&g, 1, &model, &mut rng).unwrap().node(0) == 0)
            .count();
        assert!(close(hits as f64 / 1e4, 0.95, 0.02));
    }

    #[test]
    fn posterior_examples() {
        let id = StochasticMatrix::identity(3);
        let q = uniform_transition(0.4, 3).unwrap();
        for z in 0..3 {
            assert_eq!(posterior_single(z, 1, &q, &id).unwrap(), vec![0.0, 1.0, 0.0]);
        }
        // two-step Bayes enumeration
        let q1 = uniform_transition(0.9, 2).unwrap();
        let q2 = uniform_transition(0.8, 2).unwrap();
        let post = posterior_single(1, 0, &q2, &q1).unwrap();
        let joint: Vec<f64> = (0..2).map(|z1| q1.get(0, z1) * q2.get(z1, 1)).collect();
        let total: f64 = joint.iter().sum();
        for k in 0..2 {
            assert!(close(post[k], joint[k] / total, 1e-12));
        }
        assert_eq!(
            posterior_single(0, 1, &StochasticMatrix::identity(2), &StochasticMatrix::identity(2))
                .map_err(|e| e.to_string())
                .unwrap_err()
                .contains("zero mass"),
            true
        );
    }

    #[test]
    fn prior_frequencies() {
        let stats = two_class_stats();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut class0 = 0usize;
        let total = 100_000;
        let mut draws = 0;
        while draws < total {
            let g = sample_prior(10, &stats, TransitionKind::Marginal, &mut rng).unwrap();
            class0 += g.nodes().iter().filter(|&&c| c == 0).count();
            draws += 10;
        }
        assert!(close(class0 as f64 / draws as f64, 0.75, 0.01));

        let mut edges = 0usize;
        let mut pairs = 0usize;
        while pairs < 100_000 {
            let g = sample_prior(10, &stats, TransitionKind::Uniform, &mut rng).unwrap();
            edges += g.edge_count();
            pairs += 45;
        }
        assert!(close(edges as f64 / pairs as f64, 0.5, 0.01));
        assert_eq!(sample_prior(1, &stats, TransitionKind::Uniform, &mut rng).unwrap().edge_count(), 0);
    }

    #[test]
    fn vp_examples() {
        let cs = ContinuousSchedule::from_alphas(vec![1.0, 0.9, 0.9, 0.5]).unwrap();
        let p = vp_params(2, &cs).unwrap();
        assert_eq!(p.alpha_cond, 1.0);
        assert_eq!(p.sigma_cond, 0.0);
        let s = NoiseSchedule::cosine(50, 0.008).unwrap();
        let cs = ContinuousSchedule::from_discrete(&s);
        for t in 1..=50 {
            let p = vp_params(t, &cs).unwrap();
            assert!(close(p.sigma * p.sigma + p.alpha * p.alpha, 1.0, 1e-12));
            assert!(close(p.sigma_post, p.sigma_cond * p.sigma_prev / p.sigma, 1e-15));
            assert!(p.sigma_cond.is_finite() && p.alpha_cond > 0.0);
        }
        assert!(vp_params(0, &cs).is_err());
    }

    #[test]
    fn gaussian_noise_contracts() {
        let g = encode_graph(&[0, 1, 1], &[0, 1, 0, 1, 0, 1, 0, 1, 0], 2, 2).unwrap();
        let cs = ContinuousSchedule::from_alphas(vec![1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = apply_gaussian_noise(&g, 1, &cs, &mut rng).unwrap();
        assert_eq!(z.x, g.node_onehot());
        assert_eq!(z.e, g.edge_onehot());

        let cs = ContinuousSchedule::from_alphas(vec![1.0, 0.8]).unwrap();
        let n = 3;
        let mut mean = vec![0.0; n * 2];
        let draws = 10_000;
        for _ in 0..draws {
            let z = apply_gaussian_noise(&g, 1, &cs, &mut rng).unwrap();
            for (m, v) in mean.iter_mut().zip(&z.x) {
                *m += v / draws as f64;
            }
            for i in 0..n {
                for j in 0..n {
                    for k in 0..2 {
                        assert_eq!(z.e[(i * n + j) * 2 + k], z.e[(j * n + i) * 2 + k]);
                    }
                }
            }
        }
        let sigma = cs.sigma(1);
        for (m, x) in mean.iter().zip(g.node_onehot()) {
            assert!(close(*m, 0.8 * x, 3.0 * sigma / 100.0));
        }
    }
}
