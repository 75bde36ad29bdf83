use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::par_generate;
use super::train::Objective;
use crate::denoiser::{noise_loss, DenoiserConfig, GraphTransformer, Head};
use crate::error::{Error, Result};
use crate::features::{assemble_features, FeatureBundle, FeatureFlags, MolecularTable};
use crate::graph::{DatasetStats, Graph};
use crate::nn::{accumulate_grads, AdamConfig, Gradients, ParamStore, Tape, Tensor};
use crate::noise::{apply_gaussian_noise, graph_shaped_noise, vp_params, ContinuousNoiseParams, ContinuousSchedule};

/// Gaussian baseline: the same transformer predicting the injected noise.
#[derive(Clone, Debug)]
pub struct ContinuousModel {
    pub net: GraphTransformer,
    pub schedule: ContinuousSchedule,
    pub stats: DatasetStats,
    pub table: MolecularTable,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Nearest one-hot graph: argmax per node and per edge `i < j`.
pub(crate) fn project(n: usize, a: usize, b: usize, x: &[f64], e: &[f64]) -> Result<Graph> {
    let mut g = Graph::empty(n, a, b)?;
    for i in 0..n {
        g.set_node(i, argmax(&x[i * a..(i + 1) * a]))?;
        for j in i + 1..n {
            let k = (i * n + j) * b;
            g.set_edge(i, j, argmax(&e[k..k + b]))?;
        }
    }
    Ok(g)
}

/// Deterministic part of the reverse update,
/// `z^t / α^{t|t−1} − (σ^{t|t−1})² / (α^{t|t−1} σ^t) ε̂`.
pub fn congress_mean(z: &[f64], eps_hat: &[f64], p: &ContinuousNoiseParams) -> Vec<f64> {
    let c = p.sigma_cond * p.sigma_cond / (p.alpha_cond * p.sigma);
    z.iter().zip(eps_hat).map(|(z, e)| z / p.alpha_cond - c * e).collect()
}

fn set_diagonal(e: &mut [f64], n: usize, b: usize, alpha: f64) {
    for i in 0..n {
        let k = (i * n + i) * b;
        e[k..k + b].fill(0.0);
        e[k] = alpha;
    }
}

impl ContinuousModel {
    pub fn new<R: Rng + ?Sized>(
        denoiser: &DenoiserConfig,
        features: FeatureFlags,
        schedule: ContinuousSchedule,
        stats: DatasetStats,
        table: MolecularTable,
        rng: &mut R,
    ) -> Result<Self> {
        let net = GraphTransformer::new(denoiser, stats.a(), stats.b(), features, Head::Noise, rng)?;
        Ok(ContinuousModel {
            net,
            schedule,
            stats,
            table,
        })
    }

    pub fn steps(&self) -> usize {
        self.schedule.steps()
    }

    /// Structural features of the argmax projection of a continuous state.
    fn features(&self, n: usize, x: &[f64], e: &[f64], t: usize) -> Result<FeatureBundle> {
        let g = project(n, self.stats.a(), self.stats.b(), x, e)?;
        assemble_features(&g, t, self.steps(), self.net.features, &self.table)
    }

    /// Noise-prediction loss at a uniform timestep, with gradients.
    pub fn loss_and_grads<R: Rng + ?Sized>(&self, g: &Graph, rng: &mut R) -> Result<(f64, Gradients)> {
        if g.a() != self.stats.a() || g.b() != self.stats.b() {
            return Err(Error::InvalidGraph(format!(
                "graph has (a, b) = ({}, {}), model expects ({}, {})",
                g.a(),
                g.b(),
                self.stats.a(),
                self.stats.b()
            )));
        }
        let t = rng.random_range(1..=self.steps());
        let z = apply_gaussian_noise(g, t, &self.schedule, rng)?;
        let n = g.n();
        let feats = self.features(n, &z.x, &z.e, t)?;
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![n, g.a()], z.x)?);
        let e = tape.leaf(Tensor::new(vec![n, n, g.b()], z.e)?);
        let out = self.net.forward(&mut tape, x, e, &feats)?;
        let loss = noise_loss(&mut tape, &out, &z.eps_x, &z.eps_e)?;
        let value = tape.value(loss).item();
        Ok((value, tape.backward(loss)?))
    }

    /// One reverse iteration from `(x, e)` at time `t`; the edge diagonal is
    /// reset to the noise-free `α^{t−1}` one-hot of "no edge".
    pub fn reverse_step<R: Rng + ?Sized>(
        &self,
        n: usize,
        x: &[f64],
        e: &[f64],
        t: usize,
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = vp_params(t, &self.schedule)?;
        let feats = self.features(n, x, e, t)?;
        let (hx, he) = self.net.predict_noise(x, e, &feats)?;
        let (ex, ee) = graph_shaped_noise(n, self.stats.a(), self.stats.b(), rng);
        let mut x_prev = congress_mean(x, &hx, &p);
        let mut e_prev = congress_mean(e, &he, &p);
        for (v, z) in x_prev.iter_mut().zip(&ex) {
            *v += p.sigma_post * z;
        }
        for (v, z) in e_prev.iter_mut().zip(&ee) {
            *v += p.sigma_post * z;
        }
        set_diagonal(&mut e_prev, n, self.stats.b(), p.alpha_prev);
        Ok((x_prev, e_prev))
    }

    /// Gaussian prior, `T` reverse iterations, then argmax.
    pub fn sample<R: Rng + ?Sized>(&self, n: Option<usize>, rng: &mut R) -> Result<Graph> {
        let n = n.unwrap_or_else(|| self.stats.sample_node_count(rng));
        if n == 0 {
            return Err(Error::arg("graph size must be at least 1"));
        }
        let (a, b) = (self.stats.a(), self.stats.b());
        let (mut x, mut e) = graph_shaped_noise(n, a, b, rng);
        set_diagonal(&mut e, n, b, self.schedule.alpha(self.steps()));
        for t in (1..=self.steps()).rev() {
            (x, e) = self.reverse_step(n, &x, &e, t, rng)?;
        }
        if x.iter().chain(&e).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("continuous sampler diverged".into()));
        }
        project(n, a, b, &x, &e)
    }

    pub fn sample_many(&self, count: usize, n: Option<usize>, seed: u64) -> Result<Vec<Graph>> {
        par_generate(count, seed, |_, rng| self.sample(n, rng))
    }
}

/// Single-graph noise-prediction step with Adam.
pub fn congress_train_step<R: Rng + ?Sized>(
    model: &mut ContinuousModel,
    g: &Graph,
    adam: &AdamConfig,
    rng: &mut R,
) -> Result<f64> {
    let (loss, grads) = model.loss_and_grads(g, rng)?;
    model.net.store.zero_grad();
    accumulate_grads(&mut model.net.store, &grads)?;
    model.net.store.adam_step(adam);
    Ok(loss)
}

impl Objective for ContinuousModel {
    type Item = Graph;

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.net.store
    }

    fn item_loss(&self, item: &Graph, rng: &mut ChaCha8Rng) -> Result<(f64, Gradients)> {
        self.loss_and_grads(item, rng)
    }
}
