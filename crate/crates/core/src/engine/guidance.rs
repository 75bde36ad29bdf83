use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::train::{Objective, TrainConfig, Trainer};
use super::DiffusionModel;
use crate::denoiser::{DenoiserConfig, GraphTransformer, Head};
use crate::error::{Error, Result};
use crate::features::{assemble_features, FeatureBundle, FeatureFlags, MolecularTable};
use crate::graph::{collapse, Graph, SoftGraph};
use crate::nn::{Gradients, ParamStore, Tape, Tensor, Var};
use crate::noise::{apply_discrete_noise, NoiseModel};

/// Graph-level property predictor trained on noisy graphs.
#[derive(Clone, Debug)]
pub struct Regressor {
    pub net: GraphTransformer,
    pub noise: NoiseModel,
    pub table: MolecularTable,
}

impl Regressor {
    pub fn new<R: Rng + ?Sized>(
        config: &DenoiserConfig,
        features: FeatureFlags,
        targets: usize,
        noise: NoiseModel,
        table: MolecularTable,
        rng: &mut R,
    ) -> Result<Self> {
        if targets == 0 {
            return Err(Error::arg("regressor needs at least one target"));
        }
        let (a, b) = (noise.node_limit().len(), noise.edge_limit().len());
        let net = GraphTransformer::new(config, a, b, features, Head::Regression(targets), rng)?;
        Ok(Regressor { net, noise, table })
    }

    pub fn targets(&self) -> usize {
        match self.net.head {
            Head::Regression(k) => k,
            _ => unreachable!("regressor built with a regression head"),
        }
    }

    fn check_target(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.targets() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "target must be {} finite values, got {y:?}",
                self.targets()
            )));
        }
        Ok(())
    }

    /// `ŷ` for the one-hot encoding of `g_t`.
    fn forward(&self, tape: &mut Tape, g_t: &Graph, t: usize) -> Result<Var> {
        let n = g_t.n();
        let feats = assemble_features(g_t, t, self.noise.steps(), self.net.features, &self.table)?;
        let x = tape.leaf(Tensor::new(vec![n, g_t.a()], g_t.node_onehot())?);
        let e = tape.leaf(Tensor::new(vec![n, n, g_t.b()], g_t.edge_onehot())?);
        Ok(self.net.forward(tape, x, e, &feats)?.y)
    }

    pub fn predict(&self, g_t: &Graph, t: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let y = self.forward(&mut tape, g_t, t)?;
        Ok(tape.value(y).data.clone())
    }

    /// `Σ_k (ŷ_k − y_k)²` with `ŷ` from the network.
    fn squared_error(&self, tape: &mut Tape, y_hat: Var, y: &[f64]) -> Result<Var> {
        let target = tape.leaf(Tensor::new(vec![1, y.len()], y.to_vec())?);
        let d = tape.sub(y_hat, target)?;
        let sq = tape.mul(d, d)?;
        Ok(tape.sum_all(sq))
    }

    /// Mean squared error over the `k` targets on a uniformly noised copy of `g`.
    pub fn loss_and_grads<R: Rng + ?Sized>(&self, g: &Graph, y: &[f64], rng: &mut R) -> Result<(f64, Gradients)> {
        self.check_target(y)?;
        let t = rng.random_range(1..=self.noise.steps());
        let g_t = apply_discrete_noise(g, t, &self.noise, rng)?;
        let mut tape = Tape::new();
        let y_hat = self.forward(&mut tape, &g_t, t)?;
        let se = self.squared_error(&mut tape, y_hat, y)?;
        let loss = tape.scale(se, 1.0 / y.len() as f64);
        let value = tape.value(loss).item();
        Ok((value, tape.backward(loss)?))
    }
}

impl Objective for Regressor {
    type Item = (Graph, Vec<f64>);

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.net.store
    }

    fn item_loss(&self, item: &Self::Item, rng: &mut ChaCha8Rng) -> Result<(f64, Gradients)> {
        self.loss_and_grads(&item.0, &item.1, rng)
    }
}

/// Trains `reg` on `(graph, target)` pairs and returns the per-step loss trace.
pub fn train_regressor(reg: &mut Regressor, data: &[(Graph, Vec<f64>)], config: &TrainConfig) -> Result<Vec<f64>> {
    let mut trainer = Trainer::new(config.clone(), data.len())?;
    trainer.run(reg, data, 0)?;
    Ok(trainer.losses)
}

/// `∇ ‖ŷ − y‖²` with respect to the one-hot node `[n, a]` and edge
/// `[n, n, b]` inputs of the regressor at `G^t`.
pub fn guidance_gradient(reg: &Regressor, g_t: &Graph, t: usize, target: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let feats = assemble_features(g_t, t, reg.noise.steps(), reg.net.features, &reg.table)?;
    let (gx, ge) = input_gradient(reg, &g_t.node_onehot(), &g_t.edge_onehot(), &feats, target)?;
    if gx.iter().chain(&ge).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite guidance gradient at t={t}")));
    }
    Ok((gx, ge))
}

/// `∇ ‖ŷ − y‖²` at arbitrary (relaxed) node and edge inputs.
pub(crate) fn input_gradient(
    reg: &Regressor,
    x: &[f64],
    e: &[f64],
    feats: &FeatureBundle,
    target: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    reg.check_target(target)?;
    let n = feats.n;
    let mut tape = Tape::new();
    let xv = tape.leaf(Tensor::new(vec![n, reg.net.a], x.to_vec())?);
    let ev = tape.leaf(Tensor::new(vec![n, n, reg.net.b], e.to_vec())?);
    let out = reg.net.forward(&mut tape, xv, ev, feats)?;
    let loss = reg.squared_error(&mut tape, out.y, target)?;
    let grads = tape.backward(loss)?;
    Ok((grads.get(xv).data, grads.get(ev).data))
}

/// Multiplies each candidate class by `exp(−scale · grad)` and renormalizes.
/// Edge classes use the gradient of both orientations `(i,j)` and `(j,i)`.
pub fn reweight(dist: &SoftGraph, grad_x: &[f64], grad_e: &[f64], scale: f64) -> Result<SoftGraph> {
    let (n, a, b) = (dist.n, dist.a, dist.b);
    if grad_x.len() != n * a || grad_e.len() != n * n * b {
        return Err(Error::Shape {
            op: "reweight",
            left: vec![n * a, n * n * b],
            right: vec![grad_x.len(), grad_e.len()],
        });
    }
    if !scale.is_finite() {
        return Err(Error::arg(format!("guidance scale must be finite, got {scale}")));
    }
    fn tilt(p: &[f64], g: impl Fn(usize) -> f64, scale: f64, out: &mut [f64]) -> Result<()> {
        let logits: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(k, &pk)| if pk > 0.0 { pk.ln() - scale * g(k) } else { f64::NEG_INFINITY })
            .collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::Numeric("guided distribution has no finite mass".into()));
        }
        let mut s = 0.0;
        for (o, l) in out.iter_mut().zip(&logits) {
            *o = (l - m).exp();
            s += *o;
        }
        out.iter_mut().for_each(|v| *v /= s);
        Ok(())
    }
    let mut out = dist.clone();
    for i in 0..n {
        tilt(dist.node_probs(i), |k| grad_x[i * a + k], scale, out.node_probs_mut(i))?;
    }
    let mut buf = vec![0.0; b];
    for i in 0..n {
        for j in i + 1..n {
            let g = |k: usize| grad_e[(i * n + j) * b + k] + grad_e[(j * n + i) * b + k];
            tilt(dist.edge_probs(i, j), g, scale, &mut buf)?;
            out.edge_probs_mut(i, j).copy_from_slice(&buf);
            out.edge_probs_mut(j, i).copy_from_slice(&buf);
        }
    }
    Ok(out)
}

impl DiffusionModel {
    /// Guided reverse step: the unguided distribution tilted by the regressor gradient at `G^t`.
    pub fn guided_distribution(
        &self,
        reg: &Regressor,
        g_t: &Graph,
        t: usize,
        target: &[f64],
        scale: f64,
    ) -> Result<SoftGraph> {
        let dist = self.reverse_distribution(g_t, t)?;
        let (gx, ge) = guidance_gradient(reg, g_t, t, target)?;
        reweight(&dist, &gx, &ge, scale)
    }

    /// Ancestral sampling steered towards `target`.
    pub fn guided_sample<R: Rng + ?Sized>(
        &self,
        reg: &Regressor,
        target: &[f64],
        scale: f64,
        n: Option<usize>,
        rng: &mut R,
    ) -> Result<Graph> {
        if reg.noise.steps() != self.steps() {
            return Err(Error::arg(format!(
                "regressor trained with {} steps, model uses {}",
                reg.noise.steps(),
                self.steps()
            )));
        }
        let n = self.resolve_size(n, rng)?;
        let mut g = self.noise.sample_prior(n, rng)?;
        for t in (1..=self.steps()).rev() {
            let dist = self.guided_distribution(reg, &g, t, target, scale)?;
            g = collapse(&dist, rng)?;
        }
        Ok(g)
    }
}
