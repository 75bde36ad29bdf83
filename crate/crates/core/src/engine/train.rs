use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stream_rng, DiffusionModel};
use crate::denoiser::discrete_loss;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{accumulate_grads, AdamConfig, Gradients, ParamStore, Tape, Tensor};
use crate::noise::apply_discrete_noise;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    /// Graphs per optimizer step; their gradients are summed.
    pub batch_size: usize,
    pub lr: f64,
    /// Gradient-norm clip; 0 disables clipping.
    pub clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            batch_size: 1,
            lr: 1e-3,
            clip: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.clip >= 0.0) {
            return Err(Error::Config(format!("clip must be nonnegative, got {}", self.clip)));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// A model trained by summing per-item losses.
pub trait Objective: Sync {
    type Item: Sync;

    fn store_mut(&mut self) -> &mut ParamStore;

    /// Loss on one training item and its parameter gradients.
    fn item_loss(&self, item: &Self::Item, rng: &mut ChaCha8Rng) -> Result<(f64, Gradients)>;
}

/// Epoch-shuffled minibatch loop. Item `k` of the run draws its noise from
/// stream `k + 1` of the seed, so results do not depend on the thread count.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    order_rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    items_seen: u64,
    pub losses: Vec<f64>,
}

impl Trainer {
    pub fn new(config: TrainConfig, dataset_len: usize) -> Result<Self> {
        config.validate()?;
        if dataset_len == 0 {
            return Err(Error::arg("training set is empty"));
        }
        Ok(Trainer {
            order_rng: stream_rng(config.seed, 0),
            config,
            order: (0..dataset_len).collect(),
            cursor: dataset_len,
            items_seen: 0,
            losses: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn next_index(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.order_rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    /// One optimizer step; returns the mean item loss of the batch.
    pub fn step<M: Objective>(&mut self, model: &mut M, data: &[M::Item]) -> Result<f64> {
        if data.len() != self.order.len() {
            return Err(Error::arg(format!(
                "trainer set up for {} items, got {}",
                self.order.len(),
                data.len()
            )));
        }
        let batch: Vec<(usize, u64)> = (0..self.config.batch_size)
            .map(|k| (self.next_index(), self.items_seen + k as u64 + 1))
            .collect();
        self.items_seen += batch.len() as u64;
        let seed = self.config.seed;
        let results: Vec<(f64, Gradients)> = {
            let m = &*model;
            batch
                .par_iter()
                .map(|&(idx, stream)| m.item_loss(&data[idx], &mut stream_rng(seed, stream)))
                .collect::<Result<_>>()?
        };
        let store = model.store_mut();
        store.zero_grad();
        let mut total = 0.0;
        for (loss, grads) in &results {
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training loss is {loss}")));
            }
            total += loss;
            accumulate_grads(store, grads)?;
        }
        if self.config.clip > 0.0 {
            store.clip_grad_norm(self.config.clip);
        }
        store.adam_step(&self.config.adam());
        let mean = total / results.len() as f64;
        self.losses.push(mean);
        Ok(mean)
    }

    /// Runs the configured number of steps, logging every `log_every`.
    pub fn run<M: Objective>(&mut self, model: &mut M, data: &[M::Item], log_every: usize) -> Result<()> {
        for s in 0..self.config.steps {
            let loss = self.step(model, data)?;
            if log_every > 0 && (s + 1) % log_every == 0 {
                log::info!("step {} loss {loss:.5}", s + 1);
            }
        }
        Ok(())
    }
}

impl DiffusionModel {
    /// Noises `g` at a uniform timestep and returns the denoising loss with
    /// its gradients.
    pub fn loss_and_grads<R: Rng + ?Sized>(&self, g: &Graph, rng: &mut R) -> Result<(f64, Gradients)> {
        self.check_graph(g)?;
        let t = rng.random_range(1..=self.steps());
        let g_t = apply_discrete_noise(g, t, &self.noise, rng)?;
        let feats = self.features(&g_t, t)?;
        let n = g.n();
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![n, g.a()], g_t.node_onehot())?);
        let e = tape.leaf(Tensor::new(vec![n, n, g.b()], g_t.edge_onehot())?);
        let out = self.net.forward(&mut tape, x, e, &feats)?;
        let loss = discrete_loss(&mut tape, &out, g, self.net.config.lambda)?;
        let value = tape.value(loss).item();
        Ok((value, tape.backward(loss)?))
    }

    /// Single-graph training step with Adam.
    pub fn train_step<R: Rng + ?Sized>(&mut self, g: &Graph, adam: &AdamConfig, rng: &mut R) -> Result<f64> {
        let (loss, grads) = self.loss_and_grads(g, rng)?;
        self.net.store.zero_grad();
        accumulate_grads(&mut self.net.store, &grads)?;
        self.net.store.adam_step(adam);
        Ok(loss)
    }
}

impl Objective for DiffusionModel {
    type Item = Graph;

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.net.store
    }

    fn item_loss(&self, item: &Graph, rng: &mut ChaCha8Rng) -> Result<(f64, Gradients)> {
        self.loss_and_grads(item, rng)
    }
}
