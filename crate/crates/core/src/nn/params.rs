use std::collections::HashMap;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
struct Param {
    name: String,
    value: Tensor,
    grad: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Named parameters in registration order, with gradients and Adam moments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
    adam_steps: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::arg(format!("duplicate parameter '{name}'")));
        }
        let n = value.len();
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        self.index.insert(name.to_string(), self.params.len() - 1);
        Ok(ParamId(self.params.len() - 1))
    }

    /// `[fan_in, fan_out]` weight uniform in `±1/√fan_in`.
    pub fn add_weight<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        self.add(name, Tensor::new(vec![fan_in, fan_out], data)?)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_filled(&mut self, name: &str, shape: &[usize], v: f64) -> Result<ParamId> {
        let mut t = Tensor::zeros(shape);
        t.data.fill(v);
        self.add(name, t)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].grad
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn accumulate(&mut self, id: ParamId, grad: &[f64]) -> Result<()> {
        let p = &mut self.params[id.0];
        if grad.len() != p.grad.len() {
            return Err(Error::Shape {
                op: "accumulate",
                left: p.value.shape.clone(),
                right: vec![grad.len()],
            });
        }
        for (a, b) in p.grad.iter_mut().zip(grad) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale_grads(&mut self, c: f64) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g *= c);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales gradients so their global norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale_grads(max_norm / norm);
        }
        norm
    }

    /// `(name, value)` pairs in registration order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|p| (p.name.as_str(), &p.value))
    }

    /// Overwrites values from `(name, value)` pairs; every parameter must be
    /// present with a matching shape.
    pub fn load_values<'a>(&mut self, entries: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
        let mut seen = vec![false; self.params.len()];
        for (name, t) in entries {
            let Some(&i) = self.index.get(name) else {
                continue;
            };
            if self.params[i].value.shape != t.shape {
                return Err(Error::Checkpoint(format!(
                    "parameter '{name}' has shape {:?}, checkpoint has {:?}",
                    self.params[i].value.shape, t.shape
                )));
            }
            self.params[i].value = t.clone();
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Checkpoint(format!(
                "checkpoint lacks parameter '{}'",
                self.params[i].name
            )));
        }
        Ok(())
    }

    pub fn sgd_step(&mut self, lr: f64) {
        for p in &mut self.params {
            for (w, g) in p.value.data.iter_mut().zip(&p.grad) {
                *w -= lr * g;
            }
        }
    }

    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        self.adam_steps += 1;
        let t = self.adam_steps as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for p in &mut self.params {
            for k in 0..p.grad.len() {
                let g = p.grad[k];
                p.m[k] = cfg.beta1 * p.m[k] + (1.0 - cfg.beta1) * g;
                p.v[k] = cfg.beta2 * p.v[k] + (1.0 - cfg.beta2) * g * g;
                let mhat = p.m[k] / c1;
                let vhat = p.v[k] / c2;
                p.value.data[k] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}
