//! Graph transformer used as denoiser, noise predictor and property regressor.
//!
//! Each layer lets nodes attend to each other channel-wise. Attention scores
//! are modulated by the edge channel and then by the global channel (FiLM).
//! The modulated scores feed both the node update (after a softmax over
//! neighbours) and the edge update (through a linear map). The global
//! channel is updated from PNA pooling of the new node and edge states.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureBundle, FeatureFlags};
use crate::graph::{Graph, SoftGraph};
use crate::nn::{ParamId, ParamStore, Reduce, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    pub layers: usize,
    pub hidden_x: usize,
    pub hidden_e: usize,
    pub hidden_y: usize,
    pub heads: usize,
    pub ffn_x: usize,
    pub ffn_e: usize,
    pub ffn_y: usize,
    /// Weight of the edge term in the training loss.
    pub lambda: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            layers: 4,
            hidden_x: 64,
            hidden_e: 32,
            hidden_y: 16,
            heads: 4,
            ffn_x: 128,
            ffn_e: 64,
            ffn_y: 32,
            lambda: 5.0,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.hidden_x.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden_x {} must be divisible by heads {}",
                self.hidden_x, self.heads
            )));
        }
        let widths = [
            self.hidden_x,
            self.hidden_e,
            self.hidden_y,
            self.ffn_x,
            self.ffn_e,
            self.ffn_y,
        ];
        if widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// What the network predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Clean-graph class probabilities.
    Categorical,
    /// Injected Gaussian noise.
    Noise,
    /// A graph-level vector of the given size.
    Regression(usize),
}

impl Head {
    fn code(self) -> f64 {
        match self {
            Head::Categorical => 0.0,
            Head::Noise => 1.0,
            Head::Regression(k) => 2.0 + k as f64,
        }
    }

    fn from_code(c: f64) -> Result<Head> {
        match c as i64 {
            0 => Ok(Head::Categorical),
            1 => Ok(Head::Noise),
            k if k >= 3 => Ok(Head::Regression(k as usize - 2)),
            _ => Err(Error::Checkpoint(format!("unknown head code {c}"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Mlp {
    first: Linear,
    second: Linear,
}

#[derive(Clone, Debug)]
struct LayerParams {
    q: Linear,
    k: Linear,
    v: Linear,
    e_mul: Linear,
    e_add: Linear,
    ys_mul: Linear,
    ys_add: Linear,
    e_out: Linear,
    ye_mul: Linear,
    ye_add: Linear,
    yx_mul: Linear,
    yx_add: Linear,
    x_out: Linear,
    y_self: Linear,
    pna_x: Linear,
    pna_e: Linear,
    y_out: Mlp,
    norm_x: [Norm; 2],
    norm_e: [Norm; 2],
    norm_y: [Norm; 2],
    ffn_x: Mlp,
    ffn_e: Mlp,
    ffn_y: Mlp,
}

struct Builder<'a, R: Rng + ?Sized> {
    store: &'a mut ParamStore,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
        Ok(Linear {
            w: self.store.add_weight(&format!("{name}.w"), fan_in, fan_out, self.rng)?,
            b: self.store.add_zeros(&format!("{name}.b"), &[fan_out])?,
        })
    }

    fn mlp(&mut self, name: &str, d_in: usize, d_hidden: usize, d_out: usize) -> Result<Mlp> {
        Ok(Mlp {
            first: self.linear(&format!("{name}.0"), d_in, d_hidden)?,
            second: self.linear(&format!("{name}.1"), d_hidden, d_out)?,
        })
    }

    fn norm(&mut self, name: &str, d: usize) -> Result<Norm> {
        Ok(Norm {
            gamma: self.store.add_filled(&format!("{name}.gamma"), &[d], 1.0)?,
            beta: self.store.add_zeros(&format!("{name}.beta"), &[d])?,
        })
    }
}

/// Tape handles of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    /// `[n, a]`: probabilities or predicted node noise.
    pub x: Var,
    /// `[n, n, b]`: probabilities or predicted edge noise.
    pub e: Var,
    /// `[1, k]` regression output, or the final global state.
    pub y: Var,
}

/// `sign(v) ln(1 + |v|)`, applied to auxiliary features.
pub fn squash(v: f64) -> f64 {
    v.signum() * v.abs().ln_1p()
}

#[derive(Clone, Debug)]
pub struct GraphTransformer {
    pub config: DenoiserConfig,
    pub a: usize,
    pub b: usize,
    pub features: FeatureFlags,
    pub head: Head,
    pub store: ParamStore,
    in_x: Mlp,
    in_e: Mlp,
    in_y: Mlp,
    layers: Vec<LayerParams>,
    out_x: Mlp,
    out_e: Mlp,
    out_y: Mlp,
}

impl GraphTransformer {
    pub fn new<R: Rng + ?Sized>(
        config: &DenoiserConfig,
        a: usize,
        b: usize,
        features: FeatureFlags,
        head: Head,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if a == 0 || b < 2 {
            return Err(Error::arg(format!("need a ≥ 1 and b ≥ 2, got a={a}, b={b}")));
        }
        let (dx, de, dy) = (config.hidden_x, config.hidden_e, config.hidden_y);
        let mut store = ParamStore::new();
        let mut bld = Builder {
            store: &mut store,
            rng,
        };
        let in_x = bld.mlp("in_x", a + features.node_dim(), dx, dx)?;
        let in_e = bld.mlp("in_e", b, de, de)?;
        let in_y = bld.mlp("in_y", features.graph_dim(), dy, dy)?;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = |s: &str| format!("layer{l}.{s}");
            layers.push(LayerParams {
                q: bld.linear(&p("q"), dx, dx)?,
                k: bld.linear(&p("k"), dx, dx)?,
                v: bld.linear(&p("v"), dx, dx)?,
                e_mul: bld.linear(&p("e_mul"), de, dx)?,
                e_add: bld.linear(&p("e_add"), de, dx)?,
                ys_mul: bld.linear(&p("ys_mul"), dy, dx)?,
                ys_add: bld.linear(&p("ys_add"), dy, dx)?,
                e_out: bld.linear(&p("e_out"), dx, de)?,
                ye_mul: bld.linear(&p("ye_mul"), dy, de)?,
                ye_add: bld.linear(&p("ye_add"), dy, de)?,
                yx_mul: bld.linear(&p("yx_mul"), dy, dx)?,
                yx_add: bld.linear(&p("yx_add"), dy, dx)?,
                x_out: bld.linear(&p("x_out"), dx, dx)?,
                y_self: bld.linear(&p("y_self"), dy, dy)?,
                pna_x: bld.linear(&p("pna_x"), 4 * dx, dy)?,
                pna_e: bld.linear(&p("pna_e"), 4 * de, dy)?,
                y_out: bld.mlp(&p("y_out"), dy, dy, dy)?,
                norm_x: [bld.norm(&p("norm_x0"), dx)?, bld.norm(&p("norm_x1"), dx)?],
                norm_e: [bld.norm(&p("norm_e0"), de)?, bld.norm(&p("norm_e1"), de)?],
                norm_y: [bld.norm(&p("norm_y0"), dy)?, bld.norm(&p("norm_y1"), dy)?],
                ffn_x: bld.mlp(&p("ffn_x"), dx, config.ffn_x, dx)?,
                ffn_e: bld.mlp(&p("ffn_e"), de, config.ffn_e, de)?,
                ffn_y: bld.mlp(&p("ffn_y"), dy, config.ffn_y, dy)?,
            });
        }
        let out_y_dim = match head {
            Head::Regression(k) if k > 0 => k,
            Head::Regression(_) => return Err(Error::arg("regression head needs a positive size")),
            _ => dy,
        };
        let out_x = bld.mlp("out_x", dx, dx, a)?;
        let out_e = bld.mlp("out_e", de, de, b)?;
        let out_y = bld.mlp("out_y", dy, dy, out_y_dim)?;
        Ok(GraphTransformer {
            config: config.clone(),
            a,
            b,
            features,
            head,
            store,
            in_x,
            in_e,
            in_y,
            layers,
            out_x,
            out_e,
            out_y,
        })
    }

    fn linear(&self, t: &mut Tape, lin: Linear, x: Var) -> Result<Var> {
        let shape = t.shape(x).to_vec();
        let d_in = *shape.last().unwrap_or(&1);
        let rows = shape.iter().product::<usize>() / d_in.max(1);
        let flat = if shape.len() == 2 { x } else { t.reshape(x, &[rows, d_in])? };
        let w = t.param(&self.store, lin.w);
        let b = t.param(&self.store, lin.b);
        let h = t.matmul(flat, w)?;
        let h = t.add_bias(h, b)?;
        if shape.len() == 2 {
            return Ok(h);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.store.value(lin.b).len();
        t.reshape(h, &out_shape)
    }

    fn mlp(&self, t: &mut Tape, m: Mlp, x: Var, final_relu: bool) -> Result<Var> {
        let h = self.linear(t, m.first, x)?;
        let h = t.relu(h);
        let h = self.linear(t, m.second, h)?;
        Ok(if final_relu { t.relu(h) } else { h })
    }

    fn norm(&self, t: &mut Tape, n: Norm, x: Var) -> Result<Var> {
        let g = t.param(&self.store, n.gamma);
        let b = t.param(&self.store, n.beta);
        t.layernorm(x, g, b)
    }

    /// `[1, d] → shape` by repeating the row.
    fn broadcast(&self, t: &mut Tape, v: Var, shape: &[usize]) -> Result<Var> {
        let d = t.shape(v)[1];
        let rows = shape.iter().product::<usize>() / d;
        let flat = t.reshape(v, &[d])?;
        let rep = t.expand_rows(flat, rows)?;
        t.reshape(rep, shape)
    }

    /// `FiLM(m1, m2) = m1 W_add + (m1 W_mul) ⊙ m2 + m2` with `m1` per row of `m2`.
    fn film(&self, t: &mut Tape, add: Linear, mul: Linear, m1: Var, m2: Var) -> Result<Var> {
        let a = self.linear(t, add, m1)?;
        let m = self.linear(t, mul, m1)?;
        let prod = t.mul(m, m2)?;
        let s = t.add(a, prod)?;
        t.add(s, m2)
    }

    /// FiLM where a `[1, dy]` global vector modulates every row of `m2`.
    fn film_global(&self, t: &mut Tape, add: Linear, mul: Linear, y: Var, m2: Var) -> Result<Var> {
        let shape = t.shape(m2).to_vec();
        let a = self.linear(t, add, y)?;
        let a = self.broadcast(t, a, &shape)?;
        let m = self.linear(t, mul, y)?;
        let m = self.broadcast(t, m, &shape)?;
        let prod = t.mul(m, m2)?;
        let s = t.add(a, prod)?;
        t.add(s, m2)
    }

    /// `cat(max, min, mean, std)` over the selected rows of `[m, d]`, as `[1, 4d]`.
    fn pna_stats(t: &mut Tape, x: Var, mask: Option<Vec<bool>>) -> Result<Var> {
        let mut parts = Vec::with_capacity(4);
        for kind in [Reduce::Max, Reduce::Min, Reduce::Mean, Reduce::Std] {
            parts.push(t.reduce_rows(x, kind, mask.clone())?);
        }
        let cat = t.concat(&parts)?;
        let d = t.shape(cat)[0];
        t.reshape(cat, &[1, d])
    }

    fn layer(&self, t: &mut Tape, p: &LayerParams, x: Var, e: Var, y: Var) -> Result<(Var, Var, Var)> {
        let n = t.shape(x)[0];
        let (dx, de) = (self.config.hidden_x, self.config.hidden_e);
        let df = (dx / self.config.heads) as f64;

        let q = self.linear(t, p.q, x)?;
        let k = self.linear(t, p.k, x)?;
        let v = self.linear(t, p.v, x)?;
        let qi = t.expand_i(q)?;
        let kj = t.expand_j(k)?;
        let s = t.mul(qi, kj)?;
        let s = t.scale(s, 1.0 / df.sqrt());
        let s = t.reshape(s, &[n * n, dx])?;
        let e_rows = t.reshape(e, &[n * n, de])?;
        let s = self.film(t, p.e_add, p.e_mul, e_rows, s)?;
        let s = self.film_global(t, p.ys_add, p.ys_mul, y, s)?;

        let e_new = self.linear(t, p.e_out, s)?;
        let e_new = t.reshape(e_new, &[n, n, de])?;
        let e_tr = t.transpose01(e_new)?;
        let e_new = t.add(e_new, e_tr)?;
        let e_new = t.scale(e_new, 0.5);
        let e_new = t.reshape(e_new, &[n * n, de])?;
        let e_new = self.film_global(t, p.ye_add, p.ye_mul, y, e_new)?;

        let s = t.reshape(s, &[n, n, dx])?;
        let attn = t.softmax(s, 1)?;
        let vj = t.expand_j(v)?;
        let weighted = t.mul(attn, vj)?;
        let x_new = t.sum_axis(weighted, 1)?;
        let x_new = self.film_global(t, p.yx_add, p.yx_mul, y, x_new)?;
        let x_new = self.linear(t, p.x_out, x_new)?;

        let upper: Vec<bool> = (0..n * n).map(|r| r / n < r % n).collect();
        let px = Self::pna_stats(t, x_new, None)?;
        let pe = Self::pna_stats(t, e_new, Some(upper))?;
        let y_self = self.linear(t, p.y_self, y)?;
        let y_px = self.linear(t, p.pna_x, px)?;
        let y_pe = self.linear(t, p.pna_e, pe)?;
        let y_new = t.add(y_self, y_px)?;
        let y_new = t.add(y_new, y_pe)?;
        let y_new = self.mlp(t, p.y_out, y_new, false)?;

        let x = self.residual_block(t, x, x_new, &p.norm_x, p.ffn_x)?;
        let e_prev = t.reshape(e, &[n * n, de])?;
        let e_out = self.residual_block(t, e_prev, e_new, &p.norm_e, p.ffn_e)?;
        let e = t.reshape(e_out, &[n, n, de])?;
        let y = self.residual_block(t, y, y_new, &p.norm_y, p.ffn_y)?;
        Ok((x, e, y))
    }

    fn residual_block(&self, t: &mut Tape, prev: Var, update: Var, norms: &[Norm; 2], ffn: Mlp) -> Result<Var> {
        let h = t.add(prev, update)?;
        let h = self.norm(t, norms[0], h)?;
        let f = self.mlp(t, ffn, h, false)?;
        let h2 = t.add(h, f)?;
        self.norm(t, norms[1], h2)
    }

    /// Runs the network on node states `x` `[n, a]` and edge states `e`
    /// `[n, n, b]` (one-hot or continuous) with their auxiliary features.
    pub fn forward(&self, t: &mut Tape, x: Var, e: Var, feats: &FeatureBundle) -> Result<ForwardVars> {
        let n = t.shape(x)[0];
        if t.shape(x) != [n, self.a] || t.shape(e) != [n, n, self.b] || feats.n != n {
            return Err(Error::Shape {
                op: "transformer input",
                left: t.shape(x).to_vec(),
                right: t.shape(e).to_vec(),
            });
        }
        if feats.node_dim != self.features.node_dim() || feats.graph_feats.len() != self.features.graph_dim() {
            return Err(Error::Shape {
                op: "transformer features",
                left: vec![self.features.node_dim(), self.features.graph_dim()],
                right: vec![feats.node_dim, feats.graph_feats.len()],
            });
        }
        let x0 = if feats.node_dim > 0 {
            let nf = Tensor::new(
                vec![n, feats.node_dim],
                feats.node_feats.iter().map(|&v| squash(v)).collect(),
            )?;
            let nf = t.leaf(nf);
            t.concat(&[x, nf])?
        } else {
            x
        };
        let y0 = Tensor::new(
            vec![1, feats.graph_feats.len()],
            feats.graph_feats.iter().map(|&v| squash(v)).collect(),
        )?;
        let y0 = t.leaf(y0);

        let mut hx = self.mlp(t, self.in_x, x0, true)?;
        let mut he = self.mlp(t, self.in_e, e, true)?;
        let mut hy = self.mlp(t, self.in_y, y0, true)?;
        for p in &self.layers {
            (hx, he, hy) = self.layer(t, p, hx, he, hy)?;
        }

        let ox = self.mlp(t, self.out_x, hx, false)?;
        let oe = self.mlp(t, self.out_e, he, false)?;
        let oy = self.mlp(t, self.out_y, hy, false)?;
        let (ox, oe) = if self.head == Head::Categorical {
            (t.add(ox, x)?, t.add(oe, e)?)
        } else {
            (ox, oe)
        };
        let oe_tr = t.transpose01(oe)?;
        let oe = t.add(oe, oe_tr)?;
        let oe = t.scale(oe, 0.5);
        let (ox, oe) = if self.head == Head::Categorical {
            (t.softmax(ox, 1)?, t.softmax(oe, 2)?)
        } else {
            (ox, oe)
        };
        Ok(ForwardVars { x: ox, e: oe, y: oy })
    }

    /// Class probabilities for `g`, with the diagonal forced to class 0.
    pub fn predict(&self, g: &Graph, feats: &FeatureBundle) -> Result<SoftGraph> {
        if self.head != Head::Categorical {
            return Err(Error::arg("predict needs a categorical head"));
        }
        let n = g.n();
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![n, self.a], g.node_onehot())?);
        let e = t.leaf(Tensor::new(vec![n, n, self.b], g.edge_onehot())?);
        let out = self.forward(&mut t, x, e, feats)?;
        let mut soft = SoftGraph {
            n,
            a: self.a,
            b: self.b,
            x: t.value(out.x).data.clone(),
            e: t.value(out.e).data.clone(),
        };
        for i in 0..n {
            let d = soft.edge_probs_mut(i, i);
            d.fill(0.0);
            d[0] = 1.0;
        }
        Ok(soft)
    }

    /// Predicted noise `(ε̂_X, ε̂_E)` for continuous states.
    pub fn predict_noise(&self, x: &[f64], e: &[f64], feats: &FeatureBundle) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.head != Head::Noise {
            return Err(Error::arg("predict_noise needs a noise head"));
        }
        let n = feats.n;
        let mut t = Tape::new();
        let xv = t.leaf(Tensor::new(vec![n, self.a], x.to_vec())?);
        let ev = t.leaf(Tensor::new(vec![n, n, self.b], e.to_vec())?);
        let out = self.forward(&mut t, xv, ev, feats)?;
        Ok((t.value(out.x).data.clone(), t.value(out.e).data.clone()))
    }

    /// Serializes weights together with the architecture.
    pub fn to_entries(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let c = &self.config;
        let arch = [
            self.a as f64,
            self.b as f64,
            c.layers as f64,
            c.hidden_x as f64,
            c.hidden_e as f64,
            c.hidden_y as f64,
            c.heads as f64,
            c.ffn_x as f64,
            c.ffn_e as f64,
            c.ffn_y as f64,
            c.lambda,
            self.features.cycles as u8 as f64,
            self.features.spectral as u8 as f64,
            self.features.molecular as u8 as f64,
            self.head.code(),
        ];
        let mut out = vec![(
            format!("{prefix}__arch"),
            Tensor::new(vec![arch.len()], arch.to_vec()).expect("arch vector"),
        )];
        out.extend(
            self.store
                .entries()
                .map(|(name, t)| (format!("{prefix}{name}"), t.clone())),
        );
        out
    }

    /// Rebuilds a network written by [`GraphTransformer::to_entries`].
    pub fn from_entries(entries: &[(String, Tensor)], prefix: &str) -> Result<Self> {
        let map: HashMap<&str, &Tensor> = entries
            .iter()
            .filter_map(|(n, t)| n.strip_prefix(prefix).map(|s| (s, t)))
            .collect();
        let arch = map
            .get("__arch")
            .ok_or_else(|| Error::Checkpoint(format!("missing {prefix}__arch entry")))?;
        if arch.len() != 15 {
            return Err(Error::Checkpoint(format!("architecture vector has {} entries", arch.len())));
        }
        let u = |k: usize| arch.data[k] as usize;
        let config = DenoiserConfig {
            layers: u(2),
            hidden_x: u(3),
            hidden_e: u(4),
            hidden_y: u(5),
            heads: u(6),
            ffn_x: u(7),
            ffn_e: u(8),
            ffn_y: u(9),
            lambda: arch.data[10],
        };
        let features = FeatureFlags {
            cycles: arch.data[11] != 0.0,
            spectral: arch.data[12] != 0.0,
            molecular: arch.data[13] != 0.0,
        };
        let head = Head::from_code(arch.data[14])?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = GraphTransformer::new(&config, u(0), u(1), features, head, &mut rng)
            .map_err(|e| Error::Checkpoint(format!("bad architecture: {e}")))?;
        model
            .store
            .load_values(map.iter().filter(|(k, _)| !k.starts_with("__")).map(|(k, v)| (*k, *v)))?;
        Ok(model)
    }
}

/// `Σ_i CE(x_i, p̂_i) + λ Σ_{i<j} CE(e_ij, p̂_ij)`.
pub fn discrete_loss(t: &mut Tape, out: &ForwardVars, target: &Graph, lambda: f64) -> Result<Var> {
    let n = target.n();
    let node_t = Tensor::new(vec![n, target.a()], target.node_onehot())?;
    let node_loss = t.cross_entropy(out.x, &node_t, &vec![1.0; n])?;
    if n < 2 {
        return Ok(node_loss);
    }
    let edge_t = Tensor::new(vec![n * n, target.b()], target.edge_onehot())?;
    let weights: Vec<f64> = (0..n * n)
        .map(|r| if r / n < r % n { lambda } else { 0.0 })
        .collect();
    let pe = t.reshape(out.e, &[n * n, target.b()])?;
    let edge_loss = t.cross_entropy(pe, &edge_t, &weights)?;
    t.add(node_loss, edge_loss)
}

/// `Σ_i ‖ε̂_i − ε_i‖² + Σ_{i<j} ‖ε̂_ij − ε_ij‖²`.
pub fn noise_loss(t: &mut Tape, out: &ForwardVars, eps_x: &[f64], eps_e: &[f64]) -> Result<Var> {
    let (n, a) = (t.shape(out.x)[0], t.shape(out.x)[1]);
    let b = t.shape(out.e)[2];
    let tx = t.leaf(Tensor::new(vec![n, a], eps_x.to_vec())?);
    let dx = t.sub(out.x, tx)?;
    let sx = t.mul(dx, dx)?;
    let lx = t.sum_all(sx);
    if n < 2 {
        return Ok(lx);
    }
    let te = t.leaf(Tensor::new(vec![n, n, b], eps_e.to_vec())?);
    let de = t.sub(out.e, te)?;
    let se = t.mul(de, de)?;
    let mut mask = vec![0.0; n * n * b];
    for i in 0..n {
        for j in i + 1..n {
            mask[(i * n + j) * b..(i * n + j + 1) * b].fill(1.0);
        }
    }
    let mask = t.leaf(Tensor::new(vec![n, n, b], mask)?);
    let se = t.mul(se, mask)?;
    let le = t.sum_all(se);
    t.add(lx, le)
}

/// Worst relative error between backpropagated parameter gradients and
/// central finite differences (step 1e-5), per parameter tensor.
pub fn parameter_gradient_error<F>(model: &GraphTransformer, loss: F) -> Result<f64>
where
    F: Fn(&GraphTransformer, &mut Tape) -> Result<Var>,
{
    let h = crate::nn::gradcheck::FD_STEP;
    let mut t = Tape::new();
    let l = loss(model, &mut t)?;
    let grads = t.backward(l)?;
    let mut analytic: Vec<Vec<f64>> = model.store.ids().map(|id| vec![0.0; model.store.value(id).len()]).collect();
    for (id, g) in grads.param_grads() {
        for (a, b) in analytic[id.0].iter_mut().zip(&g.data) {
            *a += b;
        }
    }
    let eval = |m: &GraphTransformer| -> Result<f64> {
        let mut t = Tape::new();
        let l = loss(m, &mut t)?;
        Ok(t.value(l).item())
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for id in model.store.ids() {
        let mut numeric = vec![0.0; analytic[id.0].len()];
        for k in 0..numeric.len() {
            let orig = probe.store.value(id).data[k];
            probe.store.value_mut(id).data[k] = orig + h;
            let up = eval(&probe)?;
            probe.store.value_mut(id).data[k] = orig - h;
            let down = eval(&probe)?;
            probe.store.value_mut(id).data[k] = orig;
            numeric[k] = (up - down) / (2.0 * h);
        }
        let a = &analytic[id.0];
        let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
        let scale = norm(a).max(norm(&numeric)).max(1e-8);
        worst = worst.max(norm(&diff) / scale);
    }
    Ok(worst)
}
