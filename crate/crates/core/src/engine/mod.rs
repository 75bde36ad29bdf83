//! Training and sampling loops.
//!
//! [`DiffusionModel`] bundles a categorical denoiser with its noise model and
//! dataset statistics. [`ContinuousModel`] is the Gaussian baseline and
//! [`Regressor`] predicts graph properties for guided sampling.

mod continuous;
mod elbo;
mod guidance;
mod persist;
mod reverse;
mod scaffold;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use continuous::{congress_mean, congress_train_step, ContinuousModel};
pub use elbo::{ElboEstimator, ElboReport, MAX_EXHAUSTIVE_STATES};
pub use guidance::{guidance_gradient, reweight, train_regressor, Regressor};
pub use persist::{from_entries, load_checkpoint, save_checkpoint, to_entries, SavedModel};
pub use reverse::{reverse_distributions, PosteriorTable};
pub use scaffold::ScaffoldMask;
pub use train::{Objective, TrainConfig, Trainer};

use crate::denoiser::{DenoiserConfig, GraphTransformer, Head};
use crate::error::{Error, Result};
use crate::features::{assemble_features, FeatureBundle, FeatureFlags, MolecularTable};
use crate::graph::{DatasetStats, Graph};
use crate::noise::{NoiseModel, NoiseSchedule, TransitionKind};

/// Independent generator for item `index` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f(i, rng_i)` for `i in 0..count` in parallel with per-item streams.
pub fn par_generate<T, F>(count: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| f(i, &mut stream_rng(seed, i as u64)))
        .collect()
}

/// Categorical denoiser with its noise process and dataset statistics.
#[derive(Clone, Debug)]
pub struct DiffusionModel {
    pub net: GraphTransformer,
    pub noise: NoiseModel,
    pub stats: DatasetStats,
    pub table: MolecularTable,
}

impl DiffusionModel {
    pub fn new<R: rand::Rng + ?Sized>(
        denoiser: &DenoiserConfig,
        features: FeatureFlags,
        schedule: NoiseSchedule,
        kind: TransitionKind,
        stats: DatasetStats,
        table: MolecularTable,
        rng: &mut R,
    ) -> Result<Self> {
        let net = GraphTransformer::new(denoiser, stats.a(), stats.b(), features, Head::Categorical, rng)?;
        let noise = NoiseModel::new(schedule, kind, &stats)?;
        Ok(DiffusionModel {
            net,
            noise,
            stats,
            table,
        })
    }

    pub fn steps(&self) -> usize {
        self.noise.steps()
    }

    pub fn features(&self, g: &Graph, t: usize) -> Result<FeatureBundle> {
        assemble_features(g, t, self.steps(), self.net.features, &self.table)
    }

    fn check_graph(&self, g: &Graph) -> Result<()> {
        if g.a() != self.stats.a() || g.b() != self.stats.b() {
            return Err(Error::InvalidGraph(format!(
                "graph has (a, b) = ({}, {}), model expects ({}, {})",
                g.a(),
                g.b(),
                self.stats.a(),
                self.stats.b()
            )));
        }
        Ok(())
    }

    fn resolve_size<R: rand::Rng + ?Sized>(&self, n: Option<usize>, rng: &mut R) -> Result<usize> {
        let n = n.unwrap_or_else(|| self.stats.sample_node_count(rng));
        if n == 0 {
            return Err(Error::arg("graph size must be at least 1"));
        }
        Ok(n)
    }

    /// One reverse step from `g_t` at time `t`, returning `G^{t−1}`.
    pub fn reverse_step<R: rand::Rng + ?Sized>(&self, g_t: &Graph, t: usize, rng: &mut R) -> Result<Graph> {
        let pred = self.net.predict(g_t, &self.features(g_t, t)?)?;
        let dist = reverse_distributions(g_t, &pred, t, &self.noise)?;
        crate::graph::collapse(&dist, rng)
    }

    /// Ancestral sampling from the prior down to `t = 0`. `n = None` draws
    /// the size from the training histogram.
    pub fn sample<R: rand::Rng + ?Sized>(&self, n: Option<usize>, rng: &mut R) -> Result<Graph> {
        let n = self.resolve_size(n, rng)?;
        let mut g = self.noise.sample_prior(n, rng)?;
        for t in (1..=self.steps()).rev() {
            g = self.reverse_step(&g, t, rng)?;
        }
        Ok(g)
    }

    /// `count` samples generated in parallel, item `i` using stream `i` of `seed`.
    pub fn sample_many(&self, count: usize, n: Option<usize>, seed: u64) -> Result<Vec<Graph>> {
        par_generate(count, seed, |_, rng| self.sample(n, rng))
    }
}

/// Configures rayon's global pool from `GRAPHDIFF_THREADS` if set.
pub fn init_thread_pool() -> Result<()> {
    if let Ok(v) = std::env::var("GRAPHDIFF_THREADS") {
        let threads: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("GRAPHDIFF_THREADS must be a positive integer, got '{v}'")))?;
        if threads == 0 {
            return Err(Error::Config("GRAPHDIFF_THREADS must be positive".into()));
        }
        // a pool that was already built keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Ok(())
}
