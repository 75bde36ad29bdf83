//! Config-driven experiment steps shared by the command-line tool and the C API.

use std::fmt;

use rayon::prelude::*;

use crate::config::{Config, DatasetKind, Mode};
use crate::datagen::{gen_cycles, gen_planar, gen_sbm, gen_toy_molecules, planarity_check};
use crate::engine::{
    stream_rng, ContinuousModel, DiffusionModel, ElboEstimator, ElboReport, Regressor, SavedModel,
    ScaffoldMask, Trainer,
};
use crate::error::{Error, Result};
use crate::graph::{compute_stats, Graph};
use crate::metrics::{
    bootstrap_ratio_ci, describe, mmd_ratio, novelty, uniqueness, validity_rate, Descriptor,
};
use crate::noise::{ContinuousSchedule, NoiseModel, NoiseSchedule};

/// Random stream reserved for parameter initialization.
pub const INIT_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Graph>,
    pub val: Vec<Graph>,
    pub test: Vec<Graph>,
}

/// Draws `train + val + test` graphs in one seeded batch and splits them in order.
pub fn generate_dataset(cfg: &Config, seed: u64) -> Result<Splits> {
    let ds = &cfg.dataset;
    let total = ds.train + ds.val + ds.test;
    let mut all = match ds.kind {
        DatasetKind::Cycles => gen_cycles(total, ds.cycle_sizes.clone(), seed)?,
        DatasetKind::Sbm => gen_sbm(total, &ds.sbm, seed)?,
        DatasetKind::Planar => gen_planar(total, ds.planar_nodes, seed)?,
        DatasetKind::Molecules => gen_toy_molecules(total, &ds.molecules, &cfg.molecular.table()?, seed)?,
    };
    let test = all.split_off(ds.train + ds.val);
    let val = all.split_off(ds.train);
    Ok(Splits { train: all, val, test })
}

fn schedule(cfg: &Config) -> Result<NoiseSchedule> {
    NoiseSchedule::cosine(cfg.diffusion.steps, cfg.diffusion.offset)
}

/// Freshly initialized model of the configured mode, with statistics from `train`.
pub fn build_model(cfg: &Config, train: &[Graph], seed: u64) -> Result<SavedModel> {
    let stats = compute_stats(train)?;
    let table = cfg.molecular.table()?;
    let mut rng = stream_rng(seed, INIT_STREAM);
    let d = &cfg.diffusion;
    Ok(match d.mode {
        Mode::Digress => SavedModel::Discrete(DiffusionModel::new(
            &cfg.model,
            d.features,
            schedule(cfg)?,
            d.transitions,
            stats,
            table,
            &mut rng,
        )?),
        Mode::Congress => SavedModel::Continuous(ContinuousModel::new(
            &cfg.model,
            d.features,
            ContinuousSchedule::from_discrete(&schedule(cfg)?),
            stats,
            table,
            &mut rng,
        )?),
    })
}

/// Builds and trains a model; returns it with the per-step loss trace.
pub fn train_model(cfg: &Config, train: &[Graph], seed: u64, log_every: usize) -> Result<(SavedModel, Vec<f64>)> {
    let mut model = build_model(cfg, train, seed)?;
    let mut tc = cfg.train.clone();
    tc.seed = seed;
    let mut trainer = Trainer::new(tc, train.len())?;
    match &mut model {
        SavedModel::Discrete(m) => trainer.run(m, train, log_every)?,
        SavedModel::Continuous(m) => trainer.run(m, train, log_every)?,
        SavedModel::Regressor(_) => unreachable!("build_model makes generative models"),
    }
    Ok((model, trainer.losses))
}

/// Unconditional samples from a generative checkpoint.
pub fn sample(model: &SavedModel, count: usize, nodes: Option<usize>, seed: u64) -> Result<Vec<Graph>> {
    match model {
        SavedModel::Discrete(m) => m.sample_many(count, nodes, seed),
        SavedModel::Continuous(m) => m.sample_many(count, nodes, seed),
        SavedModel::Regressor(_) => Err(Error::arg("a regressor checkpoint cannot generate graphs")),
    }
}

/// Regressor for the configured property, trained on noisy copies of `train`.
pub fn train_property_regressor(cfg: &Config, train: &[Graph], seed: u64) -> Result<(Regressor, Vec<f64>)> {
    let stats = compute_stats(train)?;
    let noise = NoiseModel::new(schedule(cfg)?, cfg.diffusion.transitions, &stats)?;
    let mut rng = stream_rng(seed, INIT_STREAM);
    let mut reg = Regressor::new(
        &cfg.guidance.regressor,
        cfg.guidance.features,
        1,
        noise,
        cfg.molecular.table()?,
        &mut rng,
    )?;
    let data: Vec<(Graph, Vec<f64>)> = train.iter().map(|g| (g.clone(), vec![cfg.guidance.property.of(g)])).collect();
    let mut tc = cfg.guidance.train.clone();
    tc.seed = seed;
    let mut trainer = Trainer::new(tc, data.len())?;
    trainer.run(&mut reg, &data, 0)?;
    Ok((reg, trainer.losses))
}

pub fn guided_samples(
    model: &DiffusionModel,
    reg: &Regressor,
    target: f64,
    scale: f64,
    count: usize,
    nodes: Option<usize>,
    seed: u64,
) -> Result<Vec<Graph>> {
    (0..count)
        .into_par_iter()
        .map(|k| model.guided_sample(reg, &[target], scale, nodes, &mut stream_rng(seed, k as u64)))
        .collect()
}

pub fn scaffold_samples(
    model: &DiffusionModel,
    mask: &ScaffoldMask,
    count: usize,
    nodes: usize,
    seed: u64,
) -> Result<Vec<Graph>> {
    (0..count)
        .into_par_iter()
        .map(|k| model.scaffold_sample(mask, nodes, &mut stream_rng(seed, k as u64)))
        .collect()
}

/// Variational bound of every graph, graph `k` on stream `k`.
pub fn elbo_all(model: &DiffusionModel, graphs: &[Graph], est: ElboEstimator, seed: u64) -> Result<Vec<ElboReport>> {
    graphs
        .par_iter()
        .enumerate()
        .map(|(k, g)| model.elbo(g, est, &mut stream_rng(seed, k as u64)))
        .collect()
}

/// Ordered `key = value` metrics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report(pub Vec<(String, f64)>);

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: f64) {
        self.0.push((key.into(), value));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.0.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.0 {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// MMD ratios for every descriptor, then validity, uniqueness, novelty and
/// the planar-and-connected fraction of `generated`.
pub fn evaluate(cfg: &Config, generated: &[Graph], train: &[Graph], test: &[Graph], seed: u64) -> Result<Report> {
    let ev = &cfg.evaluate;
    let mut report = Report::default();
    report.push("count.generated", generated.len() as f64);
    report.push("count.train", train.len() as f64);
    report.push("count.test", test.len() as f64);
    for (k, d) in Descriptor::ALL.into_iter().enumerate() {
        let sigma = match d {
            Descriptor::Degree => ev.sigma_degree,
            Descriptor::Clustering => ev.sigma_clustering,
            Descriptor::Orbit => ev.sigma_orbit,
        };
        let (g, tr, te) = (describe(generated, d), describe(train, d), describe(test, d));
        let r = mmd_ratio(&g, &tr, &te, sigma)?;
        report.push(format!("{d}.gen_test"), r.gen_test);
        report.push(format!("{d}.train_test"), r.train_test);
        report.push(format!("{d}.ratio"), r.ratio);
        report.push(format!("{d}.sigma"), r.sigma);
        if ev.bootstrap > 0 {
            let (lo, hi) = bootstrap_ratio_ci(&g, &tr, &te, r.sigma, ev.bootstrap, ev.level, seed.wrapping_add(k as u64))?;
            report.push(format!("{d}.ratio_lo"), lo);
            report.push(format!("{d}.ratio_hi"), hi);
        }
    }
    let table = cfg.molecular.table()?;
    report.push("validity", validity_rate(generated, &table)?);
    report.push("uniqueness", uniqueness(generated)?);
    report.push("novelty", novelty(generated, train)?);
    let planar = generated
        .par_iter()
        .filter(|g| g.adjacency().is_connected() && planarity_check(g))
        .count();
    report.push("planar_connected", planar as f64 / generated.len() as f64);
    Ok(report)
}
