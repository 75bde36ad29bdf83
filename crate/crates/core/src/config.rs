//! Experiment configuration read from TOML. Every section is optional and
//! falls back to its defaults; unknown keys anywhere are an error.

use std::fmt;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{heavy_atom_table, MoleculeConfig, SbmConfig};
use crate::denoiser::DenoiserConfig;
use crate::engine::{ElboEstimator, TrainConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureFlags, MolecularTable};
use crate::graph::Graph;
use crate::noise::TransitionKind;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub data: DataConfig,
    pub dataset: DatasetConfig,
    pub model: DenoiserConfig,
    pub diffusion: DiffusionConfig,
    pub train: TrainConfig,
    pub sample: SampleConfig,
    pub elbo: ElboConfig,
    pub evaluate: EvaluateConfig,
    pub guidance: GuidanceConfig,
    pub molecular: MolecularConfig,
}

/// Where training and evaluation graphs come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset manifest; relative to the config file.
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    #[default]
    Cycles,
    Sbm,
    Planar,
    Molecules,
}

/// Synthetic dataset produced by `gen-data`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub cycle_sizes: RangeInclusive<usize>,
    pub planar_nodes: usize,
    pub sbm: SbmConfig,
    pub molecules: MoleculeConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Cycles,
            train: 200,
            val: 50,
            test: 50,
            cycle_sizes: 6..=8,
            planar_nodes: 16,
            sbm: SbmConfig::default(),
            molecules: MoleculeConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Categorical diffusion.
    #[default]
    Digress,
    /// Gaussian diffusion on one-hot encodings.
    Congress,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "digress" => Ok(Mode::Digress),
            "congress" => Ok(Mode::Congress),
            other => Err(Error::arg(format!("unknown mode '{other}'"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Digress => "digress",
            Mode::Congress => "congress",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    pub mode: Mode,
    pub steps: usize,
    /// Cosine schedule offset `s`.
    pub offset: f64,
    pub transitions: TransitionKind,
    pub features: FeatureFlags,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            mode: Mode::Digress,
            steps: 500,
            offset: 0.008,
            transitions: TransitionKind::Marginal,
            features: FeatureFlags::CYCLES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub count: usize,
    /// Fixed node count; drawn from the training size distribution when absent.
    pub nodes: Option<usize>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { count: 100, nodes: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Montecarlo,
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElboConfig {
    pub estimator: EstimatorKind,
    /// Noisy-graph draws per diffusion term for the Monte Carlo estimator.
    pub draws: usize,
}

impl Default for ElboConfig {
    fn default() -> Self {
        ElboConfig {
            estimator: EstimatorKind::Montecarlo,
            draws: 16,
        }
    }
}

impl ElboConfig {
    pub fn estimator(&self) -> ElboEstimator {
        match self.estimator {
            EstimatorKind::Montecarlo => ElboEstimator::MonteCarlo(self.draws),
            EstimatorKind::Exhaustive => ElboEstimator::Exhaustive,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// Kernel bandwidths; the median heuristic over the train set when absent.
    pub sigma_degree: Option<f64>,
    pub sigma_clustering: Option<f64>,
    pub sigma_orbit: Option<f64>,
    /// Bootstrap replicates for the ratio intervals; 0 disables them.
    pub bootstrap: usize,
    pub level: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            sigma_degree: None,
            sigma_clustering: None,
            sigma_orbit: None,
            bootstrap: 200,
            level: 0.95,
        }
    }
}

/// Graph-level property a regressor is trained to predict.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    #[default]
    EdgeCount,
    TriangleCount,
}

impl Property {
    pub fn of(self, g: &Graph) -> f64 {
        match self {
            Property::EdgeCount => g.edge_count() as f64,
            Property::TriangleCount => {
                let adj = g.adjacency();
                let n = g.n();
                let mut count = 0usize;
                for i in 0..n {
                    for j in i + 1..n {
                        if adj.has(i, j) {
                            count += (j + 1..n).filter(|&k| adj.has(i, k) && adj.has(j, k)).count();
                        }
                    }
                }
                count as f64
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuidanceConfig {
    pub property: Property,
    pub scale: f64,
    /// Auxiliary features of the regressor. Guidance differentiates only
    /// through the node and edge inputs, so features that already encode the
    /// property make the gradient uninformative.
    pub features: FeatureFlags,
    pub target: Option<f64>,
    pub regressor: DenoiserConfig,
    pub train: TrainConfig,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            property: Property::EdgeCount,
            scale: 1.0,
            features: FeatureFlags::NONE,
            target: None,
            regressor: DenoiserConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Atom and bond table used by molecular features, validity and the
/// molecule generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MolecularConfig {
    pub symbols: Vec<String>,
    pub valences: Vec<u32>,
    pub weights: Vec<f64>,
    pub bond_orders: Vec<u32>,
}

impl Default for MolecularConfig {
    fn default() -> Self {
        let t = heavy_atom_table();
        MolecularConfig {
            symbols: t.symbols,
            valences: t.valences,
            weights: t.weights,
            bond_orders: t.bond_orders,
        }
    }
}

impl MolecularConfig {
    pub fn table(&self) -> Result<MolecularTable> {
        let n = self.symbols.len();
        if n == 0 || self.valences.len() != n || self.weights.len() != n {
            return Err(Error::Config(
                "molecular: symbols, valences and weights must be nonempty and of equal length".into(),
            ));
        }
        if self.bond_orders.first() != Some(&0) {
            return Err(Error::Config("molecular: bond class 0 must have order 0".into()));
        }
        Ok(MolecularTable {
            symbols: self.symbols.clone(),
            valences: self.valences.clone(),
            weights: self.weights.clone(),
            bond_orders: self.bond_orders.clone(),
        })
    }
}

impl Config {
    /// Parses TOML text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(p) = &mut cfg.data.manifest {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, path.parent().unwrap_or(Path::new("")))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.guidance.regressor.validate()?;
        self.guidance.train.validate()?;
        self.molecular.table()?;
        if self.diffusion.steps == 0 {
            return Err(Error::Config("diffusion.steps must be positive".into()));
        }
        if !(self.diffusion.offset > 0.0) {
            return Err(Error::Config("diffusion.offset must be positive".into()));
        }
        if !self.guidance.scale.is_finite() {
            return Err(Error::Config("guidance.scale must be finite".into()));
        }
        if !(0.0 < self.evaluate.level && self.evaluate.level < 1.0) {
            return Err(Error::Config("evaluate.level must be in (0, 1)".into()));
        }
        for s in [self.evaluate.sigma_degree, self.evaluate.sigma_clustering, self.evaluate.sigma_orbit]
            .into_iter()
            .flatten()
        {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("kernel bandwidth must be positive, got {s}")));
            }
        }
        if self.elbo.estimator == EstimatorKind::Montecarlo && self.elbo.draws == 0 {
            return Err(Error::Config("elbo.draws must be positive".into()));
        }
        Ok(())
    }

    /// Manifest path, or an error naming the command that needs it.
    pub fn manifest(&self, command: &str) -> Result<&Path> {
        self.data
            .manifest
            .as_deref()
            .ok_or_else(|| Error::Config(format!("{command} needs data.manifest")))
    }
}
