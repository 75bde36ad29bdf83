use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{ContinuousModel, DiffusionModel, Regressor};
use crate::denoiser::GraphTransformer;
use crate::error::{Error, Result};
use crate::features::MolecularTable;
use crate::graph::DatasetStats;
use crate::nn::{checkpoint, Tensor};
use crate::noise::{ContinuousSchedule, NoiseModel, NoiseSchedule, TransitionKind};

const NET: &str = "net.";

/// Any trained model that can be written to a checkpoint.
#[derive(Clone, Debug)]
pub enum SavedModel {
    Discrete(DiffusionModel),
    Continuous(ContinuousModel),
    Regressor(Regressor),
}

impl SavedModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SavedModel::Discrete(_) => "discrete",
            SavedModel::Continuous(_) => "continuous",
            SavedModel::Regressor(_) => "regressor",
        }
    }
}

fn vector(v: Vec<f64>) -> Tensor {
    Tensor {
        shape: vec![v.len()],
        data: v,
    }
}

fn put(out: &mut Vec<(String, Tensor)>, name: &str, v: Vec<f64>) {
    out.push((name.to_string(), vector(v)));
}

fn kind_code(kind: TransitionKind) -> f64 {
    match kind {
        TransitionKind::Uniform => 0.0,
        TransitionKind::Marginal => 1.0,
    }
}

fn put_noise(out: &mut Vec<(String, Tensor)>, noise: &NoiseModel) {
    let mut sched = vec![noise.schedule.offset()];
    sched.extend_from_slice(noise.schedule.table());
    put(out, "__schedule", sched);
    put(out, "__transitions", vec![kind_code(noise.kind)]);
    put(out, "__limits.node", noise.node_limit().to_vec());
    put(out, "__limits.edge", noise.edge_limit().to_vec());
}

fn put_stats(out: &mut Vec<(String, Tensor)>, stats: &DatasetStats) {
    put(out, "__stats.node_marginals", stats.node_marginals.clone());
    put(out, "__stats.edge_marginals", stats.edge_marginals.clone());
    let counts = stats.node_counts.iter().flat_map(|(&n, &p)| [n as f64, p]).collect();
    put(out, "__stats.node_counts", counts);
}

fn put_table(out: &mut Vec<(String, Tensor)>, table: &MolecularTable) {
    let mut symbols = Vec::new();
    for s in &table.symbols {
        symbols.extend(s.bytes().map(f64::from));
        symbols.push(0.0);
    }
    put(out, "__molecular.symbols", symbols);
    put(out, "__molecular.valences", table.valences.iter().map(|&v| v as f64).collect());
    put(out, "__molecular.weights", table.weights.clone());
    put(out, "__molecular.bond_orders", table.bond_orders.iter().map(|&v| v as f64).collect());
}

struct Reader<'a>(HashMap<&'a str, &'a Tensor>);

impl<'a> Reader<'a> {
    fn get(&self, name: &str) -> Result<&'a [f64]> {
        self.0
            .get(name)
            .map(|t| t.data.as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing entry '{name}'")))
    }

    fn noise(&self) -> Result<NoiseModel> {
        let sched = self.get("__schedule")?;
        if sched.len() < 3 {
            return Err(Error::Checkpoint("schedule entry too short".into()));
        }
        let schedule = NoiseSchedule::from_table(sched[0], sched[1..].to_vec())
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let kind = match self.get("__transitions")? {
            [k] if *k == 0.0 => TransitionKind::Uniform,
            [k] if *k == 1.0 => TransitionKind::Marginal,
            other => return Err(Error::Checkpoint(format!("unknown transition code {other:?}"))),
        };
        NoiseModel::from_limits(
            schedule,
            kind,
            self.get("__limits.node")?.to_vec(),
            self.get("__limits.edge")?.to_vec(),
        )
        .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn stats(&self) -> Result<DatasetStats> {
        let counts = self.get("__stats.node_counts")?;
        if counts.len() % 2 != 0 {
            return Err(Error::Checkpoint("node count entry has odd length".into()));
        }
        let node_counts: BTreeMap<usize, f64> = counts.chunks(2).map(|c| (c[0] as usize, c[1])).collect();
        Ok(DatasetStats {
            node_marginals: self.get("__stats.node_marginals")?.to_vec(),
            edge_marginals: self.get("__stats.edge_marginals")?.to_vec(),
            node_counts,
        })
    }

    fn table(&self) -> Result<MolecularTable> {
        let bytes: Vec<u8> = self.get("__molecular.symbols")?.iter().map(|&b| b as u8).collect();
        let symbols = bytes
            .split(|&b| b == 0)
            .take_while(|s| !s.is_empty())
            .map(|s| String::from_utf8(s.to_vec()).map_err(|e| Error::Checkpoint(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok(MolecularTable {
            symbols,
            valences: self.get("__molecular.valences")?.iter().map(|&v| v as u32).collect(),
            weights: self.get("__molecular.weights")?.to_vec(),
            bond_orders: self.get("__molecular.bond_orders")?.iter().map(|&v| v as u32).collect(),
        })
    }
}

/// Flattens a model into named tensors.
pub fn to_entries(model: &SavedModel) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    match model {
        SavedModel::Discrete(m) => {
            put(&mut out, "__kind", vec![0.0]);
            put_noise(&mut out, &m.noise);
            put_stats(&mut out, &m.stats);
            put_table(&mut out, &m.table);
            out.extend(m.net.to_entries(NET));
        }
        SavedModel::Continuous(m) => {
            put(&mut out, "__kind", vec![1.0]);
            put(&mut out, "__alphas", m.schedule.alphas().to_vec());
            put_stats(&mut out, &m.stats);
            put_table(&mut out, &m.table);
            out.extend(m.net.to_entries(NET));
        }
        SavedModel::Regressor(m) => {
            put(&mut out, "__kind", vec![2.0]);
            put_noise(&mut out, &m.noise);
            put_table(&mut out, &m.table);
            out.extend(m.net.to_entries(NET));
        }
    }
    out
}

/// Inverse of [`to_entries`].
pub fn from_entries(entries: &[(String, Tensor)]) -> Result<SavedModel> {
    let r = Reader(entries.iter().map(|(n, t)| (n.as_str(), t)).collect());
    let net = GraphTransformer::from_entries(entries, NET)?;
    let model = match r.get("__kind")? {
        [k] if *k == 0.0 => {
            let stats = r.stats()?;
            SavedModel::Discrete(DiffusionModel {
                net,
                noise: r.noise()?,
                stats,
                table: r.table()?,
            })
        }
        [k] if *k == 1.0 => SavedModel::Continuous(ContinuousModel {
            net,
            schedule: ContinuousSchedule::from_alphas(r.get("__alphas")?.to_vec())
                .map_err(|e| Error::Checkpoint(e.to_string()))?,
            stats: r.stats()?,
            table: r.table()?,
        }),
        [k] if *k == 2.0 => SavedModel::Regressor(Regressor {
            net,
            noise: r.noise()?,
            table: r.table()?,
        }),
        other => return Err(Error::Checkpoint(format!("unknown model kind {other:?}"))),
    };
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &SavedModel) -> Result<()> {
    checkpoint::write_file(path, &to_entries(model))
}

pub fn load_checkpoint(path: &Path) -> Result<SavedModel> {
    from_entries(&checkpoint::read_file(path)?)
}
