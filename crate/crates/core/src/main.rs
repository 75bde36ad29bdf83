use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use graphdiff::config::{Config, Mode};
use graphdiff::engine::{init_thread_pool, load_checkpoint, save_checkpoint, DiffusionModel, SavedModel, ScaffoldMask};
use graphdiff::features::FeatureFlags;
use graphdiff::io::{read_graphs, write_graphs, Manifest, Split};
use graphdiff::noise::TransitionKind;
use graphdiff::pipeline::{self, Report};
use graphdiff::{Error, Result};

#[derive(Parser)]
#[command(name = "graphdiff", version, about = "Diffusion models for categorical graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command. All outputs go to the run directory `--out`,
/// next to the resolved config and seed.
#[derive(Args)]
struct Run {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    transitions: Option<TransitionKind>,
    #[arg(long)]
    features: Option<FeatureFlags>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    GenData {
        #[command(flatten)]
        run: Run,
    },
    /// Train a generative model on the manifest's train split.
    Train {
        #[command(flatten)]
        run: Run,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Draw unconditional samples.
    Sample {
        #[command(flatten)]
        run: Run,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Score generated graphs against the manifest's train and test splits.
    Evaluate {
        #[command(flatten)]
        run: Run,
        /// Graph file with the generated set.
        #[arg(long)]
        generated: PathBuf,
    },
    /// Variational lower bound on the test split.
    Elbo {
        #[command(flatten)]
        run: Run,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Only the first `count` test graphs.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train a property regressor for guided sampling.
    TrainRegressor {
        #[command(flatten)]
        run: Run,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Sample while steering a property towards a target.
    Guide {
        #[command(flatten)]
        run: Run,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        regressor: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        guidance_scale: Option<f64>,
        #[arg(long)]
        target: Option<f64>,
    },
    /// Sample graphs that contain a fixed subgraph on their first nodes.
    Scaffold {
        #[command(flatten)]
        run: Run,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Graph file whose first graph is the scaffold.
        #[arg(long)]
        scaffold_file: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        /// Nodes per sample; defaults to `sample.nodes` or the scaffold size plus 2.
        #[arg(long)]
        nodes: Option<usize>,
    },
}

impl Run {
    /// Loads the config, applies `edit`, creates the run directory and
    /// records the resolved config and seed in it.
    fn start(&self, command: &str, edit: impl FnOnce(&mut Config)) -> Result<Config> {
        let mut cfg = Config::load(&self.config)?;
        edit(&mut cfg);
        cfg.validate()?;
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        write(&self.out.join("config.toml"), &cfg.to_toml()?)?;
        write(&self.out.join("run.toml"), &format!("command = \"{command}\"\nseed = {}\n", self.seed))?;
        Ok(cfg)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) {
        if let Some(m) = self.mode {
            cfg.diffusion.mode = m;
        }
        if let Some(t) = self.transitions {
            cfg.diffusion.transitions = t;
        }
        if let Some(f) = self.features {
            cfg.diffusion.features = f;
        }
    }

    /// As [`Overrides::apply`], except `--features` selects the regressor's features.
    fn apply_regressor(&self, cfg: &mut Config) {
        let features = cfg.diffusion.features;
        self.apply(cfg);
        if let Some(f) = self.features {
            cfg.diffusion.features = features;
            cfg.guidance.features = f;
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn manifest(cfg: &Config, command: &str) -> Result<Manifest> {
    Manifest::load(cfg.manifest(command)?)
}

fn discrete(model: SavedModel, path: &Path) -> Result<DiffusionModel> {
    match model {
        SavedModel::Discrete(m) => Ok(m),
        other => Err(Error::arg(format!(
            "{} holds a {} model; this command needs a discrete one",
            path.display(),
            other.kind_name()
        ))),
    }
}

fn losses(trace: &[f64]) -> String {
    trace.iter().map(|l| format!("{l}\n")).collect()
}

fn property_report(cfg: &Config, graphs: &[graphdiff::graph::Graph], target: f64) -> Report {
    let values: Vec<f64> = graphs.iter().map(|g| cfg.guidance.property.of(g)).collect();
    let n = values.len().max(1) as f64;
    let mut r = Report::default();
    r.push("target", target);
    r.push("property.mean", values.iter().sum::<f64>() / n);
    r.push("abs_error.mean", values.iter().map(|v| (v - target).abs()).sum::<f64>() / n);
    r
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { run } => {
            let cfg = run.start("gen-data", |_| {})?;
            let splits = pipeline::generate_dataset(&cfg, run.seed)?;
            let mut m = Manifest::default();
            for (name, graphs, list) in [
                ("train.txt", &splits.train, &mut m.train),
                ("val.txt", &splits.val, &mut m.val),
                ("test.txt", &splits.test, &mut m.test),
            ] {
                write_graphs(&run.path(name), graphs)?;
                list.push(name.into());
            }
            m.save(&run.path("manifest.toml"))?;
            log::info!(
                "wrote {} / {} / {} graphs to {}",
                splits.train.len(),
                splits.val.len(),
                splits.test.len(),
                run.out.display()
            );
        }
        Command::Train { run, overrides } => {
            let cfg = run.start("train", |c| overrides.apply(c))?;
            let train = manifest(&cfg, "train")?.read(Split::Train)?;
            let (model, trace) = pipeline::train_model(&cfg, &train, run.seed, 100)?;
            save_checkpoint(&run.path("model.ckpt"), &model)?;
            write(&run.path("losses.txt"), &losses(&trace))?;
        }
        Command::Sample { run, checkpoint, count } => {
            let cfg = run.start("sample", |c| c.sample.count = count.unwrap_or(c.sample.count))?;
            let model = load_checkpoint(&checkpoint)?;
            let graphs = pipeline::sample(&model, cfg.sample.count, cfg.sample.nodes, run.seed)?;
            write_graphs(&run.path("samples.txt"), &graphs)?;
        }
        Command::Evaluate { run, generated } => {
            let cfg = run.start("evaluate", |_| {})?;
            let m = manifest(&cfg, "evaluate")?;
            let gen = read_graphs(&generated)?;
            let report = pipeline::evaluate(&cfg, &gen, &m.read(Split::Train)?, &m.read(Split::Test)?, run.seed)?;
            write(&run.path("report.txt"), &report.to_string())?;
            print!("{report}");
        }
        Command::Elbo { run, checkpoint, count } => {
            let cfg = run.start("elbo", |_| {})?;
            let model = discrete(load_checkpoint(&checkpoint)?, &checkpoint)?;
            let mut test = manifest(&cfg, "elbo")?.read(Split::Test)?;
            test.truncate(count.unwrap_or(test.len()));
            let reports = pipeline::elbo_all(&model, &test, cfg.elbo.estimator(), run.seed)?;
            let mut out = String::from("# graph n log_pn prior diffusion reconstruction total\n");
            for (k, r) in reports.iter().enumerate() {
                out.push_str(&format!(
                    "{k} {} {} {} {} {} {}\n",
                    r.n,
                    r.log_pn,
                    r.prior,
                    r.diffusion_total(),
                    r.reconstruction,
                    r.total
                ));
            }
            let mean = reports.iter().map(|r| r.total).sum::<f64>() / reports.len().max(1) as f64;
            out.push_str(&format!("# mean total {mean}\n"));
            write(&run.path("elbo.txt"), &out)?;
            println!("mean ELBO {mean:.4} nats over {} graphs", reports.len());
        }
        Command::TrainRegressor { run, overrides } => {
            let cfg = run.start("train-regressor", |c| overrides.apply_regressor(c))?;
            let train = manifest(&cfg, "train-regressor")?.read(Split::Train)?;
            let (reg, trace) = pipeline::train_property_regressor(&cfg, &train, run.seed)?;
            save_checkpoint(&run.path("regressor.ckpt"), &SavedModel::Regressor(reg))?;
            write(&run.path("losses.txt"), &losses(&trace))?;
        }
        Command::Guide {
            run,
            checkpoint,
            regressor,
            count,
            guidance_scale,
            target,
        } => {
            let cfg = run.start("guide", |c| {
                c.sample.count = count.unwrap_or(c.sample.count);
                c.guidance.scale = guidance_scale.unwrap_or(c.guidance.scale);
                c.guidance.target = target.or(c.guidance.target);
            })?;
            let target = cfg
                .guidance
                .target
                .ok_or_else(|| Error::Config("guide needs --target or guidance.target".into()))?;
            let model = discrete(load_checkpoint(&checkpoint)?, &checkpoint)?;
            let reg = match load_checkpoint(&regressor)? {
                SavedModel::Regressor(r) => r,
                other => {
                    return Err(Error::arg(format!(
                        "{} holds a {} model, not a regressor",
                        regressor.display(),
                        other.kind_name()
                    )))
                }
            };
            let graphs = pipeline::guided_samples(
                &model,
                &reg,
                target,
                cfg.guidance.scale,
                cfg.sample.count,
                cfg.sample.nodes,
                run.seed,
            )?;
            write_graphs(&run.path("samples.txt"), &graphs)?;
            let report = property_report(&cfg, &graphs, target);
            write(&run.path("report.txt"), &report.to_string())?;
            print!("{report}");
        }
        Command::Scaffold {
            run,
            checkpoint,
            scaffold_file,
            count,
            nodes,
        } => {
            let cfg = run.start("scaffold", |c| {
                c.sample.count = count.unwrap_or(c.sample.count);
                c.sample.nodes = nodes.or(c.sample.nodes);
            })?;
            let model = discrete(load_checkpoint(&checkpoint)?, &checkpoint)?;
            let scaffold = read_graphs(&scaffold_file)?
                .into_iter()
                .next()
                .ok_or_else(|| Error::arg(format!("{} holds no graph", scaffold_file.display())))?;
            let n = cfg.sample.nodes.unwrap_or(scaffold.n() + 2);
            let mask = ScaffoldMask::new(scaffold);
            let graphs = pipeline::scaffold_samples(&model, &mask, cfg.sample.count, n, run.seed)?;
            write_graphs(&run.path("samples.txt"), &graphs)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match init_thread_pool().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
