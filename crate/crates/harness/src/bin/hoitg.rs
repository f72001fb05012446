use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hoitg_core::ModelAssets;
use hoitg_diffcore::Exec;
use hoitg_harness::{
    evaluate, export_attention, human_object_attention, run_ablation, train_on_dataset, AblationKind, Checkpoint,
    HarnessError, TrainConfig, TrainOutput,
};
use hoitg_scenegen::{Dataset, DatasetConfig, SceneSample, TemplateId, World};

#[derive(Parser)]
#[command(name = "hoitg", about = "HOI-TG toy reconstruction: data, training, evaluation, ablations")]
struct Cli {
    /// Run per-sample work sequentially.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene dataset.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 288)]
        num: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "box,chair,tube", value_delimiter = ',')]
        templates: Vec<TemplateId>,
        #[arg(long, default_value_t = 64)]
        res: usize,
    },
    /// Train on the dataset's training split.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-step loss CSV (default: next to the checkpoint).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Directory for per-epoch checkpoints.
        #[arg(long)]
        epoch_dir: Option<PathBuf>,
    },
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Train and compare graph-block placements (`all`, a variant id list) or the object KNN sweep (`knn`).
    Ablate {
        #[arg(long, default_value = "all")]
        variant: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Export human-to-object attention of one layer.
    VizAttn {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        sample: usize,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        block: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<TrainConfig> {
    Ok(match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    })
}

fn load_model(ckpt: &PathBuf, dataset: &Dataset) -> Result<hoitg_core::HoiModel<f32>> {
    let ck = Checkpoint::load(ckpt)?;
    if ck.meta.world != dataset.manifest.config.world {
        return Err(HarnessError::Config("checkpoint and dataset were built from different world configurations".into()).into());
    }
    let world = World::new(ck.meta.world)?;
    let assets = Arc::new(ModelAssets::from_world(&world).map_err(HarnessError::from)?);
    Ok(ck.model(assets)?)
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match cli.command {
        Command::Gen { out, num, seed, templates, res } => {
            let mut cfg = DatasetConfig { num, seed, templates, ..DatasetConfig::default() };
            cfg.scene.res = res;
            let (_, ds) = Dataset::generate(&cfg, exec)?;
            ds.write(&out)?;
            println!("wrote {} scenes ({} train / {} test) to {}", ds.samples.len(), ds.manifest.train.len(), ds.manifest.test.len(), out.display());
        }
        Command::Train { data, config, out, log, epoch_dir } => {
            let mut cfg = load_config(config.as_ref())?;
            if cli.sequential {
                cfg.exec = Exec::Sequential;
            }
            let ds = Dataset::read(&data)?;
            let log = log.unwrap_or_else(|| out.with_extension("csv"));
            let output = TrainOutput { checkpoint: Some(out.clone()), epoch_dir, log: Some(log.clone()) };
            let every = cfg.steps_per_epoch;
            let outcome = train_on_dataset(&cfg, &ds, &output, |l| {
                if (l.step + 1) % every == 0 {
                    eprintln!("epoch {:>3} step {:>6} lr {:.1e} loss {:.5}", l.epoch, l.step + 1, l.learning_rate, l.loss.total);
                }
            })?;
            println!("trained {} steps: loss {:.5} -> {:.5}; checkpoint {}, log {}", outcome.log.len(), outcome.initial_loss(), outcome.final_loss(), out.display(), log.display());
        }
        Command::Eval { data, ckpt, report, split } => {
            let ds = Dataset::read(&data)?;
            let model = load_model(&ckpt, &ds)?;
            let ids: Vec<usize> = match split {
                Split::Train => ds.manifest.train.clone(),
                Split::Test => ds.manifest.test.clone(),
                Split::All => (0..ds.samples.len()).collect(),
            };
            let samples: Vec<&SceneSample> = ids.iter().map(|&i| &ds.samples[i]).collect();
            let rep = evaluate(&model, &samples, &ids, exec)?;
            if let Some(dir) = report.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&report, serde_json::to_string_pretty(&rep)?).with_context(|| format!("writing {}", report.display()))?;
            fs::write(report.with_extension("txt"), rep.table())?;
            print!("{}", rep.table());
        }
        Command::Ablate { variant, data, out, config } => {
            let kind: AblationKind = variant.parse()?;
            let mut cfg = load_config(config.as_ref())?;
            if cli.sequential {
                cfg.exec = Exec::Sequential;
            }
            let ds = Dataset::read(&data)?;
            let table = run_ablation(&kind, &cfg, &ds, |r| eprintln!("finished {}", r.name))?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("ablation.json"), serde_json::to_string_pretty(&table)?)?;
            fs::write(out.join("ablation.txt"), table.table())?;
            print!("{}", table.table());
        }
        Command::VizAttn { ckpt, data, sample, layer, block, out } => {
            let ds = Dataset::read(&data)?;
            let model = load_model(&ckpt, &ds)?;
            let s = ds
                .samples
                .get(sample)
                .ok_or_else(|| HarnessError::Parameter(format!("sample {sample} out of range ({} scenes)", ds.samples.len())))?;
            let att = human_object_attention(&model, s, block, layer)?;
            let (csv, pgm) = export_attention(&att, &out)?;
            println!("wrote {} and {}", csv.display(), pgm.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(h) = err.downcast_ref::<HarnessError>() {
        return h.exit_code() as u8;
    }
    if let Some(s) = err.downcast_ref::<hoitg_scenegen::SceneError>() {
        return HarnessError::Scene(match s {
            hoitg_scenegen::SceneError::Config(m) => hoitg_scenegen::SceneError::Config(m.clone()),
            other => hoitg_scenegen::SceneError::Data(other.to_string()),
        })
        .exit_code() as u8;
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
