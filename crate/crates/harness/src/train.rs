//! Deterministic training loop: per-sample graphs evaluated in parallel, gradients
//! reduced in batch order, one Adam step per batch.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hoitg_core::{total_loss, HoiModel, LossReport, LossWeights, ModelAssets, PredictionVars, TargetVars, TERM_NAMES};
use hoitg_diffcore::{map_indexed, AdamState, Exec, Graph};
use hoitg_scenegen::{mix_seed, Dataset, SceneSample, World, WorldConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_FORMAT};
use crate::config::TrainConfig;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub learning_rate: f64,
    /// Batch means of every term; `total` is their weighted sum.
    pub loss: LossReport,
}

/// Where a run writes its artifacts; every field is optional.
#[derive(Debug, Clone, Default)]
pub struct TrainOutput {
    pub checkpoint: Option<PathBuf>,
    /// Receives `epoch_NNN.ckpt` after every epoch.
    pub epoch_dir: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: HoiModel<f32>,
    pub log: Vec<StepLog>,
    pub checkpoint: Checkpoint,
}

impl TrainOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.log.first().map_or(f64::NAN, |l| l.loss.total)
    }

    pub fn final_loss(&self) -> f64 {
        self.log.last().map_or(f64::NAN, |l| l.loss.total)
    }
}

pub fn log_header() -> String {
    let mut h = String::from("step,epoch,lr,total");
    for t in TERM_NAMES {
        h.push(',');
        h.push_str(t);
    }
    h
}

fn log_row(l: &StepLog) -> String {
    let mut row = format!("{},{},{},{}", l.step, l.epoch, l.learning_rate, l.loss.total);
    for v in l.loss.terms() {
        row.push_str(&format!(",{v}"));
    }
    row
}

// ── per-sample gradients ─────────────────────────────────────────────

/// Loss and parameter gradients of one scene.
pub fn sample_gradients(
    model: &HoiModel<f32>,
    sample: &SceneSample,
    weights: &LossWeights,
) -> Result<(LossReport, Vec<Vec<f32>>)> {
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, true);
    let input = model.input(&mut g, &sample.channels)?;
    let fv = model.forward(&mut g, &p, input, sample.template)?;
    let targets = TargetVars::new(&mut g, sample)?;
    let loss = total_loss(
        &mut g,
        &PredictionVars::from(&fv),
        &targets,
        &model.assets.edge_a,
        &model.assets.edge_b,
        weights,
    )?;
    let report = loss.report(&g, weights);
    g.backward(loss.total)?;
    let grads = p
        .vars()
        .iter()
        .zip(model.params.tensors())
        .map(|(&v, t)| g.grad(v).map_or_else(|| vec![0.0; t.numel()], <[f32]>::to_vec))
        .collect();
    Ok((report, grads))
}

/// Batch-mean loss and gradients, reduced in batch order.
pub fn batch_gradients(
    model: &HoiModel<f32>,
    batch: &[&SceneSample],
    weights: &LossWeights,
    exec: Exec,
) -> Result<(LossReport, Vec<Vec<f32>>)> {
    let per: Vec<Result<(LossReport, Vec<Vec<f32>>)>> =
        map_indexed(exec, batch.len(), |b| sample_gradients(model, batch[b], weights));
    let mut terms = [0.0f64; 9];
    let mut acc: Vec<Vec<f32>> = model.params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
    for r in per {
        let (report, grads) = r?;
        for (t, v) in terms.iter_mut().zip(report.terms()) {
            *t += v;
        }
        for (a, g) in acc.iter_mut().zip(&grads) {
            for (x, y) in a.iter_mut().zip(g) {
                *x += *y;
            }
        }
    }
    let n = batch.len() as f64;
    let inv = 1.0 / batch.len() as f32;
    acc.iter_mut().flatten().for_each(|x| *x *= inv);
    Ok((LossReport::from_terms(terms.map(|t| t / n), weights), acc))
}

// ── loop ─────────────────────────────────────────────────────────────

fn epoch_order(seed: u64, epoch: usize, ids: &[usize]) -> Vec<usize> {
    let mut order = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch as u64));
    order.shuffle(&mut rng);
    order
}

fn write_abort(log: Option<&Path>, step: usize, batch: &[usize], detail: &str) {
    if let Some(path) = log {
        let dump = serde_json::json!({ "step": step, "batch": batch, "detail": detail });
        let _ = fs::write(path.with_extension("abort.json"), dump.to_string());
    }
}

/// Trains a fresh model on `samples` (dataset indices `ids`, same order).
pub fn train(
    cfg: &TrainConfig,
    assets: Arc<ModelAssets>,
    world: WorldConfig,
    samples: &[&SceneSample],
    ids: &[usize],
    out: &TrainOutput,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() || samples.len() != ids.len() {
        return Err(HarnessError::Config(format!(
            "{} samples with {} indices; training needs at least one",
            samples.len(),
            ids.len()
        )));
    }
    let mut model = HoiModel::<f32>::new(cfg.model.clone(), assets)?;
    let mut adam = AdamState::new(model.params.tensors(), cfg.adam());
    let mut log_file = match &out.log {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let mut w = BufWriter::new(File::create(p)?);
            writeln!(w, "{}", log_header())?;
            Some(w)
        }
        None => None,
    };
    let positions: Vec<usize> = (0..samples.len()).collect();
    let meta = |steps: usize, last: Option<&StepLog>| CheckpointMeta {
        format: CHECKPOINT_FORMAT.into(),
        train_config: cfg.clone(),
        world,
        steps,
        metrics: last.map_or(serde_json::Value::Null, |l| serde_json::to_value(l.loss).unwrap_or_default()),
    };
    let mut log = Vec::with_capacity(cfg.total_steps());
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        adam.set_learning_rate(lr);
        let order = epoch_order(cfg.seed, epoch, &positions);
        for s in 0..cfg.steps_per_epoch {
            let picks: Vec<usize> = (0..cfg.batch_size)
                .map(|b| order[(s * cfg.batch_size + b) % order.len()])
                .collect();
            let batch: Vec<&SceneSample> = picks.iter().map(|&i| samples[i]).collect();
            let batch_ids: Vec<usize> = picks.iter().map(|&i| ids[i]).collect();
            let (report, grads) = match batch_gradients(&model, &batch, &cfg.weights, cfg.exec) {
                Ok(r) => r,
                Err(e) => {
                    write_abort(out.log.as_deref(), step, &batch_ids, &e.to_string());
                    return Err(e);
                }
            };
            if !report.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                let detail = format!("loss {report:?}");
                write_abort(out.log.as_deref(), step, &batch_ids, &detail);
                return Err(HarnessError::Numeric {
                    step,
                    batch: batch_ids,
                    detail,
                });
            }
            adam.step(model.params.tensors_mut(), &grads)?;
            let entry = StepLog {
                step,
                epoch,
                learning_rate: lr,
                loss: report,
            };
            if let Some(w) = log_file.as_mut() {
                writeln!(w, "{}", log_row(&entry))?;
            }
            on_step(&entry);
            log.push(entry);
            step += 1;
        }
        if let Some(dir) = &out.epoch_dir {
            Checkpoint::from_model(&model, meta(step, log.last())).save(&dir.join(format!("epoch_{epoch:03}.ckpt")))?;
        }
    }
    if let Some(w) = log_file.as_mut() {
        w.flush()?;
    }
    let checkpoint = Checkpoint::from_model(&model, meta(step, log.last()));
    if let Some(path) = &out.checkpoint {
        checkpoint.save(path)?;
    }
    Ok(TrainOutcome { model, log, checkpoint })
}

/// World and assets of a dataset after checking it against the configuration.
pub fn prepare(cfg: &TrainConfig, dataset: &Dataset) -> Result<(World, Arc<ModelAssets>)> {
    let dcfg = &dataset.manifest.config;
    if dcfg.scene.res != cfg.model.res {
        return Err(HarnessError::Config(format!(
            "dataset resolution {} differs from model resolution {}",
            dcfg.scene.res, cfg.model.res
        )));
    }
    if let Some(t) = &cfg.templates {
        if *t != dcfg.templates {
            return Err(HarnessError::Config(format!(
                "dataset templates {:?} differ from configured {:?}",
                dcfg.templates, t
            )));
        }
    }
    let world = World::new(dcfg.world)?;
    let assets = Arc::new(ModelAssets::from_world(&world)?);
    Ok((world, assets))
}

/// Trains on the dataset's training split.
pub fn train_on_dataset(
    cfg: &TrainConfig,
    dataset: &Dataset,
    out: &TrainOutput,
    on_step: impl FnMut(&StepLog),
) -> Result<TrainOutcome> {
    let (world, assets) = prepare(cfg, dataset)?;
    let ids = dataset.manifest.train.clone();
    let samples: Vec<&SceneSample> = ids.iter().map(|&i| &dataset.samples[i]).collect();
    train(cfg, assets, world.config, &samples, &ids, out, on_step)
}
