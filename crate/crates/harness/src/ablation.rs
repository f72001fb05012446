use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use hoitg_core::metrics::format_table;
use hoitg_core::{MetricsReport, ModelAssets, Variant};
use hoitg_scenegen::{Dataset, SceneSample, World};
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{HarnessError, Result};
use crate::eval::{evaluate, PUBLISHED_REFERENCE};
use crate::train::{prepare, train, TrainOutput};

/// Object KNN sizes of the neighbor-count sweep.
pub const KNN_SWEEP: [usize; 5] = [1, 3, 5, 10, 20];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationKind {
    Variants(Vec<Variant>),
    Knn(Vec<usize>),
}

impl AblationKind {
    pub fn all_variants() -> Self {
        AblationKind::Variants(Variant::ALL.to_vec())
    }

    pub fn knn_sweep() -> Self {
        AblationKind::Knn(KNN_SWEEP.to_vec())
    }

    /// `(row name, variant, object K)` of every run.
    pub fn runs(&self, base: &TrainConfig, default_k: usize) -> Vec<(String, Variant, usize)> {
        match self {
            AblationKind::Variants(vs) => vs.iter().map(|&v| (v.id().to_string(), v, default_k)).collect(),
            AblationKind::Knn(ks) => {
                let v = base.model.encoder.variant;
                ks.iter().map(|&k| (format!("{v} K={k}"), v, k)).collect()
            }
        }
    }
}

impl fmt::Display for AblationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AblationKind::Variants(vs) if vs.as_slice() == Variant::ALL => f.write_str("all"),
            AblationKind::Variants(vs) => {
                let ids: Vec<&str> = vs.iter().map(|v| v.id()).collect();
                f.write_str(&ids.join(","))
            }
            AblationKind::Knn(_) => f.write_str("knn"),
        }
    }
}

impl FromStr for AblationKind {
    type Err = HarnessError;

    /// `all`, `knn`, or a comma-separated list of variant ids.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::all_variants()),
            "knn" => Ok(Self::knn_sweep()),
            list => list
                .split(',')
                .map(|id| id.trim().parse::<Variant>().map_err(|e| HarnessError::Parameter(e.to_string())))
                .collect::<Result<Vec<_>>>()
                .map(AblationKind::Variants),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub variant: Variant,
    pub object_knn: usize,
    pub refined: Option<MetricsReport>,
    pub init: Option<MetricsReport>,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Set when training aborted on a non-finite loss.
    pub diverged: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub kind: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ablation: {} (held-out split, identical seeds and budgets)", self.kind);
        let rows: Vec<(String, MetricsReport)> = self
            .rows
            .iter()
            .filter_map(|r| r.refined.map(|m| (r.name.clone(), m)))
            .collect();
        out.push_str(&format_table(&rows));
        for r in &self.rows {
            match &r.diverged {
                Some(d) => {
                    let _ = writeln!(out, "{}: diverged ({d})", r.name);
                }
                None => {
                    let _ = writeln!(out, "{}: loss {:.4} -> {:.4}", r.name, r.initial_loss, r.final_loss);
                }
            }
        }
        let _ = writeln!(out, "{PUBLISHED_REFERENCE}");
        out
    }
}

/// Trains every configuration of `kind` from the same seed and budget on the
/// training split and evaluates on the held-out split.
pub fn run_ablation(
    kind: &AblationKind,
    base: &TrainConfig,
    dataset: &Dataset,
    mut on_run: impl FnMut(&AblationRow),
) -> Result<AblationTable> {
    let (world, _) = prepare(base, dataset)?;
    let train_ids = dataset.manifest.train.clone();
    let test_ids = dataset.manifest.test.clone();
    let train_set: Vec<&SceneSample> = train_ids.iter().map(|&i| &dataset.samples[i]).collect();
    let test_set: Vec<&SceneSample> = test_ids.iter().map(|&i| &dataset.samples[i]).collect();
    let mut rows = Vec::new();
    for (name, variant, k) in kind.runs(base, world.config.object_knn) {
        let mut wcfg = world.config;
        wcfg.object_knn = k;
        let w = World::new(wcfg)?;
        let assets = Arc::new(ModelAssets::from_world(&w)?);
        let mut cfg = base.clone();
        cfg.model.encoder.variant = variant;
        let row = match train(&cfg, assets, wcfg, &train_set, &train_ids, &TrainOutput::default(), |_| {}) {
            Ok(outcome) => {
                let report = evaluate(&outcome.model, &test_set, &test_ids, cfg.exec)?;
                AblationRow {
                    name,
                    variant,
                    object_knn: k,
                    refined: Some(report.refined),
                    init: Some(report.init),
                    initial_loss: outcome.initial_loss(),
                    final_loss: outcome.final_loss(),
                    diverged: None,
                }
            }
            Err(e @ HarnessError::Numeric { .. }) => AblationRow {
                name,
                variant,
                object_knn: k,
                refined: None,
                init: None,
                initial_loss: f64::NAN,
                final_loss: f64::NAN,
                diverged: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        on_run(&row);
        rows.push(row);
    }
    Ok(AblationTable {
        kind: kind.to_string(),
        rows,
    })
}
