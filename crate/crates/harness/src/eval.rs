use std::fmt::Write as _;

use hoitg_core::metrics::{format_table, sample_metrics, CHAMFER_NOTE};
use hoitg_core::{HoiModel, MetricsReport, SampleMetrics};
use hoitg_diffcore::{map_indexed, Exec};
use hoitg_meshkit::Point;
use hoitg_scenegen::SceneSample;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Published full-scale numbers on BEHAVE, printed for orientation only.
pub const PUBLISHED_REFERENCE: &str =
    "published reference (BEHAVE, non-target): CD_human 4.59 cm, CD_object 8.00 cm, contact p 0.662, r 0.554";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub index: usize,
    pub refined: SampleMetrics,
    pub init: SampleMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub refined: MetricsReport,
    pub init: MetricsReport,
    pub samples: Vec<SampleEval>,
    pub note: String,
    pub reference: String,
}

impl EvalReport {
    pub fn from_samples(samples: Vec<SampleEval>) -> Self {
        let refined: Vec<SampleMetrics> = samples.iter().map(|s| s.refined).collect();
        let init: Vec<SampleMetrics> = samples.iter().map(|s| s.init).collect();
        Self {
            refined: MetricsReport::aggregate(&refined),
            init: MetricsReport::aggregate(&init),
            samples,
            note: CHAMFER_NOTE.into(),
            reference: PUBLISHED_REFERENCE.into(),
        }
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHAMFER_NOTE}; contact at 5 cm; means of per-sample metrics");
        out.push_str(&format_table(&[
            ("init".to_string(), self.init),
            ("refined".to_string(), self.refined),
        ]));
        let _ = writeln!(out, "{PUBLISHED_REFERENCE}");
        out
    }
}

/// Metrics of predicted meshes against one scene's ground truth.
pub fn score(human: &[Point], object: &[Point], sample: &SceneSample) -> Result<SampleMetrics> {
    Ok(sample_metrics(
        human,
        object,
        &sample.human_full,
        &sample.object_vertices,
        &sample.contact,
    )?)
}

/// Refined and init-stage metrics of one scene. The refined object is the
/// template under the fitted pose.
pub fn evaluate_sample(model: &HoiModel<f32>, index: usize, sample: &SceneSample) -> Result<SampleEval> {
    let rec = model.reconstruct(&sample.channels, sample.template, false)?;
    let template = &model.assets.object(sample.template).template;
    let refined = score(&rec.human[2], &rec.object_mesh(template), sample)?;
    let init = score(&rec.init.human_full, &rec.init.object, sample)?;
    Ok(SampleEval { index, refined, init })
}

pub fn evaluate(model: &HoiModel<f32>, samples: &[&SceneSample], ids: &[usize], exec: Exec) -> Result<EvalReport> {
    let evals = map_indexed(exec, samples.len(), |i| evaluate_sample(model, ids[i], samples[i]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_samples(evals))
}
