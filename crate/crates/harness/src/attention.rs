use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hoitg_core::HoiModel;
use hoitg_scenegen::SceneSample;

use crate::error::{HarnessError, Result};

/// Head-averaged human-to-object attention of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanObjectAttention {
    /// `V₀ × 64`, row-major.
    pub block: Vec<f64>,
    pub human: usize,
    pub object: usize,
    /// Row means of `block`, one per coarse human vertex.
    pub per_vertex: Vec<f64>,
    /// Sums of the full attention rows of the human tokens (all `N` columns).
    pub row_sums: Vec<f64>,
}

pub fn human_object_attention(
    model: &HoiModel<f32>,
    sample: &SceneSample,
    block: usize,
    layer: usize,
) -> Result<HumanObjectAttention> {
    let layers = model.config.encoder.layers;
    if block >= 3 || layer >= layers {
        return Err(HarnessError::Parameter(format!(
            "attention block {block} / layer {layer} out of range (3 blocks, {layers} layers)"
        )));
    }
    let rec = model.reconstruct(&sample.channels, sample.template, true)?;
    let maps = rec.attention.expect("retention requested");
    let map = maps[block][layer].head_mean();
    let part = model.partition();
    let n = part.total();
    let (h0, o0) = (part.joints, part.joints + part.human);
    let mut sub = Vec::with_capacity(part.human * part.object);
    let mut per_vertex = Vec::with_capacity(part.human);
    let mut row_sums = Vec::with_capacity(part.human);
    for r in h0..h0 + part.human {
        let row = &map[r * n..(r + 1) * n];
        let cols = &row[o0..o0 + part.object];
        sub.extend_from_slice(cols);
        per_vertex.push(cols.iter().sum::<f64>() / part.object as f64);
        row_sums.push(row.iter().sum());
    }
    Ok(HumanObjectAttention {
        block: sub,
        human: part.human,
        object: part.object,
        per_vertex,
        row_sums,
    })
}

/// 8-bit binary PGM of a row-major matrix, scaled so the maximum maps to 255.
pub fn write_pgm(path: &Path, data: &[f64], rows: usize, cols: usize) -> Result<()> {
    let max = data.iter().copied().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{cols} {rows}\n255\n")?;
    let bytes: Vec<u8> = data.iter().map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8).collect();
    f.write_all(&bytes)?;
    Ok(())
}

/// Writes `{prefix}.csv` (vertex, attention) and `{prefix}.pgm` (V₀ rows × 64 columns).
pub fn export_attention(att: &HumanObjectAttention, prefix: &Path) -> Result<(PathBuf, PathBuf)> {
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = prefix
        .file_name()
        .ok_or_else(|| HarnessError::Parameter(format!("output prefix {} has no file name", prefix.display())))?
        .to_string_lossy()
        .into_owned();
    let csv = prefix.with_file_name(format!("{name}.csv"));
    let pgm = prefix.with_file_name(format!("{name}.pgm"));
    let mut text = String::from("vertex,attention\n");
    for (i, v) in att.per_vertex.iter().enumerate() {
        text.push_str(&format!("{i},{v}\n"));
    }
    fs::write(&csv, text)?;
    write_pgm(&pgm, &att.block, att.human, att.object)?;
    Ok((csv, pgm))
}
