//! Single-file parameter container.
//!
//! Layout: one line of compact JSON (the manifest) terminated by `\n`, followed by
//! the raw little-endian `f32` values of every parameter in manifest order.
//! `byte_offset` is measured from the first byte after the newline.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{DiffError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub byte_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub params: Vec<ParamEntry>,
    /// Caller-defined metadata stored next to the parameter table.
    #[serde(default)]
    pub extra: serde_json::Value,
}

pub fn write_params<W: Write>(mut w: W, params: &[(String, &Tensor<f32>)], extra: serde_json::Value) -> Result<()> {
    let mut offset = 0u64;
    let entries = params
        .iter()
        .map(|(name, t)| {
            let e = ParamEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                byte_offset: offset,
            };
            offset += 4 * t.numel() as u64;
            e
        })
        .collect();
    let manifest = Manifest { params: entries, extra };
    let json = serde_json::to_string(&manifest)?;
    w.write_all(json.as_bytes())?;
    w.write_all(b"\n")?;
    for (_, t) in params {
        let mut buf = Vec::with_capacity(4 * t.numel());
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_params<R: BufRead>(mut r: R) -> Result<(Manifest, Vec<Tensor<f32>>)> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(DiffError::Format("missing manifest terminator".into()));
    }
    line.pop();
    let manifest: Manifest = serde_json::from_slice(&line)?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let mut tensors = Vec::with_capacity(manifest.params.len());
    let mut expected = 0u64;
    for e in &manifest.params {
        if e.byte_offset != expected {
            return Err(DiffError::Format(format!(
                "parameter {} at offset {} (expected {expected})",
                e.name, e.byte_offset
            )));
        }
        let n: usize = e.shape.iter().product();
        let start = e.byte_offset as usize;
        let end = start + 4 * n;
        let bytes = body
            .get(start..end)
            .ok_or_else(|| DiffError::Format(format!("parameter {} truncated", e.name)))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(Tensor::new(e.shape.clone(), data)?);
        expected = end as u64;
    }
    if expected as usize != body.len() {
        return Err(DiffError::Format(format!(
            "{} trailing bytes after parameters",
            body.len() - expected as usize
        )));
    }
    Ok((manifest, tensors))
}
