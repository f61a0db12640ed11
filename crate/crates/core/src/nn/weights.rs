//! `NNW1` weight files: magic, a text manifest (`name kind shape` per line,
//! blank line terminated), then raw little-endian `f32` values in manifest
//! order.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::ModelGraph;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NNW1";

pub fn encode_weights(model: &ModelGraph<f32>) -> Vec<u8> {
    let tensors = model.named_tensors();
    let mut manifest = String::new();
    for (name, kind, t) in &tensors {
        let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        manifest.push_str(&format!("{name} {} {}\n", kind.as_str(), shape.join("x")));
    }
    manifest.push('\n');
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(manifest.as_bytes());
    for (_, _, t) in &tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Reads a weight file into a fresh copy of the standard architecture.
/// Every tensor of the architecture must appear with its exact shape.
pub fn decode_weights(bytes: &[u8]) -> Result<ModelGraph<f32>> {
    let body = bytes
        .strip_prefix(MAGIC.as_slice())
        .ok_or_else(|| Error::format("missing NNW1 magic"))?;
    let end = body
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::format("manifest is not terminated"))?;
    let manifest = std::str::from_utf8(&body[..end + 1])
        .map_err(|_| Error::format("manifest is not UTF-8"))?;
    let mut blob = &body[end + 2..];

    let mut model = ModelGraph::<f32>::table1(0);
    let mut slots = model.named_tensors_mut();
    let mut seen = vec![false; slots.len()];
    for line in manifest.lines() {
        let mut parts = line.split_whitespace();
        let (Some(name), Some(_kind), Some(shape), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::format(format!("bad manifest line {line:?}")));
        };
        let shape: Vec<usize> = shape
            .split('x')
            .map(|d| {
                d.parse()
                    .map_err(|_| Error::format(format!("bad shape in {line:?}")))
            })
            .collect::<Result<_>>()?;
        let idx = slots
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::format(format!("unknown tensor {name}")))?;
        let target = &mut slots[idx].1;
        if shape != target.shape() {
            return Err(Error::format(format!(
                "{name}: manifest shape {shape:?} differs from {:?}",
                target.shape()
            )));
        }
        let n = target.len() * 4;
        if blob.len() < n {
            return Err(Error::format(format!("{name}: value blob truncated")));
        }
        for (dst, chunk) in target.data_mut().iter_mut().zip(blob[..n].chunks_exact(4)) {
            let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            if !v.is_finite() {
                return Err(Error::format(format!("{name}: non-finite value")));
            }
            *dst = v;
        }
        blob = &blob[n..];
        seen[idx] = true;
    }
    if !blob.is_empty() {
        return Err(Error::format(format!(
            "{} trailing bytes after values",
            blob.len()
        )));
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::format(format!("tensor {} missing", slots[i].0)));
    }
    drop(slots);
    Ok(model)
}

pub fn save_weights(model: &ModelGraph<f32>, path: &Path) -> Result<()> {
    fs::write(path, encode_weights(model))?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<ModelGraph<f32>> {
    decode_weights(&fs::read(path)?)
}

/// SHA-256 of the encoded weights; both nodes compare it at session start.
pub fn weights_hash(model: &ModelGraph<f32>) -> [u8; 32] {
    Sha256::digest(encode_weights(model)).into()
}
