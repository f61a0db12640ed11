//! ECG ingestion: CSV with a `fs=` sidecar, or the `ECG1` binary layout.
//!
//! Binary layout: `b"ECG1"`, u64 LE sample count, f64 LE sampling rate,
//! then `count` f32 LE samples.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::EcgSignal;
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"ECG1";
pub const CSV_HEADER: &str = "sample_index,mv";

/// Sidecar metadata path for a CSV record: `rec.csv` -> `rec.meta`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta")
}

/// Loads either format, sniffing the magic bytes.
pub fn load_ecg(path: &Path) -> Result<EcgSignal> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(BINARY_MAGIC) {
        decode_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| {
            Error::format(format!("{} is neither ECG1 nor UTF-8 CSV", path.display()))
        })?;
        let meta = fs::read_to_string(meta_path(path))?;
        parse_csv(&text, parse_meta(&meta)?)
    }
}

pub fn parse_meta(text: &str) -> Result<f64> {
    for line in text.lines() {
        if let Some(v) = line.trim().strip_prefix("fs=") {
            return v
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::format(format!("bad fs value {v:?}")));
        }
    }
    Err(Error::format("metadata has no fs= line"))
}

pub fn parse_csv(text: &str, fs: f64) -> Result<EcgSignal> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some(CSV_HEADER) => {}
        other => {
            return Err(Error::format(format!(
                "expected header {CSV_HEADER:?}, found {other:?}"
            )))
        }
    }
    let mut samples = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (idx, mv) = line
            .split_once(',')
            .ok_or_else(|| Error::format(format!("line {}: expected two fields", lineno + 2)))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| Error::format(format!("line {}: bad sample index", lineno + 2)))?;
        if idx != samples.len() {
            return Err(Error::format(format!(
                "line {}: sample index {idx} out of sequence",
                lineno + 2
            )));
        }
        let mv: f64 = mv
            .trim()
            .parse()
            .map_err(|_| Error::format(format!("line {}: bad voltage", lineno + 2)))?;
        samples.push(mv);
    }
    EcgSignal::new(samples, fs)
}

pub fn write_csv(path: &Path, sig: &EcgSignal) -> Result<()> {
    let mut out = String::with_capacity(sig.len() * 16);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (i, v) in sig.samples.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    fs::write(path, out)?;
    fs::write(meta_path(path), format!("fs={}\n", sig.fs))?;
    Ok(())
}

pub fn encode_binary(sig: &EcgSignal) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * sig.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(sig.len() as u64).to_le_bytes());
    out.extend_from_slice(&sig.fs.to_le_bytes());
    for v in &sig.samples {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<EcgSignal> {
    if bytes.len() < 20 || &bytes[..4] != BINARY_MAGIC {
        return Err(Error::format("missing ECG1 header"));
    }
    let count = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
    let fs = f64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let body = &bytes[20..];
    if count.checked_mul(4) != Some(body.len() as u64) {
        return Err(Error::format(format!(
            "declared {count} samples but body holds {} bytes",
            body.len()
        )));
    }
    let samples = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    EcgSignal::new(samples, fs).map_err(|e| Error::format(e.to_string()))
}

pub fn write_binary(path: &Path, sig: &EcgSignal) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_binary(sig))?;
    Ok(())
}
