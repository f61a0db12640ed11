//! Labeled records: annotation CSVs and the record split manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::warn;

use crate::aami::AamiClass;
use crate::error::{Error, Result};
use crate::signal::io::load_ecg;
use crate::signal::EcgSignal;

pub const ANNOTATION_HEADER: &str = "sample_index,symbol";

/// The MIT-BIH split shipped with the crate.
pub const DEFAULT_SPLIT: &str = include_str!("../../data/mitbih_split.txt");

/// A signal with beat annotations in source sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub id: String,
    pub signal: EcgSignal,
    pub beats: Vec<(usize, AamiClass)>,
}

/// Parses `sample_index,symbol` rows. Unknown symbols become `Q` and
/// out-of-order rows are sorted; both are logged once per file.
pub fn parse_annotations(text: &str) -> Result<Vec<(usize, AamiClass)>> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some(ANNOTATION_HEADER) => {}
        other => {
            return Err(Error::format(format!(
                "expected header {ANNOTATION_HEADER:?}, found {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    let mut unknown: BTreeMap<String, usize> = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (idx, sym) = line
            .split_once(',')
            .ok_or_else(|| Error::format(format!("line {}: expected two fields", lineno + 2)))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| Error::format(format!("line {}: bad sample index {idx:?}", lineno + 2)))?;
        let sym = sym.trim();
        let class = AamiClass::from_symbol(sym).unwrap_or_else(|| {
            *unknown.entry(sym.to_string()).or_default() += 1;
            AamiClass::Q
        });
        out.push((idx, class));
    }
    if !unknown.is_empty() {
        warn!("unknown annotation symbols mapped to Q: {unknown:?}");
    }
    if out.windows(2).any(|w| w[0].0 > w[1].0) {
        warn!("annotations out of order; sorting by sample index");
        out.sort_by_key(|&(i, _)| i);
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<(usize, AamiClass)>> {
    parse_annotations(&fs::read_to_string(path)?)
}

/// Loads an ECG file and its annotations. Annotations past the end of the
/// signal are an error.
pub fn load_record(ecg: &Path, annotations: &Path) -> Result<(EcgSignal, Vec<(usize, AamiClass)>)> {
    let sig = load_ecg(ecg)?;
    let beats = load_annotations(annotations)?;
    if let Some(&(i, _)) = beats.iter().find(|(i, _)| *i >= sig.len()) {
        return Err(Error::format(format!(
            "annotation at sample {i} beyond signal of {} samples",
            sig.len()
        )));
    }
    Ok((sig, beats))
}

/// Writes `sample_index,symbol` rows using one representative symbol per
/// class (`N`, `A`, `V`, `F`, `Q`).
pub fn write_annotations(path: &Path, beats: &[(usize, AamiClass)]) -> Result<()> {
    let mut out = String::with_capacity(16 * beats.len() + 32);
    out.push_str(ANNOTATION_HEADER);
    out.push('\n');
    for &(i, c) in beats {
        let sym = match c {
            AamiClass::S => "A",
            other => other.as_str(),
        };
        out.push_str(&format!("{i},{sym}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Record id of a path: the file stem.
pub fn record_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Which records train, which are scored, which are dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub excluded: Vec<String>,
}

impl SplitManifest {
    /// Lines of `train: ids...`, `test: ids...` or `excluded: ids...`;
    /// repeated keys append. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = SplitManifest::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, ids) = line.split_once(':').ok_or_else(|| {
                Error::format(format!("manifest line {}: missing ':'", lineno + 1))
            })?;
            let list = match key.trim() {
                "train" => &mut m.train,
                "test" => &mut m.test,
                "excluded" => &mut m.excluded,
                other => {
                    return Err(Error::format(format!(
                        "manifest line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            };
            list.extend(ids.split_whitespace().map(str::to_string));
        }
        Ok(m)
    }

    pub fn default_mitbih() -> Self {
        Self::parse(DEFAULT_SPLIT).expect("bundled manifest parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn is_excluded(&self, id: &str) -> bool {
        self.excluded.iter().any(|e| e == id)
    }

    /// Train ids minus exclusions.
    pub fn train_ids(&self) -> Vec<&str> {
        self.train
            .iter()
            .filter(|id| !self.is_excluded(id))
            .map(String::as_str)
            .collect()
    }

    pub fn test_ids(&self) -> Vec<&str> {
        self.test
            .iter()
            .filter(|id| !self.is_excluded(id))
            .map(String::as_str)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_symbols_and_sorts() {
        let text = "sample_index,symbol\n300,V\n100,L\n200,+\n400,A\n";
        let beats = parse_annotations(text).unwrap();
        assert_eq!(
            beats,
            vec![
                (100, AamiClass::N),
                (200, AamiClass::Q),
                (300, AamiClass::V),
                (400, AamiClass::S)
            ]
        );
    }

    #[test]
    fn written_annotations_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.ann");
        let beats = vec![
            (5, AamiClass::N),
            (90, AamiClass::S),
            (200, AamiClass::F),
            (260, AamiClass::V),
        ];
        write_annotations(&path, &beats).unwrap();
        assert_eq!(load_annotations(&path).unwrap(), beats);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(parse_annotations("index,sym\n").is_err());
        assert!(parse_annotations("sample_index,symbol\nx,N\n").is_err());
        assert!(parse_annotations("sample_index,symbol\n12\n").is_err());
    }

    #[test]
    fn bundled_split() {
        let m = SplitManifest::default_mitbih();
        assert_eq!(m.train_ids().len(), 22);
        assert_eq!(m.test_ids().len(), 44);
        for id in ["102", "104", "107", "217"] {
            assert!(m.is_excluded(id));
        }
        assert!(!m.is_excluded("100"));
    }
}
