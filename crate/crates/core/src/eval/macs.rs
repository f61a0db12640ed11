//! Per-layer compute and memory of the model beside external baselines.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ModelGraph;

/// Figures for another architecture, supplied by the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub name: String,
    pub macs: u64,
    pub params: u64,
}

impl Baseline {
    /// Parses `name:macs:params`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [name, macs, params] = parts[..] else {
            return Err(Error::param(format!(
                "baseline {s:?} is not name:macs:params"
            )));
        };
        let num = |v: &str| {
            v.trim()
                .parse::<u64>()
                .map_err(|_| Error::param(format!("baseline {s:?}: bad number {v:?}")))
        };
        Ok(Baseline {
            name: name.trim().to_string(),
            macs: num(macs)?,
            params: num(params)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub name: String,
    pub kind: String,
    pub output: (usize, usize),
    pub params: usize,
    pub macs: u64,
    pub edge: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub baseline: Baseline,
    pub mac_ratio: f64,
    pub param_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacReport {
    pub layers: Vec<LayerRow>,
    pub total_macs: u64,
    pub total_params: usize,
    pub edge_params: usize,
    pub fog_params: usize,
    pub edge_macs: u64,
    pub fog_macs: u64,
    pub baselines: Vec<BaselineRow>,
}

impl MacReport {
    /// Fraction of parameters stored on the edge.
    pub fn edge_param_share(&self) -> f64 {
        self.edge_params as f64 / self.total_params as f64
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("layer,kind,output,params,macs,side\n");
        for l in &self.layers {
            let _ = writeln!(
                s,
                "{},{},{}x{},{},{},{}",
                l.name,
                l.kind,
                l.output.0,
                l.output.1,
                l.params,
                l.macs,
                if l.edge { "edge" } else { "fog" }
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "total params     {}", self.total_params);
        let _ = writeln!(
            s,
            "edge params      {} ({:.1}%)",
            self.edge_params,
            100.0 * self.edge_param_share()
        );
        let _ = writeln!(s, "fog params       {}", self.fog_params);
        let _ = writeln!(s, "total MACs       {}", self.total_macs);
        let _ = writeln!(s, "edge MACs/beat   {}", self.edge_macs);
        let _ = writeln!(s, "fog MACs/beat    {}", self.fog_macs);
        if !self.baselines.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "baseline,macs,params,mac_ratio,param_ratio");
            for b in &self.baselines {
                let _ = writeln!(
                    s,
                    "{},{},{},{:.2},{:.2}",
                    b.baseline.name, b.baseline.macs, b.baseline.params, b.mac_ratio, b.param_ratio
                );
            }
        }
        s
    }
}

/// Ratios are baseline over this model, so values above 1 favour the model.
pub fn mac_memory_report<T: crate::nn::Real>(
    model: &ModelGraph<T>,
    baselines: &[Baseline],
) -> MacReport {
    let layers = model
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| LayerRow {
            name: l.spec.name.clone(),
            kind: l.spec.kind.as_str().to_string(),
            output: l.spec.output_shape(),
            params: l.param_count(),
            macs: l.spec.macs(),
            edge: i < model.cut_index,
        })
        .collect();
    let total_macs = model.count_macs();
    let total_params = model.count_params();
    MacReport {
        layers,
        total_macs,
        total_params,
        edge_params: model.edge_param_count(),
        fog_params: model.fog_param_count(),
        edge_macs: model.edge_macs(),
        fog_macs: model.fog_macs(),
        baselines: baselines
            .iter()
            .map(|b| BaselineRow {
                baseline: b.clone(),
                mac_ratio: b.macs as f64 / total_macs as f64,
                param_ratio: b.params as f64 / total_params as f64,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_baseline() {
        let b = Baseline::parse("cnn:700000:170000").unwrap();
        assert_eq!(b.macs, 700_000);
        assert!(Baseline::parse("cnn:7").is_err());
        assert!(Baseline::parse("cnn:x:1").is_err());
    }
}
