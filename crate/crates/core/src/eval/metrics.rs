//! Confusion counts and the four benchmark rates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::aami::AamiClass;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Same counts with the positive class flipped.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }

    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn metrics(&self) -> Metrics {
        metrics(self)
    }
}

/// A rate that is undefined when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Rate {
    Defined(f64),
    Undefined,
}

impl Rate {
    fn ratio(num: u64, den: u64) -> Rate {
        if den == 0 {
            Rate::Undefined
        } else {
            Rate::Defined(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Rate::Defined(v) => Some(v),
            Rate::Undefined => None,
        }
    }
}

impl fmt::Display for Rate {
    /// Percent with two decimals, or `undefined`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Defined(v) => write!(f, "{:.2}", v * 100.0),
            Rate::Undefined => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub se: Rate,
    pub sp: Rate,
    pub ppv: Rate,
    pub acc: Rate,
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    Metrics {
        se: Rate::ratio(c.tp, c.tp + c.fn_),
        sp: Rate::ratio(c.tn, c.tn + c.fp),
        ppv: Rate::ratio(c.tp, c.tp + c.fp),
        acc: Rate::ratio(c.tp + c.tn, c.total()),
    }
}

/// Rows are truth, columns prediction, both in N, S, V, F order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    /// Ignores pairs involving `Q`.
    pub fn record(&mut self, truth: AamiClass, predicted: AamiClass) {
        if let (Some(t), Some(p)) = (truth.head2_index(), predicted.head2_index()) {
            self.counts[t][p] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> Rate {
        let diag = (0..4).map(|i| self.counts[i][i]).sum();
        Rate::ratio(diag, self.total())
    }

    /// Collapses to `class` against the rest.
    pub fn one_vs_rest(&self, class: AamiClass) -> ConfusionCounts {
        let Some(k) = class.head2_index() else {
            return ConfusionCounts::default();
        };
        let mut c = ConfusionCounts::default();
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                match (t == k, p == k) {
                    (true, true) => c.tp += n,
                    (false, false) => c.tn += n,
                    (false, true) => c.fp += n,
                    (true, false) => c.fn_ += n,
                }
            }
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_counts() {
        let c = ConfusionCounts {
            tp: 4970,
            fn_: 30,
            fp: 41,
            tn: 4959,
        };
        let m = metrics(&c);
        assert_eq!(m.acc, Rate::Defined(9929.0 / 10000.0));
        assert_eq!(m.se, Rate::Defined(4970.0 / 5000.0));
        assert_eq!(format!("{}", m.acc), "99.29");
    }

    #[test]
    fn empty_positive_class_is_undefined() {
        let c = ConfusionCounts {
            tn: 5,
            fp: 1,
            ..Default::default()
        };
        let m = metrics(&c);
        assert_eq!(m.se, Rate::Undefined);
        assert_eq!(m.ppv, Rate::Defined(0.0));
        assert_eq!(m.se.to_string(), "undefined");
        assert!(m.sp.value().is_some());
    }

    #[test]
    fn one_vs_rest_sums_to_total() {
        let mut cm = ConfusionMatrix::default();
        cm.record(AamiClass::N, AamiClass::N);
        cm.record(AamiClass::V, AamiClass::V);
        cm.record(AamiClass::V, AamiClass::N);
        cm.record(AamiClass::S, AamiClass::V);
        cm.record(AamiClass::Q, AamiClass::V);
        let v = cm.one_vs_rest(AamiClass::V);
        assert_eq!(
            v,
            ConfusionCounts {
                tp: 1,
                tn: 1,
                fp: 1,
                fn_: 1
            }
        );
        assert_eq!(v.total(), cm.total());
    }
}
