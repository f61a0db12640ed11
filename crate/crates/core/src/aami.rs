//! AAMI heartbeat classes and the MIT-BIH symbol grouping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AamiClass {
    /// Normal and bundle-branch-block beats.
    N,
    /// Supraventricular ectopic.
    S,
    /// Ventricular ectopic.
    V,
    /// Fusion of ventricular and normal.
    F,
    /// Paced or unclassifiable; kept out of training and scoring.
    Q,
}

impl AamiClass {
    /// The four classes the fog head predicts, in output order.
    pub const CLASSIFIED: [AamiClass; 4] = [AamiClass::N, AamiClass::S, AamiClass::V, AamiClass::F];

    /// Maps an MIT-BIH beat annotation symbol. Returns `None` for symbols
    /// outside the standard table (callers warn and fall back to `Q`).
    pub fn from_symbol(symbol: &str) -> Option<AamiClass> {
        let class = match symbol {
            "N" | "L" | "R" | "e" | "j" => AamiClass::N,
            "A" | "a" | "J" | "S" => AamiClass::S,
            "V" | "E" => AamiClass::V,
            "F" => AamiClass::F,
            "/" | "f" | "Q" => AamiClass::Q,
            _ => return None,
        };
        Some(class)
    }

    /// Index into the fog head's 4-way output; `None` for `Q`.
    pub fn head2_index(self) -> Option<usize> {
        match self {
            AamiClass::N => Some(0),
            AamiClass::S => Some(1),
            AamiClass::V => Some(2),
            AamiClass::F => Some(3),
            AamiClass::Q => None,
        }
    }

    pub fn from_head2_index(index: usize) -> Option<AamiClass> {
        Self::CLASSIFIED.get(index).copied()
    }

    pub fn is_abnormal(self) -> bool {
        self != AamiClass::N
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AamiClass::N => "N",
            AamiClass::S => "S",
            AamiClass::V => "V",
            AamiClass::F => "F",
            AamiClass::Q => "Q",
        }
    }
}

impl fmt::Display for AamiClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AamiClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "N" => Ok(AamiClass::N),
            "S" => Ok(AamiClass::S),
            "V" => Ok(AamiClass::V),
            "F" => Ok(AamiClass::F),
            "Q" => Ok(AamiClass::Q),
            other => Err(Error::param(format!("unknown AAMI class {other:?}"))),
        }
    }
}
