//! JSON checkpoint of a field network.
//!
//! ```json
//! {"version": 1,
//!  "architecture": {"input_dim": 2, "hidden_widths": [64, 64, 64, 64],
//!                   "activation": "GELU", "init": "HeUniform", "seed": 0},
//!  "params": [ ... ]}
//! ```
//!
//! Parameters are written in layout order with 17 significant digits, which
//! round-trips every `f64` exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{Activation, Architecture, FieldNetwork, Init, ParamVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ArchitectureRecord {
    input_dim: usize,
    hidden_widths: Vec<usize>,
    activation: Activation,
    init: Init,
    seed: u64,
}

#[derive(Serialize)]
struct CheckpointOut<'a> {
    version: u32,
    architecture: &'a ArchitectureRecord,
    params: Vec<Box<RawValue>>,
}

#[derive(Deserialize)]
struct CheckpointIn {
    version: u32,
    architecture: ArchitectureRecord,
    params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch: Architecture,
    pub seed: u64,
    pub params: ParamVector<f64>,
}

/// `{:.16e}` gives 17 significant digits.
pub fn format_f64(v: f64) -> String {
    if v == 0.0 {
        // keeps the sign of negative zero
        return if v.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    format!("{v:.16e}")
}

impl Checkpoint {
    pub fn from_network<S: Scalar>(net: &FieldNetwork<S>, seed: u64) -> Self {
        Self {
            arch: net.arch().clone(),
            seed,
            params: net.params().to_f64(),
        }
    }

    pub fn to_network<S: Scalar>(&self) -> Result<FieldNetwork<S>> {
        FieldNetwork::new(self.arch.clone(), ParamVector::from_f64(&self.params))
    }

    pub fn to_json(&self) -> Result<String> {
        let record = ArchitectureRecord {
            input_dim: self.arch.input_dim,
            hidden_widths: self.arch.hidden_widths.clone(),
            activation: self.arch.activation,
            init: self.arch.init,
            seed: self.seed,
        };
        let mut params = Vec::with_capacity(self.params.len());
        for &v in self.params.iter() {
            if !v.is_finite() {
                return Err(Error::Checkpoint(format!("non-finite parameter {v}")));
            }
            params.push(RawValue::from_string(format_f64(v))?);
        }
        let out = CheckpointOut {
            version: CHECKPOINT_VERSION,
            architecture: &record,
            params,
        };
        Ok(serde_json::to_string(&out)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: CheckpointIn = serde_json::from_str(s)?;
        if raw.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", raw.version)));
        }
        let a = raw.architecture;
        let arch = Architecture {
            input_dim: a.input_dim,
            hidden_widths: a.hidden_widths,
            activation: a.activation,
            init: a.init,
        };
        arch.validate()?;
        if raw.params.len() != arch.param_count() {
            return Err(Error::DimensionMismatch {
                what: "checkpoint params",
                expected: arch.param_count(),
                got: raw.params.len(),
            });
        }
        Ok(Self {
            arch,
            seed: a.seed,
            params: ParamVector(raw.params),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
