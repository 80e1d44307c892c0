use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Activation {
    #[default]
    #[serde(rename = "GELU")]
    Gelu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Init {
    #[default]
    HeUniform,
}

/// Fully connected scalar field `R^d -> R`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub init: Init,
}

impl Architecture {
    pub const DEFAULT_WIDTH: usize = 64;
    pub const DEFAULT_DEPTH: usize = 4;

    pub fn new(input_dim: usize, hidden_widths: Vec<usize>) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_widths,
            activation: Activation::Gelu,
            init: Init::HeUniform,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Four hidden GELU layers of width 64.
    pub fn default_for(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_widths: vec![Self::DEFAULT_WIDTH; Self::DEFAULT_DEPTH],
            activation: Activation::Gelu,
            init: Init::HeUniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArchitecture("input_dim must be positive".into()));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::InvalidArchitecture(
                "at least one hidden layer is required".into(),
            ));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::InvalidArchitecture("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Layer widths including input and the scalar output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_widths.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_widths);
        w.push(1);
        w
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_widths.len() + 1
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn max_width(&self) -> usize {
        self.widths().into_iter().max().unwrap_or(1)
    }
}
