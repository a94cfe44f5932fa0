//! Run configuration documents (JSON).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{make_grid, GridScheme, TimeGrid};
use crate::model::{builtin_model, ModelParams, ModelSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    #[default]
    Uniform,
    Geometric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N", default)]
    pub steps: usize,
    #[serde(default)]
    pub scheme: SchemeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

impl GridConfig {
    pub fn uniform(horizon: f64, steps: usize) -> Self {
        Self { horizon, steps, scheme: SchemeName::Uniform, eps: None, ratio: None }
    }

    pub fn build(&self) -> Result<TimeGrid> {
        let scheme = match self.scheme {
            SchemeName::Uniform => GridScheme::Uniform,
            SchemeName::Geometric => GridScheme::Geometric {
                first_step: self.eps.ok_or_else(|| Error::Config("geometric grid needs `eps`".into()))?,
                ratio: self.ratio.ok_or_else(|| Error::Config("geometric grid needs `ratio`".into()))?,
            },
        };
        make_grid(self.horizon, self.steps, scheme)
    }
}

/// `{model, params, grid: {T, N, scheme, eps?, ratio?}, n_paths, seed}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: String,
    #[serde(default)]
    pub params: ModelParams,
    pub grid: GridConfig,
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn model(&self) -> Result<ModelSpec> {
        builtin_model(&self.model, &self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_document() {
        let cfg = RunConfig::from_json(
            r#"{"model": "black_scholes", "params": {"mu": 0.05, "sigma": 0.2},
                "grid": {"T": 1.0, "N": 4, "scheme": "uniform"}, "n_paths": 10, "seed": 3}"#,
        )
        .unwrap();
        assert_eq!(cfg.grid.build().unwrap().points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(cfg.model().unwrap().name(), "black_scholes");
    }

    #[test]
    fn geometric_document() {
        let cfg = RunConfig::from_json(
            r#"{"model": "immediate_arb", "grid": {"T": 1.0, "scheme": "geometric", "eps": 0.001, "ratio": 10.0},
                "n_paths": 2}"#,
        )
        .unwrap();
        assert_eq!(cfg.grid.build().unwrap().steps(), 4);
        let missing = GridConfig { eps: None, ..cfg.grid.clone() };
        assert!(matches!(missing.build(), Err(Error::Config(_))));
    }
}
