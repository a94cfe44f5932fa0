//! Market models given by drift and covariance densities against a clock.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `g(t, s)` written into a `d`-vector.
pub type DriftFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// `v(t, s)` written into a row-major `d×d` matrix.
pub type CovFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// Deterministic clock `F(t)`.
pub type ClockFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub const CATALOG: &[&str] = &["black_scholes", "bessel3", "immediate_arb", "pure_drift", "custom"];

/// Reflection floor of the Bessel(3) model, relative to `s0`.
pub const BESSEL_FLOOR: f64 = 1e-6;

#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    params: BTreeMap<String, f64>,
    s0: Vec<f64>,
    drift: DriftFn,
    cov: CovFn,
    clock: ClockFn,
    /// Coefficients blow up at `t = 0`; the first cell is evaluated at its
    /// right endpoint.
    singular_at_zero: bool,
    /// Componentwise reflection floor applied after each Euler step.
    floor: Option<f64>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("s0", &self.s0)
            .field("singular_at_zero", &self.singular_at_zero)
            .field("floor", &self.floor)
            .finish()
    }
}

impl ModelSpec {
    /// Model with clock `F(t) = t`.
    pub fn new(name: impl Into<String>, s0: Vec<f64>, drift: DriftFn, cov: CovFn) -> Self {
        Self {
            name: name.into(),
            params: BTreeMap::new(),
            s0,
            drift,
            cov,
            clock: Arc::new(|t| t),
            singular_at_zero: false,
            floor: None,
        }
    }

    pub fn with_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    pub fn with_clock(mut self, clock: ClockFn) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = Some(floor);
        self
    }

    pub fn singular_at_zero(mut self, singular: bool) -> Self {
        self.singular_at_zero = singular;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.s0.len()
    }

    pub fn s0(&self) -> &[f64] {
        &self.s0
    }

    pub fn floor(&self) -> Option<f64> {
        self.floor
    }

    pub fn is_singular_at_zero(&self) -> bool {
        self.singular_at_zero
    }

    pub fn drift_into(&self, t: f64, s: &[f64], out: &mut [f64]) {
        (self.drift)(t, s, out)
    }

    pub fn cov_into(&self, t: f64, s: &[f64], out: &mut [f64]) {
        (self.cov)(t, s, out)
    }

    pub fn drift(&self, t: f64, s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.drift_into(t, s, &mut out);
        out
    }

    pub fn cov(&self, t: f64, s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim() * self.dim()];
        self.cov_into(t, s, &mut out);
        out
    }

    pub fn clock(&self, t: f64) -> f64 {
        (self.clock)(t)
    }

    /// Clock increments `ΔF_i` over the cells of `points`. Errors when the
    /// clock is not nondecreasing or does not start at zero.
    pub fn clock_increments(&self, points: &[f64]) -> Result<Vec<f64>> {
        if self.clock(0.0) != 0.0 {
            return Err(Error::Config(format!("clock must satisfy F(0) = 0 in model `{}`", self.name)));
        }
        let values: Vec<f64> = points.iter().map(|&t| self.clock(t)).collect();
        let df: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        if df.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::Config(format!("clock of model `{}` is not nondecreasing", self.name)));
        }
        Ok(df)
    }

    /// Time at which the coefficients of cell `[t_i, t_{i+1}]` are evaluated.
    pub fn eval_time(&self, points: &[f64], i: usize) -> f64 {
        if self.singular_at_zero && points[i] == 0.0 {
            points[i + 1]
        } else {
            points[i]
        }
    }
}

/// Piecewise-constant, state-independent coefficients: on
/// `[breakpoints[k], breakpoints[k+1])` the densities are `drift[k]` and
/// `cov[k]` (the last piece extends to the horizon).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub breakpoints: Vec<f64>,
    pub drift: Vec<Vec<f64>>,
    /// Row-major `d×d` matrices.
    pub cov: Vec<Vec<f64>>,
}

impl CoefficientTable {
    fn validate(&self) -> Result<usize> {
        let pieces = self.breakpoints.len();
        let invalid = |reason: &str| Error::InvalidParam { param: "table".into(), reason: reason.into() };
        if pieces == 0 || self.drift.len() != pieces || self.cov.len() != pieces {
            return Err(invalid("breakpoints, drift and cov must have the same nonzero length"));
        }
        if self.breakpoints[0] != 0.0 || self.breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("breakpoints must start at 0 and increase strictly"));
        }
        let d = self.drift[0].len();
        if d == 0 || self.drift.iter().any(|g| g.len() != d) || self.cov.iter().any(|v| v.len() != d * d) {
            return Err(invalid("inconsistent coefficient dimensions"));
        }
        Ok(d)
    }

    fn piece(&self, t: f64) -> usize {
        self.breakpoints.iter().rposition(|&b| b <= t).unwrap_or(0)
    }
}

/// Parameters of a catalog model: named scalars plus an optional table for
/// `custom`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<CoefficientTable>,
    #[serde(flatten)]
    pub values: BTreeMap<String, f64>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.values.insert(key.to_string(), value);
        self
    }

    pub fn with_table(mut self, table: CoefficientTable) -> Self {
        self.table = Some(table);
        self
    }

    fn required(&self, model: &str, key: &str) -> Result<f64> {
        self.values
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingParam { model: model.into(), param: key.into() })
    }

    fn or(&self, key: &str, default: f64) -> f64 {
        self.values.get(key).copied().unwrap_or(default)
    }
}

/// Instantiates one of the catalog models (see [`CATALOG`]).
pub fn builtin_model(name: &str, params: &ModelParams) -> Result<ModelSpec> {
    let s0 = params.or("s0", 1.0);
    if !s0.is_finite() {
        return Err(Error::InvalidParam { param: "s0".into(), reason: "must be finite".into() });
    }
    let mut recorded = BTreeMap::new();
    recorded.insert("s0".to_string(), s0);
    let model = match name {
        "black_scholes" => {
            let mu = params.required(name, "mu")?;
            let sigma = params.required(name, "sigma")?;
            recorded.insert("mu".into(), mu);
            recorded.insert("sigma".into(), sigma);
            let var = sigma * sigma;
            ModelSpec::new(
                name,
                vec![s0],
                Arc::new(move |_, s, g| g[0] = mu * s[0]),
                Arc::new(move |_, s, v| v[0] = var * s[0] * s[0]),
            )
        }
        "bessel3" => {
            if !(s0 > 0.0) {
                return Err(Error::InvalidParam { param: "s0".into(), reason: "bessel3 needs s0 > 0".into() });
            }
            ModelSpec::new(
                name,
                vec![s0],
                Arc::new(|_, s, g| g[0] = 1.0 / s[0]),
                Arc::new(|_, _, v| v[0] = 1.0),
            )
            .with_floor(BESSEL_FLOOR * s0)
        }
        "immediate_arb" => ModelSpec::new(
            name,
            vec![s0],
            Arc::new(|t, _, g| g[0] = 1.0 / t.sqrt()),
            Arc::new(|_, _, v| v[0] = 1.0),
        )
        .singular_at_zero(true),
        "pure_drift" => ModelSpec::new(
            name,
            vec![s0],
            Arc::new(|_, _, g| g[0] = 1.0),
            Arc::new(|_, _, v| v[0] = 0.0),
        ),
        "custom" => {
            let table = params
                .table
                .clone()
                .ok_or_else(|| Error::MissingParam { model: name.into(), param: "table".into() })?;
            let d = table.validate()?;
            let start: Vec<f64> = (0..d).map(|k| params.or(&format!("s0_{k}"), s0)).collect();
            let table = Arc::new(table);
            let tg = Arc::clone(&table);
            ModelSpec::new(
                name,
                start,
                Arc::new(move |t, _, g| g.copy_from_slice(&tg.drift[tg.piece(t)])),
                Arc::new(move |t, _, v| v.copy_from_slice(&table.cov[table.piece(t)])),
            )
        }
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    Ok(model.with_params(recorded))
}
