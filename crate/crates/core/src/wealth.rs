//! Discrete stochastic integrals `X = x + H·S`, σ-shifted processes, and the
//! stopping times built from them.

use std::io::Read;

use serde::Serialize;

use crate::array::PathArray;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::sim::PathBundle;

/// Slack under which a wealth value still counts as nonnegative.
pub const NONNEGATIVE_SLACK: f64 = 1e-12;
pub const DEFAULT_DEVIATION_TOL: f64 = 1e-10;

/// A stopping time on the grid, stored as one grid index per path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoppingTimeField {
    pub index: Vec<usize>,
}

impl StoppingTimeField {
    pub fn constant(n_paths: usize, index: usize) -> Self {
        Self { index: vec![index; n_paths] }
    }

    /// The deterministic time `t`, rounded up to the grid.
    pub fn at_time(grid: &TimeGrid, n_paths: usize, t: f64) -> Self {
        Self::constant(n_paths, grid.index_at_or_after(t))
    }

    /// `inf{t_i : component ≥ level} ∧ T` on each path of a price array.
    pub fn first_hit_above(prices: &PathArray, component: usize, level: f64) -> Self {
        let last = prices.len() - 1;
        let index = (0..prices.n_paths())
            .map(|p| (0..=last).find(|&i| prices.get(p, i)[component] >= level).unwrap_or(last))
            .collect();
        Self { index }
    }

    pub fn n_paths(&self) -> usize {
        self.index.len()
    }

    pub fn times(&self, grid: &TimeGrid) -> Vec<f64> {
        self.index.iter().map(|&i| grid.time(i)).collect()
    }
}

/// A portfolio `(x, H)`; `holdings` has one `d`-vector per path and cell, and
/// the value for cell `i` may only use information up to `t_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Strategy {
    pub x0: f64,
    pub holdings: PathArray,
}

impl Strategy {
    pub fn constant(x0: f64, n_paths: usize, n_cells: usize, h: &[f64]) -> Self {
        let mut holdings = PathArray::zeros(n_paths, n_cells, h.len());
        for p in 0..n_paths {
            for i in 0..n_cells {
                holdings.get_mut(p, i).copy_from_slice(h);
            }
        }
        Self { x0, holdings }
    }

    /// Holdings `e_component` on cells before `until` and zero afterwards:
    /// the single asset stopped at `until`.
    pub fn hold_until(x0: f64, n_cells: usize, dim: usize, component: usize, until: &StoppingTimeField) -> Self {
        let mut holdings = PathArray::zeros(until.n_paths(), n_cells, dim);
        for (p, &stop) in until.index.iter().enumerate() {
            for i in 0..stop.min(n_cells) {
                holdings.get_mut(p, i)[component] = 1.0;
            }
        }
        Self { x0, holdings }
    }

    /// `a·H₁ + b·H₂` with initial wealth `a·x₁ + b·x₂`.
    pub fn combine(a: f64, first: &Strategy, b: f64, second: &Strategy) -> Result<Strategy> {
        if first.holdings.n_paths() != second.holdings.n_paths()
            || first.holdings.len() != second.holdings.len()
            || first.holdings.dim() != second.holdings.dim()
        {
            return Err(Error::DimensionMismatch("strategies of different shapes".into()));
        }
        let mut holdings = first.holdings.clone();
        for (h, &k) in holdings.as_mut_slice().iter_mut().zip(second.holdings.as_slice()) {
            *h = a * *h + b * k;
        }
        Ok(Strategy { x0: a * first.x0 + b * second.x0, holdings })
    }

    /// Reads rows `path_id,cell,h_1,…,h_d` (optional header line). Cells that
    /// are not listed hold nothing.
    pub fn from_csv<R: Read>(mut reader: R, x0: f64, n_paths: usize, n_cells: usize, dim: usize) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let mut holdings = PathArray::zeros(n_paths, n_cells, dim);
        let bad = |line: usize, why: &str| Error::Config(format!("strategy csv line {line}: {why}"));
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (ln == 0 && line.starts_with("path_id")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 2 {
                return Err(bad(ln + 1, &format!("expected {} fields", dim + 2)));
            }
            let p: usize = fields[0].parse().map_err(|_| bad(ln + 1, "bad path_id"))?;
            let i: usize = fields[1].parse().map_err(|_| bad(ln + 1, "bad cell"))?;
            if p >= n_paths || i >= n_cells {
                return Err(bad(ln + 1, "path or cell out of range"));
            }
            for (k, f) in fields[2..].iter().enumerate() {
                let h: f64 = f.parse().map_err(|_| bad(ln + 1, "bad holding"))?;
                if !h.is_finite() {
                    return Err(bad(ln + 1, "holding must be finite"));
                }
                holdings.get_mut(p, i)[k] = h;
            }
        }
        Ok(Self { x0, holdings })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum AdmissibilityClass {
    Nonnegative,
    Admissible { bound: f64 },
    Unconstrained,
}

/// Scalar wealth values, `N + 1` per path.
#[derive(Clone, Debug, PartialEq)]
pub struct WealthPath {
    pub values: PathArray,
    pub class: AdmissibilityClass,
}

impl WealthPath {
    pub fn new(values: PathArray) -> Self {
        let class = class_of(values.min(), 0.0);
        Self { values, class }
    }
}

fn class_of(min: f64, bound: f64) -> AdmissibilityClass {
    if min >= -NONNEGATIVE_SLACK {
        AdmissibilityClass::Nonnegative
    } else if min >= -bound {
        AdmissibilityClass::Admissible { bound }
    } else {
        AdmissibilityClass::Unconstrained
    }
}

pub fn integrate(strategy: &Strategy, bundle: &PathBundle) -> Result<WealthPath> {
    integrate_against(strategy, &bundle.s)
}

/// `X_{t_i} = x₀ + Σ_{j<i} H_j′(S_{j+1} − S_j)` against any price array.
pub fn integrate_against(strategy: &Strategy, prices: &PathArray) -> Result<WealthPath> {
    let h = &strategy.holdings;
    if h.n_paths() != prices.n_paths() || h.dim() != prices.dim() || h.len() + 1 != prices.len() {
        return Err(Error::DimensionMismatch(format!(
            "strategy {}x{}x{} against prices {}x{}x{}",
            h.n_paths(),
            h.len(),
            h.dim(),
            prices.n_paths(),
            prices.len(),
            prices.dim()
        )));
    }
    let n = h.len();
    let mut values = PathArray::zeros(prices.n_paths(), n + 1, 1);
    for p in 0..prices.n_paths() {
        let mut x = strategy.x0;
        values.set(p, 0, x);
        for i in 0..n {
            let (hi, s0, s1) = (h.get(p, i), prices.get(p, i), prices.get(p, i + 1));
            let gain: f64 = hi.iter().zip(s0.iter().zip(s1)).map(|(h, (a, b))| h * (b - a)).sum();
            x += gain;
            values.set(p, i + 1, x);
        }
    }
    Ok(WealthPath::new(values))
}

/// A process restarted at σ: `values[k]` is the original value at index
/// `min(σ + k, N)`; `offsets[k]` the elapsed time since σ.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftedProcess {
    pub values: PathArray,
    pub offsets: PathArray,
}

/// Index-level shift: entry `k` of path `p` becomes entry `min(σ_p + k, last)`.
pub fn shift_values(process: &PathArray, sigma: &StoppingTimeField) -> PathArray {
    let last = process.len() - 1;
    let mut out = PathArray::zeros(process.n_paths(), process.len(), process.dim());
    for (p, &s) in sigma.index.iter().enumerate() {
        for k in 0..=last {
            out.get_mut(p, k).copy_from_slice(process.get(p, (s + k).min(last)));
        }
    }
    out
}

/// `σX_t = X_{(σ+t)∧T}` on the grid's offset sub-sequence. Offsets past the
/// horizon are spread over `(T − t_σ, T]` so the frozen tail keeps a strictly
/// increasing time axis (on uniform grids this reproduces the grid itself).
pub fn shift(process: &PathArray, grid: &TimeGrid, sigma: &StoppingTimeField) -> ShiftedProcess {
    let values = shift_values(process, sigma);
    let n = grid.steps();
    let horizon = grid.horizon();
    let mut offsets = PathArray::zeros(process.n_paths(), n + 1, 1);
    for (p, &s) in sigma.index.iter().enumerate() {
        let ts = grid.time(s);
        for k in 0..=n {
            let off = if s + k <= n {
                grid.time(s + k) - ts
            } else {
                (horizon - ts) + (k - (n - s)) as f64 / s as f64 * ts
            };
            offsets.set(p, k, off);
        }
    }
    ShiftedProcess { values, offsets }
}

/// Holdings restarted at σ: cell `k` gets the original cell `σ + k`, nothing
/// past the horizon.
pub fn shift_strategy(strategy: &Strategy, sigma: &StoppingTimeField) -> Strategy {
    let h = &strategy.holdings;
    let n = h.len();
    let mut holdings = PathArray::zeros(h.n_paths(), n, h.dim());
    for (p, &s) in sigma.index.iter().enumerate() {
        for k in 0..n.saturating_sub(s) {
            holdings.get_mut(p, k).copy_from_slice(h.get(p, s + k));
        }
    }
    Strategy { x0: strategy.x0, holdings }
}

/// `inf{t_i > 0 : |X_{t_i}| > tol}`, or the last index when X never deviates.
pub fn first_deviation(x: &WealthPath, tol: f64) -> StoppingTimeField {
    let last = x.values.len() - 1;
    let index = (0..x.values.n_paths())
        .map(|p| (1..=last).find(|&i| x.values.value(p, i).abs() > tol).unwrap_or(last))
        .collect();
    StoppingTimeField { index }
}

pub fn classify_admissibility(x: &WealthPath, bound: f64) -> AdmissibilityClass {
    class_of(x.values.min(), bound)
}

/// Per path, whether `X₀ = 0` and `X_T ≥ 0`: the premise of the NA property.
pub fn na_premise(x: &WealthPath) -> Vec<bool> {
    let last = x.values.len() - 1;
    (0..x.values.n_paths())
        .map(|p| {
            x.values.value(p, 0).abs() <= NONNEGATIVE_SLACK && x.values.value(p, last) >= -NONNEGATIVE_SLACK
        })
        .collect()
}
