//! Mean-variance trade-off `K_s^t = ∫_s^t λ′vλ dF`, its level-crossing times,
//! and a refinement test for `K` jumping to infinity.

use std::io::Write;

use serde::Serialize;

use crate::array::PathArray;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::quad_form;
use crate::model::ModelSpec;
use crate::report::fmt_float;
use crate::sim::{simulate, PathBundle};
use crate::stats::mean;
use crate::structure::{check_structure_with, LambdaField, StructureConfig};
use crate::wealth::StoppingTimeField;

/// Per-cell increments `λ_i′ v_i λ_i ΔF_i`.
pub fn mvt_increments(bundle: &PathBundle, field: &LambdaField) -> PathArray {
    let (n_paths, n) = (bundle.n_paths(), bundle.steps());
    let mut inc = PathArray::zeros(n_paths, n, 1);
    for p in 0..n_paths {
        for i in 0..n {
            let q = quad_form(bundle.cov.get(p, i), field.lambda.get(p, i));
            inc.set(p, i, q * bundle.df[i]);
        }
    }
    inc
}

#[derive(Clone, Debug)]
pub struct MvtProcess {
    /// `K_σ^{t_i}` per path, zero up to the origin.
    pub k: PathArray,
    pub increments: PathArray,
    pub origin: StoppingTimeField,
}

impl MvtProcess {
    /// `K_{t_from}^{t_to}` on one path, summed cell by cell.
    pub fn window(&self, path: usize, from: usize, to: usize) -> f64 {
        let mut k = 0.0;
        for i in from..to {
            k += self.increments.value(path, i);
        }
        k
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.k.column(self.k.len() - 1)
    }
}

pub fn compute_mvt(bundle: &PathBundle, field: &LambdaField, sigma: &StoppingTimeField) -> Result<MvtProcess> {
    if !field.satisfied() {
        return Err(Error::StructureViolated { fraction: field.violation_fraction() });
    }
    Ok(accumulate(mvt_increments(bundle, field), sigma))
}

pub(crate) fn accumulate(increments: PathArray, sigma: &StoppingTimeField) -> MvtProcess {
    let (n_paths, n) = (increments.n_paths(), increments.len());
    let mut k = PathArray::zeros(n_paths, n + 1, 1);
    for (p, &s) in sigma.index.iter().enumerate() {
        let mut acc = 0.0;
        for i in s..n {
            acc += increments.value(p, i);
            k.set(p, i + 1, acc);
        }
    }
    MvtProcess { k, increments, origin: sigma.clone() }
}

/// Slack on level crossings so accumulation rounding cannot delay τ by a cell.
const LEVEL_SLACK: f64 = 1e-12;

/// `τ(c) = inf{t > σ : K_σ^t ≥ c} ∧ T`, strictly after σ whenever σ < T.
pub fn tau_level(mvt: &MvtProcess, c: f64) -> StoppingTimeField {
    let last = mvt.k.len() - 1;
    let threshold = c - LEVEL_SLACK * c.max(1.0);
    let index = mvt
        .origin
        .index
        .iter()
        .enumerate()
        .map(|(p, &s)| ((s + 1)..=last).find(|&i| mvt.k.value(p, i) >= threshold).unwrap_or(last))
        .collect();
    StoppingTimeField { index }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExplosionConfig {
    /// Window length `h` of the probed increment `K_σ^{σ+h}`.
    pub window: f64,
    /// First geometric step at level 0, as a fraction of the window.
    pub first_step_fraction: f64,
    pub ratio: f64,
    pub slope_min: f64,
    pub k_max: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Uniform cells used to reach σ before the geometric refinement.
    pub prefix_steps: usize,
    pub structure: StructureConfig,
}

impl ExplosionConfig {
    /// Defaults for a horizon `T`: window `T/4`, level-0 step `2⁻²⁴` of it,
    /// ratio `2^{1/8}` (eight cells per halving of ε).
    pub fn for_horizon(horizon: f64) -> Self {
        Self {
            window: horizon / 4.0,
            first_step_fraction: 2f64.powi(-24),
            ratio: 2f64.powf(0.125),
            slope_min: 0.3,
            k_max: 20.0,
            n_paths: 1000,
            seed: 0,
            prefix_steps: 64,
            structure: StructureConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExplosionEvidence {
    pub level: usize,
    pub eps: f64,
    pub k_estimate: f64,
    pub slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExplosionVerdict {
    pub sigma_time: f64,
    pub window: f64,
    pub diverges: bool,
    pub alpha_estimate: Option<f64>,
    pub evidence: Vec<ExplosionEvidence>,
}

impl ExplosionVerdict {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "level,eps,K_estimate,slope")?;
        for e in &self.evidence {
            let slope = e.slope.map(fmt_float).unwrap_or_default();
            writeln!(out, "{},{},{},{}", e.level, fmt_float(e.eps), fmt_float(e.k_estimate), slope)?;
        }
        Ok(())
    }

    pub fn finest_estimate(&self) -> f64 {
        self.evidence.last().map_or(f64::NAN, |e| e.k_estimate)
    }
}

fn level_seed(seed: u64, level: usize) -> u64 {
    seed ^ (level as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Estimates `K_σ^{σ+h}` on geometric grids whose first step halves at every
/// level. Divergence requires growth of at least `slope_min` per level and an
/// estimate above `k_max` at the finest level.
pub fn detect_explosion(
    model: &ModelSpec,
    sigma_time: f64,
    levels: usize,
    config: &ExplosionConfig,
) -> Result<ExplosionVerdict> {
    if levels < 3 {
        return Err(Error::Config(format!("explosion test needs at least 3 levels, got {levels}")));
    }
    let h = config.window;
    let mut evidence: Vec<ExplosionEvidence> = Vec::with_capacity(levels);
    for level in 0..levels {
        let eps = h * config.first_step_fraction / 2f64.powi(level as i32);
        let grid = TimeGrid::geometric_from(sigma_time, sigma_time + h, eps, config.ratio, config.prefix_steps)?;
        let origin = grid.index_at_or_after(sigma_time);
        let bundle = simulate(model, &grid, config.n_paths, level_seed(config.seed, level))?;
        let (field, _) = check_structure_with(&bundle, config.structure)?;
        let n = grid.steps();
        let window_cells = config.n_paths * (n - origin);
        let violations = (0..config.n_paths)
            .map(|p| (origin..n).filter(|&i| field.is_violated(p, i)).count())
            .sum::<usize>();
        let fraction = violations as f64 / window_cells.max(1) as f64;
        if fraction > config.structure.acceptance_fraction {
            return Err(Error::StructureViolated { fraction });
        }
        let mvt = accumulate(mvt_increments(&bundle, &field), &StoppingTimeField::constant(config.n_paths, origin));
        let k_estimate = mean(&mvt.terminal());
        let slope = evidence.last().map(|prev| k_estimate - prev.k_estimate);
        evidence.push(ExplosionEvidence { level, eps, k_estimate, slope });
    }
    let growing = evidence.iter().filter_map(|e| e.slope).all(|s| s >= config.slope_min);
    let diverges = growing && evidence.last().map_or(false, |e| e.k_estimate > config.k_max);
    Ok(ExplosionVerdict {
        sigma_time,
        window: h,
        diverges,
        alpha_estimate: diverges.then_some(sigma_time),
        evidence,
    })
}
