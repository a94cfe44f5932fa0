//! Cellwise structure condition `g = vλ` and the bounded-variation arbitrage
//! that exists when it fails.

use rayon::prelude::*;
use serde::Serialize;

use crate::array::PathArray;
use crate::error::{Error, Result};
use crate::linalg::{mat_vec, norm, pseudo_solve};
use crate::sim::PathBundle;
use crate::wealth::{integrate, Strategy, WealthPath};

pub const DEFAULT_TOL: f64 = 1e-6;
/// Fraction of violating cells tolerated before the condition is declared
/// failed.
pub const DEFAULT_ACCEPTANCE_FRACTION: f64 = 1e-3;

/// Minimal-norm solution `λ = v⁺g` and residual `r = g − vλ`.
pub fn solve_lambda(v: &[f64], g: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let lambda = pseudo_solve(v, g, tol)?;
    let mut vl = vec![0.0; g.len()];
    mat_vec(v, &lambda, &mut vl);
    let residual = g.iter().zip(&vl).map(|(a, b)| a - b).collect();
    Ok((lambda, residual))
}

/// Whether a cell's residual counts as a violation: `‖r‖ > tol·(1 + ‖g‖)`.
pub fn is_violation(residual: &[f64], g: &[f64], tol: f64) -> bool {
    norm(residual) > tol * (1.0 + norm(g))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StructureConfig {
    pub tol: f64,
    pub acceptance_fraction: f64,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, acceptance_fraction: DEFAULT_ACCEPTANCE_FRACTION }
    }
}

#[derive(Clone, Debug)]
pub struct LambdaField {
    /// `λ` per path and cell.
    pub lambda: PathArray,
    /// `r = g − vλ` per path and cell.
    pub residual: PathArray,
    /// Violation flag per (path, cell), path-major.
    pub violated: Vec<bool>,
    pub config: StructureConfig,
}

impl LambdaField {
    pub fn is_violated(&self, path: usize, cell: usize) -> bool {
        self.violated[path * self.lambda.len() + cell]
    }

    pub fn violation_fraction(&self) -> f64 {
        if self.violated.is_empty() {
            return 0.0;
        }
        self.violated.iter().filter(|&&v| v).count() as f64 / self.violated.len() as f64
    }

    pub fn satisfied(&self) -> bool {
        self.violation_fraction() <= self.config.acceptance_fraction
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WorstCell {
    pub path: usize,
    pub cell: usize,
    pub time: f64,
    pub residual_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureReport {
    pub violation_fraction: f64,
    pub violations: usize,
    pub cells: usize,
    pub worst_cell: Option<WorstCell>,
    pub satisfied: bool,
    pub tol: f64,
    pub acceptance_fraction: f64,
}

impl StructureReport {
    fn empty(config: StructureConfig) -> Self {
        Self {
            violation_fraction: 0.0,
            violations: 0,
            cells: 0,
            worst_cell: None,
            satisfied: true,
            tol: config.tol,
            acceptance_fraction: config.acceptance_fraction,
        }
    }

    /// Folds in the report of a later slice of paths.
    pub fn merge(&mut self, other: &StructureReport) {
        self.violations += other.violations;
        self.cells += other.cells;
        self.worst_cell = match (self.worst_cell, other.worst_cell) {
            (Some(a), Some(b)) if b.residual_norm > a.residual_norm => Some(b),
            (None, b) => b,
            (a, _) => a,
        };
        self.refresh();
    }

    fn refresh(&mut self) {
        self.violation_fraction =
            if self.cells == 0 { 0.0 } else { self.violations as f64 / self.cells as f64 };
        self.satisfied = self.violation_fraction <= self.acceptance_fraction;
    }
}

pub fn check_structure(bundle: &PathBundle, tol: f64) -> Result<(LambdaField, StructureReport)> {
    check_structure_with(bundle, StructureConfig { tol, ..StructureConfig::default() })
}

pub fn check_structure_with(
    bundle: &PathBundle,
    config: StructureConfig,
) -> Result<(LambdaField, StructureReport)> {
    let (n_paths, n, d) = (bundle.n_paths(), bundle.steps(), bundle.dim);
    let mut lambda = PathArray::zeros(n_paths, n, d);
    let mut residual = PathArray::zeros(n_paths, n, d);
    let mut violated = vec![false; n_paths * n];
    let points = bundle.grid.points();

    let per_path: Vec<Result<(usize, Option<WorstCell>)>> = (
        lambda.as_mut_slice().par_chunks_mut(n * d),
        residual.as_mut_slice().par_chunks_mut(n * d),
        violated.par_chunks_mut(n.max(1)),
    )
        .into_par_iter()
        .enumerate()
        .map(|(p, (lam, res, flags))| {
            let mut count = 0;
            let mut worst: Option<WorstCell> = None;
            for i in 0..n {
                let g = bundle.drift.get(p, i);
                let v = bundle.cov.get(p, i);
                let (l, r) = solve_lambda(v, g, config.tol)?;
                lam[i * d..(i + 1) * d].copy_from_slice(&l);
                res[i * d..(i + 1) * d].copy_from_slice(&r);
                if is_violation(&r, g, config.tol) {
                    flags[i] = true;
                    count += 1;
                    let rn = norm(&r);
                    if worst.map_or(true, |w| rn > w.residual_norm) {
                        worst = Some(WorstCell {
                            path: bundle.first_path + p,
                            cell: i,
                            time: points[i],
                            residual_norm: rn,
                        });
                    }
                }
            }
            Ok((count, worst))
        })
        .collect();

    let mut report = StructureReport::empty(config);
    for item in per_path {
        let (count, worst) = item?;
        report.merge(&StructureReport { violations: count, cells: n, worst_cell: worst, ..StructureReport::empty(config) });
    }
    Ok((LambdaField { lambda, residual, violated, config }, report))
}

/// Predictable holdings `H = r` on violating cells, zero elsewhere.
pub fn arbitrage_strategy(field: &LambdaField) -> Strategy {
    let (n_paths, n, d) = (field.residual.n_paths(), field.residual.len(), field.residual.dim());
    let mut holdings = PathArray::zeros(n_paths, n, d);
    for p in 0..n_paths {
        for i in 0..n {
            if field.is_violated(p, i) {
                holdings.get_mut(p, i).copy_from_slice(field.residual.get(p, i));
            }
        }
    }
    Strategy { x0: 0.0, holdings }
}

/// Builds the nonnegative, nondecreasing wealth `X = r·S` that witnesses a
/// failed structure condition: `r ⊥ range(v)` kills the martingale part and
/// leaves `Σ ‖r‖² ΔF`.
pub fn construct_bv_arbitrage(bundle: &PathBundle, field: &LambdaField) -> Result<(Strategy, WealthPath)> {
    if field.satisfied() {
        return Err(Error::NoViolation);
    }
    let strategy = arbitrage_strategy(field);
    let wealth = integrate(&strategy, bundle)?;
    Ok((strategy, wealth))
}
