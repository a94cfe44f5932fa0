//! Candidate supermartingale density `σZ = E(−∫λ′ I_{[σ,T]} dM)` and Monte
//! Carlo tests of its martingale and supermartingale-density behaviour.
//!
//! For continuous integrands the Doléans exponential is
//! `exp(−Σ λ′ΔM − ½ Σ λ′vλ ΔF)`. Once the running trade-off from σ passes
//! `k_kill` the density is set to zero for the rest of the path, which is how
//! an exploding trade-off shows up at grid scale.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::array::PathArray;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{dot, quad_form};
use crate::report::fmt_float;
use crate::sim::PathBundle;
use crate::stats::{mean, mean_stderr, normal_quantile};
use crate::structure::LambdaField;
use crate::wealth::{StoppingTimeField, WealthPath, NONNEGATIVE_SLACK};

/// `exp(−700)` is the edge of double precision.
pub const DEFAULT_K_KILL: f64 = 700.0;
pub const MIN_PATHS: usize = 1000;

#[derive(Clone, Debug)]
pub struct DensityProcess {
    pub z: PathArray,
    /// `−Σ λ′ΔM − ½ Σ λ′vλΔF` from σ.
    pub log_accumulator: PathArray,
    pub sigma: StoppingTimeField,
    /// First index at which the density was killed, or `N`.
    pub rho_inf: StoppingTimeField,
    pub grid: TimeGrid,
    pub k_kill: f64,
}

impl DensityProcess {
    pub fn terminal(&self) -> Vec<f64> {
        self.z.column(self.z.len() - 1)
    }
}

pub fn doleans_exponential(bundle: &PathBundle, field: &LambdaField, sigma: &StoppingTimeField) -> Result<DensityProcess> {
    doleans_exponential_with(bundle, field, sigma, None, DEFAULT_K_KILL)
}

/// Density of `λ I_{[σ, until]}`: frozen after `until` when given.
pub fn doleans_exponential_with(
    bundle: &PathBundle,
    field: &LambdaField,
    sigma: &StoppingTimeField,
    until: Option<&StoppingTimeField>,
    k_kill: f64,
) -> Result<DensityProcess> {
    if !field.satisfied() {
        return Err(Error::StructureViolated { fraction: field.violation_fraction() });
    }
    if sigma.n_paths() != bundle.n_paths() || until.map_or(false, |u| u.n_paths() != bundle.n_paths()) {
        return Err(Error::DimensionMismatch("stopping time and bundle path counts differ".into()));
    }
    Ok(build_density(bundle, field, sigma, until, k_kill))
}

pub(crate) fn build_density(
    bundle: &PathBundle,
    field: &LambdaField,
    sigma: &StoppingTimeField,
    until: Option<&StoppingTimeField>,
    k_kill: f64,
) -> DensityProcess {
    let (n_paths, n) = (bundle.n_paths(), bundle.steps());
    let mut z = PathArray::filled(n_paths, n + 1, 1, 1.0);
    let mut log_acc = PathArray::zeros(n_paths, n + 1, 1);
    let mut rho = vec![n; n_paths];

    (z.as_mut_slice().par_chunks_mut(n + 1), log_acc.as_mut_slice().par_chunks_mut(n + 1), rho.par_iter_mut())
        .into_par_iter()
        .enumerate()
        .for_each(|(p, (z, log_acc, rho))| {
            let start = sigma.index[p];
            let stop = until.map_or(n, |u| u.index[p].clamp(start, n));
            let (mut log, mut k, mut alive) = (0.0f64, 0.0f64, true);
            for i in start..n {
                if i < stop {
                    let lam = field.lambda.get(p, i);
                    let q = quad_form(bundle.cov.get(p, i), lam) * bundle.df[i];
                    log += -dot(lam, bundle.dm.get(p, i)) - 0.5 * q;
                    k += q;
                }
                log_acc[i + 1] = log;
                if alive {
                    let value = log.exp();
                    if k > k_kill || value == 0.0 {
                        alive = false;
                        *rho = i + 1;
                    } else {
                        z[i + 1] = value;
                    }
                }
                if !alive {
                    z[i + 1] = 0.0;
                }
            }
        });

    DensityProcess {
        z,
        log_accumulator: log_acc,
        sigma: sigma.clone(),
        rho_inf: StoppingTimeField { index: rho },
        grid: bundle.grid.clone(),
        k_kill,
    }
}

/// `θ = inf{t : Z_t = 0}`, or `N` on paths where Z stays positive.
pub fn first_zero_time(dens: &DensityProcess) -> StoppingTimeField {
    let last = dens.z.len() - 1;
    let index = (0..dens.z.n_paths())
        .map(|p| (0..=last).find(|&i| dens.z.value(p, i) == 0.0).unwrap_or(last))
        .collect();
    StoppingTimeField { index }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MartingaleVerdict {
    MartingaleConsistent,
    StrictSupermartingale,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MartingaleClassification {
    pub verdict: MartingaleVerdict,
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_paths: usize,
    pub level: f64,
}

pub fn martingale_classification(dens: &DensityProcess, level: f64) -> Result<MartingaleClassification> {
    classify_terminal_values(&dens.terminal(), level)
}

/// One-sided test of `E[Z_T] ≥ 1` from terminal samples; the reported interval
/// is two-sided at `level`.
pub fn classify_terminal_values(values: &[f64], level: f64) -> Result<MartingaleClassification> {
    if values.len() < MIN_PATHS {
        return Err(Error::TooFewPaths { required: MIN_PATHS, got: values.len() });
    }
    let (m, se) = mean_stderr(values);
    let half = normal_quantile(0.5 + level / 2.0) * se;
    let rejects = if se > 0.0 { (m - 1.0) / se < -normal_quantile(level) } else { m < 1.0 - 1e-12 };
    Ok(MartingaleClassification {
        verdict: if rejects { MartingaleVerdict::StrictSupermartingale } else { MartingaleVerdict::MartingaleConsistent },
        mean: m,
        std_error: se,
        ci_low: m - half,
        ci_high: m + half,
        n_paths: values.len(),
        level,
    })
}

/// Samples of `Z_t X_t` for one wealth process: `values[j][p]` at `times[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductSamples {
    pub wealth_id: String,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairTest {
    pub s: f64,
    pub t: f64,
    pub wealth_id: String,
    /// Estimate of `E[Z_t X_t] − E[Z_s X_s]`.
    pub gap: f64,
    pub std_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupermartingaleTestReport {
    pub pairs: Vec<PairTest>,
    pub level: f64,
    /// Bonferroni-adjusted one-sided critical value.
    pub critical_value: f64,
    pub verdict: bool,
}

impl SupermartingaleTestReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "s,t,wealth_id,gap,stderr,pass")?;
        for p in &self.pairs {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_float(p.s),
                fmt_float(p.t),
                p.wealth_id,
                fmt_float(p.gap),
                fmt_float(p.std_error),
                p.pass
            )?;
        }
        Ok(())
    }
}

/// Tests `E[Z_t X_t] ≤ E[Z_s X_s]` for every wealth and every `s < t`, with a
/// Bonferroni correction over all comparisons.
pub fn test_products(samples: &[ProductSamples], level: f64) -> SupermartingaleTestReport {
    let comparisons: usize = samples.iter().map(|s| s.times.len() * s.times.len().saturating_sub(1) / 2).sum();
    let alpha = (1.0 - level) / comparisons.max(1) as f64;
    let critical_value = normal_quantile(1.0 - alpha);
    let mut pairs = Vec::with_capacity(comparisons);
    for sample in samples {
        for a in 0..sample.times.len() {
            for b in (a + 1)..sample.times.len() {
                let diffs: Vec<f64> = sample.values[b].iter().zip(&sample.values[a]).map(|(t, s)| t - s).collect();
                let (gap, se) = mean_stderr(&diffs);
                let se = if se.is_nan() { 0.0 } else { se };
                let slack = 1e-12 * (1.0 + mean(&sample.values[a]).abs());
                pairs.push(PairTest {
                    s: sample.times[a],
                    t: sample.times[b],
                    wealth_id: sample.wealth_id.clone(),
                    gap,
                    std_error: se,
                    pass: !(gap > critical_value * se + slack),
                });
            }
        }
    }
    let verdict = pairs.iter().all(|p| p.pass);
    SupermartingaleTestReport { pairs, level, critical_value, verdict }
}

/// Necessary-condition test of the supermartingale-density property over a
/// battery of nonnegative wealth processes (the constant 1 is always added).
pub fn supermartingale_density_test(
    dens: &DensityProcess,
    wealths: &[(&str, &WealthPath)],
    times: &[f64],
    level: f64,
) -> Result<SupermartingaleTestReport> {
    let mut indices: Vec<usize> = times.iter().map(|&t| dens.grid.nearest_index(t)).collect();
    indices.sort_unstable();
    indices.dedup();
    let grid_times: Vec<f64> = indices.iter().map(|&i| dens.grid.time(i)).collect();
    let n_paths = dens.z.n_paths();

    let one = WealthPath::new(PathArray::filled(n_paths, dens.z.len(), 1, 1.0));
    let mut battery: Vec<(&str, &WealthPath)> = wealths.to_vec();
    battery.push(("one", &one));

    let mut samples = Vec::with_capacity(battery.len());
    for (id, x) in battery {
        if x.values.n_paths() != n_paths || x.values.len() != dens.z.len() {
            return Err(Error::DimensionMismatch(format!("wealth `{id}` does not match the density")));
        }
        let min = x.values.min();
        if min < -NONNEGATIVE_SLACK {
            return Err(Error::NegativeWealth { id: id.to_string(), min });
        }
        let values = indices
            .iter()
            .map(|&i| (0..n_paths).map(|p| dens.z.value(p, i) * x.values.value(p, i)).collect())
            .collect();
        samples.push(ProductSamples { wealth_id: id.to_string(), times: grid_times.clone(), values });
    }
    Ok(test_products(&samples, level))
}
