//! Seeded Euler–Maruyama simulation of `S = S₀ + M + A`.
//!
//! Each cell `[t_i, t_{i+1}]` uses coefficients evaluated at the left
//! endpoint (the right endpoint for the first cell of models singular at 0):
//!
//! ```text
//! dM_i = root(v_i ΔF_i) ξ_i      dA_i = g_i ΔF_i      S_{i+1} = S_i + dM_i + dA_i
//! ```
//!
//! Path `k` draws its Gaussians from ChaCha8 stream `k` under the run seed, so
//! a path is reproduced bit for bit whether it is simulated alone, in a batch,
//! or on any number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::array::PathArray;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::psd_sqrt;
use crate::model::ModelSpec;

/// Simulated paths with their canonical decomposition and per-cell densities.
#[derive(Clone, Debug)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub dim: usize,
    /// Global index of the first path (bundles may cover a slice of a run).
    pub first_path: usize,
    pub seed: u64,
    pub s0: Vec<f64>,
    /// Prices, `N + 1` entries per path.
    pub s: PathArray,
    pub m: PathArray,
    pub a: PathArray,
    /// Martingale increments, `N` per path.
    pub dm: PathArray,
    /// Finite-variation increments `g ΔF` (plus any reflection push).
    pub da: PathArray,
    /// Quadratic-variation increments `v ΔF`, `d×d` per cell.
    pub dqv: PathArray,
    /// Drift density `g` per cell.
    pub drift: PathArray,
    /// Covariance density `v` per cell, `d×d`.
    pub cov: PathArray,
    /// Clock increments `ΔF_i`, shared by all paths.
    pub df: Vec<f64>,
}

impl PathBundle {
    pub fn n_paths(&self) -> usize {
        self.s.n_paths()
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }
}

pub fn simulate(model: &ModelSpec, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathBundle> {
    simulate_range(model, grid, 0, n_paths, seed)
}

/// Simulates the global paths `first_path .. first_path + n_paths` of the run
/// keyed by `seed`.
pub fn simulate_range(
    model: &ModelSpec,
    grid: &TimeGrid,
    first_path: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    let d = model.dim();
    if d == 0 {
        return Err(Error::DimensionMismatch("model has no assets".into()));
    }
    let n = grid.steps();
    let df = model.clock_increments(grid.points())?;

    let mut s = PathArray::zeros(n_paths, n + 1, d);
    let mut m = PathArray::zeros(n_paths, n + 1, d);
    let mut a = PathArray::zeros(n_paths, n + 1, d);
    let mut dm = PathArray::zeros(n_paths, n, d);
    let mut da = PathArray::zeros(n_paths, n, d);
    let mut dqv = PathArray::zeros(n_paths, n, d * d);
    let mut drift = PathArray::zeros(n_paths, n, d);
    let mut cov = PathArray::zeros(n_paths, n, d * d);

    let (row, row_sq) = ((n + 1) * d, n * d);
    (
        s.as_mut_slice().par_chunks_mut(row),
        m.as_mut_slice().par_chunks_mut(row),
        a.as_mut_slice().par_chunks_mut(row),
        dm.as_mut_slice().par_chunks_mut(row_sq),
        da.as_mut_slice().par_chunks_mut(row_sq),
        dqv.as_mut_slice().par_chunks_mut(row_sq * d),
        drift.as_mut_slice().par_chunks_mut(row_sq),
        cov.as_mut_slice().par_chunks_mut(row_sq * d),
    )
        .into_par_iter()
        .enumerate()
        .try_for_each(|(local, (s, m, a, dm, da, dqv, g, v))| {
            let out = PathSlices { s, m, a, dm, da, dqv, g, v };
            simulate_path(model, grid, &df, first_path + local, seed, out)
        })?;

    Ok(PathBundle {
        grid: grid.clone(),
        dim: d,
        first_path,
        seed,
        s0: model.s0().to_vec(),
        s,
        m,
        a,
        dm,
        da,
        dqv,
        drift,
        cov,
        df,
    })
}

struct PathSlices<'a> {
    s: &'a mut [f64],
    m: &'a mut [f64],
    a: &'a mut [f64],
    dm: &'a mut [f64],
    da: &'a mut [f64],
    dqv: &'a mut [f64],
    g: &'a mut [f64],
    v: &'a mut [f64],
}

/// Gaussian stream of one path.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn simulate_path(
    model: &ModelSpec,
    grid: &TimeGrid,
    df: &[f64],
    path: usize,
    seed: u64,
    out: PathSlices<'_>,
) -> Result<()> {
    let d = model.dim();
    let dd = d * d;
    let points = grid.points();
    let mut rng = path_rng(seed, path);
    let mut xi = vec![0.0; d];
    let mut root = vec![0.0; dd];
    let mut scaled = vec![0.0; dd];

    out.s[..d].copy_from_slice(model.s0());
    for i in 0..df.len() {
        let t = model.eval_time(points, i);
        let (prev, next) = out.s.split_at_mut((i + 1) * d);
        let s_i = &prev[i * d..];
        let g = &mut out.g[i * d..(i + 1) * d];
        let v = &mut out.v[i * dd..(i + 1) * dd];
        model.drift_into(t, s_i, g);
        model.cov_into(t, s_i, v);
        if g.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::CoefficientEvaluation { path, cell: i, t });
        }

        for (q, &vk) in scaled.iter_mut().zip(v.iter()) {
            *q = vk * df[i];
        }
        out.dqv[i * dd..(i + 1) * dd].copy_from_slice(&scaled);
        psd_sqrt(&scaled, d, &mut root)
            .map_err(|min_eigenvalue| Error::NonPsdCovariance { path, cell: i, min_eigenvalue })?;
        for x in xi.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }

        let dm = &mut out.dm[i * d..(i + 1) * d];
        let da = &mut out.da[i * d..(i + 1) * d];
        let s_next = &mut next[..d];
        for k in 0..d {
            dm[k] = if d == 1 { root[0] * xi[0] } else { (0..d).map(|j| root[k * d + j] * xi[j]).sum() };
            da[k] = g[k] * df[i];
            let mut raw = s_i[k] + (dm[k] + da[k]);
            if let Some(floor) = model.floor() {
                if raw < floor {
                    // reflect, booking the push as finite variation
                    da[k] += 2.0 * (floor - raw);
                    raw = s_i[k] + (dm[k] + da[k]);
                }
            }
            s_next[k] = raw;
            out.m[(i + 1) * d + k] = out.m[i * d + k] + dm[k];
            out.a[(i + 1) * d + k] = out.a[i * d + k] + da[k];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridScheme};
    use crate::model::{builtin_model, ModelParams};
    use std::sync::Arc;

    fn uniform(t: f64, n: usize) -> TimeGrid {
        make_grid(t, n, GridScheme::Uniform).unwrap()
    }

    #[test]
    fn no_randomness_no_drift() {
        let model = ModelSpec::new("flat", vec![2.5], Arc::new(|_, _, g| g[0] = 0.0), Arc::new(|_, _, v| v[0] = 0.0));
        let b = simulate(&model, &uniform(1.0, 16), 5, 1).unwrap();
        assert!(b.s.as_slice().iter().all(|&x| x == 2.5));
    }

    #[test]
    fn pure_drift_deterministic() {
        let model = builtin_model("pure_drift", &ModelParams::new()).unwrap();
        let b = simulate(&model, &uniform(1.0, 64), 3, 9).unwrap();
        for p in 0..3 {
            assert_eq!(b.s.value(p, 64), 2.0);
            assert_eq!(b.a.value(p, 64), 1.0);
            assert!(b.m.path(p).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn deterministic_black_scholes_recursion() {
        let p = ModelParams::new().with("mu", 0.1).with("sigma", 0.0);
        let model = builtin_model("black_scholes", &p).unwrap();
        let b = simulate(&model, &uniform(1.0, 1000), 2, 3).unwrap();
        let st = b.s.value(0, 1000);
        assert!((1.105..=1.1052).contains(&st), "{st}");
        let oracle = (1.0f64 + 0.1 / 1000.0).powi(1000);
        assert!((st - oracle).abs() < 1e-12);
    }

    #[test]
    fn decomposition_identity() {
        let p = ModelParams::new().with("mu", 0.05).with("sigma", 0.3);
        let model = builtin_model("black_scholes", &p).unwrap();
        let b = simulate(&model, &uniform(1.0, 50), 20, 5).unwrap();
        for p in 0..20 {
            assert_eq!(b.m.value(p, 0), 0.0);
            assert_eq!(b.a.value(p, 0), 0.0);
            let (mut sum_dm, mut sum_da) = (0.0, 0.0);
            for i in 0..50 {
                let ds = b.s.value(p, i + 1) - b.s.value(p, i);
                assert!((ds - (b.dm.value(p, i) + b.da.value(p, i))).abs() < 1e-14);
                sum_dm += b.dm.value(p, i);
                sum_da += b.da.value(p, i);
            }
            assert!((sum_dm - b.m.value(p, 50)).abs() < 1e-13);
            assert!((sum_da - b.a.value(p, 50)).abs() < 1e-13);
            let recomposed = 1.0 + b.m.value(p, 50) + b.a.value(p, 50);
            assert!((recomposed - b.s.value(p, 50)).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_split_is_concatenation() {
        let model = builtin_model("bessel3", &ModelParams::new()).unwrap();
        let grid = uniform(1.0, 32);
        let all = simulate(&model, &grid, 10, 77).unwrap();
        let head = simulate_range(&model, &grid, 0, 4, 77).unwrap();
        let tail = simulate_range(&model, &grid, 4, 6, 77).unwrap();
        for p in 0..4 {
            assert_eq!(all.s.path(p), head.s.path(p));
        }
        for p in 0..6 {
            assert_eq!(all.s.path(p + 4), tail.s.path(p));
            assert_eq!(all.dm.path(p + 4), tail.dm.path(p));
        }
    }

    #[test]
    fn bessel_stays_above_floor() {
        let model = builtin_model("bessel3", &ModelParams::new().with("s0", 0.05)).unwrap();
        let b = simulate(&model, &uniform(1.0, 64), 200, 4).unwrap();
        let floor = model.floor().unwrap();
        assert!(b.s.min() >= floor);
        for p in 0..200 {
            for i in 0..64 {
                let ds = b.s.value(p, i + 1) - b.s.value(p, i);
                assert!((ds - (b.dm.value(p, i) + b.da.value(p, i))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_model_first_cell_uses_right_endpoint() {
        let model = builtin_model("immediate_arb", &ModelParams::new()).unwrap();
        let b = simulate(&model, &uniform(1.0, 4), 1, 0).unwrap();
        assert_eq!(b.drift.value(0, 0), 2.0);
        assert_eq!(b.drift.value(0, 1), 2.0);
        assert!((b.drift.value(0, 2) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn non_finite_coefficients_error() {
        let model = builtin_model("immediate_arb", &ModelParams::new()).unwrap().singular_at_zero(false);
        let err = simulate(&model, &uniform(1.0, 4), 1, 0).unwrap_err();
        assert!(matches!(err, Error::CoefficientEvaluation { cell: 0, .. }));
    }

    #[test]
    fn indefinite_covariance_error() {
        let model = ModelSpec::new(
            "bad",
            vec![1.0, 1.0],
            Arc::new(|_, _, g| g.fill(0.0)),
            Arc::new(|_, _, v| v.copy_from_slice(&[1.0, 2.0, 2.0, 1.0])),
        );
        let err = simulate(&model, &uniform(1.0, 4), 1, 0).unwrap_err();
        assert!(matches!(err, Error::NonPsdCovariance { .. }));
    }

    #[test]
    fn correlated_two_asset_increments() {
        let model = ModelSpec::new(
            "corr",
            vec![1.0, 1.0],
            Arc::new(|_, _, g| g.fill(0.0)),
            Arc::new(|_, _, v| v.copy_from_slice(&[1.0, 0.8, 0.8, 1.0])),
        );
        let b = simulate(&model, &uniform(1.0, 1), 20_000, 11).unwrap();
        let (mut c01, mut c00) = (0.0, 0.0);
        for p in 0..20_000 {
            let x = b.dm.get(p, 0);
            c01 += x[0] * x[1];
            c00 += x[0] * x[0];
        }
        assert!((c01 / 20_000.0 - 0.8).abs() < 0.05);
        assert!((c00 / 20_000.0 - 1.0).abs() < 0.05);
    }
}
