//! Discretization of `[0, T]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack under which a geometric point is snapped onto the horizon.
const SNAP: f64 = 1e-9;
const MAX_POINTS: usize = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridScheme {
    Uniform,
    /// Points `0, ε, εr, εr², …` terminated at the horizon.
    Geometric { first_step: f64, ratio: f64 },
    /// Arbitrary strictly increasing points (composite grids).
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    points: Vec<f64>,
    scheme: GridScheme,
}

/// Builds a grid on `[0, horizon]`. `steps` is ignored by the geometric scheme,
/// whose size follows from `first_step` and `ratio`.
pub fn make_grid(horizon: f64, steps: usize, scheme: GridScheme) -> Result<TimeGrid> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::NonPositiveHorizon(horizon));
    }
    let points = match scheme {
        GridScheme::Uniform => {
            if steps == 0 {
                return Err(Error::BadScheme("uniform grid needs at least one step".into()));
            }
            let mut pts: Vec<f64> = (0..steps).map(|i| horizon * i as f64 / steps as f64).collect();
            pts.push(horizon);
            pts
        }
        GridScheme::Geometric { first_step, ratio } => {
            let mut pts = vec![0.0];
            pts.extend(geometric_tail(0.0, horizon, first_step, ratio)?);
            pts
        }
        GridScheme::Custom => {
            return Err(Error::BadScheme("custom grids are built with TimeGrid::from_points".into()))
        }
    };
    Ok(TimeGrid { horizon, points, scheme })
}

/// Points `origin + ε r^j` for `j = 0, 1, …`, snapped and terminated at `end`.
fn geometric_tail(origin: f64, end: f64, first_step: f64, ratio: f64) -> Result<Vec<f64>> {
    let span = end - origin;
    if !(first_step > 0.0) || !(first_step < span) {
        return Err(Error::BadScheme(format!(
            "first step {first_step} must lie in (0, {span})"
        )));
    }
    if !(ratio > 1.0) || !ratio.is_finite() {
        return Err(Error::BadScheme(format!("ratio {ratio} must exceed 1")));
    }
    let mut pts = Vec::new();
    let mut j = 0i32;
    loop {
        let offset = first_step * ratio.powi(j);
        if offset >= span * (1.0 - SNAP) {
            break;
        }
        pts.push(origin + offset);
        j += 1;
        if pts.len() > MAX_POINTS {
            return Err(Error::BadScheme("geometric grid too large".into()));
        }
    }
    pts.push(end);
    Ok(pts)
}

impl TimeGrid {
    /// Validates arbitrary points: strictly increasing, starting at 0.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::BadScheme("a grid needs at least two points".into()));
        }
        if points[0] != 0.0 {
            return Err(Error::BadScheme("first grid point must be 0".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) || points.iter().any(|t| !t.is_finite()) {
            return Err(Error::BadScheme("grid points must be finite and strictly increasing".into()));
        }
        let horizon = *points.last().unwrap();
        Ok(Self { horizon, points, scheme: GridScheme::Custom })
    }

    /// Uniform grid with `prefix_steps` cells on `[0, origin]` followed by a
    /// geometric refinement `origin + ε r^j` up to `end`. With `origin = 0`
    /// this is the plain geometric scheme.
    pub fn geometric_from(
        origin: f64,
        end: f64,
        first_step: f64,
        ratio: f64,
        prefix_steps: usize,
    ) -> Result<Self> {
        if !(end > 0.0) {
            return Err(Error::NonPositiveHorizon(end));
        }
        if origin == 0.0 {
            return make_grid(end, 1, GridScheme::Geometric { first_step, ratio });
        }
        if !(origin > 0.0 && origin < end) || prefix_steps == 0 {
            return Err(Error::BadScheme(format!("origin {origin} outside (0, {end})")));
        }
        let mut pts: Vec<f64> =
            (0..prefix_steps).map(|i| origin * i as f64 / prefix_steps as f64).collect();
        pts.push(origin);
        pts.extend(geometric_tail(origin, end, first_step, ratio)?);
        Self::from_points(pts)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn scheme(&self) -> GridScheme {
        self.scheme
    }

    /// Number of cells `N`; there are `N + 1` points.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        self.points[i]
    }

    pub fn increments(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Smallest index whose time is `≥ t` (up to a relative slack), capped at `N`.
    pub fn index_at_or_after(&self, t: f64) -> usize {
        let slack = SNAP * self.horizon;
        self.points.iter().position(|&p| p >= t - slack).unwrap_or(self.steps())
    }

    pub fn nearest_index(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &p) in self.points.iter().enumerate() {
            if (p - t).abs() < (self.points[best] - t).abs() {
                best = i;
            }
        }
        best
    }
}
