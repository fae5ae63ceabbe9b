use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discretization of [0, T]: the grid dates t_0 = 0 < t_1 < ... < t_N at which
/// the data law is pinned, plus a count of Euler substeps per interval.
///
/// Sub-grid points subdivide each interval uniformly:
/// t_{i,k} = t_i + (k / substeps) * (t_{i+1} - t_i), k = 0..=substeps,
/// with t_{i,0} = t_i and t_{i,substeps} = t_{i+1} reproduced exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dates: Vec<f64>,
    substeps: usize,
}

impl TimeGrid {
    pub fn new(dates: Vec<f64>, substeps: usize) -> Result<Self> {
        if dates.len() < 2 {
            return Err(Error::Config(format!(
                "time grid needs at least two dates, got {}",
                dates.len()
            )));
        }
        if dates[0] != 0.0 {
            return Err(Error::Config(format!(
                "time grid must start at 0, got t_0 = {}",
                dates[0]
            )));
        }
        if substeps == 0 {
            return Err(Error::Config("substeps must be >= 1".into()));
        }
        for w in dates.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::Config(format!(
                    "grid dates must be strictly increasing and finite, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(TimeGrid { dates, substeps })
    }

    /// Uniform grid with `n_intervals` intervals of length `dt`.
    pub fn uniform(n_intervals: usize, dt: f64, substeps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let dates = (0..=n_intervals).map(|i| i as f64 * dt).collect();
        TimeGrid::new(dates, substeps)
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    /// Number of intervals N (dates are t_0..t_N).
    pub fn n_intervals(&self) -> usize {
        self.dates.len() - 1
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn with_substeps(&self, substeps: usize) -> Result<Self> {
        TimeGrid::new(self.dates.clone(), substeps)
    }

    pub fn horizon(&self) -> f64 {
        *self.dates.last().unwrap()
    }

    /// Length of interval i: t_{i+1} - t_i.
    pub fn interval_len(&self, i: usize) -> f64 {
        self.dates[i + 1] - self.dates[i]
    }

    /// Sub-grid point t_{i,k}. Endpoints are exact grid dates, not recomputed.
    pub fn sub_point(&self, i: usize, k: usize) -> f64 {
        debug_assert!(i < self.n_intervals() && k <= self.substeps);
        if k == 0 {
            self.dates[i]
        } else if k == self.substeps {
            self.dates[i + 1]
        } else {
            self.dates[i] + (k as f64 / self.substeps as f64) * self.interval_len(i)
        }
    }

    /// Mean interval length; equals dt exactly on uniform grids.
    pub fn mean_dt(&self) -> f64 {
        self.horizon() / self.n_intervals() as f64
    }
}
