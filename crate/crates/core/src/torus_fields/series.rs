//! Uniformly sampled time series of fields.

use serde::{Deserialize, Serialize};

use super::Field;
use crate::error::{Error, Result};

/// Uniform time grid t_m = t0 + m dt, m = 0..count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub count: usize,
}

impl TimeGrid {
    /// Smallest uniform grid on [0, t_final] with spacing at most `max_dt`.
    pub fn covering(t_final: f64, max_dt: f64) -> Self {
        let intervals = (t_final / max_dt).ceil().max(1.0) as usize;
        TimeGrid {
            t0: 0.0,
            dt: t_final / intervals as f64,
            count: intervals + 1,
        }
    }

    pub fn time(&self, m: usize) -> f64 {
        self.t0 + m as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.count - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.count).map(|m| self.time(m)).collect()
    }
}

/// Snapshots at consecutive samples `start..start + len` of a parent grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesField {
    pub grid: TimeGrid,
    pub start: usize,
    pub snapshots: Vec<Field>,
}

impl TimeSeriesField {
    pub fn new(grid: TimeGrid, start: usize, snapshots: Vec<Field>) -> Result<Self> {
        if snapshots.is_empty() || start + snapshots.len() > grid.count {
            return Err(Error::Numerical("time series does not fit its grid".into()));
        }
        Ok(TimeSeriesField {
            grid,
            start,
            snapshots,
        })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.grid.time(self.start)
    }

    pub fn t1(&self) -> f64 {
        self.grid.time(self.start + self.snapshots.len() - 1)
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt
    }

    /// Time of local snapshot j.
    pub fn time(&self, j: usize) -> f64 {
        self.grid.time(self.start + j)
    }

    /// Snapshot at global sample index m, if stored.
    pub fn at_index(&self, m: usize) -> Option<&Field> {
        m.checked_sub(self.start).and_then(|j| self.snapshots.get(j))
    }

    /// Four-point Lagrange interpolation, exact at samples.
    pub fn interpolate(&self, t: f64) -> Result<Field> {
        let (t0, t1) = (self.t0(), self.t1());
        let tol = 1e-12 * self.grid.dt.max(1.0);
        if t < t0 - tol || t > t1 + tol {
            return Err(Error::TimeOutOfRange { t, t0, t1 });
        }
        let len = self.snapshots.len();
        let s = ((t - t0) / self.grid.dt).clamp(0.0, (len - 1) as f64);
        let j = s.round();
        if (s - j).abs() < 1e-12 {
            return Ok(self.snapshots[j as usize].clone());
        }
        if len == 1 {
            return Ok(self.snapshots[0].clone());
        }
        let npts = len.min(4);
        let base = (s.floor() as isize - 1).clamp(0, (len - npts) as isize) as usize;
        let mut out = self.snapshots[base].scaled(0.0);
        for a in 0..npts {
            let mut w = 1.0;
            for b in 0..npts {
                if a != b {
                    w *= (s - (base + b) as f64) / (a as f64 - b as f64);
                }
            }
            out.axpy(w, &self.snapshots[base + a]);
        }
        Ok(out)
    }

    /// Centered second-order time derivative at each sample, one-sided at the ends.
    pub fn time_derivative(&self) -> Result<Vec<Field>> {
        let len = self.snapshots.len();
        if len < 3 {
            return Err(Error::Numerical("time derivative needs three samples".into()));
        }
        let h = self.grid.dt;
        let s = &self.snapshots;
        let mut out = Vec::with_capacity(len);
        for j in 0..len {
            let mut d = s[0].scaled(0.0);
            if j == 0 {
                d.axpy(-1.5 / h, &s[0]);
                d.axpy(2.0 / h, &s[1]);
                d.axpy(-0.5 / h, &s[2]);
            } else if j == len - 1 {
                d.axpy(1.5 / h, &s[j]);
                d.axpy(-2.0 / h, &s[j - 1]);
                d.axpy(0.5 / h, &s[j - 2]);
            } else {
                d.axpy(0.5 / h, &s[j + 1]);
                d.axpy(-0.5 / h, &s[j - 1]);
            }
            out.push(d);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus_fields::{Grid, Rank};

    fn series(f: impl Fn(f64) -> f64) -> TimeSeriesField {
        let grid = Grid::new(8).unwrap();
        let tg = TimeGrid::covering(1.0, 0.1);
        let snaps = tg
            .times()
            .iter()
            .map(|&t| Field::scalar_fn(grid, |x| f(t) * x[0].sin()))
            .collect();
        TimeSeriesField::new(tg, 0, snaps).unwrap()
    }

    #[test]
    fn cubic_interpolation_is_exact_for_cubics() {
        let p = |t: f64| 1.0 + t - 2.0 * t * t + 0.5 * t * t * t;
        let s = series(p);
        let grid = s.snapshots[0].grid;
        let i = grid.spectral_index([1, 0, 0]).unwrap();
        for &t in &[0.03, 0.47, 0.95, 1.0] {
            let f = s.interpolate(t).unwrap();
            // coefficient of sin(x1) at k = +1 is -i/2
            assert!((f.comps[0][i].im + 0.5 * p(t)).abs() < 1e-13);
        }
        assert!(s.interpolate(1.2).is_err());
    }

    #[test]
    fn derivative_is_exact_for_quadratics() {
        let s = series(|t| 3.0 * t * t - t);
        let d = s.time_derivative().unwrap();
        let i = s.snapshots[0].grid.spectral_index([1, 0, 0]).unwrap();
        for (j, f) in d.iter().enumerate() {
            let t = s.time(j);
            assert!((f.comps[0][i].im + 0.5 * (6.0 * t - 1.0)).abs() < 1e-11);
        }
        assert_eq!(d[0].rank, Rank::Scalar);
    }
}
