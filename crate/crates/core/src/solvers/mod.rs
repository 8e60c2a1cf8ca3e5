//! Time integrators: forced Euler, transport-diffusion, back-flow and the oscillatory
//! diffusion harness.

mod backflow;
mod euler;
mod transport;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus_fields::{Field, ProductMode, TimeGrid};

pub use backflow::solve_backflow;
pub use euler::{euler_rhs, euler_pressure, solve_forced_euler, EulerSolution};
pub use transport::{
    oscillatory_diffusion, solve_transport_diffusion, solve_transport_diffusion_with, OscillatoryResult,
    TransportSolution,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// dt <= cfl * h / max(1, sup|v|)
    pub cfl: f64,
    /// 3/2-rule products when true, native-grid products otherwise
    pub dealias: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            dealias: true,
        }
    }
}

impl SolverConfig {
    pub fn mode(&self) -> ProductMode {
        if self.dealias {
            ProductMode::Dealiased
        } else {
            ProductMode::Native
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveLog {
    pub steps: usize,
    pub min_dt: f64,
    pub max_sup_v: f64,
    /// largest |div| coefficient over stored snapshots (zero when not tracked)
    pub max_divergence: f64,
}

impl SolveLog {
    fn record(&mut self, dt: f64, sup_v: f64) {
        self.steps += 1;
        self.min_dt = if self.steps == 1 { dt.abs() } else { self.min_dt.min(dt.abs()) };
        self.max_sup_v = self.max_sup_v.max(sup_v);
    }
}

/// Output sample indices [start, end] of `grid`, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn new(grid: &TimeGrid, start: usize, end: usize) -> Result<Self> {
        if start > end || end >= grid.count {
            return Err(Error::Numerical(format!(
                "window [{start}, {end}] outside grid of {} samples",
                grid.count
            )));
        }
        Ok(Window { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub(crate) fn rk4<F>(y: &Field, t: f64, dt: f64, rhs: &F) -> Result<Field>
where
    F: Fn(&Field, f64) -> Result<Field>,
{
    let k1 = rhs(y, t)?;
    let mut y2 = y.clone();
    y2.axpy(0.5 * dt, &k1);
    let k2 = rhs(&y2, t + 0.5 * dt)?;
    let mut y3 = y.clone();
    y3.axpy(0.5 * dt, &k2);
    let k3 = rhs(&y3, t + 0.5 * dt)?;
    let mut y4 = y.clone();
    y4.axpy(dt, &k3);
    let k4 = rhs(&y4, t + dt)?;
    let mut out = y.clone();
    out.axpy(dt / 6.0, &k1);
    out.axpy(dt / 3.0, &k2);
    out.axpy(dt / 3.0, &k3);
    out.axpy(dt / 6.0, &k4);
    Ok(out)
}

/// March a state from t0 to every output time, forward for later and backward for earlier ones.
///
/// `step(state, t, dt_max_signed)` advances by at most |dt_max_signed| and returns the step used.
pub(crate) fn march<S, F>(state0: S, t0: f64, times: &[f64], mut step: F) -> Result<Vec<S>>
where
    S: Clone,
    F: FnMut(&S, f64, f64) -> Result<(S, f64)>,
{
    let tol = 1e-12 * times.iter().fold(1.0f64, |a, t| a.max(t.abs()));
    let mut out: Vec<Option<S>> = vec![None; times.len()];
    for dir in [1.0f64, -1.0] {
        let mut state = state0.clone();
        let mut t = t0;
        let order: Vec<usize> = if dir > 0.0 {
            (0..times.len()).filter(|&i| times[i] >= t0 - tol).collect()
        } else {
            (0..times.len()).rev().filter(|&i| times[i] < t0 - tol).collect()
        };
        for i in order {
            let target = times[i];
            while (target - t) * dir > tol {
                let remaining = target - t;
                let (next, used) = step(&state, t, remaining)?;
                state = next;
                t = if (remaining - used).abs() <= tol { target } else { t + used };
            }
            out[i] = Some(state.clone());
        }
    }
    Ok(out.into_iter().map(|s| s.expect("every time visited")).collect())
}

/// Signed step no longer than `limit` toward `remaining`.
pub(crate) fn clamp_step(remaining: f64, limit: f64) -> f64 {
    if remaining.abs() <= limit {
        remaining
    } else {
        limit * remaining.signum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mikado::MikadoFamily;
    use crate::torus_fields::{Grid, Rank, TimeSeriesField};
    use nalgebra::Matrix3;
    use std::f64::consts::PI;

    fn constant_series(f: &Field, tg: TimeGrid) -> TimeSeriesField {
        TimeSeriesField::new(tg, 0, vec![f.clone(); tg.count]).unwrap()
    }

    #[test]
    fn shear_with_gradient_forcing_is_stationary() {
        let grid = Grid::new(16).unwrap();
        let v0 = Field::from_fn(grid, Rank::Vector, |x| vec![(3.0 * x[1]).sin(), 0.0, 0.0]);
        let theta = Field::scalar_fn(grid, |x| x[2].sin() + 0.5 * (2.0 * x[2]).sin());
        let tg = TimeGrid::covering(0.2, 0.05);
        let forcing = constant_series(&theta, tg);
        let w = Window::new(&tg, 0, tg.count - 1).unwrap();
        let sol = solve_forced_euler(&v0, 0.1, &forcing, w, &SolverConfig::default()).unwrap();
        for v in &sol.v.snapshots {
            assert!(v.sub(&v0).max_coeff() < 1e-13);
        }
        // grad p = theta e3
        let gp = sol.p.snapshots[0].gradient().unwrap();
        assert!(gp.sub(&theta.as_vector_component(2).unwrap()).max_coeff() < 1e-13);
        assert!(sol.log.max_divergence < 1e-13);
    }

    #[test]
    fn mikado_flow_is_stationary_on_native_grid() {
        let grid = Grid::new(32).unwrap();
        let fam = MikadoFamily::build(0.5, 16, 0).unwrap();
        let r = [1.1, 0.95, 1.0, 0.05, 0.0, -0.03];
        let w0 = fam.evaluate_w(&r, grid).unwrap();
        let tg = TimeGrid::covering(0.05, 0.025);
        let zero = Field::zeros(grid, Rank::Scalar);
        let forcing = constant_series(&zero, tg);
        let cfg = SolverConfig {
            cfl: 0.5,
            dealias: false,
        };
        let win = Window::new(&tg, 0, tg.count - 1).unwrap();
        let sol = solve_forced_euler(&w0, 0.0, &forcing, win, &cfg).unwrap();
        let last = sol.v.snapshots.last().unwrap();
        assert!(last.sub(&w0).max_coeff() / w0.max_coeff() < 1e-10);
    }

    #[test]
    fn unforced_euler_conserves_energy() {
        let grid = Grid::new(16).unwrap();
        let v0 = Field::from_fn(grid, Rank::Vector, |x| {
            vec![x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin(), 0.3 * (x[0] + x[1]).sin()]
        });
        let v0 = crate::calculus_ops::leray_project(&v0).unwrap();
        let tg = TimeGrid::covering(0.2, 0.05);
        let zero = Field::zeros(grid, Rank::Scalar);
        let forcing = constant_series(&zero, tg);
        let win = Window::new(&tg, 0, tg.count - 1).unwrap();
        let sol = solve_forced_euler(&v0, 0.0, &forcing, win, &SolverConfig::default()).unwrap();
        let e0 = v0.l2_norm().powi(2);
        for v in &sol.v.snapshots {
            assert!((v.l2_norm().powi(2) - e0).abs() < 1e-6 * e0);
            assert!(v.divergence().unwrap().max_coeff() < 1e-12);
        }
    }

    #[test]
    fn heat_solution_and_dissipation() {
        let grid = Grid::new(16).unwrap();
        let th0 = Field::scalar_fn(grid, |x| x[2].sin());
        let tg = TimeGrid::covering(0.3, 0.05);
        let zero = Field::zeros(grid, Rank::Vector);
        let v = constant_series(&zero, tg);
        let win = Window::new(&tg, 0, tg.count - 1).unwrap();
        let sol = solve_transport_diffusion(&v, &th0, win, &SolverConfig::default()).unwrap();
        for (j, th) in sol.theta.snapshots.iter().enumerate() {
            let t = tg.time(j);
            assert!(th.sub(&th0.scaled((-t).exp())).max_coeff() < 1e-12);
            let expect = 4.0 * PI.powi(3) * (1.0 - (-2.0 * t).exp()) / 2.0;
            assert!((sol.dissipation[j] - expect).abs() < 1e-7 * expect.max(1.0));
        }
    }

    #[test]
    fn transport_energy_identity_and_max_principle() {
        let grid = Grid::new(16).unwrap();
        let th0 = Field::scalar_fn(grid, |x| x[2].sin() + 0.3 * (x[0] + x[1]).cos());
        let vf = Field::from_fn(grid, Rank::Vector, |x| {
            vec![0.5 * x[2].sin(), 0.3 * x[0].cos(), 0.4 * x[1].sin()]
        });
        let tg = TimeGrid::covering(0.2, 0.02);
        let v = constant_series(&vf, tg);
        let win = Window::new(&tg, 0, tg.count - 1).unwrap();
        let sol = solve_transport_diffusion(&v, &th0, win, &SolverConfig::default()).unwrap();
        let m0 = th0.l2_norm().powi(2);
        let sup0 = th0.sup_norm();
        for (j, th) in sol.theta.snapshots.iter().enumerate() {
            let m = th.l2_norm().powi(2) + 2.0 * sol.dissipation[j];
            assert!((m - m0).abs() < 1e-5 * m0, "{m} {m0}");
            assert!(th.sup_norm() <= sup0 + 1e-8);
        }
    }

    #[test]
    fn backflow_of_constant_flow() {
        let grid = Grid::new(8).unwrap();
        let u = Field::from_fn(grid, Rank::Vector, |_| vec![0.7, 0.0, -0.2]);
        let tg = TimeGrid::covering(0.2, 0.05);
        let v = constant_series(&u, tg);
        let win = Window::new(&tg, 0, tg.count - 1).unwrap();
        let (psi, _) = solve_backflow(&v, 0.1, win, &SolverConfig::default()).unwrap();
        for (j, p) in psi.snapshots.iter().enumerate() {
            let s = tg.time(j) - 0.1;
            let mean = p.mean();
            assert!((mean[0] + 0.7 * s).abs() < 1e-13);
            assert!((mean[2] - 0.2 * s).abs() < 1e-13);
        }
    }

    #[test]
    fn backflow_preserves_volume() {
        let grid = Grid::new(16).unwrap();
        let vf = Field::from_fn(grid, Rank::Vector, |x| {
            vec![0.6 * x[1].sin(), 0.5 * x[2].cos(), 0.4 * x[0].sin()]
        });
        let tg = TimeGrid::covering(0.2, 0.05);
        let v = constant_series(&vf, tg);
        let win = Window::new(&tg, 0, tg.count - 1).unwrap();
        let (psi, _) = solve_backflow(&v, 0.0, win, &SolverConfig::default()).unwrap();
        let p = psi.snapshots.last().unwrap();
        let grads: Vec<Vec<f64>> = (0..3)
            .flat_map(|c| (0..3).map(move |d| (c, d)))
            .map(|(c, d)| p.component(c).partial(d).samples().remove(0))
            .collect();
        let mut worst = 0.0f64;
        for idx in 0..grid.real_len() {
            let m = Matrix3::from_fn(|c, d| grads[c * 3 + d][idx] + if c == d { 1.0 } else { 0.0 });
            worst = worst.max((m.determinant() - 1.0).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn oscillatory_closed_form() {
        let grid = Grid::new(16).unwrap();
        let g = Field::scalar_fn(grid, |_| 0.8);
        let lam = 4;
        let res = oscillatory_diffusion(None, &g, lam, [0, 0, 1], 0.1, 10, &SolverConfig::default()).unwrap();
        let l2 = (lam * lam) as f64;
        for (t, val) in res.times.iter().zip(&res.l2) {
            let amp = 0.8 * (1.0 - (-l2 * t).exp()) / l2;
            let expect = amp * (8.0 * PI.powi(3)).sqrt();
            assert!((val - expect).abs() < 1e-8, "{val} {expect}");
        }
        assert!(oscillatory_diffusion(None, &g, 8, [0, 0, 1], 0.1, 10, &SolverConfig::default()).is_err());
        assert!(oscillatory_diffusion(None, &g, 2, [1, 1, 0], 0.1, 10, &SolverConfig::default()).is_err());
    }
}
