use std::f64::consts::PI;

use super::Stage;
use crate::error::{Error, Result};
use crate::params::ParamSchedule;
use crate::torus_fields::{Field, Grid, Rank, TimeGrid, TimeSeriesField};

/// Uniform grid on [0, T] with at least `samples_per_tau` samples per smallest tau_q used
/// by the iterations 0..q_max.
pub fn stage_time_grid(schedule: &ParamSchedule, samples_per_tau: f64) -> TimeGrid {
    let last = schedule.data.q_max.max(1);
    let tau = schedule.stages[..last]
        .iter()
        .map(|s| s.tau_q)
        .fold(f64::INFINITY, f64::min);
    TimeGrid::covering(schedule.data.t_final, tau / samples_per_tau)
}

/// The explicit q = 0 stage: a single shear mode carrying the prescribed energy, its
/// off-diagonal Reynolds stress, and the heat flow of theta0.
pub fn initial_stage(schedule: &ParamSchedule, grid: Grid, times: TimeGrid) -> Result<Stage> {
    let data = &schedule.data;
    let s0 = schedule.stage(0)?;
    let d1 = s0.delta_next;
    let shift = d1 + d1 * s0.lambda_q.powf(-data.alpha);
    let k = (s0.delta_q.sqrt() * s0.lambda_q).ceil();
    if k >= (grid.n / 2) as f64 {
        return Err(Error::param(
            "grid.n",
            format!("shear frequency {k} is not below n/2 = {}", grid.n / 2),
        ));
    }
    let modes = data.theta0.sine_amplitudes.len();
    if modes >= grid.n / 2 {
        return Err(Error::param("theta0", "temperature modes reach the Nyquist plane"));
    }
    let c = 8.0 * PI.powi(3);
    let mut v = Vec::with_capacity(times.count);
    let mut dv = Vec::with_capacity(times.count);
    let mut p = Vec::with_capacity(times.count);
    let mut r = Vec::with_capacity(times.count);
    let mut theta = Vec::with_capacity(times.count);
    let mut dissipation = Vec::with_capacity(times.count);
    for t in times.times() {
        let gap = 2.0 * data.energy(t) - shift;
        if gap <= 0.0 {
            return Err(Error::Config(format!(
                "2e(t) - delta_1 - delta_1 lambda_0^-alpha = {gap:e} <= 0 at t = {t}"
            )));
        }
        let amp = (gap / c).sqrt();
        let de = data.energy_derivative(t);
        let damp = de / (c * gap).sqrt();
        let rc = -de / (k * (c * gap).sqrt());
        v.push(Field::from_fn(grid, Rank::Vector, |x| vec![amp * (k * x[1]).sin(), 0.0, 0.0]));
        dv.push(Field::from_fn(grid, Rank::Vector, |x| vec![damp * (k * x[1]).sin(), 0.0, 0.0]));
        r.push(Field::from_fn(grid, Rank::SymTensor, |x| {
            vec![0.0, rc * (k * x[1]).cos(), 0.0, 0.0, 0.0, 0.0]
        }));
        let amps: Vec<(f64, f64)> = data
            .theta0
            .sine_amplitudes
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let n = (i + 1) as f64;
                (n, b * (-n * n * t).exp())
            })
            .collect();
        // both are zero-mean series; drop the rounding left in the k = 0 coefficient
        let mut th = Field::scalar_fn(grid, |x| amps.iter().map(|(n, b)| b * (n * x[2]).sin()).sum());
        th.remove_mean();
        theta.push(th);
        let mut pr = Field::scalar_fn(grid, |x| amps.iter().map(|(n, b)| -b * (n * x[2]).cos() / n).sum());
        pr.remove_mean();
        p.push(pr);
        dissipation.push(
            data.theta0
                .sine_amplitudes
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let n = (i + 1) as f64;
                    b * b * 2.0 * PI.powi(3) * (1.0 - (-2.0 * n * n * t).exp())
                })
                .sum(),
        );
    }
    Ok(Stage {
        q: 0,
        v: TimeSeriesField::new(times, 0, v)?,
        dv_dt: TimeSeriesField::new(times, 0, dv)?,
        p: TimeSeriesField::new(times, 0, p)?,
        r: TimeSeriesField::new(times, 0, r)?,
        theta: TimeSeriesField::new(times, 0, theta)?,
        dissipation,
    })
}
