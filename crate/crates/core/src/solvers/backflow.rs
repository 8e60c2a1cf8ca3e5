use super::{clamp_step, march, rk4, SolveLog, SolverConfig, Window};
use crate::error::Result;
use crate::torus_fields::{Field, Rank, TimeSeriesField};

/// Periodic part psi of the back-flow map Phi = x + psi:
/// dt psi + (v . grad) psi = -v, psi(t_anchor) = 0.
pub fn solve_backflow(
    v: &TimeSeriesField,
    t_anchor: f64,
    window: Window,
    config: &SolverConfig,
) -> Result<(TimeSeriesField, SolveLog)> {
    let grid = v.snapshots[0].grid;
    let times: Vec<f64> = (window.start..=window.end).map(|m| v.grid.time(m)).collect();
    let h = grid.step();
    let mut log = SolveLog::default();
    let rhs = |psi: &Field, t: f64| -> Result<Field> {
        let vt = v.interpolate(t)?;
        let mut out = psi.advected_by(&vt, config.mode())?;
        out.axpy(1.0, &vt);
        out.scale(-1.0);
        Ok(out)
    };
    let psi0 = Field::zeros(grid, Rank::Vector);
    let states = march(psi0, t_anchor, &times, |psi, t, remaining| {
        let sup = v.interpolate(t)?.sup_norm();
        let dt = clamp_step(remaining, config.cfl * h / sup.max(1.0));
        let next = rk4(psi, t, dt, &rhs)?;
        log.record(dt, sup);
        Ok((next, dt))
    })?;
    Ok((TimeSeriesField::new(v.grid, window.start, states)?, log))
}
