use super::{clamp_step, march, rk4, SolveLog, SolverConfig, Window};
use crate::calculus_ops::leray_project;
use crate::error::{Error, Result};
use crate::torus_fields::{Field, Rank, TimeSeriesField};

#[derive(Debug, Clone)]
pub struct EulerSolution {
    pub v: TimeSeriesField,
    pub p: TimeSeriesField,
    pub dv_dt: TimeSeriesField,
    pub log: SolveLog,
}

/// P[-div(v (x) v) + theta e3].
pub fn euler_rhs(v: &Field, theta: &Field, config: &SolverConfig) -> Result<Field> {
    let mut f = theta.as_vector_component(2)?;
    f.axpy(-1.0, &v.outer_square(config.mode())?.divergence()?);
    leray_project(&f)
}

/// Zero-mean p with Laplace(p) = -div div(v (x) v) + d3 theta.
pub fn euler_pressure(v: &Field, theta: &Field, config: &SolverConfig) -> Result<Field> {
    let mut s = theta.partial(2);
    s.axpy(-1.0, &v.outer_square(config.mode())?.divergence()?.divergence()?);
    Ok(s.inverse_laplacian())
}

/// Solve dt v + div(v (x) v) + grad p = theta e3, div v = 0 from v(t_init) = v_init,
/// storing v, p and dv/dt at the samples of `window` on the forcing grid.
pub fn solve_forced_euler(
    v_init: &Field,
    t_init: f64,
    forcing: &TimeSeriesField,
    window: Window,
    config: &SolverConfig,
) -> Result<EulerSolution> {
    v_init.expect_rank(Rank::Vector)?;
    let grid = forcing.grid;
    let times: Vec<f64> = (window.start..=window.end).map(|m| grid.time(m)).collect();
    let sup0 = v_init.sup_norm();
    let h = v_init.grid.step();
    let mut log = SolveLog::default();
    let rhs = |v: &Field, t: f64| -> Result<Field> { euler_rhs(v, &forcing.interpolate(t)?, config) };
    let states = march(v_init.clone(), t_init, &times, |v, t, remaining| {
        let sup = v.sup_norm();
        if sup > 10.0 * sup0.max(1e-300) && sup > 1e-12 {
            return Err(Error::BlowUp { t, sup });
        }
        let dt = clamp_step(remaining, config.cfl * h / sup.max(1.0));
        let next = rk4(v, t, dt, &rhs)?;
        log.record(dt, sup);
        Ok((next, dt))
    })?;
    let mut vs = Vec::with_capacity(states.len());
    let mut ps = Vec::with_capacity(states.len());
    let mut ds = Vec::with_capacity(states.len());
    let mut max_div = 0.0f64;
    for (j, v) in states.into_iter().enumerate() {
        let theta = forcing
            .at_index(window.start + j)
            .ok_or_else(|| Error::Numerical("forcing does not cover the window".into()))?;
        max_div = max_div.max(v.divergence()?.max_coeff());
        ps.push(euler_pressure(&v, theta, config)?);
        ds.push(euler_rhs(&v, theta, config)?);
        vs.push(v);
    }
    log.max_divergence = max_div;
    Ok(EulerSolution {
        v: TimeSeriesField::new(grid, window.start, vs)?,
        p: TimeSeriesField::new(grid, window.start, ps)?,
        dv_dt: TimeSeriesField::new(grid, window.start, ds)?,
        log,
    })
}
