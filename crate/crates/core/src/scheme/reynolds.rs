use super::glue::Glued;
use super::momentum_residual;
use super::perturb::Perturbation;
use crate::calculus_ops::{inverse_divergence_tol, traceless};
use crate::diagnostics_io::Diag;
use crate::error::Result;
use crate::params::Theta0;
use crate::solvers::{solve_transport_diffusion, SolverConfig, TransportSolution, Window};
use crate::torus_fields::{Field, Grid, TimeSeriesField};

/// Tolerance on the mean of every inverse-divergence argument in the assembly.
const ASSEMBLY_MEAN_TOL: f64 = 1e-8;

pub fn theta0_field(theta0: &Theta0, grid: Grid) -> Field {
    Field::scalar_fn(grid, |x| {
        theta0
            .sine_amplitudes
            .iter()
            .enumerate()
            .map(|(i, b)| b * ((i + 1) as f64 * x[2]).sin())
            .sum()
    })
}

/// Transport-diffusion of theta0 by v_{q+1} from t = 0, with the energy identity enforced.
pub fn next_temperature(
    v: &TimeSeriesField,
    theta0: &Theta0,
    grid: Grid,
    config: &SolverConfig,
    diag: &mut Diag,
) -> Result<TransportSolution> {
    let init = theta0_field(theta0, grid);
    let times = v.grid;
    let sol = solve_transport_diffusion(v, &init, Window::new(&times, 0, times.count - 1)?, config)?;
    let m0 = 0.5 * init.l2_norm().powi(2);
    let sup0 = init.sup_norm();
    let (mut drift, mut sup) = (0.0f64, 0.0f64);
    for (th, d) in sol.theta.snapshots.iter().zip(&sol.dissipation) {
        let m = 0.5 * th.l2_norm().powi(2) + d;
        diag.push("m", m);
        if m0 > 0.0 {
            drift = drift.max((m - m0).abs() / m0);
        }
        sup = sup.max(th.sup_norm());
    }
    diag.check("m_drift_rel", drift, 1e-5);
    diag.check("max_principle_excess", (sup - sup0).max(0.0), 1e-3 * sup0.max(1e-300));
    diag.set("steps", sol.log.steps as f64);
    Ok(sol)
}

/// New Reynolds stress and pressure, cross-checked against the direct residual.
#[allow(clippy::too_many_arguments)]
pub fn next_reynolds(
    glued: &Glued,
    pert: &Perturbation,
    v: &TimeSeriesField,
    dv: &TimeSeriesField,
    theta_q: &TimeSeriesField,
    theta_l: &TimeSeriesField,
    theta_next: &TimeSeriesField,
    config: &SolverConfig,
    diag: &mut Diag,
) -> Result<(TimeSeriesField, TimeSeriesField)> {
    let mode = config.mode();
    let times = v.grid;
    let grid = v.snapshots[0].grid;
    let mut rs = Vec::with_capacity(times.count);
    let mut ps = Vec::with_capacity(times.count);
    let mut oracle = 0.0f64;
    for m in 0..times.count {
        let w = &pert.w.snapshots[m];
        let vb = &glued.v.snapshots[m];
        let rho_sum = pert.rho_sum(m, grid);
        let mut sum_r = rho_sum.scalar_times_identity()?;
        if let Some(rb) = &glued.r[m] {
            sum_r.axpy(-1.0, &rb.times_scalar(&pert.eta_sq_field(m, grid), mode)?);
        }
        let mut f = pert.dw_dt[m].clone();
        f.axpy(1.0, &vb.advected_by(w, mode)?);
        f.axpy(1.0, &w.advected_by(vb, mode)?);
        f.axpy(1.0, &w.outer_square(mode)?.divergence()?);
        f.axpy(-1.0, &sum_r.divergence()?);
        let i1 = inverse_divergence_tol(&f, ASSEMBLY_MEAN_TOL)?;
        let th_q = &theta_q.snapshots[m];
        let th1 = &theta_next.snapshots[m];
        let i2 = inverse_divergence_tol(&th_q.sub(th1).as_vector_component(2)?, ASSEMBLY_MEAN_TOL)?;
        let i3 = inverse_divergence_tol(
            &theta_l.snapshots[m].sub(th_q).as_vector_component(2)?,
            ASSEMBLY_MEAN_TOL,
        )?;
        let mut r = i1.clone();
        r.axpy(1.0, &i2);
        r.axpy(1.0, &i3);
        let r = traceless(&r)?;
        let mut p = glued.p.snapshots[m].sub(&rho_sum);
        p.remove_mean();

        let mut resid = momentum_residual(
            &v.snapshots[m],
            &dv.snapshots[m],
            &p,
            th1,
            None,
            config,
        )?;
        resid.remove_mean();
        let r_star = inverse_divergence_tol(&resid, f64::INFINITY)?;
        let div_r = r.divergence()?;
        let scale = div_r.l2_norm();
        let mismatch = r.sub(&r_star).divergence()?.l2_norm();
        oracle = oracle.max(if scale > 0.0 { mismatch / scale } else { mismatch });
        let dth = th1.sub(th_q);
        let hs = dth.hs_norm_sq(0.6).sqrt();
        diag.push("i1_sup", i1.sup_norm());
        diag.push("i2_sup", i2.sup_norm());
        diag.push("i3_sup", i3.sup_norm());
        diag.push("ratio_i2_sobolev", if hs > 0.0 { i2.sup_norm() / hs } else { 0.0 });
        diag.push("r_sup", r.sup_norm());
        rs.push(r);
        ps.push(p);
    }
    diag.set("oracle_mismatch_rel", oracle);
    Ok((TimeSeriesField::new(times, 0, rs)?, TimeSeriesField::new(times, 0, ps)?))
}
