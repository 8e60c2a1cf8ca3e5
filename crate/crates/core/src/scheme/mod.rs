//! One convex-integration step: mollify, glue, perturb, and assemble the new stage.

mod glue;
mod perturb;
mod reynolds;
mod start;
pub mod stripes;

use crate::calculus_ops::MEAN_TOL;
use crate::diagnostics_io::{monitor_step, Diag};
use crate::error::{Error, Result};
use crate::mikado::MikadoFamily;
use crate::params::{ParamSchedule, RunConfig};
use crate::solvers::SolverConfig;
use crate::torus_fields::{Field, Grid, TimeGrid, TimeSeriesField};

pub use glue::{glue_stage, mollify_stage, Glued, Mollified};
pub use perturb::{build_perturbation, Perturbation};
pub use reynolds::{next_reynolds, next_temperature};
pub use start::{initial_stage, stage_time_grid};
pub use stripes::{Partition, Piece, Stripes};

/// Velocity, pressure, traceless Reynolds stress and temperature of one stage, sampled on a
/// common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub q: usize,
    pub v: TimeSeriesField,
    /// time derivative used in the residual; exact for q = 0, assembled for later stages
    pub dv_dt: TimeSeriesField,
    pub p: TimeSeriesField,
    pub r: TimeSeriesField,
    pub theta: TimeSeriesField,
    /// int_0^t |grad theta|^2 at each sample
    pub dissipation: Vec<f64>,
}

impl Stage {
    pub fn times(&self) -> TimeGrid {
        self.v.grid
    }

    pub fn grid(&self) -> Grid {
        self.v.snapshots[0].grid
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// dt v + div(v (x) v) + grad p - theta e3 - div R at sample m.
    pub fn residual(&self, m: usize, config: &SolverConfig) -> Result<Field> {
        momentum_residual(
            &self.v.snapshots[m],
            &self.dv_dt.snapshots[m],
            &self.p.snapshots[m],
            &self.theta.snapshots[m],
            Some(&self.r.snapshots[m]),
            config,
        )
    }
}

pub(crate) fn momentum_residual(
    v: &Field,
    dv: &Field,
    p: &Field,
    theta: &Field,
    r: Option<&Field>,
    config: &SolverConfig,
) -> Result<Field> {
    let mut res = dv.clone();
    res.axpy(1.0, &v.outer_square(config.mode())?.divergence()?);
    res.axpy(1.0, &p.gradient()?);
    res.axpy(-1.0, &theta.as_vector_component(2)?);
    if let Some(r) = r {
        res.axpy(-1.0, &r.divergence()?);
    }
    Ok(res)
}

/// Structural invariants of a stage. Residual sizes are recorded as scalars; the caller
/// decides the residual tolerance.
pub fn stage_invariants(stage: &Stage, config: &SolverConfig) -> Result<Diag> {
    let mut d = Diag::default();
    let (mut div_v, mut tr_r, mut mean_p, mut mean_th) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut res_sup, mut div_r_sup) = (0.0f64, 0.0f64);
    for m in 0..stage.len() {
        div_v = div_v.max(stage.v.snapshots[m].divergence()?.max_coeff());
        let r = &stage.r.snapshots[m];
        tr_r = tr_r.max(r.trace()?.sup_norm());
        mean_p = mean_p.max(stage.p.snapshots[m].mean()[0].abs());
        mean_th = mean_th.max(stage.theta.snapshots[m].mean()[0].abs());
        let res = stage.residual(m, config)?.sup_norm();
        let dr = r.divergence()?.sup_norm();
        d.push("residual_sup", res);
        d.push("div_r_sup", dr);
        res_sup = res_sup.max(res);
        div_r_sup = div_r_sup.max(dr);
    }
    d.check("div_v_max_coeff", div_v, 1e-9);
    d.check("trace_r_sup", tr_r, 1e-10);
    d.check("mean_p", mean_p, MEAN_TOL);
    d.check("mean_theta", mean_th, MEAN_TOL);
    d.set("residual_sup", res_sup);
    d.set("div_r_sup", div_r_sup);
    if div_r_sup > 0.0 {
        d.set("residual_ratio", res_sup / div_r_sup);
    }
    // temperature equation through second-order time differences (reported only)
    if stage.len() >= 3 {
        let dth = stage.theta.time_derivative()?;
        let mut worst = 0.0f64;
        for (m, dt) in dth.iter().enumerate() {
            let th = &stage.theta.snapshots[m];
            let mut res = dt.clone();
            res.axpy(1.0, &th.advected_by(&stage.v.snapshots[m], config.mode())?);
            res.axpy(-1.0, &th.laplacian());
            let scale = th.laplacian().l2_norm().max(1e-300);
            worst = worst.max(res.l2_norm() / scale);
        }
        d.set("temperature_fd_residual_rel", worst);
    }
    Ok(d)
}

/// Everything an iteration needs besides the incoming stage.
pub struct IterationContext<'a> {
    pub schedule: &'a ParamSchedule,
    pub family: &'a MikadoFamily,
    pub config: &'a RunConfig,
}

/// Outcome of one step. On failure `next` is None, `error` holds the cause and `diag` the
/// trace accumulated up to the abort.
#[derive(Debug)]
pub struct IterationResult {
    pub q: usize,
    pub next: Option<Stage>,
    pub error: Option<Error>,
    pub diag: Diag,
}

/// Build stage q + 1 from stage q.
pub fn run_iteration(stage: Stage, ctx: &IterationContext) -> IterationResult {
    let q = stage.q;
    let mut diag = Diag::default();
    match iterate(stage, ctx, &mut diag) {
        Ok(next) => IterationResult {
            q,
            next: Some(next),
            error: None,
            diag,
        },
        Err(e) => {
            diag.warn(format!("iteration {q} aborted: {e}"));
            IterationResult {
                q,
                next: None,
                error: Some(e),
                diag,
            }
        }
    }
}

fn iterate(stage: Stage, ctx: &IterationContext, diag: &mut Diag) -> Result<Stage> {
    let q = stage.q;
    let params = ctx.schedule.stage(q)?.clone();
    let data = &ctx.schedule.data;
    let solver = &ctx.config.solver;
    let times = stage.times();
    let grid = stage.grid();
    diag.set("l", params.l);
    diag.set("tau", params.tau_q);
    diag.set("grid_step", grid.step());
    diag.set("lambda_next", params.lambda_next);

    let partition = Partition::new(params.tau_q, times.t_end())?;
    let stripes = Stripes::new(params.tau_q, times.t_end(), times.dt)?;
    if stripes.c0 <= 0.0 {
        return Err(Error::Numerical("stripe constant c0 is not positive".into()));
    }
    diag.set("partition_nodes", partition.nodes as f64);
    diag.set("stripe_count", stripes.indices.len() as f64);
    diag.set("stripe_c0", stripes.c0);
    let tube = ctx.family.radius / params.lambda_next;
    if tube < 2.0 * grid.step() {
        diag.warn(format!(
            "perturbation tubes of radius {tube:.4} are below two grid steps ({:.4}); w is sampled, not resolved",
            2.0 * grid.step()
        ));
    }

    let mut sub = Diag::default();
    let mollified = mollify_stage(&stage, &params, solver, ctx.config.strict, &mut sub)?;
    diag.merge("mollify.", std::mem::take(&mut sub));

    // only v_q and theta_q are needed from here on
    let Stage { v: v_q, theta: theta_q, .. } = stage;

    let glued = glue_stage(&mollified, &partition, &params, solver, &mut sub)?;
    diag.merge("glue.", std::mem::take(&mut sub));
    let Mollified { theta: theta_l, .. } = mollified;

    let pert = build_perturbation(&glued, &stripes, &params, data, ctx.family, solver, &mut sub);
    diag.merge("perturb.", std::mem::take(&mut sub));
    let pert = pert?;

    let mut v_next = Vec::with_capacity(times.count);
    let mut dv_next = Vec::with_capacity(times.count);
    let mut div_w = 0.0f64;
    for m in 0..times.count {
        let w = &pert.w.snapshots[m];
        div_w = div_w.max(w.divergence()?.max_coeff());
        v_next.push(glued.v.snapshots[m].add(w));
        dv_next.push(glued.dv_dt.snapshots[m].add(&pert.dw_dt[m]));
    }
    diag.check("perturb.div_w_max_coeff", div_w, 1e-10);
    let v_next = TimeSeriesField::new(times, 0, v_next)?;
    let dv_next = TimeSeriesField::new(times, 0, dv_next)?;

    let temp = next_temperature(&v_next, &data.theta0, grid, solver, &mut sub)?;
    diag.merge("temperature.", std::mem::take(&mut sub));

    let (r_next, p_next) = next_reynolds(
        &glued,
        &pert,
        &v_next,
        &dv_next,
        &theta_q,
        &theta_l,
        &temp.theta,
        solver,
        &mut sub,
    )?;
    diag.merge("reynolds.", std::mem::take(&mut sub));

    let next = Stage {
        q: q + 1,
        v: v_next,
        dv_dt: dv_next,
        p: p_next,
        r: r_next,
        theta: temp.theta,
        dissipation: temp.dissipation,
    };
    diag.merge("monitor.", monitor_step(&v_q, &theta_q, &next, ctx.schedule)?);
    Ok(next)
}
