use serde::{Deserialize, Serialize};

use super::{cumulative_trapezoid, Diag};
use crate::error::Result;
use crate::params::ParamSchedule;
use crate::scheme::Stage;
use crate::torus_fields::{holder_norm, Field, TimeSeriesField};

/// sum_{k <= order} max_{|gamma| = k} sup |D^gamma f|.
pub fn c_norm(field: &Field, order: u32) -> f64 {
    holder_norm(field, order as f64).integer_part
}

/// Energy E(t) = |v|^2/2 - int_0^t int theta v3, temperature energy
/// M(t) = |theta|^2/2 + int_0^t |grad theta|^2 and the gap e(t) - |v|^2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyFunctionals {
    pub times: Vec<f64>,
    pub e: Vec<f64>,
    pub m: Vec<f64>,
    pub gap: Vec<f64>,
}

pub fn energy_functionals(stage: &Stage, schedule: &ParamSchedule) -> EnergyFunctionals {
    let times = stage.times().times();
    let dt = stage.times().dt;
    let work: Vec<f64> = (0..stage.len())
        .map(|m| {
            let v3 = stage.v.snapshots[m].component(2);
            stage.theta.snapshots[m].inner(&v3)
        })
        .collect();
    let work = cumulative_trapezoid(&work, dt);
    let mut out = EnergyFunctionals {
        times: times.clone(),
        e: Vec::with_capacity(times.len()),
        m: Vec::with_capacity(times.len()),
        gap: Vec::with_capacity(times.len()),
    };
    for (m, &t) in times.iter().enumerate() {
        let v2 = stage.v.snapshots[m].l2_norm().powi(2);
        out.e.push(0.5 * v2 - work[m]);
        out.m.push(0.5 * stage.theta.snapshots[m].l2_norm().powi(2) + stage.dissipation[m]);
        out.gap.push(schedule.data.energy(t) - v2);
    }
    out
}

fn series_max(s: &TimeSeriesField, f: impl Fn(&Field) -> f64) -> f64 {
    s.snapshots.iter().map(f).fold(0.0f64, f64::max)
}

/// Ratios of the left sides of the stage inequalities to their right sides.
pub fn monitor_stage(stage: &Stage, schedule: &ParamSchedule) -> Result<Diag> {
    let mut d = Diag::default();
    let p = schedule.stage(stage.q)?;
    let alpha = p.alpha;
    let ef = energy_functionals(stage, schedule);
    let r0 = series_max(&stage.r, |f| f.sup_norm());
    d.set("reynolds_c0_ratio", r0 / (p.delta_next * p.lambda_q.powf(-3.0 * alpha)));
    let v0 = series_max(&stage.v, |f| f.sup_norm());
    d.set("v_c0_ratio", v0 / (p.c0 - p.delta_q.sqrt()));
    let v1 = series_max(&stage.v, |f| c_norm(f, 1));
    if let Some(m) = p.big_m {
        d.set("v_c1_ratio", v1 / (m * p.delta_q.sqrt() * p.lambda_q));
    }
    let v2 = series_max(&stage.v, |f| c_norm(f, 2));
    d.set("v_c2_ratio", v2 / (p.delta_q.sqrt() * p.lambda_q.powi(2)));
    let lower = p.delta_next * p.lambda_q.powf(-alpha);
    let lo = ef.gap.iter().map(|g| g / lower).fold(f64::INFINITY, f64::min);
    let hi = ef.gap.iter().map(|g| g / p.delta_next).fold(f64::NEG_INFINITY, f64::max);
    d.set("energy_gap_lower_ratio_min", lo);
    d.set("energy_gap_upper_ratio_max", hi);
    d.set("energy_gap_in_band", (lo >= 1.0 && hi <= 1.0) as u8 as f64);
    let m0 = 0.5 * stage.theta.snapshots[0].l2_norm().powi(2) + stage.dissipation[0];
    let drift = ef
        .m
        .iter()
        .map(|m| if m0 > 0.0 { (m - m0).abs() / m0 } else { (m - m0).abs() })
        .fold(0.0f64, f64::max);
    d.set("temperature_energy_drift_rel", drift);
    let e0 = ef.e[0];
    d.set(
        "energy_drift",
        ef.e.iter().map(|e| (e - e0).abs()).fold(0.0f64, f64::max),
    );
    d.series.insert("E".into(), ef.e);
    d.series.insert("M".into(), ef.m);
    d.series.insert("gap".into(), ef.gap);
    d.series.insert("t".into(), ef.times);
    Ok(d)
}

/// Increment monitors between stage q (given by v_q, theta_q) and stage q + 1.
pub fn monitor_step(
    v_q: &TimeSeriesField,
    theta_q: &TimeSeriesField,
    next: &Stage,
    schedule: &ParamSchedule,
) -> Result<Diag> {
    let mut d = Diag::default();
    let p = schedule.stage(next.q - 1)?;
    let mut inc = 0.0f64;
    let mut l2 = Vec::with_capacity(next.len());
    let mut grad = Vec::with_capacity(next.len());
    for m in 0..next.len() {
        let dv = next.v.snapshots[m].sub(&v_q.snapshots[m]);
        let lhs = dv.sup_norm() + c_norm(&dv, 1) / p.lambda_next;
        inc = inc.max(lhs);
        let dth = next.theta.snapshots[m].sub(&theta_q.snapshots[m]);
        l2.push(dth.l2_norm().powi(2));
        grad.push(dth.hs_norm_sq(1.0));
    }
    if let Some(m) = p.big_m {
        d.set("v_increment_ratio", inc / (m * p.delta_next.sqrt()));
    }
    d.set("v_increment", inc);
    let integral = cumulative_trapezoid(&grad, next.times().dt);
    let theta_inc = l2
        .iter()
        .zip(&integral)
        .map(|(a, b)| a + b)
        .fold(0.0f64, f64::max);
    d.set("theta_increment_ratio", theta_inc / p.delta_next.sqrt());
    d.set(
        "theta_difference_l2_max",
        l2.iter().cloned().fold(0.0f64, f64::max).sqrt(),
    );
    let target = (p.delta_q.sqrt() * p.lambda_q).powf(p.alpha) * p.l.powf(1.0 - p.alpha);
    d.set(
        "ratio_theta_difference",
        l2.iter().cloned().fold(0.0f64, f64::max).sqrt() / target,
    );
    Ok(d)
}
