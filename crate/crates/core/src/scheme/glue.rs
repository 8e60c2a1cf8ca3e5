use super::stripes::{Partition, Piece};
use super::{momentum_residual, Stage};
use crate::calculus_ops::{biot_savart, inverse_divergence_tol, mollify_spectral, traceless_product};
use crate::diagnostics_io::Diag;
use crate::error::{Error, Result};
use crate::params::StageParams;
use crate::solvers::{solve_forced_euler, EulerSolution, SolverConfig, Window};
use crate::torus_fields::{Field, TimeGrid, TimeSeriesField};

/// Mollified velocity and temperature; the mollified stress and pressure are only
/// diagnosed, never stored.
#[derive(Debug, Clone)]
pub struct Mollified {
    pub v: TimeSeriesField,
    pub theta: TimeSeriesField,
}

pub fn mollify_stage(
    stage: &Stage,
    params: &StageParams,
    config: &SolverConfig,
    strict: bool,
    diag: &mut Diag,
) -> Result<Mollified> {
    let l = params.l;
    let h = stage.grid().step();
    if l <= h {
        if strict {
            return Err(Error::UnresolvedMollifier { l, h });
        }
        diag.warn(format!(
            "mollifier scale l = {l:.4} is below the grid step {h:.4}; applying the multiplier anyway"
        ));
        diag.set("subgrid_mollifier", 1.0);
    } else {
        diag.set("subgrid_mollifier", 0.0);
    }
    let mode = config.mode();
    let times = stage.times();
    let mut vs = Vec::with_capacity(times.count);
    let mut ths = Vec::with_capacity(times.count);
    for m in 0..times.count {
        let v = &stage.v.snapshots[m];
        let v_l = mollify_spectral(v, l);
        let th_l = mollify_spectral(&stage.theta.snapshots[m], l);
        let dv_l = mollify_spectral(&stage.dv_dt.snapshots[m], l);
        let mut r_l = mollify_spectral(&stage.r.snapshots[m], l);
        r_l.axpy(-1.0, &mollify_spectral(&traceless_product(v, v, mode)?, l));
        r_l.axpy(1.0, &traceless_product(&v_l, &v_l, mode)?);
        let mut src = th_l.partial(2);
        src.axpy(-1.0, &v_l.outer_square(mode)?.divergence()?.divergence()?);
        src.axpy(1.0, &r_l.divergence()?.divergence()?);
        let p_l = src.inverse_laplacian();
        let res = momentum_residual(&v_l, &dv_l, &p_l, &th_l, Some(&r_l), config)?;
        diag.push("residual_sup", res.sup_norm());
        diag.push("r_l_sup", r_l.sup_norm());
        let dv = v_l.sub(v);
        diag.push("v_l_minus_v_sup", dv.sup_norm());
        diag.push(
            "energy_change",
            (v.l2_norm().powi(2) - v_l.l2_norm().powi(2)).abs(),
        );
        vs.push(v_l);
        ths.push(th_l);
    }
    let max = |d: &Diag, k: &str| d.series[k].iter().cloned().fold(0.0f64, f64::max);
    let a = params.lambda_q.powf(-params.alpha);
    diag.set(
        "ratio_v_l_minus_v",
        max(diag, "v_l_minus_v_sup") / (params.delta_next.sqrt() * a),
    );
    diag.set(
        "ratio_energy_change",
        max(diag, "energy_change") / (params.delta_next * params.l.powf(params.alpha)),
    );
    diag.set("residual_sup", max(diag, "residual_sup"));
    Ok(Mollified {
        v: TimeSeriesField::new(times, 0, vs)?,
        theta: TimeSeriesField::new(times, 0, ths)?,
    })
}

/// Glued velocity, pressure and stress. The stress is stored only where it can be nonzero
/// (transition samples).
#[derive(Debug, Clone)]
pub struct Glued {
    pub v: TimeSeriesField,
    pub dv_dt: TimeSeriesField,
    pub p: TimeSeriesField,
    pub r: Vec<Option<Field>>,
    pub pieces: Vec<Piece>,
}

impl Glued {
    pub fn times(&self) -> TimeGrid {
        self.v.grid
    }
}

/// Sample indices strictly inside (a, b), clipped to the grid.
pub(crate) fn samples_inside(times: &TimeGrid, a: f64, b: f64) -> Option<Window> {
    let idx: Vec<usize> = (0..times.count)
        .filter(|&m| {
            let t = times.time(m);
            t > a && t < b
        })
        .collect();
    match (idx.first(), idx.last()) {
        (Some(&s), Some(&e)) => Window::new(times, s, e).ok(),
        _ => None,
    }
}

struct Local {
    i: usize,
    sol: EulerSolution,
}

impl Local {
    fn at(&self, m: usize) -> Result<(&Field, &Field, &Field)> {
        let j = m
            .checked_sub(self.sol.v.start)
            .filter(|&j| j < self.sol.v.len())
            .ok_or_else(|| Error::Numerical(format!("sample {m} outside local window {}", self.i)))?;
        Ok((&self.sol.v.snapshots[j], &self.sol.dv_dt.snapshots[j], &self.sol.p.snapshots[j]))
    }
}

fn solve_local(
    i: usize,
    mollified: &Mollified,
    partition: &Partition,
    params: &StageParams,
    config: &SolverConfig,
    diag: &mut Diag,
) -> Result<Local> {
    let times = mollified.v.grid;
    let (a, b) = partition.support(i);
    let window = samples_inside(&times, a, b)
        .ok_or_else(|| Error::Numerical(format!("local window {i} holds no samples")))?;
    let anchor = partition.anchor(i);
    let v0 = mollified.v.interpolate(anchor)?;
    let sol = solve_forced_euler(&v0, anchor, &mollified.theta, window, config)?;
    diag.set_max("local_div_max_coeff", sol.log.max_divergence);
    diag.set_max("local_steps", sol.log.steps as f64);
    let mut z_sup = 0.0f64;
    let mut energy = 0.0f64;
    for (j, vi) in sol.v.snapshots.iter().enumerate() {
        let m = window.start + j;
        let t = times.time(m);
        let vl = &mollified.v.snapshots[m];
        energy = energy.max((vi.l2_norm().powi(2) - vl.l2_norm().powi(2)).abs());
        if (t - partition.node(i)).abs() <= partition.tau {
            z_sup = z_sup.max(biot_savart(&vi.sub(vl))?.sup_norm());
        }
    }
    let scale = partition.tau * params.delta_next * params.l.powf(params.alpha);
    diag.set_max("z_tilde_sup", z_sup);
    diag.set_max("ratio_z_tilde", z_sup / scale);
    diag.set_max("local_energy_change", energy);
    Ok(Local { i, sol })
}

/// Solve the forced Euler equations on every window and glue with the partition.
pub fn glue_stage(
    mollified: &Mollified,
    partition: &Partition,
    params: &StageParams,
    config: &SolverConfig,
    diag: &mut Diag,
) -> Result<Glued> {
    let times = mollified.v.grid;
    let mode = config.mode();
    let mut cache: Vec<Local> = Vec::new();
    let mut vs = Vec::with_capacity(times.count);
    let mut dvs = Vec::with_capacity(times.count);
    let mut ps = Vec::with_capacity(times.count);
    let mut rs = Vec::with_capacity(times.count);
    let mut pieces = Vec::with_capacity(times.count);
    let mut mean_max = 0.0f64;
    let mut res_max = 0.0f64;
    let mut div_max = 0.0f64;
    for m in 0..times.count {
        let t = times.time(m);
        let piece = partition.classify(t);
        let (lo, hi) = match piece {
            Piece::Flat(i) => (i, i),
            Piece::Transition { i, .. } => (i, i + 1),
        };
        cache.retain(|c| c.i >= lo);
        for i in lo..=hi {
            if !cache.iter().any(|c| c.i == i) {
                let local = solve_local(i, mollified, partition, params, config, diag)?;
                cache.push(local);
            }
        }
        let get = |i: usize| cache.iter().find(|c| c.i == i).expect("solved above");
        let (v, dv, p, r) = match piece {
            Piece::Flat(i) => {
                let (v, dv, p) = get(i).at(m)?;
                (v.clone(), dv.clone(), p.clone(), None)
            }
            Piece::Transition { i, chi, chi_dot } => {
                let (v1, dv1, p1) = get(i).at(m)?;
                let (v2, dv2, p2) = get(i + 1).at(m)?;
                let d = v1.sub(v2);
                let mean = d.mean().iter().fold(0.0f64, |a, x| a.max(x.abs()));
                mean_max = mean_max.max(mean);
                if mean > 1e-9 {
                    return Err(Error::NonzeroMean {
                        mean: d.mean(),
                        tol: 1e-9,
                    });
                }
                let mut v = v1.scaled(chi);
                v.axpy(1.0 - chi, v2);
                let mut dv = d.scaled(chi_dot);
                dv.axpy(chi, dv1);
                dv.axpy(1.0 - chi, dv2);
                let mut r = inverse_divergence_tol(&d, 1e-9)?.scaled(chi_dot);
                r.axpy(-chi * (1.0 - chi), &traceless_product(&d, &d, mode)?);
                let mut d2 = d.dot(&d, mode)?;
                d2.remove_mean();
                let mut p = p1.scaled(chi);
                p.axpy(1.0 - chi, p2);
                p.axpy(chi * (1.0 - chi) / 3.0, &d2);
                (v, dv, p, Some(r))
            }
        };
        let th = &mollified.theta.snapshots[m];
        let res = momentum_residual(&v, &dv, &p, th, r.as_ref(), config)?;
        res_max = res_max.max(res.sup_norm());
        div_max = div_max.max(v.divergence()?.max_coeff());
        let vl = &mollified.v.snapshots[m];
        diag.push("energy_change", (v.l2_norm().powi(2) - vl.l2_norm().powi(2)).abs());
        diag.push("r_sup", r.as_ref().map(|r| r.sup_norm()).unwrap_or(0.0));
        vs.push(v);
        dvs.push(dv);
        ps.push(p);
        rs.push(r);
        pieces.push(piece);
    }
    diag.set("residual_sup", res_max);
    diag.set("difference_mean_max", mean_max);
    diag.check("div_v_max_coeff", div_max, 1e-9);
    let e = diag.series["energy_change"].iter().cloned().fold(0.0f64, f64::max);
    diag.set(
        "ratio_energy_change",
        e / (params.delta_next * params.l.powf(params.alpha)),
    );
    Ok(Glued {
        v: TimeSeriesField::new(times, 0, vs)?,
        dv_dt: TimeSeriesField::new(times, 0, dvs)?,
        p: TimeSeriesField::new(times, 0, ps)?,
        r: rs,
        pieces,
    })
}
