use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{clamp_step, march, SolveLog, SolverConfig, Window};
use crate::error::{Error, Result};
use crate::torus_fields::{Field, Rank, TimeGrid, TimeSeriesField};

#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub theta: TimeSeriesField,
    /// int_{t_start}^{t} |grad theta|^2 at each stored sample
    pub dissipation: Vec<f64>,
    pub log: SolveLog,
}

/// phi_k(z) = sum_j z^j / (j + k)!, k = 1, 2, 3, for real z <= 0.
fn phis(z: f64) -> [f64; 3] {
    if z.abs() < 1.0 {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut term = 1.0 / (1..=k + 1).map(|i| i as f64).product::<f64>();
            let mut sum = 0.0;
            for j in 0..30 {
                sum += term;
                term *= z / (j + k + 2) as f64;
            }
            *o = sum;
        }
        out
    } else {
        let e = z.exp();
        let p1 = (e - 1.0) / z;
        let p2 = (e - 1.0 - z) / (z * z);
        let p3 = (e - 1.0 - z - 0.5 * z * z) / (z * z * z);
        [p1, p2, p3]
    }
}

/// Per-|k|^2 coefficients of one ETD-RK4 step.
struct Etd {
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl Etd {
    fn new(n: usize, dt: f64) -> Self {
        let max_k2 = 3 * (n / 2) * (n / 2);
        let mut t = Etd {
            e: vec![0.0; max_k2 + 1],
            e2: vec![0.0; max_k2 + 1],
            q: vec![0.0; max_k2 + 1],
            f1: vec![0.0; max_k2 + 1],
            f2: vec![0.0; max_k2 + 1],
            f3: vec![0.0; max_k2 + 1],
        };
        for k2 in 0..=max_k2 {
            let z = -(k2 as f64) * dt;
            let [p1, p2, p3] = phis(z);
            t.e[k2] = z.exp();
            t.e2[k2] = (0.5 * z).exp();
            t.q[k2] = 0.5 * dt * phis(0.5 * z)[0];
            t.f1[k2] = dt * (p1 - 3.0 * p2 + 4.0 * p3);
            t.f2[k2] = dt * (p2 - 2.0 * p3);
            t.f3[k2] = dt * (-p2 + 4.0 * p3);
        }
        t
    }
}

fn apply(f: &Field, table: &[f64]) -> Field {
    f.apply_multiplier(|k| Complex64::new(table[(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as usize], 0.0))
}

/// dt theta + v . grad theta - Laplace theta = 0 on the samples of `window`, starting from
/// theta_init at the first window sample.
pub fn solve_transport_diffusion(
    v: &TimeSeriesField,
    theta_init: &Field,
    window: Window,
    config: &SolverConfig,
) -> Result<TransportSolution> {
    solve_transport_diffusion_with(
        theta_init,
        &v.grid,
        window,
        |t| v.interpolate(t).map(Some),
        |_| Ok(None),
        config,
    )
}

/// Exponential RK4 for dt theta + v . grad theta - Laplace theta = s.
///
/// The diffusion is integrated exactly; the dissipation integral is accumulated with
/// Simpson's rule on every step.
pub fn solve_transport_diffusion_with<V, S>(
    theta_init: &Field,
    grid: &TimeGrid,
    window: Window,
    velocity: V,
    source: S,
    config: &SolverConfig,
) -> Result<TransportSolution>
where
    V: Fn(f64) -> Result<Option<Field>>,
    S: Fn(f64) -> Result<Option<Field>>,
{
    theta_init.expect_rank(Rank::Scalar)?;
    let times: Vec<f64> = (window.start..=window.end).map(|m| grid.time(m)).collect();
    let h = theta_init.grid.step();
    let mode = config.mode();
    let mut log = SolveLog::default();
    let nonlinear = |theta: &Field, t: f64| -> Result<Field> {
        let mut out = match velocity(t)? {
            Some(v) => theta.advected_by(&v, mode)?.scaled(-1.0),
            None => Field::zeros(theta.grid, Rank::Scalar),
        };
        if let Some(s) = source(t)? {
            out.axpy(1.0, &s);
        }
        Ok(out)
    };
    let grad_sq = |f: &Field| f.hs_norm_sq(1.0);
    let state0 = (theta_init.clone(), 0.0f64);
    let states = march(state0, times[0], &times, |(theta, diss), t, remaining| {
        if remaining < 0.0 {
            return Err(Error::Numerical("transport-diffusion runs forward only".into()));
        }
        let sup = match velocity(t)? {
            Some(v) => v.sup_norm(),
            None => 0.0,
        };
        let dt = clamp_step(remaining, config.cfl * h / sup.max(1.0));
        // ETD-RK4 (Cox-Matthews); exact for the heat flow and for constant forcing
        let c = Etd::new(theta.grid.n, dt);
        let e2u = apply(theta, &c.e2);
        let nu = nonlinear(theta, t)?;
        let mut a = e2u.clone();
        a.axpy(1.0, &apply(&nu, &c.q));
        let na = nonlinear(&a, t + 0.5 * dt)?;
        let mut b = e2u;
        b.axpy(1.0, &apply(&na, &c.q));
        let nb = nonlinear(&b, t + 0.5 * dt)?;
        let mut cc = apply(&a, &c.e2);
        let mut tmp = nb.scaled(2.0);
        tmp.axpy(-1.0, &nu);
        cc.axpy(1.0, &apply(&tmp, &c.q));
        let nc = nonlinear(&cc, t + dt)?;
        let mut next = apply(theta, &c.e);
        next.axpy(1.0, &apply(&nu, &c.f1));
        let mut ab = na;
        ab.axpy(1.0, &nb);
        next.axpy(2.0, &apply(&ab, &c.f2));
        next.axpy(1.0, &apply(&nc, &c.f3));
        let d = diss + dt / 6.0 * (grad_sq(theta) + 4.0 * grad_sq(&b) + grad_sq(&next));
        log.record(dt, sup);
        Ok(((next, d), dt))
    })?;
    let mut thetas = Vec::with_capacity(states.len());
    let mut dissipation = Vec::with_capacity(states.len());
    for (th, d) in states {
        thetas.push(th);
        dissipation.push(d);
    }
    Ok(TransportSolution {
        theta: TimeSeriesField::new(*grid, window.start, thetas)?,
        dissipation,
        log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatoryResult {
    pub lambda: i64,
    pub times: Vec<f64>,
    /// |theta(t)|_{L2} of the complex solution
    pub l2: Vec<f64>,
    pub sup_l2: f64,
}

/// Solve dt theta + v . grad theta - Laplace theta = g exp(i lambda k . x), theta(0) = 0,
/// for a unit integer direction k, by splitting into real and imaginary parts.
pub fn oscillatory_diffusion(
    v: Option<&Field>,
    g: &Field,
    lambda: i64,
    direction: [i64; 3],
    t_final: f64,
    samples: usize,
    config: &SolverConfig,
) -> Result<OscillatoryResult> {
    g.expect_rank(Rank::Scalar)?;
    if direction.iter().map(|c| c * c).sum::<i64>() != 1 {
        return Err(Error::param("direction", "must be a unit integer vector"));
    }
    if lambda <= 0 || 2 * lambda >= g.grid.n as i64 {
        return Err(Error::param("lambda", format!("{lambda} not resolved on n = {}", g.grid.n)));
    }
    let k = direction.map(|c| (c * lambda) as f64);
    let cos = Field::scalar_fn(g.grid, |x| (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]).cos());
    let sin = Field::scalar_fn(g.grid, |x| (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]).sin());
    let mode = config.mode();
    let sources = [cos.times_scalar(g, mode)?, sin.times_scalar(g, mode)?];
    let tg = TimeGrid::covering(t_final, t_final / samples.max(1) as f64);
    let window = Window::new(&tg, 0, tg.count - 1)?;
    let zero = Field::zeros(g.grid, Rank::Scalar);
    let mut sq = vec![0.0; tg.count];
    for s in &sources {
        let sol = solve_transport_diffusion_with(
            &zero,
            &tg,
            window,
            |_| Ok(v.cloned()),
            |_| Ok(Some(s.clone())),
            config,
        )?;
        for (acc, th) in sq.iter_mut().zip(&sol.theta.snapshots) {
            *acc += th.l2_norm().powi(2);
        }
    }
    let l2: Vec<f64> = sq.iter().map(|x| x.sqrt()).collect();
    Ok(OscillatoryResult {
        lambda,
        times: tg.times(),
        sup_l2: l2.iter().cloned().fold(0.0, f64::max),
        l2,
    })
}
