use nalgebra::Matrix3;

use super::glue::{samples_inside, Glued};
use super::stripes::Stripes;
use crate::diagnostics_io::Diag;
use crate::error::{Error, Result};
use crate::mikado::{sym6, MikadoFamily, DIRECTIONS};
use crate::params::{ProblemData, StageParams};
use crate::solvers::{solve_backflow, SolverConfig};
use crate::torus_fields::{sym_index, transform_forward, Field, Grid, Rank, TimeSeriesField};

/// The perturbation w_{q+1} with the scalar data needed to rebuild sum_i R_{q,i}.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub w: TimeSeriesField,
    /// second-order time differences of w
    pub dw_dt: Vec<Field>,
    /// rho_q at each sample
    pub rho: Vec<f64>,
    /// sum_j int eta_j^2 at each sample (grid quadrature)
    pub mass: Vec<f64>,
    /// sum_i eta_i^2 at the n grid values of x3, per sample
    pub eta_sq: Vec<Vec<f64>>,
}

impl Perturbation {
    /// sum_i rho_{q,i} = (rho_q / mass) sum_i eta_i^2 at sample m.
    pub fn rho_sum(&self, m: usize, grid: Grid) -> Field {
        let n = grid.n;
        let f = if self.mass[m] > 0.0 { self.rho[m] / self.mass[m] } else { 0.0 };
        let col = &self.eta_sq[m];
        Field::scalar_fn(grid, |x| {
            let k = ((x[2] / grid.step()).round() as usize) % n;
            f * col[k]
        })
    }

    /// sum_i eta_i^2 at sample m as a scalar field.
    pub fn eta_sq_field(&self, m: usize, grid: Grid) -> Field {
        let n = grid.n;
        let col = &self.eta_sq[m];
        Field::scalar_fn(grid, |x| col[((x[2] / grid.step()).round() as usize) % n])
    }
}

struct Flow {
    i: i64,
    psi: TimeSeriesField,
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn matrix_of(samples: &[Vec<f64>], idx: usize) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for a in 0..3 {
        for b in 0..3 {
            m[(a, b)] = samples[sym_index(a, b)][idx];
        }
    }
    m
}

/// Energy gap, back-flows, conjugated stresses and the Mikado perturbation.
pub fn build_perturbation(
    glued: &Glued,
    stripes: &Stripes,
    params: &StageParams,
    data: &ProblemData,
    family: &MikadoFamily,
    config: &SolverConfig,
    diag: &mut Diag,
) -> Result<Perturbation> {
    let times = glued.times();
    let grid = glued.v.snapshots[0].grid;
    let n = grid.n;
    let len = grid.real_len();
    let lam = params.lambda_next;
    let ctr = family.centers();

    let mut rho = Vec::with_capacity(times.count);
    let mut mass = Vec::with_capacity(times.count);
    for m in 0..times.count {
        let t = times.time(m);
        let r = (data.energy(t) - 0.5 * params.delta_next2 - glued.v.snapshots[m].l2_norm().powi(2)) / 3.0;
        let s = stripes.mass(t, n, false);
        diag.push("rho", r);
        diag.push("stripe_mass", s);
        diag.push("ratio_rho_qi_sup", r / s / (params.delta_next / stripes.c0));
        if !(r > 0.0) {
            return Err(Error::EnergyGap { t, value: r });
        }
        rho.push(r);
        mass.push(s);
    }

    let mut flows: Vec<Flow> = Vec::new();
    let mut ws = Vec::with_capacity(times.count);
    let mut eta_sq = Vec::with_capacity(times.count);
    let (mut dev_max, mut c_min, mut grad_dev, mut det_dev) = (0.0f64, f64::INFINITY, 0.0f64, 0.0f64);
    for m in 0..times.count {
        let t = times.time(m);
        flows.retain(|f| stripes.time_support(f.i).1 > t);
        let active: Vec<(i64, Vec<f64>)> = stripes
            .indices
            .iter()
            .map(|&i| (i, stripes.eta_column(i, t, n)))
            .filter(|(_, col)| col.iter().any(|&e| e > 0.0))
            .collect();
        let mut sq = vec![0.0; n];
        for (_, col) in &active {
            for (s, e) in sq.iter_mut().zip(col) {
                *s += e * e;
            }
        }
        eta_sq.push(sq);

        let rbar = glued.r[m].as_ref().map(|r| r.samples());
        let amp = (rho[m] / mass[m]).sqrt();
        let ratio = mass[m] / rho[m];
        let mut a_vec = vec![vec![0.0; len]; 3];
        let mut w0 = vec![vec![0.0; len]; 3];
        let mut wc_explicit = vec![vec![0.0; len]; 3];
        for (i, col) in &active {
            if !flows.iter().any(|f| f.i == *i) {
                let (a, b) = stripes.time_support(*i);
                let window = samples_inside(&times, a, b)
                    .ok_or_else(|| Error::Numerical(format!("stripe {i} holds no samples")))?;
                let (psi, log) = solve_backflow(&glued.v, stripes.anchor(*i), window, config)?;
                diag.set_max("backflow_steps", log.steps as f64);
                flows.push(Flow { i: *i, psi });
            }
            let flow = flows.iter().find(|f| f.i == *i).expect("solved above");
            let psi = flow
                .psi
                .at_index(m)
                .ok_or_else(|| Error::Numerical(format!("back-flow {i} misses sample {m}")))?;
            let psi_s = psi.samples();
            let grads: Vec<Vec<f64>> = (0..3)
                .flat_map(|k| {
                    let c = psi.component(k);
                    (0..3).map(move |l| c.partial(l).samples().swap_remove(0))
                })
                .collect();
            let mut coeff = vec![vec![0.0; len]; 6];
            let mut frames: Vec<Option<(Matrix3<f64>, [f64; 3])>> = vec![None; len];
            for idx in 0..len {
                let eta = col[idx % n];
                if eta == 0.0 {
                    continue;
                }
                let mut g: Matrix3<f64> = Matrix3::identity();
                for k in 0..3 {
                    for l in 0..3 {
                        g[(k, l)] += grads[3 * k + l][idx];
                    }
                }
                let mut inner = Matrix3::identity();
                if let Some(rb) = &rbar {
                    inner -= matrix_of(rb, idx) * ratio;
                }
                let rt = g * inner * g.transpose();
                let r6 = sym6(&rt);
                let dev = MikadoFamily::deviation(&r6);
                grad_dev = grad_dev.max((g - Matrix3::identity()).norm());
                let det = g.determinant();
                det_dev = det_dev.max((det - 1.0).abs());
                if dev > family.gate {
                    diag.set("admissibility_deviation_max", dev_max.max(dev));
                    return Err(Error::Admissibility {
                        t,
                        window: *i,
                        deviation: dev,
                        radius: family.gate,
                    });
                }
                dev_max = dev_max.max(dev);
                let c = family.coefficients_unchecked(&r6);
                c_min = c.iter().cloned().fold(c_min, f64::min);
                let x = grid.point(idx);
                let xi = [0, 1, 2].map(|d| lam * (x[d] + psi_s[d][idx]));
                let a = eta * amp;
                let ginv = g
                    .try_inverse()
                    .ok_or_else(|| Error::Numerical("singular back-flow gradient".into()))?;
                let mut uu = [0.0; 3];
                let mut ww = [0.0; 3];
                for j in 0..6 {
                    let gam = c[j].max(0.0).sqrt();
                    coeff[j][idx] = a * gam;
                    let (phi, u) = family.profile_and_potential(j, xi, ctr[j]);
                    for d in 0..3 {
                        uu[d] += gam * u[d];
                        ww[d] += gam * phi * DIRECTIONS[j][d] as f64;
                    }
                }
                for l in 0..3 {
                    let gu: f64 = (0..3).map(|k| g[(k, l)] * uu[k]).sum();
                    let gw: f64 = (0..3).map(|k| ginv[(l, k)] * ww[k]).sum();
                    a_vec[l][idx] += a * gu / lam;
                    w0[l][idx] += a * gw;
                    wc_explicit[l][idx] += (det - 1.0) * a * gw;
                }
                frames[idx] = Some((g, xi));
            }
            // corrector: sum_j grad(a Gamma_j) x (grad Phi^T U_j(lambda Phi)) / lambda
            let grads_a: Vec<Vec<Vec<f64>>> = coeff
                .iter()
                .map(|c| {
                    let f = transform_forward(grid, Rank::Scalar, std::slice::from_ref(c))?;
                    Ok((0..3).map(|d| f.partial(d).samples().swap_remove(0)).collect())
                })
                .collect::<Result<_>>()?;
            for (idx, fr) in frames.iter().enumerate() {
                let Some((g, xi)) = fr else { continue };
                for j in 0..6 {
                    let (_, u) = family.profile_and_potential(j, *xi, ctr[j]);
                    if u == [0.0; 3] {
                        continue;
                    }
                    let b = [0, 1, 2].map(|l| (0..3).map(|k| g[(k, l)] * u[k]).sum::<f64>() / lam);
                    let ga = [0, 1, 2].map(|d| grads_a[j][d][idx]);
                    let c = cross(ga, b);
                    for d in 0..3 {
                        wc_explicit[d][idx] += c[d];
                    }
                }
            }
        }
        let a_field = transform_forward(grid, Rank::Vector, &a_vec)?;
        let w = a_field.curl()?;
        let w0f = transform_forward(grid, Rank::Vector, &w0)?;
        let wc = w.sub(&w0f);
        let wce = transform_forward(grid, Rank::Vector, &wc_explicit)?;
        let w0_sup = w0f.sup_norm();
        let wc_sup = wc.sup_norm();
        diag.push("w_sup", w.sup_norm());
        diag.push("w_l2", w.l2_norm());
        diag.push("w0_sup", w0_sup);
        diag.push("wc_sup", wc_sup);
        diag.push(
            "ratio_corrector",
            if w0_sup > 0.0 { wc_sup * params.l * lam / w0_sup } else { 0.0 },
        );
        // spectral curl of the sampled potential against the pointwise corrector, relative to |w|
        let w_norm = w.l2_norm();
        diag.push(
            "wc_explicit_mismatch",
            if w_norm > 0.0 { wc.sub(&wce).l2_norm() / w_norm } else { 0.0 },
        );
        ws.push(w);
    }
    diag.set("admissibility_deviation_max", dev_max);
    diag.set("admissibility_gate", family.gate);
    if c_min.is_finite() {
        diag.set("admissibility_margin", c_min);
    }
    diag.set("gradphi_minus_id_max", grad_dev);
    diag.set("det_gradphi_minus_one_max", det_dev);
    let w = TimeSeriesField::new(times, 0, ws)?;
    let dw_dt = w.time_derivative()?;
    Ok(Perturbation {
        w,
        dw_dt,
        rho,
        mass,
        eta_sq,
    })
}
