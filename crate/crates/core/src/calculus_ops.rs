//! Spectral mollification, projections and the inverse-divergence operator.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::torus_fields::{sym_index, Field, ProductMode, Rank, SYM_PAIRS};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Default tolerance on the mean of an inverse-divergence argument.
pub const MEAN_TOL: f64 = 1e-10;

const QUAD_POINTS: usize = 4096;

fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// Fourier transform of the unit-mass radial bump exp(-1/(1-|x|^2)) at |xi| = kappa.
///
/// Trapezoid rule on the even extension; the integrand is smooth and flat at the ends,
/// so the rule converges faster than any power.
pub fn mollifier_symbol(kappa: f64) -> f64 {
    let h = 1.0 / QUAD_POINTS as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..QUAD_POINTS {
        let r = j as f64 * h;
        let w = if j == 0 { 0.5 } else { 1.0 };
        let base = w * bump(r) * r * r;
        let x = kappa * r;
        let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
        num += base * sinc;
        den += base;
    }
    if kappa == 0.0 {
        1.0
    } else {
        num / den
    }
}

fn symbol_table(n: usize, l: f64) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, l.to_bits());
    if let Some(t) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return t.clone();
    }
    let max_k2 = 3 * (n / 2) * (n / 2);
    let mut occurs = vec![false; max_k2 + 1];
    let half = (n / 2) as i64;
    for a in 0..=half {
        for b in 0..=half {
            for c in 0..=half {
                occurs[(a * a + b * b + c * c) as usize] = true;
            }
        }
    }
    let table: Vec<f64> = occurs
        .iter()
        .enumerate()
        .map(|(k2, &o)| if o { mollifier_symbol(l * (k2 as f64).sqrt()) } else { 0.0 })
        .collect();
    let t = Arc::new(table);
    cache
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(key, t.clone());
    t
}

/// f * phi_l. Requires l above the grid step.
pub fn mollify(field: &Field, l: f64) -> Result<Field> {
    let h = field.grid.step();
    if !(l > h) {
        return Err(Error::UnresolvedMollifier { l, h });
    }
    Ok(mollify_spectral(field, l))
}

/// f * phi_l as a Fourier multiplier, for any l >= 0.
pub fn mollify_spectral(field: &Field, l: f64) -> Field {
    let table = symbol_table(field.grid.n, l);
    field.apply_multiplier(|k| {
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as usize;
        Complex64::new(table[k2], 0.0)
    })
}

/// Leray projection onto divergence-free fields; the mean is kept.
pub fn leray_project(v: &Field) -> Result<Field> {
    v.expect_rank(Rank::Vector)?;
    let g = v.grid;
    let mut out = v.clone();
    for idx in 0..g.spectral_len() {
        let k = g.wavevector(idx);
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        if k2 == 0.0 {
            continue;
        }
        if g.is_nyquist(k) {
            for c in &mut out.comps {
                c[idx] = ZERO;
            }
            continue;
        }
        let kv: Complex64 = (0..3).map(|d| v.comps[d][idx] * k[d] as f64).sum();
        for d in 0..3 {
            out.comps[d][idx] -= kv * (k[d] as f64 / k2);
        }
    }
    Ok(out)
}

/// z = (-Laplace)^{-1} curl v, so curl z = v - mean(v) for divergence-free v.
pub fn biot_savart(v: &Field) -> Result<Field> {
    v.expect_rank(Rank::Vector)?;
    let g = v.grid;
    let mut out = Field::zeros(g, Rank::Vector);
    for idx in 0..g.spectral_len() {
        let k = g.wavevector(idx);
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        if k2 == 0.0 || g.is_nyquist(k) {
            continue;
        }
        let ik = [0, 1, 2].map(|d| Complex64::new(0.0, k[d] as f64 / k2));
        let c = [0, 1, 2].map(|d| v.comps[d][idx]);
        out.comps[0][idx] = ik[1] * c[2] - ik[2] * c[1];
        out.comps[1][idx] = ik[2] * c[0] - ik[0] * c[2];
        out.comps[2][idx] = ik[0] * c[1] - ik[1] * c[0];
    }
    Ok(out)
}

/// Symmetric trace-free R(f) with div R(f) = f for mean-free f.
pub fn inverse_divergence(f: &Field) -> Result<Field> {
    inverse_divergence_tol(f, MEAN_TOL)
}

/// As [`inverse_divergence`], with an explicit tolerance on |mean(f)| (relative to max(1, max|c_k|)).
pub fn inverse_divergence_tol(f: &Field, tol: f64) -> Result<Field> {
    f.expect_rank(Rank::Vector)?;
    let mean = f.mean();
    let scale = f.max_coeff().max(1.0);
    if mean.iter().any(|m| m.abs() > tol * scale) {
        return Err(Error::NonzeroMean { mean, tol });
    }
    let g = f.grid;
    let mut out = Field::zeros(g, Rank::SymTensor);
    let i = Complex64::new(0.0, 1.0);
    for idx in 0..g.spectral_len() {
        let k = g.wavevector(idx);
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        if k2 == 0.0 || g.is_nyquist(k) {
            continue;
        }
        let kf = k.map(|c| c as f64);
        let v = [0, 1, 2].map(|d| f.comps[d][idx]);
        let kv = kf[0] * v[0] + kf[1] * v[1] + kf[2] * v[2];
        for (c, &(a, b)) in SYM_PAIRS.iter().enumerate() {
            let delta = if a == b { 1.0 } else { 0.0 };
            let val = i * 0.5 * kf[a] * kf[b] * kv / (k2 * k2) + i * 0.5 * kv * delta / k2
                - i * (kf[a] * v[b] + kf[b] * v[a]) / k2;
            out.comps[c][idx] = val;
        }
    }
    Ok(out)
}

/// T - tr(T)/3 Id.
pub fn traceless(t: &Field) -> Result<Field> {
    let tr = t.trace()?;
    let mut out = t.clone();
    for d in 0..3 {
        let c = sym_index(d, d);
        for (u, v) in out.comps[c].iter_mut().zip(&tr.comps[0]) {
            *u -= v / 3.0;
        }
    }
    Ok(out)
}

/// Trace-free part of the symmetrized product (f (x) g + g (x) f)/2.
pub fn traceless_product(f: &Field, g: &Field, mode: ProductMode) -> Result<Field> {
    traceless(&f.sym_outer(g, mode)?)
}

/// (f * phi_l)(g * phi_l) - (f g) * phi_l for scalar fields.
pub fn quadratic_commutator(f: &Field, g: &Field, l: f64, mode: ProductMode) -> Result<Field> {
    let fl = mollify(f, l)?;
    let gl = mollify(g, l)?;
    let a = gl.times_scalar(&fl, mode)?;
    let b = mollify(&g.times_scalar(f, mode)?, l)?;
    Ok(a.sub(&b))
}
