//! Pointwise nonlinear operations, evaluated on a 3/2-padded grid or on the native grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Fft3, Field, Grid, Rank};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductMode {
    /// 3/2-rule zero padding; exact for quadratic terms.
    Dealiased,
    /// Products of native grid samples.
    Native,
}

fn index_for(m: usize, k: [i64; 3]) -> usize {
    let mi = m as i64;
    let ix = k[0].rem_euclid(mi) as usize;
    let iy = k[1].rem_euclid(mi) as usize;
    (ix * m + iy) * (m / 2 + 1) + k[2] as usize
}

fn pad(grid: Grid, spec: &[Complex64], m: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m * m * (m / 2 + 1)];
    for (idx, z) in spec.iter().enumerate() {
        let k = grid.wavevector(idx);
        if grid.is_nyquist(k) {
            continue;
        }
        out[index_for(m, k)] = *z;
    }
    out
}

fn truncate(grid: Grid, spec: &[Complex64], m: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); grid.spectral_len()];
    for (idx, z) in out.iter_mut().enumerate() {
        let k = grid.wavevector(idx);
        if grid.is_nyquist(k) {
            continue;
        }
        *z = spec[index_for(m, k)];
    }
    out
}

/// Evaluate `f` pointwise on the concatenated components of `inputs`.
///
/// `f` receives the input values at one point and writes `out_rank.components()` outputs.
pub fn pointwise<F>(inputs: &[&Field], out_rank: Rank, mode: ProductMode, f: F) -> Result<Field>
where
    F: Fn(&[f64], &mut [f64]),
{
    let grid = inputs
        .first()
        .map(|x| x.grid)
        .ok_or_else(|| Error::Numerical("pointwise needs at least one input".into()))?;
    if inputs.iter().any(|x| x.grid != grid) {
        return Err(Error::GridMismatch("pointwise inputs".into()));
    }
    let m = match mode {
        ProductMode::Dealiased => 3 * grid.n / 2,
        ProductMode::Native => grid.n,
    };
    let plan = Fft3::get(m);
    let mut phys: Vec<Vec<f64>> = Vec::new();
    for field in inputs {
        for c in &field.comps {
            phys.push(match mode {
                ProductMode::Dealiased => plan.inverse(&pad(grid, c, m)),
                ProductMode::Native => plan.inverse(c),
            });
        }
    }
    let nout = out_rank.components();
    let npts = m * m * m;
    let mut out = vec![vec![0.0; npts]; nout];
    let mut vals = vec![0.0; phys.len()];
    let mut res = vec![0.0; nout];
    for p in 0..npts {
        for (v, comp) in vals.iter_mut().zip(&phys) {
            *v = comp[p];
        }
        f(&vals, &mut res);
        for (o, r) in out.iter_mut().zip(&res) {
            o[p] = *r;
        }
    }
    drop(phys);
    let norm = 1.0 / npts as f64;
    let comps = out
        .iter()
        .map(|o| {
            let mut s = plan.forward(o);
            s.iter_mut().for_each(|z| *z *= norm);
            match mode {
                ProductMode::Dealiased => truncate(grid, &s, m),
                ProductMode::Native => s,
            }
        })
        .collect();
    let mut field = Field::from_spectral(grid, out_rank, comps)?;
    field.zero_nyquist();
    Ok(field)
}

impl Field {
    /// v (x) v as a symmetric tensor.
    pub fn outer_square(&self, mode: ProductMode) -> Result<Field> {
        self.expect_rank(Rank::Vector)?;
        pointwise(&[self], Rank::SymTensor, mode, |v, o| {
            for (c, (i, j)) in super::SYM_PAIRS.iter().enumerate() {
                o[c] = v[*i] * v[*j];
            }
        })
    }

    /// (v (x) w + w (x) v) / 2.
    pub fn sym_outer(&self, other: &Field, mode: ProductMode) -> Result<Field> {
        self.expect_rank(Rank::Vector)?;
        other.expect_rank(Rank::Vector)?;
        pointwise(&[self, other], Rank::SymTensor, mode, |v, o| {
            for (c, (i, j)) in super::SYM_PAIRS.iter().enumerate() {
                o[c] = 0.5 * (v[*i] * v[3 + *j] + v[*j] * v[3 + *i]);
            }
        })
    }

    /// Pointwise product of a scalar field with a field of any rank.
    pub fn times_scalar(&self, s: &Field, mode: ProductMode) -> Result<Field> {
        s.expect_rank(Rank::Scalar)?;
        let nc = self.ncomp();
        pointwise(&[s, self], self.rank, mode, |v, o| {
            for c in 0..nc {
                o[c] = v[0] * v[1 + c];
            }
        })
    }

    /// Pointwise v . w.
    pub fn dot(&self, other: &Field, mode: ProductMode) -> Result<Field> {
        self.expect_rank(Rank::Vector)?;
        other.expect_rank(Rank::Vector)?;
        pointwise(&[self, other], Rank::Scalar, mode, |v, o| {
            o[0] = v[0] * v[3] + v[1] * v[4] + v[2] * v[5];
        })
    }

    /// (v . grad) f for scalar or vector f.
    pub fn advected_by(&self, v: &Field, mode: ProductMode) -> Result<Field> {
        v.expect_rank(Rank::Vector)?;
        match self.rank {
            Rank::Scalar => {
                let g = self.gradient()?;
                v.dot(&g, mode)
            }
            Rank::Vector => {
                let grads: Vec<Field> = (0..3).map(|d| self.partial(d)).collect();
                let refs: Vec<&Field> = std::iter::once(v).chain(grads.iter()).collect();
                pointwise(&refs, Rank::Vector, mode, |x, o| {
                    // x = [v0 v1 v2, d0 f0 f1 f2, d1 f.., d2 f..]
                    for c in 0..3 {
                        o[c] = x[0] * x[3 + c] + x[1] * x[6 + c] + x[2] * x[9 + c];
                    }
                })
            }
            Rank::SymTensor => Err(Error::RankMismatch {
                expected: "scalar or vector".into(),
                found: "sym_tensor".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dealiased_square_of_sine_is_exact() {
        let grid = Grid::new(8).unwrap();
        let f = Field::scalar_fn(grid, |x| (3.0 * x[0]).sin());
        let sq = f.times_scalar(&f, ProductMode::Dealiased).unwrap();
        // sin^2(3x) = 1/2 - cos(6x)/2; mode 6 exceeds n/2 and is discarded
        let expect = Field::scalar_fn(grid, |_| 0.5);
        assert!(sq.sub(&expect).max_coeff() < 1e-14);
        let native = f.times_scalar(&f, ProductMode::Native).unwrap();
        // native products alias cos(6x) onto cos(2x)
        assert!(native.sub(&expect).max_coeff() > 0.1);
    }

    #[test]
    fn advection_matches_hand_computation() {
        let grid = Grid::new(16).unwrap();
        let v = Field::from_fn(grid, Rank::Vector, |x| vec![x[1].sin(), 0.0, 0.0]);
        let th = Field::scalar_fn(grid, |x| x[0].cos());
        let adv = th.advected_by(&v, ProductMode::Dealiased).unwrap();
        let expect = Field::scalar_fn(grid, |x| -x[1].sin() * x[0].sin());
        assert!(adv.sub(&expect).max_coeff() < 1e-14);
    }
}
