//! Real fields on the periodic box [0, 2pi)^3 stored as half-spectrum Fourier coefficients.
//!
//! Convention: f(x) = sum_k c_k exp(i k.x). Integrals carry the box volume (2pi)^3, so
//! the L2 norm of sin(x3) is sqrt(4 pi^3).

mod fft;
mod norms;
mod products;
mod series;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use fft::Fft3;
pub use norms::{holder_norm, l2_norm, mean, multi_indices, sobolev_norm, HolderEstimate};
pub use products::{pointwise, ProductMode};
pub use series::{TimeGrid, TimeSeriesField};

pub const VOLUME: f64 = 8.0 * PI * PI * PI;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
}

impl Grid {
    /// Power of two, at least 8.
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::param("grid.n", format!("{n} is not a power of two >= 8")));
        }
        Ok(Grid { n })
    }

    pub fn step(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn half(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn spectral_len(&self) -> usize {
        self.n * self.n * self.half()
    }

    pub fn real_len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        let h = self.step();
        [
            (idx / (n * n)) as f64 * h,
            ((idx / n) % n) as f64 * h,
            (idx % n) as f64 * h,
        ]
    }

    pub fn point_indices(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    fn signed(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Integer wavevector of a spectral index. The Nyquist index maps to +n/2.
    pub fn wavevector(&self, idx: usize) -> [i64; 3] {
        let h = self.half();
        let kz = (idx % h) as i64;
        let r = idx / h;
        [self.signed(r / self.n), self.signed(r % self.n), kz]
    }

    pub fn is_nyquist(&self, k: [i64; 3]) -> bool {
        let m = (self.n / 2) as i64;
        k.iter().any(|&c| c.abs() == m)
    }

    /// Multiplicity of a half-spectrum entry in the full spectrum.
    pub fn weight(&self, idx: usize) -> f64 {
        let kz = idx % self.half();
        if kz == 0 || kz == self.n / 2 {
            1.0
        } else {
            2.0
        }
    }

    pub fn spectral_index(&self, k: [i64; 3]) -> Option<usize> {
        let n = self.n as i64;
        if k[2] < 0 || k[2] > n / 2 || k[0].abs() > n / 2 || k[1].abs() > n / 2 {
            return None;
        }
        let ix = k[0].rem_euclid(n) as usize;
        let iy = k[1].rem_euclid(n) as usize;
        Some((ix * self.n + iy) * self.half() + k[2] as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rank {
    Scalar,
    Vector,
    SymTensor,
}

impl Rank {
    pub fn components(self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => 3,
            Rank::SymTensor => 6,
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            Rank::Scalar => 0,
            Rank::Vector => 1,
            Rank::SymTensor => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Rank> {
        match tag {
            0 => Some(Rank::Scalar),
            1 => Some(Rank::Vector),
            2 => Some(Rank::SymTensor),
            _ => None,
        }
    }
}

/// Symmetric tensor component order: xx, xy, xz, yy, yz, zz.
pub fn sym_index(i: usize, j: usize) -> usize {
    const T: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
    T[i][j]
}

pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub rank: Rank,
    pub comps: Vec<Vec<Complex64>>,
}

impl Field {
    pub fn zeros(grid: Grid, rank: Rank) -> Self {
        Field {
            grid,
            rank,
            comps: vec![vec![ZERO; grid.spectral_len()]; rank.components()],
        }
    }

    pub fn from_spectral(grid: Grid, rank: Rank, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        if comps.len() != rank.components() || comps.iter().any(|c| c.len() != grid.spectral_len()) {
            return Err(Error::GridMismatch("spectral component sizes".into()));
        }
        Ok(Field { grid, rank, comps })
    }

    /// Sample a function at the grid points and transform.
    pub fn from_fn<F>(grid: Grid, rank: Rank, f: F) -> Self
    where
        F: Fn([f64; 3]) -> Vec<f64>,
    {
        let nc = rank.components();
        let mut samples = vec![vec![0.0; grid.real_len()]; nc];
        for idx in 0..grid.real_len() {
            let v = f(grid.point(idx));
            for c in 0..nc {
                samples[c][idx] = v[c];
            }
        }
        transform_forward(grid, rank, &samples).expect("sizes are consistent")
    }

    pub fn scalar_fn<F: Fn([f64; 3]) -> f64>(grid: Grid, f: F) -> Self {
        Self::from_fn(grid, Rank::Scalar, |x| vec![f(x)])
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn component(&self, c: usize) -> Field {
        Field {
            grid: self.grid,
            rank: Rank::Scalar,
            comps: vec![self.comps[c].clone()],
        }
    }

    pub fn from_components(rank: Rank, parts: Vec<Field>) -> Result<Self> {
        if parts.len() != rank.components() || parts.is_empty() {
            return Err(Error::RankMismatch {
                expected: format!("{rank:?}"),
                found: format!("{} components", parts.len()),
            });
        }
        let grid = parts[0].grid;
        let mut comps = Vec::with_capacity(parts.len());
        for p in parts {
            if p.grid != grid || p.rank != Rank::Scalar {
                return Err(Error::GridMismatch("component grids differ".into()));
            }
            comps.extend(p.comps);
        }
        Ok(Field { grid, rank, comps })
    }

    pub fn samples(&self) -> Vec<Vec<f64>> {
        transform_inverse(self)
    }

    pub fn check_same(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{} vs {}",
                self.grid.n, other.grid.n
            )));
        }
        if self.rank != other.rank {
            return Err(Error::RankMismatch {
                expected: format!("{:?}", self.rank),
                found: format!("{:?}", other.rank),
            });
        }
        Ok(())
    }

    pub fn expect_rank(&self, rank: Rank) -> Result<()> {
        if self.rank != rank {
            return Err(Error::RankMismatch {
                expected: format!("{rank:?}"),
                found: format!("{:?}", self.rank),
            });
        }
        Ok(())
    }

    pub fn axpy(&mut self, a: f64, other: &Field) {
        assert_eq!(self.grid, other.grid);
        assert_eq!(self.rank, other.rank);
        for (x, y) in self.comps.iter_mut().zip(&other.comps) {
            for (u, v) in x.iter_mut().zip(y) {
                *u += v * a;
            }
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        let mut r = self.clone();
        r.axpy(1.0, other);
        r
    }

    pub fn sub(&self, other: &Field) -> Field {
        let mut r = self.clone();
        r.axpy(-1.0, other);
        r
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.comps {
            for u in c.iter_mut() {
                *u *= a;
            }
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        let mut r = self.clone();
        r.scale(a);
        r
    }

    /// Spatial average of each component.
    pub fn mean(&self) -> Vec<f64> {
        self.comps.iter().map(|c| c[0].re).collect()
    }

    pub fn remove_mean(&mut self) {
        for c in &mut self.comps {
            c[0] = ZERO;
        }
    }

    /// Largest absolute coefficient over all components.
    pub fn max_coeff(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Multiply each mode by m(k); m returns the same factor for every component.
    pub fn apply_multiplier<M: Fn([i64; 3]) -> Complex64>(&self, m: M) -> Field {
        let mut r = self.clone();
        for idx in 0..self.grid.spectral_len() {
            let f = m(self.grid.wavevector(idx));
            for c in &mut r.comps {
                c[idx] *= f;
            }
        }
        r
    }

    /// D^gamma applied componentwise. Nyquist modes are zeroed.
    pub fn derivative(&self, gamma: [u32; 3]) -> Field {
        let g = self.grid;
        self.apply_multiplier(|k| {
            if g.is_nyquist(k) {
                return ZERO;
            }
            let mut f = Complex64::new(1.0, 0.0);
            for d in 0..3 {
                for _ in 0..gamma[d] {
                    f *= Complex64::new(0.0, k[d] as f64);
                }
            }
            f
        })
    }

    pub fn partial(&self, d: usize) -> Field {
        let mut g = [0u32; 3];
        g[d] = 1;
        self.derivative(g)
    }

    pub fn gradient(&self) -> Result<Field> {
        self.expect_rank(Rank::Scalar)?;
        Field::from_components(Rank::Vector, (0..3).map(|d| self.partial(d)).collect())
    }

    /// Divergence of a vector (scalar result) or of a symmetric tensor (row-wise, vector result).
    pub fn divergence(&self) -> Result<Field> {
        let g = self.grid;
        match self.rank {
            Rank::Vector => {
                let mut out = vec![ZERO; g.spectral_len()];
                for idx in 0..g.spectral_len() {
                    let k = g.wavevector(idx);
                    if g.is_nyquist(k) {
                        continue;
                    }
                    let mut s = ZERO;
                    for d in 0..3 {
                        s += self.comps[d][idx] * Complex64::new(0.0, k[d] as f64);
                    }
                    out[idx] = s;
                }
                Field::from_spectral(g, Rank::Scalar, vec![out])
            }
            Rank::SymTensor => {
                let mut out = vec![vec![ZERO; g.spectral_len()]; 3];
                for idx in 0..g.spectral_len() {
                    let k = g.wavevector(idx);
                    if g.is_nyquist(k) {
                        continue;
                    }
                    for i in 0..3 {
                        let mut s = ZERO;
                        for j in 0..3 {
                            s += self.comps[sym_index(i, j)][idx] * Complex64::new(0.0, k[j] as f64);
                        }
                        out[i][idx] = s;
                    }
                }
                Field::from_spectral(g, Rank::Vector, out)
            }
            Rank::Scalar => Err(Error::RankMismatch {
                expected: "vector or sym_tensor".into(),
                found: "scalar".into(),
            }),
        }
    }

    pub fn curl(&self) -> Result<Field> {
        self.expect_rank(Rank::Vector)?;
        let g = self.grid;
        let mut out = vec![vec![ZERO; g.spectral_len()]; 3];
        for idx in 0..g.spectral_len() {
            let k = g.wavevector(idx);
            if g.is_nyquist(k) {
                continue;
            }
            let ik = [0, 1, 2].map(|d| Complex64::new(0.0, k[d] as f64));
            let v = [0, 1, 2].map(|d| self.comps[d][idx]);
            out[0][idx] = ik[1] * v[2] - ik[2] * v[1];
            out[1][idx] = ik[2] * v[0] - ik[0] * v[2];
            out[2][idx] = ik[0] * v[1] - ik[1] * v[0];
        }
        Field::from_spectral(g, Rank::Vector, out)
    }

    pub fn laplacian(&self) -> Field {
        let g = self.grid;
        self.apply_multiplier(|k| {
            if g.is_nyquist(k) {
                ZERO
            } else {
                Complex64::new(-((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64), 0.0)
            }
        })
    }

    /// Zero-mean solution of Laplace(u) = f (the mean of f is ignored).
    pub fn inverse_laplacian(&self) -> Field {
        let g = self.grid;
        self.apply_multiplier(|k| {
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0 || g.is_nyquist(k) {
                ZERO
            } else {
                Complex64::new(-1.0 / k2 as f64, 0.0)
            }
        })
    }

    /// Volume-normalized L2 norm (Euclidean/Frobenius over components).
    pub fn l2_norm(&self) -> f64 {
        self.hs_norm_sq(0.0).sqrt()
    }

    /// sum over k of |k|^{2s} |c_k|^2 times the box volume, summed over components.
    /// Off-diagonal tensor components count twice. For s > 0 the mean is excluded.
    pub fn hs_norm_sq(&self, s: f64) -> f64 {
        let g = self.grid;
        let mut total = 0.0;
        for (c, comp) in self.comps.iter().enumerate() {
            let cw = component_weight(self.rank, c);
            for (idx, z) in comp.iter().enumerate() {
                let k = g.wavevector(idx);
                let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
                let w = if s == 0.0 {
                    1.0
                } else if k2 == 0.0 {
                    0.0
                } else {
                    k2.powf(s)
                };
                total += cw * g.weight(idx) * w * z.norm_sqr();
            }
        }
        total * VOLUME
    }

    /// Volume integral of the pointwise inner product with another field of the same rank.
    pub fn inner(&self, other: &Field) -> f64 {
        let g = self.grid;
        let mut total = 0.0;
        for (c, (a, b)) in self.comps.iter().zip(&other.comps).enumerate() {
            let cw = component_weight(self.rank, c);
            for idx in 0..a.len() {
                total += cw * g.weight(idx) * (a[idx] * b[idx].conj()).re;
            }
        }
        total * VOLUME
    }

    /// Max over grid points of the pointwise Euclidean/Frobenius norm.
    pub fn sup_norm(&self) -> f64 {
        sup_of_samples(self.rank, &self.samples())
    }

    pub fn trace(&self) -> Result<Field> {
        self.expect_rank(Rank::SymTensor)?;
        let mut t = self.component(0);
        t.axpy(1.0, &self.component(3));
        t.axpy(1.0, &self.component(5));
        Ok(t)
    }

    /// Set modes on Nyquist planes to zero.
    pub fn zero_nyquist(&mut self) {
        let g = self.grid;
        for idx in 0..g.spectral_len() {
            if g.is_nyquist(g.wavevector(idx)) {
                for c in &mut self.comps {
                    c[idx] = ZERO;
                }
            }
        }
    }

    /// Scalar field times identity.
    pub fn scalar_times_identity(&self) -> Result<Field> {
        self.expect_rank(Rank::Scalar)?;
        let z = vec![ZERO; self.grid.spectral_len()];
        let s = self.comps[0].clone();
        Field::from_spectral(
            self.grid,
            Rank::SymTensor,
            vec![s.clone(), z.clone(), z.clone(), s.clone(), z, s],
        )
    }

    /// Embed a scalar as the given Cartesian component of a vector.
    pub fn as_vector_component(&self, d: usize) -> Result<Field> {
        self.expect_rank(Rank::Scalar)?;
        let mut comps = vec![vec![ZERO; self.grid.spectral_len()]; 3];
        comps[d] = self.comps[0].clone();
        Field::from_spectral(self.grid, Rank::Vector, comps)
    }
}

pub(crate) fn component_weight(rank: Rank, c: usize) -> f64 {
    match (rank, c) {
        (Rank::SymTensor, 1 | 2 | 4) => 2.0,
        _ => 1.0,
    }
}

pub fn sup_of_samples(rank: Rank, samples: &[Vec<f64>]) -> f64 {
    let len = samples[0].len();
    let mut best = 0.0f64;
    for idx in 0..len {
        let mut s = 0.0;
        for (c, comp) in samples.iter().enumerate() {
            s += component_weight(rank, c) * comp[idx] * comp[idx];
        }
        best = best.max(s);
    }
    best.sqrt()
}

/// Physical samples to coefficients, one array per component.
pub fn transform_forward(grid: Grid, rank: Rank, samples: &[Vec<f64>]) -> Result<Field> {
    if samples.len() != rank.components() {
        return Err(Error::RankMismatch {
            expected: format!("{rank:?}"),
            found: format!("{} components", samples.len()),
        });
    }
    if samples.iter().any(|s| s.len() != grid.real_len()) {
        return Err(Error::GridMismatch("sample array length".into()));
    }
    let plan = Fft3::get(grid.n);
    let norm = 1.0 / grid.real_len() as f64;
    let comps = samples
        .iter()
        .map(|s| {
            let mut c = plan.forward(s);
            c.iter_mut().for_each(|z| *z *= norm);
            c
        })
        .collect();
    Ok(Field { grid, rank, comps })
}

pub fn transform_inverse(field: &Field) -> Vec<Vec<f64>> {
    let plan = Fft3::get(field.grid.n);
    field.comps.iter().map(|c| plan.inverse(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn g(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(12).is_err());
        assert!(Grid::new(4).is_err());
        assert!(Grid::new(16).is_ok());
    }

    #[test]
    fn round_trip_random() {
        let grid = g(16);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let s: Vec<f64> = (0..grid.real_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = transform_forward(grid, Rank::Scalar, &[s.clone()]).unwrap();
        let back = transform_inverse(&f);
        let err = s.iter().zip(&back[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn sine_norm_and_coefficients() {
        let grid = g(16);
        let f = Field::scalar_fn(grid, |x| x[2].sin());
        assert!((f.l2_norm() - (4.0 * PI.powi(3)).sqrt()).abs() < 1e-12);
        let i = grid.spectral_index([0, 0, 1]).unwrap();
        assert!((f.comps[0][i] - Complex64::new(0.0, -0.5)).norm() < 1e-14);
        assert!(f.mean()[0].abs() < 1e-15);
    }

    #[test]
    fn derivative_of_sine() {
        let grid = g(16);
        let f = Field::scalar_fn(grid, |x| x[0].sin());
        let d = f.partial(0);
        let c = Field::scalar_fn(grid, |x| x[0].cos());
        assert!(d.sub(&c).max_coeff() < 1e-14);
        let lap = f.laplacian();
        assert!(lap.add(&f).max_coeff() < 1e-14);
    }

    #[test]
    fn curl_div_identities() {
        let grid = g(16);
        let v = Field::from_fn(grid, Rank::Vector, |x| {
            vec![(x[1] + 2.0 * x[2]).sin(), x[0].cos() * x[2].sin(), (3.0 * x[0]).cos()]
        });
        let dc = v.curl().unwrap().divergence().unwrap();
        assert!(dc.max_coeff() < 1e-13);
        let s = Field::scalar_fn(grid, |x| (x[0] - x[1]).sin() * x[2].cos());
        let cg = s.gradient().unwrap().curl().unwrap();
        assert!(cg.max_coeff() < 1e-13);
    }

    #[test]
    fn wavevector_index_round_trip() {
        let grid = g(8);
        for idx in 0..grid.spectral_len() {
            let k = grid.wavevector(idx);
            assert_eq!(grid.spectral_index(k), Some(idx));
        }
    }

    proptest! {
        #[test]
        fn transform_is_linear(seed in 0u64..1000, a in -3.0f64..3.0) {
            let grid = g(8);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..grid.real_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..grid.real_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fx = transform_forward(grid, Rank::Scalar, &[x.clone()]).unwrap();
            let fy = transform_forward(grid, Rank::Scalar, &[y.clone()]).unwrap();
            let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
            let fz = transform_forward(grid, Rank::Scalar, &[z]).unwrap();
            let mut comb = fy.clone();
            comb.axpy(a, &fx);
            prop_assert!(comb.sub(&fz).max_coeff() < 1e-13);
        }

        #[test]
        fn parseval(seed in 0u64..1000) {
            let grid = g(8);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..grid.real_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = transform_forward(grid, Rank::Scalar, &[x.clone()]).unwrap();
            let direct: f64 = x.iter().map(|v| v * v).sum::<f64>() * grid.step().powi(3);
            prop_assert!((f.l2_norm().powi(2) - direct).abs() < 1e-10 * direct.max(1.0));
        }

        #[test]
        fn mean_is_linear(seed in 0u64..1000, a in -2.0f64..2.0) {
            let grid = g(8);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..grid.real_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = transform_forward(grid, Rank::Scalar, &[x.clone()]).unwrap();
            let avg = x.iter().sum::<f64>() / x.len() as f64;
            prop_assert!((f.scaled(a).mean()[0] - a * avg).abs() < 1e-13);
        }
    }
}
