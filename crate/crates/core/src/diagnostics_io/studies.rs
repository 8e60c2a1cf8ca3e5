//! Dyadic sweeps with least-squares exponent fits.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::fit_slope;
use crate::calculus_ops::{mollify, quadratic_commutator};
use crate::error::{Error, Result};
use crate::mikado::MikadoFamily;
use crate::solvers::{oscillatory_diffusion, SolverConfig};
use crate::torus_fields::{holder_norm, Field, Grid, ProductMode, Rank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Commutator,
    Mollifier,
    OscillatoryDiffusion,
    MikadoDecay,
    Holder,
}

impl StudyKind {
    pub const ALL: [StudyKind; 5] = [
        StudyKind::Commutator,
        StudyKind::Mollifier,
        StudyKind::OscillatoryDiffusion,
        StudyKind::MikadoDecay,
        StudyKind::Holder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Commutator => "commutator",
            StudyKind::Mollifier => "mollifier",
            StudyKind::OscillatoryDiffusion => "oscillatory_diffusion",
            StudyKind::MikadoDecay => "mikado_decay",
            StudyKind::Holder => "holder",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param("study", format!("unknown kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub kind: StudyKind,
    /// sweep variable
    pub x: Vec<f64>,
    /// measured quantity
    pub y: Vec<f64>,
    /// fitted exponent, sign chosen so the expected value is positive
    pub exponent: f64,
    /// the fitted exponent must reach this value (or, for the Holder study, lie within 0.05 of it)
    pub target: f64,
    pub pass: bool,
}

/// Options for [`scaling_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub seed: u64,
    /// Mikado table cutoff for the decay study
    pub k_max: usize,
    pub radius: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            k_max: 192,
            radius: 0.5,
        }
    }
}

fn random_scalar(grid: Grid, seed: u64, kmax: i64) -> Field {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut f = Field::zeros(grid, Rank::Scalar);
    for idx in 0..grid.spectral_len() {
        let k = grid.wavevector(idx);
        if k.iter().all(|c| c.abs() <= kmax) && k[2] > 0 {
            f.comps[0][idx] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    f
}

fn finish(kind: StudyKind, x: Vec<f64>, y: Vec<f64>, sign: f64, target: f64) -> Result<StudyResult> {
    if x.len() < 3 {
        return Err(Error::param("sweep", "needs at least three points"));
    }
    let exponent = sign * fit_slope(&x, &y);
    let pass = if kind == StudyKind::Holder {
        (exponent - target).abs() <= 0.05
    } else {
        exponent >= target
    };
    Ok(StudyResult {
        kind,
        x,
        y,
        exponent,
        target,
        pass,
    })
}

pub fn scaling_study(kind: StudyKind, options: &StudyOptions) -> Result<StudyResult> {
    match kind {
        StudyKind::Commutator => {
            let grid = Grid::new(128)?;
            let f = random_scalar(grid, options.seed, 1);
            let g = random_scalar(grid, options.seed.wrapping_add(1), 1);
            let ls = vec![0.4, 0.2, 0.1];
            let y = ls
                .iter()
                .map(|&l| Ok(quadratic_commutator(&f, &g, l, ProductMode::Dealiased)?.sup_norm()))
                .collect::<Result<Vec<_>>>()?;
            finish(kind, ls, y, 1.0, 1.9)
        }
        StudyKind::Mollifier => {
            // C^1 but not C^2 across x1 = 0 and x1 = pi
            let grid = Grid::new(128)?;
            let f = Field::scalar_fn(grid, |x| x[0].sin() * x[0].sin().abs() + x[1].cos());
            let ls = vec![0.8, 0.4, 0.2];
            let y = ls
                .iter()
                .map(|&l| Ok(mollify(&f, l)?.sub(&f).sup_norm()))
                .collect::<Result<Vec<_>>>()?;
            finish(kind, ls, y, 1.0, 0.95)
        }
        StudyKind::OscillatoryDiffusion => {
            let grid = Grid::new(128)?;
            let v = Field::from_fn(grid, Rank::Vector, |x| {
                vec![0.5 * x[2].sin(), 0.5 * x[0].cos(), 0.5 * x[1].sin()]
            });
            let g = Field::scalar_fn(grid, |x| x[1].cos() + 0.5 * x[2].sin());
            let cfg = SolverConfig {
                cfl: 0.5,
                dealias: false,
            };
            let lams = [8i64, 16, 32];
            let mut y = Vec::new();
            for &l in &lams {
                y.push(oscillatory_diffusion(Some(&v), &g, l, [1, 0, 0], 0.2, 4, &cfg)?.sup_l2);
            }
            finish(kind, lams.iter().map(|&l| l as f64).collect(), y, -1.0, 0.9)
        }
        StudyKind::MikadoDecay => {
            let fam = MikadoFamily::build(options.radius, options.k_max, options.seed)?;
            let (x, y): (Vec<f64>, Vec<f64>) = fam
                .shell_maxima()
                .into_iter()
                .filter(|(k, _)| *k >= 16.0 && *k <= 128.0)
                .unzip();
            finish(kind, x, y, -1.0, 4.0)
        }
        StudyKind::Holder => {
            let grid = Grid::new(128)?;
            let alpha = 0.3;
            let lams = vec![4.0, 8.0, 16.0, 32.0];
            let y = lams
                .iter()
                .map(|&l| {
                    let f = Field::scalar_fn(grid, move |x| (l * x[0]).sin());
                    holder_norm(&f, alpha).seminorm.unwrap_or(0.0)
                })
                .collect();
            finish(kind, lams, y, 1.0, alpha)
        }
    }
}
