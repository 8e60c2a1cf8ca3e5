//! Problem data, the parameter schedule and the admissibility constraints.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::SolverConfig;

/// Target energy profile e(t) = c + sum_n A_n cos(2 pi n t / T).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyProfile {
    pub constant: f64,
    #[serde(default)]
    pub cos_amplitudes: Vec<f64>,
}

impl EnergyProfile {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            cos_amplitudes: Vec::new(),
        }
    }

    pub fn value(&self, t: f64, period: f64) -> f64 {
        let w = 2.0 * PI / period;
        self.constant
            + self
                .cos_amplitudes
                .iter()
                .enumerate()
                .map(|(i, a)| a * (w * (i + 1) as f64 * t).cos())
                .sum::<f64>()
    }

    pub fn derivative(&self, t: f64, period: f64) -> f64 {
        let w = 2.0 * PI / period;
        -self
            .cos_amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let k = w * (i + 1) as f64;
                a * k * (k * t).sin()
            })
            .sum::<f64>()
    }
}

/// Initial temperature theta0(x3) = sum_n B_n sin(n x3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta0 {
    pub sine_amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemData {
    pub beta: f64,
    pub b: f64,
    pub a: f64,
    pub alpha: f64,
    pub t_final: f64,
    pub q_max: usize,
    pub e: EnergyProfile,
    pub theta0: Theta0,
}

const DENSE_T: usize = 4096;

impl ProblemData {
    /// Upper admissible value of b for the given beta.
    pub fn b_max(beta: f64) -> f64 {
        (beta + (4.0 * beta - 3.0 * beta * beta).sqrt()) / (4.0 * beta)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.beta, self.b, self.a, self.alpha, self.t_final, self.e.constant];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("data", "non-finite value"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0 / 3.0) {
            return Err(Error::param("beta", format!("{} not in (0, 1/3)", self.beta)));
        }
        let bmax = Self::b_max(self.beta);
        if !(self.b > 1.0 && self.b < bmax) {
            return Err(Error::param("b", format!("{} not in (1, {bmax:.6})", self.b)));
        }
        if self.alpha <= 0.0 {
            return Err(Error::param("alpha", "must be positive"));
        }
        if self.a <= 1.0 {
            return Err(Error::param("a", "must exceed 1"));
        }
        if self.t_final <= 0.0 {
            return Err(Error::param("T", "must be positive"));
        }
        if self.e.cos_amplitudes.iter().any(|x| !x.is_finite())
            || self.theta0.sine_amplitudes.iter().any(|x| !x.is_finite())
        {
            return Err(Error::param("data", "non-finite amplitude"));
        }
        let m1 = self.small_m1();
        if m1 <= 0.0 {
            return Err(Error::param("e", format!("inf e = {m1} is not positive")));
        }
        Ok(())
    }

    pub fn energy(&self, t: f64) -> f64 {
        self.e.value(t, self.t_final)
    }

    pub fn energy_derivative(&self, t: f64) -> f64 {
        self.e.derivative(t, self.t_final)
    }

    fn dense_times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=DENSE_T).map(move |i| self.t_final * i as f64 / DENSE_T as f64)
    }

    /// sup_t (|e| + |e'|) on a dense sample of [0, T].
    pub fn big_m1(&self) -> f64 {
        self.dense_times()
            .map(|t| self.energy(t).abs() + self.energy_derivative(t).abs())
            .fold(0.0, f64::max)
    }

    /// inf_t e on a dense sample of [0, T].
    pub fn small_m1(&self) -> f64 {
        self.dense_times()
            .map(|t| self.energy(t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn lambda(&self, q: usize) -> f64 {
        (2.0 * PI * self.a.powf(self.b.powi(q as i32))).ceil()
    }

    pub fn delta(&self, q: usize) -> f64 {
        self.lambda(q).powf(-2.0 * self.beta)
    }
}

/// Per-stage parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    pub q: usize,
    pub alpha: f64,
    pub lambda_q: f64,
    pub delta_q: f64,
    pub lambda_next: f64,
    pub delta_next: f64,
    pub delta_next2: f64,
    pub l: f64,
    pub tau_q: f64,
    pub big_m1: f64,
    pub small_m1: f64,
    pub c0: f64,
    /// Filled in once a Mikado family and stripe constant are known.
    pub big_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSchedule {
    pub data: ProblemData,
    pub stages: Vec<StageParams>,
}

pub fn build_schedule(data: &ProblemData) -> Result<ParamSchedule> {
    data.validate()?;
    let big_m1 = data.big_m1();
    let small_m1 = data.small_m1();
    let c0 = (big_m1 / (4.0 * PI.powi(3))).sqrt() + 1.0;
    let mut stages = Vec::with_capacity(data.q_max + 1);
    for q in 0..=data.q_max {
        let lambda_q = data.lambda(q);
        let lambda_next = data.lambda(q + 1);
        if !lambda_next.is_finite() || !data.lambda(q + 2).is_finite() {
            return Err(Error::param("q_max", format!("lambda overflows at q = {q}")));
        }
        let delta_q = data.delta(q);
        let delta_next = data.delta(q + 1);
        let delta_next2 = data.delta(q + 2);
        let l = delta_next.sqrt() / (delta_q.sqrt() * lambda_q.powf(1.0 + 1.5 * data.alpha));
        let tau_q = l.powf(2.0 * data.alpha) / (delta_q.sqrt() * lambda_q);
        stages.push(StageParams {
            q,
            alpha: data.alpha,
            lambda_q,
            delta_q,
            lambda_next,
            delta_next,
            delta_next2,
            l,
            tau_q,
            big_m1,
            small_m1,
            c0,
            big_m: None,
        });
    }
    Ok(ParamSchedule {
        data: data.clone(),
        stages,
    })
}

impl ParamSchedule {
    pub fn stage(&self, q: usize) -> Result<&StageParams> {
        self.stages
            .get(q)
            .ok_or_else(|| Error::param("q", format!("{q} beyond q_max = {}", self.data.q_max)))
    }

    /// Fill M from the Mikado decay constant C(0,5) and the stripe constant c0.
    pub fn set_big_m(&mut self, c05: f64, stripe_c0: f64) {
        let lattice = lattice_sum_inv4();
        let first = (self.stages[0].big_m1 / (4.0 * PI.powi(3))).sqrt();
        let second = 12.0 * (11.0 / 9.0) * c05 * lattice / stripe_c0.sqrt();
        let m = first.max(second);
        for s in &mut self.stages {
            s.big_m = Some(m);
        }
    }
}

/// sum over nonzero k in Z^3 of |k|^-4, direct sum plus integral tail.
pub fn lattice_sum_inv4() -> f64 {
    lattice_sum(4.0, 48)
}

/// sum over nonzero k in Z^3 of |k|^-p for p > 3.
pub fn lattice_sum(p: f64, cutoff: i64) -> f64 {
    let c2 = cutoff * cutoff;
    let mut s = 0.0;
    for i in -cutoff..=cutoff {
        for j in -cutoff..=cutoff {
            for k in -cutoff..=cutoff {
                let r2 = i * i + j * j + k * k;
                if r2 == 0 || r2 > c2 {
                    continue;
                }
                s += (r2 as f64).powf(-p / 2.0);
            }
        }
    }
    // tail beyond the ball of equal volume
    let count = {
        let mut n = 0i64;
        for i in -cutoff..=cutoff {
            for j in -cutoff..=cutoff {
                let r = c2 - i * i - j * j;
                if r >= 0 {
                    n += 2 * (r as f64).sqrt().floor() as i64 + 1;
                }
            }
        }
        n
    };
    let r_eff = (3.0 * count as f64 / (4.0 * PI)).cbrt();
    s + 4.0 * PI * r_eff.powf(3.0 - p) / (p - 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub q: usize,
    pub checks: Vec<ConstraintCheck>,
}

impl ConstraintReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&ConstraintCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

fn le(name: &str, lhs: f64, rhs: f64) -> ConstraintCheck {
    ConstraintCheck {
        name: name.into(),
        lhs,
        rhs,
        pass: lhs <= rhs,
    }
}

fn lt(name: &str, lhs: f64, rhs: f64) -> ConstraintCheck {
    ConstraintCheck {
        name: name.into(),
        lhs,
        rhs,
        pass: lhs < rhs,
    }
}

/// Evaluate every parameter inequality at stage q.
pub fn validate_constraints(schedule: &ParamSchedule, q: usize) -> Result<ConstraintReport> {
    let d = &schedule.data;
    let s = schedule.stage(q)?;
    let (beta, b, alpha) = (d.beta, d.b, d.alpha);
    let (l0, d0, d1) = (d.lambda(0), d.delta(0), d.delta(1));
    let min_energy_margin = {
        let c = d1 + d1 * l0.powf(-alpha);
        (0..=DENSE_T)
            .map(|i| 2.0 * d.energy(d.t_final * i as f64 / DENSE_T as f64) - c)
            .fold(f64::INFINITY, f64::min)
    };
    let checks = vec![
        le("l_lower", s.lambda_q.powf(-1.5), s.l),
        le("l_upper", s.l, 1.0 / s.lambda_q),
        le("energy_floor", d1 - d1 * l0.powf(-alpha), s.small_m1),
        lt("start_energy_positive", 0.0, min_energy_margin),
        le(
            "start_stress",
            1.0 / (d0.sqrt() * l0),
            d1 * l0.powf(-3.0 * alpha),
        ),
        le(
            "time_scale",
            s.tau_q * s.l.powf(-1.0 - alpha),
            s.delta_q.sqrt() * s.lambda_q * s.l.powf(-alpha),
        ),
        lt("b_lower", (1.0 - beta + 1.5 * alpha) / (1.0 - beta), b),
        lt(
            "b_quadratic",
            2.0 * beta * b * b - b * beta + beta / 2.0 - 1.0,
            0.0,
        ),
    ];
    Ok(ConstraintReport { q, checks })
}

/// Run configuration read from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemData,
    pub grid_n: usize,
    pub samples_per_tau: f64,
    pub mikado: MikadoSettings,
    pub solver: SolverConfig,
    pub out_dir: String,
    pub seed: u64,
    /// Treat warnings (sub-grid mollifier, unresolved norms) as errors.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MikadoSettings {
    pub k_max: usize,
    pub radius: f64,
}

impl Default for MikadoSettings {
    fn default() -> Self {
        Self {
            k_max: 192,
            radius: 0.5,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    beta: f64,
    b: f64,
    a: f64,
    alpha: f64,
    #[serde(rename = "T", alias = "t_final")]
    t_final: f64,
    #[serde(default = "one")]
    q_max: usize,
    #[serde(default)]
    seed: u64,
    e: EnergyProfile,
    theta0: Theta0,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    time: RawTime,
    #[serde(default)]
    mikado: RawMikado,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    io: RawIo,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: usize,
}

impl Default for RawGrid {
    fn default() -> Self {
        Self { n: 64 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    samples_per_tau: f64,
}

impl Default for RawTime {
    fn default() -> Self {
        Self { samples_per_tau: 8.0 }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMikado {
    k_max: Option<usize>,
    radius: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    cfl: Option<f64>,
    dealias: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIo {
    out_dir: String,
}

impl Default for RawIo {
    fn default() -> Self {
        Self {
            out_dir: "out".into(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let problem = ProblemData {
            beta: raw.beta,
            b: raw.b,
            a: raw.a,
            alpha: raw.alpha,
            t_final: raw.t_final,
            q_max: raw.q_max,
            e: raw.e,
            theta0: raw.theta0,
        };
        let defaults = MikadoSettings::default();
        let mut solver = SolverConfig::default();
        if let Some(c) = raw.solver.cfl {
            solver.cfl = c;
        }
        if let Some(d) = raw.solver.dealias {
            solver.dealias = d;
        }
        let cfg = RunConfig {
            problem,
            grid_n: raw.grid.n,
            samples_per_tau: raw.time.samples_per_tau,
            mikado: MikadoSettings {
                k_max: raw.mikado.k_max.unwrap_or(defaults.k_max),
                radius: raw.mikado.radius.unwrap_or(defaults.radius),
            },
            solver,
            out_dir: raw.io.out_dir,
            seed: raw.seed,
            strict: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        crate::torus_fields::Grid::new(self.grid_n)?;
        if !(self.samples_per_tau >= 4.0) {
            return Err(Error::param("time.samples_per_tau", "must be at least 4"));
        }
        if !(self.solver.cfl > 0.0 && self.solver.cfl <= 2.0) {
            return Err(Error::param("solver.cfl", "must lie in (0, 2]"));
        }
        if self.mikado.k_max < 4 {
            return Err(Error::param("mikado.k_max", "must be at least 4"));
        }
        Ok(())
    }
}
