//! Time partition of unity and squiggling space-time stripes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn expo(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

fn expo_prime(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        expo(x) / (x * x)
    }
}

/// Smooth step: 0 for x <= 0, 1 for x >= 1, and S(x) + S(1 - x) = 1.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let (a, b) = (expo(x), expo(1.0 - x));
        a / (a + b)
    }
}

pub fn smooth_step_prime(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        let (a, b) = (expo(x), expo(1.0 - x));
        (expo_prime(x) * b + a * expo_prime(1.0 - x)) / ((a + b) * (a + b))
    }
}

/// Where a time falls relative to the partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece {
    /// inside J_i: chi_i = 1
    Flat(usize),
    /// inside I_i: chi_i = chi, chi_{i+1} = 1 - chi, d/dt chi_i = chi_dot
    Transition { i: usize, chi: f64, chi_dot: f64 },
}

/// Nodes t_i = i tau, intervals J_i = [t_i - tau/3, t_i + tau/3], I_i = [t_i + tau/3, t_i + 2tau/3].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub tau: f64,
    pub t_final: f64,
    /// number of nodes; the last node is the first with t_i + tau/3 >= T
    pub nodes: usize,
}

impl Partition {
    pub fn new(tau: f64, t_final: f64) -> Result<Self> {
        if !(tau > 0.0 && t_final > 0.0) {
            return Err(Error::param("tau", "partition needs positive tau and T"));
        }
        let last = ((t_final - tau / 3.0) / tau).ceil().max(0.0) as usize;
        Ok(Partition {
            tau,
            t_final,
            nodes: last + 1,
        })
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.tau
    }

    /// Node time clamped to [0, T], used as the start of the local solve.
    pub fn anchor(&self, i: usize) -> f64 {
        self.node(i).clamp(0.0, self.t_final)
    }

    pub fn classify(&self, t: f64) -> Piece {
        let x = t / self.tau;
        let i = x.floor().max(0.0) as usize;
        let y = (t - self.node(i)) / self.tau;
        let last = self.nodes - 1;
        if y <= 1.0 / 3.0 || i >= last {
            Piece::Flat(i.min(last))
        } else if y >= 2.0 / 3.0 {
            Piece::Flat(i + 1)
        } else {
            let s = 3.0 * y - 1.0;
            Piece::Transition {
                i,
                chi: 1.0 - smooth_step(s),
                chi_dot: -3.0 * smooth_step_prime(s) / self.tau,
            }
        }
    }

    pub fn chi(&self, i: usize, t: f64) -> f64 {
        match self.classify(t) {
            Piece::Flat(j) => (j == i) as u8 as f64,
            Piece::Transition { i: j, chi, .. } => {
                if j == i {
                    chi
                } else if j + 1 == i {
                    1.0 - chi
                } else {
                    0.0
                }
            }
        }
    }

    /// Open support (t_i - 2tau/3, t_i + 2tau/3).
    pub fn support(&self, i: usize) -> (f64, f64) {
        let t = self.node(i);
        (t - 2.0 * self.tau / 3.0, t + 2.0 * self.tau / 3.0)
    }
}

/// eta_i(t, x3) = phi((t - t_i)/tau - h(x3)), i >= -1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stripes {
    pub tau: f64,
    pub t_final: f64,
    /// stripe indices whose time support meets [0, T]
    pub indices: Vec<i64>,
    /// min over t of sum_i int eta_i^2 (box integral)
    pub c0: f64,
}

pub const PLATEAU: (f64, f64) = (1.0 / 6.0, 5.0 / 6.0);
pub const SUPPORT: (f64, f64) = (1.0 / 24.0, 23.0 / 24.0);

/// 1 on the plateau, smooth ramps, zero outside SUPPORT.
pub fn stripe_profile(s: f64) -> f64 {
    if s <= SUPPORT.0 || s >= SUPPORT.1 {
        0.0
    } else if s < PLATEAU.0 {
        smooth_step((s - SUPPORT.0) / (PLATEAU.0 - SUPPORT.0))
    } else if s <= PLATEAU.1 {
        1.0
    } else {
        smooth_step((SUPPORT.1 - s) / (SUPPORT.1 - PLATEAU.1))
    }
}

pub fn shift(x3: f64) -> f64 {
    x3.sin() / 6.0
}

impl Stripes {
    pub fn new(tau: f64, t_final: f64, time_step: f64) -> Result<Self> {
        if tau < 4.0 * time_step {
            return Err(Error::param(
                "time.samples_per_tau",
                format!("tau = {tau:e} is below four sample spacings ({time_step:e})"),
            ));
        }
        let hi = (t_final / tau + 0.125).ceil() as i64;
        let indices: Vec<i64> = (-1..=hi)
            .filter(|&i| {
                let (a, b) = Self::time_support_of(tau, i);
                a < t_final && b > 0.0
            })
            .collect();
        let mut s = Stripes {
            tau,
            t_final,
            indices,
            c0: 0.0,
        };
        s.c0 = s.dense_c0();
        Ok(s)
    }

    fn time_support_of(tau: f64, i: i64) -> (f64, f64) {
        let t = i as f64 * tau;
        (t + tau * (SUPPORT.0 - 1.0 / 6.0), t + tau * (SUPPORT.1 + 1.0 / 6.0))
    }

    /// Open time interval where eta_i is not identically zero.
    pub fn time_support(&self, i: i64) -> (f64, f64) {
        Self::time_support_of(self.tau, i)
    }

    pub fn node(&self, i: i64) -> f64 {
        i as f64 * self.tau
    }

    pub fn anchor(&self, i: i64) -> f64 {
        self.node(i).clamp(0.0, self.t_final)
    }

    pub fn eta(&self, i: i64, t: f64, x3: f64) -> f64 {
        stripe_profile((t - self.node(i)) / self.tau - shift(x3))
    }

    /// eta_i(t, .) at the n grid values of x3.
    pub fn eta_column(&self, i: i64, t: f64, n: usize) -> Vec<f64> {
        let h = 2.0 * PI / n as f64;
        (0..n).map(|k| self.eta(i, t, k as f64 * h)).collect()
    }

    /// sum_i int eta_i^2 over the box, using an n-point rule in x3.
    pub fn mass(&self, t: f64, n: usize, all_integers: bool) -> f64 {
        let h = 2.0 * PI / n as f64;
        let k0 = (t / self.tau).floor() as i64;
        let idx: Vec<i64> = if all_integers {
            (k0 - 2..=k0 + 2).collect()
        } else {
            self.indices.clone()
        };
        let mut s = 0.0;
        for i in idx {
            for k in 0..n {
                let e = self.eta(i, t, k as f64 * h);
                s += e * e;
            }
        }
        s * h * 4.0 * PI * PI
    }

    fn dense_c0(&self) -> f64 {
        let samples = 2000;
        (0..samples)
            .map(|m| self.mass(self.tau * m as f64 / samples as f64, 4096, true))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_symmetry() {
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            assert!((smooth_step(x) + smooth_step(1.0 - x) - 1.0).abs() < 1e-15);
        }
        let h = 1e-6;
        let x = 0.37;
        let fd = (smooth_step(x + h) - smooth_step(x - h)) / (2.0 * h);
        assert!((fd - smooth_step_prime(x)).abs() < 1e-7);
    }

    #[test]
    fn partition_of_unity() {
        let p = Partition::new(0.0836, 0.2).unwrap();
        for m in 0..10_000 {
            let t = 0.2 * m as f64 / 9999.0;
            let s: f64 = (0..p.nodes).map(|i| p.chi(i, t)).sum();
            assert!((s - 1.0).abs() < 1e-12);
            for i in 0..p.nodes {
                let c = p.chi(i, t);
                if c > 0.0 {
                    let (a, b) = p.support(i);
                    assert!(t > a && t < b);
                }
                if (t - p.node(i)).abs() <= p.tau / 3.0 {
                    assert_eq!(c, 1.0);
                }
                if i + 2 < p.nodes {
                    assert_eq!(c * p.chi(i + 2, t), 0.0);
                }
            }
        }
    }

    #[test]
    fn chi_derivative_matches_difference() {
        let p = Partition::new(0.1, 1.0).unwrap();
        let t = 0.1 + 0.05;
        let h = 1e-7;
        if let Piece::Transition { i, chi_dot, .. } = p.classify(t) {
            let fd = (p.chi(i, t + h) - p.chi(i, t - h)) / (2.0 * h);
            assert!((fd - chi_dot).abs() < 1e-5 * chi_dot.abs().max(1.0));
        } else {
            panic!("expected a transition");
        }
    }

    #[test]
    fn stripes_properties() {
        let tau = 0.0836;
        let s = Stripes::new(tau, 0.2, 0.01).unwrap();
        assert!(s.c0 > 0.0);
        let n = 64;
        for m in 0..400 {
            let t = 0.2 * m as f64 / 399.0;
            for &i in &s.indices {
                let col = s.eta_column(i, t, n);
                assert!(col.iter().all(|&e| (0.0..=1.0).contains(&e)));
                for &j in &s.indices {
                    if j != i {
                        let other = s.eta_column(j, t, n);
                        assert!(col.iter().zip(&other).all(|(a, b)| a * b == 0.0));
                    }
                }
                let y = (t - s.node(i)) / tau;
                if (1.0 / 3.0..=2.0 / 3.0).contains(&y) {
                    assert!(col.iter().all(|&e| e == 1.0));
                }
                if col.iter().any(|&e| e > 0.0) {
                    assert!(y > -1.0 / 3.0 && y < 4.0 / 3.0);
                }
            }
            assert!(s.mass(t, n, false) >= 0.99 * s.c0);
        }
        assert!(Stripes::new(tau, 0.2, 0.03).is_err());
    }
}
