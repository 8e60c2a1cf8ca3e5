//! Diagnostics containers, energy functionals, estimate monitors, scaling studies and
//! persistence.

mod monitors;
mod report;
mod run;
mod snapshot;
mod studies;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use monitors::{c_norm, energy_functionals, monitor_stage, monitor_step, EnergyFunctionals};
pub use report::{sha256_hex, write_csv, write_manifest, write_report, DiagnosticsReport, Outcome, Provenance, SCHEMA};
pub use run::{prepare, read_stage, run_pipeline, stage_section, RunOptions};
pub use snapshot::{
    read_family, read_series, read_snapshot, sidecar_path, write_family, write_series, write_snapshot,
    SeriesHeader, FAMILY_TAG, MAGIC, VERSION,
};
pub use studies::{scaling_study, StudyKind, StudyOptions, StudyResult};

/// Named pass/fail record: pass iff measured <= tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Named scalars, time series, checks and warnings. Maps keep keys sorted so the
/// serialized form is stable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diag {
    pub scalars: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Diag {
    pub fn set(&mut self, name: &str, value: f64) {
        if value.is_finite() {
            self.scalars.insert(name.to_string(), value);
        } else {
            self.warnings.push(format!("{name} is not finite"));
        }
    }

    /// Running maximum.
    pub fn set_max(&mut self, name: &str, value: f64) {
        let cur = self.scalars.get(name).copied().unwrap_or(f64::NEG_INFINITY);
        self.set(name, cur.max(value));
    }

    pub fn push(&mut self, name: &str, value: f64) {
        // JSON has no NaN; non-finite entries are stored as the largest finite double
        let v = if value.is_finite() { value } else { f64::MAX.copysign(value) };
        self.series.entry(name.to_string()).or_default().push(v);
    }

    pub fn check(&mut self, name: &str, measured: f64, tolerance: f64) -> bool {
        let pass = measured <= tolerance;
        self.checks.push(Check {
            name: name.to_string(),
            measured: if measured.is_finite() { measured } else { f64::MAX },
            tolerance,
            pass,
        });
        pass
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Absorb another container, prefixing its names.
    pub fn merge(&mut self, prefix: &str, other: Diag) {
        for (k, v) in other.scalars {
            self.scalars.insert(format!("{prefix}{k}"), v);
        }
        for (k, v) in other.series {
            self.series.insert(format!("{prefix}{k}"), v);
        }
        for mut c in other.checks {
            c.name = format!("{prefix}{}", c.name);
            self.checks.push(c);
        }
        self.warnings.extend(other.warnings);
    }
}

/// Least-squares slope of log(y) against log(x).
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Cumulative trapezoid integral of samples spaced by dt.
pub fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (m, v) in values.iter().enumerate() {
        if m > 0 {
            acc += 0.5 * dt * (values[m - 1] + v);
        }
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((fit_slope(&x, &y) + 1.5).abs() < 1e-12);
    }

    #[test]
    fn diag_checks_and_merge() {
        let mut d = Diag::default();
        assert!(d.check("a", 1.0, 2.0));
        assert!(!d.check("b", f64::NAN, 2.0));
        d.set("x", f64::INFINITY);
        assert!(d.scalars.is_empty());
        let mut top = Diag::default();
        top.merge("s.", d);
        assert_eq!(top.checks[0].name, "s.a");
        assert_eq!(top.failed_checks().len(), 1);
        assert_eq!(top.warnings.len(), 1);
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let v: Vec<f64> = (0..11).map(|m| 2.0 * m as f64 * 0.1).collect();
        let c = cumulative_trapezoid(&v, 0.1);
        assert!((c[10] - 1.0).abs() < 1e-14);
    }
}
