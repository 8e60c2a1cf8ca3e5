use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Diag;
use crate::error::Result;
use crate::params::{ConstraintReport, ParamSchedule};

pub const SCHEMA: &str = "bqci-report/1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub crate_version: String,
    /// sha256 of the configuration text
    pub config_sha256: String,
    pub seed: u64,
    pub grid_n: usize,
    pub time_quadrature: String,
}

impl Provenance {
    pub fn new(config_text: &str, seed: u64, grid_n: usize) -> Self {
        Provenance {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            grid_n,
            time_quadrature: "trapezoid".into(),
        }
    }
}

/// How a run ended.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// "completed", "gate" (declared abort) or "error"
    pub status: String,
    /// last stage index that was built
    pub stage_reached: usize,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub schema: String,
    pub provenance: Provenance,
    pub schedule: Option<ParamSchedule>,
    pub constraints: Vec<ConstraintReport>,
    /// named sections such as "stage_0", "iteration_0", "mikado"
    pub sections: BTreeMap<String, Diag>,
    pub outcome: Outcome,
}

impl DiagnosticsReport {
    pub fn new(provenance: Provenance) -> Self {
        DiagnosticsReport {
            schema: SCHEMA.into(),
            provenance,
            ..Default::default()
        }
    }

    pub fn all_checks_pass(&self) -> bool {
        self.sections.values().all(|d| d.all_pass())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Pretty JSON with sorted map keys and a trailing newline.
pub fn write_report(path: &Path, report: &DiagnosticsReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// One column per named series; shorter series leave empty cells.
pub fn write_csv(path: &Path, diag: &Diag) -> Result<()> {
    let names: Vec<&String> = diag.series.keys().collect();
    let rows = diag.series.values().map(|v| v.len()).max().unwrap_or(0);
    let mut out = String::new();
    out.push_str(&names.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","));
    out.push('\n');
    for r in 0..rows {
        let line: Vec<String> = names
            .iter()
            .map(|n| diag.series[*n].get(r).map(|v| format!("{v:e}")).unwrap_or_default())
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// manifest.json: content hash of every listed file (paths relative to `dir`) and of the
/// configuration text.
pub fn write_manifest(dir: &Path, files: &[String], config_text: &str) -> Result<()> {
    let mut hashes = BTreeMap::new();
    for f in files {
        let bytes = std::fs::read(dir.join(f))?;
        hashes.insert(f.clone(), sha256_hex(&bytes));
    }
    let manifest = serde_json::json!({
        "config_sha256": sha256_hex(config_text.as_bytes()),
        "files": hashes,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_valid_json() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("report.json");
        let r = DiagnosticsReport::new(Provenance::new("", 0, 8));
        write_report(&p, &r).unwrap();
        let back: DiagnosticsReport = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(back.all_checks_pass());
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn csv_columns() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = Diag::default();
        d.push("b", 1.0);
        d.push("a", 2.0);
        d.push("a", 3.0);
        let p = dir.path().join("s.csv");
        write_csv(&p, &d).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "a,b\n2e0,1e0\n3e0,\n");
    }
}
