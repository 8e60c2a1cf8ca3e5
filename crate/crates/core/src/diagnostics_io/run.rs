//! Full pipeline driver: schedule, Mikado family, stages, snapshots and reports.

use std::path::{Path, PathBuf};

use serde_json::json;

use super::snapshot::{read_series, sidecar_path, write_family, write_series};
use super::{monitor_stage, write_csv, write_manifest, write_report, Diag, DiagnosticsReport, Outcome, Provenance};
use crate::error::{Error, Result};
use crate::mikado::MikadoFamily;
use crate::params::{build_schedule, validate_constraints, ParamSchedule, RunConfig};
use crate::scheme::{
    initial_stage, run_iteration, stage_invariants, stage_time_grid, IterationContext, Stage, Stripes,
};
use crate::torus_fields::{Grid, TimeSeriesField};

/// Schedule with M filled in from the Mikado family and the stripe constant.
pub fn prepare(config: &RunConfig) -> Result<(ParamSchedule, MikadoFamily)> {
    let mut schedule = build_schedule(&config.problem)?;
    let family = MikadoFamily::build(config.mikado.radius, config.mikado.k_max, config.seed)?;
    let times = stage_time_grid(&schedule, config.samples_per_tau);
    let stripes = Stripes::new(schedule.stages[0].tau_q, times.t_end(), times.dt)?;
    schedule.set_big_m(family.decay.c0[5], stripes.c0);
    Ok((schedule, family))
}

/// Invariants and monitors of a stage, with the residual gate appropriate to its index.
pub fn stage_section(stage: &Stage, schedule: &ParamSchedule, config: &RunConfig) -> Result<Diag> {
    let mut d = stage_invariants(stage, &config.solver)?;
    let res = d.scalars.get("residual_sup").copied().unwrap_or(0.0);
    if stage.q == 0 {
        d.check("residual_sup", res, 1e-8);
        let data = &schedule.data;
        if data.e.cos_amplitudes.iter().all(|a| *a == 0.0) {
            let s0 = &schedule.stages[0];
            let want = 0.5 * (s0.delta_next + s0.delta_next * s0.lambda_q.powf(-data.alpha));
            let worst = stage
                .v
                .snapshots
                .iter()
                .map(|v| (data.e.constant - v.l2_norm().powi(2) - want).abs())
                .fold(0.0f64, f64::max);
            d.check("gap_closed_form", worst, 1e-10);
        }
    } else {
        let ratio = d.scalars.get("residual_ratio").copied().unwrap_or(0.0);
        d.check("residual_ratio", ratio, 1e-3);
    }
    d.merge("monitor.", monitor_stage(stage, schedule)?);
    Ok(d)
}

fn write_stage(dir: &Path, stage: &Stage, provenance: &Provenance) -> Result<Vec<String>> {
    let sub = format!("stage_{}", stage.q);
    std::fs::create_dir_all(dir.join(&sub))?;
    let mut files = Vec::new();
    let items: [(&str, &TimeSeriesField); 5] = [
        ("v", &stage.v),
        ("dv_dt", &stage.dv_dt),
        ("p", &stage.p),
        ("R", &stage.r),
        ("theta", &stage.theta),
    ];
    for (name, series) in items {
        let mut side = json!({ "field": name, "q": stage.q, "provenance": provenance });
        if name == "theta" {
            side["dissipation"] = json!(stage.dissipation);
        }
        let rel = format!("{sub}/{name}.bqci");
        write_series(&dir.join(&rel), series, &side)?;
        files.push(rel);
        files.push(format!("{sub}/{name}.json"));
    }
    Ok(files)
}

/// Load a stage written by [`run_pipeline`].
pub fn read_stage(dir: &Path, q: usize) -> Result<Stage> {
    let sub = dir.join(format!("stage_{q}"));
    let load = |name: &str| read_series(&sub.join(format!("{name}.bqci")));
    let theta_path = sub.join("theta.bqci");
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&theta_path))?)?;
    let dissipation: Vec<f64> = serde_json::from_value(side["dissipation"].clone())?;
    Ok(Stage {
        q,
        v: load("v")?,
        dv_dt: load("dv_dt")?,
        p: load("p")?,
        r: load("R")?,
        theta: load("theta")?,
        dissipation,
    })
}

/// Options that override the configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    /// number of iterations (defaults to q_max)
    pub stages: Option<usize>,
    /// verify the Mikado family on this grid before running (skipped when None)
    pub verify_family_on: Option<usize>,
}

/// Build stage 0, iterate, and persist everything. Returns the report; gate aborts are
/// recorded in `outcome` rather than returned as errors.
pub fn run_pipeline(config: &RunConfig, config_text: &str, options: &RunOptions) -> Result<DiagnosticsReport> {
    config.validate()?;
    let provenance = Provenance::new(config_text, config.seed, config.grid_n);
    let mut report = DiagnosticsReport::new(provenance.clone());
    let out = options.out_dir.clone();
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), config_text)?;
    }
    let mut files = vec!["config.toml".to_string()];
    let (schedule, family) = prepare(config)?;
    let iterations = options.stages.unwrap_or(config.problem.q_max).min(config.problem.q_max);
    for q in 0..=iterations {
        report.constraints.push(validate_constraints(&schedule, q)?);
    }
    report.schedule = Some(schedule.clone());
    let mut fam = Diag::default();
    fam.set("min_line_distance", family.min_line_distance);
    fam.set("admissible_radius", family.admissible_radius);
    fam.set("gate", family.gate);
    fam.set("c05", family.decay.c0[5]);
    if let Some(n) = options.verify_family_on {
        let rep = family.verify(Grid::new(n)?)?;
        for c in rep.checks {
            fam.check(&c.name, c.measured, c.tolerance);
        }
        fam.set("decay_exponent", rep.decay_exponent);
    }
    report.sections.insert("mikado".into(), fam);
    if let Some(dir) = &out {
        write_family(&dir.join("mikado.bqci"), &family)?;
        files.push("mikado.bqci".into());
        files.push("mikado.json".into());
    }

    let grid = Grid::new(config.grid_n)?;
    let times = stage_time_grid(&schedule, config.samples_per_tau);
    let mut stage = initial_stage(&schedule, grid, times)?;
    report.sections.insert("stage_0".into(), stage_section(&stage, &schedule, config)?);
    if let Some(dir) = &out {
        files.extend(write_stage(dir, &stage, &provenance)?);
    }
    let ctx = IterationContext {
        schedule: &schedule,
        family: &family,
        config,
    };
    report.outcome = Outcome {
        status: "completed".into(),
        stage_reached: 0,
        message: None,
    };
    for q in 0..iterations {
        let res = run_iteration(stage, &ctx);
        report.sections.insert(format!("iteration_{q}"), res.diag);
        match (res.next, res.error) {
            (Some(next), _) => {
                report
                    .sections
                    .insert(format!("stage_{}", q + 1), stage_section(&next, &schedule, config)?);
                if let Some(dir) = &out {
                    files.extend(write_stage(dir, &next, &provenance)?);
                }
                report.outcome.stage_reached = q + 1;
                stage = next;
            }
            (None, Some(e)) => {
                report.outcome.status = if e.is_gate() { "gate" } else { "error" }.into();
                report.outcome.message = Some(e.to_string());
                break;
            }
            (None, None) => return Err(Error::Numerical("iteration returned nothing".into())),
        }
    }
    if let Some(dir) = &out {
        write_report(&dir.join("report.json"), &report)?;
        let mut all = Diag::default();
        for (name, d) in &report.sections {
            for (k, v) in &d.series {
                all.series.insert(format!("{name}.{k}"), v.clone());
            }
        }
        write_csv(&dir.join("series.csv"), &all)?;
        files.push("report.json".into());
        files.push("series.csv".into());
        write_manifest(dir, &files, config_text)?;
    }
    Ok(report)
}
