use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bqci::diagnostics_io::{
    prepare, read_stage, run_pipeline, scaling_study, stage_section, write_report, DiagnosticsReport, Provenance,
    RunOptions, StudyKind, StudyOptions,
};
use bqci::params::{build_schedule, validate_constraints, RunConfig};
use bqci::torus_fields::Grid;

#[derive(Parser)]
#[command(name = "bqci", version, about = "Convex-integration lab for the Boussinesq system with thermal diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    stages: Option<usize>,
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// turn warnings (sub-grid mollifier) into errors
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check the parameter schedule and print the constraint table
    Validate,
    /// Build and verify the Mikado family
    Mikado,
    /// Run the iteration and write snapshots and reports
    Run,
    /// Run scaling studies (all kinds unless one is named)
    Study { kind: Option<String> },
    /// Recompute stage tables from snapshots in --out
    Report,
}

fn load(cli: &Cli) -> Result<(RunConfig, String), String> {
    let path = match (&cli.config, &cli.out) {
        (Some(p), _) => p.clone(),
        (None, Some(o)) if o.join("config.toml").exists() => o.join("config.toml"),
        _ => return Err("--config is required".into()),
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = RunConfig::from_toml_str(&text).map_err(|e| e.to_string())?;
    if let Some(n) = cli.grid {
        cfg.grid_n = n;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.strict = cli.strict;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok((cfg, text))
}

fn execute(cli: &Cli) -> Result<bool, String> {
    match &cli.command {
        Command::Validate => {
            let (cfg, _) = load(cli)?;
            let schedule = build_schedule(&cfg.problem).map_err(|e| e.to_string())?;
            let mut ok = true;
            for q in 0..=cfg.problem.q_max {
                let s = &schedule.stages[q];
                println!(
                    "q={q} lambda={} delta={:.6e} l={:.6e} tau={:.6e}",
                    s.lambda_q, s.delta_q, s.l, s.tau_q
                );
                let rep = validate_constraints(&schedule, q).map_err(|e| e.to_string())?;
                for c in &rep.checks {
                    println!(
                        "  {:<24} {:>14.6e} {:>14.6e}  {}",
                        c.name,
                        c.lhs,
                        c.rhs,
                        if c.pass { "ok" } else { "FAIL" }
                    );
                }
                ok &= rep.all_pass();
            }
            Ok(ok)
        }
        Command::Mikado => {
            let (cfg, _) = load(cli)?;
            let (_, fam) = prepare(&cfg).map_err(|e| e.to_string())?;
            let rep = fam.verify(Grid::new(cfg.grid_n).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            println!("min line distance {:.6}  gate {:.6}", fam.min_line_distance, fam.gate);
            for c in &rep.checks {
                println!(
                    "  {:<26} {:>12.3e} <= {:>10.1e}  {}",
                    c.name,
                    c.measured,
                    c.tolerance,
                    if c.pass { "ok" } else { "FAIL" }
                );
            }
            println!("decay exponent {:.3}", rep.decay_exponent);
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
                bqci::diagnostics_io::write_family(&dir.join("mikado.bqci"), &fam).map_err(|e| e.to_string())?;
            }
            Ok(rep.all_pass() && rep.decay_exponent >= 4.0)
        }
        Command::Run => {
            let (cfg, text) = load(cli)?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
            let opts = RunOptions {
                out_dir: Some(out.clone()),
                stages: cli.stages,
                verify_family_on: None,
            };
            let rep = run_pipeline(&cfg, &text, &opts).map_err(|e| e.to_string())?;
            for w in rep.sections.values().flat_map(|d| d.warnings.iter()) {
                eprintln!("warning: {w}");
            }
            for (name, d) in &rep.sections {
                for c in d.failed_checks() {
                    println!("{name}: check {} failed ({:e} > {:e})", c.name, c.measured, c.tolerance);
                }
            }
            println!(
                "outcome: {} (stage {} reached){}",
                rep.outcome.status,
                rep.outcome.stage_reached,
                rep.outcome.message.as_deref().map(|m| format!(": {m}")).unwrap_or_default()
            );
            println!("wrote {}", out.display());
            Ok(rep.outcome.status != "error" && rep.all_checks_pass())
        }
        Command::Study { kind } => {
            let kinds = match kind {
                Some(k) => vec![StudyKind::parse(k).map_err(|e| e.to_string())?],
                None => StudyKind::ALL.to_vec(),
            };
            let mut opts = StudyOptions::default();
            if let Some(s) = cli.seed {
                opts.seed = s;
            }
            let mut ok = true;
            for k in kinds {
                let r = scaling_study(k, &opts).map_err(|e| e.to_string())?;
                println!(
                    "{:<22} exponent {:>7.3}  target {:>5.2}  {}",
                    k.name(),
                    r.exponent,
                    r.target,
                    if r.pass { "ok" } else { "FAIL" }
                );
                ok &= r.pass;
            }
            Ok(ok)
        }
        Command::Report => {
            let dir = cli.out.clone().ok_or("--out is required")?;
            let (cfg, text) = load(cli)?;
            let (schedule, _) = prepare(&cfg).map_err(|e| e.to_string())?;
            let mut rep = DiagnosticsReport::new(Provenance::new(&text, cfg.seed, cfg.grid_n));
            let mut q = 0;
            while dir.join(format!("stage_{q}")).exists() {
                let stage = read_stage(&dir, q).map_err(|e| e.to_string())?;
                let d = stage_section(&stage, &schedule, &cfg).map_err(|e| e.to_string())?;
                println!("stage {q}");
                for (k, v) in &d.scalars {
                    println!("  {k:<36} {v:>14.6e}");
                }
                rep.sections.insert(format!("stage_{q}"), d);
                q += 1;
            }
            write_report(&dir.join("report_from_snapshots.json"), &rep).map_err(|e| e.to_string())?;
            Ok(rep.all_checks_pass())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
