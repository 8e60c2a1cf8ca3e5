//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use bqci::calculus_ops::{biot_savart, inverse_divergence, leray_project};
use bqci::diagnostics_io::{run_pipeline, scaling_study, stage_section, Diag, RunOptions, StudyKind, StudyOptions};
use bqci::mikado::{self, random_admissible, MikadoFamily};
use bqci::params::{build_schedule, RunConfig};
use bqci::scheme::{glue_stage, initial_stage, mollify_stage, stage_time_grid, Partition, Piece, Stripes};
use bqci::solvers::{solve_forced_euler, solve_transport_diffusion, SolverConfig, Window};
use bqci::torus_fields::{Field, Grid, Rank, TimeGrid, TimeSeriesField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ACCEPTANCE: &str = include_str!("../../../configs/acceptance.toml");
const SMALL: &str = include_str!("../../../configs/small.toml");

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

/// Random real band-limited field: a few modes with |k_i| <= kmax.
fn random_field(grid: Grid, rank: Rank, rng: &mut ChaCha8Rng, kmax: i64) -> Field {
    let nc = rank.components();
    let modes: Vec<([f64; 3], Vec<f64>, Vec<f64>)> = (0..6)
        .map(|_| {
            let k = [0; 3].map(|_| rng.gen_range(-kmax..=kmax) as f64);
            let a = (0..nc).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = (0..nc).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (k, a, b)
        })
        .collect();
    let offset: Vec<f64> = (0..nc).map(|_| rng.gen_range(-0.5..0.5)).collect();
    Field::from_fn(grid, rank, |x| {
        let mut out = offset.clone();
        for (k, a, b) in &modes {
            let ph = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
            let (s, c) = ph.sin_cos();
            for (o, (ac, bc)) in out.iter_mut().zip(a.iter().zip(b)) {
                *o += ac * c + bc * s;
            }
        }
        out
    })
}

fn const_series(f: &Field, tg: TimeGrid) -> TimeSeriesField {
    TimeSeriesField::new(tg, 0, vec![f.clone(); tg.count]).unwrap()
}

fn operator_identities() -> Outcome {
    let grid = Grid::new(32).map_err(e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut div_r, mut sym_r, mut div_b, mut curl_b) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let mut f = random_field(grid, Rank::Vector, &mut rng, 8);
        f.remove_mean();
        let r = inverse_divergence(&f).map_err(e)?;
        div_r = div_r.max(r.divergence().map_err(e)?.sub(&f).max_coeff());
        let mean = r.mean().iter().fold(0.0f64, |a, m| a.max(m.abs()));
        sym_r = sym_r.max(mean).max(r.trace().map_err(e)?.max_coeff());

        let v = leray_project(&random_field(grid, Rank::Vector, &mut rng, 8)).map_err(e)?;
        let b = biot_savart(&v).map_err(e)?;
        div_b = div_b.max(b.divergence().map_err(e)?.max_coeff());
        let mut v0 = v.clone();
        v0.remove_mean();
        curl_b = curl_b.max(b.curl().map_err(e)?.sub(&v0).max_coeff());
    }
    let worst = div_r.max(sym_r).max(div_b).max(curl_b);
    ensure(
        worst < 1e-10,
        format!("div R f {div_r:.1e}, R f mean/trace {sym_r:.1e}, div B v {div_b:.1e}, curl B v {curl_b:.1e}"),
    )?;
    Ok(format!("200 instances, worst coefficient error {worst:.1e}"))
}

fn mikado_suite() -> Outcome {
    let fam = MikadoFamily::build(0.5, 192, 0).map_err(e)?;
    let grid = Grid::new(64).map_err(e)?;
    let report = mikado::verify(&fam, grid).map_err(e)?;
    let failed: Vec<_> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    ensure(failed.is_empty(), format!("family checks failed: {failed:?}"))?;
    ensure(
        report.decay_exponent >= 4.0,
        format!("decay exponent {:.2} < 4", report.decay_exponent),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut rs = vec![[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]];
    rs.extend((0..50).map(|_| random_admissible(&mut rng, fam.gate)));
    let (mut div, mut divww, mut mean, mut moment, mut ak) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for r in &rs {
        let w = fam.evaluate_w(r, grid).map_err(e)?;
        div = div.max(w.divergence().map_err(e)?.max_coeff());
        mean = mean.max(w.mean().iter().fold(0.0f64, |a, m| a.max(m.abs())));
        let ww = w.outer_square(bqci::torus_fields::ProductMode::Native).map_err(e)?;
        divww = divww.max(ww.divergence().map_err(e)?.max_coeff());
        // storage order xx, xy, xz, yy, yz, zz against Sym6 (11, 22, 33, 12, 23, 13)
        let target = [r[0], r[3], r[5], r[1], r[4], r[2]];
        for (m, t) in ww.mean().iter().zip(target) {
            moment = moment.max((m - t).abs());
        }
        let (_, gamma) = fam.coefficients(r).map_err(e)?;
        for _ in 0..20 {
            let k = [0; 3].map(|_| rng.gen_range(-24i64..=24));
            let a = fam.a_k(&gamma, k);
            let dot = (0..3).map(|d| a[d] * k[d] as f64).sum::<num_complex::Complex64>();
            ak = ak.max(dot.norm());
        }
    }
    ensure(div < 1e-9 && divww < 1e-9, format!("div W {div:.1e}, div(W W) {divww:.1e}"))?;
    ensure(mean < 1e-10, format!("mean W {mean:.1e}"))?;
    ensure(moment < 1e-6, format!("second moment error {moment:.1e}"))?;
    ensure(ak < 1e-10, format!("a_k . k {ak:.1e}"))?;
    Ok(format!(
        "51 R, div {:.1e}, moment {moment:.1e}, decay exponent {:.2}",
        div.max(divww),
        report.decay_exponent
    ))
}

fn starting_stage() -> Outcome {
    let config = RunConfig::from_toml_str(ACCEPTANCE).map_err(e)?;
    let schedule = build_schedule(&config.problem).map_err(e)?;
    let times = stage_time_grid(&schedule, config.samples_per_tau);
    let grid = Grid::new(32).map_err(e)?;
    let stage = initial_stage(&schedule, grid, times).map_err(e)?;
    let diag = stage_section(&stage, &schedule, &config).map_err(e)?;
    let failed: Vec<_> = diag.failed_checks().iter().map(|c| c.name.clone()).collect();
    ensure(failed.is_empty(), format!("failed: {failed:?}"))?;
    let res = diag.scalars["residual_sup"];
    ensure(res < 1e-8, format!("residual {res:.1e}"))?;
    let p0 = &schedule.stages[0];
    let want = 0.5 * (p0.delta_next + p0.delta_next * p0.lambda_q.powf(-p0.alpha));
    let mut gap_err = 0.0f64;
    for m in 0..stage.len() {
        let gap = config.problem.energy(times.time(m)) - stage.v.snapshots[m].l2_norm().powi(2);
        gap_err = gap_err.max((gap - want).abs());
        ensure(
            stage.r.snapshots[m].trace().map_err(e)?.max_coeff() == 0.0,
            format!("trace R nonzero at sample {m}"),
        )?;
        ensure(
            stage.p.snapshots[m].mean()[0] == 0.0,
            format!("mean p nonzero at sample {m}"),
        )?;
    }
    ensure(gap_err < 1e-10, format!("energy gap error {gap_err:.1e}"))?;
    Ok(format!("residual {res:.1e}, gap error {gap_err:.1e}"))
}

fn solver_oracles() -> Outcome {
    let cfg = SolverConfig::default();
    let grid = Grid::new(16).map_err(e)?;

    // heat eigenfunction
    let th0 = Field::scalar_fn(grid, |x| x[2].sin());
    let tg = TimeGrid::covering(0.5, 0.05);
    let zero_v = const_series(&Field::zeros(grid, Rank::Vector), tg);
    let win = Window::new(&tg, 0, tg.count - 1).map_err(e)?;
    let heat = solve_transport_diffusion(&zero_v, &th0, win, &cfg).map_err(e)?;
    let mut heat_err = 0.0f64;
    for (m, th) in heat.theta.snapshots.iter().enumerate() {
        heat_err = heat_err.max(th.sub(&th0.scaled((-tg.time(m)).exp())).max_coeff());
    }
    ensure(heat_err < 1e-8, format!("heat decay error {heat_err:.1e}"))?;

    // energy identity and maximum principle under transport
    let th0 = Field::scalar_fn(grid, |x| x[2].sin() + 0.3 * (x[0] + x[1]).cos());
    let vf = Field::from_fn(grid, Rank::Vector, |x| {
        vec![0.5 * x[2].sin(), 0.3 * x[0].cos(), 0.4 * x[1].sin()]
    });
    let tg = TimeGrid::covering(0.2, 0.02);
    let win = Window::new(&tg, 0, tg.count - 1).map_err(e)?;
    let sol = solve_transport_diffusion(&const_series(&vf, tg), &th0, win, &cfg).map_err(e)?;
    let m0 = th0.l2_norm().powi(2);
    let sup0 = th0.sup_norm();
    let (mut drift, mut excess) = (0.0f64, 0.0f64);
    for (j, th) in sol.theta.snapshots.iter().enumerate() {
        let m = th.l2_norm().powi(2) + 2.0 * sol.dissipation[j];
        drift = drift.max((m - m0).abs() / m0);
        excess = excess.max(th.sup_norm() - sup0);
    }
    ensure(drift < 1e-5, format!("M drift {drift:.1e}"))?;
    ensure(excess <= 1e-10, format!("maximum principle violated by {excess:.1e}"))?;

    // forward-backward Euler
    let v0 = leray_project(&Field::from_fn(grid, Rank::Vector, |x| {
        vec![x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin(), 0.3 * (x[0] + x[1]).sin()]
    }))
    .map_err(e)?;
    let theta = Field::scalar_fn(grid, |x| 0.5 * (x[0] + x[2]).cos());
    // one gluing window of the acceptance schedule
    let config = RunConfig::from_toml_str(ACCEPTANCE).map_err(e)?;
    let tau = build_schedule(&config.problem).map_err(e)?.stages[0].tau_q;
    let tg = TimeGrid::covering(tau, tau / 4.0);
    let forcing = const_series(&theta, tg);
    let fwd = solve_forced_euler(&v0, 0.0, &forcing, Window::new(&tg, 0, tg.count - 1).map_err(e)?, &cfg)
        .map_err(e)?;
    let v_end = fwd.v.snapshots.last().unwrap();
    let back = solve_forced_euler(v_end, tg.t_end(), &forcing, Window::new(&tg, 0, 0).map_err(e)?, &cfg)
        .map_err(e)?;
    let trip = back.v.snapshots[0].sub(&v0).max_coeff() / v0.max_coeff();
    ensure(trip < 1e-7, format!("round trip {trip:.1e}"))?;

    // Mikado flow is a stationary unforced solution
    let grid = Grid::new(32).map_err(e)?;
    let fam = MikadoFamily::build(0.5, 16, 0).map_err(e)?;
    let w0 = fam.evaluate_w(&[1.1, 0.95, 1.0, 0.05, 0.0, -0.03], grid).map_err(e)?;
    let tg = TimeGrid::covering(0.1, 0.025);
    let forcing = const_series(&Field::zeros(grid, Rank::Scalar), tg);
    let native = SolverConfig { cfl: 0.5, dealias: false };
    let sol = solve_forced_euler(&w0, 0.0, &forcing, Window::new(&tg, 0, tg.count - 1).map_err(e)?, &native)
        .map_err(e)?;
    let stat = sol
        .v
        .snapshots
        .iter()
        .map(|v| v.sub(&w0).max_coeff())
        .fold(0.0, f64::max)
        / w0.max_coeff();
    ensure(stat < 1e-8, format!("Mikado drift {stat:.1e}"))?;
    Ok(format!(
        "heat {heat_err:.1e}, M drift {drift:.1e}, round trip {trip:.1e}, Mikado {stat:.1e}"
    ))
}

fn gluing_exactness() -> Outcome {
    let config = RunConfig::from_toml_str(ACCEPTANCE).map_err(e)?;
    let schedule = build_schedule(&config.problem).map_err(e)?;
    let times = stage_time_grid(&schedule, config.samples_per_tau);
    let grid = Grid::new(32).map_err(e)?;
    let stage = initial_stage(&schedule, grid, times).map_err(e)?;
    let params = schedule.stage(0).map_err(e)?.clone();
    let cfg = config.solver.clone();
    let mut d = Diag::default();
    let moll = mollify_stage(&stage, &params, &cfg, false, &mut d).map_err(e)?;
    let part = Partition::new(params.tau_q, times.t_end()).map_err(e)?;
    let glued = glue_stage(&moll, &part, &params, &cfg, &mut d).map_err(e)?;
    let mut flats = 0;
    let mut cache: BTreeMap<usize, TimeSeriesField> = BTreeMap::new();
    for (m, piece) in glued.pieces.iter().enumerate() {
        if let Piece::Flat(i) = piece {
            flats += 1;
            ensure(glued.r[m].is_none(), format!("R nonzero on flat sample {m}"))?;
            if !cache.contains_key(i) {
                let (a, b) = part.support(*i);
                let idx: Vec<usize> = (0..times.count).filter(|&k| times.time(k) > a && times.time(k) < b).collect();
                let win = Window::new(&times, idx[0], *idx.last().unwrap()).map_err(e)?;
                let anchor = part.anchor(*i);
                let v0 = moll.v.interpolate(anchor).map_err(e)?;
                let sol = solve_forced_euler(&v0, anchor, &moll.theta, win, &cfg).map_err(e)?;
                cache.insert(*i, sol.v);
            }
            let local = cache[i].at_index(m).ok_or("local solve misses a sample")?;
            ensure(local == &glued.v.snapshots[m], format!("glued v differs from v_{i} at sample {m}"))?;
        }
    }
    ensure(flats > 0, "no flat samples".into())?;
    let mut pou = 0.0f64;
    for k in 0..=10_000 {
        let t = times.t_end() * k as f64 / 10_000.0;
        let s: f64 = (0..part.nodes).map(|i| part.chi(i, t)).sum();
        pou = pou.max((s - 1.0).abs());
    }
    ensure(pou < 1e-12, format!("partition of unity error {pou:.1e}"))?;
    let stripes = Stripes::new(params.tau_q, times.t_end(), times.dt).map_err(e)?;
    ensure(stripes.c0 > 0.0, format!("c0 = {}", stripes.c0))?;
    let n = 64;
    for k in 0..=200 {
        let t = times.t_end() * k as f64 / 200.0;
        for (a, &i) in stripes.indices.iter().enumerate() {
            let ci = stripes.eta_column(i, t, n);
            for &j in &stripes.indices[a + 1..] {
                let cj = stripes.eta_column(j, t, n);
                ensure(
                    ci.iter().zip(&cj).all(|(x, y)| x * y == 0.0),
                    format!("stripes {i} and {j} overlap at t = {t}"),
                )?;
            }
        }
    }
    Ok(format!(
        "{flats} flat samples bit-identical, partition error {pou:.1e}, c0 = {:.2}",
        stripes.c0
    ))
}

fn end_to_end() -> Outcome {
    let config = RunConfig::from_toml_str(ACCEPTANCE).map_err(e)?;
    let dir = tempfile::tempdir().map_err(e)?;
    let start = Instant::now();
    let report = run_pipeline(
        &config,
        ACCEPTANCE,
        &RunOptions {
            out_dir: Some(dir.path().to_path_buf()),
            stages: Some(1),
            verify_family_on: None,
        },
    )
    .map_err(e)?;
    let secs = start.elapsed().as_secs_f64();
    ensure(dir.path().join("report.json").exists(), "report.json missing".into())?;
    match report.outcome.status.as_str() {
        "completed" => {
            let failed: Vec<String> = report
                .sections
                .iter()
                .flat_map(|(s, d)| d.failed_checks().into_iter().map(move |c| format!("{s}.{}", c.name)))
                .collect();
            ensure(failed.is_empty(), format!("failed checks {failed:?}"))?;
            let s1 = report.sections.get("stage_1").ok_or("stage_1 section missing")?;
            let ratio = s1.scalars["residual_ratio"];
            ensure(ratio < 1e-3, format!("residual ratio {ratio:.1e}"))?;
            Ok(format!("completed at 64^3 in {secs:.0} s, residual ratio {ratio:.1e}"))
        }
        "gate" => {
            let msg = report.outcome.message.clone().unwrap_or_default();
            ensure(!msg.is_empty() && !report.sections.is_empty(), "gate abort without a trace".into())?;
            Ok(format!("declared gate abort in {secs:.0} s: {msg}"))
        }
        other => Err(format!("outcome {other}: {:?}", report.outcome.message)),
    }
}

fn scaling_studies() -> Outcome {
    let opts = StudyOptions::default();
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    for kind in [StudyKind::Commutator, StudyKind::OscillatoryDiffusion, StudyKind::Holder] {
        let r = scaling_study(kind, &opts).map_err(e)?;
        parts.push(format!("{} {:.3} (target {})", kind.name(), r.exponent, r.target));
        if !r.pass {
            bad.push(kind.name());
        }
    }
    ensure(bad.is_empty(), format!("{}; failing: {bad:?}", parts.join(", ")))?;
    Ok(parts.join(", "))
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let config = RunConfig::from_toml_str(SMALL).map_err(e)?;
    let dirs = [tempfile::tempdir().map_err(e)?, tempfile::tempdir().map_err(e)?];
    for d in &dirs {
        run_pipeline(
            &config,
            SMALL,
            &RunOptions {
                out_dir: Some(d.path().to_path_buf()),
                stages: Some(1),
                verify_family_on: None,
            },
        )
        .map_err(e)?;
    }
    let (a, b) = (files(dirs[0].path()), files(dirs[1].path()));
    ensure(a == b, "different file sets".into())?;
    for f in &a {
        let x = std::fs::read(dirs[0].path().join(f)).map_err(e)?;
        let y = std::fs::read(dirs[1].path().join(f)).map_err(e)?;
        ensure(x == y, format!("{} differs", f.display()))?;
    }
    Ok(format!("{} files bit-identical", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("operator identities", operator_identities),
        ("mikado suite", mikado_suite),
        ("starting stage", starting_stage),
        ("solver oracles", solver_oracles),
        ("gluing exactness", gluing_exactness),
        ("end-to-end q=0->1", end_to_end),
        ("scaling studies", scaling_studies),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(msg) => println!("criterion {} {name}: PASS ({msg}) [{secs:.1} s]", k + 1),
            Err(msg) => {
                failures += 1;
                println!("criterion {} {name}: FAIL ({msg}) [{secs:.1} s]", k + 1);
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
