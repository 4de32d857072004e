//! Acceptance criteria. Runs as a plain binary so that every criterion
//! prints a PASS/FAIL line; exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use yamabe_core::experiment::config::ExperimentConfig;
use yamabe_core::experiment::generate::{gen_bandlimited, single_mode};
use yamabe_core::experiment::output::{emit_sequence_outputs, read_csv, write_csv};
use yamabe_core::experiment::run_sequence_experiment;
use yamabe_core::selfcheck::mode_amplitude;
use yamabe_core::{
    run_flow, stable_dt, step_rk4, Background, ConformalMetric, DiagnosticsConfig, DiagnosticsRecord, FlowConfig,
    FlowState, NullSink, PeriodicGrid, ScalarField, SpectralWorkspace,
};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn unit(m: usize) -> PeriodicGrid {
    PeriodicGrid::unit(3, m).unwrap()
}

fn cosine(g: PeriodicGrid, eps: f64) -> ConformalMetric {
    ConformalMetric::flat(single_mode(&g, eps, 0, 1).unwrap()).unwrap()
}

/// Records of every run, for the Moser criterion.
#[derive(Default)]
struct Pool(Vec<DiagnosticsRecord>);

fn static_fixed_point(pool: &mut Pool) -> Verdict {
    let started = Instant::now();
    let g = unit(32);
    let mut ws = SpectralWorkspace::new(g);
    let cm = ConformalMetric::flat(ScalarField::constant(g, 1.0)).unwrap();
    let dt = stable_dt(&cm, &FlowConfig::default());
    let cfg = FlowConfig {
        t_max: 1000.0 * dt * (1.0 - 1e-9),
        dt: Some(dt),
        tol_r: 0.0,
        record_every: 100,
        ..Default::default()
    };
    let run = run_flow(cm, &cfg, &DiagnosticsConfig::default(), &mut ws, &mut NullSink).unwrap();
    let drift = run.final_state.cm.factor().map(|u| u - 1.0).max_abs();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("static.csv");
    write_csv(&path, &run.trajectory.records).unwrap();
    let rows = read_csv(&path).unwrap();
    let curvature = rows
        .iter()
        .flat_map(|r| [r.r_min, r.r_max, r.r_l1, r.evo_r_residual_l2])
        .fold(0.0f64, |a, v| a.max(v.abs()));
    pool.0.extend(rows);
    let elapsed = started.elapsed();
    verdict(
        run.final_state.step_count == 1000 && drift <= 1e-12 && curvature <= 1e-12 && elapsed < Duration::from_secs(5),
        format!(
            "steps {}, sup|u-1| {drift:.1e}, max curvature column {curvature:.1e}, {:.2} s",
            run.final_state.step_count,
            elapsed.as_secs_f64()
        ),
    )
}

fn linear_decay(pool: &mut Pool) -> Verdict {
    let started = Instant::now();
    let g = unit(32);
    let mut ws = SpectralWorkspace::new(g);
    let eps = 1e-4;
    let tau = 0.005;
    let cm = cosine(g, eps);
    let dt = stable_dt(&cm, &FlowConfig::default());
    let steps = (tau / dt).ceil() as usize;
    let cfg = FlowConfig {
        t_max: tau * (1.0 - 1e-12),
        dt: Some(tau / steps as f64),
        tol_r: 0.0,
        record_every: 25,
        ..Default::default()
    };
    let a0 = mode_amplitude(cm.factor());
    let run = run_flow(cm, &cfg, &DiagnosticsConfig::default(), &mut ws, &mut NullSink).unwrap();
    pool.0.extend(run.trajectory.records.iter().copied());
    let a1 = mode_amplitude(run.final_state.cm.factor());
    let rate = -(a1 / a0).ln() / run.final_state.t;
    let expected = 2.0 * 4.0 * PI * PI;
    let rel = (rate - expected).abs() / expected;
    let elapsed = started.elapsed();
    verdict(
        rel < 0.01 && elapsed < Duration::from_secs(10),
        format!(
            "rate {rate:.4} vs {expected:.4} (rel {rel:.1e}), {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn residual_orders(pool: &mut Pool) -> Verdict {
    let started = Instant::now();
    let base = unit(16);
    let u_of = |g: PeriodicGrid| {
        ScalarField::from_fn(g, |x| 1.0 + 0.05 * x[..3].iter().map(|c| (2.0 * PI * c).cos()).sum::<f64>()).unwrap()
    };
    let dt0 = stable_dt(&ConformalMetric::flat(u_of(base)).unwrap(), &FlowConfig::default());
    let horizon = 24.0 * dt0;
    let mut vol = Vec::new();
    let mut evo = Vec::new();
    for (m, refine) in [(16usize, 1usize), (32, 4), (64, 16)] {
        let g = unit(m);
        let mut ws = SpectralWorkspace::new(g);
        let dt = dt0 / refine as f64;
        let cfg = FlowConfig {
            t_max: horizon * (1.0 - 1e-12),
            dt: Some(dt),
            tol_r: 0.0,
            record_every: 4 * refine,
            ..Default::default()
        };
        let run = run_flow(ConformalMetric::flat(u_of(g)).unwrap(), &cfg, &DiagnosticsConfig::default(), &mut ws, &mut NullSink)
            .unwrap();
        let recs = &run.trajectory.records;
        // Centered differences exist only between the first and last record.
        let interior = &recs[1..recs.len() - 1];
        vol.push(interior.iter().map(|r| r.vol_identity_residual).fold(0.0, f64::max));
        evo.push(interior.iter().map(|r| r.evo_r_residual_l2).fold(0.0, f64::max));
        pool.0.extend(recs.iter().copied());
    }
    // Each level divides dt by 4.
    let order = |e: &[f64]| ((e[0] / e[1]).ln() / 4f64.ln()).min((e[1] / e[2]).ln() / 4f64.ln());
    let (ov, oe) = (order(&vol), order(&evo));
    let elapsed = started.elapsed();
    verdict(
        ov >= 1.8 && oe >= 1.8 && vol[2] < 1e-5 && evo[2] < 1e-5 && elapsed < Duration::from_secs(120),
        format!(
            "volume {:.2e}/{:.2e}/{:.2e} order {ov:.2}; evolution {:.2e}/{:.2e}/{:.2e} order {oe:.2}; {:.1} s",
            vol[0],
            vol[1],
            vol[2],
            evo[0],
            evo[1],
            evo[2],
            elapsed.as_secs_f64()
        ),
    )
}

fn extremum_principles() -> Verdict {
    let g = unit(16);
    let mut ws = SpectralWorkspace::new(g);
    let mut s = FlowState::initial(cosine(g, 0.1));
    let dt = stable_dt(&s.cm, &FlowConfig::default());
    let (mut worst_min, mut worst_max) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..10_000 {
        let next = step_rk4(&s, dt, 1e-8, &mut ws).unwrap();
        worst_min = worst_min.max(s.cm.factor().min() - next.cm.factor().min());
        worst_max = worst_max.max(next.cm.factor().max() - s.cm.factor().max());
        s = next;
    }
    verdict(
        worst_min <= 1e-10 && worst_max <= 1e-10,
        format!(
            "10^4 steps to t = {:.3}: worst min-u decrease {worst_min:.1e}, worst max-u increase {worst_max:.1e}",
            s.t
        ),
    )
}

fn scaling_symmetry() -> Verdict {
    let g = unit(32);
    let mut ws = SpectralWorkspace::new(g);
    let u0 = gen_bandlimited(&g, 5, 0.2, 2).unwrap();
    let base = ConformalMetric::flat(u0.clone()).unwrap();
    let scaled = ConformalMetric::flat(u0.map(|u| 2.0 * u)).unwrap();
    let cfg = FlowConfig::default();
    let (dt, dt_scaled) = (stable_dt(&base, &cfg), stable_dt(&scaled, &cfg));
    let (mut a, mut b) = (FlowState::initial(base), FlowState::initial(scaled));
    let mut worst = 0.0f64;
    for _ in 0..10 {
        for _ in 0..20 {
            a = step_rk4(&a, dt, 1e-8, &mut ws).unwrap();
            b = step_rk4(&b, dt_scaled, 1e-8, &mut ws).unwrap();
        }
        let rel = a
            .cm
            .factor()
            .values()
            .iter()
            .zip(b.cm.factor().values())
            .map(|(x, y)| (2.0 * x - y).abs() / y.abs())
            .fold(0.0, f64::max);
        worst = worst.max(rel);
    }
    verdict(
        worst <= 1e-8 && dt_scaled == 16.0 * dt && b.t == 16.0 * a.t,
        format!("dt ratio {}, worst relative gap over 10 matched times {worst:.1e}", dt_scaled / dt),
    )
}

fn conformal_composition() -> Verdict {
    let g = unit(32);
    let mut ws = SpectralWorkspace::new(g);
    let mut worst = 0.0f64;
    for pair in 0..20u64 {
        let u = gen_bandlimited(&g, 100 + pair, 0.3, 1).unwrap();
        let v = gen_bandlimited(&g, 200 + pair, 0.2, 1).unwrap();
        let uv = u.zip_map(&v, |a, b| a * b).unwrap();
        let bg = std::sync::Arc::new(Background::conformally_flat(v, &mut ws).unwrap());
        let composed = ConformalMetric::new(bg, u).unwrap().scalar_curvature(&mut ws).unwrap();
        let direct = ConformalMetric::flat(uv).unwrap().scalar_curvature(&mut ws).unwrap();
        let scale = direct.max_abs();
        let gap = composed.zip_map(&direct, |a, b| a - b).unwrap().max_abs() / scale;
        worst = worst.max(gap);
    }
    verdict(worst <= 1e-8, format!("worst relative gap over 20 pairs {worst:.1e}"))
}

fn headline_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.flow.record_every = 20;
    cfg.output.plots = false;
    cfg
}

fn headline(pool: &mut Pool, csvs: &mut Vec<Vec<Vec<u8>>>) -> Verdict {
    let started = Instant::now();
    let cfg = headline_config();
    let result = match run_sequence_experiment(&cfg) {
        Ok(r) => r,
        Err(abort) => return verdict(false, format!("sequence aborted: {}", abort.error)),
    };
    let elapsed = started.elapsed();
    let dir = tempfile::tempdir().unwrap();
    emit_sequence_outputs(dir.path(), &cfg, &result).unwrap();
    csvs.push(
        result
            .members
            .iter()
            .map(|m| fs::read(dir.path().join(format!("member_{:02}.csv", m.index))).unwrap())
            .collect(),
    );
    for m in &result.members {
        pool.0.extend(m.trajectory.records.iter().copied());
    }
    let s = &result.summary;
    let calib = result
        .members
        .iter()
        .map(|m| (m.initial_min_curvature + m.delta).abs() / m.delta)
        .fold(0.0, f64::max);
    let flats: Vec<String> = result.members.iter().map(|m| format!("{:.2e}", m.final_flat_distance)).collect();
    let passed = s.calibration_ok
        && s.audits_ok
        && s.flat_distance_non_increasing
        && s.last_below_threshold
        && s.drift_trend_ok
        && elapsed < Duration::from_secs(600);
    verdict(
        passed,
        format!(
            "calibration error {calib:.1e}, audits {}, final flat distances [{}], drift slope ratio {:.1}, {:.0} s",
            if s.audits_ok { "pass" } else { "FAIL" },
            flats.join(", "),
            s.drift_slope_ratio,
            elapsed.as_secs_f64()
        ),
    )
}

fn moser(pool: &Pool) -> Verdict {
    let lowest = pool.0.iter().map(|r| r.moser_ratio).fold(f64::INFINITY, f64::min);
    let constant: Vec<&DiagnosticsRecord> = pool.0.iter().filter(|r| r.u_min == r.u_max).collect();
    let worst_constant = constant.iter().map(|r| (r.moser_ratio - 1.0).abs()).fold(0.0, f64::max);
    verdict(
        lowest >= 1.0 - 1e-10 && worst_constant <= 1e-8 && !constant.is_empty(),
        format!(
            "{} records, min ratio {lowest:.12}, {} constant-u records within {worst_constant:.1e} of 1",
            pool.0.len(),
            constant.len()
        ),
    )
}

fn determinism(csvs: &mut Vec<Vec<Vec<u8>>>) -> Verdict {
    while csvs.len() < 2 {
        let before = csvs.len();
        let _ = headline(&mut Pool::default(), csvs);
        if csvs.len() == before {
            break;
        }
    }
    if csvs.len() != 2 {
        return verdict(false, "headline run did not complete twice".into());
    }
    let identical = csvs[0] == csvs[1];
    let bytes: usize = csvs[0].iter().map(Vec::len).sum();
    verdict(identical && !csvs[0].is_empty(), format!("{} member CSVs, {bytes} bytes, identical: {identical}", csvs[0].len()))
}

/// Criteria to run: all of them, or those listed as arguments.
fn selection() -> Vec<usize> {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if picked.is_empty() {
        (1..=9).collect()
    } else {
        picked
    }
}

fn main() -> ExitCode {
    let selected = selection();
    let mut pool = Pool::default();
    let mut csvs = Vec::new();
    let mut results: Vec<(usize, Verdict)> = Vec::new();
    for i in selected {
        let (name, v) = match i {
            1 => ("static fixed point", static_fixed_point(&mut pool)),
            2 => ("linear decay rate", linear_decay(&mut pool)),
            3 => ("identity residual orders", residual_orders(&mut pool)),
            4 => ("min/max principles", extremum_principles()),
            5 => ("scaling symmetry", scaling_symmetry()),
            6 => ("conformal composition", conformal_composition()),
            7 => ("stability sequence", headline(&mut pool, &mut csvs)),
            8 => ("Moser ratio", moser(&pool)),
            9 => ("determinism", determinism(&mut csvs)),
            _ => continue,
        };
        println!("{} criterion {i} ({name}): {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        results.push((i, v));
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.1.passed).map(|r| r.0).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
