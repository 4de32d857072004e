use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use yamabe_core::experiment::config::ExperimentConfig;
use yamabe_core::experiment::generate::{bandlimited_shape, calibrate_delta_family, gen_bandlimited, CalibrationEntry};
use yamabe_core::experiment::output::{emit_run_outputs, emit_sequence_outputs, write_json, write_snapshot};
use yamabe_core::experiment::{parse_config, run_experiment, run_sequence_experiment, summarize, SequenceResult};
use yamabe_core::selfcheck::{run_suite, Suite};
use yamabe_core::{Background, Error, NullSink, PeriodicGrid, Result, SpectralWorkspace};

/// Yamabe flow experiments on flat and conformally flat tori.
#[derive(Parser)]
#[command(name = "yamabe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flow one initial metric and write its trajectory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to `output.dir` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate a curvature-controlled family and flow every member.
    Sequence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in property suites.
    Check {
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Write initial-data snapshots.
    Gen {
        #[arg(long, value_enum)]
        kind: GenKind,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        m: usize,
        /// Sup-norm of `log u` (band-limited data).
        #[arg(long, default_value_t = 0.3)]
        amplitude: f64,
        #[arg(long, default_value_t = 2)]
        kmax: usize,
        /// Number of family members; member `i` gets `delta = 1/i`.
        #[arg(long, default_value_t = 8)]
        count: usize,
        /// Snapshot file for band-limited data, directory for a family.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Bandlimited,
    DeltaFamily,
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn out_dir(out: Option<PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf> {
    out.or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::InvalidArgument("no output directory: pass --out or set output.dir".into()))
}

fn cmd_run(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config)?;
    let dir = out_dir(out, &cfg)?;
    let outcome = run_experiment(&cfg, &mut NullSink)?;
    emit_run_outputs(&dir, &outcome)?;
    let s = &outcome.summary;
    println!(
        "records {}  t {:.6e}  flat distance {:.3e}  sup|R| {:.3e}  volume {:.6} -> {:.6}",
        outcome.trajectory.len(),
        s.final_time,
        s.final_flat_distance,
        s.final_sup_curvature,
        s.volume_initial,
        s.volume_final
    );
    println!("outputs in {}", dir.display());
    match outcome.error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn print_sequence(result: &SequenceResult) {
    println!("  i      delta   amplitude    min R(0)   flat(0)     flat(T)    drift slope");
    for m in &result.members {
        println!(
            "{:>3} {:>10.4e} {:>11.4e} {:>11.4e} {:>9.3e} {:>11.3e} {:>13.4e}",
            m.index,
            m.delta,
            m.amplitude,
            m.initial_min_curvature,
            m.initial_flat_distance,
            m.final_flat_distance,
            m.checks.drift_slope
        );
    }
    let s = &result.summary;
    let mark = |ok: bool| if ok { "ok" } else { "FAILED" };
    println!("calibration within 1%: {}", mark(s.calibration_ok));
    println!("hypothesis audits: {}", mark(s.audits_ok));
    println!(
        "flat distance non-increasing (10% slack): {} {:?}",
        mark(s.flat_distance_non_increasing),
        s.monotonicity_violations
    );
    println!("last flat distance {:.3e} < 1e-3: {}", s.last_flat_distance, mark(s.last_below_threshold));
    println!("drift slope ratio first/last {:.3}: {}", s.drift_slope_ratio, mark(s.drift_trend_ok));
}

fn cmd_sequence(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config)?;
    let dir = out_dir(out, &cfg)?;
    match run_sequence_experiment(&cfg) {
        Ok(result) => {
            emit_sequence_outputs(&dir, &cfg, &result)?;
            print_sequence(&result);
            println!("outputs in {}", dir.display());
            Ok(())
        }
        Err(abort) => {
            let partial = SequenceResult {
                summary: summarize(&abort.completed),
                members: abort.completed,
            };
            emit_sequence_outputs(&dir, &cfg, &partial)?;
            print_sequence(&partial);
            Err(abort.error)
        }
    }
}

fn cmd_check(suite: &str) -> Result<bool> {
    let suite: Suite = suite.parse()?;
    let outcomes = run_suite(suite);
    for o in &outcomes {
        match &o.failure {
            None => println!("PASS {}::{}", o.suite, o.name),
            Some(msg) => println!("FAIL {}::{}: {msg}", o.suite, o.name),
        }
    }
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    Ok(failed == 0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(kind: GenKind, seed: u64, n: usize, m: usize, amplitude: f64, kmax: usize, count: usize, out: &Path) -> Result<()> {
    let grid = PeriodicGrid::unit(n, m)?;
    match kind {
        GenKind::Bandlimited => {
            let u = gen_bandlimited(&grid, seed, amplitude, kmax)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|source| Error::Io {
                    path: parent.to_path_buf(),
                    source,
                })?;
            }
            write_snapshot(out, &u)?;
            println!("min u {:.6}  max u {:.6}  -> {}", u.min(), u.max(), out.display());
        }
        GenKind::DeltaFamily => {
            if count == 0 {
                return Err(Error::InvalidArgument("--count must be at least 1".into()));
            }
            fs::create_dir_all(out).map_err(|source| Error::Io {
                path: out.to_path_buf(),
                source,
            })?;
            let mut ws = SpectralWorkspace::new(grid);
            let background = Arc::new(Background::flat(grid));
            let shape = bandlimited_shape(&grid, seed, kmax)?;
            let deltas: Vec<f64> = (1..=count).map(|i| 1.0 / i as f64).collect();
            let members = calibrate_delta_family(&background, &shape, &deltas, &mut ws)?;
            let mut entries: Vec<CalibrationEntry> = Vec::new();
            for (i, member) in members.iter().enumerate() {
                let path = out.join(format!("member_{:02}.bin", i + 1));
                write_snapshot(&path, member.metric.factor())?;
                entries.push(member.entry(i + 1));
                println!(
                    "{:>3} delta {:.4e}  amplitude {:.4e}  min R {:.4e}",
                    i + 1,
                    member.delta,
                    member.amplitude,
                    member.min_curvature
                );
            }
            write_json(&out.join("calibration.json"), &entries)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run { config, out } => cmd_run(&config, out),
        Command::Sequence { config, out } => cmd_sequence(&config, out),
        Command::Check { suite } => match cmd_check(&suite) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(2),
            Err(e) => Err(e),
        },
        Command::Gen {
            kind,
            seed,
            n,
            m,
            amplitude,
            kmax,
            count,
            out,
        } => cmd_gen(kind, seed, n, m, amplitude, kmax, count, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
