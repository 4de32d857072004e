//! Single runs and curvature-controlled sequences of runs.

pub mod config;
pub mod generate;
pub mod output;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    assumptions_check, flat_distance, lp_convergence_check, min_r_monotonicity, volume_drift_fit,
    volume_drift_slope, AssumptionsAudit, DriftFit, LpReport, MonotonicityReport,
};
use crate::error::Error;
use crate::flow::{run_flow, FlowAbort, FlowRun, NullSink, RecordSink, Trajectory};
use crate::grid::ScalarField;
use crate::spectral::SpectralWorkspace;

pub use config::{parse_config, p0_threshold, ExperimentConfig};
pub use generate::{bandlimited_shape, calibrate_delta_family, gen_bandlimited, CalibratedMember};

/// Trajectory-level checks shared by single runs and sequence members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryChecks {
    pub min_r_monotonicity: MonotonicityReport,
    /// One fit per configured alpha; empty with fewer than 10 records.
    pub drift_fits: Vec<DriftFit>,
    /// `max |Vol(t) - Vol(0)| / t`.
    pub drift_slope: f64,
    pub lp_reports: Vec<LpReport>,
}

fn trajectory_checks(trajectory: &Trajectory, cfg: &ExperimentConfig) -> TrajectoryChecks {
    let records = &trajectory.records;
    let drift_fits = if records.len() >= 10 {
        cfg.diagnostics
            .alpha
            .iter()
            .filter_map(|&a| volume_drift_fit(records, a).ok())
            .collect()
    } else {
        Vec::new()
    };
    TrajectoryChecks {
        min_r_monotonicity: min_r_monotonicity(records),
        drift_fits,
        drift_slope: volume_drift_slope(records),
        lp_reports: cfg
            .diagnostics
            .p
            .iter()
            .filter_map(|&p| lp_convergence_check(trajectory, p).ok())
            .collect(),
    }
}

/// Machine-readable outcome of `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub initial_audit: Option<AssumptionsAudit>,
    pub steps: usize,
    pub final_time: f64,
    pub dt: f64,
    /// The run ended through the curvature tolerance.
    pub converged: bool,
    pub volume_initial: f64,
    pub volume_final: f64,
    pub final_flat_distance: f64,
    pub final_sup_curvature: f64,
    /// `max phi / ((n-1) k_min^2)`: converts `sup |R|` into a bound on the
    /// flat distance in the linear regime.
    pub flat_kappa: f64,
    pub checks: TrajectoryChecks,
    pub failure: Option<String>,
}

pub struct RunOutcome {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    /// Final conformal factor of a completed run.
    pub final_factor: Option<ScalarField>,
    /// Error of an aborted run; the trajectory holds the records before it.
    pub error: Option<Error>,
}

/// Runs the flow described by `cfg`. Configuration errors are returned
/// directly; a flow failure still yields an outcome with the partial
/// trajectory and `error` set.
pub fn run_experiment<S: RecordSink>(cfg: &ExperimentConfig, sink: &mut S) -> crate::Result<RunOutcome> {
    cfg.validate()?;
    let (background, mut ws) = cfg.build_background()?;
    let cm0 = cfg.build_initial(background)?;
    let d = &cfg.diagnostics;
    let audit = assumptions_check(&cm0, d.lambda, d.p0, d.delta);
    let volume_initial = cm0.volume();
    let result = run_flow(cm0, &cfg.flow, &d.record_config(), &mut ws, sink);
    Ok(match result {
        Ok(run) => {
            let checks = trajectory_checks(&run.trajectory, cfg);
            let cm = &run.final_state.cm;
            let sup_r = cm.scalar_curvature(&mut ws)?.max_abs();
            let summary = RunSummary {
                config: cfg.clone(),
                initial_audit: Some(audit),
                steps: run.final_state.step_count,
                final_time: run.final_state.t,
                dt: run.dt,
                converged: run.converged,
                volume_initial,
                volume_final: cm.volume(),
                final_flat_distance: flat_distance(cm),
                final_sup_curvature: sup_r,
                flat_kappa: flat_kappa(cm),
                checks,
                failure: None,
            };
            RunOutcome {
                summary,
                final_factor: Some(run.final_state.cm.factor().clone()),
                trajectory: run.trajectory,
                error: None,
            }
        }
        Err(FlowAbort { error, trajectory }) => {
            let last = trajectory.records.last();
            let summary = RunSummary {
                config: cfg.clone(),
                initial_audit: Some(audit),
                steps: 0,
                final_time: last.map_or(0.0, |r| r.t),
                dt: last.map_or(0.0, |r| r.dt),
                converged: false,
                volume_initial,
                volume_final: last.map_or(volume_initial, |r| r.vol_g),
                final_flat_distance: trajectory.flat_distances.last().copied().unwrap_or(f64::NAN),
                final_sup_curvature: last.map_or(f64::NAN, |r| r.r_min.abs().max(r.r_max.abs())),
                flat_kappa: f64::NAN,
                checks: trajectory_checks(&trajectory, cfg),
                failure: Some(error.to_string()),
            };
            RunOutcome {
                summary,
                trajectory,
                final_factor: None,
                error: Some(error),
            }
        }
    })
}

/// Linearization constant relating `sup |R|` to [`flat_distance`].
pub fn flat_kappa(cm: &crate::conformal::ConformalMetric) -> f64 {
    let grid = cm.grid();
    let n = grid.dim() as f64;
    let longest = grid.lengths().iter().copied().fold(0.0, f64::max);
    let k_min = 2.0 * std::f64::consts::PI / longest;
    cm.euclidean_coefficient().max() / ((n - 1.0) * k_min * k_min)
}

/// One member of a sequence experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberResult {
    /// One-based member index.
    pub index: usize,
    pub delta: f64,
    pub amplitude: f64,
    pub initial_min_curvature: f64,
    pub initial_audit: AssumptionsAudit,
    pub initial_flat_distance: f64,
    pub final_flat_distance: f64,
    pub final_sup_curvature: f64,
    pub volume_initial: f64,
    pub volume_final: f64,
    pub steps: usize,
    pub converged: bool,
    pub checks: TrajectoryChecks,
    /// Wall-clock seconds; the only non-deterministic field.
    pub runtime_seconds: f64,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

impl MemberResult {
    pub fn volume_drift(&self) -> f64 {
        self.volume_final - self.volume_initial
    }
}

/// Cross-member checks of the sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSummary {
    /// Every member's initial `min R` lies within 1% of `-delta_i`.
    pub calibration_ok: bool,
    /// Every member passes the hypothesis audit.
    pub audits_ok: bool,
    /// Indices `i` with `final_flat_distance[i+1] > 1.1 final_flat_distance[i]`.
    pub monotonicity_violations: Vec<usize>,
    pub flat_distance_non_increasing: bool,
    pub last_flat_distance: f64,
    pub last_below_threshold: bool,
    /// `drift_slope` of the first member over that of the last.
    pub drift_slope_ratio: f64,
    pub drift_trend_ok: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub members: Vec<MemberResult>,
    pub summary: SequenceSummary,
}

/// A sequence that stopped at a failing member.
#[derive(Debug)]
pub struct SequenceAbort {
    pub error: Error,
    /// Members that completed, in index order.
    pub completed: Vec<MemberResult>,
}

impl From<Error> for SequenceAbort {
    fn from(error: Error) -> Self {
        Self {
            error,
            completed: Vec::new(),
        }
    }
}

/// Calibrates the family `g_i` with `min R(g_i) = -delta_i` from one fixed
/// shape and flows every member to `t_max`. Members run in parallel;
/// results keep the index order.
pub fn run_sequence_experiment(cfg: &ExperimentConfig) -> Result<SequenceResult, SequenceAbort> {
    cfg.validate()?;
    let (background, mut ws) = cfg.build_background()?;
    let shape = bandlimited_shape(background.grid(), cfg.sequence.base_seed, cfg.sequence.kmax)?;
    let members = calibrate_delta_family(&background, &shape, &cfg.sequence.schedule(), &mut ws)?;
    let outcomes: Vec<Result<MemberResult, Error>> = members
        .into_par_iter()
        .enumerate()
        .map(|(i, member)| {
            run_member(i + 1, member, cfg).map_err(|e| Error::Member {
                index: i + 1,
                source: Box::new(e),
            })
        })
        .collect();
    let mut completed = Vec::with_capacity(outcomes.len());
    let mut first_error = None;
    for outcome in outcomes {
        match outcome {
            Ok(m) => completed.push(m),
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    if let Some(error) = first_error {
        return Err(SequenceAbort { error, completed });
    }
    let summary = summarize(&completed);
    Ok(SequenceResult {
        members: completed,
        summary,
    })
}

fn run_member(index: usize, member: CalibratedMember, cfg: &ExperimentConfig) -> Result<MemberResult, Error> {
    let started = Instant::now();
    let d = &cfg.diagnostics;
    let audit = assumptions_check(&member.metric, d.lambda, d.p0, member.delta);
    let initial_flat_distance = flat_distance(&member.metric);
    let volume_initial = member.metric.volume();
    let mut ws = SpectralWorkspace::with_scheme(*member.metric.grid(), cfg.grid.scheme);
    let FlowRun {
        final_state,
        trajectory,
        converged,
        ..
    } = run_flow(member.metric, &cfg.flow, &d.record_config(), &mut ws, &mut NullSink)?;
    let cm = &final_state.cm;
    Ok(MemberResult {
        index,
        delta: member.delta,
        amplitude: member.amplitude,
        initial_min_curvature: member.min_curvature,
        initial_audit: audit,
        initial_flat_distance,
        final_flat_distance: flat_distance(cm),
        final_sup_curvature: cm.scalar_curvature(&mut ws)?.max_abs(),
        volume_initial,
        volume_final: cm.volume(),
        steps: final_state.step_count,
        converged,
        checks: trajectory_checks(&trajectory, cfg),
        runtime_seconds: started.elapsed().as_secs_f64(),
        trajectory,
    })
}

/// Thresholds of the cross-member checks.
pub const FLAT_DISTANCE_SLACK: f64 = 0.1;
pub const LAST_FLAT_DISTANCE_MAX: f64 = 1e-3;
pub const DRIFT_TREND_MIN_RATIO: f64 = 5.0;

pub fn summarize(members: &[MemberResult]) -> SequenceSummary {
    let calibration_ok = members
        .iter()
        .all(|m| m.initial_min_curvature >= -1.01 * m.delta && m.initial_min_curvature <= -0.99 * m.delta);
    let audits_ok = members.iter().all(|m| m.initial_audit.passed);
    let monotonicity_violations: Vec<usize> = members
        .windows(2)
        .filter(|w| w[1].final_flat_distance > (1.0 + FLAT_DISTANCE_SLACK) * w[0].final_flat_distance)
        .map(|w| w[0].index)
        .collect();
    let last_flat_distance = members.last().map_or(0.0, |m| m.final_flat_distance);
    let drift_slope_ratio = match (members.first(), members.last()) {
        (Some(a), Some(b)) if b.checks.drift_slope > 0.0 => a.checks.drift_slope / b.checks.drift_slope,
        (Some(a), Some(_)) if a.checks.drift_slope > 0.0 => f64::INFINITY,
        _ => 1.0,
    };
    let flat_distance_non_increasing = monotonicity_violations.is_empty();
    let last_below_threshold = last_flat_distance < LAST_FLAT_DISTANCE_MAX;
    let drift_trend_ok = members.len() < 2 || drift_slope_ratio >= DRIFT_TREND_MIN_RATIO;
    SequenceSummary {
        calibration_ok,
        audits_ok,
        passed: calibration_ok
            && audits_ok
            && flat_distance_non_increasing
            && last_below_threshold
            && drift_trend_ok,
        monotonicity_violations,
        flat_distance_non_increasing,
        last_flat_distance,
        last_below_threshold,
        drift_slope_ratio,
        drift_trend_ok,
    }
}
