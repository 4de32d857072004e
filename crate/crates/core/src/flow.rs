//! Yamabe flow `dg/dt = -R g` for `g = u^{4/(n-2)} h`.
//!
//! The conformal factor is advanced in non-conservative form,
//!
//! ```text
//! du/dt = (n-1) u^{-4/(n-2)} Delta_h u - (n-2)/4 R_h u^{(n-6)/(n-2)},
//! ```
//!
//! with classical RK4 and a diffusive CFL step. Positivity is enforced by
//! failing, never by clamping.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::conformal::{check_positive, ipow, ConformalMetric};
use crate::diagnostics::{self, DiagnosticsConfig, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::spectral::SpectralWorkspace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Time horizon.
    pub t_max: f64,
    pub cfl_safety: f64,
    /// Stop once `sup |R_g| < tol_r` (checked after the first step).
    pub tol_r: f64,
    pub record_every: usize,
    /// Positivity guard for `u` at every RK stage.
    pub u_floor: f64,
    /// Fixed time step. When absent the CFL step of the initial data is used
    /// and only ever reduced, if the CFL bound of a later state falls below it.
    pub dt: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            t_max: 0.1,
            cfl_safety: 0.25,
            tol_r: 1e-8,
            record_every: 10,
            u_floor: 1e-8,
            dt: None,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max must be positive (got {})", self.t_max));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad(format!("cfl_safety must lie in (0, 1] (got {})", self.cfl_safety));
        }
        if !(self.tol_r >= 0.0) {
            return bad(format!("tol_r must be non-negative (got {})", self.tol_r));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if !(self.u_floor >= 0.0) {
            return bad(format!("u_floor must be non-negative (got {})", self.u_floor));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("dt must be positive (got {dt})"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub cm: ConformalMetric,
    pub step_count: usize,
}

impl FlowState {
    pub fn initial(cm: ConformalMetric) -> Self {
        Self {
            t: 0.0,
            cm,
            step_count: 0,
        }
    }
}

/// `du/dt` of the flow at `cm`; equals `-(n-2)/4 R_g u`.
pub fn yamabe_rhs(cm: &ConformalMetric, ws: &mut SpectralWorkspace) -> Result<ScalarField> {
    let e = cm.exponents();
    let n = e.n as f64;
    let lap = cm.background().laplacian(cm.factor(), ws)?;
    let r_h = cm.background().scalar_curvature().values();
    let out = cm
        .factor()
        .values()
        .iter()
        .zip(lap.values())
        .zip(r_h)
        .map(|((&u, &l), &r)| ((n - 1.0) * l - 0.25 * (n - 2.0) * r * u) * ipow(u, -e.conformal()))
        .collect();
    ScalarField::from_values(*cm.grid(), out)
}

/// `cfl_safety * h_min^2 / (2n (n-1) max (u v)^{-4/(n-2)})`.
pub fn stable_dt(cm: &ConformalMetric, cfg: &FlowConfig) -> f64 {
    let e = cm.exponents();
    let n = e.n as f64;
    let h = cm.grid().min_spacing();
    let diffusivity = cm.composite_power(-e.conformal()).max();
    cfg.cfl_safety * h * h / (2.0 * n * (n - 1.0) * diffusivity)
}

/// Lower bound on `min u(t)` from the minimum principle:
/// `min u(t)^{4/(n-2)} >= min u_0^{4/(n-2)} - sup |R_h| t`.
/// Returns zero once the right-hand side is no longer positive.
pub fn min_principle_bound(n: usize, min_u0: f64, sup_r_h: f64, t: f64) -> f64 {
    let k = 4.0 / (n as f64 - 2.0);
    let base = min_u0.powf(k) - sup_r_h * t;
    if base > 0.0 {
        base.powf(1.0 / k)
    } else {
        0.0
    }
}

/// One classical RK4 step.
pub fn step_rk4(
    state: &FlowState,
    dt: f64,
    u_floor: f64,
    ws: &mut SpectralWorkspace,
) -> Result<FlowState> {
    let k1 = yamabe_rhs(&state.cm, ws)?;
    step_with_first_stage(state, dt, u_floor, k1, ws)
}

fn step_with_first_stage(
    state: &FlowState,
    dt: f64,
    u_floor: f64,
    k1: ScalarField,
    ws: &mut SpectralWorkspace,
) -> Result<FlowState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive (got {dt})")));
    }
    let u = state.cm.factor();
    let stage = |k: &ScalarField, c: f64, t: f64| -> Result<ConformalMetric> {
        let values: Vec<f64> = u
            .values()
            .iter()
            .zip(k.values())
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(state.cm.with_checked_factor(guard(values, u, u_floor, t)?))
    };
    let half = 0.5 * dt;
    let k2 = yamabe_rhs(&stage(&k1, half, state.t + half)?, ws)?;
    let k3 = yamabe_rhs(&stage(&k2, half, state.t + half)?, ws)?;
    let k4 = yamabe_rhs(&stage(&k3, dt, state.t + dt)?, ws)?;
    let sixth = dt / 6.0;
    let next: Vec<f64> = u
        .values()
        .iter()
        .zip(k1.values().iter().zip(k2.values()))
        .zip(k3.values().iter().zip(k4.values()))
        .map(|((&u, (&a, &b)), (&c, &d))| u + sixth * (a + 2.0 * b + 2.0 * c + d))
        .collect();
    let t = state.t + dt;
    Ok(FlowState {
        t,
        cm: state.cm.with_checked_factor(guard(next, u, u_floor, t)?),
        step_count: state.step_count + 1,
    })
}

/// Non-finite values mean instability; values at or below the floor mean
/// degeneration. Checked in that order, in one pass.
fn guard(values: Vec<f64>, like: &ScalarField, floor: f64, t: f64) -> Result<ScalarField> {
    let mut finite = true;
    let (mut index, mut min_u) = (0, f64::INFINITY);
    for (i, &v) in values.iter().enumerate() {
        finite &= v.is_finite();
        if v < min_u {
            (index, min_u) = (i, v);
        }
    }
    if !finite {
        return Err(Error::Unstable { t });
    }
    if min_u <= floor.max(0.0) {
        return Err(Error::Degenerate {
            t,
            min_u,
            index,
            floor,
        });
    }
    Ok(ScalarField::from_raw(*like.grid(), values))
}

/// Consumer of diagnostics records, fed in time order.
pub trait RecordSink {
    fn record(&mut self, record: &DiagnosticsRecord);

    /// Called once if the run aborts; records already delivered stand.
    fn failure(&mut self, _error: &Error) {}
}

/// Sink that discards everything.
pub struct NullSink;

impl RecordSink for NullSink {
    fn record(&mut self, _record: &DiagnosticsRecord) {}
}

impl RecordSink for Vec<DiagnosticsRecord> {
    fn record(&mut self, record: &DiagnosticsRecord) {
        self.push(*record);
    }
}

/// `L^p` distance to the initial metric for one exponent, per record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProfile {
    pub p: f64,
    pub distances: Vec<f64>,
}

/// Records of one run. `lp_profiles[0]` mirrors the `lp_dist_initial` column.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub lp_profiles: Vec<LpProfile>,
    /// Sup-distance to the nearest flat metric, per record.
    pub flat_distances: Vec<f64>,
    /// Set when the run aborted.
    pub failure: Option<String>,
}

impl Trajectory {
    fn new(exponents: &[f64]) -> Self {
        Self {
            records: Vec::new(),
            lp_profiles: exponents
                .iter()
                .map(|&p| LpProfile {
                    p,
                    distances: Vec::new(),
                })
                .collect(),
            flat_distances: Vec::new(),
            failure: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub final_state: FlowState,
    pub trajectory: Trajectory,
    /// True when the run ended through `sup |R| < tol_r`.
    pub converged: bool,
    /// Step size in use at the end of the run.
    pub dt: f64,
}

/// A failed run with everything recorded before the failure.
#[derive(Debug)]
pub struct FlowAbort {
    pub error: Error,
    pub trajectory: Trajectory,
}

impl From<FlowAbort> for Error {
    fn from(abort: FlowAbort) -> Self {
        abort.error
    }
}

struct Slot {
    state: FlowState,
    dt_in: f64,
    curvature: Option<ScalarField>,
}

struct Recorder<'a, S: RecordSink> {
    initial: ConformalMetric,
    cfg: &'a DiagnosticsConfig,
    sink: &'a mut S,
    trajectory: Trajectory,
    pending: VecDeque<usize>,
}

impl<S: RecordSink> Recorder<'_, S> {
    /// Emits pending records whose time window is available. With `finish`,
    /// emits every pending record using whatever neighbours exist.
    fn flush(
        &mut self,
        ring: &mut VecDeque<Slot>,
        ws: &mut SpectralWorkspace,
        finish: bool,
    ) -> Result<()> {
        while let Some(&k) = self.pending.front() {
            let first = ring.front().map_or(0, |s| s.state.step_count);
            let last = ring.back().map_or(0, |s| s.state.step_count);
            let ready = if finish {
                true
            } else {
                last > k && (k >= 1 || last >= k + 2)
            };
            if !ready {
                break;
            }
            self.pending.pop_front();
            if k < first || last == first {
                // No time neighbour left to difference against.
                continue;
            }
            let lo = if k < last && k > first {
                k - 1
            } else if k == first {
                k
            } else {
                last.saturating_sub(2).max(first)
            };
            let hi = (lo + 2).min(last);
            let window: Vec<usize> = (lo - first..=hi - first).collect();
            for &i in &window {
                if ring[i].curvature.is_none() {
                    let r = ring[i].state.cm.scalar_curvature(ws)?;
                    ring[i].curvature = Some(r);
                }
            }
            let here = k - first;
            let times: Vec<f64> = window.iter().map(|&i| ring[i].state.t).collect();
            let fields: Vec<&ScalarField> = window
                .iter()
                .map(|&i| ring[i].curvature.as_ref().expect("filled above"))
                .collect();
            let dr_dt = diagnostics::time_derivative(&times, &fields, ring[here].state.t)?;
            let (a, b) = if here > 0 { (here - 1, here) } else { (here, here + 1) };
            let vol_residual = diagnostics::volume_residual_from_parts(
                &ring[b].state,
                ring[b].curvature.as_ref().expect("in window"),
                &ring[a].state,
                ring[a].curvature.as_ref().expect("in window"),
            )?;
            let slot = &ring[here];
            let (record, extras) = diagnostics::assemble_record(
                &slot.state,
                slot.dt_in,
                slot.curvature.as_ref().expect("in window"),
                &dr_dt,
                vol_residual,
                &self.initial,
                self.cfg,
                ws,
            )?;
            self.sink.record(&record);
            self.trajectory.records.push(record);
            for (profile, d) in self.trajectory.lp_profiles.iter_mut().zip(extras.lp_initial) {
                profile.distances.push(d);
            }
            self.trajectory.flat_distances.push(extras.flat_distance);
        }
        Ok(())
    }
}

/// Integrates until `t >= t_max` or `sup |R| < tol_r`, recording diagnostics
/// every `record_every` steps plus at `t = 0` and at the final time.
#[allow(clippy::result_large_err)]
pub fn run_flow<S: RecordSink>(
    cm0: ConformalMetric,
    cfg: &FlowConfig,
    diag: &DiagnosticsConfig,
    ws: &mut SpectralWorkspace,
    sink: &mut S,
) -> std::result::Result<FlowRun, FlowAbort> {
    let early = |error: Error| FlowAbort {
        error,
        trajectory: Trajectory::new(&diag.lp_exponents),
    };
    cfg.validate().map_err(early)?;
    diag.validate().map_err(early)?;
    cm0.grid().check_same(ws.grid()).map_err(early)?;
    check_positive(cm0.factor()).map_err(early)?;

    let mut dt = cfg.dt.unwrap_or_else(|| stable_dt(&cm0, cfg));
    let mut recorder = Recorder {
        initial: cm0.clone(),
        cfg: diag,
        sink,
        trajectory: Trajectory::new(&diag.lp_exponents),
        pending: VecDeque::from([0]),
    };
    let mut ring = VecDeque::from([Slot {
        state: FlowState::initial(cm0),
        dt_in: dt,
        curvature: None,
    }]);
    let mut converged = false;
    let curvature_scale = 4.0 / (ws.grid().dim() as f64 - 2.0);

    let outcome: Result<()> = (|| {
        loop {
            let current = &ring.back().expect("ring is never empty").state;
            if current.t >= cfg.t_max * (1.0 - 1e-12) {
                break;
            }
            let k1 = yamabe_rhs(&current.cm, ws)?;
            if current.step_count >= 1 {
                // R_g = -(4/(n-2)) (du/dt) / u.
                let sup_r = k1
                    .values()
                    .iter()
                    .zip(current.cm.factor().values())
                    .fold(0.0f64, |acc, (k, u)| acc.max((curvature_scale * k / u).abs()));
                if sup_r < cfg.tol_r {
                    converged = true;
                    break;
                }
            }
            if cfg.dt.is_none() {
                dt = dt.min(stable_dt(&current.cm, cfg));
            }
            let next = step_with_first_stage(current, dt, cfg.u_floor, k1, ws)?;
            let step = next.step_count;
            ring.push_back(Slot {
                state: next,
                dt_in: dt,
                curvature: None,
            });
            if ring.len() > 3 {
                ring.pop_front();
            }
            if step % cfg.record_every == 0 {
                recorder.pending.push_back(step);
            }
            recorder.flush(&mut ring, ws, false)?;
        }
        let last = ring.back().expect("ring is never empty").state.step_count;
        if recorder.pending.back() != Some(&last) && recorder.trajectory.records.last().map(|r| r.t)
            != Some(ring.back().expect("non-empty").state.t)
        {
            recorder.pending.push_back(last);
        }
        recorder.flush(&mut ring, ws, true)
    })();

    match outcome {
        Ok(()) => {
            let final_state = ring.pop_back().expect("ring is never empty").state;
            Ok(FlowRun {
                final_state,
                trajectory: recorder.trajectory,
                converged,
                dt,
            })
        }
        Err(error) => {
            // Best effort: records whose windows exist are still delivered.
            let _ = recorder.flush(&mut ring, ws, true);
            recorder.sink.failure(&error);
            let mut trajectory = recorder.trajectory;
            trajectory.failure = Some(error.to_string());
            Err(FlowAbort { error, trajectory })
        }
    }
}
