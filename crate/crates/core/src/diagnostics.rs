//! Per-record diagnostics and trajectory-level checks.

use serde::{Deserialize, Serialize};

use crate::conformal::{metric_lp_distance, BackgroundKind, ConformalMetric, Measure};
use crate::error::{Error, Result};
use crate::flow::{FlowState, Trajectory};
use crate::grid::ScalarField;
use crate::spectral::SpectralWorkspace;

/// One row of per-record scalar diagnostics. Field names follow the CSV
/// header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub vol_g: f64,
    #[serde(rename = "R_min")]
    pub r_min: f64,
    #[serde(rename = "R_max")]
    pub r_max: f64,
    /// `int |R| dmu_g`.
    #[serde(rename = "R_l1")]
    pub r_l1: f64,
    pub vol_identity_residual: f64,
    #[serde(rename = "evoR_residual_l2")]
    pub evo_r_residual_l2: f64,
    /// Distance to the initial metric for the first configured exponent.
    pub lp_dist_initial: f64,
    /// Distance to the best constant multiple of the Euclidean metric, same
    /// exponent.
    pub lp_dist_flat: f64,
    pub moser_ratio: f64,
}

/// Exact CSV header of a trajectory file.
pub const CSV_HEADER: &str = "t,dt,u_min,u_max,vol_g,R_min,R_max,R_l1,vol_identity_residual,evoR_residual_l2,lp_dist_initial,lp_dist_flat,moser_ratio";

impl DiagnosticsRecord {
    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.dt,
            self.u_min,
            self.u_max,
            self.vol_g,
            self.r_min,
            self.r_max,
            self.r_l1,
            self.vol_identity_residual,
            self.evo_r_residual_l2,
            self.lp_dist_initial,
            self.lp_dist_flat,
            self.moser_ratio,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Exponents of the distance profiles; the first feeds the CSV columns.
    pub lp_exponents: Vec<f64>,
    /// Moser exponent.
    pub epsilon: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            lp_exponents: vec![1.0, 2.0],
            epsilon: 0.5,
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lp_exponents.is_empty() {
            return Err(Error::InvalidArgument("at least one L^p exponent is required".into()));
        }
        if let Some(p) = self.lp_exponents.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidArgument(format!("L^p exponents must be positive (got {p})")));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Moser exponent must be positive (got {})",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// `min_c sup |phi - c| / c` over constants `c > 0`, where `g = phi g_euc`.
/// The optimum is `c = (max phi + min phi) / 2`.
pub fn flat_distance(cm: &ConformalMetric) -> f64 {
    let phi = cm.euclidean_coefficient();
    let (lo, hi) = (phi.min(), phi.max());
    (hi - lo) / (hi + lo)
}

/// `(int |g - c g_euc|_h^p dmu_h)^{1/p}` with `c` the minimax constant of
/// [`flat_distance`].
pub fn lp_distance_to_flat(cm: &ConformalMetric, p: f64) -> Result<f64> {
    let phi = cm.euclidean_coefficient();
    let c = 0.5 * (phi.max() + phi.min());
    let root_n = (cm.grid().dim() as f64).sqrt();
    let gap = match cm.background().inverse_coefficient() {
        None => phi.map(|x| root_n * (x - c).abs()),
        Some(w) => phi.zip_map(w, |x, w| root_n * (x - c).abs() * w)?,
    };
    cm.lp_norm(&gap, p, Measure::Background)
}

/// Derivative at `t` of the Lagrange interpolant through `(times[j], fields[j])`.
pub(crate) fn time_derivative(times: &[f64], fields: &[&ScalarField], t: f64) -> Result<ScalarField> {
    let k = times.len();
    if k < 2 || k != fields.len() {
        return Err(Error::InvalidArgument("time derivative needs at least two states".into()));
    }
    let mut weights = vec![0.0; k];
    for (j, w) in weights.iter_mut().enumerate() {
        let denom: f64 = (0..k).filter(|&l| l != j).map(|l| times[j] - times[l]).product();
        let mut numer = 0.0;
        for m in (0..k).filter(|&m| m != j) {
            numer += (0..k)
                .filter(|&l| l != j && l != m)
                .map(|l| t - times[l])
                .product::<f64>();
        }
        *w = numer / denom;
    }
    let len = fields[0].len();
    let out = (0..len)
        .map(|i| weights.iter().zip(fields).map(|(w, f)| w * f.values()[i]).sum())
        .collect();
    ScalarField::from_values(*fields[0].grid(), out)
}

pub(crate) fn volume_residual_from_parts(
    state: &FlowState,
    r_state: &ScalarField,
    prev: &FlowState,
    r_prev: &ScalarField,
) -> Result<f64> {
    let span = state.t - prev.t;
    if !(span > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "volume identity needs increasing times (got {} then {})",
            prev.t, state.t
        )));
    }
    let n = state.cm.grid().dim() as f64;
    let v1 = prev.cm.volume();
    let v2 = state.cm.volume();
    let i1 = prev.cm.integrate(r_prev, Measure::Metric)?;
    let i2 = state.cm.integrate(r_state, Measure::Metric)?;
    Ok(((v2 - v1) / span + 0.5 * n * 0.5 * (i1 + i2)).abs() / v1)
}

/// `|dVol/dt + (n/2) int R dmu_g| / Vol`, with the difference quotient over
/// `[prev.t, state.t]` and the trapezoidal mean of the integral.
pub fn volume_identity_residual(
    state: &FlowState,
    prev: &FlowState,
    ws: &mut SpectralWorkspace,
) -> Result<f64> {
    if !(state.t > prev.t) {
        return Err(Error::InvalidArgument(format!(
            "volume identity needs increasing times (got {} then {})",
            prev.t, state.t
        )));
    }
    let r_state = state.cm.scalar_curvature(ws)?;
    let r_prev = prev.cm.scalar_curvature(ws)?;
    volume_residual_from_parts(state, &r_state, prev, &r_prev)
}

/// `||dR/dt - (n-1) Delta_g R - R^2||_{L^2(h)} / (1 + ||R||_{L^2(h)}^2)`.
pub(crate) fn evolution_residual(
    cm: &ConformalMetric,
    r: &ScalarField,
    dr_dt: &ScalarField,
    ws: &mut SpectralWorkspace,
) -> Result<f64> {
    let n = cm.grid().dim() as f64;
    let lap = cm.laplacian(r, ws)?;
    let residual: Vec<f64> = (0..r.len())
        .map(|i| {
            let rv = r.values()[i];
            dr_dt.values()[i] - (n - 1.0) * lap.values()[i] - rv * rv
        })
        .collect();
    let residual = ScalarField::from_values(*cm.grid(), residual)?;
    let res_norm = cm.lp_norm(&residual, 2.0, Measure::Background)?;
    let r_norm = cm.lp_norm(r, 2.0, Measure::Background)?;
    Ok(res_norm / (1.0 + r_norm * r_norm))
}

/// Residual of the curvature evolution at `state`, with the centred
/// difference of `prev` and `next`. The three states must be equally spaced.
pub fn scalar_evolution_residual(
    state: &FlowState,
    prev: &FlowState,
    next: &FlowState,
    ws: &mut SpectralWorkspace,
) -> Result<f64> {
    let back = state.t - prev.t;
    let ahead = next.t - state.t;
    if !(back > 0.0 && ahead > 0.0) || (back - ahead).abs() > 1e-9 * back.max(ahead) {
        return Err(Error::InvalidArgument(format!(
            "centred difference needs uniform spacing (got {back} and {ahead})"
        )));
    }
    let r = state.cm.scalar_curvature(ws)?;
    let r_prev = prev.cm.scalar_curvature(ws)?;
    let r_next = next.cm.scalar_curvature(ws)?;
    let inv = 1.0 / (back + ahead);
    let dr_dt = r_next.zip_map(&r_prev, |a, b| (a - b) * inv)?;
    evolution_residual(&state.cm, &r, &dr_dt, ws)
}

/// Values that accompany a record but do not fit its fixed columns.
pub(crate) struct RecordExtras {
    pub lp_initial: Vec<f64>,
    pub flat_distance: f64,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble_record(
    state: &FlowState,
    dt: f64,
    r: &ScalarField,
    dr_dt: &ScalarField,
    vol_identity_residual: f64,
    initial: &ConformalMetric,
    cfg: &DiagnosticsConfig,
    ws: &mut SpectralWorkspace,
) -> Result<(DiagnosticsRecord, RecordExtras)> {
    let cm = &state.cm;
    let u = cm.factor();
    let lp_initial = cfg
        .lp_exponents
        .iter()
        .map(|&p| metric_lp_distance(cm, initial, p))
        .collect::<Result<Vec<_>>>()?;
    let record = DiagnosticsRecord {
        t: state.t,
        dt,
        u_min: u.min(),
        u_max: u.max(),
        vol_g: cm.volume(),
        r_min: r.min(),
        r_max: r.max(),
        r_l1: cm.integrate(&r.map(f64::abs), Measure::Metric)?,
        vol_identity_residual,
        evo_r_residual_l2: evolution_residual(cm, r, dr_dt, ws)?,
        lp_dist_initial: lp_initial[0],
        lp_dist_flat: lp_distance_to_flat(cm, cfg.lp_exponents[0])?,
        moser_ratio: cm.moser_ratio(cfg.epsilon)?,
    };
    if let Some((i, v)) = record.values().iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { index: i, value: *v });
    }
    Ok((
        record,
        RecordExtras {
            lp_initial,
            flat_distance: flat_distance(cm),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// Smallest increment of `R_min` between consecutive records.
    pub worst_increment: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks that `R_min` never decreases beyond `1e-6 (1 + max |R|)`.
pub fn min_r_monotonicity(records: &[DiagnosticsRecord]) -> MonotonicityReport {
    let scale = records
        .iter()
        .map(|r| r.r_min.abs().max(r.r_max.abs()))
        .fold(0.0, f64::max);
    let tolerance = 1e-6 * (1.0 + scale);
    let worst_increment = records
        .windows(2)
        .map(|w| w[1].r_min - w[0].r_min)
        .fold(f64::INFINITY, f64::min);
    let worst_increment = if worst_increment.is_finite() { worst_increment } else { 0.0 };
    MonotonicityReport {
        worst_increment,
        tolerance,
        passed: worst_increment >= -tolerance,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftFit {
    pub alpha: f64,
    /// `max |Vol(t) - Vol(0)| / t^{1-alpha}` over the fitting half.
    pub c_fit: f64,
    /// Largest ratio to `c_fit` over the held-out second half.
    pub max_violation: f64,
    pub passed: bool,
}

/// Fits `|Vol(t) - Vol(0)| <= C t^{1-alpha}` on the first half of the records
/// (by count, excluding `t = 0`) and measures the fit on the remaining half.
pub fn volume_drift_fit(records: &[DiagnosticsRecord], alpha: f64) -> Result<DriftFit> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1) (got {alpha})")));
    }
    if records.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "volume drift fit needs at least 10 records (got {})",
            records.len()
        )));
    }
    let v0 = records[0].vol_g;
    let t0 = records[0].t;
    let ratios: Vec<f64> = records[1..]
        .iter()
        .map(|r| (r.vol_g - v0).abs() / (r.t - t0).powf(1.0 - alpha))
        .collect();
    let split = ratios.len() / 2;
    let c_fit = ratios[..split].iter().copied().fold(0.0, f64::max);
    let tail = ratios[split..].iter().copied().fold(0.0, f64::max);
    let max_violation = if tail == 0.0 {
        0.0
    } else if c_fit == 0.0 {
        f64::INFINITY
    } else {
        tail / c_fit
    };
    Ok(DriftFit {
        alpha,
        c_fit,
        max_violation,
        passed: max_violation <= 1.0 + 1e-6,
    })
}

/// `max |Vol(t) - Vol(0)| / t` over the records: the constant of a linear
/// drift bound.
pub fn volume_drift_slope(records: &[DiagnosticsRecord]) -> f64 {
    let Some(first) = records.first() else {
        return 0.0;
    };
    records[1..]
        .iter()
        .filter(|r| r.t > first.t)
        .map(|r| (r.vol_g - first.vol_g).abs() / (r.t - first.t))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpReport {
    pub p: f64,
    /// `sup_t dist_p(g(t), g(0))^p / (t + t^p)` over records with `t > 0`.
    pub sup_ratio: f64,
    pub ratios: Vec<f64>,
}

/// Short-time `L^p` bound check on a recorded distance profile.
pub fn lp_convergence_check(trajectory: &Trajectory, p: f64) -> Result<LpReport> {
    let profile = trajectory
        .lp_profiles
        .iter()
        .find(|prof| prof.p == p)
        .ok_or_else(|| Error::InvalidArgument(format!("no distance profile recorded for p = {p}")))?;
    let ratios: Vec<f64> = trajectory
        .records
        .iter()
        .zip(&profile.distances)
        .filter(|(r, _)| r.t > 0.0)
        .map(|(r, d)| d.powf(p) / (r.t + r.t.powf(p)))
        .collect();
    Ok(LpReport {
        p,
        sup_ratio: ratios.iter().copied().fold(0.0, f64::max),
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditItem {
    pub name: String,
    pub measured: f64,
    /// Threshold the measured value is compared against.
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionsAudit {
    pub lambda_budget: f64,
    pub p0: f64,
    pub delta: f64,
    pub items: Vec<AuditItem>,
    pub passed: bool,
}

impl AssumptionsAudit {
    pub fn item(&self, name: &str) -> Option<&AuditItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

/// Audits the hypotheses on `(h, u)`: `||u||_{L^p0(h)} <= Lambda`,
/// `Vol(g) >= 1/Lambda`, `min R_g >= -delta`, `diam(g) <= Lambda`, and for a
/// conformally flat background `sup |R_h| <= Lambda`, `diam(h) <= Lambda`.
/// Non-finite measurements fail their item.
pub fn assumptions_check(cm: &ConformalMetric, lambda: f64, p0: f64, delta: f64) -> AssumptionsAudit {
    let mut items = Vec::new();
    let mut push = |name: &str, measured: f64, bound: f64, at_most: bool| {
        let passed = measured.is_finite() && if at_most { measured <= bound } else { measured >= bound };
        items.push(AuditItem {
            name: name.to_string(),
            measured,
            bound,
            passed,
        });
    };
    let norm = cm
        .lp_norm(cm.factor(), p0, Measure::Background)
        .unwrap_or(f64::NAN);
    push("u_lp0_norm", norm, lambda, true);
    push("volume", cm.volume(), 1.0 / lambda, false);
    let mut ws = SpectralWorkspace::with_scheme(*cm.grid(), cm.background().scheme());
    let min_r = cm.scalar_curvature(&mut ws).map_or(f64::NAN, |r| r.min());
    push("min_scalar_curvature", min_r, -delta, false);
    push("diameter", cm.diameter_estimate(), lambda, true);
    if cm.background().kind() == BackgroundKind::ConformallyFlat {
        push("background_curvature_sup", cm.background().scalar_curvature().max_abs(), lambda, true);
        let unit = ScalarField::constant(*cm.grid(), 1.0);
        let diam_h = cm.with_factor(unit).map_or(f64::NAN, |h| h.diameter_estimate());
        push("background_diameter", diam_h, lambda, true);
    }
    let passed = items.iter().all(|i| i.passed);
    AssumptionsAudit {
        lambda_budget: lambda,
        p0,
        delta,
        items,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run_flow, FlowConfig, LpProfile, NullSink};
    use crate::grid::PeriodicGrid;
    use std::f64::consts::PI;

    fn record(t: f64, vol: f64, r_min: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            dt: 1e-3,
            u_min: 1.0,
            u_max: 1.0,
            vol_g: vol,
            r_min,
            r_max: 0.0,
            r_l1: 0.0,
            vol_identity_residual: 0.0,
            evo_r_residual_l2: 0.0,
            lp_dist_initial: 0.0,
            lp_dist_flat: 0.0,
            moser_ratio: 1.0,
        }
    }

    fn cosine(g: PeriodicGrid, eps: f64) -> ConformalMetric {
        ConformalMetric::flat(ScalarField::from_fn(g, |x| 1.0 + eps * (2.0 * PI * x[0]).cos()).unwrap())
            .unwrap()
    }

    #[test]
    fn flat_distance_examples() {
        let g = PeriodicGrid::unit(3, 8).unwrap();
        assert_eq!(flat_distance(&ConformalMetric::flat(ScalarField::constant(g, 5.0)).unwrap()), 0.0);
        // phi = u^4 spanning [0.9, 1.1].
        let u = ScalarField::from_fn(g, |x| {
            let phi = 1.0 + 0.1 * (2.0 * PI * x[0]).cos();
            phi.powf(0.25)
        })
        .unwrap();
        let d = flat_distance(&ConformalMetric::flat(u).unwrap());
        assert!((d - 0.1).abs() < 1e-12, "{d}");
    }

    #[test]
    fn lp_distance_to_flat_vanishes_on_constants() {
        let g = PeriodicGrid::unit(4, 8).unwrap();
        let cm = ConformalMetric::flat(ScalarField::constant(g, 1.7)).unwrap();
        assert_eq!(lp_distance_to_flat(&cm, 2.0).unwrap(), 0.0);
        let cm = cosine(g, 0.2);
        assert!(lp_distance_to_flat(&cm, 2.0).unwrap() > 0.0);
    }

    #[test]
    fn lagrange_derivative_is_exact_on_quadratics() {
        let g = PeriodicGrid::unit(3, 8).unwrap();
        let f = |t: f64| ScalarField::constant(g, 3.0 * t * t - t + 2.0);
        let times = [0.1, 0.25, 0.3];
        let fields: Vec<ScalarField> = times.iter().map(|&t| f(t)).collect();
        let refs: Vec<&ScalarField> = fields.iter().collect();
        for t in times {
            let d = time_derivative(&times, &refs, t).unwrap();
            assert!((d.values()[0] - (6.0 * t - 1.0)).abs() < 1e-12);
        }
        let d = time_derivative(&times[..2], &refs[..2], 0.1).unwrap();
        assert!((d.values()[0] - (f(0.25).values()[0] - f(0.1).values()[0]) / 0.15).abs() < 1e-12);
    }

    #[test]
    fn static_residuals_vanish() {
        let g = PeriodicGrid::unit(3, 16).unwrap();
        let mut ws = SpectralWorkspace::new(g);
        let cm = ConformalMetric::flat(ScalarField::constant(g, 1.0)).unwrap();
        let s = |t| FlowState {
            t,
            cm: cm.clone(),
            step_count: 0,
        };
        assert!(volume_identity_residual(&s(0.1), &s(0.0), &mut ws).unwrap() <= 1e-12);
        assert!(scalar_evolution_residual(&s(0.1), &s(0.0), &s(0.2), &mut ws).unwrap() <= 1e-12);
        assert!(volume_identity_residual(&s(0.0), &s(0.0), &mut ws).is_err());
        assert!(scalar_evolution_residual(&s(0.1), &s(0.0), &s(0.3), &mut ws).is_err());
    }

    #[test]
    fn linear_regime_evolution_residual() {
        let g = PeriodicGrid::unit(3, 64).unwrap();
        let mut ws = SpectralWorkspace::new(g);
        let cfg = FlowConfig::default();
        let s0 = FlowState::initial(cosine(g, 1e-4));
        let dt = crate::flow::stable_dt(&s0.cm, &cfg);
        let s1 = crate::flow::step_rk4(&s0, dt, 1e-8, &mut ws).unwrap();
        let s2 = crate::flow::step_rk4(&s1, dt, 1e-8, &mut ws).unwrap();
        let res = scalar_evolution_residual(&s1, &s0, &s2, &mut ws).unwrap();
        let r = s1.cm.scalar_curvature(&mut ws).unwrap();
        let r_norm = s1.cm.lp_norm(&r, 2.0, Measure::Background).unwrap();
        assert!(res <= 1e-3 * r_norm, "{res} vs {r_norm}");
    }

    #[test]
    fn flat_volume_is_non_increasing() {
        let g = PeriodicGrid::unit(3, 16).unwrap();
        let mut ws = SpectralWorkspace::new(g);
        let cfg = FlowConfig {
            t_max: 0.005,
            record_every: 5,
            ..Default::default()
        };
        let run = run_flow(cosine(g, 0.1), &cfg, &DiagnosticsConfig::default(), &mut ws, &mut NullSink).unwrap();
        for w in run.trajectory.records.windows(2) {
            assert!(w[1].vol_g <= w[0].vol_g);
        }
        let r = run.final_state.cm.scalar_curvature(&mut ws).unwrap();
        assert!(run.final_state.cm.integrate(&r, Measure::Metric).unwrap() >= 0.0);
    }

    #[test]
    fn monotonicity_report() {
        assert!(min_r_monotonicity(&[record(0.0, 1.0, 0.0), record(1.0, 1.0, 0.0)]).passed);
        let good: Vec<_> = (0..5).map(|i| record(i as f64, 1.0, -1.0 + 0.1 * i as f64)).collect();
        assert!(min_r_monotonicity(&good).passed);
        // One step taken with the wrong sign.
        let mut bad = good.clone();
        bad[3].r_min = bad[2].r_min - 0.1;
        let report = min_r_monotonicity(&bad);
        assert!(!report.passed);
        assert!(report.worst_increment < 0.0);
    }

    #[test]
    fn drift_fit_examples() {
        let flat: Vec<_> = (0..12).map(|i| record(i as f64 * 0.01, 1.0, 0.0)).collect();
        let fit = volume_drift_fit(&flat, 0.5).unwrap();
        assert_eq!(fit.c_fit, 0.0);
        assert!(fit.passed);
        assert!(volume_drift_fit(&flat[..9], 0.5).is_err());
        assert!(volume_drift_fit(&flat, 1.0).is_err());

        // Saturating volume loss.
        let recs: Vec<_> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.005;
                record(t, 1.0 - 0.01 * (1.0 - (-100.0 * t).exp()), 0.0)
            })
            .collect();
        let a = volume_drift_fit(&recs, 0.5).unwrap();
        let b = volume_drift_fit(&recs, 0.9).unwrap();
        let t_max = recs.last().unwrap().t;
        assert!(b.c_fit <= a.c_fit * t_max.powf(-0.4) + 1e-15);
        assert!(a.passed && b.passed);
        assert!(volume_drift_slope(&recs) > 0.0);
    }

    #[test]
    fn lp_check_examples() {
        let recs: Vec<_> = (0..4).map(|i| record(i as f64 * 0.1, 1.0, 0.0)).collect();
        let traj = Trajectory {
            records: recs,
            lp_profiles: vec![LpProfile {
                p: 1.0,
                distances: vec![0.0, 0.2, 0.4, 0.6],
            }],
            flat_distances: vec![0.0; 4],
            failure: None,
        };
        let rep = lp_convergence_check(&traj, 1.0).unwrap();
        assert_eq!(rep.ratios.len(), 3);
        assert!((rep.sup_ratio - 1.0).abs() < 1e-12);
        assert!(lp_convergence_check(&traj, 2.0).is_err());
    }

    #[test]
    fn audit_examples() {
        let g = PeriodicGrid::unit(3, 16).unwrap();
        let one = ConformalMetric::flat(ScalarField::constant(g, 1.0)).unwrap();
        let audit = assumptions_check(&one, 2.0, 10.0, 1e-3);
        assert!(audit.passed, "{audit:?}");
        assert!((audit.item("u_lp0_norm").unwrap().measured - 1.0).abs() < 1e-12);
        assert!((audit.item("volume").unwrap().measured - 1.0).abs() < 1e-12);
        assert!(audit.item("min_scalar_curvature").unwrap().measured.abs() < 1e-12);
        let diam = audit.item("diameter").unwrap().measured;
        assert!((diam - 0.866).abs() < 0.05, "{diam}");

        let bumpy = cosine(g, 0.1);
        let audit = assumptions_check(&bumpy, 2.0, 10.0, 1e-3);
        let item = audit.item("min_scalar_curvature").unwrap();
        assert!(!item.passed && item.measured < -50.0);
        assert!(!audit.passed);
        assert!(assumptions_check(&bumpy, 2.0, 10.0, 1e3).passed);
    }

    #[test]
    fn audit_reports_background_items() {
        let g = PeriodicGrid::unit(3, 16).unwrap();
        let mut ws = SpectralWorkspace::new(g);
        let v = ScalarField::from_fn(g, |x| 1.0 + 0.002 * (2.0 * PI * x[1]).sin()).unwrap();
        let bg = std::sync::Arc::new(crate::conformal::Background::conformally_flat(v, &mut ws).unwrap());
        let cm = ConformalMetric::new(bg, ScalarField::constant(g, 1.0)).unwrap();
        let audit = assumptions_check(&cm, 2.0, 12.0, 100.0);
        assert_eq!(audit.items.len(), 6);
        assert!(audit.item("background_curvature_sup").unwrap().measured > 0.0);
        assert!(audit.passed);
    }

    #[test]
    fn audit_is_invariant_under_axis_relabeling() {
        let a = PeriodicGrid::new(3, 16, &[1.0, 1.5, 0.75]).unwrap();
        let b = PeriodicGrid::new(3, 16, &[0.75, 1.0, 1.5]).unwrap();
        let f = |x0: f64, x1: f64, x2: f64| {
            1.0 + 0.05 * (2.0 * PI * x0).sin() + 0.03 * (2.0 * PI * x1 / 1.5).cos() * (2.0 * PI * x2 / 0.75).sin()
        };
        let ua = ScalarField::from_fn(a, |x| f(x[0], x[1], x[2])).unwrap();
        let ub = ScalarField::from_fn(b, |x| f(x[1], x[2], x[0])).unwrap();
        let audit_a = assumptions_check(&ConformalMetric::flat(ua).unwrap(), 3.0, 12.0, 10.0);
        let audit_b = assumptions_check(&ConformalMetric::flat(ub).unwrap(), 3.0, 12.0, 10.0);
        for (x, y) in audit_a.items.iter().zip(&audit_b.items) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.passed, y.passed);
            assert!((x.measured - y.measured).abs() <= 1e-10 * (1.0 + x.measured.abs()), "{x:?} {y:?}");
        }
    }

    #[test]
    fn header_matches_serialized_names() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(record(0.0, 1.0, 0.0)).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    }
}
