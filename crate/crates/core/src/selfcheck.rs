//! Fast property suites behind `yamabe check`.

use std::f64::consts::PI;
use std::str::FromStr;

use crate::conformal::ConformalMetric;
use crate::diagnostics::{
    assumptions_check, flat_distance, min_r_monotonicity, volume_identity_residual, DiagnosticsConfig,
};
use crate::error::{Error, Result};
use crate::flow::{run_flow, stable_dt, step_rk4, yamabe_rhs, FlowConfig, FlowState};
use crate::grid::{integrate, laplacian_fd, PeriodicGrid, ScalarField};
use crate::spectral::SpectralWorkspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Grid,
    Flow,
    Diagnostics,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Suite::All),
            "grid" => Ok(Suite::Grid),
            "flow" => Ok(Suite::Flow),
            "diagnostics" => Ok(Suite::Diagnostics),
            other => Err(Error::InvalidArgument(format!(
                "unknown suite `{other}` (expected all, grid, flow or diagnostics)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub name: &'static str,
    /// `None` on success, the failure message otherwise.
    pub failure: Option<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

type Check = fn() -> std::result::Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn unit(n: usize, m: usize) -> PeriodicGrid {
    PeriodicGrid::unit(n, m).expect("valid grid")
}

fn cosine(g: PeriodicGrid, eps: f64) -> ConformalMetric {
    ConformalMetric::flat(ScalarField::from_fn(g, |x| 1.0 + eps * (2.0 * PI * x[0]).cos()).expect("finite"))
        .expect("positive")
}

fn grid_checks() -> Vec<(&'static str, Check)> {
    vec![
        ("fd_laplacian_of_constant_vanishes", || {
            let f = ScalarField::constant(unit(3, 16), 2.5);
            ensure(laplacian_fd(&f).max_abs() == 0.0, || "non-zero stencil output".into())
        }),
        ("spectral_cosine_eigenvalue", || {
            let g = unit(3, 16);
            let mut ws = SpectralWorkspace::new(g);
            let f = ScalarField::from_fn(g, |x| (2.0 * PI * x[1]).cos()).map_err(|e| e.to_string())?;
            let lap = ws.laplacian(&f).map_err(|e| e.to_string())?;
            let err = lap.zip_map(&f, |a, b| a + 4.0 * PI * PI * b).map_err(|e| e.to_string())?.max_abs();
            ensure(err < 1e-10, || format!("eigenvalue error {err:e}"))
        }),
        ("integral_of_constant_is_volume", || {
            let g = PeriodicGrid::new(4, 8, &[1.0, 2.0, 0.5, 1.5]).map_err(|e| e.to_string())?;
            let v = integrate(&ScalarField::constant(g, 3.0), None).map_err(|e| e.to_string())?;
            ensure((v - 4.5).abs() < 1e-12, || format!("got {v}"))
        }),
        ("index_round_trip", || {
            let g = unit(4, 8);
            let ok = (0..g.len()).all(|i| g.flat_index(&g.multi_index(i)[..4]) == i);
            ensure(ok, || "flat/multi index mismatch".into())
        }),
        ("spectral_matches_fd_to_second_order", || {
            let f = |g: PeriodicGrid| ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin().exp()).expect("finite");
            let mut errs = Vec::new();
            for m in [16, 32] {
                let g = unit(3, m);
                let mut ws = SpectralWorkspace::new(g);
                let a = ws.laplacian(&f(g)).map_err(|e| e.to_string())?;
                let b = laplacian_fd(&f(g));
                errs.push(a.zip_map(&b, |x, y| x - y).map_err(|e| e.to_string())?.max_abs());
            }
            let order = (errs[0] / errs[1]).log2();
            ensure((order - 2.0).abs() < 0.2, || format!("observed order {order:.3}"))
        }),
    ]
}

fn flow_checks() -> Vec<(&'static str, Check)> {
    vec![
        ("static_solution_is_fixed", || {
            let g = unit(3, 8);
            let mut ws = SpectralWorkspace::new(g);
            let mut s = FlowState::initial(ConformalMetric::flat(ScalarField::constant(g, 1.0)).expect("positive"));
            for _ in 0..100 {
                s = step_rk4(&s, 1e-4, 1e-8, &mut ws).map_err(|e| e.to_string())?;
            }
            let dev = s.cm.factor().map(|u| u - 1.0).max_abs();
            ensure(dev <= 1e-12, || format!("drift {dev:e}"))
        }),
        ("rhs_equals_curvature_form", || {
            let g = unit(3, 16);
            let mut ws = SpectralWorkspace::new(g);
            let cm = cosine(g, 0.2);
            let rhs = yamabe_rhs(&cm, &mut ws).map_err(|e| e.to_string())?;
            let r = cm.scalar_curvature(&mut ws).map_err(|e| e.to_string())?;
            let u = cm.factor();
            let mismatch = (0..g.len())
                .map(|i| (rhs.values()[i] + 0.25 * r.values()[i] * u.values()[i]).abs())
                .fold(0.0, f64::max);
            ensure(mismatch <= 1e-9 * u.max_abs(), || format!("mismatch {mismatch:e}"))
        }),
        ("linear_decay_rate", || {
            let g = unit(3, 16);
            let mut ws = SpectralWorkspace::new(g);
            let eps = 1e-4;
            let mut s = FlowState::initial(cosine(g, eps));
            let cfg = FlowConfig::default();
            let dt = stable_dt(&s.cm, &cfg);
            let steps = (0.002 / dt).ceil() as usize;
            for _ in 0..steps {
                s = step_rk4(&s, dt, 1e-8, &mut ws).map_err(|e| e.to_string())?;
            }
            let amp = mode_amplitude(s.cm.factor());
            let rate = -(amp / eps).ln() / s.t;
            let expected = 2.0 * 4.0 * PI * PI;
            ensure((rate - expected).abs() < 0.01 * expected, || format!("rate {rate}"))
        }),
        ("scaling_symmetry", || {
            let g = unit(3, 8);
            let mut ws = SpectralWorkspace::new(g);
            let base = cosine(g, 0.1);
            let scaled = base.with_factor(base.factor().map(|u| 2.0 * u)).map_err(|e| e.to_string())?;
            let (mut a, mut b) = (FlowState::initial(base), FlowState::initial(scaled));
            for _ in 0..20 {
                a = step_rk4(&a, 1e-4, 1e-8, &mut ws).map_err(|e| e.to_string())?;
                b = step_rk4(&b, 16e-4, 1e-8, &mut ws).map_err(|e| e.to_string())?;
            }
            let ok = a.cm.factor().values().iter().zip(b.cm.factor().values()).all(|(x, y)| 2.0 * x == *y);
            ensure(ok, || "scaled trajectory differs".into())
        }),
        ("min_and_max_principles", || {
            let g = unit(3, 8);
            let mut ws = SpectralWorkspace::new(g);
            let mut s = FlowState::initial(cosine(g, 0.1));
            let dt = stable_dt(&s.cm, &FlowConfig::default());
            for _ in 0..200 {
                let next = step_rk4(&s, dt, 1e-8, &mut ws).map_err(|e| e.to_string())?;
                let (u0, u1) = (s.cm.factor(), next.cm.factor());
                if u1.min() < u0.min() - 1e-10 || u1.max() > u0.max() + 1e-10 {
                    return Err(format!("extremum moved the wrong way at t = {}", next.t));
                }
                s = next;
            }
            Ok(())
        }),
    ]
}

/// Coefficient of `cos(2 pi x_0)` by discrete projection.
pub fn mode_amplitude(u: &ScalarField) -> f64 {
    let g = u.grid();
    let basis = ScalarField::from_fn(*g, |x| (2.0 * PI * x[0] / g.lengths()[0]).cos()).expect("finite");
    let prod = u.zip_map(&basis, |a, b| a * b).expect("same grid");
    2.0 * prod.mean()
}

fn diagnostics_checks() -> Vec<(&'static str, Check)> {
    vec![
        ("flat_distance_closed_form", || {
            let g = unit(3, 8);
            let u = ScalarField::from_fn(g, |x| (1.0 + 0.1 * (2.0 * PI * x[0]).cos()).powf(0.25))
                .map_err(|e| e.to_string())?;
            let d = flat_distance(&ConformalMetric::flat(u).map_err(|e| e.to_string())?);
            ensure((d - 0.1).abs() < 1e-12, || format!("got {d}"))
        }),
        ("audit_of_flat_torus_passes", || {
            let g = unit(3, 16);
            let cm = ConformalMetric::flat(ScalarField::constant(g, 1.0)).map_err(|e| e.to_string())?;
            let audit = assumptions_check(&cm, 2.0, 10.0, 1e-3);
            ensure(audit.passed, || format!("{audit:?}"))
        }),
        ("static_volume_identity", || {
            let g = unit(3, 8);
            let mut ws = SpectralWorkspace::new(g);
            let cm = ConformalMetric::flat(ScalarField::constant(g, 1.0)).map_err(|e| e.to_string())?;
            let a = FlowState::initial(cm.clone());
            let b = FlowState { t: 0.1, cm, step_count: 1 };
            let r = volume_identity_residual(&b, &a, &mut ws).map_err(|e| e.to_string())?;
            ensure(r <= 1e-12, || format!("residual {r:e}"))
        }),
        ("moser_ratio_at_least_one", || {
            let g = unit(3, 8);
            let r = cosine(g, 0.3).moser_ratio(0.5).map_err(|e| e.to_string())?;
            ensure(r >= 1.0 - 1e-10, || format!("ratio {r}"))
        }),
        ("short_run_curvature_floor_rises", || {
            let g = unit(3, 8);
            let mut ws = SpectralWorkspace::new(g);
            let cfg = FlowConfig {
                t_max: 5e-3,
                record_every: 5,
                ..Default::default()
            };
            let run = run_flow(cosine(g, 0.1), &cfg, &DiagnosticsConfig::default(), &mut ws, &mut crate::flow::NullSink)
                .map_err(|a| a.error.to_string())?;
            let report = min_r_monotonicity(&run.trajectory.records);
            ensure(report.passed, || format!("{report:?}"))
        }),
    ]
}

/// Runs the selected suites in order.
pub fn run_suite(suite: Suite) -> Vec<CheckOutcome> {
    let groups: Vec<(&'static str, Vec<(&'static str, Check)>)> = match suite {
        Suite::All => vec![
            ("grid", grid_checks()),
            ("flow", flow_checks()),
            ("diagnostics", diagnostics_checks()),
        ],
        Suite::Grid => vec![("grid", grid_checks())],
        Suite::Flow => vec![("flow", flow_checks())],
        Suite::Diagnostics => vec![("diagnostics", diagnostics_checks())],
    };
    groups
        .into_iter()
        .flat_map(|(suite, checks)| {
            checks.into_iter().map(move |(name, check)| CheckOutcome {
                suite,
                name,
                failure: check().err(),
            })
        })
        .collect()
}
