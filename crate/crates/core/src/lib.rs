//! Numerical Yamabe flow on flat and conformally flat tori of dimension 3
//! and 4.

// `!(x > 0.0)` is used on purpose: it rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conformal;
pub mod diagnostics;
pub mod distance;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod grid;
pub mod selfcheck;
pub mod spectral;

pub use conformal::{metric_lp_distance, Background, BackgroundKind, ConformalMetric, Exponents, Measure};
pub use diagnostics::{
    assumptions_check, flat_distance, lp_convergence_check, lp_distance_to_flat, min_r_monotonicity,
    scalar_evolution_residual, volume_drift_fit, volume_identity_residual, AssumptionsAudit, DiagnosticsConfig,
    DiagnosticsRecord, CSV_HEADER,
};
pub use error::{Error, Result};
pub use experiment::{
    calibrate_delta_family, gen_bandlimited, parse_config, run_experiment, run_sequence_experiment,
    ExperimentConfig, SequenceResult,
};
pub use flow::{
    min_principle_bound, run_flow, stable_dt, step_rk4, yamabe_rhs, FlowAbort, FlowConfig, FlowRun, FlowState,
    NullSink, RecordSink, Trajectory,
};
pub use grid::{integrate, laplacian_fd, pairwise_sum, PeriodicGrid, ScalarField};
pub use spectral::{DiffScheme, SpectralWorkspace};
