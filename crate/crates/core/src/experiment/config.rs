//! TOML experiment configuration.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::conformal::{Background, ConformalMetric};
use crate::diagnostics::DiagnosticsConfig;
use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::grid::{PeriodicGrid, ScalarField};
use crate::spectral::{DiffScheme, SpectralWorkspace};

use super::generate::{gen_bandlimited, single_mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub m: usize,
    /// Side lengths; unit torus when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<f64>>,
    pub scheme: DiffScheme,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n: 3,
            m: 32,
            lengths: None,
            scheme: DiffScheme::Spectral,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<PeriodicGrid> {
        match &self.lengths {
            Some(l) => PeriodicGrid::new(self.n, self.m, l),
            None => PeriodicGrid::unit(self.n, self.m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackgroundSpec {
    #[default]
    Flat,
    /// `h = v^{4/(n-2)} g_euc` with `v` a band-limited field from
    /// [`gen_bandlimited`].
    ConformallyFlat { seed: u64, amplitude: f64, kmax: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Constant {
        value: f64,
    },
    /// `1 + amplitude cos(2 pi mode x_axis / L_axis)`.
    SingleMode {
        amplitude: f64,
        #[serde(default)]
        axis: usize,
        #[serde(default = "one")]
        mode: usize,
    },
    Bandlimited {
        seed: u64,
        amplitude: f64,
        kmax: usize,
    },
}

fn one() -> usize {
    1
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Bandlimited {
            seed: 7,
            amplitude: 0.1,
            kmax: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// Integrability exponent of the initial factor.
    pub p0: f64,
    /// Exponents of the distance profiles; the first feeds the CSV columns.
    pub p: Vec<f64>,
    /// Exponents of the volume drift fits.
    pub alpha: Vec<f64>,
    pub epsilon: f64,
    pub lambda: f64,
    pub delta: f64,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            p0: 12.0,
            p: vec![1.0, 2.0],
            alpha: vec![0.6, 0.9],
            epsilon: 0.5,
            lambda: 2.0,
            delta: 1e-3,
        }
    }
}

impl DiagnosticsSpec {
    pub fn record_config(&self) -> DiagnosticsConfig {
        DiagnosticsConfig {
            lp_exponents: self.p.clone(),
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSpec {
    pub count: usize,
    pub base_seed: u64,
    /// Band limit of the common shape.
    pub kmax: usize,
    /// Curvature floors; `1/i` for `i = 1..=count` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            count: 8,
            base_seed: 1,
            kmax: 2,
            deltas: None,
        }
    }
}

impl SequenceSpec {
    pub fn schedule(&self) -> Vec<f64> {
        match &self.deltas {
            Some(d) => d.clone(),
            None => (1..=self.count).map(|i| 1.0 / i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    pub plots: bool,
    /// Raw dump of the final factor.
    pub snapshot: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            plots: true,
            snapshot: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub background: BackgroundSpec,
    pub initial: InitialSpec,
    pub flow: FlowConfig,
    pub diagnostics: DiagnosticsSpec,
    pub sequence: SequenceSpec,
    pub output: OutputSpec,
}

/// `n/2 + 2n(n+4)/((n-2)(n+2))`; the initial factor must lie in `L^p0` for
/// some `p0` above it.
pub fn p0_threshold(n: usize) -> f64 {
    let n = n as f64;
    n / 2.0 + 2.0 * n * (n + 4.0) / ((n - 2.0) * (n + 2.0))
}

/// Parses and validates a TOML config. Schema errors name the offending key.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
        path: ".".into(),
        message: e.to_string().trim().to_string(),
    })?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string().trim().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn invalid(path: &str, message: String) -> Error {
    Error::Config {
        path: path.to_string(),
        message,
    }
}

impl ExperimentConfig {
    /// Canonical TOML form with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid.build()?;
        let quarter = grid.points_per_axis() / 4;
        let threshold = p0_threshold(grid.dim());
        let d = &self.diagnostics;
        if !(d.p0 > threshold) {
            return Err(Error::ExponentTooSmall {
                p0: d.p0,
                threshold,
            });
        }
        self.flow.validate()?;
        d.record_config().validate()?;
        if let Some(a) = d.alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(invalid("diagnostics.alpha", format!("entries must lie in (0, 1), got {a}")));
        }
        if !(d.lambda > 0.0 && d.lambda.is_finite()) {
            return Err(invalid("diagnostics.lambda", format!("must be positive, got {}", d.lambda)));
        }
        if !(d.delta > 0.0 && d.delta.is_finite()) {
            return Err(invalid("diagnostics.delta", format!("must be positive, got {}", d.delta)));
        }
        match &self.initial {
            InitialSpec::Constant { value } if !(*value > 0.0 && value.is_finite()) => {
                return Err(invalid("initial.value", format!("must be positive, got {value}")));
            }
            InitialSpec::SingleMode { amplitude, axis, mode } => {
                if !(amplitude.abs() < 1.0) {
                    return Err(invalid("initial.amplitude", format!("|amplitude| must be below 1, got {amplitude}")));
                }
                if *axis >= grid.dim() {
                    return Err(invalid("initial.axis", format!("axis {axis} out of range for n = {}", grid.dim())));
                }
                if *mode == 0 || *mode > quarter {
                    return Err(invalid("initial.mode", format!("mode must lie in 1..={quarter}, got {mode}")));
                }
            }
            InitialSpec::Bandlimited { amplitude, kmax, .. } => {
                check_band("initial", *amplitude, *kmax, quarter)?;
            }
            _ => {}
        }
        if let BackgroundSpec::ConformallyFlat { amplitude, kmax, .. } = &self.background {
            check_band("background", *amplitude, *kmax, quarter)?;
        }
        let s = &self.sequence;
        if s.kmax == 0 || s.kmax > quarter {
            return Err(invalid("sequence.kmax", format!("must lie in 1..={quarter}, got {}", s.kmax)));
        }
        let schedule = s.schedule();
        if schedule.is_empty() {
            return Err(invalid("sequence", "the delta schedule is empty".into()));
        }
        if schedule.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(invalid("sequence.deltas", "entries must be positive".into()));
        }
        if schedule.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("sequence.deltas", "entries must be non-increasing".into()));
        }
        Ok(())
    }

    /// Background metric of the experiment, cached for the configured scheme.
    pub fn build_background(&self) -> Result<(Arc<Background>, SpectralWorkspace)> {
        let grid = self.grid.build()?;
        let mut ws = SpectralWorkspace::with_scheme(grid, self.grid.scheme);
        let bg = match &self.background {
            BackgroundSpec::Flat => Background::flat(grid),
            BackgroundSpec::ConformallyFlat { seed, amplitude, kmax } => {
                let v = gen_bandlimited(&grid, *seed, *amplitude, *kmax)?;
                Background::conformally_flat(v, &mut ws)?
            }
        };
        Ok((Arc::new(bg), ws))
    }

    /// Initial metric of a single run.
    pub fn build_initial(&self, background: Arc<Background>) -> Result<ConformalMetric> {
        let grid = *background.grid();
        let u = match &self.initial {
            InitialSpec::Constant { value } => ScalarField::constant(grid, *value),
            InitialSpec::SingleMode { amplitude, axis, mode } => single_mode(&grid, *amplitude, *axis, *mode)?,
            InitialSpec::Bandlimited { seed, amplitude, kmax } => gen_bandlimited(&grid, *seed, *amplitude, *kmax)?,
        };
        ConformalMetric::new(background, u)
    }
}

fn check_band(section: &str, amplitude: f64, kmax: usize, quarter: usize) -> Result<()> {
    if !amplitude.is_finite() {
        return Err(invalid(&format!("{section}.amplitude"), format!("must be finite, got {amplitude}")));
    }
    if kmax == 0 || kmax > quarter {
        return Err(invalid(&format!("{section}.kmax"), format!("must lie in 1..={quarter}, got {kmax}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        assert!((p0_threshold(3) - 9.9).abs() < 1e-12);
        assert!((p0_threshold(4) - (2.0 + 64.0 / 12.0)).abs() < 1e-12);
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("[grid]\nn = 3\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.grid.m, 32);
        assert_eq!(cfg.diagnostics.p0, 12.0);
        assert_eq!(cfg.diagnostics.alpha, vec![0.6, 0.9]);
        assert_eq!(cfg.flow.t_max, 0.1);
        assert_eq!(cfg.flow.cfl_safety, 0.25);
        let echoed = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
[grid]
n = 4
m = 16
lengths = [1.0, 2.0, 1.0, 0.5]
scheme = "finite_difference"

[background]
kind = "conformally_flat"
seed = 3
amplitude = 0.05
kmax = 2

[initial]
kind = "single_mode"
amplitude = 0.1
axis = 1

[flow]
t_max = 0.01
record_every = 5
dt = 1e-5

[diagnostics]
p0 = 8.0
p = [0.5, 1.0]

[sequence]
count = 3
deltas = [0.5, 0.25, 0.125]

[output]
dir = "out"
plots = false
snapshot = true
"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.grid.scheme, DiffScheme::FiniteDifference);
        assert_eq!(cfg.initial, InitialSpec::SingleMode { amplitude: 0.1, axis: 1, mode: 1 });
        assert_eq!(cfg.flow.dt, Some(1e-5));
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn p0_below_threshold_is_rejected() {
        let err = parse_config("[diagnostics]\np0 = 9.0\n").unwrap_err();
        assert!(matches!(err, Error::ExponentTooSmall { .. }));
        assert!(err.to_string().contains("hypothesis (B) exponent too small"));
        assert!(err.to_string().contains("9.9"));
        assert!(parse_config("[grid]\nn = 4\n[diagnostics]\np0 = 7.5\n").is_ok());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config("[flow]\ngamma = 1.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gamma"), "{msg}");
        assert!(msg.contains("flow"), "{msg}");
        assert_eq!(err.exit_code(), 1);
        let err = parse_config("gamma = 2\n").unwrap_err();
        assert!(err.to_string().contains("gamma"));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "[grid]\nm = 24\n",
            "[grid]\nn = 5\n",
            "[flow]\ncfl_safety = 2.0\n",
            "[diagnostics]\nalpha = [1.5]\n",
            "[initial]\nkind = \"bandlimited\"\nseed = 1\namplitude = 0.1\nkmax = 9\n",
            "[sequence]\ndeltas = [0.1, 0.2]\n",
            "[flow]\nt_max = \"long\"\n",
        ] {
            let err = parse_config(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}: {err}");
        }
    }

    #[test]
    fn schedule_defaults_to_harmonic() {
        let s = SequenceSpec::default().schedule();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0], 1.0);
        assert_eq!(s[3], 0.25);
    }
}
