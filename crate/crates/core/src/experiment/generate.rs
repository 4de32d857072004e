//! Seeded initial data and curvature-calibrated families.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::{Background, ConformalMetric};
use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, ScalarField, MAX_DIM};
use crate::spectral::SpectralWorkspace;

/// Wave vectors with `0 < max |k_j| <= kmax`, one per `{k, -k}` pair.
fn half_space_modes(n: usize, kmax: usize) -> Vec<[i64; MAX_DIM]> {
    let side = 2 * kmax as i64 + 1;
    let mut out = Vec::new();
    for code in 0..side.pow(n as u32) {
        let mut k = [0i64; MAX_DIM];
        let mut c = code;
        for kj in k.iter_mut().take(n) {
            *kj = c % side - kmax as i64;
            c /= side;
        }
        if let Some(first) = k[..n].iter().find(|&&x| x != 0) {
            if *first > 0 {
                out.push(k);
            }
        }
    }
    out
}

/// Zero-mean odd band-limited field `sum_k a_k sin(2 pi k.x / L)` with
/// `sup |s| = 1`. Coefficients are `+-1 / (1 + |k|^2)` with seeded signs, so
/// the energy per wave vector is the same for every seed. Oddness makes
/// `min s = -max s` exactly on the grid.
pub fn bandlimited_shape(grid: &PeriodicGrid, seed: u64, kmax: usize) -> Result<ScalarField> {
    let m = grid.points_per_axis();
    if kmax == 0 || kmax > m / 4 {
        return Err(Error::InvalidArgument(format!(
            "kmax must lie in 1..={} to stay clear of aliasing (got {kmax})",
            m / 4
        )));
    }
    let n = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = half_space_modes(n, kmax);
    let coefficients: Vec<f64> = modes
        .iter()
        .map(|k| {
            let k2: i64 = k.iter().map(|x| x * x).sum();
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign / (1.0 + k2 as f64)
        })
        .collect();
    // sin(2 pi q / m) for integer q, antisymmetric by construction.
    let mut table = vec![0.0; m];
    for q in 1..m / 2 {
        let s = (2.0 * PI * q as f64 / m as f64).sin();
        table[q] = s;
        table[m - q] = -s;
    }
    let mut values = vec![0.0; grid.len()];
    for (idx, v) in values.iter_mut().enumerate() {
        let j = grid.multi_index(idx);
        let mut acc = 0.0;
        for (k, a) in modes.iter().zip(&coefficients) {
            let phase: i64 = (0..n).map(|d| k[d] * j[d] as i64).sum();
            acc += a * table[phase.rem_euclid(m as i64) as usize];
        }
        *v = acc;
    }
    let sup = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if sup > 0.0 {
        for v in &mut values {
            *v /= sup;
        }
    }
    ScalarField::from_values(*grid, values)
}

/// `u = exp(amplitude * s)` with `s` from [`bandlimited_shape`].
pub fn gen_bandlimited(grid: &PeriodicGrid, seed: u64, amplitude: f64, kmax: usize) -> Result<ScalarField> {
    if !amplitude.is_finite() {
        return Err(Error::InvalidArgument(format!("amplitude must be finite (got {amplitude})")));
    }
    let shape = bandlimited_shape(grid, seed, kmax)?;
    Ok(shape.map(|s| (amplitude * s).exp()))
}

/// `1 + amplitude cos(2 pi mode x_axis / L_axis)`.
pub fn single_mode(grid: &PeriodicGrid, amplitude: f64, axis: usize, mode: usize) -> Result<ScalarField> {
    if axis >= grid.dim() {
        return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
    }
    let length = grid.lengths()[axis];
    ScalarField::from_fn(*grid, |x| 1.0 + amplitude * (2.0 * PI * mode as f64 * x[axis] / length).cos())
}

/// One calibrated member of a curvature-controlled family.
#[derive(Debug, Clone)]
pub struct CalibratedMember {
    pub delta: f64,
    pub amplitude: f64,
    /// `min R` of the calibrated metric; lies in `[-delta, -0.99 delta]`.
    pub min_curvature: f64,
    pub metric: ConformalMetric,
}

/// `min R_g` of `u = exp(a s)` over the given background.
fn min_curvature(
    background: &Arc<Background>,
    shape: &ScalarField,
    a: f64,
    ws: &mut SpectralWorkspace,
) -> Result<(f64, ConformalMetric)> {
    let cm = ConformalMetric::new(Arc::clone(background), shape.map(|s| (a * s).exp()))?;
    let r = cm.scalar_curvature(ws)?;
    Ok((r.min(), cm))
}

/// For each `delta`, bisects the amplitude `a` of `u = exp(a s)` with a fixed
/// shape `s` until `min R` lands in `[-delta, -0.99 delta]`.
pub fn calibrate_delta_family(
    background: &Arc<Background>,
    shape: &ScalarField,
    deltas: &[f64],
    ws: &mut SpectralWorkspace,
) -> Result<Vec<CalibratedMember>> {
    let (r0, _) = min_curvature(background, shape, 0.0, ws)?;
    deltas
        .iter()
        .map(|&delta| {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(Error::InvalidArgument(format!("delta must be positive (got {delta})")));
            }
            if r0 < -delta {
                return Err(Error::Bracket(format!(
                    "the background alone has min R = {r0} below -delta = {}",
                    -delta
                )));
            }
            calibrate_one(background, shape, delta, ws)
        })
        .collect()
}

fn calibrate_one(
    background: &Arc<Background>,
    shape: &ScalarField,
    delta: f64,
    ws: &mut SpectralWorkspace,
) -> Result<CalibratedMember> {
    let inside = |r: f64| r >= -delta && r <= -0.99 * delta;
    let (mut lo, mut r_lo) = (0.0, min_curvature(background, shape, 0.0, ws)?.0);
    let mut hi = delta / 100.0;
    let mut r_hi;
    loop {
        let (r, cm) = min_curvature(background, shape, hi, ws)?;
        if inside(r) {
            return Ok(CalibratedMember {
                delta,
                amplitude: hi,
                min_curvature: r,
                metric: cm,
            });
        }
        if r < -delta {
            r_hi = r;
            break;
        }
        if r > r_lo {
            return Err(Error::Bracket(format!("min R is not decreasing in the amplitude near a = {hi}")));
        }
        lo = hi;
        r_lo = r;
        hi *= 2.0;
        if hi > 50.0 {
            return Err(Error::Bracket(format!("min R stays above -{delta} for amplitudes up to 50")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (r, cm) = min_curvature(background, shape, mid, ws)?;
        if r > r_lo || r < r_hi {
            return Err(Error::Bracket(format!(
                "min R is not monotone in the amplitude on [{lo}, {hi}]"
            )));
        }
        if inside(r) {
            return Ok(CalibratedMember {
                delta,
                amplitude: mid,
                min_curvature: r,
                metric: cm,
            });
        }
        if r < -delta {
            hi = mid;
            r_hi = r;
        } else {
            lo = mid;
            r_lo = r;
        }
    }
    Err(Error::Bracket(format!("bisection for delta = {delta} did not converge")))
}

/// Amplitudes and curvature of a calibrated family, for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub index: usize,
    pub delta: f64,
    pub amplitude: f64,
    pub min_curvature: f64,
}

impl CalibratedMember {
    pub fn entry(&self, index: usize) -> CalibrationEntry {
        CalibrationEntry {
            index,
            delta: self.delta,
            amplitude: self.amplitude,
            min_curvature: self.min_curvature,
        }
    }
}
