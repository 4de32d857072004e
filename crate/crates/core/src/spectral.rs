//! Pseudo-spectral differentiation on the periodic lattice.
//!
//! A [`SpectralWorkspace`] owns FFT plans, wavenumber tables and scratch
//! buffers for one grid. It is the single entry point for spatial
//! derivatives: with [`DiffScheme::FiniteDifference`] it dispatches to the
//! second-order stencils instead, which is how whole flows are re-run on the
//! independent finite-difference path.
//!
//! Two real fields can share one complex transform because every operator
//! here maps real fields to real fields (the Nyquist mode of first
//! derivatives is dropped). The lone Laplacian, which dominates flow
//! stepping, uses a real-to-complex transform along the contiguous axis.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{derivative_fd, laplacian_fd, PeriodicGrid, ScalarField};

/// Discretization used for spatial derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffScheme {
    #[default]
    Spectral,
    FiniteDifference,
}

pub struct SpectralWorkspace {
    grid: PeriodicGrid,
    scheme: DiffScheme,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `-|k|^2 / N` per mode; exactly zero at the zero mode.
    laplace: Vec<f64>,
    /// `k_axis / N` per mode and axis; zero at the Nyquist index of that axis.
    wavenumber: Vec<Vec<f64>>,
    spectrum: Vec<Complex64>,
    work: Vec<Complex64>,
    lines: Vec<Complex64>,
    scratch: Vec<Complex64>,
    real_forward: Arc<dyn RealToComplex<f64>>,
    real_inverse: Arc<dyn ComplexToReal<f64>>,
    /// `-|k|^2 / N` on the half spectrum (last axis holds `m/2 + 1` modes).
    half_laplace: Vec<f64>,
    half: Vec<Complex64>,
    real_line: Vec<f64>,
}

impl std::fmt::Debug for SpectralWorkspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralWorkspace")
            .field("grid", &self.grid)
            .field("scheme", &self.scheme)
            .finish_non_exhaustive()
    }
}

impl SpectralWorkspace {
    pub fn new(grid: PeriodicGrid) -> Self {
        Self::with_scheme(grid, DiffScheme::Spectral)
    }

    pub fn with_scheme(grid: PeriodicGrid, scheme: DiffScheme) -> Self {
        let m = grid.points_per_axis();
        let n = grid.dim();
        let total = grid.len();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let mut real_planner = RealFftPlanner::new();
        let real_forward = real_planner.plan_fft_forward(m);
        let real_inverse = real_planner.plan_fft_inverse(m);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len())
            .max(real_forward.get_scratch_len())
            .max(real_inverse.get_scratch_len());

        let norm = 1.0 / total as f64;
        let axis_k: Vec<Vec<f64>> = (0..n)
            .map(|axis| {
                let base = 2.0 * std::f64::consts::PI / grid.lengths()[axis];
                (0..m)
                    .map(|j| {
                        let freq = if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
                        base * freq
                    })
                    .collect()
            })
            .collect();

        let mut laplace = vec![0.0; total];
        let mut wavenumber = vec![vec![0.0; total]; n];
        for idx in 0..total {
            let mi = grid.multi_index(idx);
            let mut k2 = 0.0;
            for axis in 0..n {
                let k = axis_k[axis][mi[axis]];
                k2 += k * k;
                wavenumber[axis][idx] = if mi[axis] == m / 2 { 0.0 } else { k * norm };
            }
            laplace[idx] = -k2 * norm;
        }
        let h = m / 2 + 1;
        let half_laplace = (0..total / m * h)
            .map(|idx| {
                let (mut rest, last) = (idx / h, idx % h);
                let mut k2 = axis_k[n - 1][last].powi(2);
                for axis in (0..n - 1).rev() {
                    k2 += axis_k[axis][rest % m].powi(2);
                    rest /= m;
                }
                -k2 * norm
            })
            .collect::<Vec<f64>>();

        Self {
            grid,
            scheme,
            forward,
            inverse,
            laplace,
            wavenumber,
            spectrum: vec![Complex64::default(); total],
            work: vec![Complex64::default(); total],
            lines: vec![Complex64::default(); total],
            scratch: vec![Complex64::default(); scratch_len],
            real_forward,
            real_inverse,
            half: vec![Complex64::default(); half_laplace.len()],
            half_laplace,
            real_line: vec![0.0; m],
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn scheme(&self) -> DiffScheme {
        self.scheme
    }

    /// Multiplier `-|k|^2` of every mode, unnormalized.
    pub fn laplace_multipliers(&self) -> Vec<f64> {
        let total = self.grid.len() as f64;
        self.laplace.iter().map(|&l| l * total).collect()
    }

    /// Euclidean Laplacian on the configured scheme.
    pub fn laplacian(&mut self, f: &ScalarField) -> Result<ScalarField> {
        match self.scheme {
            DiffScheme::Spectral => self.laplacian_spectral(f),
            DiffScheme::FiniteDifference => {
                self.grid.check_same(f.grid())?;
                Ok(laplacian_fd(f))
            }
        }
    }

    /// Exact Laplacian of the trigonometric interpolant of `f`.
    pub fn laplacian_spectral(&mut self, f: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(f.grid())?;
        let m = self.grid.points_per_axis();
        let h = m / 2 + 1;
        let n = self.grid.dim();
        let fm = f.mean();
        let mut half = std::mem::take(&mut self.half);
        for (src, dst) in f.values().chunks_exact(m).zip(half.chunks_exact_mut(h)) {
            for (r, &v) in self.real_line.iter_mut().zip(src) {
                *r = v - fm;
            }
            self.real_forward
                .process_with_scratch(&mut self.real_line, dst, &mut self.scratch)
                .expect("buffer lengths match the plan");
        }
        for axis in 0..n - 1 {
            let stride = h * m.pow((n - 2 - axis) as u32);
            strided_fft(&mut half, m, stride, &*self.forward, &mut self.lines, &mut self.scratch);
        }
        for (s, &l) in half.iter_mut().zip(&self.half_laplace) {
            *s *= l;
        }
        for axis in 0..n - 1 {
            let stride = h * m.pow((n - 2 - axis) as u32);
            strided_fft(&mut half, m, stride, &*self.inverse, &mut self.lines, &mut self.scratch);
        }
        let mut out = vec![0.0; f.len()];
        for (src, dst) in half.chunks_exact_mut(h).zip(out.chunks_exact_mut(m)) {
            // The self-conjugate modes are real up to rounding.
            src[0].im = 0.0;
            if m.is_multiple_of(2) {
                src[h - 1].im = 0.0;
            }
            self.real_inverse
                .process_with_scratch(src, dst, &mut self.scratch)
                .expect("buffer lengths match the plan");
        }
        self.half = half;
        Ok(ScalarField::from_raw(self.grid, out))
    }

    /// Gradient components `[d_1 f, ..., d_n f]`.
    pub fn gradient(&mut self, f: &ScalarField) -> Result<Vec<ScalarField>> {
        Ok(self.laplacian_and_gradient(f)?.1)
    }

    /// Laplacian and gradient from a single forward transform.
    pub fn laplacian_and_gradient(
        &mut self,
        f: &ScalarField,
    ) -> Result<(ScalarField, Vec<ScalarField>)> {
        self.grid.check_same(f.grid())?;
        let n = self.grid.dim();
        if self.scheme == DiffScheme::FiniteDifference {
            let grad = (0..n).map(|k| derivative_fd(f, k)).collect();
            return Ok((laplacian_fd(f), grad));
        }
        self.load(f, None);
        self.transform_spectrum(false);
        // Outputs in order: laplacian, d_0, ..., d_{n-1}; packed two per inverse.
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut slot = 0;
        while slot <= n {
            let second = if slot < n { Some(slot + 1) } else { None };
            for idx in 0..self.spectrum.len() {
                let s = self.spectrum[idx];
                let a = self.multiplied(slot, idx, s);
                let b = second.map_or(Complex64::default(), |o| self.multiplied(o, idx, s));
                self.work[idx] = a + Complex64::new(-b.im, b.re);
            }
            let mut work = std::mem::take(&mut self.work);
            self.transform(&mut work, true);
            outputs.push(work.iter().map(|c| c.re).collect());
            if second.is_some() {
                outputs.push(work.iter().map(|c| c.im).collect());
            }
            self.work = work;
            slot += 2;
        }
        let mut iter = outputs.into_iter().map(|v| ScalarField::from_raw(self.grid, v));
        let lap = iter.next().expect("laplacian slot");
        Ok((lap, iter.collect()))
    }

    /// Pointwise `grad f . grad g` (Euclidean).
    pub fn grad_inner(&mut self, f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(f.grid())?;
        self.grid.check_same(g.grid())?;
        let n = self.grid.dim();
        let total = self.grid.len();
        let mut acc = vec![0.0; total];
        if self.scheme == DiffScheme::FiniteDifference {
            for k in 0..n {
                let df = derivative_fd(f, k);
                let dg = derivative_fd(g, k);
                for (a, (x, y)) in acc.iter_mut().zip(df.values().iter().zip(dg.values())) {
                    *a += x * y;
                }
            }
            return Ok(ScalarField::from_raw(self.grid, acc));
        }
        self.load(f, Some(g));
        self.transform_spectrum(false);
        for axis in 0..n {
            for idx in 0..total {
                let k = self.wavenumber[axis][idx];
                let s = self.spectrum[idx];
                self.work[idx] = Complex64::new(-k * s.im, k * s.re);
            }
            let mut work = std::mem::take(&mut self.work);
            self.transform(&mut work, true);
            for (a, c) in acc.iter_mut().zip(&work) {
                *a += c.re * c.im;
            }
            self.work = work;
        }
        Ok(ScalarField::from_raw(self.grid, acc))
    }

    /// Applies multiplier `slot` (0 = Laplacian, `1 + axis` = d/dx_axis).
    #[inline]
    fn multiplied(&self, slot: usize, idx: usize, s: Complex64) -> Complex64 {
        if slot == 0 {
            s * self.laplace[idx]
        } else {
            let k = self.wavenumber[slot - 1][idx];
            Complex64::new(-k * s.im, k * s.re)
        }
    }

    /// Loads `f + i g` with their means removed into the spectrum buffer.
    /// Removing the mean does not change any derivative and makes constants
    /// map to exact zeros.
    fn load(&mut self, f: &ScalarField, g: Option<&ScalarField>) {
        let fm = f.mean();
        match g {
            None => {
                for (s, &v) in self.spectrum.iter_mut().zip(f.values()) {
                    *s = Complex64::new(v - fm, 0.0);
                }
            }
            Some(g) => {
                let gm = g.mean();
                for (s, (&a, &b)) in self.spectrum.iter_mut().zip(f.values().iter().zip(g.values())) {
                    *s = Complex64::new(a - fm, b - gm);
                }
            }
        }
    }

    fn transform_spectrum(&mut self, inverse: bool) {
        let mut data = std::mem::take(&mut self.spectrum);
        self.transform(&mut data, inverse);
        self.spectrum = data;
    }

    /// Unnormalized n-dimensional DFT in place, one axis at a time.
    fn transform(&mut self, data: &mut [Complex64], inverse: bool) {
        let m = self.grid.points_per_axis();
        let plan = if inverse { &self.inverse } else { &self.forward };
        for axis in 0..self.grid.dim() {
            strided_fft(data, m, self.grid.stride(axis), &**plan, &mut self.lines, &mut self.scratch);
        }
    }
}

/// Length-`m` transforms along the axis with the given element stride.
fn strided_fft(
    data: &mut [Complex64],
    m: usize,
    stride: usize,
    plan: &dyn Fft<f64>,
    lines: &mut [Complex64],
    scratch: &mut [Complex64],
) {
    if stride == 1 {
        plan.process_with_scratch(data, scratch);
        return;
    }
    // Blocks of m * stride elements; within a block, transpose the m x stride
    // slab so each line along the axis becomes contiguous.
    let block = m * stride;
    let lines = &mut lines[..block];
    for slab in data.chunks_exact_mut(block) {
        for j in 0..m {
            for (inner, &v) in slab[j * stride..(j + 1) * stride].iter().enumerate() {
                lines[inner * m + j] = v;
            }
        }
        plan.process_with_scratch(lines, scratch);
        for j in 0..m {
            for (inner, v) in slab[j * stride..(j + 1) * stride].iter_mut().enumerate() {
                *v = lines[inner * m + j];
            }
        }
    }
}
