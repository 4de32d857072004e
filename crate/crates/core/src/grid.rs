//! Uniform periodic lattices on the flat n-torus and the fields sampled on them.
//!
//! Fields are stored in row-major order: axis 0 varies slowest and axis
//! `n - 1` is contiguous in memory. Reductions go through [`pairwise_sum`]
//! so that every sum uses a fixed reduction tree.

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 4;

/// Uniform tensor-product lattice with `m` points per axis on a torus with
/// side lengths `lengths[..n]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    n: usize,
    m: usize,
    lengths: [f64; MAX_DIM],
}

impl PeriodicGrid {
    pub fn new(n: usize, m: usize, lengths: &[f64]) -> Result<Self> {
        if n <= 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must satisfy n > 2 (got n = {n})"
            )));
        }
        if n > MAX_DIM {
            return Err(Error::InvalidGrid(format!(
                "dimension must satisfy n <= {MAX_DIM} (got n = {n})"
            )));
        }
        if m < 8 || !m.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8 (got m = {m})"
            )));
        }
        if lengths.len() != n {
            return Err(Error::InvalidGrid(format!(
                "expected {n} side lengths, got {}",
                lengths.len()
            )));
        }
        if let Some(bad) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "side lengths must be finite and positive (got {bad})"
            )));
        }
        let total = m
            .checked_pow(n as u32)
            .filter(|&t| t <= isize::MAX as usize / std::mem::size_of::<f64>() / 4);
        if total.is_none() {
            return Err(Error::InvalidGrid(format!(
                "m^n = {m}^{n} points exceeds the addressable field size"
            )));
        }
        let mut l = [0.0; MAX_DIM];
        l[..n].copy_from_slice(lengths);
        Ok(Self { n, m, lengths: l })
    }

    /// Unit-length torus `[0,1)^n`.
    pub fn unit(n: usize, m: usize) -> Result<Self> {
        Self::new(n, m, &vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn points_per_axis(&self) -> usize {
        self.m
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.n]
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.m as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.spacing(k)).collect()
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.n)
            .map(|k| self.spacing(k))
            .fold(f64::INFINITY, f64::min)
    }

    /// Euclidean volume of the torus, `prod L_k`.
    pub fn volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    /// Memory stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.m.pow((self.n - 1 - axis) as u32)
    }

    /// Per-axis lattice indices of a flat index.
    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        let mut rest = idx;
        for k in (0..self.n).rev() {
            out[k] = rest % self.m;
            rest /= self.m;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi[..self.n]
            .iter()
            .fold(0, |acc, &i| acc * self.m + (i % self.m))
    }

    /// Coordinates of lattice point `idx` in `[0,L_1) x ... x [0,L_n)`.
    pub fn coords(&self, idx: usize) -> [f64; MAX_DIM] {
        let mi = self.multi_index(idx);
        let mut x = [0.0; MAX_DIM];
        for k in 0..self.n {
            x[k] = mi[k] as f64 * self.spacing(k);
        }
        x
    }

    /// Index of the neighbour of `idx` displaced by `step` cells along `axis`
    /// (periodic wraparound).
    #[inline]
    pub fn neighbour(&self, idx: usize, axis: usize, step: isize) -> usize {
        let stride = self.stride(axis);
        let i = (idx / stride) % self.m;
        let j = (i as isize + step).rem_euclid(self.m as isize) as usize;
        idx + j * stride - i * stride
    }

    pub(crate) fn check_same(&self, other: &PeriodicGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "n={} m={} L={:?} vs n={} m={} L={:?}",
                self.n,
                self.m,
                self.lengths(),
                other.n,
                other.m,
                other.lengths()
            )))
        }
    }
}

/// Real-valued function sampled on a [`PeriodicGrid`]. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl ScalarField {
    /// Samples `f` at every lattice point. `f` receives the `n` coordinates.
    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let n = grid.dim();
        let values = (0..grid.len())
            .map(|idx| f(&grid.coords(idx)[..n]))
            .collect();
        Self::from_values(grid, values)
    }

    pub fn from_values(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self { grid, values })
    }

    /// Builds a field from values known to be finite.
    pub(crate) fn from_raw(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        assert!(c.is_finite(), "constant field value must be finite");
        Self::from_raw(grid, vec![c; grid.len()])
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// Checks the all-finite invariant, returning the first offending index.
    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite {
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest value and its first index.
    pub fn argmin(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.values) / self.values.len() as f64
    }

    /// Cyclic shift by `cells` lattice cells along `axis`:
    /// `out(x) = self(x - cells * h_axis)`.
    pub fn shifted(&self, axis: usize, cells: isize) -> Self {
        let g = self.grid;
        let values = (0..g.len())
            .map(|idx| self.values[g.neighbour(idx, axis, -cells)])
            .collect();
        Self::from_raw(g, values)
    }
}

/// Sum with a fixed pairwise reduction tree.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Periodic trapezoidal rule: `mean(f * weight) * prod L_k`.
pub fn integrate(f: &ScalarField, weight: Option<&ScalarField>) -> Result<f64> {
    let grid = f.grid();
    let mean = match weight {
        None => f.mean(),
        Some(w) => {
            grid.check_same(w.grid())?;
            let prod: Vec<f64> = f.values().iter().zip(w.values()).map(|(a, b)| a * b).collect();
            pairwise_sum(&prod) / prod.len() as f64
        }
    };
    Ok(mean * grid.volume())
}

/// Second-order centred `2n`-point Laplacian with periodic wraparound.
pub fn laplacian_fd(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let vals = f.values();
    let inv_h2: Vec<f64> = (0..g.dim()).map(|k| 1.0 / (g.spacing(k) * g.spacing(k))).collect();
    let out = (0..g.len())
        .map(|idx| {
            let c = vals[idx];
            let mut acc = 0.0;
            for (k, &w) in inv_h2.iter().enumerate() {
                let p = vals[g.neighbour(idx, k, 1)];
                let m = vals[g.neighbour(idx, k, -1)];
                acc += ((p + m) - 2.0 * c) * w;
            }
            acc
        })
        .collect();
    ScalarField::from_raw(g, out)
}

/// Second-order centred difference along `axis`.
pub fn derivative_fd(f: &ScalarField, axis: usize) -> ScalarField {
    let g = *f.grid();
    let vals = f.values();
    let inv_2h = 0.5 / g.spacing(axis);
    let out = (0..g.len())
        .map(|idx| (vals[g.neighbour(idx, axis, 1)] - vals[g.neighbour(idx, axis, -1)]) * inv_2h)
        .collect();
    ScalarField::from_raw(g, out)
}
