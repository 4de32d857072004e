//! Conformal geometry on flat and conformally flat tori.
//!
//! A metric is `g = u^{4/(n-2)} h` where the background `h` is either the flat
//! metric or `h = v^{4/(n-2)} g_euc`. Every formula here reduces to Euclidean
//! derivatives through the identity
//! `Delta_h f = v^{-4/(n-2)} (Delta f + 2 grad(log v) . grad f)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{integrate, PeriodicGrid, ScalarField};
use crate::spectral::{DiffScheme, SpectralWorkspace};

/// `x^k` by repeated squaring; exponents here are small integers, and this
/// avoids the libm call behind `powi` with a runtime exponent.
#[inline]
pub(crate) fn ipow(x: f64, k: i32) -> f64 {
    let (mut base, mut e, mut acc) = (x, k.unsigned_abs(), 1.0);
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    if k < 0 {
        1.0 / acc
    } else {
        acc
    }
}

/// Integer exponents of the conformal formulas; exact for `n` in {3, 4}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exponents {
    pub n: usize,
}

impl Exponents {
    pub fn new(n: usize) -> Self {
        assert!(n == 3 || n == 4, "conformal exponents need n in {{3, 4}}");
        Self { n }
    }

    fn ratio(&self, num: usize) -> i32 {
        (num / (self.n - 2)) as i32
    }

    /// `4/(n-2)`: metric coefficient exponent.
    pub fn conformal(&self) -> i32 {
        self.ratio(4)
    }

    /// `2/(n-2)`: length element exponent.
    pub fn length(&self) -> i32 {
        self.ratio(2)
    }

    /// `2n/(n-2)`: volume density exponent.
    pub fn critical(&self) -> i32 {
        self.ratio(2 * self.n)
    }

    /// `N = (n+2)/(n-2)`.
    pub fn curvature(&self) -> i32 {
        self.ratio(self.n + 2)
    }

    /// `4(n-1)/(n-2)`.
    pub fn laplace_coefficient(&self) -> f64 {
        4.0 * (self.n as f64 - 1.0) / (self.n as f64 - 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundKind {
    Flat,
    ConformallyFlat,
}

/// Cached data of the conformally flat part `h = v^{4/(n-2)} g_euc`.
#[derive(Debug, Clone)]
struct ConformalPart {
    v: ScalarField,
    scheme: DiffScheme,
    /// `v^{2n/(n-2)}`, the density of `dmu_h`.
    density: ScalarField,
    /// `v^{-4/(n-2)}`.
    inverse_coefficient: ScalarField,
    /// `grad v / v`.
    grad_log_v: Vec<ScalarField>,
}

/// Reference metric `h` with its scalar curvature and volume.
#[derive(Debug, Clone)]
pub struct Background {
    grid: PeriodicGrid,
    conformal: Option<ConformalPart>,
    r_h: ScalarField,
    vol_h: f64,
}

impl Background {
    pub fn flat(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            conformal: None,
            r_h: ScalarField::zeros(grid),
            vol_h: grid.volume(),
        }
    }

    /// `h = v^{4/(n-2)} g_euc`. Derived fields are cached with the scheme of
    /// `ws`, and later operations must use a workspace of the same scheme.
    pub fn conformally_flat(v: ScalarField, ws: &mut SpectralWorkspace) -> Result<Self> {
        let grid = *v.grid();
        grid.check_same(ws.grid())?;
        check_positive(&v)?;
        let e = Exponents::new(grid.dim());
        let flat = Arc::new(Background::flat(grid));
        let r_h = ConformalMetric::new(flat, v.clone())?.scalar_curvature(ws)?;
        let density = v.map(|x| ipow(x, e.critical()));
        let vol_h = integrate(&density, None)?;
        let inverse_coefficient = v.map(|x| ipow(x, -e.conformal()));
        let grad_log_v = ws
            .gradient(&v)?
            .into_iter()
            .map(|d| d.zip_map(&v, |a, b| a / b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            conformal: Some(ConformalPart {
                v,
                scheme: ws.scheme(),
                density,
                inverse_coefficient,
                grad_log_v,
            }),
            r_h,
            vol_h,
        })
    }

    pub fn kind(&self) -> BackgroundKind {
        if self.conformal.is_some() {
            BackgroundKind::ConformallyFlat
        } else {
            BackgroundKind::Flat
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// Conformal factor `v` of a conformally flat background.
    pub fn factor(&self) -> Option<&ScalarField> {
        self.conformal.as_ref().map(|c| &c.v)
    }

    /// Scalar curvature `R_h`.
    pub fn scalar_curvature(&self) -> &ScalarField {
        &self.r_h
    }

    /// Derivative scheme the background was cached with.
    pub fn scheme(&self) -> DiffScheme {
        self.conformal.as_ref().map_or(DiffScheme::Spectral, |c| c.scheme)
    }

    /// `Vol(M, h)`.
    pub fn volume(&self) -> f64 {
        self.vol_h
    }

    /// Density of `dmu_h` with respect to Lebesgue measure (`None` when flat).
    pub fn density(&self) -> Option<&ScalarField> {
        self.conformal.as_ref().map(|c| &c.density)
    }

    /// `v^{-4/(n-2)}` (`None` when flat).
    pub fn inverse_coefficient(&self) -> Option<&ScalarField> {
        self.conformal.as_ref().map(|c| &c.inverse_coefficient)
    }

    /// `int f dmu_h`.
    pub fn integrate(&self, f: &ScalarField) -> Result<f64> {
        integrate(f, self.density())
    }

    fn check_workspace(&self, ws: &SpectralWorkspace) -> Result<()> {
        self.grid.check_same(ws.grid())?;
        if let Some(c) = &self.conformal {
            if c.scheme != ws.scheme() {
                return Err(Error::InvalidArgument(format!(
                    "background cached with {:?} derivatives, workspace uses {:?}",
                    c.scheme,
                    ws.scheme()
                )));
            }
        }
        Ok(())
    }

    /// `Delta_h f`.
    pub fn laplacian(&self, f: &ScalarField, ws: &mut SpectralWorkspace) -> Result<ScalarField> {
        self.check_workspace(ws)?;
        match &self.conformal {
            None => ws.laplacian(f),
            Some(c) => {
                let (lap, grad) = ws.laplacian_and_gradient(f)?;
                let mut out = lap.into_values();
                for (k, d) in grad.iter().enumerate() {
                    let glv = c.grad_log_v[k].values();
                    for (o, (a, b)) in out.iter_mut().zip(d.values().iter().zip(glv)) {
                        *o += 2.0 * a * b;
                    }
                }
                for (o, w) in out.iter_mut().zip(c.inverse_coefficient.values()) {
                    *o *= w;
                }
                Ok(ScalarField::from_raw(self.grid, out))
            }
        }
    }
}

/// Which measure an integral is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    /// `dmu_h`
    Background,
    /// `dmu_g`
    Metric,
}

/// `g = u^{4/(n-2)} h` with `u > 0`.
#[derive(Debug, Clone)]
pub struct ConformalMetric {
    background: Arc<Background>,
    u: ScalarField,
}

impl ConformalMetric {
    pub fn new(background: Arc<Background>, u: ScalarField) -> Result<Self> {
        background.grid().check_same(u.grid())?;
        check_positive(&u)?;
        Ok(Self { background, u })
    }

    /// `u^{4/(n-2)} g_euc` over the flat background of `u`'s grid.
    pub fn flat(u: ScalarField) -> Result<Self> {
        let bg = Arc::new(Background::flat(*u.grid()));
        Self::new(bg, u)
    }

    pub fn background(&self) -> &Arc<Background> {
        &self.background
    }

    pub fn factor(&self) -> &ScalarField {
        &self.u
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.u.grid()
    }

    pub fn exponents(&self) -> Exponents {
        Exponents::new(self.grid().dim())
    }

    /// Same background, new conformal factor.
    pub fn with_factor(&self, u: ScalarField) -> Result<Self> {
        Self::new(Arc::clone(&self.background), u)
    }

    /// Same background, factor already known to be positive on this grid.
    pub(crate) fn with_checked_factor(&self, u: ScalarField) -> Self {
        debug_assert!(u.grid() == self.u.grid() && u.min() > 0.0);
        Self {
            background: Arc::clone(&self.background),
            u,
        }
    }

    /// `R_g = u^{-(n+2)/(n-2)} (R_h u - 4(n-1)/(n-2) Delta_h u)`.
    pub fn scalar_curvature(&self, ws: &mut SpectralWorkspace) -> Result<ScalarField> {
        let e = self.exponents();
        let cn = e.laplace_coefficient();
        let lap = self.background.laplacian(&self.u, ws)?;
        let r_h = self.background.scalar_curvature().values();
        let out = self
            .u
            .values()
            .iter()
            .zip(lap.values())
            .zip(r_h)
            .map(|((&u, &l), &r)| (r * u - cn * l) * ipow(u, -e.curvature()))
            .collect();
        finite_field(*self.grid(), out)
    }

    /// Composite metric coefficient `phi` with `g = phi g_euc`, i.e.
    /// `(u v)^{4/(n-2)}`.
    pub fn euclidean_coefficient(&self) -> ScalarField {
        self.composite_power(self.exponents().conformal())
    }

    /// `(u v)^k` (with `v = 1` on a flat background).
    pub(crate) fn composite_power(&self, k: i32) -> ScalarField {
        match self.background.factor() {
            None => self.u.map(|u| ipow(u, k)),
            Some(v) => ScalarField::from_raw(
                *self.grid(),
                self.u
                    .values()
                    .iter()
                    .zip(v.values())
                    .map(|(a, b)| ipow(a * b, k))
                    .collect(),
            ),
        }
    }

    /// `Delta_g f = u^{-4/(n-2)} (Delta_h f + 2 <grad_h log u, grad_h f>_h)`.
    pub fn laplacian(&self, f: &ScalarField, ws: &mut SpectralWorkspace) -> Result<ScalarField> {
        self.background.check_workspace(ws)?;
        self.grid().check_same(f.grid())?;
        let (lap, grad_f) = ws.laplacian_and_gradient(f)?;
        let grad_u = ws.gradient(&self.u)?;
        let glv = self.background.conformal.as_ref().map(|c| &c.grad_log_v);
        let mut out = lap.into_values();
        let u = self.u.values();
        for k in 0..self.grid().dim() {
            let df = grad_f[k].values();
            let du = grad_u[k].values();
            for i in 0..out.len() {
                let mut log_grad = du[i] / u[i];
                if let Some(glv) = glv {
                    log_grad += glv[k].values()[i];
                }
                out[i] += 2.0 * log_grad * df[i];
            }
        }
        let coefficient = self.composite_power(-self.exponents().conformal());
        for (o, c) in out.iter_mut().zip(coefficient.values()) {
            *o *= c;
        }
        finite_field(*self.grid(), out)
    }

    /// Density of `dmu_g` with respect to Lebesgue measure.
    pub fn density(&self) -> ScalarField {
        self.composite_power(self.exponents().critical())
    }

    /// `Vol(M, g) = int u^{2n/(n-2)} dmu_h`.
    pub fn volume(&self) -> f64 {
        integrate(&self.density(), None).expect("density shares the grid")
    }

    /// `int f dmu`.
    pub fn integrate(&self, f: &ScalarField, measure: Measure) -> Result<f64> {
        match measure {
            Measure::Background => self.background.integrate(f),
            Measure::Metric => integrate(f, Some(&self.density())),
        }
    }

    /// `(int |f|^p dmu)^{1/p}`.
    pub fn lp_norm(&self, f: &ScalarField, p: f64, measure: Measure) -> Result<f64> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "L^p exponent must be positive and finite (got {p})"
            )));
        }
        let powered = f.map(|x| x.abs().powf(p));
        Ok(self.integrate(&powered, measure)?.powf(1.0 / p))
    }

    /// `w = log u - (1/Vol(M,h)) int log u dmu_h`.
    pub fn log_mean_field(&self) -> ScalarField {
        let log_u = self.u.map(f64::ln);
        let mean = self.background.integrate(&log_u).expect("same grid") / self.background.volume();
        log_u.map(|x| x - mean)
    }

    /// `(int u^eps dmu_h)(int u^{-eps} dmu_h)`.
    pub fn moser_product(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Moser exponent must be positive (got {eps})"
            )));
        }
        let plus = self.background.integrate(&self.u.map(|u| u.powf(eps)))?;
        let minus = self.background.integrate(&self.u.map(|u| u.powf(-eps)))?;
        Ok(plus * minus)
    }

    /// `moser_product / Vol(M,h)^2`; at least one by Jensen.
    pub fn moser_ratio(&self, eps: f64) -> Result<f64> {
        let vol = self.background.volume();
        Ok(self.moser_product(eps)? / (vol * vol))
    }

    /// Shortest-path diameter estimate; see [`crate::distance`].
    pub fn diameter_estimate(&self) -> f64 {
        crate::distance::diameter_estimate(self)
    }
}

/// `(int |g_1 - g_2|_h^p dmu_h)^{1/p}` with
/// `|g_1 - g_2|_h = sqrt(n) |u_1^{4/(n-2)} - u_2^{4/(n-2)}|`.
pub fn metric_lp_distance(a: &ConformalMetric, b: &ConformalMetric, p: f64) -> Result<f64> {
    if !Arc::ptr_eq(&a.background, &b.background) {
        same_background(&a.background, &b.background)?;
    }
    let k = a.exponents().conformal();
    let root_n = (a.grid().dim() as f64).sqrt();
    let diff = a
        .u
        .zip_map(&b.u, |x, y| root_n * (ipow(x, k) - ipow(y, k)).abs())?;
    a.lp_norm(&diff, p, Measure::Background)
}

fn same_background(a: &Background, b: &Background) -> Result<()> {
    a.grid().check_same(b.grid())?;
    let equal = match (a.factor(), b.factor()) {
        (None, None) => true,
        (Some(x), Some(y)) => x == y,
        _ => false,
    };
    if equal {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "metrics are conformal to different backgrounds".into(),
        ))
    }
}

pub(crate) fn check_positive(u: &ScalarField) -> Result<()> {
    let (index, value) = u.argmin();
    if value > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositive { index, value })
    }
}

fn finite_field(grid: PeriodicGrid, values: Vec<f64>) -> Result<ScalarField> {
    ScalarField::from_values(grid, values)
}
