//! Grids, wavefunctions and the density fields derived from them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform lattice `x_i = x_min + i * dx`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
    dx: f64,
}

pub const MIN_GRID_POINTS: usize = 16;

/// Builds a uniform grid of `n` points spanning `[x_min, x_max]` inclusive.
pub fn build_grid(x_min: f64, x_max: f64, n: usize) -> Result<Grid> {
    if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min || n < MIN_GRID_POINTS {
        return Err(Error::InvalidBounds { x_min, x_max, n });
    }
    Ok(Grid { x_min, x_max, n, dx: (x_max - x_min) / (n - 1) as f64 })
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        build_grid(x_min, x_max, n)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.x_min, self.x_max)
    }

    /// Cell index and fractional offset of `x` for linear interpolation.
    /// `x` is assumed to lie inside the grid.
    #[inline]
    pub(crate) fn locate(&self, x: f64) -> (usize, f64) {
        let u = (x - self.x_min) / self.dx;
        let i = (u.floor().max(0.0) as usize).min(self.n - 2);
        (i, u - i as f64)
    }

    /// Same grid with `factor` times finer spacing.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        build_grid(self.x_min, self.x_max, (self.n - 1) * factor + 1)
    }
}

/// Trapezoid rule for samples spaced `dx` apart.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => dx * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Closed spatial interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Like [`Interval::new`] but also requires the interval to lie inside `grid`.
    pub fn within(grid: &Grid, lo: f64, hi: f64) -> Result<Self> {
        let iv = Self::new(lo, hi)?;
        if !(grid.contains(lo) && grid.contains(hi)) {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(iv)
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn indicator(&self, x: f64) -> f64 {
        if self.contains(x) {
            1.0
        } else {
            0.0
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0 }
    }
}

impl PhysicalConstants {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        if !(hbar > 0.0 && mass > 0.0 && hbar.is_finite() && mass.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "hbar and mass must be positive, got hbar={hbar}, mass={mass}"
            )));
        }
        Ok(Self { hbar, mass })
    }
}

/// Complex amplitudes on a grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    grid: Grid,
    amp: Vec<Complex64>,
    pub t: f64,
}

/// Largest boundary amplitude tolerated for a bound state in the box.
pub const BOUNDARY_TOLERANCE: f64 = 1e-6;

impl Wavefunction {
    pub fn new(grid: Grid, amp: Vec<Complex64>, t: f64) -> Result<Self> {
        if amp.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: amp.len() });
        }
        Ok(Self { grid, amp, t })
    }

    pub fn from_fn(grid: Grid, t: f64, f: impl Fn(f64) -> Complex64) -> Self {
        let amp = grid.points().map(f).collect();
        Self { grid, amp, t }
    }

    pub fn from_real(grid: Grid, t: f64, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), t)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amp(&self) -> &[Complex64] {
        &self.amp
    }

    pub fn amp_mut(&mut self) -> &mut [Complex64] {
        &mut self.amp
    }

    pub fn into_amp(self) -> Vec<Complex64> {
        self.amp
    }

    /// Trapezoid approximation of `∫|ψ|² dx`.
    pub fn norm_sqr(&self) -> f64 {
        let rho: Vec<f64> = self.amp.iter().map(|a| a.norm_sqr()).collect();
        trapezoid(&rho, self.grid.dx)
    }

    pub fn boundary_amplitude(&self) -> f64 {
        self.amp[0].norm().max(self.amp[self.grid.len() - 1].norm())
    }

    pub fn is_bound(&self) -> bool {
        self.boundary_amplitude() < BOUNDARY_TOLERANCE
    }

    pub fn scaled(mut self, factor: Complex64) -> Self {
        self.amp.iter_mut().for_each(|a| *a *= factor);
        self
    }
}

/// Rescales `psi` to unit trapezoid norm without touching its phase.
pub fn normalize(psi: Wavefunction) -> Result<Wavefunction> {
    let norm = psi.norm_sqr();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroNorm);
    }
    let s = 1.0 / norm.sqrt();
    Ok(psi.scaled(Complex64::new(s, 0.0)))
}

/// Trapezoid approximation of `∫ψ*φ dx`.
pub fn overlap(psi: &Wavefunction, phi: &Wavefunction) -> Result<Complex64> {
    if psi.grid != phi.grid {
        return Err(Error::GridMismatch);
    }
    let n = psi.amp.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, (a, b)) in psi.amp.iter().zip(&phi.amp).enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += a.conj() * b * w;
    }
    Ok(acc * psi.grid.dx)
}

/// Density, probability current and cumulative distribution at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFields {
    grid: Grid,
    t: f64,
    rho: Vec<f64>,
    j: Vec<f64>,
    cdf: Vec<f64>,
    rho_max: f64,
}

/// `ρ = |ψ|²`, `j = (ħ/m) Im(ψ* ∂ψ/∂x)` and the cumulative trapezoid CDF of `ρ`.
///
/// The derivative uses central differences inside the grid and one-sided
/// differences at the two end points.
pub fn density_current(psi: &Wavefunction, consts: &PhysicalConstants) -> DensityFields {
    let grid = psi.grid;
    let n = grid.len();
    let amp = &psi.amp;
    let rho: Vec<f64> = amp.iter().map(|a| a.norm_sqr()).collect();

    let coef = consts.hbar / consts.mass;
    let mut j = vec![0.0; n];
    j[0] = coef * (amp[0].conj() * (amp[1] - amp[0])).im / grid.dx;
    j[n - 1] = coef * (amp[n - 1].conj() * (amp[n - 1] - amp[n - 2])).im / grid.dx;
    let inv_2dx = 0.5 / grid.dx;
    for i in 1..n - 1 {
        j[i] = coef * (amp[i].conj() * (amp[i + 1] - amp[i - 1])).im * inv_2dx;
    }

    DensityFields::from_parts(grid, psi.t, rho, j)
}

impl DensityFields {
    /// Assembles fields from a density and current sampled on `grid`; the
    /// CDF is accumulated here.
    pub fn from_parts(grid: Grid, t: f64, rho: Vec<f64>, j: Vec<f64>) -> Self {
        let mut cdf = Vec::with_capacity(rho.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        let half_dx = 0.5 * grid.dx;
        for w in rho.windows(2) {
            acc += half_dx * (w[0] + w[1]);
            cdf.push(acc.clamp(0.0, 1.0));
        }
        let rho_max = rho.iter().copied().fold(0.0, f64::max);
        Self { grid, t, rho, j, cdf, rho_max }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn j(&self) -> &[f64] {
        &self.j
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    /// Linear interpolation of `(ρ, j)` at `x` (clamped to the grid).
    #[inline]
    pub fn interpolate(&self, x: f64) -> (f64, f64) {
        let (i, s) = self.grid.locate(self.grid.clamp(x));
        (
            self.rho[i] + s * (self.rho[i + 1] - self.rho[i]),
            self.j[i] + s * (self.j[i + 1] - self.j[i]),
        )
    }

    /// Piecewise-linear CDF evaluated at `x`; 0 left of the grid, last value right of it.
    #[inline]
    pub fn cdf_at(&self, x: f64) -> f64 {
        if x <= self.grid.x_min {
            return 0.0;
        }
        if x >= self.grid.x_max {
            return self.cdf[self.cdf.len() - 1];
        }
        let (i, s) = self.grid.locate(x);
        self.cdf[i] + s * (self.cdf[i + 1] - self.cdf[i])
    }

    /// `∫_a^b ρ dx` as the difference of the interpolated CDF.
    pub fn interval_probability(&self, iv: &Interval) -> f64 {
        self.cdf_at(iv.hi) - self.cdf_at(iv.lo)
    }

    /// Inverse CDF without the range check; see [`quantile`].
    #[inline]
    pub(crate) fn quantile_unchecked(&self, p: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < p);
        if i == 0 {
            return self.grid.x_min;
        }
        if i >= self.cdf.len() {
            return self.grid.x_max;
        }
        let (lo, hi) = (self.cdf[i - 1], self.cdf[i]);
        self.grid.x(i - 1) + self.grid.dx * (p - lo) / (hi - lo)
    }
}

/// Position `x` with `cdf(x) = p` under piecewise-linear interpolation.
///
/// On a flat stretch of the CDF the left edge of the plateau is returned.
pub fn quantile(fields: &DensityFields, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfRange(p));
    }
    Ok(fields.quantile_unchecked(p))
}
