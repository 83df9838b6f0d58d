//! Periodic grids, spectral transforms and the SQG constitutive law.
//!
//! Physical fields are stored row-major with `values[j * n + i]` holding the
//! sample at `x = (i dx, j dx)`. Spectral coefficients use the same layout in
//! wavenumber space, `coeffs[k2 * n + k1]`, with the usual FFT index wrap
//! (indices above `n/2` are negative wavenumbers). Forward transforms carry
//! the `1/n²` normalisation so that a coefficient is the Fourier mean
//! `f̂(ξ) = ⟨f e^{-iξ·x}⟩`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square periodic grid of `n × n` points on a box of side `length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::param(
                "n",
                format!("{n} is not a power of two >= 16"),
            ));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::param("length", format!("{length} must be positive")));
        }
        Ok(Self { n, length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Area element of one grid cell.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical coordinates of flat index `idx`.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let dx = self.dx();
        [(idx % self.n) as f64 * dx, (idx / self.n) as f64 * dx]
    }

    /// Signed integer wavenumber for an FFT index.
    pub fn wave_index(&self, idx: usize) -> i64 {
        if idx <= self.n / 2 {
            idx as i64
        } else {
            idx as i64 - self.n as i64
        }
    }

    /// Integer wavevector `(k1, k2)` of flat spectral index `idx`.
    pub fn wavevector(&self, idx: usize) -> (i64, i64) {
        (self.wave_index(idx % self.n), self.wave_index(idx / self.n))
    }

    /// Conversion factor from integer wavenumbers to `ξ`.
    pub fn k_unit(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Whether `idx` touches a Nyquist row or column.
    pub fn is_nyquist(&self, idx: usize) -> bool {
        let h = self.n / 2;
        idx % self.n == h || idx / self.n == h
    }

    /// 2/3-rule mask: both integer components strictly below `n/3`.
    pub fn is_resolved(&self, idx: usize) -> bool {
        let (k1, k2) = self.wavevector(idx);
        3 * k1.unsigned_abs() < self.n as u64 && 3 * k2.unsigned_abs() < self.n as u64
    }

    /// Largest integer wavenumber kept by the dealiasing mask.
    pub fn max_resolved_k(&self) -> usize {
        (self.n - 1) / 3
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{}x{} (L={}) vs {}x{} (L={})",
                self.n, self.n, self.length, other.n, other.n, other.length
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x1, x2)` at the grid points.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let [x1, x2] = grid.point(idx);
                f(x1, x2)
            })
            .collect();
        Self { grid, values }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Grid-sum approximation of `∫ f dx` over the torus.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    pub coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Coefficient at integer wavevector `(k1, k2)`, wrapping negative indices.
    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        let n = self.grid.n as i64;
        let i = k1.rem_euclid(n) as usize;
        let j = k2.rem_euclid(n) as usize;
        self.coeffs[j * self.grid.n + i]
    }

    /// `Σ |f̂|²`, which equals the grid mean of `f²`.
    pub fn power(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest deviation from `f̂(-ξ) = conj f̂(ξ)`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n;
        let mut worst = 0.0_f64;
        for j in 0..n {
            for i in 0..n {
                let a = self.coeffs[j * n + i];
                let b = self.coeffs[((n - j) % n) * n + (n - i) % n];
                worst = worst.max((a - b.conj()).norm());
            }
        }
        worst
    }

    /// Zeroes every coefficient outside the 2/3-rule band.
    pub fn dealias(&mut self) {
        let grid = self.grid;
        for (idx, c) in self.coeffs.iter_mut().enumerate() {
            if !grid.is_resolved(idx) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl VectorField {
    pub fn max_norm(&self) -> f64 {
        self.u1
            .iter()
            .zip(&self.u2)
            .fold(0.0_f64, |m, (a, b)| m.max(a.hypot(*b)))
    }
}

/// Cached 2D FFT plans for one grid size.
#[derive(Clone)]
pub struct Fft2 {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("grid", &self.grid).finish()
    }
}

impl Fft2 {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.n);
        let inverse = planner.plan_fft_inverse(grid.n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            grid,
            forward,
            inverse,
            scratch_len,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n;
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
    }

    /// In-place forward transform including the `1/n²` factor.
    pub fn forward_inplace(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
        let s = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|c| *c *= s);
    }

    /// In-place unnormalised inverse transform.
    pub fn inverse_inplace(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }

    pub fn forward(&self, f: &ScalarField) -> SpectralField {
        let mut coeffs: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_inplace(&mut coeffs);
        SpectralField {
            grid: f.grid,
            coeffs,
        }
    }

    /// Inverse transform of a Hermitian spectrum; the imaginary part is dropped.
    pub fn inverse(&self, f: &SpectralField) -> ScalarField {
        let mut data = f.coeffs.clone();
        self.inverse_inplace(&mut data);
        ScalarField {
            grid: f.grid,
            values: data.into_iter().map(|c| c.re).collect(),
        }
    }

    /// Inverts two Hermitian spectra with a single complex transform.
    pub fn inverse_pair(&self, a: &[Complex64], b: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::new(0.0, 1.0);
        let mut data: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x + i * y).collect();
        self.inverse_inplace(&mut data);
        data.into_iter().map(|c| (c.re, c.im)).unzip()
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

/// Spectral multipliers shared by the operators below.
pub(crate) fn xi(grid: &Grid, idx: usize) -> (f64, f64) {
    let (k1, k2) = grid.wavevector(idx);
    let u = grid.k_unit();
    (k1 as f64 * u, k2 as f64 * u)
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::param("alpha", format!("{alpha} not in (0, 2]")));
    }
    Ok(())
}

/// Same trigonometric polynomial on a grid `factor` times finer; Nyquist
/// modes of the source are dropped.
pub fn pad_spectrum(f: &SpectralField, factor: usize) -> Result<SpectralField> {
    if factor == 0 {
        return Err(Error::param("factor", "must be >= 1"));
    }
    let src = f.grid;
    let fine = Grid::new(src.n() * factor, src.length())?;
    let m = fine.n() as i64;
    let mut out = SpectralField::zeros(fine);
    for (idx, &c) in f.coeffs.iter().enumerate() {
        if src.is_nyquist(idx) && factor > 1 {
            continue;
        }
        let (k1, k2) = src.wavevector(idx);
        let j = (k2.rem_euclid(m) * m + k1.rem_euclid(m)) as usize;
        out.coeffs[j] = c;
    }
    Ok(out)
}

/// Multiplies `f̂` by `|ξ|^α` in place; the zero mode maps to zero.
pub fn apply_fractional_multiplier(f: &mut SpectralField, alpha: f64) {
    let grid = f.grid;
    for (idx, c) in f.coeffs.iter_mut().enumerate() {
        let (a, b) = xi(&grid, idx);
        let k = a.hypot(b);
        *c *= if k == 0.0 { 0.0 } else { k.powf(alpha) };
    }
}

/// `Λ^α f`, the Fourier multiplier `|ξ|^α`.
pub fn fractional_laplacian(f: &ScalarField, alpha: f64) -> Result<ScalarField> {
    check_alpha(alpha)?;
    let fft = Fft2::new(f.grid);
    let mut spec = fft.forward(f);
    apply_fractional_multiplier(&mut spec, alpha);
    Ok(fft.inverse(&spec))
}

/// Spectral velocity `û = (iξ₂, -iξ₁) θ̂ / |ξ|` written into two spectra.
pub(crate) fn velocity_spectra(theta: &SpectralField) -> (Vec<Complex64>, Vec<Complex64>) {
    let grid = theta.grid;
    let mut u1 = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut u2 = u1.clone();
    for (idx, &c) in theta.coeffs.iter().enumerate() {
        if grid.is_nyquist(idx) {
            continue;
        }
        let (a, b) = xi(&grid, idx);
        let k = a.hypot(b);
        if k == 0.0 {
            continue;
        }
        let ic = Complex64::new(-c.im, c.re) / k;
        u1[idx] = ic * b;
        u2[idx] = -ic * a;
    }
    (u1, u2)
}

/// Spectral gradient `(iξ₁ f̂, iξ₂ f̂)`, Nyquist modes dropped.
pub(crate) fn gradient_spectra(f: &SpectralField) -> (Vec<Complex64>, Vec<Complex64>) {
    let grid = f.grid;
    let mut g1 = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut g2 = g1.clone();
    for (idx, &c) in f.coeffs.iter().enumerate() {
        if grid.is_nyquist(idx) {
            continue;
        }
        let (a, b) = xi(&grid, idx);
        let ic = Complex64::new(-c.im, c.re);
        g1[idx] = ic * a;
        g2[idx] = ic * b;
    }
    (g1, g2)
}

/// SQG velocity from temperature: `ΛΨ = -θ`, `u = (-∂₂Ψ, ∂₁Ψ)`.
pub fn velocity_from_theta(theta: &ScalarField) -> Result<VectorField> {
    let fft = Fft2::new(theta.grid);
    let spec = fft.forward(theta);
    velocity_from_spectrum(&fft, &spec)
}

pub(crate) fn velocity_from_spectrum(fft: &Fft2, spec: &SpectralField) -> Result<VectorField> {
    let mean = spec.coeffs[0];
    let scale = spec.coeffs.iter().fold(1.0_f64, |m, c| m.max(c.norm()));
    if mean.norm() > 1e-12 * scale {
        return Err(Error::Precondition(format!(
            "theta has nonzero mean {:.3e}; the velocity of the mean mode is undefined",
            mean.re
        )));
    }
    let (s1, s2) = velocity_spectra(spec);
    let (u1, u2) = fft.inverse_pair(&s1, &s2);
    Ok(VectorField {
        grid: spec.grid,
        u1,
        u2,
    })
}

pub fn gradient(f: &ScalarField) -> VectorField {
    let fft = Fft2::new(f.grid);
    let spec = fft.forward(f);
    let (g1, g2) = gradient_spectra(&spec);
    let (u1, u2) = fft.inverse_pair(&g1, &g2);
    VectorField {
        grid: f.grid,
        u1,
        u2,
    }
}

/// Largest `|iξ·û|` relative to `max |û|`; zero for exactly solenoidal fields.
pub fn spectral_divergence(u: &VectorField) -> Result<f64> {
    let fft = Fft2::new(u.grid);
    let a = fft.forward(&ScalarField {
        grid: u.grid,
        values: u.u1.clone(),
    });
    let b = fft.forward(&ScalarField {
        grid: u.grid,
        values: u.u2.clone(),
    });
    let mut worst = 0.0_f64;
    let mut scale = 0.0_f64;
    for idx in 0..u.grid.len() {
        let (x1, x2) = xi(&u.grid, idx);
        let div = a.coeffs[idx] * x1 + b.coeffs[idx] * x2;
        worst = worst.max(div.norm());
        scale = scale.max(a.coeffs[idx].norm().max(b.coeffs[idx].norm()) * x1.hypot(x2));
    }
    Ok(if scale == 0.0 { 0.0 } else { worst / scale })
}

/// Pointwise `u · ∇θ`.
pub fn advection(u: &VectorField, theta: &ScalarField) -> Result<ScalarField> {
    u.grid.check_same(&theta.grid)?;
    let g = gradient(theta);
    let values = (0..theta.grid.len())
        .map(|i| u.u1[i] * g.u1[i] + u.u2[i] * g.u2[i])
        .collect();
    Ok(ScalarField {
        grid: theta.grid,
        values,
    })
}
