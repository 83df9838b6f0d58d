//! Weighted harmonic extension of a periodic field into `z > 0`.
//!
//! The extension `θ*` solves `∇·(z^b ∇θ*) = 0` with `θ*(x, 0) = θ(x)` and
//! `b = 1 - α`. Per Fourier mode it separates as `θ̂(ξ) φ_α(|ξ| z)` where
//! `φ_α` is the bounded solution of `(s^b φ')' = s^b φ`, `φ(0) = 1`:
//!
//! `φ_α(s) = 2^{1-α/2} / Γ(α/2) · s^{α/2} K_{α/2}(s)`.
//!
//! The weighted normal trace recovers `Λ^α` up to the constant
//! `d_α = 2^{1-α} Γ(1-α/2) / Γ(α/2)`; quantities reported downstream are
//! divided by `d_α` so they match the solver's `Λ^α`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{xi, Fft2, Grid, ScalarField, SpectralField};
use crate::quadrature::ZGrid;
use crate::special::{bessel_k, gamma};

fn check_extension_alpha(alpha: f64) -> Result<()> {
    if alpha == 2.0 {
        return Err(Error::Unsupported(
            "alpha = 2 degenerates the weight z^b; use the local Laplacian path".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::param("alpha", format!("{alpha} not in (0, 2)")));
    }
    Ok(())
}

/// `d_α = 2^{1-α} Γ(1-α/2) / Γ(α/2)`.
pub fn trace_constant(alpha: f64) -> Result<f64> {
    check_extension_alpha(alpha)?;
    Ok(2f64.powf(1.0 - alpha) * gamma(1.0 - 0.5 * alpha) / gamma(0.5 * alpha))
}

fn profile_prefactor(alpha: f64) -> f64 {
    let nu = 0.5 * alpha;
    2f64.powf(1.0 - nu) / gamma(nu)
}

// Beyond this K_ν underflows; the profile is zero to double precision.
const S_MAX: f64 = 700.0;

/// `φ_α(s)`, the per-mode extension profile.
pub fn extension_profile(alpha: f64, s: f64) -> Result<f64> {
    check_extension_alpha(alpha)?;
    if !(s >= 0.0) {
        return Err(Error::param("s", format!("{s} must be nonnegative")));
    }
    Ok(profile_unchecked(alpha, s))
}

fn profile_unchecked(alpha: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    if s > S_MAX {
        return 0.0;
    }
    let nu = 0.5 * alpha;
    profile_prefactor(alpha) * s.powf(nu) * bessel_k(nu, s)
}

/// `φ'_α(s) = -2^{1-α/2}/Γ(α/2) · s^{α/2} K_{1-α/2}(s)`.
pub fn extension_profile_derivative(alpha: f64, s: f64) -> Result<f64> {
    check_extension_alpha(alpha)?;
    if !(s >= 0.0) {
        return Err(Error::param("s", format!("{s} must be nonnegative")));
    }
    Ok(derivative_unchecked(alpha, s))
}

fn derivative_unchecked(alpha: f64, s: f64) -> f64 {
    if s > S_MAX {
        return 0.0;
    }
    if s == 0.0 {
        return match alpha.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::NEG_INFINITY,
            Some(std::cmp::Ordering::Equal) => -1.0,
            _ => 0.0,
        };
    }
    let nu = 0.5 * alpha;
    -profile_prefactor(alpha) * s.powf(nu) * bessel_k(1.0 - nu, s)
}

/// Leading coefficient of `-s^{1-α} φ'_α(s)` as `s → 0`, read off the
/// small-argument term `K_μ(s) ≈ Γ(μ)/2 · (s/2)^{-μ}` with `μ = 1 - α/2`.
fn trace_limit(alpha: f64) -> f64 {
    let mu = 1.0 - 0.5 * alpha;
    profile_prefactor(alpha) * 0.5 * gamma(mu) * 2f64.powf(mu)
}

/// Extension parameters: exponent, weight, trace constant and vertical grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionConfig {
    pub alpha: f64,
    pub b: f64,
    pub d_alpha: f64,
    pub zgrid: ZGrid,
}

impl ExtensionConfig {
    pub fn new(alpha: f64, zgrid: ZGrid) -> Result<Self> {
        let d_alpha = trace_constant(alpha)?;
        let b = 1.0 - alpha;
        if (zgrid.b - b).abs() > 1e-14 {
            return Err(Error::param(
                "zgrid",
                format!("weight exponent {} does not match b = {b}", zgrid.b),
            ));
        }
        Ok(Self {
            alpha,
            b,
            d_alpha,
            zgrid,
        })
    }
}

/// Extension samples on the vertical grid for one snapshot.
#[derive(Debug, Clone)]
pub struct ExtendedField {
    pub grid: Grid,
    pub zgrid: ZGrid,
    /// `θ*(·, z_j)` for every node.
    pub values: Vec<ScalarField>,
    /// `(∂₁θ*, ∂₂θ*, ∂_zθ*)` per node, when requested.
    pub gradients: Option<Vec<[Vec<f64>; 3]>>,
}

/// Extension profile and its derivative tabulated on the vertical grid for
/// every integer `|k|²` that survives dealiasing.
#[derive(Debug, Clone)]
pub struct ProfileTable {
    max_kk: usize,
    /// `[node][kk]`
    phi: Vec<Vec<f64>>,
    /// `|ξ| φ'(|ξ| z)`, the vertical-derivative multiplier.
    dphi: Vec<Vec<f64>>,
}

impl ProfileTable {
    pub fn new(grid: &Grid, cfg: &ExtensionConfig) -> Self {
        Self::for_band(grid.max_resolved_k(), grid.k_unit(), cfg)
    }

    /// Table for spectra whose wavevector components satisfy `|k_j| ≤ band`.
    pub fn for_band(band: usize, unit: f64, cfg: &ExtensionConfig) -> Self {
        let resolved = band;
        let max_kk = 2 * band * band;
        let mut phi = Vec::with_capacity(cfg.zgrid.len());
        let mut dphi = Vec::with_capacity(cfg.zgrid.len());
        let used = sums_of_two_squares(resolved, max_kk);
        for &z in &cfg.zgrid.nodes {
            let mut p = vec![0.0; max_kk + 1];
            let mut d = vec![0.0; max_kk + 1];
            p[0] = 1.0;
            for kk in 1..=max_kk {
                if !used[kk] {
                    continue;
                }
                let k = (kk as f64).sqrt() * unit;
                p[kk] = profile_unchecked(cfg.alpha, k * z);
                d[kk] = k * derivative_unchecked(cfg.alpha, k * z);
            }
            phi.push(p);
            dphi.push(d);
        }
        Self { max_kk, phi, dphi }
    }

    fn lookup(&self, node: usize, kk: usize) -> (f64, f64) {
        debug_assert!(kk <= self.max_kk);
        (self.phi[node][kk], self.dphi[node][kk])
    }
}

fn sums_of_two_squares(kmax: usize, max_kk: usize) -> Vec<bool> {
    let mut used = vec![false; max_kk + 1];
    for a in 0..=kmax {
        for b in 0..=kmax {
            used[a * a + b * b] = true;
        }
    }
    used
}

/// One vertical slice of the extension, its gradient and horizontal Laplacian.
#[derive(Debug, Clone)]
pub struct ExtensionSlice {
    pub theta: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub dz: Vec<f64>,
    pub lap: Vec<f64>,
}

/// Reusable FFT plans and profile table for extending many snapshots.
#[derive(Debug, Clone)]
pub struct Extender {
    pub cfg: ExtensionConfig,
    fft: Fft2,
    table: ProfileTable,
}

impl Extender {
    pub fn new(grid: Grid, cfg: ExtensionConfig) -> Self {
        let band = grid.max_resolved_k();
        Self::with_band(grid, cfg, band)
    }

    /// Extender on `grid` for spectra padded from a coarser grid whose
    /// components satisfy `|k_j| ≤ band`.
    pub fn with_band(grid: Grid, cfg: ExtensionConfig, band: usize) -> Self {
        let table = ProfileTable::for_band(band, grid.k_unit(), &cfg);
        Self {
            fft: Fft2::new(grid),
            cfg,
            table,
        }
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// `θ*`, `∇θ*` and `Δ_x θ*` at vertical node `node` from the spectrum of `θ`.
    /// Modes outside the dealiasing band must be zero.
    pub fn slice(&self, theta: &SpectralField, node: usize) -> ExtensionSlice {
        let grid = theta.grid;
        let len = grid.len();
        let zero = Complex64::new(0.0, 0.0);
        let mut a = vec![zero; len];
        let mut dz = vec![zero; len];
        let mut g1 = vec![zero; len];
        let mut g2 = vec![zero; len];
        let mut lap = vec![zero; len];
        for (idx, &c) in theta.coeffs.iter().enumerate() {
            if c == zero {
                continue;
            }
            let (k1, k2) = grid.wavevector(idx);
            let kk = (k1 * k1 + k2 * k2) as usize;
            let (p, d) = self.table.lookup(node, kk);
            a[idx] = c * p;
            dz[idx] = c * d;
            let (x1, x2) = xi(&grid, idx);
            lap[idx] = -(x1 * x1 + x2 * x2) * a[idx];
            if !grid.is_nyquist(idx) {
                let ic = Complex64::new(-c.im, c.re) * p;
                g1[idx] = ic * x1;
                g2[idx] = ic * x2;
            }
        }
        let (theta_v, dz_v) = self.fft.inverse_pair(&a, &dz);
        let (d1, d2) = self.fft.inverse_pair(&g1, &g2);
        let (lap_v, _) = self.fft.inverse_pair(&lap, &vec![zero; len]);
        ExtensionSlice {
            theta: theta_v,
            d1,
            d2,
            dz: dz_v,
            lap: lap_v,
        }
    }
}

/// `θ*` on every node of the configured vertical grid.
pub fn extend(theta: &ScalarField, cfg: &ExtensionConfig, with_gradients: bool) -> ExtendedField {
    let ext = Extender::new(theta.grid, cfg.clone());
    let mut spec = ext.fft.forward(theta);
    spec.dealias();
    let mut values = Vec::with_capacity(cfg.zgrid.len());
    let mut grads = Vec::new();
    for node in 0..cfg.zgrid.len() {
        let s = ext.slice(&spec, node);
        values.push(ScalarField {
            grid: theta.grid,
            values: s.theta,
        });
        if with_gradients {
            grads.push([s.d1, s.d2, s.dz]);
        }
    }
    ExtendedField {
        grid: theta.grid,
        zgrid: cfg.zgrid.clone(),
        values,
        gradients: with_gradients.then_some(grads),
    }
}

/// `θ*(·, z)` at a single height, without any band truncation.
pub fn extend_at(theta: &ScalarField, alpha: f64, z: f64) -> Result<ScalarField> {
    check_extension_alpha(alpha)?;
    if !(z >= 0.0) {
        return Err(Error::param("z", format!("{z} must be nonnegative")));
    }
    let fft = Fft2::new(theta.grid);
    let mut spec = fft.forward(theta);
    let grid = theta.grid;
    for (idx, c) in spec.coeffs.iter_mut().enumerate() {
        let (a, b) = xi(&grid, idx);
        *c *= profile_unchecked(alpha, a.hypot(b) * z);
    }
    Ok(fft.inverse(&spec))
}

/// `-(1/d_α) lim_{z→0} z^b ∂_z θ*`, evaluated per mode from the leading
/// small-argument behaviour of the profile.
pub fn trace_dissipation(theta: &ScalarField, cfg: &ExtensionConfig) -> Result<ScalarField> {
    check_extension_alpha(cfg.alpha)?;
    let alpha = cfg.alpha;
    let tau = trace_limit(alpha);
    let fft = Fft2::new(theta.grid);
    let mut spec = fft.forward(theta);
    let grid = theta.grid;
    for (idx, c) in spec.coeffs.iter_mut().enumerate() {
        let (a, b) = xi(&grid, idx);
        let k = a.hypot(b);
        // -z^b ∂_z [φ(kz)] = -k^{1-b} s^b φ'(s) → k^α τ as s → 0.
        *c *= if k == 0.0 {
            0.0
        } else {
            k.powf(alpha) * tau / cfg.d_alpha
        };
    }
    Ok(fft.inverse(&spec))
}

/// `Σ_j w_j g(z_j) ≈ ∫₀^Z g(z) z^b dz`.
pub fn weighted_z_integral(g: &[f64], cfg: &ExtensionConfig) -> Result<f64> {
    if g.len() != cfg.zgrid.len() {
        return Err(Error::GridMismatch(format!(
            "{} samples for {} vertical nodes",
            g.len(),
            cfg.zgrid.len()
        )));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("non-finite vertical samples".into()));
    }
    Ok(cfg.zgrid.integrate(g))
}

/// `∫∫ φ*(x, z) |∇θ*|² z^b dz dx` for a separable cutoff
/// `φ*(x, z) = spatial(x) · vertical(z)`; no `1/d_α` factor is applied.
pub fn extension_energy(
    theta: &ScalarField,
    spatial: &[f64],
    vertical: impl Fn(f64) -> f64,
    cfg: &ExtensionConfig,
) -> Result<f64> {
    if spatial.len() != theta.grid.len() {
        return Err(Error::GridMismatch("cutoff and field sizes differ".into()));
    }
    let ext = Extender::new(theta.grid, cfg.clone());
    let mut spec = ext.fft.forward(theta);
    spec.dealias();
    let area = theta.grid.cell_area();
    let mut per_node = Vec::with_capacity(cfg.zgrid.len());
    for (node, &z) in cfg.zgrid.nodes.iter().enumerate() {
        let s = ext.slice(&spec, node);
        let mut acc = 0.0;
        for i in 0..spatial.len() {
            if spatial[i] != 0.0 {
                acc += spatial[i] * (s.d1[i] * s.d1[i] + s.d2[i] * s.d2[i] + s.dz[i] * s.dz[i]);
            }
        }
        per_node.push(acc * area * vertical(z));
    }
    weighted_z_integral(&per_node, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn critical_profile_is_poisson_kernel() {
        for &s in &[0.0, 1e-6, 0.01, 0.5, 1.0, 3.0, 20.0, 49.0] {
            let p = extension_profile(1.0, s).unwrap();
            assert!(
                (p - (-s).exp()).abs() <= 1e-12 * (-s).exp().max(1e-300),
                "s={s}"
            );
            let d = extension_profile_derivative(1.0, s).unwrap();
            assert!(
                (d + (-s).exp()).abs() <= 1e-12 * (-s).exp().max(1e-300),
                "s={s}"
            );
        }
    }

    #[test]
    fn profile_boundary_and_monotone() {
        assert_eq!(extension_profile(1.2, 0.0).unwrap(), 1.0);
        for &alpha in &[0.3, 0.8, 1.5, 1.9] {
            let mut prev = 1.0;
            for i in 1..200 {
                let p = extension_profile(alpha, i as f64 * 0.1).unwrap();
                assert!(p < prev && p > 0.0);
                prev = p;
            }
            // continuity at the origin
            assert!((extension_profile(alpha, 1e-12).unwrap() - 1.0).abs() < 1e-3);
        }
        assert!(extension_profile(2.0, 1.0).is_err());
        assert!(extension_profile(0.0, 1.0).is_err());
        assert!(extension_profile(1.0, -1.0).is_err());
    }

    #[test]
    fn trace_constant_values() {
        assert!((trace_constant(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(trace_constant(2.0).is_err());
        // limit of the trace coefficient matches d_α
        for &alpha in &[0.4, 0.8, 1.2, 1.8] {
            assert!((trace_limit(alpha) / trace_constant(alpha).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn trace_limit_approached_by_profile_derivative() {
        // -s^{1-α} φ'(s) → τ_α, with corrections O(s^{2-α}) and O(s^α).
        for &alpha in &[0.4, 0.8] {
            let s: f64 = 1e-9;
            let approx = -s.powf(1.0 - alpha) * extension_profile_derivative(alpha, s).unwrap();
            let tau = trace_limit(alpha);
            assert!((approx / tau - 1.0).abs() < 1e-5, "alpha={alpha}");
        }
    }

    #[test]
    fn single_mode_extension_and_trace() {
        let grid = Grid::new(32, 2.0 * PI).unwrap();
        let theta = ScalarField::from_fn(grid, |x, _| x.cos());
        let zg = ZGrid::graded(0.0, 2.0, 1.0, 1e-3, 6).unwrap();
        let cfg = ExtensionConfig::new(1.0, zg).unwrap();
        let ext = extend(&theta, &cfg, false);
        for (field, &z) in ext.values.iter().zip(&cfg.zgrid.nodes) {
            let want = ScalarField::from_fn(grid, |x, _| (-z).exp() * x.cos());
            let err = field
                .values
                .iter()
                .zip(&want.values)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-12);
        }
        let at0 = extend_at(&theta, 1.3, 0.0).unwrap();
        assert!(at0
            .values
            .iter()
            .zip(&theta.values)
            .all(|(a, b)| (a - b).abs() < 1e-12));

        let tr = trace_dissipation(&theta, &cfg).unwrap();
        assert!(tr
            .values
            .iter()
            .zip(&theta.values)
            .all(|(a, b)| (a - b).abs() < 1e-12));
        let c = ScalarField::from_fn(grid, |_, _| 2.0);
        assert!(trace_dissipation(&c, &cfg).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn ode_collocation_residual() {
        for &alpha in &[0.4, 1.0, 1.6] {
            let b = 1.0 - alpha;
            for i in 1..=20 {
                let s = 0.25 * i as f64;
                let h = 1e-4;
                let d = |x: f64| extension_profile_derivative(alpha, x).unwrap();
                let dd = (d(s + h) - d(s - h)) / (2.0 * h);
                let res = dd + b / s * d(s) - extension_profile(alpha, s).unwrap();
                assert!(res.abs() < 1e-6, "alpha={alpha} s={s} res={res}");
            }
        }
    }

    #[test]
    fn dirichlet_energy_matches_fractional_form() {
        // ∫∫|∇θ*|² z^b = d_α ∫ θ Λ^α θ once the profile has decayed at the top.
        let grid = Grid::new(32, 2.0 * PI).unwrap();
        let theta = ScalarField::from_fn(grid, |x, y| (3.0 * x).cos() + 0.5 * (2.0 * x + y).sin());
        for &alpha in &[0.6, 1.0, 1.5] {
            let zg = ZGrid::graded(1.0 - alpha, 20.0, 10.0, 1e-3, 10).unwrap();
            let cfg = ExtensionConfig::new(alpha, zg).unwrap();
            let ones = vec![1.0; grid.len()];
            let energy = extension_energy(&theta, &ones, |_| 1.0, &cfg).unwrap();
            let lap = crate::fields::fractional_laplacian(&theta, alpha).unwrap();
            let form: f64 = theta
                .values
                .iter()
                .zip(&lap.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                * grid.cell_area();
            let want = cfg.d_alpha * form;
            assert!(
                (energy / want - 1.0).abs() < 1e-2,
                "alpha={alpha}: {energy} vs {want}"
            );
        }
    }

    #[test]
    fn weighted_integral_rejects_mismatch() {
        let zg = ZGrid::graded(0.0, 1.0, 0.5, 1e-2, 4).unwrap();
        let cfg = ExtensionConfig::new(1.0, zg).unwrap();
        assert!(weighted_z_integral(&[1.0], &cfg).is_err());
        let ones = vec![1.0; cfg.zgrid.len()];
        assert!((weighted_z_integral(&ones, &cfg).unwrap() - 1.0).abs() < 1e-14);
    }
}
