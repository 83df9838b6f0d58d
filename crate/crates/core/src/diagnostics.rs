//! Localized variance flux, its three-term decomposition, macro averages,
//! the cascade inequality chain and flux locality ratios.
//!
//! All space-time averages carry the prefactor `1/(T R²)`. Extension-side
//! terms are multiplied by `κ/d_α` so that `D + X` equals `∫∫ φ θ κΛ^α θ`.
//! For `α = 2` the extension is replaced by the local identity
//! `∫ φ θ (-κΔθ) = κ∫ φ|∇θ|² + κ∫ θ ∇φ·∇θ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{trace_constant, Extender, ExtensionConfig};
use crate::fields::{
    apply_fractional_multiplier, gradient_spectra, pad_spectrum, velocity_from_spectrum, Fft2,
    Grid, ScalarField,
};
use crate::multiscale::{
    trapezoid_weights, Cutoff, CutoffFamily, CutoffKind, FamilyCert, MacroDomain, Stencil,
};
use crate::quadrature::{ZGrid, ZGridSpec};
use crate::solver::SnapshotSeries;

/// Default multiplicative slack on every guaranteed inequality.
pub const DEFAULT_SLACK: f64 = 0.01;
/// Smallest admissible cover scale in grid spacings.
pub const SCALE_FLOOR_DX: f64 = 8.0;

/// Settings shared by all diagnostics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_k")]
    pub k1: f64,
    #[serde(default = "default_k")]
    pub k2: f64,
    /// Vertical plateau height; defaults to `R0`.
    #[serde(default)]
    pub r_star: Option<f64>,
    /// Vertical grid; defaults to [`ZGridSpec::for_alpha`].
    #[serde(default)]
    pub zgrid: Option<ZGridSpec>,
    #[serde(default = "default_slack")]
    pub slack: f64,
    /// Extension-side integrals are summed on a grid this many times finer
    /// than the field grid.
    #[serde(default = "default_oversample")]
    pub oversample: usize,
}

fn default_oversample() -> usize {
    1
}

fn default_delta() -> f64 {
    0.75
}

fn default_k() -> f64 {
    8.0
}

fn default_slack() -> f64 {
    DEFAULT_SLACK
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            k1: default_k(),
            k2: default_k(),
            r_star: None,
            zgrid: None,
            slack: default_slack(),
            oversample: default_oversample(),
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        crate::multiscale::cutoff_power(self.delta)?;
        if !(self.k1 >= 1.0 && self.k2 >= 1.0) {
            return Err(Error::param("k1, k2", "must be >= 1"));
        }
        if !(0.0..0.5).contains(&self.slack) {
            return Err(Error::param(
                "slack",
                format!("{} not in [0, 0.5)", self.slack),
            ));
        }
        if !(1..=4).contains(&self.oversample) {
            return Err(Error::param(
                "oversample",
                format!("{} not in 1..=4", self.oversample),
            ));
        }
        if let Some(r) = self.r_star {
            if !(r > 0.0) {
                return Err(Error::param("r_star", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn r_star(&self, md: &MacroDomain) -> f64 {
        self.r_star.unwrap_or(md.r0)
    }

    pub fn zgrid_spec(&self, alpha: f64) -> ZGridSpec {
        self.zgrid.unwrap_or_else(|| ZGridSpec::for_alpha(alpha))
    }

    /// Vertical grid on `[0, R* + R0]` resolving the largest retained wavenumber.
    pub fn vertical_grid(&self, md: &MacroDomain, grid: &Grid, alpha: f64) -> Result<ZGrid> {
        let k_max = std::f64::consts::SQRT_2 * grid.max_resolved_k() as f64 * grid.k_unit();
        ZGrid::for_extension(
            alpha,
            self.r_star(md),
            md.r0,
            k_max,
            &self.zgrid_spec(alpha),
        )
    }
}

/// Normalized terms of the localized budget `F = D + X - P` for one cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxTerms {
    /// `(1/(TR²)) ∫∫ ½θ² ∇φ·u`
    pub f: f64,
    /// `-(1/(TR²)) ∫∫ (u·∇θ) θ φ`
    pub f_dual: f64,
    pub d: f64,
    pub x: f64,
    /// `(1/(TR²)) ∫∫ ½θ² ∂_tφ`
    pub p: f64,
    /// `F - (D + X - P)`
    pub residual: f64,
}

impl FluxTerms {
    /// `|residual| / max(|F|, D)`; zero when both vanish.
    pub fn relative_residual(&self) -> f64 {
        let scale = self.f.abs().max(self.d);
        if scale == 0.0 {
            0.0
        } else {
            self.residual.abs() / scale
        }
    }
}

/// Budget terms of one cover element with the weights feeding the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementTerms {
    pub center: [f64; 2],
    pub kind: CutoffKind,
    pub terms: FluxTerms,
    /// `(κ/d_α)(1/(TR²)) ∫∫∫ ½θ*² φ*^{2δ-1} z^b`, or `κ` times
    /// `variance` on the local path.
    pub young: f64,
    /// `(1/(TR²)) ∫∫ ½θ² φ^{2δ-1}`
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Raw {
    f: f64,
    f_dual: f64,
    p: f64,
    d: f64,
    x: f64,
    young: f64,
    variance: f64,
}

struct Target<'a> {
    cut: &'a Cutoff,
    /// Field grid, for extension slices.
    stencil: Stencil,
    /// Doubled grid, for the surface terms.
    fine: Stencil,
}

/// Whether `α` takes the local-Laplacian path.
pub fn is_local_path(alpha: f64) -> bool {
    alpha == 2.0
}

/// Runs every cutoff over the trajectory, sharing FFTs and extension slices.
fn accumulate<S>(
    series: &S,
    md: &MacroDomain,
    cuts: &[&Cutoff],
    cfg: &DiagnosticsConfig,
) -> Result<Vec<ElementTerms>>
where
    S: SnapshotSeries + ?Sized,
{
    let grid = series.grid();
    md.check_grid(&grid)?;
    md.check_series(series)?;
    let alpha = series.alpha();
    let kappa = series.kappa();
    let fft = Fft2::new(grid);
    let fine = Grid::new(2 * grid.n(), grid.length())?;
    let fine_fft = Fft2::new(fine);
    let extender = if is_local_path(alpha) {
        None
    } else {
        let zgrid = cfg.vertical_grid(md, &grid, alpha)?;
        let ext_grid = Grid::new(cfg.oversample * grid.n(), grid.length())?;
        let ext_cfg = ExtensionConfig::new(alpha, zgrid)?;
        Some(Extender::with_band(
            ext_grid,
            ext_cfg,
            grid.max_resolved_k(),
        ))
    };
    let ext_scale = match &extender {
        Some(e) => kappa / e.cfg.d_alpha,
        None => kappa,
    };
    let targets: Vec<Target> = cuts
        .iter()
        .map(|&cut| Target {
            cut,
            stencil: if let Some(e) = &extender {
                cut.stencil(&e.fft().grid())
            } else {
                Stencil::default()
            },
            fine: cut.stencil(&fine),
        })
        .collect();
    let area = extender
        .as_ref()
        .map_or(0.0, |e| e.fft().grid().cell_area());
    let fine_area = fine.cell_area();
    let weights = trapezoid_weights(series.times());
    let mut raw = vec![Raw::default(); targets.len()];
    let mut half_sq = vec![0.0; fine.len()];
    for (k, (&t, &w)) in series.times().iter().zip(&weights).enumerate() {
        let etas: Vec<(f64, f64)> = targets.iter().map(|tg| tg.cut.eta(t)).collect();
        if w == 0.0 || etas.iter().all(|&(e, de)| e == 0.0 && de == 0.0) {
            continue;
        }
        let theta = series.snapshot(k)?;
        let mut spec = fft.forward(&theta);
        spec.dealias();
        let padded = pad_spectrum(&spec, 2)?;
        let th = fine_fft.inverse(&padded).values;
        let u = velocity_from_spectrum(&fine_fft, &padded)?;
        let (g1, g2) = gradient_spectra(&padded);
        let (t1, t2) = fine_fft.inverse_pair(&g1, &g2);
        // Δθ on the local path, as -Λ²θ
        let lap = extender.is_none().then(|| {
            let mut l = padded.clone();
            apply_fractional_multiplier(&mut l, 2.0);
            l.coeffs.iter_mut().for_each(|c| *c = -*c);
            fine_fft.inverse(&l).values
        });
        for (h, v) in half_sq.iter_mut().zip(th.iter()) {
            *h = 0.5 * v * v;
        }
        for ((tg, acc), &(eta, deta)) in targets.iter().zip(raw.iter_mut()).zip(&etas) {
            let st = &tg.fine;
            let pow = 2.0 * tg.cut.delta - 1.0;
            let (mut f, mut fd, mut pp, mut var, mut dd, mut xx) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for (s, &i) in st.idx.iter().enumerate() {
                let psi = st.psi[s];
                let [a, b] = st.grad[s];
                f += half_sq[i] * (a * u.u1[i] + b * u.u2[i]);
                fd -= psi * (u.u1[i] * t1[i] + u.u2[i] * t2[i]) * th[i];
                pp += psi * half_sq[i];
                var += st.psi_pow[s] * half_sq[i];
                if let Some(lap) = &lap {
                    let gg = t1[i] * t1[i] + t2[i] * t2[i];
                    dd += psi * gg;
                    xx -= psi * (th[i] * lap[i] + gg);
                }
            }
            let eta_pow = if eta > 0.0 { eta.powf(pow) } else { 0.0 };
            acc.f += w * eta * f * fine_area;
            acc.f_dual += w * eta * fd * fine_area;
            acc.p += w * deta * pp * fine_area;
            acc.variance += w * eta_pow * var * fine_area;
            if extender.is_none() {
                acc.d += w * eta * ext_scale * dd * fine_area;
                acc.x += w * eta * ext_scale * xx * fine_area;
                acc.young += w * eta_pow * ext_scale * var * fine_area;
            }
        }
        let Some(ext) = &extender else { continue };
        let dspec = if cfg.oversample == 1 {
            spec
        } else {
            pad_spectrum(&spec, cfg.oversample)?
        };
        let zg = &ext.cfg.zgrid;
        for (node, (&z, &wz)) in zg.nodes.iter().zip(&zg.weights).enumerate() {
            let verts: Vec<(f64, f64)> = targets.iter().map(|tg| tg.cut.vertical(z)).collect();
            if verts.iter().all(|&(v, dv)| v == 0.0 && dv == 0.0) {
                continue;
            }
            let sl = ext.slice(&dspec, node);
            for (((tg, acc), &(eta, _)), &(vz, dvz)) in
                targets.iter().zip(raw.iter_mut()).zip(&etas).zip(&verts)
            {
                if eta == 0.0 || vz == 0.0 && dvz == 0.0 {
                    continue;
                }
                let st = &tg.stencil;
                let pow = 2.0 * tg.cut.delta - 1.0;
                let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
                for (s, &i) in st.idx.iter().enumerate() {
                    let psi = st.psi[s];
                    let (th, d1, d2, dz) = (sl.theta[i], sl.d1[i], sl.d2[i], sl.dz[i]);
                    let gg = d1 * d1 + d2 * d2;
                    s1 += psi * (gg + dz * dz);
                    // θ*∇ψ·∇θ* summed by parts: ψ is only Lipschitz across the
                    // macro boundary and its sampled gradient converges at first order.
                    s2 -= psi * (th * sl.lap[i] + gg);
                    s3 += psi * th * dz;
                    s4 += st.psi_pow[s] * 0.5 * th * th;
                }
                let c = w * wz * ext_scale * area;
                acc.d += c * eta * vz * s1;
                acc.x += c * eta * (vz * s2 + dvz * s3);
                if vz > 0.0 {
                    acc.young += c * eta.powf(pow) * vz.powf(pow) * s4;
                }
            }
        }
    }
    let tu = md.t_unit;
    Ok(targets
        .iter()
        .zip(raw)
        .map(|(tg, r)| {
            let norm = 1.0 / (tu * tg.cut.r * tg.cut.r);
            let (f, d, x, p) = (r.f * norm, r.d * norm, r.x * norm, r.p * norm);
            ElementTerms {
                center: tg.cut.center,
                kind: tg.cut.kind,
                terms: FluxTerms {
                    f,
                    f_dual: r.f_dual * norm,
                    d,
                    x,
                    p,
                    residual: f - (d + x - p),
                },
                young: r.young * norm,
                variance: r.variance * norm,
            }
        })
        .collect())
}

/// Advective flux into the cutoff, `(1/(TR²)) ∫∫ ½θ² ∇φ·u`; positive means inflow.
pub fn local_flux<S: SnapshotSeries + ?Sized>(series: &S, cutoff: &Cutoff) -> Result<f64> {
    Ok(flux_pair(series, cutoff)?.0)
}

/// The flux and its dual form `-(1/(TR²)) ∫∫ (u·∇θ) θ φ`, without extension
/// terms. Both are summed over a grid twice as fine, where products of
/// dealiased fields are exact, and `∇φ` is the spectral gradient of the
/// sampled cutoff; the two forms then agree to rounding.
pub fn flux_pair<S: SnapshotSeries + ?Sized>(series: &S, cutoff: &Cutoff) -> Result<(f64, f64)> {
    let grid = series.grid();
    let md = &cutoff.macro_domain;
    md.check_grid(&grid)?;
    md.check_series(series)?;
    let fft = Fft2::new(grid);
    let fine = Grid::new(2 * grid.n(), grid.length())?;
    let fine_fft = Fft2::new(fine);
    let psi = ScalarField::from_fn(fine, |x, y| cutoff.psi([x, y]));
    let (p1, p2) = {
        let (a, b) = gradient_spectra(&fine_fft.forward(&psi));
        fine_fft.inverse_pair(&a, &b)
    };
    let weights = trapezoid_weights(series.times());
    let (mut f, mut fd) = (0.0, 0.0);
    for (k, (&t, &w)) in series.times().iter().zip(&weights).enumerate() {
        let (eta, _) = cutoff.eta(t);
        if eta == 0.0 || w == 0.0 {
            continue;
        }
        let theta = series.snapshot(k)?;
        let mut spec = fft.forward(&theta);
        spec.dealias();
        let spec = pad_spectrum(&spec, 2)?;
        let th = fine_fft.inverse(&spec).values;
        let u = velocity_from_spectrum(&fine_fft, &spec)?;
        let (g1, g2) = gradient_spectra(&spec);
        let (t1, t2) = fine_fft.inverse_pair(&g1, &g2);
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..fine.len() {
            a += 0.5 * th[i] * th[i] * (p1[i] * u.u1[i] + p2[i] * u.u2[i]);
            b -= psi.values[i] * (u.u1[i] * t1[i] + u.u2[i] * t2[i]) * th[i];
        }
        f += w * eta * a;
        fd += w * eta * b;
    }
    let norm = fine.cell_area() / (md.t_unit * cutoff.r * cutoff.r);
    Ok((f * norm, fd * norm))
}

/// All budget terms for one cutoff.
pub fn local_budget<S: SnapshotSeries + ?Sized>(
    series: &S,
    cutoff: &Cutoff,
    cfg: &DiagnosticsConfig,
) -> Result<FluxTerms> {
    let out = accumulate(series, &cutoff.macro_domain, &[cutoff], cfg)?;
    let t = out[0].terms;
    for v in [t.f, t.d, t.x, t.p] {
        if !v.is_finite() {
            return Err(Error::Undefined("non-finite budget term".into()));
        }
    }
    Ok(t)
}

/// `β = min{(8 C0 K1 K2)^{-1/2}, (8 C0 K1 K2)^{-1/α}}` with one constant.
pub fn beta_paper(c0: f64, k1: f64, k2: f64, alpha: f64) -> f64 {
    let q = 8.0 * c0 * k1 * k2;
    q.powf(-0.5).min(q.powf(-1.0 / alpha))
}

/// Scale ratio closing the chain with the split constants
/// `C_t = 2 C0` (time term) and `C0²` (Young term).
pub fn beta_eff(c0: f64, k1: f64, k2: f64, alpha: f64) -> f64 {
    (16.0 * c0 * k1 * k2)
        .powf(-1.0 / alpha)
        .min((8.0 * c0 * c0 * k1 * k2).powf(-0.5))
}

/// Certified constants entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveConstants {
    pub c0_eff: f64,
    pub k1_eff: f64,
    pub k2_eff: f64,
    pub k1_declared: f64,
    pub k2_declared: f64,
}

impl EffectiveConstants {
    /// Worst constants over a set of certified families.
    pub fn from_certs(certs: &[FamilyCert]) -> Result<Self> {
        let first = certs
            .first()
            .ok_or_else(|| Error::Precondition("no certified scales".into()))?;
        Ok(Self {
            c0_eff: certs.iter().map(|c| c.c0_eff).fold(0.0, f64::max),
            k1_eff: certs.iter().map(|c| c.cover.k1_eff).fold(1.0, f64::max),
            k2_eff: certs.iter().map(|c| c.k2_eff as f64).fold(1.0, f64::max),
            k1_declared: first.cover.k1_declared,
            k2_declared: first.cover.k2_declared,
        })
    }
}

/// Macro-scale averages and derived scale ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAverages {
    pub alpha: f64,
    pub kappa: f64,
    /// `None` on the local path.
    pub d_alpha: Option<f64>,
    pub local_path: bool,
    pub theta0: f64,
    pub theta0_star: f64,
    pub eps0_star: f64,
    /// `max{(ϑ0/ε0*)^{1/α}, (ϑ0*/ε0*)^{1/2}}`, undefined when `ε0* = 0`.
    pub sigma0: Option<f64>,
    pub beta_paper: f64,
    pub beta_eff: f64,
    pub constants: EffectiveConstants,
    /// Budget terms of the macro cutoff itself.
    pub macro_terms: FluxTerms,
}

impl MacroAverages {
    pub fn sigma0(&self) -> Result<f64> {
        self.sigma0.ok_or_else(|| {
            Error::Undefined("sigma0 needs eps0* > 0 but the macro dissipation vanishes".into())
        })
    }

    /// `σ0 < β_eff R0`.
    pub fn premise(&self, r0: f64) -> bool {
        matches!(self.sigma0, Some(s) if s < self.beta_eff * r0)
    }

    fn from_terms(
        macro_terms: &ElementTerms,
        alpha: f64,
        kappa: f64,
        constants: EffectiveConstants,
    ) -> Self {
        let local_path = is_local_path(alpha);
        let theta0 = macro_terms.variance;
        let theta0_star = macro_terms.young;
        let eps0_star = macro_terms.terms.d;
        let sigma0 = (eps0_star > 0.0).then(|| {
            (theta0 / eps0_star)
                .powf(1.0 / alpha)
                .max((theta0_star / eps0_star).sqrt())
        });
        let EffectiveConstants {
            c0_eff,
            k1_eff,
            k2_eff,
            ..
        } = constants;
        Self {
            alpha,
            kappa,
            d_alpha: (!local_path).then(|| trace_constant(alpha).unwrap_or(f64::NAN)),
            local_path,
            theta0,
            theta0_star,
            eps0_star,
            sigma0,
            beta_paper: beta_paper(c0_eff, constants.k1_declared, constants.k2_declared, alpha),
            beta_eff: beta_eff(c0_eff, k1_eff, k2_eff, alpha),
            constants,
            macro_terms: macro_terms.terms,
        }
    }
}

/// Macro averages `ϑ0`, `ϑ0*`, `ε0*`, `σ0` and both `β` values.
pub fn macro_averages<S: SnapshotSeries + ?Sized>(
    series: &S,
    md: &MacroDomain,
    cfg: &DiagnosticsConfig,
    constants: EffectiveConstants,
) -> Result<MacroAverages> {
    cfg.validate()?;
    let mac = crate::multiscale::build_macro_cutoff(md, cfg.delta, cfg.r_star(md))?;
    let out = accumulate(series, md, &[&mac], cfg)?;
    Ok(MacroAverages::from_terms(
        &out[0],
        series.alpha(),
        series.kappa(),
        constants,
    ))
}

/// Budget terms of every element at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleAnalysis {
    pub r: f64,
    pub n: usize,
    pub cert: Option<FamilyCert>,
    pub elements: Vec<ElementTerms>,
}

/// Everything computed in one pass over a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub macro_domain: MacroDomain,
    pub config: DiagnosticsConfig,
    pub macro_averages: MacroAverages,
    pub scales: Vec<ScaleAnalysis>,
}

/// Computes the macro averages and the budget of every element of every
/// family in a single pass; `certs[i]` certifies `families[i]`.
pub fn analyze<S: SnapshotSeries + ?Sized>(
    series: &S,
    md: &MacroDomain,
    families: &[CutoffFamily],
    certs: &[Option<FamilyCert>],
    cfg: &DiagnosticsConfig,
) -> Result<Analysis> {
    cfg.validate()?;
    if certs.len() != families.len() {
        return Err(Error::Precondition(
            "one certificate slot per family required".into(),
        ));
    }
    for f in families {
        if f.cover.macro_domain != *md {
            return Err(Error::Precondition(
                "family built for a different macro domain".into(),
            ));
        }
    }
    let mac = crate::multiscale::build_macro_cutoff(md, cfg.delta, cfg.r_star(md))?;
    let mut cuts: Vec<&Cutoff> = vec![&mac];
    for f in families {
        cuts.extend(f.elements.iter());
    }
    let out = accumulate(series, md, &cuts, cfg)?;
    let certified: Vec<FamilyCert> = certs.iter().flatten().cloned().collect();
    let constants = if certified.is_empty() {
        EffectiveConstants {
            c0_eff: f64::NAN,
            k1_eff: f64::NAN,
            k2_eff: f64::NAN,
            k1_declared: cfg.k1,
            k2_declared: cfg.k2,
        }
    } else {
        EffectiveConstants::from_certs(&certified)?
    };
    let macro_averages =
        MacroAverages::from_terms(&out[0], series.alpha(), series.kappa(), constants);
    let mut rest = &out[1..];
    let scales = families
        .iter()
        .zip(certs)
        .map(|(f, c)| {
            let (mine, tail) = rest.split_at(f.len());
            rest = tail;
            ScaleAnalysis {
                r: f.r(),
                n: f.len(),
                cert: c.clone(),
                elements: mine.to_vec(),
            }
        })
        .collect();
    Ok(Analysis {
        macro_domain: *md,
        config: cfg.clone(),
        macro_averages,
        scales,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    OutOfRange,
    Uncertified,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "true",
            Verdict::Fail => "false",
            Verdict::OutOfRange => "out_of_range",
            Verdict::Uncertified => "uncertified",
        }
    }
}

/// One row of the cascade table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub r: f64,
    pub n: usize,
    pub flux: f64,
    pub dissipation: f64,
    pub a1: f64,
    pub a2: f64,
    /// `ε0*/(4 K1_eff)`
    pub lower: f64,
    /// `4 K2_eff ε0*`
    pub upper: f64,
    pub k1_eff: f64,
    pub k2_eff: f64,
    pub a1_bound: f64,
    pub a2_bound: f64,
    pub a1_ok: bool,
    pub a2_ok: bool,
    pub interpolation_ok: bool,
    pub theorem_ok: bool,
    /// Elements violating `|X_i| ≤ ½D_i + (C0/R)² Y_i`.
    pub young_violations: usize,
    /// Largest `|F - (D + X - P)| / max(|F|, D)` over elements.
    pub max_relative_residual: f64,
    pub in_range: bool,
    pub pass: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub macro_averages: MacroAverages,
    pub slack: f64,
    pub premise: bool,
    /// `σ0/β_eff`, when defined.
    pub range_floor: Option<f64>,
    pub rows: Vec<ScaleRow>,
}

impl CascadeReport {
    pub const CSV_HEADER: &'static str = "R,n,F_R,D_R,A1,A2,lower,upper,pass";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
                r.r,
                r.n,
                r.flux,
                r.dissipation,
                r.a1,
                r.a2,
                r.lower,
                r.upper,
                r.pass.as_str()
            ));
        }
        s
    }

    pub fn in_range_rows(&self) -> impl Iterator<Item = &ScaleRow> {
        self.rows.iter().filter(|r| r.in_range)
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Evaluates the inequality chain at every scale of an analysis.
pub fn cascade_check(analysis: &Analysis) -> CascadeReport {
    let m = &analysis.macro_averages;
    let slack = analysis.config.slack;
    let (lo, hi) = (1.0 - slack, 1.0 + slack);
    let alpha = m.alpha;
    let c0 = m.constants.c0_eff;
    let r0 = analysis.macro_domain.r0;
    let premise = m.premise(r0);
    let range_floor = m.sigma0.map(|s| s / m.beta_eff);
    let rows = analysis
        .scales
        .iter()
        .map(|sc| {
            let r = sc.r;
            let flux = mean(sc.elements.iter().map(|e| e.terms.f));
            let dissipation = mean(sc.elements.iter().map(|e| e.terms.d));
            let a1 = mean(sc.elements.iter().map(|e| e.terms.p)).abs();
            let young_w = (c0 / r).powi(2);
            let a2 = young_w * mean(sc.elements.iter().map(|e| e.young));
            let k1_eff = sc.n as f64 * (r / r0).powi(2);
            let k2_eff = sc.cert.as_ref().map_or(f64::NAN, |c| c.k2_eff as f64);
            let eps = m.eps0_star;
            let a1_bound = 2.0 * c0 * k2_eff * m.theta0 / r.powf(alpha);
            let a2_bound = c0 * c0 * k2_eff * m.theta0_star / (r * r);
            let a1_ok = a1 <= a1_bound * hi;
            let a2_ok = a2 <= a2_bound * hi;
            let interpolation_ok =
                dissipation >= eps / k1_eff * lo && dissipation <= k2_eff * eps * hi;
            let lower = eps / (4.0 * k1_eff);
            let upper = 4.0 * k2_eff * eps;
            let theorem_ok = flux >= lower * lo && flux <= upper * hi;
            let young_violations = sc
                .elements
                .iter()
                .filter(|e| e.terms.x.abs() > (0.5 * e.terms.d + young_w * e.young) * hi)
                .count();
            let max_relative_residual = sc
                .elements
                .iter()
                .map(|e| e.terms.relative_residual())
                .fold(0.0, f64::max);
            let in_range = premise && matches!(range_floor, Some(f) if r >= f * (1.0 - 1e-12));
            let pass = if sc.cert.is_none() {
                Verdict::Uncertified
            } else if !in_range {
                Verdict::OutOfRange
            } else if a1_ok && a2_ok && interpolation_ok && theorem_ok {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            ScaleRow {
                r,
                n: sc.n,
                flux,
                dissipation,
                a1,
                a2,
                lower,
                upper,
                k1_eff,
                k2_eff,
                a1_bound,
                a2_bound,
                a1_ok,
                a2_ok,
                interpolation_ok,
                theorem_ok,
                young_violations,
                max_relative_residual,
                in_range,
                pass,
            }
        })
        .collect();
    CascadeReport {
        macro_averages: m.clone(),
        slack,
        premise,
        range_floor,
        rows,
    }
}

/// One `(r, R)` comparison of `⟨G⟩ = R²⟨F⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityPair {
    pub r_small: f64,
    pub r_large: f64,
    /// `⟨G⟩_r / ⟨G⟩_R`; `None` when `⟨G⟩_R = 0`.
    pub ratio: Option<f64>,
    pub lower: f64,
    pub upper: f64,
    pub in_range: bool,
    pub within: Option<bool>,
}

/// Envelope `[2^{2k}/(16 K1 K2), 16 K1 K2 2^{2k}]` for `r = 2^k R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicEnvelope {
    pub k: i32,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub k1_eff: f64,
    pub k2_eff: f64,
    pub pairs: Vec<LocalityPair>,
    pub dyadic: Vec<DyadicEnvelope>,
}

impl LocalityReport {
    pub const CSV_HEADER: &'static str = "r,R,ratio,lower,upper,in_range,within";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for p in &self.pairs {
            let ratio = p
                .ratio
                .map_or("undefined".to_string(), |v| format!("{v:e}"));
            let within = p.within.map_or("undefined".to_string(), |v| v.to_string());
            s.push_str(&format!(
                "{:e},{:e},{},{:e},{:e},{},{}\n",
                p.r_small, p.r_large, ratio, p.lower, p.upper, p.in_range, within
            ));
        }
        s
    }
}

/// Ratio bounds for every ordered pair of scales, including `r = R`.
pub fn locality_check(report: &CascadeReport) -> LocalityReport {
    let c = &report.macro_averages.constants;
    let q = 16.0 * c.k1_eff * c.k2_eff;
    let mut pairs = Vec::new();
    for a in &report.rows {
        for b in &report.rows {
            if a.r > b.r {
                continue;
            }
            let g_small = a.r * a.r * a.flux;
            let g_large = b.r * b.r * b.flux;
            let s = (a.r / b.r).powi(2);
            let ratio = (g_large != 0.0).then(|| g_small / g_large);
            let (lower, upper) = (s / q, q * s);
            let slack = report.slack;
            pairs.push(LocalityPair {
                r_small: a.r,
                r_large: b.r,
                ratio,
                lower,
                upper,
                in_range: a.in_range && b.in_range,
                within: ratio.map(|v| v >= lower * (1.0 - slack) && v <= upper * (1.0 + slack)),
            });
        }
    }
    let kmax = report.rows.len() as i32;
    let dyadic = (0..kmax)
        .map(|k| {
            let s = 4f64.powi(k);
            DyadicEnvelope {
                k,
                lower: s / q,
                upper: q * s,
            }
        })
        .collect();
    LocalityReport {
        k1_eff: c.k1_eff,
        k2_eff: c.k2_eff,
        pairs,
        dyadic,
    }
}

/// Dyadic scales `R0/2^j`, `j < depth`, stopping above `8 dx`.
pub fn dyadic_scales(r0: f64, grid: &Grid, depth: usize) -> Vec<f64> {
    (0..depth)
        .map(|j| r0 / 2f64.powi(j as i32))
        .take_while(|&r| r >= SCALE_FLOOR_DX * grid.dx())
        .collect()
}
