//! Macro domain, ball covers, refined cutoff functions and ensemble averages.
//!
//! Every cutoff is a product of powers of a quintic smoothstep ramp,
//! `ψ = g^m`, with `m = ⌈1/(1-δ)⌉`. The choice of `m` keeps the ratios
//! `|∇ψ|/ψ^δ` and `|∇²ψ|/ψ^{2δ-1}` bounded; certificates measure them by
//! dense sampling of the analytic derivatives.
//!
//! Elements whose halo `B(x_i, 2R)` leaves the macro ball are built through
//! the radial retraction `m_r` onto the closed macro ball:
//! `ψ(x) = g(|m_r(x) - x_i|)^m ψ0(x)`, so that they never exceed `ψ0`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{Extender, ExtensionSlice};
use crate::fields::{Grid, ScalarField};
use crate::solver::SnapshotSeries;

/// Lattice shrink factor: spacing is `R √2 (1 - ε)`.
pub const LATTICE_SHRINK: f64 = 0.12;
/// Largest seeded displacement of a lattice center, in units of `R`.
pub const MAX_JITTER: f64 = 0.05;
/// Cover sampling density used during generation.
pub const GENERATION_SAMPLES_PER_R: usize = 16;
/// Allowed relative change of a certified constant under 2× refinement.
pub const REFINEMENT_TOL: f64 = 0.05;

pub type Point = [f64; 2];

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Quintic smoothstep and its first two derivatives.
fn smoothstep(t: f64) -> [f64; 3] {
    if t <= 0.0 {
        [0.0, 0.0, 0.0]
    } else if t >= 1.0 {
        [1.0, 0.0, 0.0]
    } else {
        let u = 1.0 - t;
        [
            t * t * t * (10.0 - 15.0 * t + 6.0 * t * t),
            30.0 * t * t * u * u,
            60.0 * t * u * (1.0 - 2.0 * t),
        ]
    }
}

/// Ramp equal to 1 on `[0, start]` and 0 beyond `start + width`.
fn ramp(r: f64, start: f64, width: f64) -> [f64; 3] {
    let [s, s1, s2] = smoothstep((r - start) / width);
    [1.0 - s, -s1 / width, -s2 / (width * width)]
}

/// `m = ⌈1/(1-δ)⌉`.
pub fn cutoff_power(delta: f64) -> Result<u32> {
    if !(delta > 0.5 && delta < 1.0) {
        return Err(Error::param("delta", format!("{delta} not in (1/2, 1)")));
    }
    Ok((1.0 / (1.0 - delta) - 1e-12).ceil() as u32)
}

/// The ball `B(x0, R0)` and time window `[0, 2T]` all averages refer to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroDomain {
    pub x0: Point,
    pub r0: f64,
    pub t_unit: f64,
    pub alpha: f64,
}

impl MacroDomain {
    pub fn new(x0: Point, r0: f64, t_unit: f64, alpha: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::param("r0", format!("{r0} must be positive")));
        }
        if !(t_unit > 0.0 && t_unit.is_finite()) {
            return Err(Error::param("t_unit", format!("{t_unit} must be positive")));
        }
        if 2.0 * t_unit < r0.powf(alpha) * (1.0 - 1e-12) {
            return Err(Error::param(
                "t_unit",
                format!(
                    "the averaging window needs 2T >= R0^alpha, got 2T = {} < {}",
                    2.0 * t_unit,
                    r0.powf(alpha)
                ),
            ));
        }
        Ok(Self {
            x0,
            r0,
            t_unit,
            alpha,
        })
    }

    /// Macro ball centred in the box.
    pub fn centered(grid: &Grid, r0: f64, t_unit: f64, alpha: f64) -> Result<Self> {
        let c = 0.5 * grid.length();
        let m = Self::new([c, c], r0, t_unit, alpha)?;
        m.check_grid(grid)?;
        Ok(m)
    }

    /// `B(x0, 2R0)` must sit inside the box with a margin of `R0`.
    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        let l = grid.length();
        for &c in &self.x0 {
            if c - 3.0 * self.r0 < -1e-12 || c + 3.0 * self.r0 > l + 1e-12 {
                return Err(Error::param(
                    "r0",
                    format!(
                        "B(x0, 2R0) with margin R0 does not fit in the box of side {l} (R0 = {})",
                        self.r0
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Radial retraction onto the closed macro ball.
    pub fn retract(&self, x: Point) -> Point {
        let dx = x[0] - self.x0[0];
        let dy = x[1] - self.x0[1];
        let rho = dx.hypot(dy);
        if rho <= self.r0 {
            x
        } else {
            let s = self.r0 / rho;
            [self.x0[0] + s * dx, self.x0[1] + s * dy]
        }
    }

    /// Trajectory must reach `5T/3`, where the temporal cutoff vanishes.
    pub fn check_series(&self, series: &(impl SnapshotSeries + ?Sized)) -> Result<()> {
        let last = *series
            .times()
            .last()
            .ok_or_else(|| Error::Precondition("empty trajectory".into()))?;
        if last < 5.0 * self.t_unit / 3.0 * (1.0 - 1e-12) {
            return Err(Error::Precondition(format!(
                "trajectory ends at t = {last} before the averaging window closes at 5T/3 = {}",
                5.0 * self.t_unit / 3.0
            )));
        }
        Ok(())
    }
}

/// Centers of balls `B(x_i, R)` covering the macro ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub macro_domain: MacroDomain,
    pub r: f64,
    pub centers: Vec<Point>,
    pub k1: f64,
    pub k2: f64,
}

impl Cover {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    fn count_bounds(&self) -> (f64, f64) {
        let q = (self.macro_domain.r0 / self.r).powi(2);
        (q, self.k1 * q)
    }
}

/// Sample points of the closed disk `B̄(c, radius)`: a square lattice with
/// spacing `h` inside the disk plus points on the boundary circle.
fn disk_samples(c: Point, radius: f64, h: f64, closed: bool) -> Vec<Point> {
    let k = (radius / h).ceil() as i64;
    let mut pts = Vec::new();
    for j in -k..=k {
        for i in -k..=k {
            let p = [c[0] + i as f64 * h, c[1] + j as f64 * h];
            if dist(p, c) < radius {
                pts.push(p);
            }
        }
    }
    if closed {
        let m = ((2.0 * std::f64::consts::PI * radius / h).ceil() as usize).max(16);
        for i in 0..m {
            let a = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
            pts.push([c[0] + radius * a.cos(), c[1] + radius * a.sin()]);
        }
    }
    pts
}

/// Lattice cover at scale `R`, pruned to a small subset that still covers
/// the closed macro ball; `seed` adds a jitter of at most `0.05 R`.
pub fn generate_cover(
    macro_domain: &MacroDomain,
    r: f64,
    k1: f64,
    k2: f64,
    seed: Option<u64>,
) -> Result<Cover> {
    let r0 = macro_domain.r0;
    if !(r > 0.0 && r <= r0 * (1.0 + 1e-12)) {
        return Err(Error::param("r", format!("{r} not in (0, R0 = {r0}]")));
    }
    if !(k1 >= 1.0 && k2 >= 1.0) {
        return Err(Error::param("k1, k2", "multiplicity budgets must be >= 1"));
    }
    let x0 = macro_domain.x0;
    let centers = if (r - r0).abs() <= 1e-12 * r0 {
        vec![x0]
    } else {
        let spacing = r * std::f64::consts::SQRT_2 * (1.0 - LATTICE_SHRINK);
        let reach = r0 + r * (1.0 - LATTICE_SHRINK);
        let k = (reach / spacing).ceil() as i64;
        let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
        let mut cand = Vec::new();
        for j in -k..=k {
            for i in -k..=k {
                let p = [x0[0] + i as f64 * spacing, x0[1] + j as f64 * spacing];
                if dist(p, x0) >= reach {
                    continue;
                }
                let p = match rng.as_mut() {
                    Some(rng) => {
                        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                        let v = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                        let rad = MAX_JITTER * r * u.sqrt();
                        let ang = 2.0 * std::f64::consts::PI * v;
                        [p[0] + rad * ang.cos(), p[1] + rad * ang.sin()]
                    }
                    None => p,
                };
                cand.push(p);
            }
        }
        prune(cand, macro_domain, r)
    };
    let cover = Cover {
        macro_domain: *macro_domain,
        r,
        centers,
        k1,
        k2,
    };
    let (lo, hi) = cover.count_bounds();
    let n = cover.len() as f64;
    if n < lo * (1.0 - 1e-12) {
        return Err(Error::InvalidCover(format!(
            "(R0/R)^2 <= n violated: n = {n} < {lo}"
        )));
    }
    if n > hi * (1.0 + 1e-12) {
        return Err(Error::InvalidCover(format!(
            "n <= K1 (R0/R)^2 violated: n = {n} > {hi}"
        )));
    }
    let cert = validate_cover(&cover, GENERATION_SAMPLES_PER_R)?;
    if cert.k2_membership as f64 > k2 {
        return Err(Error::InvalidCover(format!(
            "sampled multiplicity {} exceeds K2 = {k2}",
            cert.k2_membership
        )));
    }
    Ok(cover)
}

/// Drops candidates farthest from `x0` first while every sample of the
/// closed macro ball stays covered by a ball of radius `R - 1.5h`. Every
/// point of the closed ball lies within `1.25h` of a sample, so the margin
/// makes the coverage hold between samples too.
fn prune(cand: Vec<Point>, macro_domain: &MacroDomain, r: f64) -> Vec<Point> {
    let h = r / (2 * GENERATION_SAMPLES_PER_R) as f64;
    let inner = r - 1.5 * h;
    let samples = disk_samples(macro_domain.x0, macro_domain.r0, h, true);
    let members: Vec<Vec<usize>> = cand
        .iter()
        .map(|&c| {
            samples
                .iter()
                .enumerate()
                .filter(|(_, &p)| dist(p, c) < inner)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let mut count = vec![0usize; samples.len()];
    for m in &members {
        for &i in m {
            count[i] += 1;
        }
    }
    let mut order: Vec<usize> = (0..cand.len()).collect();
    let x0 = macro_domain.x0;
    order.sort_by(|&a, &b| {
        dist(cand[b], x0)
            .partial_cmp(&dist(cand[a], x0))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut keep = vec![true; cand.len()];
    for c in order {
        if members[c].iter().all(|&i| count[i] >= 2) {
            keep[c] = false;
            for &i in &members[c] {
                count[i] -= 1;
            }
        }
    }
    cand.into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect()
}

/// Measured cover properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverCert {
    pub n: usize,
    pub r: f64,
    /// `n R² / R0²`
    pub k1_eff: f64,
    /// Largest number of balls `B(x_i, R)` containing a sample of the macro ball.
    pub k2_membership: usize,
    /// Largest number of cutoff supports containing a sample of `B(x0, 2R0)`.
    pub k2_eff: usize,
    /// Every sample in the support of `ψ0` retracts into some `B̄(x_i, R)`,
    /// which makes `Σ ψ_i ≥ ψ0` independently of `δ`.
    pub partition: bool,
    pub samples_per_r: usize,
    pub k1_declared: f64,
    pub k2_declared: f64,
}

/// Checks coverage of the open macro ball and measures multiplicities.
pub fn validate_cover(cover: &Cover, samples_per_r: usize) -> Result<CoverCert> {
    if cover.is_empty() || samples_per_r == 0 {
        return Err(Error::InvalidCover("empty cover or zero sampling".into()));
    }
    let md = &cover.macro_domain;
    let r = cover.r;
    let h = r / samples_per_r as f64;
    let mut k2_membership = 0;
    for p in disk_samples(md.x0, md.r0, h, false) {
        let c = cover.centers.iter().filter(|&&c| dist(p, c) < r).count();
        if c == 0 {
            return Err(Error::InvalidCover(format!(
                "sample point ({:.6}, {:.6}) of the macro ball is not covered",
                p[0], p[1]
            )));
        }
        k2_membership = k2_membership.max(c);
    }
    let mut k2_eff = 0;
    let mut partition = true;
    for p in disk_samples(md.x0, 2.0 * md.r0, h, false) {
        let q = md.retract(p);
        let mut supports = 0;
        let mut plateau = false;
        for &c in &cover.centers {
            let d = match element_kind(md, c, r) {
                CutoffKind::Interior => dist(p, c),
                _ => dist(q, c),
            };
            supports += (d < 2.0 * r) as usize;
            plateau |= d <= r * (1.0 + 1e-12);
        }
        k2_eff = k2_eff.max(supports);
        partition &= plateau;
    }
    Ok(CoverCert {
        n: cover.len(),
        r,
        k1_eff: cover.len() as f64 * (r / md.r0).powi(2),
        k2_membership,
        k2_eff,
        partition,
        samples_per_r,
        k1_declared: cover.k1,
        k2_declared: cover.k2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffKind {
    Interior,
    Boundary,
    Macro,
}

fn element_kind(md: &MacroDomain, c: Point, r: f64) -> CutoffKind {
    if dist(c, md.x0) + 2.0 * r <= md.r0 {
        CutoffKind::Interior
    } else {
        CutoffKind::Boundary
    }
}

/// Value, gradient and Hessian of a scalar factor.
#[derive(Debug, Clone, Copy)]
struct Jet {
    v: f64,
    g: [f64; 2],
    h: [[f64; 2]; 2],
}

impl Jet {
    const ONE: Jet = Jet {
        v: 1.0,
        g: [0.0; 2],
        h: [[0.0; 2]; 2],
    };
}

/// Jet of `g(|x - c|)` for a radial ramp.
fn radial_jet(x: Point, c: Point, start: f64, width: f64) -> Jet {
    let dx = [x[0] - c[0], x[1] - c[1]];
    let d = dx[0].hypot(dx[1]);
    let [v, g1, g2] = ramp(d, start, width);
    if d == 0.0 || g1 == 0.0 && g2 == 0.0 {
        return Jet {
            v,
            g: [0.0; 2],
            h: [[0.0; 2]; 2],
        };
    }
    let e = [dx[0] / d, dx[1] / d];
    let mut h = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let delta = if i == j { 1.0 } else { 0.0 };
            h[i][j] = g2 * e[i] * e[j] + g1 / d * (delta - e[i] * e[j]);
        }
    }
    Jet {
        v,
        g: [g1 * e[0], g1 * e[1]],
        h,
    }
}

/// Jet of `g(|m_r(x) - c|)` outside the macro ball, where the retraction
/// only depends on the polar angle around `x0`.
fn retracted_jet(md: &MacroDomain, x: Point, c: Point, start: f64, width: f64) -> Jet {
    let (xx, yy) = (x[0] - md.x0[0], x[1] - md.x0[1]);
    let rho = xx.hypot(yy);
    let e = [xx / rho, yy / rho];
    let et = [-e[1], e[0]];
    let r0 = md.r0;
    let p = [md.x0[0] + r0 * e[0] - c[0], md.x0[1] + r0 * e[1] - c[1]];
    let d = p[0].hypot(p[1]);
    let [v, g1, g2] = ramp(d, start, width);
    if d == 0.0 || g1 == 0.0 && g2 == 0.0 {
        return Jet {
            v,
            g: [0.0; 2],
            h: [[0.0; 2]; 2],
        };
    }
    let dp = [r0 * et[0], r0 * et[1]];
    let ddp = [-r0 * e[0], -r0 * e[1]];
    let d1 = (p[0] * dp[0] + p[1] * dp[1]) / d;
    let d2 = (dp[0] * dp[0] + dp[1] * dp[1] + p[0] * ddp[0] + p[1] * ddp[1]) / d - d1 * d1 / d;
    let grad_theta = [et[0] / rho, et[1] / rho];
    let r4 = rho.powi(4);
    let hess_theta = [
        [2.0 * xx * yy / r4, (yy * yy - xx * xx) / r4],
        [(yy * yy - xx * xx) / r4, -2.0 * xx * yy / r4],
    ];
    let a = g2 * d1 * d1 + g1 * d2;
    let b = g1 * d1;
    let mut h = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            h[i][j] = a * grad_theta[i] * grad_theta[j] + b * hess_theta[i][j];
        }
    }
    Jet {
        v,
        g: [b * grad_theta[0], b * grad_theta[1]],
        h,
    }
}

/// Cutoff quantities at one point with `ψ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalCutoff {
    pub psi: f64,
    pub grad: [f64; 2],
    /// `ψ^{2δ-1}`
    pub psi_pow: f64,
    /// `|∇ψ| / ψ^δ`
    pub grad_ratio: f64,
    /// `max_ij |∂_i∂_j ψ| / ψ^{2δ-1}`
    pub hess_ratio: f64,
}

/// One refined space-time-vertical cutoff `φ* = η(t) ψ(x) ψ*(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub kind: CutoffKind,
    pub center: Point,
    /// Plateau radius: `R` for cover elements, `R0` for the macro cutoff.
    pub r: f64,
    pub delta: f64,
    pub power: u32,
    pub macro_domain: MacroDomain,
    /// Vertical plateau height `R*`; the vertical ramp has width `R0`.
    pub r_star: f64,
}

impl Cutoff {
    fn m(&self) -> f64 {
        self.power as f64
    }

    fn factors(&self, x: Point) -> (Jet, Jet) {
        let md = &self.macro_domain;
        match self.kind {
            CutoffKind::Interior => (radial_jet(x, self.center, self.r, self.r), Jet::ONE),
            CutoffKind::Macro => (radial_jet(x, md.x0, md.r0, md.r0), Jet::ONE),
            CutoffKind::Boundary => {
                let b = radial_jet(x, md.x0, md.r0, md.r0);
                if dist(x, md.x0) <= md.r0 {
                    (radial_jet(x, self.center, self.r, self.r), b)
                } else {
                    (retracted_jet(md, x, self.center, self.r, self.r), b)
                }
            }
        }
    }

    /// `ψ(x)`.
    pub fn psi(&self, x: Point) -> f64 {
        let (a, b) = self.factors(x);
        (a.v * b.v).powf(self.m())
    }

    /// Value, gradient and ratio quantities; `None` outside the support.
    pub fn local(&self, x: Point) -> Option<LocalCutoff> {
        let (a, b) = self.factors(x);
        if a.v <= 0.0 || b.v <= 0.0 {
            return None;
        }
        let m = self.m();
        let delta = self.delta;
        let psi = (a.v * b.v).powf(m);
        // a^p b^q / (ab)^s without forming tiny intermediate powers
        let w = |p: f64, q: f64, s: f64| a.v.powf(p - s) * b.v.powf(q - s);
        let sg = m * delta;
        let grad_scaled = [
            m * w(m - 1.0, m, sg) * a.g[0] + m * w(m, m - 1.0, sg) * b.g[0],
            m * w(m - 1.0, m, sg) * a.g[1] + m * w(m, m - 1.0, sg) * b.g[1],
        ];
        let grad = [
            m * a.v.powf(m - 1.0) * b.v.powf(m) * a.g[0]
                + m * a.v.powf(m) * b.v.powf(m - 1.0) * b.g[0],
            m * a.v.powf(m - 1.0) * b.v.powf(m) * a.g[1]
                + m * a.v.powf(m) * b.v.powf(m - 1.0) * b.g[1],
        ];
        let sh = m * (2.0 * delta - 1.0);
        let mut hess_ratio = 0.0_f64;
        for i in 0..2 {
            for j in 0..2 {
                let hij = m * w(m - 1.0, m, sh) * a.h[i][j]
                    + m * (m - 1.0) * w(m - 2.0, m, sh) * a.g[i] * a.g[j]
                    + m * m * w(m - 1.0, m - 1.0, sh) * (a.g[i] * b.g[j] + b.g[i] * a.g[j])
                    + m * w(m, m - 1.0, sh) * b.h[i][j]
                    + m * (m - 1.0) * w(m, m - 2.0, sh) * b.g[i] * b.g[j];
                hess_ratio = hess_ratio.max(hij.abs());
            }
        }
        if self.kind != CutoffKind::Boundary {
            // Radial: entries over all orientations peak at max(|A|, |B|, |A-B|/2)
            // with A, B the Hessian eigenvalues; sample points lie on the x-axis.
            let (hx, hy) = {
                let mut t = [0.0; 2];
                for (k, tk) in t.iter_mut().enumerate() {
                    *tk = (m * w(m - 1.0, m, sh) * a.h[k][k]
                        + m * (m - 1.0) * w(m - 2.0, m, sh) * a.g[k] * a.g[k])
                        .abs();
                }
                (t[0], t[1])
            };
            hess_ratio = hess_ratio.max(0.5 * (hx - hy).abs());
        }
        Some(LocalCutoff {
            psi,
            grad,
            psi_pow: psi.powf(2.0 * delta - 1.0),
            grad_ratio: grad_scaled[0].hypot(grad_scaled[1]),
            hess_ratio,
        })
    }

    /// Temporal profile `η(t)` and `η'(t)`.
    pub fn eta(&self, t: f64) -> (f64, f64) {
        let tu = self.macro_domain.t_unit;
        let (h, dh) = temporal_base(t, tu);
        let m = self.m();
        if h <= 0.0 {
            return (0.0, 0.0);
        }
        (h.powf(m), m * h.powf(m - 1.0) * dh)
    }

    /// Vertical profile `ψ*(z)` and `ψ*'(z)`.
    pub fn vertical(&self, z: f64) -> (f64, f64) {
        let [g, g1, _] = ramp(z, self.r_star, self.macro_domain.r0);
        if g <= 0.0 {
            return (0.0, 0.0);
        }
        let m = self.m();
        (g.powf(m), m * g.powf(m - 1.0) * g1)
    }

    /// Top of the vertical support, `R* + R0`.
    pub fn z_top(&self) -> f64 {
        self.r_star + self.macro_domain.r0
    }

    /// Field-grid nodes inside the support with cutoff values.
    pub fn stencil(&self, grid: &Grid) -> Stencil {
        let md = &self.macro_domain;
        let (c, half) = match self.kind {
            CutoffKind::Interior => (self.center, 2.0 * self.r),
            CutoffKind::Macro => (md.x0, 2.0 * md.r0),
            CutoffKind::Boundary => (self.center, md.r0 + 2.0 * self.r),
        };
        let dx = grid.dx();
        let n = grid.n() as i64;
        let lo = |v: f64, m: f64| (((v - half).max(m - 2.0 * md.r0)) / dx).floor().max(0.0) as i64;
        let hi = |v: f64, m: f64| {
            (((v + half).min(m + 2.0 * md.r0)) / dx)
                .ceil()
                .min((n - 1) as f64) as i64
        };
        let mut st = Stencil::default();
        for j in lo(c[1], md.x0[1])..=hi(c[1], md.x0[1]) {
            for i in lo(c[0], md.x0[0])..=hi(c[0], md.x0[0]) {
                let x = [i as f64 * dx, j as f64 * dx];
                if let Some(l) = self.local(x) {
                    st.idx.push((j * n + i) as usize);
                    st.psi.push(l.psi);
                    st.grad.push(l.grad);
                    st.psi_pow.push(l.psi_pow);
                }
            }
        }
        st
    }
}

/// Base temporal ramp `h` (before the power) and `h'`.
fn temporal_base(t: f64, tu: f64) -> (f64, f64) {
    let w = tu / 3.0;
    if t <= tu {
        let [s, s1, _] = smoothstep((t - w) / w);
        (s, s1 / w)
    } else {
        let [s, s1, _] = smoothstep((t - 4.0 * w) / w);
        (1.0 - s, -s1 / w)
    }
}

/// Cutoff support on the field grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stencil {
    pub idx: Vec<usize>,
    pub psi: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub psi_pow: Vec<f64>,
}

impl Stencil {
    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    /// `Σ ψ f dx²`.
    pub fn integrate(&self, f: &[f64], cell_area: f64) -> f64 {
        self.idx
            .iter()
            .zip(&self.psi)
            .map(|(&i, &p)| p * f[i])
            .sum::<f64>()
            * cell_area
    }
}

/// Cutoff for a cover element; the kind follows from where its halo lies.
pub fn build_cutoff(
    macro_domain: &MacroDomain,
    center: Point,
    r: f64,
    delta: f64,
    r_star: f64,
) -> Result<Cutoff> {
    let power = cutoff_power(delta)?;
    build_cutoff_with_power(macro_domain, center, r, delta, power, r_star)
}

/// As [`build_cutoff`] with an explicit power `m`.
pub fn build_cutoff_with_power(
    macro_domain: &MacroDomain,
    center: Point,
    r: f64,
    delta: f64,
    power: u32,
    r_star: f64,
) -> Result<Cutoff> {
    cutoff_power(delta)?;
    if !(r > 0.0 && r <= macro_domain.r0 * (1.0 + 1e-12)) {
        return Err(Error::param("r", format!("{r} not in (0, R0]")));
    }
    if !(r_star > 0.0) {
        return Err(Error::param("r_star", format!("{r_star} must be positive")));
    }
    if power == 0 {
        return Err(Error::param("power", "must be >= 1"));
    }
    Ok(Cutoff {
        kind: element_kind(macro_domain, center, r),
        center,
        r,
        delta,
        power,
        macro_domain: *macro_domain,
        r_star,
    })
}

/// The macro cutoff `φ0`.
pub fn build_macro_cutoff(macro_domain: &MacroDomain, delta: f64, r_star: f64) -> Result<Cutoff> {
    let mut c = build_cutoff(
        macro_domain,
        macro_domain.x0,
        macro_domain.r0,
        delta,
        r_star,
    )?;
    c.kind = CutoffKind::Macro;
    Ok(c)
}

/// Measured ratio constants of one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffCert {
    pub kind: CutoffKind,
    pub r: f64,
    /// `sup T |η'| / η^{2δ-1}`
    pub c0_time: f64,
    /// `sup R |∇_x φ*| / φ*^δ` with the vertical ramp measured in units of `R`.
    pub c0_grad: f64,
    /// Horizontal part `sup R |∇ψ| / ψ^δ`.
    pub c0_grad_horizontal: f64,
    /// Vertical part `sup R0 |ψ*'| / ψ*^δ`.
    pub c0_grad_vertical: f64,
    /// `sup R² max_ij |∂_i∂_j ψ| / ψ^{2δ-1}`
    pub c0_hess: f64,
    pub c0_eff: f64,
    /// Spatial sample spacing of the finer of the two passes.
    pub spacing: f64,
}

fn sup_time(cut: &Cutoff, samples: usize) -> f64 {
    let tu = cut.macro_domain.t_unit;
    let w = tu / 3.0;
    let m = cut.m();
    let e = 2.0 * m * (1.0 - cut.delta) - 1.0;
    let mut best = 0.0_f64;
    for k in 0..samples {
        let s = (k as f64 + 0.5) / samples as f64;
        for t in [w + s * w, 4.0 * w + s * w] {
            let (h, dh) = temporal_base(t, tu);
            if h > 0.0 {
                best = best.max(tu * m * dh.abs() * h.powf(e));
            }
        }
    }
    best
}

fn sup_vertical(cut: &Cutoff, h: f64) -> f64 {
    let r0 = cut.macro_domain.r0;
    let m = cut.m();
    let e = m * (1.0 - cut.delta) - 1.0;
    let k = (r0 / h).ceil() as usize;
    (0..k)
        .map(|i| {
            let z = cut.r_star + (i as f64 + 0.5) * r0 / k as f64;
            let [g, g1, _] = ramp(z, cut.r_star, r0);
            if g > 0.0 {
                r0 * m * g1.abs() * g.powf(e)
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

fn sup_space(cut: &Cutoff, h: f64) -> (f64, f64) {
    let md = &cut.macro_domain;
    let mut best = (0.0_f64, 0.0_f64);
    let mut visit = |x: Point| {
        if let Some(l) = cut.local(x) {
            best.0 = best.0.max(l.grad_ratio);
            best.1 = best.1.max(l.hess_ratio);
        }
    };
    match cut.kind {
        CutoffKind::Interior | CutoffKind::Macro => {
            let (c, r) = if cut.kind == CutoffKind::Macro {
                (md.x0, md.r0)
            } else {
                (cut.center, cut.r)
            };
            let k = 64 * (r / h).ceil() as usize;
            for i in 0..k {
                visit([c[0] + r + (i as f64 + 0.5) * r / k as f64, c[1]]);
            }
        }
        CutoffKind::Boundary => {
            let half = md.r0 + 2.0 * cut.r;
            let k = (half / h).ceil() as i64;
            for j in -k..=k {
                for i in -k..=k {
                    let x = [cut.center[0] + i as f64 * h, cut.center[1] + j as f64 * h];
                    if dist(x, md.x0) < 2.0 * md.r0 {
                        visit(x);
                    }
                }
            }
        }
    }
    let r = cut.r;
    (r * best.0, r * r * best.1)
}

fn measure(cut: &Cutoff, h: f64, time_samples: usize) -> CutoffCert {
    let c0_time = sup_time(cut, time_samples);
    let (gx, c0_hess) = sup_space(cut, h);
    let gv = sup_vertical(cut, h);
    let c0_grad = gx.hypot(cut.r / cut.macro_domain.r0 * gv);
    CutoffCert {
        kind: cut.kind,
        r: cut.r,
        c0_time,
        c0_grad,
        c0_grad_horizontal: gx,
        c0_grad_vertical: gv,
        c0_hess,
        c0_eff: c0_time.max(c0_grad).max(c0_hess),
        spacing: h,
    }
}

/// Measures the ratio constants at spacing `h` and `h/2`; a change of more
/// than 5% in any of them means the ratio is unbounded.
pub fn certify_cutoff(cut: &Cutoff, h: f64) -> Result<CutoffCert> {
    if !(h > 0.0) {
        return Err(Error::param("h", "sample spacing must be positive"));
    }
    let coarse = measure(cut, 2.0 * h, 2048);
    let fine = measure(cut, h, 4096);
    let pairs = [
        ("time", coarse.c0_time, fine.c0_time),
        ("gradient", coarse.c0_grad, fine.c0_grad),
        ("hessian", coarse.c0_hess, fine.c0_hess),
    ];
    for (name, a, b) in pairs {
        if !b.is_finite() || (b - a).abs() > REFINEMENT_TOL * b.abs() {
            return Err(Error::Certification(format!(
                "{name} ratio of the {:?} cutoff at R = {} is not stable under refinement ({a:.6e} -> {b:.6e}); m = {} is too small for delta = {}",
                cut.kind, cut.r, cut.power, cut.delta
            )));
        }
    }
    Ok(fine)
}

/// Cutoffs for every element of a cover plus the macro cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffFamily {
    pub cover: Cover,
    pub macro_cutoff: Cutoff,
    pub elements: Vec<Cutoff>,
}

impl CutoffFamily {
    pub fn new(cover: &Cover, delta: f64, r_star: f64) -> Result<Self> {
        let md = &cover.macro_domain;
        let elements = cover
            .centers
            .iter()
            .map(|&c| build_cutoff(md, c, cover.r, delta, r_star))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cover: cover.clone(),
            macro_cutoff: build_macro_cutoff(md, delta, r_star)?,
            elements,
        })
    }

    pub fn r(&self) -> f64 {
        self.cover.r
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Certificates for a whole family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCert {
    pub cover: CoverCert,
    pub macro_cutoff: CutoffCert,
    pub interior: Option<CutoffCert>,
    /// Worst boundary-adapted element.
    pub boundary: Option<CutoffCert>,
    /// Worst constant over all kinds.
    pub c0_eff: f64,
    /// `Σ ψ_i ≥ ψ0` on the sampled nodes.
    pub partition: bool,
    /// `Σ ψ_i^{2δ-1} ≤ K2_eff ψ0^{2δ-1}` on the sampled nodes.
    pub domination: bool,
    /// `ψ_i ≤ ψ0` for every element.
    pub below_macro: bool,
    /// Support multiplicity, maximum of the cover census and the node census.
    pub k2_eff: usize,
}

fn worse(a: Option<CutoffCert>, b: CutoffCert) -> Option<CutoffCert> {
    match a {
        Some(a) if a.c0_eff >= b.c0_eff => Some(a),
        _ => Some(b),
    }
}

/// Certifies every member at a spacing 4× finer than the field grid and
/// checks the pointwise family relations on a 2× refined node set.
pub fn certify_family(family: &CutoffFamily, grid: &Grid) -> Result<FamilyCert> {
    let md = &family.cover.macro_domain;
    md.check_grid(grid)?;
    let h = grid.dx() / 4.0;
    let cover = validate_cover(&family.cover, GENERATION_SAMPLES_PER_R)?;
    let macro_cert = certify_cutoff(&family.macro_cutoff, h)?;
    let mut interior = None;
    let mut boundary = None;
    for e in &family.elements {
        match e.kind {
            CutoffKind::Interior => {
                if interior.is_none() {
                    interior = Some(certify_cutoff(e, h)?);
                }
            }
            _ => boundary = worse(boundary, certify_cutoff(e, h)?),
        }
    }
    let c0_eff = [Some(&macro_cert), interior.as_ref(), boundary.as_ref()]
        .into_iter()
        .flatten()
        .map(|c| c.c0_eff)
        .fold(0.0, f64::max);

    let hs = 0.5 * grid.dx();
    let k = (2.0 * md.r0 / hs).ceil() as i64;
    let side = (2 * k + 1) as usize;
    let mut sum = vec![0.0; side * side];
    let mut sum_pow = vec![0.0; side * side];
    let mut count = vec![0usize; side * side];
    let mut below_macro = true;
    let node = |i: i64, j: i64| [md.x0[0] + i as f64 * hs, md.x0[1] + j as f64 * hs];
    for e in &family.elements {
        let reach = match e.kind {
            CutoffKind::Interior => 2.0 * e.r,
            _ => md.r0 + 2.0 * e.r,
        };
        let ci = ((e.center[0] - md.x0[0]) / hs).round() as i64;
        let cj = ((e.center[1] - md.x0[1]) / hs).round() as i64;
        let w = (reach / hs).ceil() as i64 + 1;
        for j in (cj - w).max(-k)..=(cj + w).min(k) {
            for i in (ci - w).max(-k)..=(ci + w).min(k) {
                let x = node(i, j);
                if let Some(l) = e.local(x) {
                    let s = ((j + k) as usize) * side + (i + k) as usize;
                    sum[s] += l.psi;
                    sum_pow[s] += l.psi_pow;
                    count[s] += 1;
                    if l.psi > family.macro_cutoff.psi(x) * (1.0 + 1e-12) {
                        below_macro = false;
                    }
                }
            }
        }
    }
    let k2_eff = cover.k2_eff.max(count.iter().copied().max().unwrap_or(0));
    let mut partition = true;
    let mut domination = true;
    for j in -k..=k {
        for i in -k..=k {
            let x = node(i, j);
            let s = ((j + k) as usize) * side + (i + k) as usize;
            let Some(l0) = family.macro_cutoff.local(x) else {
                continue;
            };
            partition &= sum[s] >= l0.psi * (1.0 - 1e-12);
            domination &= sum_pow[s] <= k2_eff as f64 * l0.psi_pow * (1.0 + 1e-12);
        }
    }
    Ok(FamilyCert {
        cover,
        macro_cutoff: macro_cert,
        interior,
        boundary,
        c0_eff,
        partition,
        domination,
        below_macro,
        k2_eff,
    })
}

/// Trapezoid weights for a sorted list of times.
pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = 0.5 * (times[i] - times[i - 1]);
        w[i - 1] += h;
        w[i] += h;
    }
    w
}

/// `⟨G⟩_R = (1/n) Σ_i (1/(T R²)) ∫∫ g φ_i dx dt`, trapezoidal in time.
/// `density(k, θ_k)` returns `g` on the grid at snapshot `k`.
pub fn ensemble_average<S, F>(series: &S, family: &CutoffFamily, mut density: F) -> Result<f64>
where
    S: SnapshotSeries + ?Sized,
    F: FnMut(usize, &ScalarField) -> Result<Vec<f64>>,
{
    let grid = series.grid();
    let md = &family.cover.macro_domain;
    md.check_grid(&grid)?;
    md.check_series(series)?;
    let stencils: Vec<Stencil> = family.elements.iter().map(|e| e.stencil(&grid)).collect();
    let weights = trapezoid_weights(series.times());
    let mut acc = vec![0.0; stencils.len()];
    for (k, (&t, &w)) in series.times().iter().zip(&weights).enumerate() {
        let (eta, _) = family.macro_cutoff.eta(t);
        if eta == 0.0 || w == 0.0 {
            continue;
        }
        let theta = series.snapshot(k)?;
        let g = density(k, &theta)?;
        if g.len() != grid.len() {
            return Err(Error::GridMismatch("density has the wrong length".into()));
        }
        for (a, st) in acc.iter_mut().zip(&stencils) {
            *a += w * eta * st.integrate(&g, grid.cell_area());
        }
    }
    Ok(normalize_mean(&acc, md.t_unit, family.r()))
}

fn normalize_mean(acc: &[f64], t_unit: f64, r: f64) -> f64 {
    acc.iter().sum::<f64>() / (acc.len() as f64 * t_unit * r * r)
}

/// Starred ensemble average with the vertical cutoff and no normalization
/// in `z`: `density(k, z, θ_k, slice)` returns `g*(·, z)` which is
/// integrated against `z^b dz` on the extender's vertical grid.
pub fn ensemble_average_starred<S, F>(
    series: &S,
    family: &CutoffFamily,
    extender: &Extender,
    mut density: F,
) -> Result<f64>
where
    S: SnapshotSeries + ?Sized,
    F: FnMut(usize, f64, &ScalarField, &ExtensionSlice) -> Result<Vec<f64>>,
{
    let grid = series.grid();
    let md = &family.cover.macro_domain;
    md.check_grid(&grid)?;
    md.check_series(series)?;
    let zgrid = &extender.cfg.zgrid;
    if zgrid.z_top < family.macro_cutoff.z_top() * (1.0 - 1e-12) {
        return Err(Error::Precondition(
            "vertical grid ends below the vertical cutoff support".into(),
        ));
    }
    let stencils: Vec<Stencil> = family.elements.iter().map(|e| e.stencil(&grid)).collect();
    let weights = trapezoid_weights(series.times());
    let mut acc = vec![0.0; stencils.len()];
    for (k, (&t, &w)) in series.times().iter().zip(&weights).enumerate() {
        let (eta, _) = family.macro_cutoff.eta(t);
        if eta == 0.0 || w == 0.0 {
            continue;
        }
        let theta = series.snapshot(k)?;
        let mut spec = extender.fft().forward(&theta);
        spec.dealias();
        for (node, (&z, &wz)) in zgrid.nodes.iter().zip(&zgrid.weights).enumerate() {
            let (vz, _) = family.macro_cutoff.vertical(z);
            if vz == 0.0 {
                continue;
            }
            let slice = extender.slice(&spec, node);
            let g = density(k, z, &theta, &slice)?;
            for (a, st) in acc.iter_mut().zip(&stencils) {
                *a += w * eta * wz * vz * st.integrate(&g, grid.cell_area());
            }
        }
    }
    Ok(normalize_mean(&acc, md.t_unit, family.r()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn setup() -> (Grid, MacroDomain) {
        let grid = Grid::new(128, 2.0 * PI).unwrap();
        let r0 = grid.length() / 8.0;
        let md = MacroDomain::centered(&grid, r0, 0.5, 1.0).unwrap();
        (grid, md)
    }

    #[test]
    fn smoothstep_shape() {
        assert_eq!(smoothstep(0.0), [0.0, 0.0, 0.0]);
        assert_eq!(smoothstep(1.0), [1.0, 0.0, 0.0]);
        let [s, s1, s2] = smoothstep(0.5);
        assert!((s - 0.5).abs() < 1e-15 && (s1 - 1.875).abs() < 1e-14 && s2.abs() < 1e-14);
        let h = 1e-6;
        for &t in &[0.1, 0.37, 0.8] {
            let d = (smoothstep(t + h)[0] - smoothstep(t - h)[0]) / (2.0 * h);
            assert!((d - smoothstep(t)[1]).abs() < 1e-8);
        }
        assert_eq!(cutoff_power(0.75).unwrap(), 4);
        assert_eq!(cutoff_power(0.8).unwrap(), 5);
        assert!(cutoff_power(0.5).is_err());
    }

    #[test]
    fn macro_domain_constraints() {
        let grid = Grid::new(64, 8.0).unwrap();
        assert!(MacroDomain::centered(&grid, 1.0, 0.5, 1.0).is_ok());
        assert!(MacroDomain::new([4.0, 4.0], 1.0, 0.49, 1.0).is_err());
        assert!(MacroDomain::centered(&grid, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn single_ball_cover() {
        let (_, md) = setup();
        let c = generate_cover(&md, md.r0, 8.0, 8.0, None).unwrap();
        assert_eq!(c.centers, vec![md.x0]);
        let cert = validate_cover(&c, 16).unwrap();
        assert_eq!(cert.n, 1);
        assert_eq!(cert.k1_eff, 1.0);
        assert_eq!(cert.k2_membership, 1);
        assert_eq!(cert.k2_eff, 1);
        assert!(cert.partition);
    }

    #[test]
    fn lattice_covers_satisfy_counts() {
        let (_, md) = setup();
        for (j, seed) in [(1, None), (2, Some(3)), (3, Some(9))] {
            let r = md.r0 / 2f64.powi(j);
            let c = generate_cover(&md, r, 8.0, 8.0, seed).unwrap();
            let q = (md.r0 / r).powi(2);
            let n = c.len() as f64;
            assert!(q <= n && n <= 8.0 * q, "R = R0/{}: n = {n}", 1 << j);
            let cert = validate_cover(&c, 16).unwrap();
            assert!(cert.k2_membership <= 8);
            assert!(cert.partition);
            assert!(cert.k1_eff <= 8.0);
        }
    }

    #[test]
    fn deleted_center_is_detected() {
        let (_, md) = setup();
        let mut c = generate_cover(&md, md.r0 / 4.0, 8.0, 8.0, None).unwrap();
        let nearest = (0..c.len())
            .min_by(|&a, &b| {
                dist(c.centers[a], md.x0)
                    .partial_cmp(&dist(c.centers[b], md.x0))
                    .unwrap()
            })
            .unwrap();
        c.centers.remove(nearest);
        let err = validate_cover(&c, 16).unwrap_err();
        assert!(
            matches!(err, Error::InvalidCover(ref s) if s.contains("not covered")),
            "{err}"
        );
    }

    #[test]
    fn cutoff_plateaus_and_supports() {
        let (_, md) = setup();
        let cut = build_cutoff(&md, md.x0, md.r0 / 4.0, 0.75, md.r0).unwrap();
        assert_eq!(cut.kind, CutoffKind::Interior);
        assert_eq!(cut.psi(md.x0), 1.0);
        assert_eq!(cut.psi([md.x0[0] + 0.5 * md.r0, md.x0[1]]), 0.0);
        let tu = md.t_unit;
        assert_eq!(cut.eta(tu).0, 1.0);
        assert_eq!(cut.eta(tu / 4.0).0, 0.0);
        assert_eq!(cut.eta(1.8 * tu).0, 0.0);
        assert_eq!(cut.vertical(0.5 * md.r0).0, 1.0);
        assert_eq!(cut.vertical(2.0 * md.r0).0, 0.0);
        // inwardly oriented gradient
        for i in 0..200 {
            let a = i as f64 * 0.1;
            let rr = md.r0 / 4.0 * (1.0 + i as f64 / 200.0);
            let x = [md.x0[0] + rr * a.cos(), md.x0[1] + rr * a.sin()];
            let l = cut.local(x).unwrap();
            assert!(l.grad[0] * a.cos() + l.grad[1] * a.sin() <= 0.0);
        }
    }

    #[test]
    fn boundary_cutoff_follows_macro_on_rays() {
        let (_, md) = setup();
        let r = md.r0 / 2.0;
        let c = [md.x0[0] + 0.75 * md.r0, md.x0[1]];
        let cut = build_cutoff(&md, c, r, 0.75, md.r0).unwrap();
        assert_eq!(cut.kind, CutoffKind::Boundary);
        let mac = build_macro_cutoff(&md, 0.75, md.r0).unwrap();
        for i in 0..50 {
            // annulus points whose retraction lies in B(c, R)
            let a = -0.3 + 0.6 * i as f64 / 49.0;
            let rho = md.r0 * (1.05 + 0.9 * i as f64 / 49.0);
            let x = [md.x0[0] + rho * a.cos(), md.x0[1] + rho * a.sin()];
            if dist(md.retract(x), c) < r {
                assert!((cut.psi(x) - mac.psi(x)).abs() < 1e-15);
            }
            assert!(cut.psi(x) <= mac.psi(x));
        }
        // single ball at R = R0 reproduces the macro cutoff
        let one = build_cutoff(&md, md.x0, md.r0, 0.75, md.r0).unwrap();
        for i in 0..100 {
            let x = [md.x0[0] + 0.021 * i as f64, md.x0[1] + 0.013 * i as f64];
            assert_eq!(one.psi(x), mac.psi(x));
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let (_, md) = setup();
        let cuts = [
            build_cutoff(
                &md,
                [md.x0[0] + 0.1, md.x0[1] - 0.05],
                md.r0 / 4.0,
                0.75,
                md.r0,
            )
            .unwrap(),
            build_cutoff(
                &md,
                [md.x0[0] + 0.6 * md.r0, md.x0[1] + 0.3 * md.r0],
                md.r0 / 2.0,
                0.75,
                md.r0,
            )
            .unwrap(),
        ];
        let h = 1e-6;
        for cut in &cuts {
            for i in 0..400 {
                let a = i as f64 * 0.7;
                let rr = 0.02 + (i as f64 / 400.0) * 1.9 * md.r0;
                let x = [cut.center[0] + rr * a.cos(), cut.center[1] + rr * a.sin()];
                if (dist(x, md.x0) - md.r0).abs() < 1e-4 {
                    continue;
                }
                let Some(l) = cut.local(x) else { continue };
                let gx = (cut.psi([x[0] + h, x[1]]) - cut.psi([x[0] - h, x[1]])) / (2.0 * h);
                let gy = (cut.psi([x[0], x[1] + h]) - cut.psi([x[0], x[1] - h])) / (2.0 * h);
                assert!((gx - l.grad[0]).abs() < 1e-6 && (gy - l.grad[1]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn certificates_are_finite_and_stable() {
        let (grid, md) = setup();
        let h = grid.dx() / 4.0;
        let cut = build_cutoff(&md, md.x0, md.r0 / 4.0, 0.75, md.r0).unwrap();
        let cert = certify_cutoff(&cut, h).unwrap();
        // 4 R |g'| peaks at 4 · 15/8
        assert!((cert.c0_grad_horizontal - 7.5).abs() < 1e-3, "{cert:?}");
        assert!(cert.c0_eff.is_finite() && cert.c0_eff > 0.0);
        let b = build_cutoff(
            &md,
            [md.x0[0] + 0.7 * md.r0, md.x0[1]],
            md.r0 / 2.0,
            0.75,
            md.r0,
        )
        .unwrap();
        assert!(certify_cutoff(&b, h).unwrap().c0_eff.is_finite());
    }

    #[test]
    fn too_small_power_fails_certification() {
        let (grid, md) = setup();
        let cut = build_cutoff_with_power(&md, md.x0, md.r0 / 4.0, 0.95, 4, md.r0).unwrap();
        let err = certify_cutoff(&cut, grid.dx() / 4.0).unwrap_err();
        assert!(matches!(err, Error::Certification(_)), "{err}");
    }

    #[test]
    fn family_relations_hold() {
        let (grid, md) = setup();
        let cover = generate_cover(&md, md.r0 / 2.0, 8.0, 8.0, Some(1)).unwrap();
        let fam = CutoffFamily::new(&cover, 0.75, md.r0).unwrap();
        let cert = certify_family(&fam, &grid).unwrap();
        assert!(
            cert.partition && cert.domination && cert.below_macro,
            "{cert:?}"
        );
        assert!(cert.k2_eff >= cert.cover.k2_membership);
    }

    #[test]
    fn trapezoid_weights_sum_to_span() {
        let w = trapezoid_weights(&[0.0, 0.1, 0.3, 0.35]);
        assert!((w.iter().sum::<f64>() - 0.35).abs() < 1e-15);
        assert_eq!(trapezoid_weights(&[1.0]), vec![0.0]);
    }
}
