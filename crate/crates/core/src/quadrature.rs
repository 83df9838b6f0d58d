//! Quadrature for `∫₀^Z g(z) z^b dz` with `b ∈ (-1, 1)`.
//!
//! The vertical grid is a composite rule: Gauss–Jacobi on the first panel
//! `[0, z₁]` absorbs the endpoint weight, and geometrically growing panels
//! (ratio at most 2) carry Gauss–Legendre nodes whose weights are fitted to
//! the exact moments of `z^b`, so every panel integrates `z^b · p(z)`
//! exactly for polynomials of degree below the panel order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gamma;

/// Nodes and weights on `[-1, 1]` for the weight `(1-x)^a (1+x)^b`.
#[derive(Debug, Clone)]
pub struct GaussJacobi {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussJacobi {
    pub fn new(n: usize, a: f64, b: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("points", "need at least one node"));
        }
        if !(a > -1.0 && b > -1.0) {
            return Err(Error::param(
                "exponent",
                format!("a={a}, b={b} must exceed -1"),
            ));
        }
        // Golub–Welsch: eigen-decomposition of the Jacobi matrix.
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n];
        for i in 0..n {
            let fi = i as f64;
            let s = 2.0 * fi + a + b;
            diag[i] = if i == 0 {
                (b - a) / (2.0 + a + b)
            } else {
                (b * b - a * a) / (s * (s + 2.0))
            };
            if i + 1 < n {
                let j = fi + 1.0;
                let s = 2.0 * j + a + b;
                off[i] = 2.0 / s
                    * (j * (j + a) * (j + b) * (j + a + b) / ((s + 1.0) * (s - 1.0))).sqrt();
            }
        }
        let mut first: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        tridiagonal_ql(&mut diag, &mut off, &mut first)?;
        let mu0 = 2f64.powf(a + b + 1.0) * gamma(a + 1.0) * gamma(b + 1.0) / gamma(a + b + 2.0);
        let mut pairs: Vec<(f64, f64)> = diag
            .into_iter()
            .zip(first)
            .map(|(x, v)| (x, v * v * mu0))
            .collect();
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Ok(Self { nodes, weights })
    }
}

/// Implicit QL on a symmetric tridiagonal matrix. On exit `d` holds the
/// eigenvalues and `row` the first components of the eigenvectors.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], row: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Precondition(
                    "tridiagonal QL did not converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let f = row[i + 1];
                row[i + 1] = s * row[i] + c * f;
                row[i] = c * row[i] - s * f;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn legendre_all(n: usize, t: f64) -> Vec<f64> {
    let mut p = vec![0.0; n.max(2)];
    p[0] = 1.0;
    p[1] = t;
    for l in 1..n.saturating_sub(1) {
        let fl = l as f64;
        p[l + 1] = ((2.0 * fl + 1.0) * t * p[l] - fl * p[l - 1]) / (fl + 1.0);
    }
    p.truncate(n);
    p
}

/// Parameters of the graded vertical grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZGridSpec {
    /// Nodes per panel.
    pub points_per_panel: usize,
    /// First panel end `z₁` times the largest resolved `|ξ|`.
    pub first_panel_ks: f64,
}

impl ZGridSpec {
    /// Default grading for a dissipation exponent `alpha`: the first panel
    /// shrinks where the profile `1 - φ(s) ~ s^α` is least smooth.
    pub fn for_alpha(alpha: f64) -> Self {
        Self {
            points_per_panel: 6,
            first_panel_ks: 0.05_f64.powf(1.0 / alpha.min(1.0)),
        }
    }

    pub fn refined(&self) -> Self {
        Self {
            points_per_panel: self.points_per_panel + 2,
            first_panel_ks: self.first_panel_ks / 4.0,
        }
    }
}

/// Vertical quadrature for `∫₀^Z g(z) z^b dz`, `Z = R* + R0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZGrid {
    pub b: f64,
    pub z_top: f64,
    pub r_star: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ZGrid {
    /// Composite graded rule on `[0, z_top]` whose first panel ends at
    /// `z_first`; every panel has `points` nodes.
    pub fn graded(b: f64, z_top: f64, r_star: f64, z_first: f64, points: usize) -> Result<Self> {
        if !(b > -1.0 && b < 1.0) {
            return Err(Error::param("b", format!("{b} not in (-1, 1)")));
        }
        if !(z_top > 0.0 && z_first > 0.0) || points < 2 {
            return Err(Error::param(
                "zgrid",
                "need z_top > 0, z_first > 0, points >= 2",
            ));
        }
        if !(r_star >= 0.0 && r_star < z_top) {
            return Err(Error::param(
                "r_star",
                format!("{r_star} not in [0, {z_top})"),
            ));
        }
        let z1 = z_first.min(z_top);
        let gj = GaussJacobi::new(points, 0.0, b)?;
        let scale = (0.5 * z1).powf(b + 1.0);
        let mut nodes: Vec<f64> = gj.nodes.iter().map(|x| 0.5 * z1 * (1.0 + x)).collect();
        let mut weights: Vec<f64> = gj.weights.iter().map(|w| w * scale).collect();

        if z1 < z_top {
            let panels = (z_top / z1).log2().ceil().max(1.0) as usize;
            let ratio = (z_top / z1).powf(1.0 / panels as f64);
            let gl = GaussJacobi::new(points, 0.0, 0.0)?;
            let moments_rule = GaussJacobi::new(points + 10, 0.0, b)?;
            let mut lo = z1;
            for p in 0..panels {
                let hi = if p + 1 == panels { z_top } else { lo * ratio };
                let (nw, ww) = fitted_panel(b, lo, hi, &gl, &moments_rule);
                nodes.extend(nw);
                weights.extend(ww);
                lo = hi;
            }
        }
        Ok(Self {
            b,
            z_top,
            r_star,
            nodes,
            weights,
        })
    }

    /// Grid for `α`, vertical extent `z_top = r_star + r0`, and largest
    /// resolved wavenumber `k_max`.
    pub fn for_extension(
        alpha: f64,
        r_star: f64,
        r0: f64,
        k_max: f64,
        spec: &ZGridSpec,
    ) -> Result<Self> {
        let z_top = r_star + r0;
        Self::graded(
            1.0 - alpha,
            z_top,
            r_star,
            (spec.first_panel_ks / k_max).min(0.5 * z_top),
            spec.points_per_panel,
        )
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_j g(z_j)`.
    pub fn integrate(&self, g: &[f64]) -> f64 {
        self.weights.iter().zip(g).map(|(w, v)| w * v).sum()
    }

    pub fn integrate_fn(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * g(z))
            .sum()
    }
}

/// Gauss–Legendre nodes on `[lo, hi]` with weights matching the moments
/// `∫ z^b P_m(t(z)) dz`, `m < n`.
fn fitted_panel(
    b: f64,
    lo: f64,
    hi: f64,
    gl: &GaussJacobi,
    moments_rule: &GaussJacobi,
) -> (Vec<f64>, Vec<f64>) {
    let n = gl.nodes.len();
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let to_t = |z: f64| (z - mid) / half;
    // ∫_0^c z^b p(z) dz with a Gauss–Jacobi rule exact for the polynomial degree.
    let from_zero = |c: f64| -> Vec<f64> {
        let scale = (0.5 * c).powf(b + 1.0);
        let mut acc = vec![0.0; n];
        for (x, w) in moments_rule.nodes.iter().zip(&moments_rule.weights) {
            let z = 0.5 * c * (1.0 + x);
            for (a, p) in acc.iter_mut().zip(legendre_all(n, to_t(z))) {
                *a += w * scale * p;
            }
        }
        acc
    };
    let upper = from_zero(hi);
    let lower = from_zero(lo);
    let moments: Vec<f64> = upper.iter().zip(&lower).map(|(u, l)| u - l).collect();
    let nodes: Vec<f64> = gl.nodes.iter().map(|t| mid + half * t).collect();
    let weights = gl
        .nodes
        .iter()
        .zip(&gl.weights)
        .map(|(&t, &w)| {
            let p = legendre_all(n, t);
            w * (0..n)
                .map(|m| (2.0 * m as f64 + 1.0) * 0.5 * p[m] * moments[m])
                .sum::<f64>()
        })
        .collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_matches_known_rule() {
        let gl = GaussJacobi::new(3, 0.0, 0.0).unwrap();
        let r = (0.6f64).sqrt();
        assert!((gl.nodes[0] + r).abs() < 1e-15);
        assert!((gl.nodes[2] - r).abs() < 1e-15);
        assert!((gl.weights[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_jacobi_integrates_weighted_polynomials() {
        // ∫_{-1}^{1} (1+x)^b x^2 dx against the closed form.
        for &b in &[-0.8, -0.3, 0.0, 0.4, 0.9] {
            let gj = GaussJacobi::new(5, 0.0, b).unwrap();
            let got: f64 = gj
                .nodes
                .iter()
                .zip(&gj.weights)
                .map(|(x, w)| w * x * x)
                .sum();
            // (1+x)^b x^2 with u = 1+x: ∫_0^2 u^b (u-1)^2 du
            let m = |k: f64| 2f64.powf(b + k + 1.0) / (b + k + 1.0);
            let want = m(2.0) - 2.0 * m(1.0) + m(0.0);
            assert!((got - want).abs() < 1e-13 * want.abs().max(1.0), "b={b}");
            assert!(gj.weights.iter().all(|w| *w > 0.0));
        }
    }

    #[test]
    fn zgrid_moments_and_examples() {
        for &b in &[-0.8, -0.5, 0.0, 0.2, 0.6, 0.9] {
            let z = 1.7;
            let g = ZGrid::graded(b, z, 0.8, 1e-5, 6).unwrap();
            let m0 = g.integrate_fn(|_| 1.0);
            let m1 = g.integrate_fn(|x| x);
            assert!((m0 - z.powf(1.0 + b) / (1.0 + b)).abs() < 1e-12, "b={b}");
            assert!((m1 - z.powf(2.0 + b) / (2.0 + b)).abs() < 1e-12, "b={b}");
            assert!(g.weights.iter().all(|w| *w > 0.0), "b={b}");
            assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        }
        let g = ZGrid::graded(0.0, 10.0, 5.0, 1e-3, 8).unwrap();
        let v = g.integrate_fn(|x| (-x).exp());
        assert!((v - (1.0 - (-10f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn geometric_grading_toward_zero() {
        let g = ZGrid::graded(0.3, 2.0, 1.0, 1e-4, 4).unwrap();
        assert!(g.nodes[0] < 1e-4);
        // Panel widths double.
        let first_gl = g.nodes[4];
        assert!(first_gl > 1e-4 && first_gl < 2e-4);
    }
}
