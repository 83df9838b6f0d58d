//! JSON, CSV and SVG emission. Output is a pure function of its input so
//! repeated runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::{CascadeReport, LocalityReport, Verdict};
use crate::error::{Error, Result};
use crate::solver::BudgetPoint;

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 78.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;
const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// One curve of a plot; points with non-positive `y` are drawn as hollow
/// markers on the lower axis on logarithmic plots.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

/// A shaded band between two curves sharing abscissae.
#[derive(Debug, Clone)]
pub struct Band {
    pub name: String,
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    from: f64,
    to: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool, from: f64, to: f64) -> Self {
        let vals: Vec<f64> = values
            .filter(|v| v.is_finite() && (!log || *v > 0.0))
            .map(|v| if log { v.log10() } else { v })
            .collect();
        let (mut lo, mut hi) = vals
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        let (lo, hi) = if log {
            ((lo - pad).floor(), (hi + pad).ceil())
        } else {
            (lo - pad, hi + pad)
        };
        Self {
            lo,
            hi,
            log,
            from,
            to,
        }
    }

    fn map(&self, v: f64) -> Option<f64> {
        let t = if self.log {
            if v <= 0.0 || !v.is_finite() {
                return None;
            }
            v.log10()
        } else {
            v
        };
        Some(self.from + (t - self.lo) / (self.hi - self.lo) * (self.to - self.from))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo as i32, self.hi as i32);
            let step = ((b - a) / 8).max(1);
            (a..=b)
                .step_by(step as usize)
                .map(|e| (10f64.powi(e), format!("1e{e}")))
                .collect()
        } else {
            (0..=5)
                .map(|i| {
                    let v = self.lo + (self.hi - self.lo) * i as f64 / 5.0;
                    (v, format!("{v:.3}"))
                })
                .collect()
        }
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl Plot {
    pub fn to_svg(&self) -> String {
        let xs = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .chain(self.bands.iter().flat_map(|b| b.points.iter().map(|p| p.0)));
        let ys = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .chain(
                self.bands
                    .iter()
                    .flat_map(|b| b.points.iter().flat_map(|p| [p.1, p.2])),
            );
        let x = Axis::new(xs, self.log_x, MARGIN_L, WIDTH - MARGIN_R);
        let y = Axis::new(ys, self.log_y, HEIGHT - MARGIN_B, MARGIN_T);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            esc(&self.title)
        );
        let (x0, x1, y0, y1) = (MARGIN_L, WIDTH - MARGIN_R, HEIGHT - MARGIN_B, MARGIN_T);
        for (v, label) in x.ticks() {
            if let Some(px) = x.map(v) {
                let _ = writeln!(
                    out,
                    r##"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{y1:.1}" stroke="#eee"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{label}</text>"##,
                    y0 + 16.0
                );
            }
        }
        for (v, label) in y.ticks() {
            if let Some(py) = y.map(v) {
                let _ = writeln!(
                    out,
                    r##"<line x1="{x0:.1}" y1="{py:.1}" x2="{x1:.1}" y2="{py:.1}" stroke="#eee"/><text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"##,
                    x0 - 6.0,
                    py + 4.0
                );
            }
        }
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
            x1 - x0,
            y0 - y1
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            esc(&self.y_label)
        );
        let mut legend_y = MARGIN_T + 10.0;
        for band in &self.bands {
            let upper: Vec<(f64, f64)> = band
                .points
                .iter()
                .filter_map(|&(px, _, hi)| Some((x.map(px)?, y.map(hi)?)))
                .collect();
            let lower: Vec<(f64, f64)> = band
                .points
                .iter()
                .rev()
                .filter_map(|&(px, lo, _)| Some((x.map(px)?, y.map(lo)?)))
                .collect();
            if upper.len() >= 2 && lower.len() >= 2 {
                let pts: Vec<String> = upper
                    .iter()
                    .chain(&lower)
                    .map(|(a, b)| format!("{a:.1},{b:.1}"))
                    .collect();
                let _ = writeln!(
                    out,
                    r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.45" stroke="none"/>"##,
                    pts.join(" ")
                );
            }
            let _ = writeln!(
                out,
                r##"<rect x="{:.1}" y="{:.1}" width="14" height="10" fill="#9ecae1"/><text x="{:.1}" y="{:.1}">{}</text>"##,
                x1 + 10.0,
                legend_y - 9.0,
                x1 + 28.0,
                legend_y,
                esc(&band.name)
            );
            legend_y += 18.0;
        }
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let mapped: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter_map(|&(px, py)| Some((x.map(px)?, y.map(py)?)))
                .collect();
            if mapped.len() >= 2 {
                let pts: Vec<String> = mapped
                    .iter()
                    .map(|(a, b)| format!("{a:.1},{b:.1}"))
                    .collect();
                let dash = if s.dashed {
                    r#" stroke-dasharray="5,4""#
                } else {
                    ""
                };
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
                    pts.join(" ")
                );
            }
            for &(px, py) in &s.points {
                let Some(cx) = x.map(px) else { continue };
                match y.map(py) {
                    Some(cy) => {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="3.5" fill="{color}"/>"#
                        );
                    }
                    None if py.is_finite() => {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{cx:.1}" cy="{:.1}" r="4" fill="none" stroke="{color}"/>"#,
                            y0 - 6.0
                        );
                    }
                    None => {}
                }
            }
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                x1 + 10.0,
                legend_y - 4.0,
                x1 + 24.0,
                legend_y - 4.0,
                x1 + 28.0,
                legend_y,
                esc(&s.name)
            );
            legend_y += 18.0;
        }
        out.push_str("</svg>\n");
        out
    }
}

/// `⟨F⟩_R` and `D̄_R` against `R` with the theorem band shaded.
pub fn cascade_plot(report: &CascadeReport) -> Plot {
    let rows = &report.rows;
    let eps = report.macro_averages.eps0_star;
    let mut series = vec![
        Series {
            name: "<F>_R".into(),
            points: rows.iter().map(|r| (r.r, r.flux)).collect(),
            dashed: false,
        },
        Series {
            name: "mean D_R".into(),
            points: rows.iter().map(|r| (r.r, r.dissipation)).collect(),
            dashed: true,
        },
    ];
    if eps > 0.0 {
        series.push(Series {
            name: "eps0*".into(),
            points: rows.iter().map(|r| (r.r, eps)).collect(),
            dashed: true,
        });
    }
    Plot {
        title: "Ensemble flux by scale".into(),
        x_label: "R".into(),
        y_label: "flux (hollow: <= 0)".into(),
        log_x: true,
        log_y: true,
        series,
        bands: vec![Band {
            name: "[eps0*/4K1, 4K2 eps0*]".into(),
            points: rows.iter().map(|r| (r.r, r.lower, r.upper)).collect(),
        }],
    }
}

/// `A1`, `A2` and their bounds against `R`.
pub fn correction_plot(report: &CascadeReport) -> Plot {
    let rows = &report.rows;
    let pts =
        |f: fn(&crate::diagnostics::ScaleRow) -> f64| rows.iter().map(|r| (r.r, f(r))).collect();
    Plot {
        title: "Time and cross-term corrections".into(),
        x_label: "R".into(),
        y_label: "magnitude".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series {
                name: "A1".into(),
                points: pts(|r| r.a1),
                dashed: false,
            },
            Series {
                name: "A1 bound".into(),
                points: pts(|r| r.a1_bound),
                dashed: true,
            },
            Series {
                name: "A2".into(),
                points: pts(|r| r.a2),
                dashed: false,
            },
            Series {
                name: "A2 bound".into(),
                points: pts(|r| r.a2_bound),
                dashed: true,
            },
        ],
        bands: Vec::new(),
    }
}

/// Variance and dissipation rate over time.
pub fn budget_plot(budget: &[BudgetPoint]) -> Plot {
    Plot {
        title: "Variance budget".into(),
        x_label: "t".into(),
        y_label: "value".into(),
        log_x: false,
        log_y: false,
        series: vec![
            Series {
                name: "variance".into(),
                points: budget.iter().map(|b| (b.t, b.variance)).collect(),
                dashed: false,
            },
            Series {
                name: "dissipation".into(),
                points: budget.iter().map(|b| (b.t, b.dissipation)).collect(),
                dashed: true,
            },
        ],
        bands: Vec::new(),
    }
}

/// Plain-text digest of a cascade and locality report.
pub fn summary_text(report: &CascadeReport, locality: &LocalityReport) -> String {
    let m = &report.macro_averages;
    let c = &m.constants;
    let mut s = String::new();
    let _ = writeln!(s, "alpha = {}, kappa = {}", m.alpha, m.kappa);
    if m.local_path {
        let _ = writeln!(s, "local-Laplacian path, extension diagnostics skipped");
    } else if let Some(d) = m.d_alpha {
        let _ = writeln!(s, "d_alpha = {d:.12}");
    }
    let _ = writeln!(
        s,
        "theta0 = {:.6e}, theta0* = {:.6e}, eps0* = {:.6e}",
        m.theta0, m.theta0_star, m.eps0_star
    );
    match m.sigma0 {
        Some(v) => {
            let _ = writeln!(s, "sigma0 = {v:.6e}");
        }
        None => {
            let _ = writeln!(s, "sigma0 undefined (eps0* = 0)");
        }
    }
    let _ = writeln!(
        s,
        "C0_eff = {:.6}, K1_eff = {:.6}, K2_eff = {:.6}, declared K1 = {}, K2 = {}",
        c.c0_eff, c.k1_eff, c.k2_eff, c.k1_declared, c.k2_declared
    );
    let _ = writeln!(
        s,
        "beta_paper = {:.6e}, beta_eff = {:.6e}, slack = {}",
        m.beta_paper, m.beta_eff, report.slack
    );
    let _ = writeln!(
        s,
        "premise sigma0 < beta_eff R0: {}{}",
        report.premise,
        report
            .range_floor
            .map_or(String::new(), |f| format!(" (range floor {f:.6e})"))
    );
    let _ = writeln!(
        s,
        "{:>12} {:>5} {:>13} {:>13} {:>13} {:>13}  pass",
        "R", "n", "<F>_R", "D_R", "A1", "A2"
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:>12.6e} {:>5} {:>13.5e} {:>13.5e} {:>13.5e} {:>13.5e}  {}",
            r.r,
            r.n,
            r.flux,
            r.dissipation,
            r.a1,
            r.a2,
            r.pass.as_str()
        );
    }
    let passing = report
        .rows
        .iter()
        .filter(|r| r.pass == Verdict::Pass)
        .count();
    let _ = writeln!(s, "passing scales: {passing}/{}", report.rows.len());
    let within = locality
        .pairs
        .iter()
        .filter(|p| p.within == Some(true))
        .count();
    let _ = writeln!(
        s,
        "locality pairs within bounds: {within}/{}",
        locality.pairs.len()
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_deterministic_and_closed() {
        let plot = Plot {
            title: "t <x>".into(),
            x_label: "R".into(),
            y_label: "y".into(),
            log_x: true,
            log_y: true,
            series: vec![Series {
                name: "a".into(),
                points: vec![(0.1, 1.0), (0.2, -1.0), (0.4, 3.0)],
                dashed: false,
            }],
            bands: vec![Band {
                name: "b".into(),
                points: vec![(0.1, 0.5, 2.0), (0.4, 0.5, 4.0)],
            }],
        };
        let a = plot.to_svg();
        assert_eq!(a, plot.to_svg());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("t &lt;x&gt;"));
        assert!(a.contains("<polygon"));
        assert!(a.contains(r##"fill="none" stroke="#1f77b4""##));
    }

    #[test]
    fn empty_plot_renders() {
        let p = budget_plot(&[]);
        assert!(p.to_svg().contains("</svg>"));
    }
}
