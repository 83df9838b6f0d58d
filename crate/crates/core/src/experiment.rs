//! Experiment configuration and the simulate / diagnose / sweep pipeline.
//!
//! A configuration is a TOML document with the sections `[solver]`
//! (including `[solver.ic]`), `[macro]`, `[diagnostics]`, `[scales]`,
//! `[sweep]`, `[cover]` and `[output]`. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    analyze, cascade_check, dyadic_scales, locality_check, Analysis, CascadeReport,
    DiagnosticsConfig, LocalityReport, Verdict, SCALE_FLOOR_DX,
};
use crate::error::{Error, Result};
use crate::fields::{check_alpha, Grid};
use crate::multiscale::{
    certify_family, generate_cover, CutoffFamily, FamilyCert, MacroDomain, Point,
};
use crate::report::{cascade_plot, correction_plot, summary_text, write_json, write_text};
use crate::solver::{integrate, SnapshotSeries, SolverConfig, Trajectory};

/// Macro ball and time unit; every field defaults from the solver box.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroSpec {
    /// Defaults to the box center.
    #[serde(default)]
    pub x0: Option<Point>,
    /// Defaults to `L/8`.
    #[serde(default)]
    pub r0: Option<f64>,
    /// Defaults to `t_end/2`.
    #[serde(default)]
    pub t_unit: Option<f64>,
}

/// Either explicit radii or a dyadic depth below `R0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
}

fn default_depth() -> usize {
    4
}

impl Default for ScaleSpec {
    fn default() -> Self {
        Self {
            depth: default_depth(),
            radii: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Dissipation exponents; empty means the solver's own.
    #[serde(default)]
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverSpec {
    /// Seed of the lattice jitter; none keeps the plain lattice.
    #[serde(default)]
    pub jitter_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub solver: SolverConfig,
    #[serde(default, rename = "macro")]
    pub macro_domain: MacroSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub scales: ScaleSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub cover: CoverSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable in TOML")
    }

    pub fn r0(&self) -> f64 {
        self.macro_domain.r0.unwrap_or(self.solver.length / 8.0)
    }

    pub fn t_unit(&self) -> f64 {
        self.macro_domain.t_unit.unwrap_or(0.5 * self.solver.t_end)
    }

    /// Exponents the sweep runs over.
    pub fn alphas(&self) -> Vec<f64> {
        if self.sweep.alphas.is_empty() {
            vec![self.solver.alpha]
        } else {
            self.sweep.alphas.clone()
        }
    }

    /// The same experiment at another dissipation exponent.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        let mut c = self.clone();
        c.solver.alpha = alpha;
        c
    }

    pub fn macro_domain(&self, alpha: f64) -> Result<MacroDomain> {
        let grid = self.solver.grid()?;
        let c = 0.5 * grid.length();
        let md = MacroDomain::new(
            self.macro_domain.x0.unwrap_or([c, c]),
            self.r0(),
            self.t_unit(),
            alpha,
        )?;
        md.check_grid(&grid)?;
        Ok(md)
    }

    /// Cover radii, largest first.
    pub fn radii(&self, grid: &Grid) -> Result<Vec<f64>> {
        let r0 = self.r0();
        let floor = SCALE_FLOOR_DX * grid.dx();
        let radii = match &self.scales.radii {
            Some(list) => list.clone(),
            None => dyadic_scales(r0, grid, self.scales.depth),
        };
        if radii.is_empty() {
            return Err(Error::param(
                "scales",
                format!("no scale at or above the floor 8 dx = {floor}"),
            ));
        }
        for &r in &radii {
            if !(r <= r0 * (1.0 + 1e-12)) {
                return Err(Error::param("scales", format!("R = {r} exceeds R0 = {r0}")));
            }
            if r < floor * (1.0 - 1e-12) {
                return Err(Error::param(
                    "scales",
                    format!("R = {r} is below the resolution floor 8 dx = {floor}"),
                ));
            }
        }
        Ok(radii)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.diagnostics.validate()?;
        let grid = self.solver.grid()?;
        let (r0, t) = (self.r0(), self.t_unit());
        if grid.length() < 8.0 * r0 * (1.0 - 1e-12) {
            return Err(Error::param(
                "r0",
                format!(
                    "box side {} is smaller than 8 R0 = {}",
                    grid.length(),
                    8.0 * r0
                ),
            ));
        }
        if self.solver.t_end < 2.0 * t * (1.0 - 1e-12) {
            return Err(Error::param(
                "t_unit",
                format!(
                    "the run must cover the averaging window [0, 2T]: t_end = {} < 2T = {}",
                    self.solver.t_end,
                    2.0 * t
                ),
            ));
        }
        for alpha in self.alphas() {
            check_alpha(alpha)?;
            self.macro_domain(alpha)?;
        }
        self.radii(&grid)?;
        Ok(())
    }
}

/// Runs the configured solver.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Trajectory> {
    integrate(&cfg.solver)
}

/// Certificates, analysis and both reports of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsOutput {
    pub certificates: Vec<FamilyCert>,
    pub analysis: Analysis,
    pub cascade: CascadeReport,
    pub locality: LocalityReport,
}

/// Builds and certifies one cover per scale, then evaluates every budget.
/// Any failed certificate aborts with [`Error::Certification`].
pub fn diagnose<S: SnapshotSeries + ?Sized>(
    series: &S,
    cfg: &ExperimentConfig,
) -> Result<DiagnosticsOutput> {
    let grid = series.grid();
    if grid.n() != cfg.solver.n || (grid.length() - cfg.solver.length).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!(
            "trajectory grid n = {}, L = {} differs from the configured n = {}, L = {}",
            grid.n(),
            grid.length(),
            cfg.solver.n,
            cfg.solver.length
        )));
    }
    let md = cfg.macro_domain(series.alpha())?;
    md.check_series(series)?;
    let d = &cfg.diagnostics;
    let mut families = Vec::new();
    let mut certificates = Vec::new();
    for r in cfg.radii(&grid)? {
        let cover = generate_cover(&md, r, d.k1, d.k2, cfg.cover.jitter_seed)?;
        let family = CutoffFamily::new(&cover, d.delta, d.r_star(&md))?;
        let cert = certify_family(&family, &grid)?;
        if !(cert.partition && cert.domination && cert.below_macro) {
            return Err(Error::Certification(format!(
                "family at R = {r}: partition {}, domination {}, below macro {}",
                cert.partition, cert.domination, cert.below_macro
            )));
        }
        families.push(family);
        certificates.push(cert);
    }
    let slots: Vec<Option<FamilyCert>> = certificates.iter().cloned().map(Some).collect();
    let analysis = analyze(series, &md, &families, &slots, d)?;
    let cascade = cascade_check(&analysis);
    let locality = locality_check(&cascade);
    Ok(DiagnosticsOutput {
        certificates,
        analysis,
        cascade,
        locality,
    })
}

pub const CASCADE_JSON: &str = "cascade_report.json";
pub const CASCADE_CSV: &str = "cascade_report.csv";
pub const LOCALITY_JSON: &str = "locality_report.json";
pub const LOCALITY_CSV: &str = "locality_report.csv";
pub const MACRO_JSON: &str = "macro_averages.json";
pub const CERTIFICATES_JSON: &str = "certificates.json";
pub const CASCADE_SVG: &str = "cascade.svg";
pub const CORRECTIONS_SVG: &str = "corrections.svg";
pub const SUMMARY_TXT: &str = "summary.txt";

/// Writes the plots and the text summary of a cascade/locality pair.
pub fn write_plots(dir: &Path, cascade: &CascadeReport, locality: &LocalityReport) -> Result<()> {
    write_text(&dir.join(CASCADE_SVG), &cascade_plot(cascade).to_svg())?;
    write_text(
        &dir.join(CORRECTIONS_SVG),
        &correction_plot(cascade).to_svg(),
    )?;
    write_text(&dir.join(SUMMARY_TXT), &summary_text(cascade, locality))
}

/// Writes every report file of a diagnostics run into `dir`.
pub fn write_reports(dir: &Path, out: &DiagnosticsOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(CASCADE_JSON), &out.cascade)?;
    write_text(&dir.join(CASCADE_CSV), &out.cascade.to_csv())?;
    write_json(&dir.join(LOCALITY_JSON), &out.locality)?;
    write_text(&dir.join(LOCALITY_CSV), &out.locality.to_csv())?;
    write_json(&dir.join(MACRO_JSON), &out.cascade.macro_averages)?;
    write_json(&dir.join(CERTIFICATES_JSON), &out.certificates)?;
    write_plots(dir, &out.cascade, &out.locality)
}

/// Reads the reports written by [`write_reports`].
pub fn read_reports(dir: &Path) -> Result<(CascadeReport, LocalityReport)> {
    fn load<T: serde::de::DeserializeOwned>(path: PathBuf) -> Result<T> {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path,
            reason: e.to_string(),
        })
    }
    Ok((
        load(dir.join(CASCADE_JSON))?,
        load(dir.join(LOCALITY_JSON))?,
    ))
}

pub const LOCAL_PATH_NOTE: &str = "local-Laplacian path, extension diagnostics skipped";

/// One line of the sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub sigma0: Option<f64>,
    pub beta_eff: f64,
    pub premise: bool,
    pub scales: usize,
    pub in_range_scales: usize,
    pub passing_scales: usize,
    pub note: String,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "alpha,sigma0,beta_eff,premise,scales,in_range_scales,passing_scales,note";

    pub fn from_output(out: &DiagnosticsOutput) -> Self {
        let c = &out.cascade;
        let m = &c.macro_averages;
        Self {
            alpha: m.alpha,
            sigma0: m.sigma0,
            beta_eff: m.beta_eff,
            premise: c.premise,
            scales: c.rows.len(),
            in_range_scales: c.in_range_rows().count(),
            passing_scales: c.rows.iter().filter(|r| r.pass == Verdict::Pass).count(),
            note: if m.local_path {
                LOCAL_PATH_NOTE.to_string()
            } else {
                String::new()
            },
        }
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SweepRow::CSV_HEADER);
    s.push('\n');
    for r in rows {
        let sigma = r
            .sigma0
            .map_or("undefined".to_string(), |v| format!("{v:e}"));
        s.push_str(&format!(
            "{},{},{:e},{},{},{},{},{}\n",
            r.alpha,
            sigma,
            r.beta_eff,
            r.premise,
            r.scales,
            r.in_range_scales,
            r.passing_scales,
            r.note
        ));
    }
    s
}

/// Simulates and diagnoses one sweep entry, writing the trajectory under
/// `dir/trajectory` and the reports into `dir`.
pub fn run_entry(cfg: &ExperimentConfig, dir: &Path) -> Result<SweepRow> {
    let traj = simulate(cfg)?;
    crate::io::write_trajectory(&dir.join("trajectory"), &traj)?;
    let out = diagnose(&traj, cfg)?;
    write_reports(dir, &out)?;
    Ok(SweepRow::from_output(&out))
}

/// Subdirectory name of a sweep entry.
pub fn entry_dir_name(alpha: f64) -> String {
    format!("alpha_{alpha}")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
[solver]
alpha = 1.0
n = 128
dt = 0.01
t_end = 1.0

[solver.ic]
kind = "band_random"
k_lo = 2.0
k_hi = 6.0
seed = 3

[scales]
depth = 2
"#;

    fn origin() -> PathBuf {
        PathBuf::from("test.toml")
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml(TINY, &origin()).unwrap();
        assert!((cfg.r0() - std::f64::consts::PI / 4.0).abs() < 1e-15);
        assert_eq!(cfg.t_unit(), 0.5);
        assert_eq!(cfg.alphas(), vec![1.0]);
        let grid = cfg.solver.grid().unwrap();
        assert_eq!(cfg.radii(&grid).unwrap().len(), 2);
        let back = ExperimentConfig::from_toml(&cfg.to_toml(), &origin()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{TINY}\n[output]\ndirectory = \"x\"\n");
        assert!(matches!(
            ExperimentConfig::from_toml(&text, &origin()),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn window_constraint_is_checked_for_every_alpha() {
        // R0 = π/4 < 1, so R0^α grows as α shrinks; 2T = 0.8 fails at α = 0.4
        let text = TINY.replace("t_end = 1.0", "t_end = 0.8") + "\n[sweep]\nalphas = [1.0, 0.4]\n";
        let err = ExperimentConfig::from_toml(&text, &origin()).unwrap_err();
        assert!(err.to_string().contains("2T >= R0^alpha"), "{err}");
        let text = TINY.replace("t_end = 1.0", "t_end = 0.5");
        let err = ExperimentConfig::from_toml(&text, &origin()).unwrap_err();
        assert!(err.to_string().contains("2T >= R0^alpha"), "{err}");
    }

    #[test]
    fn box_and_floor_are_checked() {
        let text = format!("{TINY}\n[macro]\nr0 = 1.0\n");
        assert!(ExperimentConfig::from_toml(&text, &origin()).is_err());
        let text = format!("{}\n", TINY.replace("depth = 2", "radii = [0.1]"));
        let err = ExperimentConfig::from_toml(&text, &origin()).unwrap_err();
        assert!(err.to_string().contains("floor"), "{err}");
    }

    #[test]
    fn sweep_csv_marks_local_path() {
        let row = SweepRow {
            alpha: 2.0,
            sigma0: None,
            beta_eff: 0.01,
            premise: false,
            scales: 1,
            in_range_scales: 0,
            passing_scales: 0,
            note: LOCAL_PATH_NOTE.into(),
        };
        let csv = sweep_csv(&[row]);
        assert!(csv.lines().nth(1).unwrap().starts_with("2,undefined,"));
        assert!(csv.contains(LOCAL_PATH_NOTE));
    }
}
