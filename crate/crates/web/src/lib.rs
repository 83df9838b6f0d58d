//! Browser demo: extension profiles, cutoff covers and a live solver run.
//!
//! The plain functions hold the logic so they can be tested natively; the
//! `#[wasm_bindgen]` items are thin wrappers for the page in `www/`.

use num_complex::Complex64;
use wasm_bindgen::prelude::*;

use sqglab::extension::{extension_profile, trace_constant};
use sqglab::multiscale::{generate_cover, CutoffFamily, MacroDomain};
use sqglab::solver::{InitialConditionSpec, SolverConfig, Stepper};
use sqglab::{Grid, Result, ScalarField};

const BOX: f64 = 2.0 * std::f64::consts::PI;

/// `φ_α` at `samples` evenly spaced points of `[0, s_max]`.
pub fn profile_samples(alpha: f64, s_max: f64, samples: usize) -> Result<Vec<f64>> {
    let samples = samples.max(2);
    (0..samples)
        .map(|i| extension_profile(alpha, s_max * i as f64 / (samples - 1) as f64))
        .collect()
}

/// Maps `[0, 1]` to a blue-white-red ramp.
fn diverging(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let s = t / 0.5;
        (0.1 + 0.9 * s, 0.3 + 0.7 * s, 0.9 + 0.1 * s)
    } else {
        let s = (t - 0.5) / 0.5;
        (1.0, 1.0 - 0.8 * s, 1.0 - 0.85 * s)
    };
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

/// Sequential ramp for non-negative data.
fn sequential(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    [
        (255.0 * (0.05 + 0.95 * t)) as u8,
        (255.0 * (0.05 + 0.85 * t * t)) as u8,
        (255.0 * (0.3 + 0.4 * (1.0 - t))) as u8,
    ]
}

/// A rendered cover: RGBA pixels of `Σ ψ_i` around the macro ball and
/// the number of cutoffs.
pub struct CoverImage {
    pub rgba: Vec<u8>,
    pub elements: usize,
}

/// Renders the summed cutoffs of a cover at `R = R0 / 2^level`, centers
/// marked in white, over the square `[x0 - 2.5 R0, x0 + 2.5 R0]²`.
pub fn render_cover(level: u32, jitter_seed: Option<u64>, width: usize) -> Result<CoverImage> {
    let grid = Grid::new(64, BOX)?;
    let r0 = BOX / 8.0;
    let md = MacroDomain::centered(&grid, r0, 1.0, 1.0)?;
    let r = r0 / 2f64.powi(level as i32);
    let cover = generate_cover(&md, r, 8.0, 8.0, jitter_seed)?;
    let family = CutoffFamily::new(&cover, 0.75, r0)?;
    let half = 2.5 * r0;
    let px = 2.0 * half / width as f64;
    let mut sums = vec![0.0; width * width];
    for (j, row) in sums.chunks_mut(width).enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            let p = [
                md.x0[0] - half + (i as f64 + 0.5) * px,
                md.x0[1] + half - (j as f64 + 0.5) * px,
            ];
            *v = family.elements.iter().map(|c| c.psi(p)).sum();
        }
    }
    let top = sums.iter().cloned().fold(1.0, f64::max);
    let mut rgba = Vec::with_capacity(4 * width * width);
    for (k, &v) in sums.iter().enumerate() {
        let (i, j) = (k % width, k / width);
        let p = [
            md.x0[0] - half + (i as f64 + 0.5) * px,
            md.x0[1] + half - (j as f64 + 0.5) * px,
        ];
        let on_rim = ((p[0] - md.x0[0]).hypot(p[1] - md.x0[1]) - r0).abs() < 0.75 * px;
        let near_center = cover
            .centers
            .iter()
            .any(|c| (p[0] - c[0]).hypot(p[1] - c[1]) < 2.0 * px);
        let rgb = if near_center {
            [255, 255, 255]
        } else if on_rim {
            [40, 200, 80]
        } else {
            sequential(v / top)
        };
        rgba.extend_from_slice(&[rgb[0], rgb[1], rgb[2], 255]);
    }
    Ok(CoverImage {
        rgba,
        elements: family.len(),
    })
}

/// A small live simulation.
pub struct LiveRun {
    stepper: Stepper,
    spectrum: Vec<Complex64>,
    dt: f64,
    time: f64,
}

impl LiveRun {
    pub fn start(n: usize, alpha: f64, seed: u64) -> Result<Self> {
        let cfg = SolverConfig {
            alpha,
            kappa: 1e-3,
            n,
            length: BOX,
            dt: 2e-3,
            t_end: 1.0,
            snapshot_stride: None,
            dealias: true,
            transport: true,
            ic: InitialConditionSpec::band_random(3.0, 8.0, 1.0, seed),
        };
        let theta0 = sqglab::solver::make_initial(&cfg.ic, cfg.grid()?)?;
        let stepper = Stepper::new(&cfg)?;
        let spectrum = stepper.to_spectrum(&theta0)?;
        Ok(Self {
            stepper,
            spectrum,
            dt: cfg.dt,
            time: 0.0,
        })
    }

    pub fn advance(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.stepper.advance(&mut self.spectrum, self.dt)?;
            self.time += self.dt;
        }
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn field(&self) -> ScalarField {
        self.stepper.to_field(&self.spectrum)
    }

    /// RGBA pixels of `θ`, one per grid node, symmetric color scale.
    pub fn rgba(&self) -> Vec<u8> {
        let f = self.field();
        let n = f.grid.n();
        let scale = f.max_abs().max(1e-300);
        let mut out = Vec::with_capacity(4 * n * n);
        // row 0 of the image is the top of the box
        for j in (0..n).rev() {
            for i in 0..n {
                let rgb = diverging(0.5 + 0.5 * f.values[j * n + i] / scale);
                out.extend_from_slice(&[rgb[0], rgb[1], rgb[2], 255]);
            }
        }
        out
    }
}

fn js(e: sqglab::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `φ_α` sampled on `[0, s_max]`.
#[wasm_bindgen(js_name = profileCurve)]
pub fn profile_curve(alpha: f64, s_max: f64, samples: usize) -> std::result::Result<Vec<f64>, JsError> {
    profile_samples(alpha, s_max, samples).map_err(js)
}

/// The constant `d_α` relating the extension trace to `Λ^α`.
#[wasm_bindgen(js_name = traceConstant)]
pub fn trace_constant_js(alpha: f64) -> std::result::Result<f64, JsError> {
    trace_constant(alpha).map_err(js)
}

#[wasm_bindgen]
pub struct CoverView {
    rgba: Vec<u8>,
    elements: usize,
}

#[wasm_bindgen]
impl CoverView {
    /// `seed < 0` keeps the plain lattice.
    #[wasm_bindgen(constructor)]
    pub fn new(level: u32, seed: f64, width: usize) -> std::result::Result<CoverView, JsError> {
        let seed = (seed >= 0.0).then_some(seed as u64);
        let img = render_cover(level, seed, width).map_err(js)?;
        Ok(Self {
            rgba: img.rgba,
            elements: img.elements,
        })
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn elements(&self) -> usize {
        self.elements
    }
}

#[wasm_bindgen]
pub struct Simulation {
    run: LiveRun,
}

#[wasm_bindgen]
impl Simulation {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, alpha: f64, seed: u32) -> std::result::Result<Simulation, JsError> {
        Ok(Self {
            run: LiveRun::start(n, alpha, seed as u64).map_err(js)?,
        })
    }

    pub fn step(&mut self, steps: usize) -> std::result::Result<(), JsError> {
        self.run.advance(steps).map_err(js)
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.run.rgba()
    }

    #[wasm_bindgen(getter)]
    pub fn time(&self) -> f64 {
        self.run.time()
    }
}
