//! Shared helpers for the integration tests.

#![allow(dead_code)]

/// Independent profile oracle: backward shooting of the ODE
/// `m'' + (b/s) m' - m = 0` in `t = ln s`, normalised by a two-term
/// Frobenius fit near `s = 0`.
///
/// Returns `φ_α` at the requested abscissae (each in `[1e-3, 6]`).
pub fn shoot(alpha: f64, at: &[f64]) -> Vec<f64> {
    let b = 1.0 - alpha;
    let s_start: f64 = 40.0;
    let s_end: f64 = 1e-4;
    let steps = 400_000usize;
    let t0 = s_start.ln();
    let h = (s_end.ln() - t0) / steps as f64;
    // State (m, m_t) with m_tt = (1-b) m_t + s² m. Any start decaying
    // like e^{-s} works: the growing mode dies out integrating inward.
    let rhs = |t: f64, y: [f64; 2]| -> [f64; 2] {
        let s2 = (2.0 * t).exp();
        [y[1], (1.0 - b) * y[1] + s2 * y[0]]
    };
    let mut y = [1e-12, -1e-12 * s_start];
    let mut t = t0;
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(steps + 1);
    samples.push((t, y[0]));
    for _ in 0..steps {
        let k1 = rhs(t, y);
        let k2 = rhs(
            t + 0.5 * h,
            [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]],
        );
        let k3 = rhs(
            t + 0.5 * h,
            [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]],
        );
        let k4 = rhs(t + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        t += h;
        samples.push((t, y[0]));
    }
    // Near zero: m = A y1(s) + B y2(s), y1 = Σ a_j s^{2j}, y2 = s^{1-b} Σ c_j s^{2j}.
    let s = s_end;
    let series = |r: f64| -> (f64, f64) {
        let (mut term, mut val, mut der) = (1.0, 0.0, 0.0);
        for j in 0..12 {
            let p = r + 2.0 * j as f64;
            if j > 0 {
                term /= p * (p - 1.0 + b);
            }
            val += term * s.powf(p);
            der += term * p * s.powf(p - 1.0);
        }
        (val, der)
    };
    let (y1, y1d) = series(0.0);
    let (y2, y2d) = series(1.0 - b);
    let m = y[0];
    let md = y[1] / s;
    let det = y1 * y2d - y2 * y1d;
    let a = (m * y2d - md * y2) / det;
    at.iter()
        .map(|&x| {
            let tx = x.ln();
            let pos = (tx - t0) / h;
            let i = pos.floor() as usize;
            // Cubic Lagrange interpolation in t on the stored trajectory.
            let i0 = i.saturating_sub(1).min(samples.len() - 4);
            let mut acc = 0.0;
            for j in 0..4 {
                let mut l = 1.0;
                for k in 0..4 {
                    if k != j {
                        let tj = samples[i0 + j].0;
                        let tk = samples[i0 + k].0;
                        l *= (tx - tk) / (tj - tk);
                    }
                }
                acc += l * samples[i0 + j].1;
            }
            acc / a
        })
        .collect()
}
