use std::f64::consts::PI;

use proptest::prelude::*;

use sqglab::diagnostics::flux_pair;
use sqglab::extension::extension_profile;
use sqglab::fields::{
    advection, fractional_laplacian, gradient, spectral_divergence, velocity_from_theta, Fft2,
};
use sqglab::multiscale::{
    build_cutoff, build_macro_cutoff, generate_cover, validate_cover, CutoffKind, MacroDomain,
};
use sqglab::quadrature::ZGrid;
use sqglab::solver::{make_initial, InitialConditionSpec, SolverConfig, Trajectory};
use sqglab::{Grid, ScalarField};

const BOX: f64 = 2.0 * PI;

fn grid(n: usize) -> Grid {
    Grid::new(n, BOX).unwrap()
}

fn macro_domain(n: usize) -> MacroDomain {
    MacroDomain::centered(&grid(n), BOX / 8.0, 0.5, 1.0).unwrap()
}

/// Band-limited field from `(k1, k2, amplitude, phase)` modes.
fn field(grid: Grid, modes: &[(i64, i64, f64, f64)]) -> ScalarField {
    ScalarField::from_fn(grid, |x, y| {
        modes
            .iter()
            .map(|&(a, b, c, p)| c * (a as f64 * x + b as f64 * y + p).cos())
            .sum()
    })
}

fn modes(kmax: i64) -> impl Strategy<Value = Vec<(i64, i64, f64, f64)>> {
    prop::collection::vec(
        (-kmax..=kmax, -kmax..=kmax, 0.1..1.0f64, 0.0..2.0 * PI)
            .prop_filter("nonzero wavevector", |m| (m.0, m.1) != (0, 0)),
        1..8,
    )
}

fn rel_err(a: &ScalarField, b: &ScalarField) -> f64 {
    let diff = a
        .values
        .iter()
        .zip(&b.values)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    diff / b.max_abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fractional_powers_compose(m in modes(10), a in 0.05..1.0f64, b in 0.05..1.0f64) {
        let f = field(grid(32), &m);
        let twice = fractional_laplacian(&fractional_laplacian(&f, a).unwrap(), b).unwrap();
        let once = fractional_laplacian(&f, a + b).unwrap();
        prop_assert!(rel_err(&twice, &once) < 1e-10);
    }

    #[test]
    fn transform_round_trip_and_parseval(m in modes(15)) {
        let g = grid(32);
        let f = field(g, &m);
        let fft = Fft2::new(g);
        let spec = fft.forward(&f);
        prop_assert!(rel_err(&fft.inverse(&spec), &f) < 1e-12);
        let mean_sq = f.values.iter().map(|v| v * v).sum::<f64>() / g.len() as f64;
        prop_assert!((spec.power() / mean_sq - 1.0).abs() < 1e-12);
        prop_assert!(spec.hermitian_defect() < 1e-12 * spec.power().sqrt());
    }

    #[test]
    fn sqg_velocity_is_divergence_free(m in modes(10)) {
        let f = field(grid(32), &m);
        let u = velocity_from_theta(&f).unwrap();
        prop_assert!(spectral_divergence(&u).unwrap() < 1e-12 * u.max_norm().max(1.0));
        let transport = advection(&u, &f).unwrap();
        let scale = u.max_norm() * gradient(&f).max_norm() * f.grid.length().powi(2);
        prop_assert!(transport.integral().abs() < 1e-10 * scale);
    }

    #[test]
    fn vertical_quadrature_integrates_weight(
        alpha in 0.1..1.9f64,
        z_top in 0.5..4.0f64,
        first in 1e-4..1e-2f64,
        points in 3usize..10,
    ) {
        let b = 1.0 - alpha;
        let zg = ZGrid::graded(b, z_top, 0.5 * z_top, first, points).unwrap();
        let exact = z_top.powf(1.0 + b) / (1.0 + b);
        prop_assert!((zg.weights.iter().sum::<f64>() / exact - 1.0).abs() < 1e-12);
        prop_assert!(zg.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn profile_decays_monotonically(alpha in 0.1..1.9f64, s in 0.0..30.0f64, ds in 1e-3..1.0f64) {
        let p0 = extension_profile(alpha, s).unwrap();
        let p1 = extension_profile(alpha, s + ds).unwrap();
        prop_assert!((0.0..=1.0).contains(&p0));
        prop_assert!(p1 < p0 || p0 == 0.0);
    }

    #[test]
    fn initial_conditions_have_zero_mean(seed in any::<u64>(), amp in 0.1..5.0f64) {
        let ic = InitialConditionSpec::band_random(2.0, 8.0, amp, seed);
        let f = make_initial(&ic, grid(32)).unwrap();
        prop_assert!(f.mean().abs() < 1e-12 * amp);
        prop_assert!((f.max_abs() / amp - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn covers_meet_count_and_multiplicity_bounds(level in 0.0..3.0f64, seed in prop::option::of(any::<u64>())) {
        let md = macro_domain(128);
        let r = md.r0 / 2f64.powf(level);
        let cover = generate_cover(&md, r, 8.0, 8.0, seed).unwrap();
        let q = (md.r0 / r).powi(2);
        let n = cover.len() as f64;
        prop_assert!(q <= n && n <= 8.0 * q);
        let cert = validate_cover(&cover, 16).unwrap();
        prop_assert!(cert.k2_membership <= 8 && cert.partition);
        prop_assert!(cert.k1_eff <= 8.0);
    }

    #[test]
    fn cutoffs_are_bounded_and_below_macro(
        cx in -1.0..1.0f64,
        cy in -1.0..1.0f64,
        level in 0.0..3.0f64,
        px in -2.2..2.2f64,
        py in -2.2..2.2f64,
        t in -0.2..1.2f64,
        z in -0.1..2.0f64,
    ) {
        let md = macro_domain(128);
        let c = [md.x0[0] + cx * md.r0, md.x0[1] + cy * md.r0];
        prop_assume!((cx * cx + cy * cy).sqrt() <= 1.0);
        let r = md.r0 / 2f64.powf(level);
        let cut = build_cutoff(&md, c, r, 0.75, md.r0).unwrap();
        let mac = build_macro_cutoff(&md, 0.75, md.r0).unwrap();
        let x = [md.x0[0] + px * md.r0, md.x0[1] + py * md.r0];
        let psi = cut.psi(x);
        let (eta, _) = cut.eta(t * 2.0 * md.t_unit);
        let (vert, _) = cut.vertical(z.max(0.0) * md.r0);
        for v in [psi, eta, vert] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(psi <= mac.psi(x));
        let inside = (x[0] - md.x0[0]).hypot(x[1] - md.x0[1]) < md.r0;
        if inside && (x[0] - c[0]).hypot(x[1] - c[1]) < r {
            prop_assert_eq!(psi, 1.0);
        }
        if cut.kind == CutoffKind::Interior {
            if let Some(l) = cut.local(x) {
                let radial = l.grad[0] * (x[0] - c[0]) + l.grad[1] * (x[1] - c[1]);
                prop_assert!(radial <= 1e-12);
            }
        }
    }

    #[test]
    fn flux_equals_dual_form(
        m in prop::collection::vec(modes(10), 4),
        cx in -0.7..0.7f64,
        cy in -0.7..0.7f64,
        level in 0.0..2.0f64,
    ) {
        let g = grid(64);
        let md = macro_domain(64);
        let times: Vec<f64> = (0..4).map(|k| k as f64 / 3.0).collect();
        let snapshots = m.iter().map(|modes| field(g, modes)).collect();
        let cfg = SolverConfig {
            alpha: 1.0,
            kappa: 1.0,
            n: 64,
            length: BOX,
            dt: 1.0 / 3.0,
            t_end: 1.0,
            snapshot_stride: Some(1),
            dealias: true,
            transport: true,
            ic: InitialConditionSpec::band_random(2.0, 8.0, 1.0, 0),
        };
        let series = Trajectory::from_snapshots(cfg, times, snapshots).unwrap();
        let c = [md.x0[0] + cx * md.r0, md.x0[1] + cy * md.r0];
        let cut = build_cutoff(&md, c, md.r0 / 2f64.powf(level), 0.75, md.r0).unwrap();
        let (f, fd) = flux_pair(&series, &cut).unwrap();
        // Cancelling modes can make both sides vanish, so the floor scales with the data.
        let amp: f64 = m.iter().flatten().map(|x| x.2).sum();
        let floor = 1e-12 * amp.powi(3) / cut.r.powi(2);
        prop_assert!((f - fd).abs() <= 1e-8 * f.abs().max(fd.abs()) + floor, "{} vs {}", f, fd);
    }
}
