//! Independent oracles for values the library computes.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use schauder_core::field::{builtin_family, sample, BoxDomain, BuiltinParams, Cylinder, GridSpec, SpaceTimePoint};
use schauder_core::heatball::{
    kernel_mass, mean_value, radius, scaling_exponent, scaling_integral, HeatBall, QuadSpec,
};
use schauder_core::holder::{holder_seminorm, Region, ScanGrid};
use schauder_core::mollify::{profile_normalization, rho_tau, Mollifier};
use schauder_core::Error;

fn psi(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// Composite Simpson on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    h / 3.0 * (f(a) + inner + f(b))
}

/// Closed form of `(1/r^d) ∫ R_r(σ)^α σ^{−β} dσ`: with `σ = c·e^{−v}`,
/// `c = r²/(4π)`, it is `r^{−d} (2d)^{α/2} c^γ Γ(α/2 + 1) / γ^{α/2+1}`.
fn scaling_closed_form(alpha: u32, beta: u32, r: f64, d: usize) -> f64 {
    let a = alpha as f64;
    let g = a / 2.0 - beta as f64 + 1.0;
    let c = r * r / (4.0 * PI);
    r.powi(-(d as i32)) * (2.0 * d as f64).powf(a / 2.0) * c.powf(g) * gamma(a / 2.0 + 1.0) / g.powf(a / 2.0 + 1.0)
}

fn unit_ball_volume(d: usize) -> f64 {
    PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0 + 1.0)
}

#[test]
fn normalization_constant_matches_simpson() {
    let z = simpson(psi, -1.0, 1.0, 200_000);
    assert!(
        (profile_normalization() - z).abs() < 1e-12,
        "{} vs {z}",
        profile_normalization()
    );
}

#[test]
fn rho_tau_has_unit_mass_by_dense_midpoint() {
    let m = Mollifier::with_default_nodes(1).unwrap();
    for tau in [0.1, 0.3] {
        let n = 1500;
        let (hx, ht) = (2.0 * tau / n as f64, 2.0 * tau * tau / n as f64);
        let mut mass = 0.0;
        for i in 0..n {
            let x = -tau + (i as f64 + 0.5) * hx;
            for j in 0..n {
                let t = -tau * tau + (j as f64 + 0.5) * ht;
                mass += rho_tau(&m, tau, &[x], t).unwrap();
            }
        }
        mass *= hx * ht;
        assert!((mass - 1.0).abs() < 1e-6, "tau {tau}: {mass}");
    }
}

#[test]
fn sampled_cusp_values() {
    let u = builtin_family("spatial_cusp", &BuiltinParams::new(1).alpha(0.5)).unwrap();
    let spec = GridSpec::new(BoxDomain::symmetric(1, 1.0, 0.0, 1.0).unwrap(), 5, 2).unwrap();
    let f = sample(&u, &spec).unwrap();
    let h = 0.5f64.sqrt();
    assert_eq!(&f.values()[..5], &[1.0, h, 0.0, h, 1.0]);
}

#[test]
fn heat_ball_radius_lies_on_the_kernel_level_set() {
    let sigma = 1.0 / (4.0 * PI * 1f64.exp());
    let big_r = radius(1.0, sigma, 1).unwrap();
    assert!((big_r - (1.0 / (2.0 * PI * 1f64.exp())).sqrt()).abs() < 1e-15);
    assert!((big_r - 0.24197).abs() < 1e-5);
    let phi = (4.0 * PI * sigma).powf(-0.5) * (-big_r * big_r / (4.0 * sigma)).exp();
    assert!((phi - 1.0).abs() < 1e-12);
}

#[test]
fn scaling_integral_matches_gamma_closed_form() {
    let q = QuadSpec::default();
    for (alpha, beta) in [(4, 2), (3, 2), (5, 2), (2, 1), (4, 1), (6, 3)] {
        for d in 1..=3 {
            for r in [0.25, 1.0, 2.0] {
                let got = scaling_integral(alpha, beta, r, d, &q).unwrap().value;
                let want = scaling_closed_form(alpha, beta, r, d);
                assert!(
                    (got - want).abs() <= 1e-6 * want,
                    "({alpha},{beta}) d={d} r={r}: {got} vs {want}"
                );
            }
            let ratio = scaling_integral(alpha, beta, 2.0, d, &q).unwrap().value
                / scaling_integral(alpha, beta, 1.0, d, &q).unwrap().value;
            assert!((ratio.log2() - scaling_exponent(alpha, beta, d)).abs() < 1e-6);
        }
    }
    // d = 1, (4, 2): C = 2/π
    assert!((scaling_closed_form(4, 2, 1.0, 1) - 2.0 / PI).abs() < 1e-13);
}

#[test]
fn scaling_integral_rejects_the_borderline_pair() {
    let q = QuadSpec::default();
    for d in 1..=3 {
        assert!(matches!(
            scaling_integral(2, 2, 1.0, d, &q),
            Err(Error::Divergent { .. })
        ));
    }
}

#[test]
fn kernel_mass_matches_closed_form() {
    // ∬_E |y|²/σ² = d·ω_d/(d+2) · r^d · (scaling integral with α = d+2, β = 2)
    let q = QuadSpec::default();
    for d in 1..=3 {
        for r in [0.5f64, 1.0, 2.0] {
            let shell = d as f64 * unit_ball_volume(d) / (d as f64 + 2.0);
            let want = shell * r.powi(d as i32) * scaling_closed_form(d as u32 + 2, 2, r, d);
            assert!((want - 4.0 * r.powi(d as i32)).abs() < 1e-12 * want);
            let got = kernel_mass(&HeatBall::new(SpaceTimePoint::origin(d), r).unwrap(), &q)
                .unwrap()
                .value;
            assert!((got - want).abs() <= 1e-3 * want, "d={d} r={r}: {got}");
        }
    }
}

#[test]
fn caloric_mean_value_at_small_ball() {
    let v = builtin_family("caloric_poly", &BuiltinParams::new(1)).unwrap();
    let ball = HeatBall::new(SpaceTimePoint::origin(1), 0.5).unwrap();
    let got = mean_value(&v, &ball, &QuadSpec::default()).unwrap().value;
    assert!(got.abs() < 1e-3 * 0.25, "{got}");
}

#[test]
fn cusp_seminorm_against_exhaustive_scan() {
    // exhaustive 1-D scan of ||x|^α − |y|^α| / |x − y|^α on [−1, 1]
    let alpha = 0.5;
    let n = 2001;
    let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let mut oracle: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        for &y in &xs[i + 1..] {
            oracle = oracle.max((x.abs().powf(alpha) - y.abs().powf(alpha)).abs() / (x - y).abs().powf(alpha));
        }
    }
    assert!(oracle > 0.999 && oracle <= 1.0 + 1e-12);
    let u = builtin_family("spatial_cusp", &BuiltinParams::new(1).alpha(alpha)).unwrap();
    let rep = holder_seminorm(
        &u,
        alpha,
        &Region::from(Cylinder::unit(1)),
        &ScanGrid::new(33, 33),
        16_000_000,
    )
    .unwrap();
    assert!(rep.seminorm >= 0.98 && rep.seminorm <= 1.0 + 1e-12, "{}", rep.seminorm);
}
