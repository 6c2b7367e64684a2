use super::*;
use proptest::prelude::*;

const A: f64 = 1.5;

fn stable() -> BranchingMechanism {
    BranchingMechanism::stable(A).unwrap()
}

/// The stable density tabulated on a wide grid: exact in log–log
/// interpolation, so a general mechanism built from it is the stable one.
fn stable_as_general() -> BranchingMechanism {
    let c = stable_levy_constant(A);
    let spec =
        LevyMeasureSpec::from_fn(|l| c * l.powf(-1.0 - A), 1e-4, 1e3, 71, A, A).unwrap();
    BranchingMechanism::general(0.0, spec).unwrap()
}

/// A genuinely non-stable mechanism: tempered stable with a drift.
fn tempered() -> BranchingMechanism {
    let spec = LevyMeasureSpec::from_fn(
        |l| 0.3 * l.powf(-2.3) * (-0.5 * l).exp() + 0.05 * l.powf(-2.6),
        1e-4,
        1e3,
        141,
        1.3,
        1.6,
    )
    .unwrap();
    BranchingMechanism::general(0.2, spec).unwrap()
}

/// Composite Simpson on `u = ln ℓ`, written independently of the library
/// quadrature.
fn simpson_log<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    let h = (b - a) / n as f64;
    let g = |u: f64| {
        let l = u.exp();
        f(l) * l
    };
    let mut s = g(a) + g(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * g(a + h * i as f64);
    }
    s * h / 3.0
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn stable_closed_forms() {
    let m = stable();
    assert_eq!(m.psi(4.0).unwrap(), 8.0);
    assert_eq!(m.psi(0.0).unwrap(), 0.0);
    assert!(rel(m.psi_prime(1.0).unwrap(), 1.5) < 1e-15);
    assert!(rel(m.psi_inverse(8.0).unwrap(), 4.0) < 1e-14);
    assert_eq!(m.psi_inverse(0.0).unwrap(), 0.0);
}

#[test]
fn domain_errors() {
    let m = stable();
    assert!(matches!(m.psi(-1.0), Err(Error::Domain { .. })));
    assert!(matches!(m.psi_prime(-1e-9), Err(Error::Domain { .. })));
    assert!(matches!(m.psi_inverse(-1.0), Err(Error::Domain { .. })));
    assert!(m.tilt(0.0).is_err());
    assert!(m.tilt(-1.0).is_err());
    assert!(m.truncate(0.0).is_err());
    assert!(m.truncate(-0.1).is_err());
    assert!(BranchingMechanism::stable(1.0).is_err());
    assert!(BranchingMechanism::stable(2.0).is_err());
    assert!(pi_star_tail_stable(1.5, 0.0).is_err());
}

#[test]
fn general_quadrature_matches_stable_closed_form() {
    let g = stable_as_general();
    let s = stable();
    for lambda in [0.01, 0.5, 4.0, 100.0] {
        let want = s.psi(lambda).unwrap();
        assert!(rel(g.psi(lambda).unwrap(), want) < 1e-8, "lambda={lambda}");
        let want = s.psi_prime(lambda).unwrap();
        assert!(rel(g.psi_prime(lambda).unwrap(), want) < 1e-8, "lambda={lambda}");
    }
    assert!(rel(g.psi(4.0).unwrap(), 8.0) < 1e-9);
    assert_eq!(g.psi_prime(0.0).unwrap(), 0.0);
    assert_eq!(tempered().psi_prime(0.0).unwrap(), 0.2);
}

#[test]
fn psi_prime_matches_finite_difference() {
    let h = 1e-5;
    for m in [stable(), stable_as_general(), tempered()] {
        let fd = (m.psi(2.0 + h).unwrap() - m.psi(2.0 - h).unwrap()) / (2.0 * h);
        assert!(rel(m.psi_prime(2.0).unwrap(), fd) < 1e-6, "{m:?}");
    }
}

#[test]
fn inverse_round_trip() {
    for m in [stable(), stable_as_general(), tempered()] {
        for y in [0.1, 1.0, 10.0, 1000.0] {
            let x = m.psi_inverse(y).unwrap();
            assert!(rel(m.psi(x).unwrap(), y) < 1e-9, "y={y}");
        }
    }
}

#[test]
fn tilt_examples() {
    let t = stable().tilt(1.0).unwrap();
    assert!(rel(t.psi(3.0).unwrap(), 7.0) < 1e-9);
    assert_eq!(t.psi(0.0).unwrap(), 0.0);
    assert!(rel(t.drift(), 1.5) < 1e-15);
}

#[test]
fn tilt_semigroup() {
    for m in [stable(), tempered()] {
        let a = m.tilt(1.0).unwrap().tilt(2.0).unwrap();
        let b = m.tilt(3.0).unwrap();
        for lambda in [0.5, 2.0, 8.0] {
            assert!(rel(a.psi(lambda).unwrap(), b.psi(lambda).unwrap()) < 1e-9);
        }
    }
}

#[test]
fn truncation_constants() {
    let c = stable_levy_constant(A);
    assert!((c - 0.75 / std::f64::consts::PI.sqrt()).abs() < 1e-14);
    assert!((c - 0.42314).abs() < 1e-5);
    let t = stable().truncate(0.01).unwrap();
    assert!((t.mean_jump_mass() - 8.4628).abs() < 1e-4);
    // cross-check the closed forms by quadrature
    let m = stable().measure();
    let lam = m.integrate(|_| 1.0, 0.01, f64::INFINITY).unwrap();
    let mass = m.integrate(|l| l, 0.01, f64::INFINITY).unwrap();
    assert!(rel(t.jump_rate(), lam) < 1e-9);
    assert!(rel(t.mean_jump_mass(), mass) < 1e-9);
    assert!(rel(t.offspring_rate(), (A - 1.0) / (A * 0.01)) < 1e-12);
    let t4 = stable().truncate(0.0025).unwrap();
    assert!(t4.jump_rate() > t.jump_rate());
    assert!(t4.mean_jump_mass() > t.mean_jump_mass());
    let g = tempered().truncate(0.01).unwrap();
    let g4 = tempered().truncate(0.0025).unwrap();
    assert!(g4.jump_rate() > g.jump_rate() && g4.mean_jump_mass() > g.mean_jump_mass());
    assert!(g.drain_rate() >= g.mean_jump_mass());
}

#[test]
fn truncated_stable_series_agrees_with_quadrature() {
    let t = stable().truncate(0.01).unwrap();
    let g = stable_as_general().truncate(0.01).unwrap();
    for v in [1e-4, 0.3, 5.0, 150.0, 199.0, 201.0, 1e4] {
        assert!(rel(t.psi(v).unwrap(), g.psi(v).unwrap()) < 1e-8, "v={v}");
        assert!(rel(t.psi_prime(v).unwrap(), g.psi_prime(v).unwrap()) < 1e-8, "v={v}");
    }
}

#[test]
fn truncation_consistency() {
    // The error is c_α Σ_{k≥2} (−v)^k ε^{k−α}/(k!(k−α)); its leading term
    // scales as ε^{1/2}, so the ratio between ε and ε/4 is 2 up to a
    // correction of relative order vε.
    let m = stable();
    let eps = 1e-3;
    let t1 = m.truncate(eps).unwrap();
    let t4 = m.truncate(eps / 4.0).unwrap();
    for v in [0.5, 2.0] {
        let e1 = (t1.psi(v).unwrap() - m.psi(v).unwrap()).abs();
        let e4 = (t4.psi(v).unwrap() - m.psi(v).unwrap()).abs();
        let ratio = e1 / e4;
        let x = v * eps;
        let predicted = 2.0 * (1.0 - x / 9.0) / (1.0 - x / 36.0);
        assert!((ratio - predicted).abs() < 1e-3 * predicted, "v={v}: {ratio} vs {predicted}");
        assert!(ratio > 1.99, "v={v}: ratio {ratio}");
    }
}

#[test]
fn lambda_over_psi_vanishes() {
    for alpha in [1.4, 1.5, 1.8] {
        let m = BranchingMechanism::stable(alpha).unwrap();
        let r = 1e8 / m.psi(1e8).unwrap();
        assert!(rel(r, 1e8f64.powf(1.0 - alpha)) < 1e-12);
        assert!(r < 1e-3, "alpha={alpha}");
    }
    // At α = 1.1 the ratio at 1e8 is 10^{-0.8}: the limit is reached far
    // more slowly, but it is still decreasing.
    let m = BranchingMechanism::stable(1.1).unwrap();
    assert!(1e8 / m.psi(1e8).unwrap() < 1e4 / m.psi(1e4).unwrap());
}

#[test]
fn mark_intensity_examples() {
    let m = stable();
    assert_eq!(m.mark_intensity(0.0, 0.1).unwrap(), 0.0);
    let lim = m.mark_intensity(1e6, 0.1).unwrap();
    let lam = m.truncate(0.1).unwrap().jump_rate();
    assert!(rel(lim, lam) < 1e-9);
    let c = stable_levy_constant(A);
    let oracle = simpson_log(|l| (1.0 - (-l).exp()) * c * l.powf(-2.5), 0.01, 1e4, 200_000)
        + c * 1e4f64.powf(-1.5) / 1.5;
    assert!(rel(m.mark_intensity(1.0, 0.01).unwrap(), oracle) < 1e-6);
}

#[test]
fn pi_star_examples() {
    assert!((pi_star_tail_stable(A, 1.0).unwrap() - 0.37328).abs() < 1e-5);
    assert!(pi_star_tail_stable(A, 1e300).unwrap() < 1e-100);
    // ψ^{-1}(λ) = ∫ (1 − e^{-λr}) π_*(dr)
    let f = |r: f64| -(-2.0 * r).exp_m1() * pi_star_density_stable(A, r).unwrap();
    let v = crate::quad::integrate_log(f, 0.0, f64::INFINITY, &[], 1e-12).unwrap().value;
    assert!(rel(v, 2f64.powf(1.0 / A)) < 1e-6);
}

#[test]
fn nu1_constant_value() {
    assert!((nu1_constant(1.5).unwrap() - 1.1335).abs() < 1e-4);
}

#[test]
fn admissibility_report() {
    let a = tempered().admissibility().unwrap();
    assert!(a.admissible, "{:?}", a.reasons);
    assert!(a.assumed_below_floor);
    assert!(a.partial_integrals.windows(2).all(|w| w[1].1 > w[0].1));
    // first moment finite near zero: rejected
    let spec = LevyMeasureSpec::from_fn(|l| l.powf(-1.5), 1e-4, 1e2, 41, 0.5, 1.5).unwrap();
    assert!(matches!(BranchingMechanism::general(0.0, spec), Err(Error::Inadmissible(_))));
    // a table whose interior decays like ℓ^{-1.5} but claims a steep low tail
    let spec = LevyMeasureSpec::from_fn(|l| l.powf(-1.5), 1e-4, 1e2, 41, 1.5, 1.5).unwrap();
    assert!(BranchingMechanism::general(0.0, spec).is_err());
}

#[test]
fn tilted_truncation_keeps_drain_rate() {
    let t = stable().truncate(0.01).unwrap();
    let tt = t.tilt(1.0).unwrap();
    assert!(rel(tt.drain_rate(), t.drain_rate()) < 1e-15);
    for v in [0.3, 2.0, 9.0] {
        let want = t.psi(v + 1.0).unwrap() - t.psi(1.0).unwrap();
        assert!(rel(tt.psi(v).unwrap(), want) < 1e-9);
    }
    assert!(tt.offspring_rate() < t.offspring_rate());
}

#[test]
fn excursion_target_limits() {
    let t = stable().truncate(0.01).unwrap();
    // small λ: ψ_ε^{-1}(λ) ≈ λ^{1/α} dominates
    let y = t.excursion_laplace_target(1.0).unwrap();
    assert!(y > 0.0 && y < 1.0);
    // the target approaches the total mass λ_ε/c of the excursion measure
    let k = t.offspring_rate();
    assert!(t.excursion_laplace_target(1e3).unwrap() < k);
    assert!(rel(t.excursion_laplace_target(1e6).unwrap(), k) < 1e-3);
}

fn mechs() -> impl Strategy<Value = BranchingMechanism> {
    prop_oneof![
        (1.05f64..1.95).prop_map(|a| BranchingMechanism::stable(a).unwrap()),
        Just(tempered()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn convexity_on_random_grids(m in mechs(), a in 0.0f64..20.0, w in 1e-3f64..20.0) {
        let b = a + w;
        let chord = (m.psi(b).unwrap() - m.psi(a).unwrap()) / w;
        let tol = 1e-9 * chord.abs().max(1.0);
        prop_assert!(m.psi_prime(a).unwrap() <= chord + tol);
        prop_assert!(chord <= m.psi_prime(b).unwrap() + tol);
    }

    #[test]
    fn inverse_round_trip_random(m in mechs(), ly in -6.0f64..6.0) {
        let y = 10f64.powf(ly);
        let x = m.psi_inverse(y).unwrap();
        let r = (m.psi(x).unwrap() - y).abs();
        prop_assert!(r <= (1e-10 * y).max(1e-12) * 16.0, "residual {}", r);
    }

    #[test]
    fn tilt_identity_random(theta in 0.05f64..5.0, lambda in 0.0f64..30.0, a in 1.1f64..1.9) {
        let m = BranchingMechanism::stable(a).unwrap();
        let t = m.tilt(theta).unwrap();
        let want = m.psi(lambda + theta).unwrap() - m.psi(theta).unwrap();
        let scale = m.psi(lambda + theta).unwrap().max(1.0);
        prop_assert!((t.psi(lambda).unwrap() - want).abs() <= 1e-9 * scale);
    }

    #[test]
    fn truncated_psi_is_increasing_convex(e in 1e-3f64..0.1, v in 0.0f64..50.0, w in 1e-2f64..10.0) {
        let t = stable().truncate(e).unwrap();
        let (a, b) = (t.psi(v).unwrap(), t.psi(v + w).unwrap());
        prop_assert!(b > a);
        let chord = (b - a) / w;
        prop_assert!(t.psi_prime(v).unwrap() <= chord * (1.0 + 1e-9));
        prop_assert!(chord <= t.psi_prime(v + w).unwrap() * (1.0 + 1e-9));
    }
}
