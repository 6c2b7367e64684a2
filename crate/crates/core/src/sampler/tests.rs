use super::*;
use crate::exponent::BranchingMechanism;
use crate::verify::stats::{chi_square, ks_one_sample};
use proptest::prelude::*;
use rand::RngCore;

#[test]
fn streams_are_reproducible_and_distinct() {
    let mut a = RngStream::new(42, 0);
    let mut b = RngStream::new(42, 0);
    let mut c = RngStream::new(42, 1);
    let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
    let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
    let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
    assert_eq!(xa, xb);
    assert_ne!(xa, xc);
    let mut d1 = a.child(3);
    let mut d2 = RngStream::new(42, 0).child(3);
    assert_eq!(d1.next_u64(), d2.next_u64());
}

#[test]
fn uniform_ranges() {
    let mut r = RngStream::new(1, 2);
    for _ in 0..10_000 {
        let u = r.uniform();
        assert!((0.0..1.0).contains(&u));
        let p = r.uniform_pos();
        assert!(p > 0.0 && p <= 1.0);
        let o = r.uniform_open();
        assert!(o > 0.0 && o < 1.0);
    }
}

#[test]
fn poisson_mean_and_variance() {
    for rate in [0.3f64, 4.0, 29.9, 30.0, 250.0] {
        let mut r = RngStream::new(7, rate.to_bits());
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_poisson(rate, &mut r).unwrap() as f64).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
        let se = (rate / n as f64).sqrt();
        assert!((m - rate).abs() < 4.0 * se, "rate {rate}: mean {m}");
        assert!((v / rate - 1.0).abs() < 0.03, "rate {rate}: var {v}");
    }
    assert_eq!(sample_poisson(0.0, &mut RngStream::new(0, 0)).unwrap(), 0);
    assert!(sample_poisson(-1.0, &mut RngStream::new(0, 0)).is_err());
    assert!(sample_poisson(f64::NAN, &mut RngStream::new(0, 0)).is_err());
}

#[test]
fn poisson_pmf_small_rate() {
    let rate = 2.5;
    let mut r = RngStream::new(9, 9);
    let n = 100_000usize;
    let mut obs = [0f64; 8];
    for _ in 0..n {
        let k = sample_poisson(rate, &mut r).unwrap() as usize;
        obs[k.min(7)] += 1.0;
    }
    let mut exp = [0f64; 8];
    let mut p = (-rate).exp();
    let mut acc = 0.0;
    for (k, e) in exp.iter_mut().enumerate().take(7) {
        if k > 0 {
            p *= rate / k as f64;
        }
        *e = p * n as f64;
        acc += p;
    }
    exp[7] = (1.0 - acc) * n as f64;
    let c = chi_square(&obs, &exp);
    assert!(c.p_value > 1e-3, "{c:?}");
}

#[test]
fn cut_clock_scales_exactly() {
    let mut a = RngStream::new(3, 3);
    let mut b = RngStream::new(3, 3);
    let x = sample_cut_clock(1.0, &mut a).unwrap();
    let y = sample_cut_clock(4.0, &mut b).unwrap();
    assert!((x / 4.0 - y).abs() <= 1e-15 * x);
    assert!(sample_cut_clock(0.0, &mut a).is_err());
    let mut r = RngStream::new(3, 4);
    let xs: Vec<f64> = (0..20_000).map(|_| sample_cut_clock(2.0, &mut r).unwrap()).collect();
    let ks = ks_one_sample(&xs, |x| 1.0 - (-2.0 * x).exp());
    assert!(ks.p_value > 1e-3, "{ks:?}");
}

#[test]
fn pareto_jumps_follow_the_normalised_tail() {
    let t = BranchingMechanism::stable(1.5).unwrap().truncate(0.01).unwrap();
    let mut r = RngStream::new(5, 0);
    let xs: Vec<f64> = (0..20_000).map(|_| sample_jump(&t, &mut r)).collect();
    assert!(xs.iter().all(|&x| x >= 0.01));
    let ks = ks_one_sample(&xs, |x| 1.0 - (x / 0.01).powf(-1.5));
    assert!(ks.p_value > 1e-3, "{ks:?}");
}

#[test]
fn tabulated_jump_law_matches_measure_tail() {
    let spec = LevyMeasureSpec::from_fn(
        |l| 0.3 * l.powf(-2.3) * (-0.5 * l).exp() + 0.05 * l.powf(-2.6),
        1e-4,
        1e3,
        141,
        1.3,
        1.6,
    )
    .unwrap();
    let m = BranchingMechanism::general(0.2, spec).unwrap();
    let t = m.truncate(0.01).unwrap();
    let total = t.jump_rate();
    let mut r = RngStream::new(5, 1);
    let xs: Vec<f64> = (0..20_000).map(|_| sample_jump(&t, &mut r)).collect();
    let meas = m.measure();
    let cdf = |x: f64| 1.0 - meas.integrate(|_| 1.0, x, f64::INFINITY).unwrap() / total;
    let ks = ks_one_sample(&xs, cdf);
    assert!(ks.p_value > 1e-3, "{ks:?}");
}

#[test]
fn thinned_jump_law_is_the_tilted_law() {
    let t = BranchingMechanism::stable(1.5).unwrap().truncate(0.01).unwrap();
    let tt = t.tilt(2.0).unwrap();
    let mut r = RngStream::new(5, 2);
    let xs: Vec<f64> = (0..20_000).map(|_| sample_jump(&tt, &mut r)).collect();
    let base = BranchingMechanism::stable(1.5).unwrap();
    let meas = base.measure();
    let tot = meas.integrate(|l| (-2.0 * l).exp(), 0.01, f64::INFINITY).unwrap();
    let cdf = |x: f64| meas.integrate(|l| (-2.0 * l).exp(), 0.01, x).unwrap() / tot;
    let ks = ks_one_sample(&xs, cdf);
    assert!(ks.p_value > 1e-3, "{ks:?}");
}

#[test]
fn subordinator_jump_count_and_law() {
    let (alpha, v, delta): (f64, f64, f64) = (1.5, 2.0, 1e-2);
    let mut r = RngStream::new(11, 0);
    let g = statrs::function::gamma::gamma((alpha - 1.0) / alpha);
    let mean_count = v * delta.powf(-1.0 / alpha) / g;
    let n = 20_000;
    let mut count = 0.0;
    let mut all = Vec::new();
    for _ in 0..n {
        let s = sample_subordinator_jumps(alpha, v, delta, &mut r).unwrap();
        assert!(s.jumps.windows(2).all(|w| w[0] >= w[1]));
        assert!(s.jumps.iter().all(|&j| j > delta));
        count += s.jumps.len() as f64;
        if all.len() < 20_000 {
            all.extend_from_slice(&s.jumps);
        }
    }
    let m = count / n as f64;
    assert!((m - mean_count).abs() < 4.0 * (mean_count / n as f64).sqrt(), "{m} vs {mean_count}");
    all.truncate(20_000);
    let ks = ks_one_sample(&all, |x| 1.0 - (x / delta).powf(-1.0 / alpha));
    assert!(ks.p_value > 1e-3, "{ks:?}");
}

#[test]
fn subordinator_laplace_transform() {
    // E e^{-q S_v} = e^{-v q^{1/α}}; with the cutoff the small jumps are
    // replaced by their mean, which biases the transform by O(q·bias²).
    let (alpha, v, q) = (1.5, 1.0, 1.0);
    let mut r = RngStream::new(12, 0);
    let n = 50_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let s = sample_subordinator_jumps(alpha, v, 1e-4, &mut r).unwrap();
        acc += (-q * s.total).exp();
    }
    let m = acc / n as f64;
    let want = (-v * q.powf(1.0 / alpha)).exp();
    assert!((m - want).abs() < 0.005, "{m} vs {want}");
}

#[test]
fn small_jump_bias_closed_form() {
    // v ∫_0^δ r π_*(dr) by quadrature on the density
    let (alpha, v, delta) = (1.5, 3.0, 0.2);
    let f = |r: f64| r * crate::exponent::pi_star_density_stable(alpha, r).unwrap();
    let num = crate::quad::integrate_log(f, 0.0, delta, &[], 1e-12).unwrap().value;
    assert!((small_jump_bias(alpha, v, delta) - v * num).abs() < 1e-9 * v * num);
    let s = sample_subordinator_jumps(alpha, v, f64::INFINITY, &mut RngStream::new(0, 0)).unwrap();
    assert!(s.jumps.is_empty() && s.total.is_infinite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lowering_delta_only_appends_jumps(seed in any::<u64>(), d in 1e-3f64..1.0) {
        let a = sample_subordinator_jumps(1.5, 1.0, d, &mut RngStream::new(seed, 0)).unwrap();
        let b = sample_subordinator_jumps(1.5, 1.0, d / 10.0, &mut RngStream::new(seed, 0)).unwrap();
        prop_assert!(b.jumps.len() >= a.jumps.len());
        prop_assert_eq!(&b.jumps[..a.jumps.len()], &a.jumps[..]);
    }

    #[test]
    fn pareto_inverse_is_monotone(u in 1e-12f64..1.0, w in 1e-12f64..1.0) {
        let law = JumpLaw::Pareto { alpha: 1.5, epsilon: 0.01 };
        let (lo, hi) = if u < w { (u, w) } else { (w, u) };
        prop_assert!(law.from_uniform(lo).unwrap() >= law.from_uniform(hi).unwrap());
        prop_assert!(law.from_uniform(hi).unwrap() >= 0.01);
    }
}
