use super::*;
use crate::sampler::RngStream;
use proptest::prelude::*;

#[test]
fn accumulator_matches_two_pass() {
    let xs = [1.0, 4.0, 2.5, -3.0, 7.25];
    let e = McEstimate::from_samples(&xs);
    let m = xs.iter().sum::<f64>() / 5.0;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
    assert!((e.mean - m).abs() < 1e-15);
    assert!((e.std_error - (v / 5.0).sqrt()).abs() < 1e-12);
    let mut a = Accumulator::default();
    let mut b = Accumulator::default();
    xs[..2].iter().for_each(|&x| a.push(x));
    xs[2..].iter().for_each(|&x| b.push(x));
    a.merge(&b);
    assert_eq!(a.estimate().n, 5);
    assert!((a.estimate().std_error - e.std_error).abs() < 1e-12);
    let s = e.scaled(-2.0);
    assert_eq!(s.mean, -2.0 * e.mean);
    assert_eq!(s.std_error, 2.0 * e.std_error);
}

#[test]
fn ratio_and_slope_errors_are_calibrated() {
    // repeat small experiments and compare the spread of the estimates
    // with the reported standard errors
    let reps = 400;
    let mut ratios = Vec::new();
    let mut ratio_se = 0.0;
    let mut slopes = Vec::new();
    let mut slope_se = 0.0;
    for k in 0..reps {
        let mut rng = RngStream::new(31, k);
        let mut ra = RatioAccumulator::default();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for _ in 0..500 {
            let y = 1.0 + rng.exp1();
            let x = 2.0 * y + rng.uniform() - 0.5;
            ra.push(x, y);
            let s = rng.exp1();
            xs.push(s);
            ys.push(3.0 * s + s * (rng.uniform() - 0.5) * 4.0);
        }
        let r = ra.estimate();
        ratios.push(r.mean);
        ratio_se += r.std_error / reps as f64;
        let b = slope_through_origin(&xs, &ys);
        slopes.push(b.mean);
        slope_se += b.std_error / reps as f64;
    }
    let sd = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    assert!((sd(&ratios) / ratio_se - 1.0).abs() < 0.15);
    assert!((sd(&slopes) / slope_se - 1.0).abs() < 0.15);
    assert!((slopes.iter().sum::<f64>() / reps as f64 - 3.0).abs() < 0.01);
}

#[test]
fn kolmogorov_survival_values() {
    assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-3);
    assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-3);
    assert_eq!(kolmogorov_survival(0.0), 1.0);
    assert!(kolmogorov_survival(10.0) < 1e-80);
}

#[test]
fn ks_two_sample_examples() {
    let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
    let r = ks_two_sample(&xs, &xs);
    assert_eq!(r.statistic, 0.0);
    assert_eq!(r.p_value, 1.0);
    let ys: Vec<f64> = (0..50).map(|i| 100.0 + i as f64).collect();
    let r = ks_two_sample(&xs, &ys);
    assert_eq!(r.statistic, 1.0);
    assert!(r.p_value < 1e-20);
    let big: Vec<f64> = (0..500).map(|i| i as f64).collect();
    let big2: Vec<f64> = (0..500).map(|i| 1000.0 + i as f64).collect();
    assert_eq!(ks_two_sample(&big, &big2).statistic, 1.0);
}

/// All ways to interleave `n` and `m` distinct values: the law of `D`
/// by brute force.
fn brute_force_p(n: usize, m: usize, d_obs: f64) -> f64 {
    let total = n + m;
    let mut hits = 0u64;
    let mut count = 0u64;
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != n {
            continue;
        }
        count += 1;
        let (mut fa, mut fb, mut d) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..total {
            if mask >> i & 1 == 1 {
                fa += 1.0 / n as f64;
            } else {
                fb += 1.0 / m as f64;
            }
            d = d.max((fa - fb).abs());
        }
        if d >= d_obs - 1e-12 {
            hits += 1;
        }
    }
    hits as f64 / count as f64
}

#[test]
fn exact_small_sample_p_values() {
    let mut rng = RngStream::new(2, 2);
    for (n, m) in [(4, 5), (6, 6), (3, 9), (8, 7)] {
        for _ in 0..5 {
            let xs: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
            let ys: Vec<f64> = (0..m).map(|_| rng.uniform() + 0.2).collect();
            let r = ks_two_sample(&xs, &ys);
            if r.statistic == 0.0 {
                continue;
            }
            let want = brute_force_p(n, m, r.statistic);
            assert!((r.p_value - want).abs() < 1e-9, "{n},{m}: {} vs {want}", r.p_value);
        }
    }
}

#[test]
fn ks_calibration_under_the_null() {
    let reps = 200;
    let mean_p = (0..reps)
        .map(|k| {
            let mut rng = RngStream::new(40, k);
            let xs: Vec<f64> = (0..10_000).map(|_| rng.uniform()).collect();
            let ys: Vec<f64> = (0..10_000).map(|_| rng.uniform()).collect();
            ks_two_sample(&xs, &ys).p_value
        })
        .sum::<f64>()
        / reps as f64;
    assert!((mean_p - 0.5).abs() < 0.05, "{mean_p}");
}

#[test]
fn weighted_ks_reduces_to_unweighted() {
    let mut rng = RngStream::new(3, 3);
    let xs: Vec<f64> = (0..400).map(|_| rng.uniform()).collect();
    let ys: Vec<f64> = (0..300).map(|_| rng.uniform().powf(1.3)).collect();
    let a = ks_two_sample(&xs, &ys);
    let b = ks_two_sample_weighted(&xs, &vec![2.0; 400], &ys, &vec![0.5; 300]);
    assert!((a.statistic - b.statistic).abs() < 1e-12);
    assert!((a.p_value - b.p_value).abs() < 1e-9);
}

#[test]
fn weighted_ks_detects_reweighting() {
    // samples from U(0,1) weighted by 2x have the law of sqrt(U)
    let mut rng = RngStream::new(4, 4);
    let xs: Vec<f64> = (0..20_000).map(|_| rng.uniform()).collect();
    let wx: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
    let ys: Vec<f64> = (0..20_000).map(|_| rng.uniform().sqrt()).collect();
    let r = ks_two_sample_weighted(&xs, &wx, &ys, &vec![1.0; ys.len()]);
    assert!(r.p_value > 0.01, "{r:?}");
    let r = ks_two_sample(&xs, &ys);
    assert!(r.p_value < 1e-6);
}

#[test]
fn chi_square_known_values() {
    assert!((chi_square_survival(3.841_458_820_694_124, 1.0) - 0.05).abs() < 1e-9);
    assert!((chi_square_survival(18.307_038_053_275_146, 10.0) - 0.05).abs() < 1e-9);
    let c = chi_square(&[10.0, 20.0, 30.0], &[1.0, 2.0, 3.0]);
    assert_eq!(c.statistic, 0.0);
    assert_eq!(c.df, 2.0);
    assert_eq!(c.p_value, 1.0);
    let c = chi_square(&[50.0, 50.0], &[0.4, 0.6]);
    assert!((c.statistic - (100.0 / 40.0 + 100.0 / 60.0)).abs() < 1e-12);
}

#[test]
fn quantile_examples() {
    let xs = [3.0, 1.0, 2.0, 4.0];
    assert_eq!(quantile(&xs, 0.0), 1.0);
    assert_eq!(quantile(&xs, 1.0), 4.0);
    assert_eq!(quantile(&xs, 0.5), 2.5);
}

proptest! {
    #[test]
    fn ks_statistic_in_unit_interval(xs in prop::collection::vec(-10f64..10.0, 1..60),
                                     ys in prop::collection::vec(-10f64..10.0, 1..60)) {
        let r = ks_two_sample(&xs, &ys);
        prop_assert!((0.0..=1.0).contains(&r.statistic));
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        let s = ks_two_sample(&ys, &xs);
        prop_assert_eq!(r.statistic, s.statistic);
    }
}
