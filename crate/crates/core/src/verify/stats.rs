//! Monte Carlo aggregation and goodness-of-fit tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// A Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: u64,
    /// Known bound on the systematic error, when one applies.
    pub bias_note: Option<f64>,
}

impl McEstimate {
    pub fn with_bias(mut self, bias: f64) -> Self {
        self.bias_note = Some(bias);
        self
    }

    pub fn scaled(self, k: f64) -> Self {
        McEstimate {
            mean: self.mean * k,
            std_error: self.std_error * k.abs(),
            bias_note: self.bias_note.map(|b| b * k.abs()),
            ..self
        }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let mut a = Accumulator::default();
        xs.iter().for_each(|&x| a.push(x));
        a.estimate()
    }
}

/// Running sums for a sample mean; mergeable across workers.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.sum / n;
        ((self.sum_sq - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn estimate(&self) -> McEstimate {
        McEstimate {
            mean: self.mean(),
            std_error: (self.variance() / self.n.max(1) as f64).sqrt(),
            n: self.n.max(1),
            bias_note: None,
        }
    }
}

/// Sums for a ratio of means `E[x]/E[y]` with a delta-method error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RatioAccumulator {
    pub n: u64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl RatioAccumulator {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    pub fn merge(&mut self, o: &RatioAccumulator) {
        self.n += o.n;
        self.sx += o.sx;
        self.sy += o.sy;
        self.sxx += o.sxx;
        self.syy += o.syy;
        self.sxy += o.sxy;
    }

    pub fn estimate(&self) -> McEstimate {
        let n = self.n as f64;
        let (mx, my) = (self.sx / n, self.sy / n);
        let r = mx / my;
        let vxx = self.sxx / n - mx * mx;
        let vyy = self.syy / n - my * my;
        let vxy = self.sxy / n - mx * my;
        let var = (vxx - 2.0 * r * vxy + r * r * vyy).max(0.0) / (my * my);
        McEstimate {
            mean: r,
            std_error: (var / (n - 1.0).max(1.0)).sqrt(),
            n: self.n,
            bias_note: None,
        }
    }
}

/// Least-squares slope through the origin with a heteroscedasticity-robust
/// (sandwich) standard error.
pub fn slope_through_origin(xs: &[f64], ys: &[f64]) -> McEstimate {
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let b = sxy / sxx;
    let meat: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - b * x;
            x * x * e * e
        })
        .sum();
    let n = xs.len() as f64;
    let correction = n / (n - 1.0).max(1.0);
    McEstimate {
        mean: b,
        std_error: (meat * correction).sqrt() / sxx,
        n: xs.len() as u64,
        bias_note: None,
    }
}

/// Outcome of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov's limiting survival function `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn asymptotic_p(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_survival((s + 0.12 + 0.11 / s) * d)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

fn two_sample_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// `P(D ≥ d)` for the two-sample statistic by counting lattice paths that
/// stay strictly inside the band (no ties).
fn exact_two_sample_p(n: usize, m: usize, d: f64) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    let inside = |i: usize, j: usize| (i as f64 / nf - j as f64 / mf).abs() < d - 1e-12;
    let mut row = vec![0.0f64; m + 1];
    for i in 0..=n {
        for j in 0..=m {
            let v = if i == 0 && j == 0 {
                1.0
            } else if !inside(i, j) {
                0.0
            } else {
                let up = if i > 0 { row[j] } else { 0.0 };
                let left = if j > 0 { row[j - 1] } else { 0.0 };
                up + left
            };
            row[j] = v;
        }
    }
    // total paths C(n+m, n)
    let mut total = 1.0f64;
    for k in 1..=n {
        total = total * (m + k) as f64 / k as f64;
    }
    (1.0 - row[m] / total).clamp(0.0, 1.0)
}

/// Two-sample KS test: exact for samples below 100, asymptotic otherwise.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> KsResult {
    assert!(!xs.is_empty() && !ys.is_empty(), "KS needs non-empty samples");
    let a = sorted(xs);
    let b = sorted(ys);
    let d = two_sample_statistic(&a, &b);
    let p = if d == 0.0 {
        1.0
    } else if a.len() < 100 && b.len() < 100 {
        exact_two_sample_p(a.len(), b.len(), d)
    } else {
        let (n, m) = (a.len() as f64, b.len() as f64);
        asymptotic_p(d, n * m / (n + m))
    };
    KsResult {
        statistic: d,
        p_value: p,
    }
}

fn weighted_cdf_points(xs: &[f64], ws: &[f64]) -> (Vec<(f64, f64)>, f64, f64) {
    let mut v: Vec<(f64, f64)> = xs.iter().copied().zip(ws.iter().copied()).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = ws.iter().sum();
    let sq: f64 = ws.iter().map(|w| w * w).sum();
    (v, total, total * total / sq)
}

/// Two-sample KS between weighted empirical laws; the asymptotic p-value
/// uses the effective sizes `(Σw)²/Σw²`.
pub fn ks_two_sample_weighted(xs: &[f64], wx: &[f64], ys: &[f64], wy: &[f64]) -> KsResult {
    assert_eq!(xs.len(), wx.len());
    assert_eq!(ys.len(), wy.len());
    let (a, ta, na) = weighted_cdf_points(xs, wx);
    let (b, tb, nb) = weighted_cdf_points(ys, wy);
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].0.min(b[j].0);
        while i < a.len() && a[i].0 <= x {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 <= x {
            fb += b[j].1;
            j += 1;
        }
        d = d.max((fa / ta - fb / tb).abs());
    }
    let p = if d == 0.0 { 1.0 } else { asymptotic_p(d, na * nb / (na + nb)) };
    KsResult {
        statistic: d,
        p_value: p,
    }
}

/// One-sample KS against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> KsResult {
    let a = sorted(xs);
    let n = a.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in a.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    KsResult {
        statistic: d,
        p_value: asymptotic_p(d, n),
    }
}

/// Outcome of a chi-square test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Upper tail of the chi-square law.
pub fn chi_square_survival(statistic: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive df").sf(statistic)
}

/// Pearson test of observed counts against expected proportions (rescaled
/// to the observed total); `k − 1` degrees of freedom.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> ChiSquare {
    assert_eq!(observed.len(), expected.len());
    let n: f64 = observed.iter().sum();
    let e_total: f64 = expected.iter().sum();
    let statistic = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| {
            let e = e / e_total * n;
            (o - e) * (o - e) / e
        })
        .sum();
    let df = (observed.len() - 1) as f64;
    ChiSquare {
        statistic,
        df,
        p_value: chi_square_survival(statistic, df),
    }
}

/// Empirical quantile (linear interpolation between order statistics).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let a = sorted(xs);
    let h = q.clamp(0.0, 1.0) * (a.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    a[lo] + (h - lo as f64) * (a[hi] - a[lo])
}

#[cfg(test)]
mod tests;
