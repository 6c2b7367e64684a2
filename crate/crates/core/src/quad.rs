//! Adaptive Gauss–Kronrod quadrature on logarithmic panels.
//!
//! Integrands over `(lo, hi) ⊂ (0, ∞)` are mapped to `u = ln ℓ`, cut into
//! panels of width at most [`PANEL_WIDTH`] (aligned with any supplied
//! breakpoints), and each panel is integrated with an adaptive G7/K15 rule.
//! Infinite ends are handled by marching outward one panel at a time until
//! the geometric remainder of the panel sequence is below tolerance.

use crate::error::{Error, Result};

const PANEL_WIDTH: f64 = 0.5;
const MAX_DEPTH: u32 = 48;
const MAX_PIECES: usize = 4096;
const MAX_TAIL_PANELS: usize = 20_000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Rule {
    value: f64,
    err: f64,
    abs: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Rule {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        k += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    Rule {
        value: k * h,
        err: ((k - g) * h).abs(),
        abs: abs * h.abs(),
    }
}

/// Result of a quadrature: the value and an error estimate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Integral {
    pub value: f64,
    pub err: f64,
}

/// Adaptive bisection on `[a, b]` until each piece meets `rel_tol` against
/// the integral of `|f|` over that piece.
fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> (Integral, bool) {
    let mut stack = vec![(a, b, 0u32)];
    let mut value = 0.0;
    let mut err = 0.0;
    let mut ok = true;
    let mut pieces = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        let r = gk15(f, lo, hi);
        pieces += 1;
        // below ~100 ulps of the panel the estimate is rounding noise
        let noise = 100.0 * f64::EPSILON * r.abs;
        if r.err <= rel_tol * r.abs
            || r.err <= noise
            || depth >= MAX_DEPTH
            || pieces + stack.len() >= MAX_PIECES
        {
            if r.err > rel_tol * r.abs && r.err > 0.0 {
                ok = false;
            }
            value += r.value;
            err += r.err;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    (Integral { value, err }, ok)
}

/// Integrates `f(ℓ) dℓ` over `(lo, hi)` where `0 ≤ lo < hi ≤ ∞`.
///
/// `breaks` are points in ℓ where `f` may be non-smooth; panels are aligned
/// with those inside the range.
pub(crate) fn integrate_log<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<Integral> {
    debug_assert!(lo >= 0.0 && hi > lo);
    let g = |u: f64| {
        let l = u.exp();
        let v = f(l) * l;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let u_lo = if lo > 0.0 { lo.ln() } else { f64::NEG_INFINITY };
    let u_hi = if hi.is_finite() { hi.ln() } else { f64::INFINITY };

    let mut core: Vec<f64> = breaks
        .iter()
        .filter(|&&b| b > lo && b < hi)
        .map(|b| b.ln())
        .collect();
    if u_lo.is_finite() {
        core.push(u_lo);
    }
    if u_hi.is_finite() {
        core.push(u_hi);
    }
    if core.is_empty() {
        core.push(0.0f64.clamp(u_lo, u_hi));
    }
    core.sort_by(|a, b| a.total_cmp(b));
    core.dedup();

    let mut total = 0.0;
    let mut err = 0.0;
    let mut ok = true;
    for w in core.windows(2) {
        let (a, b) = (w[0], w[1]);
        let pieces = ((b - a) / PANEL_WIDTH).ceil().max(1.0) as usize;
        let h = (b - a) / pieces as f64;
        for i in 0..pieces {
            let x0 = a + h * i as f64;
            let x1 = if i + 1 == pieces { b } else { x0 + h };
            let (r, good) = adaptive(&g, x0, x1, tol);
            total += r.value;
            err += r.err;
            ok &= good;
        }
    }

    let first = core[0];
    let last = *core.last().unwrap();
    if !u_lo.is_finite() {
        let (v, e, good) = march(&g, first, -PANEL_WIDTH, total, tol)?;
        total += v;
        err += e;
        ok &= good;
    }
    if !u_hi.is_finite() {
        let (v, e, good) = march(&g, last, PANEL_WIDTH, total, tol)?;
        total += v;
        err += e;
        ok &= good;
    }

    let achieved = if total != 0.0 { err / total.abs() } else { err };
    if !ok && achieved > tol {
        return Err(Error::Quadrature {
            achieved,
            requested: tol,
        });
    }
    Ok(Integral { value: total, err })
}

/// Marches panels of width `|step|` from `start` until the remainder is
/// negligible relative to the running total.
fn march<F: Fn(f64) -> f64>(
    g: &F,
    start: f64,
    step: f64,
    base: f64,
    tol: f64,
) -> Result<(f64, f64, bool)> {
    let mut sum = 0.0;
    let mut err = 0.0;
    let mut ok = true;
    let mut prev = f64::INFINITY;
    let mut quiet = 0;
    let mut x = start;
    for k in 0..MAX_TAIL_PANELS {
        let (a, b) = if step > 0.0 { (x, x + step) } else { (x + step, x) };
        let (r, good) = adaptive(g, a, b, tol);
        sum += r.value;
        err += r.err;
        ok &= good;
        x += step;
        let p = r.value.abs();
        let scale = (base + sum).abs();
        if p == 0.0 {
            quiet += 1;
            if quiet >= 8 {
                // zeros after a sizeable panel come from exp() leaving range
                if prev.is_finite() && prev > tol * scale {
                    break;
                }
                return Ok((sum, err, ok));
            }
        } else {
            quiet = 0;
            if k >= 2 && p < prev {
                let ratio = p / prev;
                let rest = p * ratio / (1.0 - ratio);
                if rest <= 0.1 * tol * scale {
                    return Ok((sum, err + rest, ok));
                }
            }
        }
        if p != 0.0 {
            prev = p;
        }
    }
    Err(Error::Quadrature {
        achieved: f64::INFINITY,
        requested: tol,
    })
}
