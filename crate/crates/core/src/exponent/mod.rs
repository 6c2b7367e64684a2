//! Branching mechanisms: evaluation of ψ and ψ′, inversion, exponential
//! tilting, and truncation to a compound-Poisson approximation.

mod measure;
mod truncated;

use std::sync::Arc;

use statrs::function::gamma::gamma;

use crate::error::{ensure, Error, Result};
use crate::quad;

pub use measure::{LevyMeasureSpec, DEFAULT_TOLERANCE};
pub use truncated::TruncatedMechanism;

/// Relative tolerance used for quadratures against the stable density.
const STABLE_TOLERANCE: f64 = 1e-11;

/// Normalising constant `c_α = α(α−1)/Γ(2−α)` of the stable Lévy density.
pub fn stable_levy_constant(alpha: f64) -> f64 {
    alpha * (alpha - 1.0) / gamma(2.0 - alpha)
}

fn check_alpha(alpha: f64) -> Result<f64> {
    ensure("alpha", alpha, alpha > 1.0 && alpha < 2.0, "must lie strictly in (1, 2)")
}

/// A Lévy measure on `(0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub enum LevyMeasure {
    /// `c_α ℓ^{-1-α} dℓ`.
    Stable { alpha: f64 },
    Tabulated(Arc<LevyMeasureSpec>),
    /// `e^{-θℓ}` times the inner measure.
    Tilted { inner: Box<LevyMeasure>, theta: f64 },
}

impl LevyMeasure {
    pub fn density(&self, l: f64) -> f64 {
        match self {
            LevyMeasure::Stable { alpha } => stable_levy_constant(*alpha) * l.powf(-1.0 - alpha),
            LevyMeasure::Tabulated(spec) => spec.density(l),
            LevyMeasure::Tilted { inner, theta } => (-theta * l).exp() * inner.density(l),
        }
    }

    fn tolerance(&self) -> f64 {
        match self {
            LevyMeasure::Stable { .. } => STABLE_TOLERANCE,
            LevyMeasure::Tabulated(spec) => spec.tolerance(),
            LevyMeasure::Tilted { inner, .. } => inner.tolerance(),
        }
    }

    fn breaks(&self) -> &[f64] {
        match self {
            LevyMeasure::Stable { .. } => &[],
            LevyMeasure::Tabulated(spec) => spec.grid(),
            LevyMeasure::Tilted { inner, .. } => inner.breaks(),
        }
    }

    /// `∫_{(lo, hi)} f(ℓ) π(dℓ)` by log-panel quadrature.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, lo: f64, hi: f64) -> Result<f64> {
        let tol = self.tolerance();
        let r = match self {
            LevyMeasure::Stable { alpha } => {
                let c = stable_levy_constant(*alpha);
                let e = -1.0 - alpha;
                quad::integrate_log(|l| f(l) * c * l.powf(e), lo, hi, &[], tol)?
            }
            _ => quad::integrate_log(|l| f(l) * self.density(l), lo, hi, self.breaks(), tol)?,
        };
        Ok(r.value)
    }

    /// The stable index if this is an untilted stable measure.
    pub fn stable_alpha(&self) -> Option<f64> {
        match self {
            LevyMeasure::Stable { alpha } => Some(*alpha),
            _ => None,
        }
    }
}

/// `e^{-x} − 1 + x` without cancellation.
pub(crate) fn exp_remainder(x: f64) -> f64 {
    if x < 1e-3 {
        x * x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)))
    } else {
        (-x).exp_m1() + x
    }
}

/// `1 − e^{-x}`.
pub(crate) fn one_minus_exp(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// The branching mechanism ψ of a (sub)critical spectrally positive Lévy
/// process without Brownian part.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchingMechanism {
    /// `ψ(λ) = λ^α`.
    Stable { alpha: f64 },
    /// `ψ(λ) = α₀ λ + ∫ (e^{-λℓ} − 1 + λℓ) π(dℓ)`.
    General { drift: f64, measure: LevyMeasure },
}

/// Outcome of the numerical admissibility check on a tabulated measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Admissibility {
    /// `∫ (ℓ ∧ ℓ²) π(dℓ)`.
    pub moment: f64,
    /// `(2^{-k}, ∫_{(2^{-k}, 1)} ℓ π(dℓ))` down to the tabulation floor.
    pub partial_integrals: Vec<(f64, f64)>,
    /// Fitted per-halving growth ratio of the dyadic increments inside the
    /// table; `None` when the table does not reach below 1/4.
    pub increment_ratio: Option<f64>,
    /// Divergence below the table is assumed from the low-end exponent.
    pub assumed_below_floor: bool,
    pub admissible: bool,
    pub reasons: Vec<String>,
}

impl BranchingMechanism {
    pub fn stable(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(BranchingMechanism::Stable { alpha })
    }

    /// A general mechanism from a drift and a tabulated measure; fails if
    /// the numerical admissibility check rejects the table.
    pub fn general(drift: f64, spec: LevyMeasureSpec) -> Result<Self> {
        ensure("drift", drift, drift >= 0.0 && drift.is_finite(), "must be finite and non-negative")?;
        let mech = BranchingMechanism::General {
            drift,
            measure: LevyMeasure::Tabulated(Arc::new(spec)),
        };
        let adm = mech.admissibility()?;
        if !adm.admissible {
            return Err(Error::Inadmissible(adm.reasons.join("; ")));
        }
        Ok(mech)
    }

    pub fn drift(&self) -> f64 {
        match self {
            BranchingMechanism::Stable { .. } => 0.0,
            BranchingMechanism::General { drift, .. } => *drift,
        }
    }

    pub fn measure(&self) -> LevyMeasure {
        match self {
            BranchingMechanism::Stable { alpha } => LevyMeasure::Stable { alpha: *alpha },
            BranchingMechanism::General { measure, .. } => measure.clone(),
        }
    }

    pub fn stable_alpha(&self) -> Option<f64> {
        match self {
            BranchingMechanism::Stable { alpha } => Some(*alpha),
            _ => None,
        }
    }

    /// ψ(λ).
    pub fn psi(&self, lambda: f64) -> Result<f64> {
        ensure("lambda", lambda, lambda >= 0.0, "must be non-negative")?;
        if lambda == 0.0 {
            return Ok(0.0);
        }
        match self {
            BranchingMechanism::Stable { alpha } => Ok(lambda.powf(*alpha)),
            BranchingMechanism::General { drift, measure } => {
                let i = measure.integrate(|l| exp_remainder(lambda * l), 0.0, f64::INFINITY)?;
                Ok(drift * lambda + i)
            }
        }
    }

    /// ψ′(λ).
    pub fn psi_prime(&self, lambda: f64) -> Result<f64> {
        ensure("lambda", lambda, lambda >= 0.0, "must be non-negative")?;
        match self {
            BranchingMechanism::Stable { alpha } => {
                if lambda == 0.0 {
                    Ok(0.0)
                } else {
                    Ok(alpha * lambda.powf(alpha - 1.0))
                }
            }
            BranchingMechanism::General { drift, measure } => {
                if lambda == 0.0 {
                    return Ok(*drift);
                }
                let i = measure.integrate(|l| l * one_minus_exp(lambda * l), 0.0, f64::INFINITY)?;
                Ok(drift + i)
            }
        }
    }

    /// The unique `λ ≥ 0` with `ψ(λ) = y`.
    pub fn psi_inverse(&self, y: f64) -> Result<f64> {
        ensure("y", y, y >= 0.0, "must be non-negative")?;
        if let BranchingMechanism::Stable { alpha } = self {
            let x = y.powf(1.0 / alpha);
            // polish once so the residual bound holds even after powf rounding
            let r = x.powf(*alpha) - y;
            if x > 0.0 && r != 0.0 {
                return Ok(x - r / (alpha * x.powf(alpha - 1.0)));
            }
            return Ok(x);
        }
        invert_increasing(|x| self.psi(x), |x| self.psi_prime(x), y)
    }

    /// The tilted mechanism `ψ(· + θ) − ψ(θ)` with drift `ψ′(θ)` and Lévy
    /// measure `e^{-θℓ} π(dℓ)`.
    pub fn tilt(&self, theta: f64) -> Result<Self> {
        ensure("theta", theta, theta > 0.0 && theta.is_finite(), "must be positive")?;
        let tilted = BranchingMechanism::General {
            drift: self.psi_prime(theta)?,
            measure: LevyMeasure::Tilted {
                inner: Box::new(self.measure()),
                theta,
            },
        };
        let psi_theta = self.psi(theta)?;
        for lambda in [0.0, 1.0, 5.0] {
            let direct = self.psi(lambda + theta)? - psi_theta;
            let via = tilted.psi(lambda)?;
            if (direct - via).abs() > 1e-8 * direct.abs().max(1.0) {
                return Err(Error::Numeric(format!(
                    "tilt identity fails at lambda={lambda}: {via} vs {direct}"
                )));
            }
        }
        Ok(tilted)
    }

    /// Compound-Poisson approximation keeping only jumps larger than `ε`.
    pub fn truncate(&self, epsilon: f64) -> Result<TruncatedMechanism> {
        TruncatedMechanism::new(self.clone(), epsilon)
    }

    /// `n^θ((a, ∞)) = ∫_{(a,∞)} (1 − e^{-θℓ}) π(dℓ)`.
    pub fn mark_intensity(&self, theta: f64, a: f64) -> Result<f64> {
        ensure("theta", theta, theta >= 0.0, "must be non-negative")?;
        ensure("a", a, a > 0.0, "must be positive")?;
        if theta == 0.0 {
            return Ok(0.0);
        }
        self.measure().integrate(|l| one_minus_exp(theta * l), a, f64::INFINITY)
    }

    /// Numerical check that the measure integrates `ℓ ∧ ℓ²` and that
    /// `∫_{(0,1)} ℓ π(dℓ)` diverges, as far as the table can tell.
    pub fn admissibility(&self) -> Result<Admissibility> {
        let measure = self.measure();
        let moment = measure.integrate(|l| l.min(l * l), 0.0, f64::INFINITY)?;
        let mut reasons = Vec::new();
        let (floor, low) = match &measure {
            LevyMeasure::Tabulated(spec) => (spec.floor(), spec.low_exponent()),
            _ => {
                return Ok(Admissibility {
                    moment,
                    partial_integrals: Vec::new(),
                    increment_ratio: None,
                    assumed_below_floor: false,
                    admissible: moment.is_finite(),
                    reasons,
                })
            }
        };
        let mut partial = Vec::new();
        let mut increments = Vec::new();
        let mut acc = 0.0;
        let mut k = 1;
        while 0.5f64.powi(k) >= floor {
            let lo = 0.5f64.powi(k);
            let inc = measure.integrate(|l| l, lo, 2.0 * lo)?;
            acc += inc;
            increments.push(inc);
            partial.push((lo, acc));
            k += 1;
        }
        let increment_ratio = if increments.len() >= 2 {
            let half = increments.len() / 2;
            let (a, b) = (increments[half], increments[increments.len() - 1]);
            Some((b / a).powf(1.0 / (increments.len() - 1 - half).max(1) as f64))
        } else {
            None
        };
        if let Some(r) = increment_ratio {
            if r < 0.99 {
                reasons.push(format!(
                    "dyadic increments of the first moment shrink by {r:.4} per halving inside the table"
                ));
            }
        }
        if low < 1.0 {
            reasons.push(format!(
                "low-end exponent {low} < 1 gives a finite first moment near zero"
            ));
        }
        if !moment.is_finite() {
            reasons.push("the (ℓ ∧ ℓ²) moment is not finite".into());
        }
        Ok(Admissibility {
            moment,
            partial_integrals: partial,
            increment_ratio,
            assumed_below_floor: true,
            admissible: reasons.is_empty(),
            reasons,
        })
    }
}

/// Solves `f(x) = y` for increasing convex `f` with `f(0) = 0`: bracket by
/// doubling from `[0, 1]`, bisect to width 1e-6, then safeguarded Newton.
pub(crate) fn invert_increasing<F, D>(f: F, df: D, y: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    D: Fn(f64) -> Result<f64>,
{
    if y == 0.0 {
        return Ok(0.0);
    }
    let target = (1e-10 * y).max(1e-12);
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi)? < y {
        lo = hi;
        hi *= 2.0;
        if hi > 1e18 {
            return Err(Error::Numeric(format!("bracket for inverse at y={y} exceeds 1e18")));
        }
    }
    while hi - lo > 1e-6 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = hi;
    let mut best = (f64::INFINITY, x);
    for _ in 0..100 {
        let r = f(x)? - y;
        if r.abs() < best.0 {
            best = (r.abs(), x);
        }
        if r.abs() <= target {
            return Ok(x);
        }
        if r > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let d = df(x)?;
        let mut next = if d > 0.0 { x - r / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == x {
            break;
        }
        x = next;
    }
    if best.0 <= 16.0 * target {
        return Ok(best.1);
    }
    Err(Error::Numeric(format!(
        "inverse at y={y} stalled with residual {:.3e}",
        best.0
    )))
}

/// `π_*((x, ∞)) = x^{-1/α} / Γ((α−1)/α)` for the stable mechanism.
pub fn pi_star_tail_stable(alpha: f64, x: f64) -> Result<f64> {
    check_alpha(alpha)?;
    ensure("x", x, x > 0.0, "must be positive")?;
    Ok(x.powf(-1.0 / alpha) / gamma((alpha - 1.0) / alpha))
}

/// Density of `π_*` for the stable mechanism.
pub fn pi_star_density_stable(alpha: f64, x: f64) -> Result<f64> {
    check_alpha(alpha)?;
    ensure("x", x, x > 0.0, "must be positive")?;
    Ok(x.powf(-(1.0 + alpha) / alpha) / (alpha * gamma((alpha - 1.0) / alpha)))
}

/// `α(α−1)Γ((α−1)/α)/Γ(2−α)`, the prefactor linking `ν₁` to `S₁`.
pub fn nu1_constant(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha * (alpha - 1.0) * gamma((alpha - 1.0) / alpha) / gamma(2.0 - alpha))
}

#[cfg(test)]
mod tests;
