use super::{
    exp_remainder, invert_increasing, one_minus_exp, stable_levy_constant, BranchingMechanism,
    LevyMeasure,
};
use crate::error::{ensure, Error, Result};
use crate::sampler::JumpLaw;

/// Compound-Poisson approximation of a mechanism: jumps below `ε` are
/// dropped and replaced by the drain rate `c = α₀ + m_ε`.
///
/// The truncated exponent is `ψ_ε(v) = c v − ∫_{(ε,∞)} (1 − e^{-vℓ}) π(dℓ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMechanism {
    /// Continuum mechanism this approximates.
    pub(crate) base: BranchingMechanism,
    /// Measure whose restriction to `(ε, ∞)` drives the jumps.
    pub(crate) measure: LevyMeasure,
    pub(crate) epsilon: f64,
    pub(crate) drift: f64,
    pub(crate) jump_rate: f64,
    pub(crate) mean_jump_mass: f64,
    pub(crate) drain_rate: f64,
    pub(crate) jumps: JumpLaw,
}

impl TruncatedMechanism {
    pub(crate) fn new(base: BranchingMechanism, epsilon: f64) -> Result<Self> {
        ensure("epsilon", epsilon, epsilon > 0.0 && epsilon.is_finite(), "must be positive")?;
        let measure = base.measure();
        let drift = base.drift();
        let (jump_rate, mean_jump_mass) = match &base {
            BranchingMechanism::Stable { alpha } => {
                let c = stable_levy_constant(*alpha);
                (
                    c * epsilon.powf(-alpha) / alpha,
                    c * epsilon.powf(1.0 - alpha) / (alpha - 1.0),
                )
            }
            BranchingMechanism::General { .. } => (
                measure.integrate(|_| 1.0, epsilon, f64::INFINITY)?,
                measure.integrate(|l| l, epsilon, f64::INFINITY)?,
            ),
        };
        let t = TruncatedMechanism {
            jumps: JumpLaw::for_measure(&measure, epsilon)?,
            base,
            measure,
            epsilon,
            drift,
            jump_rate,
            mean_jump_mass,
            drain_rate: drift + mean_jump_mass,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("jump_rate", self.jump_rate),
            ("mean_jump_mass", self.mean_jump_mass),
            ("drain_rate", self.drain_rate),
        ] {
            ensure(name, v, v > 0.0 && v.is_finite(), "must be finite and positive")?;
        }
        Ok(())
    }

    pub fn base(&self) -> &BranchingMechanism {
        &self.base
    }

    pub fn measure(&self) -> &LevyMeasure {
        &self.measure
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    /// `λ_ε = π((ε, ∞))`.
    pub fn jump_rate(&self) -> f64 {
        self.jump_rate
    }

    /// `m_ε = ∫_{(ε,∞)} ℓ π(dℓ)`.
    pub fn mean_jump_mass(&self) -> f64 {
        self.mean_jump_mass
    }

    /// `c = α₀ + m_ε`.
    pub fn drain_rate(&self) -> f64 {
        self.drain_rate
    }

    /// Expected number of children per unit of node mass, `λ_ε / c`.
    /// This is also the total mass of the truncated excursion measure.
    pub fn offspring_rate(&self) -> f64 {
        self.jump_rate / self.drain_rate
    }

    pub fn jump_law(&self) -> &JumpLaw {
        &self.jumps
    }

    /// Stable index when the jump measure is an untilted stable one.
    pub fn stable_alpha(&self) -> Option<f64> {
        self.measure.stable_alpha()
    }

    /// `∫_{(lo,∞)} f dπ` with `lo = max(lo, ε)`.
    pub fn integrate_above<F: Fn(f64) -> f64>(&self, f: F, lo: f64) -> Result<f64> {
        self.measure.integrate(f, lo.max(self.epsilon), f64::INFINITY)
    }

    /// Stable shortcut: `ψ_ε = ψ − ∫_{(0,ε)} (e^{-vℓ} − 1 + vℓ) π(dℓ)` by
    /// its power series in `vε`, used when `vε ≤ 2`.
    fn stable_series(&self, v: f64, derivative: bool) -> Option<f64> {
        let alpha = self.stable_alpha()?;
        let x = v * self.epsilon;
        if x > 2.0 || self.drift != 0.0 {
            return None;
        }
        let c = stable_levy_constant(alpha);
        let mut sum = 0.0;
        let mut term = 1.0; // (-x)^k / k!
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -x / k;
            if k < 2.0 {
                continue;
            }
            let add = if derivative {
                // v d/dv (-vε)^k = k (-vε)^k
                k * term / (k - alpha)
            } else {
                term / (k - alpha)
            };
            sum += add;
            if add.abs() < 1e-17 * sum.abs() || k > 60.0 {
                break;
            }
        }
        let eps_pow = self.epsilon.powf(-alpha);
        if derivative {
            Some(alpha * v.powf(alpha - 1.0) - c * eps_pow * sum / v)
        } else {
            Some(v.powf(alpha) - c * eps_pow * sum)
        }
    }

    /// `ψ_ε(v)`.
    pub fn psi(&self, v: f64) -> Result<f64> {
        ensure("v", v, v >= 0.0, "must be non-negative")?;
        if v == 0.0 {
            return Ok(0.0);
        }
        if let Some(s) = self.stable_series(v, false) {
            return Ok(s);
        }
        let i = self.integrate_above(|l| exp_remainder(v * l), self.epsilon)?;
        Ok(self.drift * v + i)
    }

    /// `ψ_ε′(v) = α₀ + ∫_{(ε,∞)} ℓ (1 − e^{-vℓ}) π(dℓ)`.
    pub fn psi_prime(&self, v: f64) -> Result<f64> {
        ensure("v", v, v >= 0.0, "must be non-negative")?;
        if v == 0.0 {
            return Ok(self.drift);
        }
        if let Some(s) = self.stable_series(v, true) {
            return Ok(s);
        }
        let i = self.integrate_above(|l| l * one_minus_exp(v * l), self.epsilon)?;
        Ok(self.drift + i)
    }

    /// The `v ≥ 0` with `ψ_ε(v) = y`.
    pub fn psi_inverse(&self, y: f64) -> Result<f64> {
        ensure("y", y, y >= 0.0, "must be non-negative")?;
        invert_increasing(|x| self.psi(x), |x| self.psi_prime(x), y)
    }

    /// Exponential tilt of the truncated mechanism itself: same cutoff and
    /// drain rate, jump measure `e^{-θℓ} π` on `(ε, ∞)`, exponent
    /// `ψ_ε(· + θ) − ψ_ε(θ)`. This is exactly the law of the root component
    /// of a truncated tree whose nodes are cut at rate `Δ` up to time `θ`.
    pub fn tilt(&self, theta: f64) -> Result<TruncatedMechanism> {
        ensure("theta", theta, theta > 0.0 && theta.is_finite(), "must be positive")?;
        let measure = LevyMeasure::Tilted {
            inner: Box::new(self.measure.clone()),
            theta,
        };
        let eps = self.epsilon;
        let jump_rate = measure.integrate(|_| 1.0, eps, f64::INFINITY)?;
        let mean_jump_mass = measure.integrate(|l| l, eps, f64::INFINITY)?;
        let drift = self.psi_prime(theta)?;
        let c = self.drain_rate;
        if (drift + mean_jump_mass - c).abs() > 1e-8 * c {
            return Err(Error::Numeric(format!(
                "tilted drain rate {} does not reproduce {c}",
                drift + mean_jump_mass
            )));
        }
        let t = TruncatedMechanism {
            base: self.base.tilt(theta)?,
            jumps: JumpLaw::for_measure(&measure, eps)?,
            measure,
            epsilon: eps,
            drift,
            jump_rate,
            mean_jump_mass,
            drain_rate: c,
        };
        t.validate()?;
        Ok(t)
    }

    /// `∫_{(max(a,ε),∞)} (1 − e^{-θℓ}) π(dℓ)`.
    pub fn mark_intensity(&self, theta: f64, a: f64) -> Result<f64> {
        ensure("theta", theta, theta >= 0.0, "must be non-negative")?;
        if theta == 0.0 {
            return Ok(0.0);
        }
        self.integrate_above(|l| one_minus_exp(theta * l), a)
    }

    /// Expected fraction of total mass turned into dust at time `θ`:
    /// `∫_{(ε,∞)} ℓ (1 − e^{-θℓ}) π(dℓ) / m_ε`.
    pub fn dust_fraction(&self, theta: f64) -> Result<f64> {
        ensure("theta", theta, theta >= 0.0, "must be non-negative")?;
        if theta == 0.0 {
            return Ok(0.0);
        }
        Ok(self.integrate_above(|l| l * one_minus_exp(theta * l), self.epsilon)?
            / self.mean_jump_mass)
    }

    /// Truncated excursion-length target `ψ_ε^{-1}(λ) − λ/c`, the exact value
    /// of `(λ_ε/c) (1 − E[e^{-λσ}])` for a truncated tree.
    pub fn excursion_laplace_target(&self, lambda: f64) -> Result<f64> {
        Ok(self.psi_inverse(lambda)? - lambda / self.drain_rate)
    }
}
