//! Seedable random streams and the samplers used by the tree and
//! subordinator pipelines.

use std::sync::Arc;

use rand::distr::{Distribution, Open01};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use statrs::function::gamma::gamma;

use crate::error::{ensure, Result};
use crate::exponent::{LevyMeasure, LevyMeasureSpec, TruncatedMechanism};

/// splitmix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream `(root, stream)`: `splitmix64(root ^ splitmix64(stream))`.
pub fn mix_seed(root: u64, stream: u64) -> u64 {
    splitmix64(root ^ splitmix64(stream))
}

/// A reproducible random stream identified by `(root_seed, stream_id)`.
///
/// The generator is ChaCha8 seeded with [`mix_seed`]. Two streams with
/// different ids share no state; a stream can be moved between threads.
#[derive(Debug, Clone)]
pub struct RngStream {
    root_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(root_seed: u64, stream_id: u64) -> Self {
        RngStream {
            root_seed,
            stream_id,
            rng: ChaCha8Rng::seed_from_u64(mix_seed(root_seed, stream_id)),
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent stream derived from this one's identity (not its state):
    /// root `mix_seed(root, id)`, stream `tag`.
    pub fn child(&self, tag: u64) -> RngStream {
        RngStream::new(mix_seed(self.root_seed, self.stream_id), tag)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform_pos(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }

    /// Uniform on `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        Open01.sample(&mut self.rng)
    }

    /// Standard exponential variate.
    pub fn exp1(&mut self) -> f64 {
        -self.uniform_open().ln()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

pub fn sample_uniform(rng: &mut RngStream) -> f64 {
    rng.uniform()
}

/// Poisson variate: sequential inversion for `rate < 30`, otherwise the
/// transformed-rejection sampler of `rand_distr`.
pub fn sample_poisson(rate: f64, rng: &mut RngStream) -> Result<u64> {
    ensure("rate", rate, rate >= 0.0 && rate.is_finite(), "must be finite and non-negative")?;
    if rate == 0.0 {
        return Ok(0);
    }
    if rate < 30.0 {
        let u = rng.uniform();
        let mut p = (-rate).exp();
        let mut cdf = p;
        let mut k = 0u64;
        while u >= cdf {
            k += 1;
            p *= rate / k as f64;
            cdf += p;
            if p == 0.0 {
                // u fell in the rounding gap above the summed cdf
                return sample_poisson(rate, rng);
            }
        }
        return Ok(k);
    }
    let d = Poisson::new(rate).expect("validated rate");
    Ok(d.sample(rng) as u64)
}

/// Exponential clock with rate `delta`, by inversion so that scaling `delta`
/// scales the clock exactly.
pub fn sample_cut_clock(delta: f64, rng: &mut RngStream) -> Result<f64> {
    ensure("delta", delta, delta > 0.0 && delta.is_finite(), "must be positive")?;
    Ok(rng.exp1() / delta)
}

/// Law of a single jump of a truncated mechanism: `π` restricted to
/// `(ε, ∞)`, normalised.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpLaw {
    /// Stable: `Δ = ε U^{-1/α}`.
    Pareto { alpha: f64, epsilon: f64 },
    /// Tabulated: inversion of the interpolated tail function.
    Table {
        spec: Arc<LevyMeasureSpec>,
        epsilon: f64,
        tail_at_epsilon: f64,
    },
    /// Tilted: rejection from the inner law with acceptance `e^{-θΔ}`.
    Thinned { inner: Box<JumpLaw>, theta: f64 },
}

impl JumpLaw {
    pub(crate) fn for_measure(measure: &LevyMeasure, epsilon: f64) -> Result<JumpLaw> {
        Ok(match measure {
            LevyMeasure::Stable { alpha } => JumpLaw::Pareto {
                alpha: *alpha,
                epsilon,
            },
            LevyMeasure::Tabulated(spec) => JumpLaw::Table {
                tail_at_epsilon: spec.tail(epsilon),
                spec: spec.clone(),
                epsilon,
            },
            LevyMeasure::Tilted { inner, theta } => JumpLaw::Thinned {
                inner: Box::new(JumpLaw::for_measure(inner, epsilon)?),
                theta: *theta,
            },
        })
    }

    /// Inverse-CDF map from `u ∈ (0, 1]`; `None` for rejection-based laws.
    pub fn from_uniform(&self, u: f64) -> Option<f64> {
        match self {
            JumpLaw::Pareto { alpha, epsilon } => Some(epsilon * u.powf(-1.0 / alpha)),
            JumpLaw::Table {
                spec,
                epsilon,
                tail_at_epsilon,
            } => Some(spec.tail_inverse(u * tail_at_epsilon).max(*epsilon)),
            JumpLaw::Thinned { .. } => None,
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            JumpLaw::Thinned { inner, theta } => loop {
                let x = inner.sample(rng);
                if rng.uniform() < (-theta * x).exp() {
                    return x;
                }
            },
            _ => {
                let u = rng.uniform_pos();
                self.from_uniform(u).expect("inverse-CDF law")
            }
        }
    }
}

/// A jump of the truncated mechanism; always at least `ε`.
pub fn sample_jump(trunc: &TruncatedMechanism, rng: &mut RngStream) -> f64 {
    trunc.jump_law().sample(rng)
}

/// Jumps of a stable subordinator with exponent `λ^{1/α}` on `[0, v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorSample {
    pub v: f64,
    pub delta: f64,
    /// Jumps larger than `delta`, descending.
    pub jumps: Vec<f64>,
    /// `v ∫_{(0,δ)} r π_*(dr)`, the expected mass of the discarded jumps.
    pub small_jump_bias: f64,
    /// `sum(jumps) + small_jump_bias`.
    pub total: f64,
}

/// Expected mass of jumps below `delta` over time `v`:
/// `v δ^{1−1/α} / ((α−1) Γ((α−1)/α))`.
pub fn small_jump_bias(alpha: f64, v: f64, delta: f64) -> f64 {
    v * delta.powf(1.0 - 1.0 / alpha) / ((alpha - 1.0) * gamma((alpha - 1.0) / alpha))
}

/// Samples the jumps above `delta` of the subordinator on `[0, v]`.
///
/// Jumps are generated in decreasing order from the arrival times `Γ_k` of
/// a unit Poisson process, `J_k = (Γ((α−1)/α) Γ_k / v)^{-α}`, stopping at the
/// first `J_k ≤ δ`. Their number is Poisson(`v π_*((δ,∞))`) and, given the
/// number, they are i.i.d. with tail `(x/δ)^{-1/α}`. Because the arrival
/// sequence does not depend on `δ`, lowering `δ` only appends jumps.
pub fn sample_subordinator_jumps(
    alpha: f64,
    v: f64,
    delta: f64,
    rng: &mut RngStream,
) -> Result<SubordinatorSample> {
    ensure("alpha", alpha, alpha > 1.0 && alpha < 2.0, "must lie strictly in (1, 2)")?;
    ensure("v", v, v > 0.0 && v.is_finite(), "must be positive")?;
    ensure("delta", delta, delta > 0.0, "must be positive")?;
    let g = gamma((alpha - 1.0) / alpha);
    let mut jumps = Vec::new();
    let mut arrival = 0.0;
    if delta.is_finite() {
        let horizon = v * delta.powf(-1.0 / alpha) / g;
        loop {
            arrival += rng.exp1();
            if arrival >= horizon {
                break;
            }
            jumps.push((g * arrival / v).powf(-alpha));
        }
    }
    let bias = if delta.is_finite() {
        small_jump_bias(alpha, v, delta)
    } else {
        f64::INFINITY
    };
    let total = jumps.iter().sum::<f64>() + bias;
    Ok(SubordinatorSample {
        v,
        delta,
        jumps,
        small_jump_bias: bias,
        total,
    })
}

#[cfg(test)]
mod tests;
