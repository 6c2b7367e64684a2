//! The subordinator side of the dislocation measures and the node
//! functional `A`, plus the two windowed pipelines compared against each
//! other.

use crate::error::{domain, ensure, Error, Result};
use crate::exponent::{nu1_constant, pi_star_tail_stable, BranchingMechanism, TruncatedMechanism};
use crate::fragmentation::{assign_cut_times, dislocation_timeline};
use crate::par::par_until;
use crate::sampler::{sample_subordinator_jumps, RngStream, SubordinatorSample};
use crate::tree::{build_with_limits, BuildLimits, BuildOutcome, JumpTree};
use crate::verify::stats::{Accumulator, McEstimate};

/// A draw from `μ` restricted to node masses above `ε`: the node mass `v`,
/// the subordinator on `[0, v]` and the weight `S_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct DislocationDraw {
    pub v: f64,
    pub sample: SubordinatorSample,
    pub weight: f64,
}

fn stable_alpha(mech: &BranchingMechanism) -> Result<f64> {
    mech.stable_alpha()
        .ok_or(Error::Inadmissible("the subordinator side needs a stable mechanism".into()))
}

/// `v ~ π` on `(ε, ∞)` normalised, then the subordinator jumps above `δ` on
/// `[0, v]`. Integrals against `μ|_{v>ε}` are `λ_ε` times sample means.
pub fn sample_mu_truncated(
    mech: &BranchingMechanism,
    epsilon: f64,
    delta: f64,
    rng: &mut RngStream,
) -> Result<DislocationDraw> {
    let alpha = stable_alpha(mech)?;
    ensure("epsilon", epsilon, epsilon > 0.0, "must be positive")?;
    let v = epsilon * rng.uniform_pos().powf(-1.0 / alpha);
    let sample = sample_subordinator_jumps(alpha, v, delta, rng)?;
    Ok(DislocationDraw {
        v,
        weight: sample.total,
        sample,
    })
}

/// A bounded functional of a ranked sequence in `S↓` with a declared
/// support bound on its largest entry.
pub struct SequenceFunctional<'a> {
    f: Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>,
    sup: f64,
    vanishes_above: Option<f64>,
}

impl<'a> SequenceFunctional<'a> {
    /// `f` must satisfy `|f| ≤ sup`, and `f(x) = 0` whenever
    /// `x₁ > vanishes_above` (if given).
    pub fn new<F>(f: F, sup: f64, vanishes_above: Option<f64>) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync + 'a,
    {
        SequenceFunctional {
            f: Box::new(f),
            sup,
            vanishes_above,
        }
    }

    /// `1{x₂ > t}`, which vanishes when `x₁ > 1 − t`.
    pub fn second_exceeds(t: f64) -> SequenceFunctional<'static> {
        SequenceFunctional::new(
            move |x: &[f64]| if x.len() >= 2 && x[1] > t { 1.0 } else { 0.0 },
            1.0,
            Some(1.0 - t),
        )
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Output of [`nu1_functional_stable`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nu1Estimate {
    pub estimate: McEstimate,
    pub constant: f64,
    /// Fraction of draws discarded by the `S₁` cap.
    pub trimmed_fraction: f64,
}

/// Options for [`nu1_functional_stable`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nu1Options {
    /// Subordinator jump cutoff.
    pub delta: f64,
    /// Draws with `S₁` above this are dropped (trimmed estimator).
    pub s1_cap: Option<f64>,
}

impl Default for Nu1Options {
    fn default() -> Self {
        Nu1Options {
            delta: 1e-4,
            s1_cap: None,
        }
    }
}

/// `∫ F dν₁ = const(α) E[S₁ F(ΔS/S₁)]` with `const(α) = α(α−1)Γ((α−1)/α)/Γ(2−α)`.
///
/// `E[S₁] = ∞`, so the estimator only has finite variance when `F`
/// vanishes for sequences whose largest entry is close to 1; functionals
/// without such a bound are rejected unless an `S₁` cap is supplied.
pub fn nu1_functional_stable(
    alpha: f64,
    f: &SequenceFunctional,
    n: u64,
    rng: &mut RngStream,
    opts: Nu1Options,
) -> Result<Nu1Estimate> {
    let constant = nu1_constant(alpha)?;
    if !(f.sup.is_finite() && f.sup >= 0.0) {
        return Err(Error::UnboundedFunctional("functional has no finite bound"));
    }
    let bounded_support = matches!(f.vanishes_above, Some(b) if b < 1.0);
    if !bounded_support && opts.s1_cap.is_none() {
        return Err(Error::UnboundedFunctional(
            "functional does not vanish near x₁ = 1 and no S₁ cap was given; the S₁-weighted mean is infinite",
        ));
    }
    if n == 0 {
        return Err(domain("n", 0.0, "must be positive"));
    }
    let mut acc = Accumulator::default();
    let mut trimmed = 0u64;
    let mut x = Vec::new();
    for _ in 0..n {
        let s = sample_subordinator_jumps(alpha, 1.0, opts.delta, rng)?;
        if opts.s1_cap.is_some_and(|cap| s.total > cap) {
            trimmed += 1;
            acc.push(0.0);
            continue;
        }
        x.clear();
        x.extend(s.jumps.iter().map(|j| j / s.total));
        let fx = f.eval(&x);
        if fx.abs() > f.sup * (1.0 + 1e-12) {
            return Err(Error::UnboundedFunctional("functional exceeded its declared bound"));
        }
        if let (Some(b), Some(&x1)) = (f.vanishes_above, x.first()) {
            if x1 > b && fx != 0.0 {
                return Err(Error::UnboundedFunctional(
                    "functional is non-zero above its declared support bound",
                ));
            }
        }
        acc.push(constant * s.total * fx);
    }
    Ok(Nu1Estimate {
        estimate: acc.estimate(),
        constant,
        trimmed_fraction: trimmed as f64 / n as f64,
    })
}

fn check_functional_args(lambda: f64, p: f64, p_prime: f64) -> Result<()> {
    ensure("lambda", lambda, lambda >= 0.0, "must be non-negative")?;
    ensure("p", p, p > 0.0, "must be positive")?;
    ensure("p_prime", p_prime, p_prime > 0.0, "must be positive")?;
    Ok(())
}

/// Per-tree summand of the node functional:
/// `e^{-λσ} Σ_v Δ_v e^{-p(σ − s_v)} (Σ_{w child of v} s_w e^{-p′ s_w} + Δ_v/c)`
/// with `s_v` the subtree mass of `v`.
pub fn node_functional_tree_value(tree: &JumpTree, lambda: f64, p: f64, p_prime: f64) -> f64 {
    let c = tree.drain_rate();
    let span: Vec<f64> = tree.subtree_deltas().into_iter().map(|s| s / c).collect();
    let sigma = span[0];
    let mut total = 0.0;
    for (i, node) in tree.nodes().iter().enumerate() {
        let inner: f64 = tree
            .children(crate::tree::NodeId(i as u32))
            .map(|w| span[w] * (-p_prime * span[w]).exp())
            .sum::<f64>()
            + node.delta / c;
        total += node.delta * (-p * (sigma - span[i])).exp() * inner;
    }
    (-lambda * sigma).exp() * total
}

/// Monte Carlo estimate of the node functional over a batch of complete
/// unconditioned trees, normalised by the excursion-measure mass `λ_ε/c`.
pub fn node_functional_a(
    trunc: &TruncatedMechanism,
    trees: &[JumpTree],
    lambda: f64,
    p: f64,
    p_prime: f64,
) -> Result<McEstimate> {
    check_functional_args(lambda, p, p_prime)?;
    if trees.is_empty() {
        return Err(domain("trees", 0.0, "need at least one tree"));
    }
    let mut acc = Accumulator::default();
    for t in trees {
        if !t.is_complete() {
            return Err(Error::Numeric("node functional needs complete trees".into()));
        }
        acc.push(node_functional_tree_value(t, lambda, p, p_prime));
    }
    Ok(acc.estimate().scaled(trunc.offspring_rate()))
}

/// Closed form of the node functional for the truncated mechanism:
/// `∫_{(ε,∞)} ℓ² e^{-ℓ u_λ} π(dℓ) / (ψ_ε′(u_{p+λ}) ψ_ε′(u_{p′+λ}))` with
/// `u_y = ψ_ε^{-1}(y)`.
pub fn node_functional_a_closed(
    trunc: &TruncatedMechanism,
    lambda: f64,
    p: f64,
    p_prime: f64,
) -> Result<f64> {
    check_functional_args(lambda, p, p_prime)?;
    let u = trunc.psi_inverse(lambda)?;
    let num = trunc.integrate_above(|l| l * l * (-l * u).exp(), trunc.epsilon())?;
    let d1 = trunc.psi_prime(trunc.psi_inverse(p + lambda)?)?;
    let d2 = trunc.psi_prime(trunc.psi_inverse(p_prime + lambda)?)?;
    Ok(num / (d1 * d2))
}

/// The same closed form for the untruncated mechanism (requires `λ > 0`).
pub fn node_functional_a_continuum(
    mech: &BranchingMechanism,
    lambda: f64,
    p: f64,
    p_prime: f64,
) -> Result<f64> {
    check_functional_args(lambda, p, p_prime)?;
    ensure("lambda", lambda, lambda > 0.0, "must be positive for the continuum value")?;
    let u = mech.psi_inverse(lambda)?;
    let num = mech
        .measure()
        .integrate(|l| l * l * (-l * u).exp(), 0.0, f64::INFINITY)?;
    let d1 = mech.psi_prime(mech.psi_inverse(p + lambda)?)?;
    let d2 = mech.psi_prime(mech.psi_inverse(p_prime + lambda)?)?;
    Ok(num / (d1 * d2))
}

/// Mass window and thresholds shared by both pipelines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitWindow {
    pub r: f64,
    pub rel_window: f64,
    /// A split is significant when its second-largest piece exceeds `eta`
    /// times the parent mass.
    pub eta: f64,
    /// Pieces above `count_fraction` times the parent are counted.
    pub count_fraction: f64,
}

impl SplitWindow {
    pub fn new(r: f64) -> Self {
        SplitWindow {
            r,
            rel_window: 0.1,
            eta: 0.1,
            count_fraction: 0.05,
        }
    }

    pub fn lo(&self) -> f64 {
        self.r * (1.0 - self.rel_window)
    }

    pub fn hi(&self) -> f64 {
        self.r * (1.0 + self.rel_window)
    }

    pub fn contains(&self, m: f64) -> bool {
        m >= self.lo() && m <= self.hi()
    }
}

/// One significant split observed inside the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRecord {
    pub parent_mass: f64,
    /// Largest piece over the parent mass.
    pub largest_fraction: f64,
    pub count_above: u32,
    pub weight: f64,
}

fn record(parent: f64, pieces: &[f64], window: &SplitWindow, weight: f64) -> SplitRecord {
    SplitRecord {
        parent_mass: parent,
        largest_fraction: pieces.first().map_or(0.0, |x| x / parent),
        count_above: pieces.iter().filter(|&&x| x > window.count_fraction * parent).count() as u32,
        weight,
    }
}

/// Tree-side output.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSplits {
    /// First significant split per tree with parent mass in the window.
    pub splits: Vec<SplitRecord>,
    pub trees: u64,
    /// Trees abandoned for exceeding the build caps.
    pub oversize: u64,
    /// Total time the tagged fragment spent with mass in the window.
    pub time_in_window: f64,
    /// All significant splits with parent mass in the window.
    pub significant_in_window: u64,
}

/// Harvests first significant dislocations of the tagged fragment while its
/// mass lies in the window, from independent trees built with `limits`.
pub fn tree_side_splits(
    trunc: &TruncatedMechanism,
    window: &SplitWindow,
    n_events: usize,
    seed: u64,
    limits: BuildLimits,
    max_trees: u64,
) -> Result<TreeSplits> {
    struct One {
        split: Option<SplitRecord>,
        oversize: bool,
        time: f64,
        count: u64,
    }
    let per_tree = |_: u64, rng: &mut RngStream| -> Result<One> {
        let mut out = One {
            split: None,
            oversize: false,
            time: 0.0,
            count: 0,
        };
        let mut tree = match build_with_limits(trunc, rng, limits)? {
            BuildOutcome::Complete(t) => t,
            BuildOutcome::Oversize(_) => {
                out.oversize = true;
                return Ok(out);
            }
        };
        if tree.sigma() < window.lo() {
            return Ok(out);
        }
        assign_cut_times(&mut tree, rng)?;
        let tl = dislocation_timeline(&tree)?;
        let mut prev = 0.0;
        for e in &tl.events {
            if window.contains(e.parent_mass) {
                out.time += e.theta - prev;
                if e.is_significant(window.eta) {
                    out.count += 1;
                    if out.split.is_none() {
                        out.split = Some(record(e.parent_mass, &e.children, window, 1.0));
                    }
                }
            }
            prev = e.theta;
        }
        Ok(out)
    };
    let results = par_until(seed, 4096, max_trees, per_tree, |done| {
        done.iter()
            .filter(|r| matches!(r, Ok(One { split: Some(_), .. })))
            .count()
            >= n_events
    });
    let mut out = TreeSplits {
        splits: Vec::new(),
        trees: 0,
        oversize: 0,
        time_in_window: 0.0,
        significant_in_window: 0,
    };
    for r in results {
        if out.splits.len() >= n_events {
            break;
        }
        let r = r?;
        out.trees += 1;
        out.oversize += r.oversize as u64;
        out.time_in_window += r.time;
        out.significant_in_window += r.count;
        if let Some(s) = r.split {
            out.splits.push(s);
        }
    }
    Ok(out)
}

/// Subordinator-side output.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorSplits {
    /// Draws with `S_v` in the window and a significant second jump,
    /// weighted by `S_v`.
    pub splits: Vec<SplitRecord>,
    pub draws: u64,
    /// Per-draw `S_v 1{window, significant}`, for the rate estimate.
    pub weighted_hits: Accumulator,
}

const SUBORDINATOR_BATCH: u64 = 1 << 15;

/// Draws from `μ|_{v>ε}` until `n_events` land in the window with a
/// significant second jump.
pub fn subordinator_side_splits(
    mech: &BranchingMechanism,
    epsilon: f64,
    delta: f64,
    window: &SplitWindow,
    n_events: usize,
    seed: u64,
    max_draws: u64,
) -> Result<SubordinatorSplits> {
    stable_alpha(mech)?;
    let batches = max_draws.div_ceil(SUBORDINATOR_BATCH);
    let per_batch = |_: u64, rng: &mut RngStream| -> Result<(Vec<(u64, SplitRecord)>, Accumulator)> {
        let mut hits = Vec::new();
        let mut acc = Accumulator::default();
        for k in 0..SUBORDINATOR_BATCH {
            let d = sample_mu_truncated(mech, epsilon, delta, rng)?;
            let s = &d.sample;
            let sig = s.jumps.len() >= 2 && s.jumps[1] > window.eta * s.total;
            if sig && window.contains(s.total) {
                hits.push((k, record(s.total, &s.jumps, window, d.weight)));
                acc.push(d.weight);
            } else {
                acc.push(0.0);
            }
        }
        Ok((hits, acc))
    };
    let results = par_until(seed, 8, batches, per_batch, |done| {
        done.iter()
            .map(|r| r.as_ref().map_or(0, |(h, _)| h.len()))
            .sum::<usize>()
            >= n_events
    });
    let mut out = SubordinatorSplits {
        splits: Vec::new(),
        draws: 0,
        weighted_hits: Accumulator::default(),
    };
    for r in results {
        let (hits, acc) = r?;
        if out.splits.len() + hits.len() <= n_events {
            out.splits.extend(hits.iter().map(|h| h.1));
            out.draws += SUBORDINATOR_BATCH;
            out.weighted_hits.merge(&acc);
            continue;
        }
        // partial batch: keep draws up to the last needed hit
        let need = n_events - out.splits.len();
        if need == 0 {
            break;
        }
        let cut = hits[need - 1].0 + 1;
        out.splits.extend(hits[..need].iter().map(|h| h.1));
        out.draws += cut;
        let mut part = Accumulator::default();
        let kept: Vec<f64> = hits[..need].iter().map(|h| h.1.weight).collect();
        for w in &kept {
            part.push(*w);
        }
        part.n = cut;
        out.weighted_hits.merge(&part);
        break;
    }
    Ok(out)
}

/// Rate `ν_r(significant)` averaged over the window, from subordinator draws:
/// `λ_ε E[S_v 1{…}] / π_*(window)`.
pub fn subordinator_rate(
    mech: &BranchingMechanism,
    epsilon: f64,
    window: &SplitWindow,
    hits: &Accumulator,
) -> Result<McEstimate> {
    let alpha = stable_alpha(mech)?;
    let lambda_eps = mech.truncate(epsilon)?.jump_rate();
    let mass = pi_star_tail_stable(alpha, window.lo())? - pi_star_tail_stable(alpha, window.hi())?;
    Ok(hits.estimate().scaled(lambda_eps / mass))
}
