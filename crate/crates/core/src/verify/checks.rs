//! The named checks. Each one simulates from a truncated mechanism,
//! compares Monte Carlo estimates with a closed form or quadrature value,
//! and returns a [`CheckReport`] whose verdict depends only on the gating
//! rows.
//!
//! Runs are deterministic given the configuration: every check derives its
//! own seed from `CheckConfig::seed`, and tree `i` of a batch always uses
//! stream `i`. Sums are accumulated per fixed-size chunk and merged in
//! chunk order, so results do not depend on the number of workers.

use rayon::prelude::*;

use crate::dislocation::{
    node_functional_a_closed, node_functional_a_continuum, node_functional_tree_value,
    nu1_functional_stable, subordinator_rate, subordinator_side_splits, tree_side_splits,
    Nu1Options, SequenceFunctional, SplitWindow, SubordinatorSplits, TreeSplits,
};
use crate::error::{domain, ensure, Error, Result};
use crate::exponent::{nu1_constant, BranchingMechanism, TruncatedMechanism};
use crate::fragmentation::{
    assign_cut_times, count_boundary, fragments_at, root_component, tagged_mass_at,
};
use crate::sampler::{mix_seed, RngStream};
use crate::tree::{build_conditioned, build_with_limits, BuildLimits, BuildOutcome, DEFAULT_NODE_CAP};
use crate::verify::stats::{
    chi_square, chi_square_survival, ks_two_sample, ks_two_sample_weighted, quantile,
    slope_through_origin, Accumulator, McEstimate, RatioAccumulator,
};
use crate::verify::{CheckReport, CheckRow};

/// Settings shared by all checks. `n` and `refine_n` override each check's
/// own default sample sizes.
#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub mechanism: BranchingMechanism,
    pub epsilon: f64,
    pub theta: f64,
    pub seed: u64,
    pub node_cap: usize,
    pub n: Option<u64>,
    /// Sample size at `ε` and `ε/4` for the refinement rows.
    pub refine_n: Option<u64>,
    /// Skip the refinement rows entirely.
    pub refine: bool,
    pub lambda_grid: Vec<f64>,
    /// p-values must exceed this.
    pub p_threshold: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            mechanism: BranchingMechanism::stable(1.5).expect("valid alpha"),
            epsilon: 1e-2,
            theta: 1.0,
            seed: 7,
            node_cap: DEFAULT_NODE_CAP,
            n: None,
            refine_n: None,
            refine: true,
            lambda_grid: vec![0.5, 1.0, 2.0, 4.0],
            p_threshold: 0.01,
        }
    }
}

impl CheckConfig {
    fn n_or(&self, default: u64) -> u64 {
        self.n.unwrap_or(default)
    }

    fn refine_n_or(&self, default: u64) -> u64 {
        self.refine_n.unwrap_or(default)
    }

    fn seed_for(&self, tag: &str) -> u64 {
        let h = tag
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        mix_seed(self.seed, h)
    }

    fn truncated(&self, factor: f64) -> Result<TruncatedMechanism> {
        self.mechanism.truncate(self.epsilon * factor)
    }

    fn limits(&self, mass_cap: f64) -> BuildLimits {
        BuildLimits::nodes(self.node_cap).with_mass_cap(mass_cap)
    }

    fn validate(&self) -> Result<()> {
        ensure("epsilon", self.epsilon, self.epsilon > 0.0, "must be positive")?;
        ensure("theta", self.theta, self.theta > 0.0 && self.theta.is_finite(), "must be positive")?;
        ensure("p_threshold", self.p_threshold, self.p_threshold > 0.0 && self.p_threshold < 1.0, "must lie in (0, 1)")?;
        if self.node_cap == 0 {
            return Err(domain("node_cap", 0.0, "must be at least 1"));
        }
        if self.n == Some(0) {
            return Err(domain("n", 0.0, "must be positive"));
        }
        for &l in &self.lambda_grid {
            ensure("lambda", l, l > 0.0 && l.is_finite(), "must be positive")?;
        }
        Ok(())
    }
}

/// Names accepted by [`run_check`], in suite order.
pub const CHECK_NAMES: [&str; 10] = [
    "excursion-length",
    "joint-law",
    "marking",
    "pruning",
    "boundary-intensity",
    "mass",
    "two-pipeline",
    "node-functional",
    "self-similarity",
    "reweighting",
];

/// Runs one named check.
pub fn run_check(name: &str, cfg: &CheckConfig) -> Result<CheckReport> {
    cfg.validate()?;
    match name {
        "excursion-length" => check_excursion_length(cfg),
        "joint-law" => check_joint_law(cfg, &JointLawConfig::default()),
        "marking" => check_marking(cfg),
        "pruning" => check_pruning(cfg),
        "boundary-intensity" => check_boundary_intensity(cfg, 0.1),
        "mass" => check_mass(cfg),
        "two-pipeline" => check_two_pipeline(cfg, &TwoPipelineConfig::default()),
        "node-functional" => check_node_functional(cfg, 1.0, 1.0, 1.0),
        "self-similarity" => check_self_similarity(cfg, &SelfSimilarityConfig::default()),
        "reweighting" => check_reweighting(cfg),
        other => Err(Error::Numeric(format!(
            "unknown check `{other}`; expected one of {}",
            CHECK_NAMES.join(", ")
        ))),
    }
}

/// p-value threshold for a run of `m` p-value rows: the nominal threshold,
/// lowered so that `m` independent tests fail together with probability at
/// most 5% under the null.
pub fn bonferroni_floor(nominal: f64, m: usize) -> f64 {
    nominal.min(0.05 / m.max(1) as f64)
}

/// Number of p-value rows each check emits, for [`bonferroni_floor`].
pub fn p_value_rows(name: &str) -> usize {
    match name {
        "marking" => 2,
        "pruning" | "two-pipeline" | "reweighting" => 1,
        "self-similarity" => 1,
        _ => 0,
    }
}

const CHUNK: u64 = 4096;

/// Per-item sums over `n` items in fixed chunks. `f` fills one slot per
/// accumulated quantity.
fn mc_sums<F>(seed: u64, n: u64, k: usize, f: F) -> Result<Vec<Accumulator>>
where
    F: Fn(u64, &mut RngStream, &mut [f64]) -> Result<()> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Result<Vec<Accumulator>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Accumulator::default(); k];
            let mut buf = vec![0.0; k];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let mut rng = RngStream::new(seed, i);
                buf.iter_mut().for_each(|b| *b = 0.0);
                f(i, &mut rng, &mut buf)?;
                for (a, &x) in acc.iter_mut().zip(&buf) {
                    a.push(x);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![Accumulator::default(); k];
    for p in parts {
        for (t, a) in total.iter_mut().zip(&p?) {
            t.merge(a);
        }
    }
    Ok(total)
}

/// Per-item outputs in index order.
fn mc_collect<T, F>(seed: u64, n: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut RngStream) -> Result<T> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| f(i, &mut RngStream::new(seed, i)))
        .collect()
}

fn rel_tol_row(
    label: &str,
    source: &str,
    target: f64,
    est: &McEstimate,
    rel: f64,
) -> CheckRow {
    let tol = 3.0 * est.std_error + rel * target.abs() + est.bias_note.unwrap_or(0.0);
    CheckRow::within(label, source, target, est.mean, est.std_error, tol)
}

// ---------------------------------------------------------------------------
// excursion length

/// `K(1 − e^{-λσ})` per tree for every λ in the grid, as (lower, upper)
/// pairs: partial trees only bound `σ` from below.
fn excursion_length_sums(
    trunc: &TruncatedMechanism,
    grid: &[f64],
    n: u64,
    seed: u64,
    limits: BuildLimits,
) -> Result<(Vec<McEstimate>, u64)> {
    let k = grid.len();
    let kk = trunc.offspring_rate();
    // slots: midpoint value per λ, half-gap per λ, unresolved flag
    let sums = mc_sums(seed, n, 2 * k + 1, |_, rng, out| {
        let outcome = build_with_limits(trunc, rng, limits)?;
        let s = outcome.tree().sigma();
        let partial = outcome.is_oversize();
        let mut unresolved = false;
        for (j, &l) in grid.iter().enumerate() {
            let e = (-l * s).exp();
            if partial {
                // e^{-λσ} ∈ [0, e^{-λ s}]
                out[j] = kk * (1.0 - e / 2.0);
                out[k + j] = kk * e / 2.0;
                unresolved |= e > 1e-12;
            } else {
                out[j] = kk * (1.0 - e);
            }
        }
        out[2 * k] = unresolved as u8 as f64;
        Ok(())
    })?;
    let est = (0..k)
        .map(|j| sums[j].estimate().with_bias(sums[k + j].mean()))
        .collect();
    Ok((est, sums[2 * k].sum as u64))
}

/// Excursion-length law: `K(1 − E e^{-λσ})` against `ψ_ε^{-1}(λ) − λ/c` on
/// the λ grid, and the ε-refinement of the residual against `ψ^{-1}(λ)`.
pub fn check_excursion_length(cfg: &CheckConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let mut rep = CheckReport::new("excursion-length");
    let trunc = cfg.truncated(1.0)?;
    let grid = &cfg.lambda_grid;
    if grid.is_empty() {
        return Err(domain("lambda_grid", 0.0, "must not be empty"));
    }
    let lmin = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let limits = cfg.limits(60.0 / lmin);
    let n = cfg.n_or(20_000);
    let (est, unresolved) = excursion_length_sums(&trunc, grid, n, cfg.seed_for("excursion-length"), limits)?;
    for (&l, e) in grid.iter().zip(&est) {
        let target = trunc.excursion_laplace_target(l)?;
        rep.row(rel_tol_row(
            &format!("lambda={l}"),
            "psi_eps^-1(lambda) - lambda/c",
            target,
            e,
            0.02,
        ));
    }
    rep.note(format!("{n} trees, mass cap {:.1}, {unresolved} unresolved partial trees", 60.0 / lmin));

    if cfg.refine {
        let rn = cfg.refine_n_or(1_000_000);
        let mut residuals = Vec::new();
        for (factor, tag) in [(1.0, "excursion-length/eps"), (0.25, "excursion-length/eps4")] {
            let t = cfg.truncated(factor)?;
            let (est, _) = excursion_length_sums(&t, grid, rn, cfg.seed_for(tag), limits)?;
            let mut r = 0.0;
            let mut se2 = 0.0;
            let mut det = 0.0;
            for (&l, e) in grid.iter().zip(&est) {
                let cont = cfg.mechanism.psi_inverse(l)?;
                r += (e.mean - cont).abs();
                se2 += e.std_error * e.std_error;
                det += (t.excursion_laplace_target(l)? - cont).abs();
            }
            residuals.push((r, se2.sqrt(), det));
        }
        let (r1, s1, d1) = residuals[0];
        let (r4, s4, d4) = residuals[1];
        rep.row(
            CheckRow::above("residual shrink eps -> eps/4 (MC)", "sum |MC - psi^-1(lambda)|", 1.5, r1 / r4)
                .with_std_error((r1 / r4) * ((s1 / r1).powi(2) + (s4 / r4).powi(2)).sqrt()),
        );
        rep.row(CheckRow::above("residual shrink eps -> eps/4 (exact)", "truncated closed form", 1.5, d1 / d4).informational());
        rep.note(format!("refinement: {rn} trees per level; residual {r1:.4} -> {r4:.4}"));
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// joint law of (σ, σ̃)

/// Parameters `(θ, γ, κ)` of the joint Laplace functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLawConfig {
    pub gamma: f64,
    pub kappa: f64,
}

impl Default for JointLawConfig {
    fn default() -> Self {
        JointLawConfig {
            gamma: 0.0,
            kappa: 1.0,
        }
    }
}

fn check_joint_args(theta: f64, gamma: f64, kappa: f64) -> Result<()> {
    ensure("theta", theta, theta >= 0.0, "must be non-negative")?;
    ensure("gamma", gamma, gamma >= 0.0, "must be non-negative")?;
    ensure("kappa", kappa, kappa >= 0.0, "must be non-negative")?;
    if theta == 0.0 && gamma == 0.0 && kappa == 0.0 {
        return Err(domain("kappa", kappa, "theta, gamma and kappa cannot all vanish"));
    }
    Ok(())
}

/// The root `v ≥ 0` of `ψ(v + θ) = κ + ψ(γ + θ)`.
pub fn joint_law_continuum(mech: &BranchingMechanism, theta: f64, gamma: f64, kappa: f64) -> Result<f64> {
    check_joint_args(theta, gamma, kappa)?;
    if kappa == 0.0 {
        return Ok(gamma);
    }
    Ok((mech.psi_inverse(kappa + mech.psi(gamma + theta)?)? - theta).max(0.0))
}

/// Truncated value of `(λ_ε/c) E[1 − e^{-ψ_ε(γ)σ − κσ̃}]`:
/// `w − (ψ_ε(γ) + κ)/c` with `ψ_ε(w + θ) = κ + ψ_ε(γ + θ)`.
pub fn joint_law_truncated(trunc: &TruncatedMechanism, theta: f64, gamma: f64, kappa: f64) -> Result<f64> {
    check_joint_args(theta, gamma, kappa)?;
    let w = if kappa == 0.0 {
        gamma
    } else {
        (trunc.psi_inverse(kappa + trunc.psi(gamma + theta)?)? - theta).max(0.0)
    };
    Ok(w - (trunc.psi(gamma)? + kappa) / trunc.drain_rate())
}

fn joint_law_sums(
    trunc: &TruncatedMechanism,
    theta: f64,
    j: &JointLawConfig,
    n: u64,
    seed: u64,
    limits: BuildLimits,
) -> Result<(McEstimate, u64)> {
    let kk = trunc.offspring_rate();
    let pg = trunc.psi(j.gamma)?;
    let c = trunc.drain_rate();
    let sums = mc_sums(seed, n, 3, |_, rng, out| {
        let outcome = build_with_limits(trunc, rng, limits)?;
        let partial = outcome.is_oversize();
        let mut t = outcome.into_tree();
        assign_cut_times(&mut t, rng)?;
        let comp = root_component(&t, theta)?;
        let st = comp.delta_sum / c;
        // exponent known exactly or only from below
        let exact_sigma = !partial || pg == 0.0;
        let lo = pg * t.sigma() + j.kappa * st;
        let (v, gap) = if exact_sigma && comp.complete {
            (1.0 - (-lo).exp(), 0.0)
        } else {
            let e = (-lo).exp();
            (1.0 - e / 2.0, e / 2.0)
        };
        out[0] = kk * v;
        out[1] = kk * gap;
        out[2] = (gap > 5e-13) as u8 as f64;
        Ok(())
    })?;
    Ok((sums[0].estimate().with_bias(sums[1].mean()), sums[2].sum as u64))
}

/// Joint law of excursion length and tagged mass at `θ`.
pub fn check_joint_law(cfg: &CheckConfig, j: &JointLawConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let mut rep = CheckReport::new("joint-law");
    let theta = cfg.theta;
    let trunc = cfg.truncated(1.0)?;
    let cap = if j.gamma > 0.0 {
        60.0 / trunc.psi(j.gamma)?
    } else {
        100.0
    };
    let limits = cfg.limits(cap);
    let n = cfg.n_or(20_000);
    let (est, unresolved) = joint_law_sums(&trunc, theta, j, n, cfg.seed_for("joint-law"), limits)?;
    let target = joint_law_truncated(&trunc, theta, j.gamma, j.kappa)?;
    let cont = joint_law_continuum(&cfg.mechanism, theta, j.gamma, j.kappa)?;
    rep.row(rel_tol_row(
        &format!("theta={theta} gamma={} kappa={}", j.gamma, j.kappa),
        "w - (psi_eps(gamma)+kappa)/c",
        target,
        &est,
        0.03,
    ));
    // The truncated law sits a fixed distance from the continuum root; at
    // coarse ε this row fails for every sample size.
    rep.row(rel_tol_row("continuum root", "psi(v+theta) = kappa + psi(gamma+theta)", cont, &est, 0.03));
    rep.note(format!("{n} trees, mass cap {cap:.1}, {unresolved} unresolved partial trees"));
    rep.note(format!("truncated closed form {target:.5}, continuum root {cont:.5}"));
    if j.gamma == 0.0 {
        rep.note("gamma = 0: the target is the inverse of the tilted exponent at kappa");
    }
    if cfg.refine {
        let rn = cfg.refine_n_or(1_000_000);
        let mut res = Vec::new();
        for (factor, tag) in [(1.0, "joint-law/eps"), (0.25, "joint-law/eps4")] {
            let t = cfg.truncated(factor)?;
            let (e, _) = joint_law_sums(&t, theta, j, rn, cfg.seed_for(tag), limits)?;
            let det = (joint_law_truncated(&t, theta, j.gamma, j.kappa)? - cont).abs();
            res.push(((e.mean - cont).abs(), e.std_error, det));
        }
        let ratio = res[0].0 / res[1].0;
        let se = ratio * ((res[0].1 / res[0].0).powi(2) + (res[1].1 / res[1].0).powi(2)).sqrt();
        rep.row(CheckRow::above("residual shrink eps -> eps/4 (MC)", "|MC - continuum root|", 1.5, ratio).with_std_error(se));
        rep.row(CheckRow::above("residual shrink eps -> eps/4 (exact)", "truncated closed form", 1.5, res[0].2 / res[1].2).informational());
        rep.note(format!("refinement: {rn} trees per level; residual {:.4} -> {:.4}", res[0].0, res[1].0));
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// marking law

/// Bins in `ℓ` from `ε` upward: `edges[i]..edges[i+1]`, the last one open.
fn log_bins(eps: f64, count: usize, step: f64) -> Vec<f64> {
    let mut e: Vec<f64> = (0..count).map(|i| eps * step.powi(i as i32)).collect();
    e.push(f64::INFINITY);
    e
}

fn bin_of(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e <= x).saturating_sub(1).min(edges.len() - 2)
}

/// Node survival given mass and the law of cut-node masses.
pub fn check_marking(cfg: &CheckConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let mut rep = CheckReport::new("marking");
    let theta = cfg.theta;
    let trunc = cfg.truncated(1.0)?;
    let eps = trunc.epsilon();
    let target_nodes = cfg.n_or(200_000);
    // ten bins spanning a factor 10^{0.3} each; the top ones are merged
    // below so that every cell has a reasonable expected count
    let edges = log_bins(eps, 10, 10f64.powf(0.3));
    let nb = edges.len() - 1;
    let limits = cfg.limits(20.0);
    let seed = cfg.seed_for("marking");
    // nodes, survivors and cut counts per bin, per tree
    let mut nodes = vec![0.0; nb];
    let mut alive = vec![0.0; nb];
    let mut trees = 0u64;
    let mut round = 0u64;
    while nodes.iter().sum::<f64>() < target_nodes as f64 {
        let start = round * CHUNK * 4;
        let out = mc_collect(seed, CHUNK * 4, |i, _| {
            let mut rng = RngStream::new(seed, start + i);
            let mut t = build_with_limits(&trunc, &mut rng, limits)?.into_tree();
            assign_cut_times(&mut t, &mut rng)?;
            let times = t.cut_times().expect("assigned");
            let mut n = vec![0u32; nb];
            let mut a = vec![0u32; nb];
            for (node, &tv) in t.nodes().iter().zip(times) {
                let b = bin_of(&edges, node.delta);
                n[b] += 1;
                a[b] += (tv > theta) as u32;
            }
            Ok((n, a))
        })?;
        for (n, a) in out {
            trees += 1;
            for b in 0..nb {
                nodes[b] += n[b] as f64;
                alive[b] += a[b] as f64;
            }
            if nodes.iter().sum::<f64>() >= target_nodes as f64 {
                break;
            }
        }
        round += 1;
    }
    let meas = trunc.measure();
    let mut p = Vec::with_capacity(nb);
    let mut q = Vec::with_capacity(nb);
    for b in 0..nb {
        let (lo, hi) = (edges[b], edges[b + 1]);
        let mass = meas.integrate(|_| 1.0, lo, hi)?;
        let surv = meas.integrate(|l| (-theta * l).exp(), lo, hi)?;
        p.push(surv / mass);
        q.push(mass - surv);
    }
    // merge from the top until every cell expects ≥ 5 of each outcome
    let mut groups: Vec<(f64, f64, f64, f64)> = Vec::new(); // n, alive, expected alive, expected cut mass
    for b in 0..nb {
        groups.push((nodes[b], alive[b], nodes[b] * p[b], q[b]));
    }
    while groups.len() > 2 {
        let g = groups[groups.len() - 1];
        let ok = g.2 >= 5.0 && g.0 - g.2 >= 5.0;
        if ok {
            break;
        }
        groups.pop();
        let last = groups.last_mut().expect("non-empty");
        last.0 += g.0;
        last.1 += g.1;
        last.2 += g.2;
        last.3 += g.3;
    }
    let mut stat = 0.0;
    for g in &groups {
        let pb = g.2 / g.0;
        stat += (g.1 - g.2).powi(2) / (g.0 * pb * (1.0 - pb));
    }
    let df = groups.len() as f64;
    let p_surv = chi_square_survival(stat, df);
    rep.row(CheckRow::above(
        format!("survival by mass ({} bins, chi2 {stat:.2})", groups.len()),
        "P(uncut | mass) = exp(-theta l)",
        cfg.p_threshold,
        p_surv,
    ));
    // cut-node masses against (1 − e^{-θℓ})π on the same bins
    let cut: Vec<f64> = (0..nb).map(|b| nodes[b] - alive[b]).collect();
    let total_cut: f64 = cut.iter().sum();
    let total_q: f64 = q.iter().sum();
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    for b in 0..nb {
        obs.push(cut[b]);
        exp.push(q[b]);
    }
    while obs.len() > 2 && exp[exp.len() - 1] / total_q * total_cut < 5.0 {
        let o = obs.pop().expect("non-empty");
        let e = exp.pop().expect("non-empty");
        *obs.last_mut().expect("non-empty") += o;
        *exp.last_mut().expect("non-empty") += e;
    }
    let chi = chi_square(&obs, &exp);
    rep.row(CheckRow::above(
        format!("cut-node mass histogram ({} bins, chi2 {:.2})", obs.len(), chi.statistic),
        "(1 - exp(-theta l)) pi_eps(dl)",
        cfg.p_threshold,
        chi.p_value,
    ));
    rep.note(format!("{} nodes from {trees} trees (mass cap 20)", nodes.iter().sum::<f64>()));
    Ok(rep)
}

// ---------------------------------------------------------------------------
// pruning

/// Tagged mass of ψ-trees whose root survives against the length of trees
/// of the tilted truncated mechanism.
pub fn check_pruning(cfg: &CheckConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let mut rep = CheckReport::new("pruning");
    let theta = cfg.theta;
    let trunc = cfg.truncated(1.0)?;
    let tilted = trunc.tilt(theta)?;
    let n = cfg.n_or(10_000);
    let cap = 50.0;
    let limits = cfg.limits(cap);
    let c = trunc.drain_rate();
    // pruned side: stream i until n trees with surviving root
    let seed = cfg.seed_for("pruning/pruned");
    let mut pruned = Vec::with_capacity(n as usize);
    let mut unresolved = 0u64;
    let mut tried = 0u64;
    while (pruned.len() as u64) < n {
        let start = tried;
        let batch = (n - pruned.len() as u64).max(1024) * 2;
        let out = mc_collect(seed, batch, |i, _| {
            let mut rng = RngStream::new(seed, start + i);
            let mut t = build_with_limits(&trunc, &mut rng, limits)?.into_tree();
            assign_cut_times(&mut t, &mut rng)?;
            let comp = root_component(&t, theta)?;
            if comp.nodes.is_empty() {
                return Ok(None);
            }
            let m = comp.delta_sum / c;
            Ok(Some(if comp.complete {
                Some(m.min(cap))
            } else if m >= cap {
                Some(cap)
            } else {
                None
            }))
        })?;
        tried += batch;
        for o in out.into_iter().flatten() {
            if pruned.len() as u64 >= n {
                break;
            }
            match o {
                Some(m) => pruned.push(m),
                None => unresolved += 1,
            }
        }
    }
    let direct: Vec<f64> = mc_collect(cfg.seed_for("pruning/tilted"), n, |_, rng| {
        let o = build_with_limits(&tilted, rng, limits)?;
        Ok(o.tree().sigma().min(cap))
    })?;
    let ks = ks_two_sample(&pruned, &direct);
    rep.row(CheckRow::above(
        format!("KS pruned vs tilted (D = {:.4})", ks.statistic),
        "tilted truncated mechanism",
        cfg.p_threshold,
        ks.p_value,
    ));
    rep.note(format!(
        "{n} per side, values censored at {cap}; {unresolved} pruned trees dropped as unresolved"
    ));
    Ok(rep)
}

// ---------------------------------------------------------------------------
// boundary intensity

/// Boundary cuts of mass above `a` against the tagged mass: the slope of a
/// regression through the origin equals `∫_{(a,∞)} (1 − e^{-θℓ}) π(dℓ)`.
pub fn check_boundary_intensity(cfg: &CheckConfig, a: f64) -> Result<CheckReport> {
    cfg.validate()?;
    let mut rep = CheckReport::new("boundary-intensity");
    let theta = cfg.theta;
    let trunc = cfg.truncated(1.0)?;
    if !(a > trunc.epsilon()) {
        return Err(domain("a", a, "must exceed epsilon"));
    }
    let n = cfg.n_or(20_000);
    let limits = cfg.limits(200.0);
    let c = trunc.drain_rate();
    let out: Vec<Option<(f64, f64)>> = mc_collect(cfg.seed_for("boundary-intensity"), n, |_, rng| {
        let mut t = build_with_limits(&trunc, rng, limits)?.into_tree();
        assign_cut_times(&mut t, rng)?;
        let comp = root_component(&t, theta)?;
        if !comp.complete {
            return Ok(None);
        }
        let count = count_boundary(&t, &comp, theta, a) as f64;
        Ok(Some((comp.delta_sum / c, count)))
    })?;
    let dropped = out.iter().filter(|o| o.is_none()).count();
    let (xs, ys): (Vec<f64>, Vec<f64>) = out.into_iter().flatten().unzip();
    let slope = slope_through_origin(&xs, &ys);
    let target = trunc.mark_intensity(theta, a)?;
    rep.row(CheckRow::within(
        format!("slope at a={a}"),
        "int_(a,inf) (1 - exp(-theta l)) pi(dl)",
        target,
        slope.mean,
        slope.std_error,
        3.0 * slope.std_error,
    ));
    rep.note(format!("{n} trees, {dropped} with an unresolved tagged fragment dropped"));
    Ok(rep)
}

// ---------------------------------------------------------------------------
// mass conservation and dust

fn dust_ratio(trunc: &TruncatedMechanism, theta: f64, n: u64, seed: u64, limits: BuildLimits) -> Result<(McEstimate, f64)> {
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Result<(RatioAccumulator, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut acc = RatioAccumulator::default();
            let mut worst: f64 = 0.0;
            for i in ch * CHUNK..((ch + 1) * CHUNK).min(n) {
                let mut rng = RngStream::new(seed, i);
                let mut t = build_with_limits(trunc, &mut rng, limits)?.into_tree();
                assign_cut_times(&mut t, &mut rng)?;
                let snap = fragments_at(&t, theta)?;
                worst = worst.max(snap.conservation_error());
                for th in [0.1 * theta, 0.5 * theta, 2.0 * theta] {
                    worst = worst.max(fragments_at(&t, th)?.conservation_error());
                }
                acc.push(snap.dust, snap.sigma);
            }
            Ok((acc, worst))
        })
        .collect();
    let mut acc = RatioAccumulator::default();
    let mut worst: f64 = 0.0;
    for p in parts {
        let (a, w) = p?;
        acc.merge(&a);
        worst = worst.max(w);
    }
    Ok((acc.estimate(), worst))
}

/// Conservation on every snapshot, the dust fraction and its decrease
/// from `ε` to `ε/4`.
pub fn check_mass(cfg: &CheckConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let mut rep = CheckReport::new("mass");
    let theta = cfg.theta;
    let n = cfg.n_or(200_000);
    let limits = cfg.limits(50.0);
    let t1 = cfg.truncated(1.0)?;
    let (r1, worst1) = dust_ratio(&t1, theta, n, cfg.seed_for("mass/eps"), limits)?;
    let pred1 = t1.dust_fraction(theta)?;
    rep.row(CheckRow::at_most("conservation (max relative error)", "sum masses + dust = sigma", 1e-9, worst1));
    rep.row(CheckRow::within(
        "E[dust]/E[sigma]",
        "int l (1 - exp(-theta l)) pi_eps(dl) / m_eps",
        pred1,
        r1.mean,
        r1.std_error,
        3.0 * r1.std_error,
    ));
    if cfg.refine {
        let t4 = cfg.truncated(0.25)?;
        let (r4, worst4) = dust_ratio(&t4, theta, n, cfg.seed_for("mass/eps4"), limits)?;
        let pred4 = t4.dust_fraction(theta)?;
        rep.row(CheckRow::at_most("conservation at eps/4", "sum masses + dust = sigma", 1e-9, worst4));
        let predicted = pred1 / pred4;
        let mc = r1.mean / r4.mean;
        let se = mc * ((r1.std_error / r1.mean).powi(2) + (r4.std_error / r4.mean).powi(2)).sqrt();
        rep.row(
            CheckRow::within("dust decrease eps -> eps/4", "ratio of quadrature predictions", predicted, mc, se, 0.1 * predicted),
        );
    }
    rep.note(format!("{n} trees per level, partial trees included (mass cap 50)"));
    Ok(rep)
}

// ---------------------------------------------------------------------------
// two pipelines

/// Window and sizes of the two-pipeline comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPipelineConfig {
    pub r: f64,
    /// Subordinator jump cutoff relative to `r`.
    pub delta_rel: f64,
    pub n_events: usize,
}

impl Default for TwoPipelineConfig {
    fn default() -> Self {
        TwoPipelineConfig {
            r: 1.0,
            delta_rel: 1e-4,
            n_events: 2_000,
        }
    }
}

/// First significant dislocations of the tagged fragment in a mass window
/// against `S_v`-weighted subordinator draws conditioned on the same window.
pub fn check_two_pipeline(cfg: &CheckConfig, p: &TwoPipelineConfig) -> Result<CheckReport> {
    let (tree, sub) = two_pipeline_samples(cfg, p)?;
    two_pipeline_report(cfg, p, &tree, &sub)
}

/// Both samples of the two-pipeline comparison.
pub fn two_pipeline_samples(cfg: &CheckConfig, p: &TwoPipelineConfig) -> Result<(TreeSplits, SubordinatorSplits)> {
    cfg.validate()?;
    ensure("r", p.r, p.r > 0.0 && p.r.is_finite(), "must be positive")?;
    ensure("delta_rel", p.delta_rel, p.delta_rel > 0.0, "must be positive")?;
    let trunc = cfg.truncated(1.0)?;
    let window = SplitWindow::new(p.r);
    let n_events = cfg.n.map_or(p.n_events, |n| n as usize);
    let limits = cfg.limits(8.0 * p.r);
    let tree = tree_side_splits(&trunc, &window, n_events, cfg.seed_for("two-pipeline/tree"), limits, 1 << 34)?;
    let sub = subordinator_side_splits(
        &cfg.mechanism,
        cfg.epsilon,
        p.delta_rel * p.r,
        &window,
        n_events,
        cfg.seed_for("two-pipeline/subordinator"),
        1 << 40,
    )?;
    if tree.splits.len() < n_events || sub.splits.len() < n_events {
        return Err(Error::Numeric("two-pipeline: not enough events within the draw limits".into()));
    }
    Ok((tree, sub))
}

/// Report for samples from [`two_pipeline_samples`].
pub fn two_pipeline_report(
    cfg: &CheckConfig,
    p: &TwoPipelineConfig,
    tree: &TreeSplits,
    sub: &SubordinatorSplits,
) -> Result<CheckReport> {
    let mut rep = CheckReport::new("two-pipeline");
    let window = SplitWindow::new(p.r);
    let xa: Vec<f64> = tree.splits.iter().map(|s| s.largest_fraction).collect();
    let wa = vec![1.0; xa.len()];
    let xb: Vec<f64> = sub.splits.iter().map(|s| s.largest_fraction).collect();
    let wb: Vec<f64> = sub.splits.iter().map(|s| s.weight).collect();
    let ks = ks_two_sample_weighted(&xa, &wa, &xb, &wb);
    rep.row(CheckRow::above(
        format!("KS largest piece / parent (D = {:.4})", ks.statistic),
        "S_v-weighted subordinator jumps",
        cfg.p_threshold,
        ks.p_value,
    ));
    let ca = McEstimate::from_samples(&tree.splits.iter().map(|s| s.count_above as f64).collect::<Vec<_>>());
    let mut rb = RatioAccumulator::default();
    for s in &sub.splits {
        rb.push(s.weight * s.count_above as f64, s.weight);
    }
    let cb = rb.estimate();
    let se = (ca.std_error.powi(2) + cb.std_error.powi(2)).sqrt();
    rep.row(CheckRow::within(
        format!("E[#pieces > {}r]", window.count_fraction),
        "S_v-weighted subordinator mean",
        cb.mean,
        ca.mean,
        se,
        3.0 * se,
    ));
    // rate of significant splits per unit time at mass ≈ r
    let tree_rate = tree.significant_in_window as f64 / tree.time_in_window;
    let tree_rate_se = (tree.significant_in_window as f64).sqrt() / tree.time_in_window;
    let sub_rate = subordinator_rate(&cfg.mechanism, cfg.epsilon, &window, &sub.weighted_hits)?;
    rep.row(
        CheckRow::within(
            "significant split rate",
            "lambda_eps E[S_v 1{window, significant}] / pi_*(window)",
            sub_rate.mean,
            tree_rate,
            tree_rate_se,
            3.0 * (tree_rate_se.powi(2) + sub_rate.std_error.powi(2)).sqrt(),
        )
        .informational(),
    );
    rep.note(format!(
        "r = {}, window ±{}%, eta = {}; {} trees ({} oversize), {} subordinator draws",
        p.r,
        window.rel_window * 100.0,
        window.eta,
        tree.trees,
        tree.oversize,
        sub.draws
    ));
    Ok(rep)
}

// ---------------------------------------------------------------------------
// node functional

fn node_functional_sums(
    trunc: &TruncatedMechanism,
    lambda: f64,
    p: f64,
    p_primes: &[f64],
    n: u64,
    seed: u64,
    limits: BuildLimits,
) -> Result<Vec<McEstimate>> {
    let k = p_primes.len();
    let kk = trunc.offspring_rate();
    let c = trunc.drain_rate();
    let sums = mc_sums(seed, n, 2 * k, |_, rng, out| {
        let o = build_with_limits(trunc, rng, limits)?;
        if o.is_oversize() {
            // the summand is at most c σ² e^{-λσ}, decreasing beyond 2/λ
            let s = o.tree().sigma().max(2.0 / lambda);
            let bound = c * s * s * (-lambda * s).exp();
            for j in 0..k {
                out[j] = kk * bound / 2.0;
                out[k + j] = kk * bound / 2.0;
            }
            return Ok(());
        }
        let t = o.into_tree();
        for (j, &pp) in p_primes.iter().enumerate() {
            out[j] = kk * node_functional_tree_value(&t, lambda, p, pp);
        }
        Ok(())
    })?;
    Ok((0..k).map(|j| sums[j].estimate().with_bias(sums[k + j].mean())).collect())
}

/// Node functional: Monte Carlo against the truncated closed form, for
/// `p′` and two larger values, with the residual against the continuum.
pub fn check_node_functional(cfg: &CheckConfig, lambda: f64, p: f64, p_prime: f64) -> Result<CheckReport> {
    cfg.validate()?;
    ensure("lambda", lambda, lambda > 0.0, "must be positive")?;
    let mut rep = CheckReport::new("node-functional");
    let trunc = cfg.truncated(1.0)?;
    let n = cfg.n_or(20_000);
    let limits = cfg.limits(60.0 / lambda);
    let pps = [p_prime, 4.0 * p_prime, 16.0 * p_prime];
    let est = node_functional_sums(&trunc, lambda, p, &pps, n, cfg.seed_for("node-functional"), limits)?;
    for (&pp, e) in pps.iter().zip(&est) {
        let closed = node_functional_a_closed(&trunc, lambda, p, pp)?;
        rep.row(rel_tol_row(
            &format!("lambda={lambda} p={p} p'={pp}"),
            "truncated closed form",
            closed,
            e,
            0.03,
        ));
    }
    let cont = node_functional_a_continuum(&cfg.mechanism, lambda, p, p_prime)?;
    if cfg.refine {
        // the residual is a few parts in a thousand, so the sample at ε/4,
        // whose variance is about four times larger, is four times bigger
        let rn = cfg.refine_n_or(4_000_000);
        let mut res = Vec::new();
        for (factor, size, tag) in [(1.0, rn, "node-functional/eps"), (0.25, 4 * rn, "node-functional/eps4")] {
            let t = cfg.truncated(factor)?;
            let e = node_functional_sums(&t, lambda, p, &[p_prime], size, cfg.seed_for(tag), limits)?;
            let det = (node_functional_a_closed(&t, lambda, p, p_prime)? - cont).abs();
            res.push(((e[0].mean - cont).abs(), e[0].std_error, det));
        }
        let ratio = res[0].0 / res[1].0;
        let se = ratio * ((res[0].1 / res[0].0).powi(2) + (res[1].1 / res[1].0).powi(2)).sqrt();
        rep.row(CheckRow::above("residual shrink eps -> eps/4 (MC)", "|MC - continuum closed form|", 1.0, ratio).with_std_error(se));
        rep.row(CheckRow::above("residual shrink eps -> eps/4 (exact)", "truncated closed form", 1.0, res[0].2 / res[1].2).informational());
        rep.note(format!("refinement: {rn} and {} trees; residual {:.5} -> {:.5}", 4 * rn, res[0].0, res[1].0));
    }
    rep.note(format!("{n} trees, continuum value {cont:.5}"));
    Ok(rep)
}

// ---------------------------------------------------------------------------
// self-similarity

/// Masses, times and sizes of the self-similarity comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfSimilarityConfig {
    pub r: f64,
    pub rel_window: f64,
    pub n: u64,
    /// Draws per seed for the `ν₁` estimator.
    pub nu1_n: u64,
}

impl Default for SelfSimilarityConfig {
    fn default() -> Self {
        SelfSimilarityConfig {
            r: 0.5,
            rel_window: 0.05,
            n: 2_000,
            nu1_n: 100_000,
        }
    }
}

/// Largest-fragment fraction at `(r, θ)` against `(1, r^{1/α} θ)`, plus the
/// `ν₁` constant and seed consistency of its estimator.
pub fn check_self_similarity(cfg: &CheckConfig, s: &SelfSimilarityConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let alpha = cfg
        .mechanism
        .stable_alpha()
        .ok_or(Error::Inadmissible("self-similarity needs a stable mechanism".into()))?;
    let mut rep = CheckReport::new("self-similarity");
    let trunc = cfg.truncated(1.0)?;
    let n = cfg.n.unwrap_or(s.n);
    let theta_small = cfg.theta;
    let theta_unit = s.r.powf(1.0 / alpha) * theta_small;
    let sample = |r: f64, theta: f64, tag: &str| -> Result<Vec<f64>> {
        mc_collect(cfg.seed_for(tag), n, |_, rng| {
            let mut t = build_conditioned(&trunc, rng, r, s.rel_window, cfg.node_cap, 100_000_000)?;
            assign_cut_times(&mut t, rng)?;
            let snap = fragments_at(&t, theta)?;
            Ok(snap.masses.first().copied().unwrap_or(0.0) / t.sigma())
        })
    };
    let a = sample(s.r, theta_small, "self-similarity/r")?;
    let b = sample(1.0, theta_unit, "self-similarity/1")?;
    let ks = ks_two_sample(&a, &b);
    rep.row(CheckRow::above(
        format!("KS largest fraction (D = {:.4})", ks.statistic),
        "mass r at theta vs mass 1 at r^(1/alpha) theta",
        cfg.p_threshold,
        ks.p_value,
    ));
    let k = nu1_constant(alpha)?;
    if (alpha - 1.5).abs() < 1e-12 {
        // the reference value is quoted to four decimals (truncated, not rounded)
        rep.row(CheckRow::within("const(1.5)", "reference value 1.1335, four decimals", 1.1335, k, 0.0, 1e-4));
    } else {
        rep.row(CheckRow::within("const(alpha)", "closed form", k, k, 0.0, 0.0).informational());
    }
    let f = SequenceFunctional::second_exceeds(0.1);
    let opts = Nu1Options::default();
    let e1 = nu1_functional_stable(alpha, &f, s.nu1_n, &mut RngStream::new(cfg.seed_for("self-similarity/nu1a"), 0), opts)?;
    let e2 = nu1_functional_stable(alpha, &f, s.nu1_n, &mut RngStream::new(cfg.seed_for("self-similarity/nu1b"), 0), opts)?;
    let se = (e1.estimate.std_error.powi(2) + e2.estimate.std_error.powi(2)).sqrt();
    rep.row(CheckRow::within(
        "nu1(second > 0.1), seed A vs seed B",
        "estimate under an independent seed",
        e2.estimate.mean,
        e1.estimate.mean,
        se,
        3.0 * se,
    ));
    rep.note(format!(
        "{n} conditioned trees per side (window ±{}%), r = {}, theta = {theta_small} vs {theta_unit:.5}",
        s.rel_window * 100.0,
        s.r
    ));
    Ok(rep)
}

// ---------------------------------------------------------------------------
// reweighting

/// Lengths of tilted trees reweighted by `e^{ψ_ε(θ)σ}` against lengths of
/// ψ-trees, both restricted to `σ` below the 99% quantile of the latter.
pub fn check_reweighting(cfg: &CheckConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let mut rep = CheckReport::new("reweighting");
    let theta = cfg.theta;
    let trunc = cfg.truncated(1.0)?;
    let tilted = trunc.tilt(theta)?;
    let n = cfg.n_or(20_000);
    let big = cfg.limits(1e3);
    let plain: Vec<f64> = mc_collect(cfg.seed_for("reweighting/plain"), n, |_, rng| {
        let o = build_with_limits(&trunc, rng, big)?;
        Ok(if o.is_oversize() { f64::INFINITY } else { o.tree().sigma() })
    })?;
    let q = quantile(&plain.iter().map(|&x| x.min(f64::MAX)).collect::<Vec<_>>(), 0.99);
    let limits = cfg.limits(q);
    let tilt_s: Vec<f64> = mc_collect(cfg.seed_for("reweighting/tilted"), n, |_, rng| {
        let o = build_with_limits(&tilted, rng, limits)?;
        Ok(if o.is_oversize() { f64::INFINITY } else { o.tree().sigma() })
    })?;
    let xa: Vec<f64> = plain.iter().copied().filter(|&x| x <= q).collect();
    let xb: Vec<f64> = tilt_s.iter().copied().filter(|&x| x <= q).collect();
    let pt = trunc.psi(theta)?;
    let wb: Vec<f64> = xb.iter().map(|&s| (pt * s).exp()).collect();
    let ks = ks_two_sample_weighted(&xa, &vec![1.0; xa.len()], &xb, &wb);
    rep.row(CheckRow::above(
        format!("weighted KS (D = {:.4})", ks.statistic),
        "exp(psi_eps(theta) sigma) reweighting",
        cfg.p_threshold,
        ks.p_value,
    ));
    rep.note(format!("{n} trees per side, sigma capped at {q:.4} (99% quantile)"));
    Ok(rep)
}

/// Runs `names` in order, applying the Bonferroni floor when `floor` is set.
pub fn run_suite(names: &[&str], cfg: &CheckConfig, floor: bool) -> Result<Vec<CheckReport>> {
    let mut cfg = cfg.clone();
    if floor {
        let m: usize = names.iter().map(|n| p_value_rows(n)).sum();
        cfg.p_threshold = bonferroni_floor(cfg.p_threshold, m);
    }
    names.iter().map(|n| run_check(n, &cfg)).collect()
}

/// Mean tagged mass at `θ` over complete trees, used by the CLI summaries.
pub fn mean_tagged_mass(trunc: &TruncatedMechanism, theta: f64, n: u64, seed: u64, limits: BuildLimits) -> Result<McEstimate> {
    let sums = mc_sums(seed, n, 1, |_, rng, out| {
        if let BuildOutcome::Complete(mut t) = build_with_limits(trunc, rng, limits)? {
            assign_cut_times(&mut t, rng)?;
            out[0] = tagged_mass_at(&t, theta)?;
        }
        Ok(())
    })?;
    Ok(sums[0].estimate())
}
