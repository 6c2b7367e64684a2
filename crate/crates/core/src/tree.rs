//! Galton–Watson jump trees: the genealogy of one excursion of the
//! truncated Lévy process explored in LIFO order.
//!
//! A node of mass `Δ` drains for time `Δ/c` and, during that time, receives
//! Poisson(`Δ λ_ε / c`) children with i.i.d. masses from the truncated jump
//! law. Nodes are stored breadth-first, so the children of a node occupy a
//! contiguous id range and every child id exceeds its parent's.

use std::io::{self, Write};
use std::ops::Range;

use crate::error::{domain, ensure, Error, Result};
use crate::exponent::TruncatedMechanism;
use crate::sampler::{mix_seed, sample_jump, sample_poisson, RngStream};

/// Default node cap for a single build.
pub const DEFAULT_NODE_CAP: usize = 1_000_000;

const PROFILE_TAG: u64 = 0x7072_6f66_696c_6500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub delta: f64,
    pub parent: Option<NodeId>,
    first_child: u32,
    child_count: u32,
}

impl Node {
    pub fn child_count(&self) -> usize {
        self.child_count as usize
    }
}

/// One excursion tree. Possibly partial when a build was stopped early; see
/// [`JumpTree::is_complete`].
#[derive(Debug, Clone, PartialEq)]
pub struct JumpTree {
    nodes: Vec<Node>,
    drain_rate: f64,
    epsilon: f64,
    mass_sum: f64,
    expanded: usize,
    rejected_attempts: u64,
    profile_seed: u64,
    cut_times: Option<Vec<f64>>,
}

impl JumpTree {
    /// Assembles a complete tree from per-node masses and parents listed in
    /// breadth-first order: `parents[0]` is `None`, every other parent index
    /// is smaller than the node's and parents are non-decreasing.
    pub fn from_parents(
        deltas: &[f64],
        parents: &[Option<usize>],
        drain_rate: f64,
        epsilon: f64,
    ) -> Result<JumpTree> {
        ensure("drain_rate", drain_rate, drain_rate > 0.0, "must be positive")?;
        if deltas.is_empty() || deltas.len() != parents.len() || parents[0].is_some() {
            return Err(Error::Numeric("need a root first and one parent per node".into()));
        }
        let mut nodes: Vec<Node> = deltas
            .iter()
            .zip(parents)
            .map(|(&delta, p)| Node {
                delta,
                parent: p.map(|p| NodeId(p as u32)),
                first_child: 0,
                child_count: 0,
            })
            .collect();
        let mut last = 0;
        for (i, p) in parents.iter().enumerate().skip(1) {
            let p = p.ok_or_else(|| Error::Numeric(format!("node {i} has no parent")))?;
            if p >= i || p < last {
                return Err(Error::Numeric(format!("node {i}: parents not in breadth-first order")));
            }
            last = p;
            if nodes[p].child_count == 0 {
                nodes[p].first_child = i as u32;
            }
            nodes[p].child_count += 1;
        }
        for n in &nodes {
            ensure("delta", n.delta, n.delta > 0.0 && n.delta.is_finite(), "must be positive")?;
        }
        let mass_sum = deltas.iter().sum();
        let len = nodes.len();
        Ok(JumpTree {
            nodes,
            drain_rate,
            epsilon,
            mass_sum,
            expanded: len,
            rejected_attempts: 0,
            profile_seed: 0,
            cut_times: None,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn delta(&self, id: NodeId) -> f64 {
        self.nodes[id.index()].delta
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.index()].parent
    }

    pub fn children(&self, id: NodeId) -> Range<usize> {
        let n = &self.nodes[id.index()];
        n.first_child as usize..(n.first_child + n.child_count) as usize
    }

    pub fn drain_rate(&self) -> f64 {
        self.drain_rate
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `Σ_v Δ_v`.
    pub fn total_delta(&self) -> f64 {
        self.mass_sum
    }

    /// Excursion length `σ = Σ_v Δ_v / c` (a lower bound on a partial tree).
    pub fn sigma(&self) -> f64 {
        self.mass_sum / self.drain_rate
    }

    pub fn max_delta(&self) -> f64 {
        self.nodes.iter().map(|n| n.delta).fold(0.0, f64::max)
    }

    /// Whether every node has had its offspring generated.
    pub fn is_complete(&self) -> bool {
        self.expanded == self.nodes.len()
    }

    /// Whether node `id` has had its offspring generated.
    pub fn is_expanded(&self, id: NodeId) -> bool {
        id.index() < self.expanded
    }

    /// Failed attempts preceding this tree in a conditioned build.
    pub fn rejected_attempts(&self) -> u64 {
        self.rejected_attempts
    }

    pub fn cut_times(&self) -> Option<&[f64]> {
        self.cut_times.as_deref()
    }

    pub(crate) fn set_cut_times(&mut self, times: Vec<f64>) {
        debug_assert_eq!(times.len(), self.nodes.len());
        self.cut_times = Some(times);
    }

    /// Subtree sums of `Δ`, indexed by node.
    pub fn subtree_deltas(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.nodes.iter().map(|n| n.delta).collect();
        for i in (1..self.nodes.len()).rev() {
            let p = self.nodes[i].parent.expect("non-root").index();
            s[p] += s[i];
        }
        s
    }

    /// Node depths, the root having depth 0.
    pub fn depths(&self) -> Vec<u32> {
        let mut d = vec![0u32; self.nodes.len()];
        for i in 1..self.nodes.len() {
            d[i] = d[self.nodes[i].parent.expect("non-root").index()] + 1;
        }
        d
    }

    /// Builds a tree from a subset of nodes closed under taking parents
    /// (within the subset, the top node acts as root), keeping breadth-first
    /// layout. `keep(v)` decides membership of children of kept nodes.
    pub(crate) fn induced<F: Fn(usize) -> bool>(&self, top: NodeId, keep: F) -> JumpTree {
        let mut nodes = Vec::new();
        let mut map = Vec::new(); // new index -> old index
        let mut times = self.cut_times.as_ref().map(|_| Vec::new());
        nodes.push(Node {
            delta: self.delta(top),
            parent: None,
            first_child: 0,
            child_count: 0,
        });
        map.push(top.index());
        let mut i = 0;
        let mut expanded_all = true;
        while i < map.len() {
            let old = map[i];
            if old >= self.expanded {
                expanded_all = false;
            }
            let first = nodes.len() as u32;
            let mut count = 0;
            for c in self.children(NodeId(old as u32)) {
                if keep(c) {
                    nodes.push(Node {
                        delta: self.nodes[c].delta,
                        parent: Some(NodeId(i as u32)),
                        first_child: 0,
                        child_count: 0,
                    });
                    map.push(c);
                    count += 1;
                }
            }
            nodes[i].first_child = first;
            nodes[i].child_count = count;
            i += 1;
        }
        if let (Some(t), Some(src)) = (times.as_mut(), self.cut_times.as_ref()) {
            t.extend(map.iter().map(|&o| src[o]));
        }
        let mass_sum = nodes.iter().map(|n| n.delta).sum();
        let len = nodes.len();
        JumpTree {
            nodes,
            drain_rate: self.drain_rate,
            epsilon: self.epsilon,
            mass_sum,
            expanded: if expanded_all { len } else { 0 },
            rejected_attempts: 0,
            profile_seed: mix_seed(self.profile_seed, top.0 as u64),
            cut_times: times,
        }
    }

    /// Writes the line-oriented dump `node_id parent_id delta cut_time`,
    /// with `-` for a missing parent or clock.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# node_id parent_id delta cut_time")?;
        for (i, n) in self.nodes.iter().enumerate() {
            let parent = n.parent.map_or("-".to_string(), |p| p.0.to_string());
            let clock = self
                .cut_times
                .as_ref()
                .map_or("-".to_string(), |t| t[i].to_string());
            writeln!(w, "{i} {parent} {} {clock}", n.delta)?;
        }
        Ok(())
    }
}

/// Result of one build: a finished tree, or the partial tree at the moment
/// a node or mass cap was exceeded.
#[derive(Debug, Clone, PartialEq)]
pub enum BuildOutcome {
    Complete(JumpTree),
    Oversize(JumpTree),
}

impl BuildOutcome {
    pub fn is_oversize(&self) -> bool {
        matches!(self, BuildOutcome::Oversize(_))
    }

    pub fn tree(&self) -> &JumpTree {
        match self {
            BuildOutcome::Complete(t) | BuildOutcome::Oversize(t) => t,
        }
    }

    pub fn into_tree(self) -> JumpTree {
        match self {
            BuildOutcome::Complete(t) | BuildOutcome::Oversize(t) => t,
        }
    }

    pub fn complete(self) -> Option<JumpTree> {
        match self {
            BuildOutcome::Complete(t) => Some(t),
            BuildOutcome::Oversize(_) => None,
        }
    }
}

/// Caps that stop a build early.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildLimits {
    pub node_cap: usize,
    /// Stop once the partial excursion length exceeds this.
    pub mass_cap: f64,
}

impl BuildLimits {
    pub fn nodes(node_cap: usize) -> Self {
        BuildLimits {
            node_cap,
            mass_cap: f64::INFINITY,
        }
    }

    pub fn with_mass_cap(self, mass_cap: f64) -> Self {
        BuildLimits { mass_cap, ..self }
    }
}

impl Default for BuildLimits {
    fn default() -> Self {
        BuildLimits::nodes(DEFAULT_NODE_CAP)
    }
}

/// Builds one excursion tree breadth-first. Exceeding `node_cap` yields
/// [`BuildOutcome::Oversize`] carrying the partial tree.
pub fn build_excursion_tree(
    trunc: &TruncatedMechanism,
    rng: &mut RngStream,
    node_cap: usize,
) -> Result<BuildOutcome> {
    build_with_limits(trunc, rng, BuildLimits::nodes(node_cap))
}

/// As [`build_excursion_tree`], additionally stopping once the partial
/// excursion length exceeds `limits.mass_cap`.
///
/// A node's offspring are generated all at once; a stop never depends on
/// the masses of nodes that have not yet been created.
pub fn build_with_limits(
    trunc: &TruncatedMechanism,
    rng: &mut RngStream,
    limits: BuildLimits,
) -> Result<BuildOutcome> {
    if limits.node_cap < 1 {
        return Err(domain("node_cap", limits.node_cap as f64, "must be at least 1"));
    }
    let c = trunc.drain_rate();
    let rate = trunc.offspring_rate();
    let profile_seed = mix_seed(rng.next_u64_raw(), PROFILE_TAG);
    let root = sample_jump(trunc, rng);
    let mut nodes = vec![Node {
        delta: root,
        parent: None,
        first_child: 0,
        child_count: 0,
    }];
    let mut mass = root;
    let mass_cap = limits.mass_cap * c;
    let mut i = 0;
    let mut oversize = mass > mass_cap;
    while i < nodes.len() && !oversize {
        let k = sample_poisson(nodes[i].delta * rate, rng)? as usize;
        let first = nodes.len();
        if first + k > limits.node_cap {
            oversize = true;
            break;
        }
        for _ in 0..k {
            let d = sample_jump(trunc, rng);
            mass += d;
            nodes.push(Node {
                delta: d,
                parent: Some(NodeId(i as u32)),
                first_child: 0,
                child_count: 0,
            });
        }
        nodes[i].first_child = first as u32;
        nodes[i].child_count = k as u32;
        i += 1;
        if mass > mass_cap {
            oversize = i < nodes.len();
            break;
        }
    }
    let tree = JumpTree {
        nodes,
        drain_rate: c,
        epsilon: trunc.epsilon(),
        mass_sum: mass,
        expanded: i,
        rejected_attempts: 0,
        profile_seed,
        cut_times: None,
    };
    Ok(if oversize || !tree.is_complete() {
        BuildOutcome::Oversize(tree)
    } else {
        BuildOutcome::Complete(tree)
    })
}

/// Builds trees until one is complete with `sigma ∈ [lo, hi]`.
pub fn build_in_window(
    trunc: &TruncatedMechanism,
    rng: &mut RngStream,
    lo: f64,
    hi: f64,
    node_cap: usize,
    max_attempts: u64,
) -> Result<JumpTree> {
    ensure("lo", lo, lo >= 0.0, "must be non-negative")?;
    ensure("hi", hi, hi >= lo, "must be at least lo")?;
    let limits = BuildLimits::nodes(node_cap).with_mass_cap(hi);
    for attempt in 0..max_attempts {
        if let BuildOutcome::Complete(mut t) = build_with_limits(trunc, rng, limits)? {
            if t.sigma() >= lo && t.sigma() <= hi {
                t.rejected_attempts = attempt;
                return Ok(t);
            }
        }
    }
    Err(Error::Conditioning {
        attempts: max_attempts,
        accepted: 0,
        rate: 0.0,
    })
}

/// Approximates the excursion law conditioned on `σ ≈ r` by rejection:
/// returns the first complete tree with `σ ∈ [r(1−w), r(1+w)]`.
///
/// `rel_window ≥ 1` disables conditioning: the first complete tree is
/// returned whatever its length.
pub fn build_conditioned(
    trunc: &TruncatedMechanism,
    rng: &mut RngStream,
    r: f64,
    rel_window: f64,
    node_cap: usize,
    max_attempts: u64,
) -> Result<JumpTree> {
    ensure("r", r, r > 0.0 && r.is_finite(), "must be positive")?;
    ensure("rel_window", rel_window, rel_window > 0.0, "must be positive")?;
    if rel_window >= 1.0 {
        return build_in_window(trunc, rng, 0.0, f64::INFINITY, node_cap, max_attempts);
    }
    build_in_window(
        trunc,
        rng,
        r * (1.0 - rel_window),
        r * (1.0 + rel_window),
        node_cap,
        max_attempts,
    )
}

/// Piecewise-constant stack-depth profile of the LIFO exploration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionProfile {
    /// `(t, h)`: the height is `h` from time `t` until the next breakpoint.
    /// Starts at `(0, 1)` and ends with `(σ, 0)`.
    pub breakpoints: Vec<(f64, u32)>,
}

impl ExcursionProfile {
    pub fn duration(&self) -> f64 {
        self.breakpoints.last().map_or(0.0, |b| b.0)
    }

    pub fn max_height(&self) -> u32 {
        self.breakpoints.iter().map(|b| b.1).max().unwrap_or(0)
    }

    /// `(start, end, height)` for each constant piece.
    pub fn segments(&self) -> Vec<(f64, f64, u32)> {
        self.breakpoints
            .windows(2)
            .map(|w| (w[0].0, w[1].0, w[0].1))
            .collect()
    }
}

/// Depth-first LIFO profile: each node spends `Δ/c` at its depth, with its
/// children's sub-excursions inserted at uniform positions of that time.
/// Positions are drawn from a stream fixed by the tree's build stream.
pub fn excursion_path(tree: &JumpTree) -> ExcursionProfile {
    let mut rng = RngStream::new(tree.profile_seed, PROFILE_TAG);
    let c = tree.drain_rate;
    let mut out: Vec<(f64, u32)> = Vec::new();
    let emit = |t: f64, h: u32, out: &mut Vec<(f64, u32)>| {
        if let Some(last) = out.last_mut() {
            if last.1 == h {
                return;
            }
            if last.0 == t {
                last.1 = h;
                let n = out.len();
                if n >= 2 && out[n - 2].1 == h {
                    out.pop();
                }
                return;
            }
        }
        out.push((t, h));
    };

    struct Frame {
        node: usize,
        cuts: Vec<f64>,
        next: usize,
        at: f64,
    }
    let frame = |node: usize, rng: &mut RngStream| {
        let n = &tree.nodes[node];
        let len = n.delta / c;
        let mut cuts: Vec<f64> = (0..n.child_count).map(|_| rng.uniform() * len).collect();
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.push(len);
        Frame {
            node,
            cuts,
            next: 0,
            at: 0.0,
        }
    };

    let mut t = 0.0;
    let mut stack = vec![frame(0, &mut rng)];
    while !stack.is_empty() {
        let h = stack.len() as u32;
        let top = stack.last_mut().expect("non-empty");
        let until = top.cuts[top.next];
        emit(t, h, &mut out);
        t += until - top.at;
        top.at = until;
        let k = top.next;
        top.next += 1;
        if k < top.cuts.len() - 1 {
            let child = tree.nodes[top.node].first_child as usize + k;
            let f = frame(child, &mut rng);
            stack.push(f);
        } else {
            stack.pop();
        }
    }
    emit(t, 0, &mut out);
    ExcursionProfile { breakpoints: out }
}

impl RngStream {
    /// Raw 64 bits, used to key per-tree auxiliary streams.
    pub(crate) fn next_u64_raw(&mut self) -> u64 {
        rand::RngCore::next_u64(self)
    }
}

#[cfg(test)]
mod tests;
