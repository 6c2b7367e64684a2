//! Fragmentation at nodes: every node `v` is removed at an exponential
//! time `T_v` of rate `Δ_v`. At time `θ` the fragments are the connected
//! components of the nodes still present; a removed node's own drain mass
//! `Δ_v / c` becomes dust.

use crate::error::{domain, ensure, Error, Result};
use crate::sampler::{sample_cut_clock, RngStream};
use crate::tree::{JumpTree, NodeId};
use crate::union_find::UnionFind;

/// Assigns `T_v ~ Exp(Δ_v)` to every node, in node order.
pub fn assign_cut_times(tree: &mut JumpTree, rng: &mut RngStream) -> Result<()> {
    let mut times = Vec::with_capacity(tree.len());
    for n in tree.nodes() {
        times.push(sample_cut_clock(n.delta, rng)?);
    }
    tree.set_cut_times(times);
    Ok(())
}

fn clocks(tree: &JumpTree) -> Result<&[f64]> {
    tree.cut_times().ok_or(Error::ClocksMissing)
}

fn check_theta(theta: f64) -> Result<f64> {
    ensure("theta", theta, theta >= 0.0, "must be non-negative")
}

/// The state of the fragmentation at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentSnapshot {
    pub theta: f64,
    /// Fragment masses, descending.
    pub masses: Vec<f64>,
    pub dust: f64,
    /// Mass of the root's fragment, 0 once the root is cut.
    pub tagged_mass: f64,
    pub sigma: f64,
}

impl FragmentSnapshot {
    /// `|Σ masses + dust − σ| / σ`.
    pub fn conservation_error(&self) -> f64 {
        let s: f64 = self.masses.iter().sum::<f64>() + self.dust;
        (s - self.sigma).abs() / self.sigma
    }
}

/// Fragments at time `θ` via union-find over uncut parent–child pairs.
pub fn fragments_at(tree: &JumpTree, theta: f64) -> Result<FragmentSnapshot> {
    check_theta(theta)?;
    let t = clocks(tree)?;
    let n = tree.len();
    let mut uf = UnionFind::new(n);
    for (i, node) in tree.nodes().iter().enumerate().skip(1) {
        let p = node.parent.expect("non-root").index();
        if t[i] > theta && t[p] > theta {
            uf.union(i, p);
        }
    }
    let mut acc = vec![0.0; n];
    let mut dust = 0.0;
    for (i, node) in tree.nodes().iter().enumerate() {
        if t[i] > theta {
            acc[uf.find(i)] += node.delta;
        } else {
            dust += node.delta;
        }
    }
    let c = tree.drain_rate();
    let tagged_mass = if t[0] > theta { acc[uf.find(0)] / c } else { 0.0 };
    let mut masses: Vec<f64> = acc.into_iter().filter(|&m| m > 0.0).map(|m| m / c).collect();
    masses.sort_by(|a, b| b.total_cmp(a));
    Ok(FragmentSnapshot {
        theta,
        masses,
        dust: dust / c,
        tagged_mass,
        sigma: tree.sigma(),
    })
}

/// Nodes of the root's fragment at time `θ`, breadth-first.
#[derive(Debug, Clone, PartialEq)]
pub struct RootComponent {
    pub nodes: Vec<NodeId>,
    /// `Σ Δ` over the component.
    pub delta_sum: f64,
    /// Whether every component node has had its offspring generated; when
    /// false the component may extend beyond a partial tree.
    pub complete: bool,
}

/// The root component at `θ`; empty when the root is cut.
pub fn root_component(tree: &JumpTree, theta: f64) -> Result<RootComponent> {
    check_theta(theta)?;
    let t = clocks(tree)?;
    let mut nodes = Vec::new();
    let mut delta_sum = 0.0;
    let mut complete = true;
    if t[0] > theta {
        nodes.push(tree.root());
        let mut i = 0;
        while i < nodes.len() {
            let v = nodes[i];
            delta_sum += tree.delta(v);
            complete &= tree.is_expanded(v);
            for c in tree.children(v) {
                if t[c] > theta {
                    nodes.push(NodeId(c as u32));
                }
            }
            i += 1;
        }
    }
    Ok(RootComponent {
        nodes,
        delta_sum,
        complete,
    })
}

/// `σ̃` at time `θ`: the mass of the root's fragment.
pub fn tagged_mass_at(tree: &JumpTree, theta: f64) -> Result<f64> {
    Ok(root_component(tree, theta)?.delta_sum / tree.drain_rate())
}

/// One split of the tagged fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct DislocationEvent {
    pub theta: f64,
    pub parent_mass: f64,
    /// Masses of the pieces, descending: the root-side piece (unless the
    /// root itself is cut) and one piece per surviving child subtree.
    pub children: Vec<f64>,
    pub cut_node_delta: f64,
    pub node: NodeId,
}

impl DislocationEvent {
    /// Whether the second-largest piece exceeds `eta` times the parent.
    pub fn is_significant(&self, eta: f64) -> bool {
        self.children.len() >= 2 && self.children[1] > eta * self.parent_mass
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Timeline {
    pub events: Vec<DislocationEvent>,
    /// Number of equal consecutive event clocks, resolved by node id.
    pub ties: usize,
}

/// Successive splits of the root's fragment, in time order, until the root
/// itself is cut.
pub fn dislocation_timeline(tree: &JumpTree) -> Result<Timeline> {
    let t = clocks(tree)?;
    if !tree.is_complete() {
        return Err(Error::Numeric("timeline needs a complete tree".into()));
    }
    let n = tree.len();
    let c = tree.drain_rate();
    let mut span = tree.subtree_deltas();
    let mut removed = vec![false; n];
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| t[a as usize].total_cmp(&t[b as usize]).then(a.cmp(&b)));
    let mut comp = span[0];
    let mut out = Timeline::default();
    let mut last_time = f64::NAN;
    let mut stack = Vec::new();
    for &v in &order {
        let v = v as usize;
        if removed[v] {
            continue;
        }
        let id = NodeId(v as u32);
        let mut pieces = Vec::new();
        if v != 0 {
            pieces.push((comp - span[v]) / c);
        }
        for w in tree.children(id) {
            if !removed[w] {
                pieces.push(span[w] / c);
            }
        }
        pieces.sort_by(|a, b| b.total_cmp(a));
        if t[v] == last_time {
            out.ties += 1;
        }
        last_time = t[v];
        out.events.push(DislocationEvent {
            theta: t[v],
            parent_mass: comp / c,
            children: pieces,
            cut_node_delta: tree.delta(id),
            node: id,
        });
        if v == 0 {
            break;
        }
        let lost = span[v];
        stack.push(v);
        while let Some(x) = stack.pop() {
            removed[x] = true;
            for w in tree.children(NodeId(x as u32)) {
                if !removed[w] {
                    stack.push(w);
                }
            }
        }
        let mut a = tree.parent(id);
        while let Some(p) = a {
            span[p.index()] -= lost;
            a = tree.parent(p);
        }
        comp -= lost;
    }
    Ok(out)
}

/// The root's fragment at `θ` as a tree of its own (clocks kept), or
/// `None` when the root is cut.
pub fn prune(tree: &JumpTree, theta: f64) -> Result<Option<JumpTree>> {
    check_theta(theta)?;
    let t = clocks(tree)?;
    if t[0] <= theta {
        return Ok(None);
    }
    Ok(Some(tree.induced(tree.root(), |c| t[c] > theta)))
}

/// Number of cut nodes of mass above `a` hanging directly off the root's
/// fragment at time `θ`.
pub fn boundary_excursion_count(tree: &JumpTree, theta: f64, a: f64) -> Result<u64> {
    if !(a > tree.epsilon()) {
        return Err(domain("a", a, "must exceed the jump cutoff"));
    }
    let comp = root_component(tree, theta)?;
    Ok(count_boundary(tree, &comp, theta, a))
}

pub(crate) fn count_boundary(tree: &JumpTree, comp: &RootComponent, theta: f64, a: f64) -> u64 {
    let t = tree.cut_times().expect("checked by caller");
    let mut count = 0;
    for &v in &comp.nodes {
        for c in tree.children(v) {
            if t[c] <= theta && tree.nodes()[c].delta > a {
                count += 1;
            }
        }
    }
    count
}

/// Top nodes of the fragments at `θ`: uncut nodes whose parent is cut
/// (or absent).
pub fn fragment_tops(tree: &JumpTree, theta: f64) -> Result<Vec<NodeId>> {
    check_theta(theta)?;
    let t = clocks(tree)?;
    Ok(tree
        .nodes()
        .iter()
        .enumerate()
        .filter(|&(i, n)| t[i] > theta && n.parent.is_none_or(|p| t[p.index()] <= theta))
        .map(|(i, _)| NodeId(i as u32))
        .collect())
}

/// The fragment rooted at `top` at time `θ`, as a tree whose clocks are
/// the residual times `T_v − θ`.
pub fn fragment_subtree(tree: &JumpTree, top: NodeId, theta: f64) -> Result<JumpTree> {
    check_theta(theta)?;
    let t = clocks(tree)?;
    if t[top.index()] <= theta {
        return Err(Error::Numeric(format!("node {} is cut at time {theta}", top.0)));
    }
    let mut sub = tree.induced(top, |c| t[c] > theta);
    let residual: Vec<f64> = sub.cut_times().expect("copied").iter().map(|x| x - theta).collect();
    sub.set_cut_times(residual);
    Ok(sub)
}
