use super::*;
use crate::exponent::BranchingMechanism;
use crate::par::par_map;
use proptest::prelude::*;

fn trunc(eps: f64) -> TruncatedMechanism {
    BranchingMechanism::stable(1.5).unwrap().truncate(eps).unwrap()
}

#[test]
fn from_parents_validates_order() {
    assert!(JumpTree::from_parents(&[1.0, 1.0], &[None, Some(0)], 1.0, 0.1).is_ok());
    assert!(JumpTree::from_parents(&[1.0, 1.0], &[None, Some(1)], 1.0, 0.1).is_err());
    assert!(JumpTree::from_parents(&[1.0, 1.0, 1.0, 1.0], &[None, Some(0), Some(1), Some(0)], 1.0, 0.1)
        .is_err());
    assert!(JumpTree::from_parents(&[1.0, -1.0], &[None, Some(0)], 1.0, 0.1).is_err());
    assert!(JumpTree::from_parents(&[], &[], 1.0, 0.1).is_err());
    let t = JumpTree::from_parents(&[2.0, 1.0, 1.0, 0.5], &[None, Some(0), Some(0), Some(1)], 4.0, 0.1)
        .unwrap();
    assert_eq!(t.children(t.root()), 1..3);
    assert_eq!(t.children(NodeId(1)), 3..4);
    assert!(t.children(NodeId(2)).is_empty());
    assert_eq!(t.depths(), vec![0, 1, 1, 2]);
    assert_eq!(t.subtree_deltas(), vec![4.5, 1.5, 1.0, 0.5]);
    assert_eq!(t.sigma(), 4.5 / 4.0);
    assert!(t.is_complete());
}

#[test]
fn built_trees_satisfy_structural_invariants() {
    let tr = trunc(0.01);
    let mut rng = RngStream::new(1, 0);
    for _ in 0..500 {
        let t = build_excursion_tree(&tr, &mut rng, 100_000).unwrap().into_tree();
        assert!(t.nodes().iter().all(|n| n.delta >= 0.01));
        let sum: f64 = t.nodes().iter().map(|n| n.delta).sum();
        assert!((t.sigma() * tr.drain_rate() - sum).abs() <= 1e-12 * sum);
        for (i, n) in t.nodes().iter().enumerate().skip(1) {
            let p = n.parent.unwrap();
            assert!(p.index() < i);
            assert!(t.children(p).contains(&i));
        }
        assert!(t.nodes()[0].parent.is_none());
    }
}

#[test]
fn builds_are_deterministic() {
    let tr = trunc(0.01);
    let a = build_excursion_tree(&tr, &mut RngStream::new(9, 4), 100_000).unwrap();
    let b = build_excursion_tree(&tr, &mut RngStream::new(9, 4), 100_000).unwrap();
    assert_eq!(a, b);
}

#[test]
fn offspring_rate_per_unit_mass() {
    // Σ children / Σ Δ over expanded nodes estimates λ_ε/c = (α−1)/(αε)
    let tr = trunc(0.01);
    let want = 0.5 / (1.5 * 0.01);
    let per: Vec<(f64, f64)> = par_map(2, 0..10_000, |_, rng| {
        let t = build_excursion_tree(&tr, rng, 1_000_000).unwrap().into_tree();
        let kids = (t.len() - 1) as f64;
        let mass: f64 = t.nodes().iter().map(|n| n.delta).sum();
        (kids, mass)
    });
    // per-tree ratio estimator with delta-method error
    let n = per.len() as f64;
    let (sx, sy) = per.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let r = sx / sy;
    let var = per.iter().map(|p| (p.0 - r * p.1).powi(2)).sum::<f64>() / (n - 1.0);
    let se = var.sqrt() / (sy / n) / n.sqrt();
    assert!((r - want).abs() < 3.0 * se, "{r} vs {want} (se {se})");
}

#[test]
fn zero_jump_rate_gives_single_nodes() {
    let mut tr = trunc(0.01);
    tr.jump_rate = 0.0;
    let mut rng = RngStream::new(3, 3);
    for _ in 0..100 {
        let t = build_excursion_tree(&tr, &mut rng, 10).unwrap().complete().unwrap();
        assert_eq!(t.len(), 1);
    }
}

#[test]
fn node_cap_gives_explicit_oversize() {
    let tr = trunc(0.001);
    let mut rng = RngStream::new(4, 0);
    let mut seen = false;
    for _ in 0..2000 {
        match build_excursion_tree(&tr, &mut rng, 50).unwrap() {
            BuildOutcome::Oversize(t) => {
                seen = true;
                assert!(t.len() <= 50);
                assert!(!t.is_complete());
            }
            BuildOutcome::Complete(t) => assert!(t.len() <= 50),
        }
    }
    assert!(seen);
    assert!(build_excursion_tree(&tr, &mut rng, 0).is_err());
}

#[test]
fn mass_cap_stops_only_after_full_expansion() {
    let tr = trunc(0.01);
    let limits = BuildLimits::nodes(1_000_000).with_mass_cap(0.5);
    let mut rng = RngStream::new(5, 0);
    for _ in 0..2000 {
        match build_with_limits(&tr, &mut rng, limits).unwrap() {
            BuildOutcome::Complete(t) => assert!(t.is_complete()),
            BuildOutcome::Oversize(t) => {
                assert!(t.sigma() > 0.5);
                // every expanded node has all its children present
                let expanded = t.expanded;
                let kids: usize = t.nodes()[..expanded].iter().map(|n| n.child_count()).sum();
                assert_eq!(kids + 1, t.len());
            }
        }
    }
}

#[test]
fn conditioned_builds_land_in_window() {
    let tr = trunc(0.01);
    let mut rng = RngStream::new(6, 0);
    for _ in 0..50 {
        let t = build_conditioned(&tr, &mut rng, 0.2, 0.1, 1_000_000, 100_000).unwrap();
        assert!(t.sigma() >= 0.18 && t.sigma() <= 0.22);
    }
    let t = build_conditioned(&tr, &mut rng, 0.2, 1.0, 1_000_000, 10).unwrap();
    assert!(t.is_complete());
    assert!(build_conditioned(&tr, &mut rng, 0.0, 0.1, 10, 10).is_err());
    match build_conditioned(&tr, &mut rng, 1e3, 0.01, 1_000, 3) {
        Err(Error::Conditioning { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn profile_examples() {
    let one = JumpTree::from_parents(&[2.0], &[None], 4.0, 0.1).unwrap();
    let p = excursion_path(&one);
    assert_eq!(p.breakpoints, vec![(0.0, 1), (0.5, 0)]);
    let two = JumpTree::from_parents(&[2.0, 1.0], &[None, Some(0)], 3.0, 0.1).unwrap();
    let p = excursion_path(&two);
    assert!((p.duration() - 1.0).abs() < 1e-15);
    let at2: Vec<_> = p.segments().into_iter().filter(|s| s.2 == 2).collect();
    assert_eq!(at2.len(), 1);
    assert!((at2[0].1 - at2[0].0 - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(p.max_height(), 2);
}

#[test]
fn profile_duration_is_sigma() {
    let tr = trunc(0.01);
    let mut rng = RngStream::new(8, 0);
    for _ in 0..200 {
        let t = build_excursion_tree(&tr, &mut rng, 100_000).unwrap().into_tree();
        if !t.is_complete() {
            continue;
        }
        let p = excursion_path(&t);
        assert!((p.duration() - t.sigma()).abs() <= 1e-9 * t.sigma());
        let depth = t.depths().into_iter().max().unwrap() + 1;
        assert_eq!(p.max_height(), depth);
        // time at each height h equals the drain time of nodes at depth h−1
        let mut by_h = vec![0.0; depth as usize + 1];
        for (a, b, h) in p.segments() {
            by_h[h as usize] += b - a;
        }
        let mut want = vec![0.0; depth as usize + 1];
        for (n, d) in t.nodes().iter().zip(t.depths()) {
            want[d as usize + 1] += n.delta / t.drain_rate();
        }
        for (x, y) in by_h.iter().zip(&want) {
            assert!((x - y).abs() <= 1e-9 * t.sigma());
        }
        assert_eq!(excursion_path(&t), p);
    }
}

#[test]
fn dump_format() {
    let t = JumpTree::from_parents(&[2.0, 1.0], &[None, Some(0)], 3.0, 0.1).unwrap();
    let mut buf = Vec::new();
    t.write_dump(&mut buf).unwrap();
    let s = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "# node_id parent_id delta cut_time");
    assert_eq!(lines[1], "0 - 2 -");
    assert_eq!(lines[2], "1 0 1 -");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mass_identity_holds(seed in any::<u64>(), e in 0.005f64..0.2) {
        let tr = trunc(e);
        let t = build_excursion_tree(&tr, &mut RngStream::new(seed, 0), 20_000).unwrap().into_tree();
        let sum: f64 = t.nodes().iter().map(|n| n.delta).sum();
        prop_assert!((t.sigma() * tr.drain_rate() - sum).abs() <= 1e-12 * sum);
        prop_assert!(t.nodes().iter().all(|n| n.delta > e * (1.0 - 1e-15)));
    }
}
