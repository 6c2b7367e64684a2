//! Simulation and statistical verification of fragmentation at nodes of
//! Lévy continuum random trees.
//!
//! The continuum tree with branching mechanism ψ is approximated by a
//! Galton–Watson tree of jumps (the genealogy of one excursion of the
//! Lévy process with jumps below `ε` removed). Nodes are cut at
//! exponential times of rate equal to their mass, which yields the
//! fragmentation process, the tagged fragment and its dislocations. The
//! [`verify`] module compares all of this with closed-form laws.

pub mod dislocation;
pub mod error;
pub mod exponent;
pub mod fragmentation;
pub mod par;
pub mod sampler;
pub mod tree;
pub mod verify;

mod quad;
mod union_find;

pub use dislocation::{
    node_functional_a, node_functional_a_closed, node_functional_a_continuum,
    nu1_functional_stable, sample_mu_truncated, DislocationDraw, Nu1Estimate, Nu1Options,
    SequenceFunctional, SplitWindow,
};
pub use error::{Error, Result};
pub use exponent::{
    nu1_constant, pi_star_density_stable, pi_star_tail_stable, stable_levy_constant,
    Admissibility, BranchingMechanism, LevyMeasure, LevyMeasureSpec, TruncatedMechanism,
};
pub use fragmentation::{
    assign_cut_times, boundary_excursion_count, dislocation_timeline, fragments_at, prune,
    tagged_mass_at, DislocationEvent, FragmentSnapshot, Timeline,
};
pub use sampler::{
    sample_cut_clock, sample_jump, sample_poisson, sample_subordinator_jumps, sample_uniform,
    RngStream, SubordinatorSample,
};
pub use tree::{
    build_conditioned, build_excursion_tree, build_with_limits, excursion_path, BuildLimits,
    BuildOutcome, ExcursionProfile, JumpTree, NodeId,
};
pub use verify::stats::{ks_two_sample, chi_square, McEstimate};
pub use verify::{CheckReport, CheckRow};
