//! Optimal local sanitisation under information-privacy constraints.
//!
//! Given a finite joint prior over a secret `S` and correlated data `X`,
//! this crate finds the randomized mechanism `Q : X -> Y` maximizing the
//! preserved information I(X;Y) while keeping the leakage about `S` below a
//! budget, for three worst-case leakage notions:
//!
//! * **LDP** w.r.t. the secret: output likelihoods may differ across secret
//!   values by at most `e^eps`;
//! * **LIP**: an observer's posterior over the secret may shift from the
//!   prior by at most `e^eps`;
//! * **SRLIP**: the LIP bound holds conditioned on every attribute subset
//!   an attacker might already know through side channels.
//!
//! Both optimality results reduce to vertex enumeration of a constraint
//! polytope (plus a small LP in the LIP case); [`polytope`] provides that
//! machinery. [`audit`] measures the realized leakage of arbitrary
//! mechanisms by brute force and is kept independent of the optimizers so
//! it can serve as their oracle.

pub mod audit;
pub mod json;
pub mod mechanism;
pub mod optimize;
pub mod polytope;
pub mod prob;
pub mod tol;

pub use audit::{audit_report, measure_ldp, measure_lip, measure_srlip, PrivacyReport};
pub use mechanism::{
    compose_product, forward_to_reverse, reduce_outputs, reverse_to_forward, Mechanism,
    ReverseRepresentation,
};
pub use optimize::{
    build_ldp_polytope, build_lip_polytope, build_srlip_polytope, optimize_ldp, optimize_lip,
    optimize_srlip, Notion, OptimizationResult,
};
pub use polytope::{enumerate_vertices, solve_lp, HPolytope, LinearProgram, VertexSet};
pub use prob::{
    condition_on_context, entropy, mutual_information, random_joint, random_joint_seeded,
    AttributeSchema, JointDistribution, ProbabilityVector,
};
