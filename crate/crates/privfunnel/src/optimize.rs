//! Privacy-constrained utility maximization: builds the constraint polytope
//! for each privacy notion and finds the mechanism maximizing I(X;Y).
//!
//! * LDP: the feasible set is a polytope in mechanism-matrix space; the
//!   objective is convex, so the optimum sits at a vertex and is found by
//!   complete enumeration plus direct evaluation.
//! * LIP: the feasible set of posterior columns is a polytope in data space;
//!   with its vertices in hand the problem becomes a linear program over
//!   vertex weights.
//! * SRLIP: per-attribute polytopes with side-channel constraints for every
//!   context an attacker could hold; per-attribute optima are composed into
//!   a product mechanism. The composition is feasible for the summed budget
//!   but not claimed optimal among all SRLIP mechanisms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

use crate::mechanism::{
    compose_product, reduce_outputs, reverse_to_forward, Mechanism, MechanismError,
    ReverseRepresentation,
};
use crate::polytope::{
    enumerate_vertices_with, solve_lp, Constraint, EnumerationOptions, HPolytope, LinearProgram,
    PolytopeError,
};
use crate::prob::{
    condition_on_context, entropy, entropy_of_slice, mutual_information, AttributeSchema,
    JointDistribution, ProbError, ProbabilityVector,
};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error("invalid budget split: {0}")]
    BadSplit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Notion {
    Ldp,
    Lip,
    Srlip,
}

impl std::fmt::Display for Notion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Notion::Ldp => "ldp",
            Notion::Lip => "lip",
            Notion::Srlip => "srlip",
        })
    }
}

impl std::str::FromStr for Notion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ldp" => Ok(Notion::Ldp),
            "lip" => Ok(Notion::Lip),
            "srlip" => Ok(Notion::Srlip),
            other => Err(format!("unknown notion '{other}' (expected ldp, lip or srlip)")),
        }
    }
}

/// Size and outcome of one polytope enumeration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolytopeDiag {
    pub affine_dim: usize,
    pub ineq_count: usize,
    pub vertex_count: usize,
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub time_ms: f64,
    pub polytopes: Vec<PolytopeDiag>,
    /// Raw optimum before output reduction: the winning vertex (LDP), the
    /// winning vertex per attribute (SRLIP), or the supported posterior
    /// columns (LIP). Kept for debugging; the reported mechanism is always
    /// the reduced one.
    pub raw_solution: Vec<Vec<f64>>,
    /// Budget split actually used (SRLIP only).
    pub split: Option<Vec<f64>>,
}

impl Diagnostics {
    pub fn total_vertices(&self) -> usize {
        self.polytopes.iter().map(|p| p.vertex_count).sum()
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub mechanism: Mechanism,
    /// I(X;Y) of `mechanism` in nats.
    pub utility: f64,
    pub epsilon: f64,
    pub notion: Notion,
    pub diagnostics: Diagnostics,
}

/// Near-equal objective values fall back to the lexicographic order of the
/// raw vertex; enumeration returns vertices lex-sorted, so keeping the
/// earliest strict improvement implements the tie-break.
const TIE_TOL: f64 = 1e-12;

/// Feasible set of mechanisms satisfying eps-LDP w.r.t. the secret, as a
/// polytope over the b*a entries of Q (row-major, b = a): column-sum
/// equalities, nonnegativity, and one inequality per (output, ordered
/// secret pair).
pub fn build_ldp_polytope(joint: &JointDistribution, epsilon: f64) -> HPolytope {
    let a = joint.data_count();
    let b = a;
    let c = joint.secret_count();
    let m = joint.marginals();
    let e_eps = epsilon.exp();
    let idx = |y: usize, x: usize| y * a + x;

    let mut p = HPolytope::new(a * b);
    for x in 0..a {
        let mut coeffs = vec![0.0; a * b];
        for y in 0..b {
            coeffs[idx(y, x)] = 1.0;
        }
        p.add_eq(coeffs, 1.0).expect("arity fixed");
    }
    for y in 0..b {
        for x in 0..a {
            let mut coeffs = vec![0.0; a * b];
            coeffs[idx(y, x)] = -1.0;
            p.add_ineq(coeffs, 0.0).expect("arity fixed");
        }
    }
    for y in 0..b {
        for s in 0..c {
            for s2 in 0..c {
                if s == s2 {
                    continue;
                }
                // (Q p_{X|s})_y <= e^eps (Q p_{X|s'})_y
                let mut coeffs = vec![0.0; a * b];
                for x in 0..a {
                    coeffs[idx(y, x)] = m.x_given_s[s].get(x) - e_eps * m.x_given_s[s2].get(x);
                }
                let (coeffs, rhs) = unit_row(coeffs, 0.0);
                p.add_ineq(coeffs, rhs).expect("arity fixed");
            }
        }
    }
    p
}

/// Rescales a constraint row to unit max magnitude; large budgets produce
/// coefficients of order e^eps otherwise, which poisons downstream
/// least-squares and rank computations.
fn unit_row(mut coeffs: Vec<f64>, mut rhs: f64) -> (Vec<f64>, f64) {
    let scale = coeffs.iter().map(|x| x.abs()).fold(rhs.abs(), f64::max);
    if scale > 0.0 {
        for x in coeffs.iter_mut() {
            *x /= scale;
        }
        rhs /= scale;
    }
    (coeffs, rhs)
}

/// Feasible set of posterior columns for eps-LIP: the probability simplex
/// over data values intersected with, per secret, a two-sided bound tying
/// the induced posterior of the secret to its prior.
pub fn build_lip_polytope(joint: &JointDistribution, epsilon: f64) -> HPolytope {
    let a = joint.data_count();
    let c = joint.secret_count();
    let m = joint.marginals();

    let mut p = HPolytope::new(a);
    p.add_eq(vec![1.0; a], 1.0).expect("arity fixed");
    for x in 0..a {
        let mut coeffs = vec![0.0; a];
        coeffs[x] = -1.0;
        p.add_ineq(coeffs, 0.0).expect("arity fixed");
    }
    for s in 0..c {
        let row: Vec<f64> = (0..a).map(|x| m.s_given_x[x].get(s)).collect();
        let p_s = m.p_s.get(s);
        let (coeffs, rhs) = unit_row(row.clone(), epsilon.exp() * p_s);
        p.add_ineq(coeffs, rhs).expect("arity fixed");
        let neg: Vec<f64> = row.iter().map(|v| -v).collect();
        let (coeffs, rhs) = unit_row(neg, -((-epsilon).exp()) * p_s);
        p.add_ineq(coeffs, rhs).expect("arity fixed");
    }
    p
}

/// Per-attribute side-channel polytope: feasible Q over attribute `target`
/// such that for every subset of the other attributes, every observable
/// context value, and every possible secret, the induced output
/// distribution shifts by at most e^{eps_j} relative to the context-only
/// one. The two bounds for one (context, secret) pair are vector
/// inequalities (one scalar row per output symbol) and are counted as two
/// constraints by [`HPolytope::ineq_count`].
pub fn build_srlip_polytope(
    joint: &JointDistribution,
    schema: &AttributeSchema,
    target: usize,
    epsilon_j: f64,
) -> Result<HPolytope, OptimizeError> {
    let m = schema.attribute_count();
    if target >= m {
        return Err(OptimizeError::Prob(ProbError::InvalidContext(format!(
            "target attribute {target} out of range"
        ))));
    }
    if schema.flat_size() != joint.data_count() {
        return Err(OptimizeError::Prob(ProbError::DimensionMismatch(format!(
            "schema flattens to {} values, joint has {}",
            schema.flat_size(),
            joint.data_count()
        ))));
    }
    let k = schema.size(target);
    let e_pos = epsilon_j.exp();
    let e_neg = (-epsilon_j).exp();
    let idx = |y: usize, x: usize| y * k + x;

    let mut p = HPolytope::new(k * k);
    for x in 0..k {
        let mut coeffs = vec![0.0; k * k];
        for y in 0..k {
            coeffs[idx(y, x)] = 1.0;
        }
        p.add_eq(coeffs, 1.0).expect("arity fixed");
    }
    for y in 0..k {
        for x in 0..k {
            let mut coeffs = vec![0.0; k * k];
            coeffs[idx(y, x)] = -1.0;
            p.add_ineq(coeffs, 0.0).expect("arity fixed");
        }
    }

    let others: Vec<usize> = (0..m).filter(|&j| j != target).collect();
    for subset in 0u32..(1 << others.len()) {
        let attrs: Vec<usize> =
            others.iter().copied().enumerate().filter(|&(i, _)| subset & (1 << i) != 0).map(|(_, j)| j).collect();
        let mut assignment = vec![0usize; attrs.len()];
        loop {
            let context: Vec<(usize, usize)> =
                attrs.iter().copied().zip(assignment.iter().copied()).collect();
            match condition_on_context(joint, schema, target, &context) {
                Ok(cond) => {
                    let u = &cond.given_context;
                    for w in cond.given_secret_and_context.iter().flatten() {
                        // (Q w)_y <= e^{eps_j} (Q u)_y for every output y.
                        let upper = (0..k).map(|y| {
                            let mut coeffs = vec![0.0; k * k];
                            for x in 0..k {
                                coeffs[idx(y, x)] = w.get(x) - e_pos * u.get(x);
                            }
                            unit_row(coeffs, 0.0)
                        });
                        p.add_ineq_block(upper).expect("arity fixed");
                        // e^{-eps_j} (Q u)_y <= (Q w)_y for every output y.
                        let lower = (0..k).map(|y| {
                            let mut coeffs = vec![0.0; k * k];
                            for x in 0..k {
                                coeffs[idx(y, x)] = e_neg * u.get(x) - w.get(x);
                            }
                            unit_row(coeffs, 0.0)
                        });
                        p.add_ineq_block(lower).expect("arity fixed");
                    }
                }
                Err(ProbError::ZeroProbabilityContext) => {
                    // Unobservable context: no constraint.
                }
                Err(e) => return Err(e.into()),
            }
            let mut carry = true;
            for (i, &attr) in attrs.iter().enumerate().rev() {
                if !carry {
                    break;
                }
                assignment[i] += 1;
                if assignment[i] < schema.size(attr) {
                    carry = false;
                } else {
                    assignment[i] = 0;
                }
            }
            if carry {
                break;
            }
        }
    }
    Ok(p)
}

pub fn optimize_ldp(
    joint: &JointDistribution,
    epsilon: f64,
) -> Result<OptimizationResult, OptimizeError> {
    optimize_ldp_with(joint, epsilon, &EnumerationOptions::default())
}

/// Enumerates the LDP polytope's vertices and evaluates I(X;Y) at each one;
/// the objective is convex, so the maximum over the polytope is attained at
/// a vertex.
pub fn optimize_ldp_with(
    joint: &JointDistribution,
    epsilon: f64,
    opts: &EnumerationOptions,
) -> Result<OptimizationResult, OptimizeError> {
    let start = Instant::now();
    let a = joint.data_count();
    let m = joint.marginals();
    let poly = build_ldp_polytope(joint, epsilon);
    let vs = enumerate_vertices_with(&poly, opts)?;

    let utilities: Vec<f64> = vs
        .vertices
        .par_iter()
        .map(|v| flat_mechanism_mi(v, a, &m.p_x))
        .collect();
    let best = argmax_with_lex_ties(&utilities);
    let raw = vs.vertices[best].clone();

    let mechanism = mechanism_from_flat(&raw, a)?;
    let mechanism = reduce_outputs(&mechanism, &m.p_x)?;
    let utility = mutual_information(&m.p_x, &mechanism)?;
    Ok(OptimizationResult {
        mechanism,
        utility,
        epsilon,
        notion: Notion::Ldp,
        diagnostics: Diagnostics {
            time_ms: start.elapsed().as_secs_f64() * 1e3,
            polytopes: vec![PolytopeDiag {
                affine_dim: poly.affine_dim(),
                ineq_count: poly.ineq_count(),
                vertex_count: vs.len(),
            }],
            raw_solution: vec![raw],
            split: None,
        },
    })
}

pub fn optimize_lip(
    joint: &JointDistribution,
    epsilon: f64,
) -> Result<OptimizationResult, OptimizeError> {
    optimize_lip_with(joint, epsilon, &EnumerationOptions::default())
}

/// Enumerates the vertices V of the posterior polytope and solves the
/// #V-dimensional linear program: maximize `sum_v w_v (H(X) - H(v))`
/// subject to `sum_v w_v v = p_X`, `w >= 0` (the weights sum to 1
/// automatically because every vertex lies on the simplex). The supported
/// vertices become the posterior columns of the mechanism.
pub fn optimize_lip_with(
    joint: &JointDistribution,
    epsilon: f64,
    opts: &EnumerationOptions,
) -> Result<OptimizationResult, OptimizeError> {
    let start = Instant::now();
    let a = joint.data_count();
    let m = joint.marginals();
    let poly = build_lip_polytope(joint, epsilon);
    let vs = enumerate_vertices_with(&poly, opts)?;

    let h_x = entropy(&m.p_x);
    let objective: Vec<f64> =
        vs.vertices.iter().map(|v| h_x - entropy_of_clamped(v)).collect();
    let eq: Vec<Constraint> = (0..a)
        .map(|x| {
            Constraint::new(vs.vertices.iter().map(|v| v[x]).collect(), m.p_x.get(x))
        })
        .collect();
    let lp = LinearProgram { objective, eq, ineq: vec![] };
    let sol = solve_lp(&lp).map_err(|e| match e {
        // p_X always lies in the polytope, so this cannot legitimately occur.
        PolytopeError::Infeasible => {
            PolytopeError::Numerical("LIP decomposition LP reported infeasible".into())
        }
        other => other,
    })?;

    let mut weights = Vec::with_capacity(sol.support.len());
    let mut posteriors = Vec::with_capacity(sol.support.len());
    let mut raw = Vec::with_capacity(sol.support.len());
    for &i in &sol.support {
        weights.push(sol.point[i]);
        raw.push(vs.vertices[i].clone());
        // Vertex coordinates are only accurate to the feasibility
        // tolerance; sub-tolerance dust must become an exact zero or it
        // shows up as spurious support in the mechanism.
        let cleaned: Vec<f64> = vs.vertices[i]
            .iter()
            .map(|&x| if x.abs() <= crate::tol::FEASIBILITY { 0.0 } else { x })
            .collect();
        posteriors.push(ProbabilityVector::from_weights(cleaned)?);
    }
    let rep = ReverseRepresentation {
        output_dist: ProbabilityVector::from_weights(weights)?,
        posteriors,
    };
    let mechanism = reverse_to_forward(&rep, &m.p_x)?;
    let mechanism = reduce_outputs(&mechanism, &m.p_x)?;
    let utility = mutual_information(&m.p_x, &mechanism)?;
    Ok(OptimizationResult {
        mechanism,
        utility,
        epsilon,
        notion: Notion::Lip,
        diagnostics: Diagnostics {
            time_ms: start.elapsed().as_secs_f64() * 1e3,
            polytopes: vec![PolytopeDiag {
                affine_dim: poly.affine_dim(),
                ineq_count: poly.ineq_count(),
                vertex_count: vs.len(),
            }],
            raw_solution: raw,
            split: None,
        },
    })
}

pub fn optimize_srlip(
    joint: &JointDistribution,
    schema: &AttributeSchema,
    epsilon: f64,
    split: Option<&[f64]>,
) -> Result<OptimizationResult, OptimizeError> {
    optimize_srlip_with(joint, schema, epsilon, split, &EnumerationOptions::default())
}

/// Per-attribute vertex optimization under the side-channel constraints,
/// composed into a product mechanism. With budgets `eps_j` summing to
/// `epsilon` the composition satisfies epsilon-SRLIP; the default split is
/// uniform. The result is feasible but not necessarily optimal among all
/// SRLIP mechanisms.
pub fn optimize_srlip_with(
    joint: &JointDistribution,
    schema: &AttributeSchema,
    epsilon: f64,
    split: Option<&[f64]>,
    opts: &EnumerationOptions,
) -> Result<OptimizationResult, OptimizeError> {
    let start = Instant::now();
    let m = schema.attribute_count();
    let split: Vec<f64> = match split {
        Some(s) => {
            if s.len() != m {
                return Err(OptimizeError::BadSplit(format!(
                    "{} budget entries for {m} attributes",
                    s.len()
                )));
            }
            if s.iter().any(|&e| e < 0.0) {
                return Err(OptimizeError::BadSplit("negative entry".into()));
            }
            let total: f64 = s.iter().sum();
            if (total - epsilon).abs() > 1e-12 {
                return Err(OptimizeError::BadSplit(format!(
                    "entries sum to {total}, expected epsilon = {epsilon}"
                )));
            }
            s.to_vec()
        }
        None => vec![epsilon / m as f64; m],
    };

    let p_x = joint.marginals().p_x;
    let mut mechs = Vec::with_capacity(m);
    let mut polytopes = Vec::with_capacity(m);
    let mut raw_solution = Vec::with_capacity(m);
    for j in 0..m {
        let k = schema.size(j);
        let poly = build_srlip_polytope(joint, schema, j, split[j])?;
        let vs = enumerate_vertices_with(&poly, opts)?;
        let p_xj = condition_on_context(joint, schema, j, &[])?.given_context;
        let utilities: Vec<f64> =
            vs.vertices.par_iter().map(|v| flat_mechanism_mi(v, k, &p_xj)).collect();
        let best = argmax_with_lex_ties(&utilities);
        let raw = vs.vertices[best].clone();
        mechs.push(mechanism_from_flat(&raw, k)?);
        raw_solution.push(raw);
        polytopes.push(PolytopeDiag {
            affine_dim: poly.affine_dim(),
            ineq_count: poly.ineq_count(),
            vertex_count: vs.len(),
        });
    }

    let composed = compose_product(&mechs, schema)?;
    let mechanism = reduce_outputs(&composed, &p_x)?;
    let utility = mutual_information(&p_x, &mechanism)?;
    Ok(OptimizationResult {
        mechanism,
        utility,
        epsilon,
        notion: Notion::Srlip,
        diagnostics: Diagnostics {
            time_ms: start.elapsed().as_secs_f64() * 1e3,
            polytopes,
            raw_solution,
            split: Some(split),
        },
    })
}

/// I(X;Y) for a flattened row-major mechanism candidate with `a` inputs;
/// tiny negative entries from the geometry are clamped.
fn flat_mechanism_mi(flat: &[f64], a: usize, p_x: &ProbabilityVector) -> f64 {
    let b = flat.len() / a;
    let mut mi = 0.0;
    for y in 0..b {
        let row = &flat[y * a..(y + 1) * a];
        let q_y: f64 = row.iter().zip(p_x.iter()).map(|(&q, &p)| q.max(0.0) * p).sum();
        if q_y <= 0.0 {
            continue;
        }
        for x in 0..a {
            let q = row[x].max(0.0);
            if q > 0.0 && p_x.get(x) > 0.0 {
                mi += p_x.get(x) * q * (q / q_y).ln();
            }
        }
    }
    mi.max(0.0)
}

fn mechanism_from_flat(flat: &[f64], a: usize) -> Result<Mechanism, MechanismError> {
    let b = flat.len() / a;
    let rows: Vec<Vec<f64>> = (0..b).map(|y| flat[y * a..(y + 1) * a].to_vec()).collect();
    Mechanism::from_rows_renormalized(&rows)
}

/// Index of the maximum, keeping the earliest entry among near-ties; with
/// lex-sorted candidates this picks the lexicographically smallest optimum.
fn argmax_with_lex_ties(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] + TIE_TOL {
            best = i;
        }
    }
    best
}

fn entropy_of_clamped(v: &[f64]) -> f64 {
    let clamped: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    entropy_of_slice(&clamped)
}
