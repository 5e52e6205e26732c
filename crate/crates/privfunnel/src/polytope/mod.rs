//! H-representation polytopes, complete vertex enumeration, and a dense
//! linear-program solver. This is the computational engine behind every
//! optimizer in the crate: the privacy constraint sets are bounded convex
//! polytopes, the optima sit at vertices or at solutions of a small LP.

mod enumerate;
mod lp;

pub use enumerate::{enumerate_vertices, enumerate_vertices_with, EnumerationOptions};
pub use lp::{solve_lp, LinearProgram, LpSolution};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolytopeError {
    #[error("polytope is unbounded (recession ray detected)")]
    Unbounded,
    #[error("polytope is empty")]
    Infeasible,
    #[error("ambient dimension {dim} exceeds the enumeration guard {max} (set PRIVFUNNEL_MAX_DIM to raise it)")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("constraint has {got} coefficients, ambient dimension is {want}")]
    BadConstraint { got: usize, want: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// One linear constraint, `coeffs . v = rhs` or `coeffs . v <= rhs`
/// depending on which list of the polytope it sits in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.coeffs.iter().zip(point).map(|(c, v)| c * v).sum()
    }
}

/// A polytope in H-representation: equality constraints plus `<=`
/// inequalities over an ambient space of dimension `dim`. Callers only
/// construct bounded sets; enumeration rejects unbounded input.
///
/// Inequality rows carry a group id. Scalar constraints added one at a
/// time each get a fresh group; the rows of a vector-valued constraint
/// (one scalar row per output symbol, as in the side-channel builder)
/// share a group. [`HPolytope::ineq_count`] counts groups, which is the
/// unit the complexity diagnostics use; the feasible set always uses
/// every row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HPolytope {
    dim: usize,
    eq: Vec<Constraint>,
    ineq: Vec<Constraint>,
    ineq_group: Vec<usize>,
    next_group: usize,
}

impl HPolytope {
    pub fn new(dim: usize) -> Self {
        Self { dim, eq: Vec::new(), ineq: Vec::new(), ineq_group: Vec::new(), next_group: 0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add_eq(&mut self, coeffs: Vec<f64>, rhs: f64) -> Result<(), PolytopeError> {
        self.check(&coeffs)?;
        self.eq.push(Constraint::new(coeffs, rhs));
        Ok(())
    }

    /// Adds one scalar inequality `coeffs . v <= rhs` as its own group.
    pub fn add_ineq(&mut self, coeffs: Vec<f64>, rhs: f64) -> Result<(), PolytopeError> {
        self.add_ineq_block(std::iter::once((coeffs, rhs)))
    }

    /// Adds the scalar rows of one vector-valued inequality; they share a
    /// single group id.
    pub fn add_ineq_block<I>(&mut self, rows: I) -> Result<(), PolytopeError>
    where
        I: IntoIterator<Item = (Vec<f64>, f64)>,
    {
        let group = self.next_group;
        let mut any = false;
        for (coeffs, rhs) in rows {
            self.check(&coeffs)?;
            self.ineq.push(Constraint::new(coeffs, rhs));
            self.ineq_group.push(group);
            any = true;
        }
        if any {
            self.next_group += 1;
        }
        Ok(())
    }

    fn check(&self, coeffs: &[f64]) -> Result<(), PolytopeError> {
        if coeffs.len() != self.dim {
            return Err(PolytopeError::BadConstraint { got: coeffs.len(), want: self.dim });
        }
        Ok(())
    }

    pub fn eq(&self) -> &[Constraint] {
        &self.eq
    }

    pub fn ineq(&self) -> &[Constraint] {
        &self.ineq
    }

    /// Number of inequality constraints, counting the rows of a vector
    /// constraint once.
    pub fn ineq_count(&self) -> usize {
        let mut groups: Vec<usize> = self.ineq_group.clone();
        groups.sort_unstable();
        groups.dedup();
        groups.len()
    }

    /// Number of scalar inequality rows.
    pub fn ineq_rows(&self) -> usize {
        self.ineq.len()
    }

    /// Dimension of the affine hull cut out by the equality constraints
    /// (ambient dimension minus the rank of the equality system). This is
    /// the `d` of the enumeration complexity model; implicit equalities
    /// hiding among the inequalities are not detected.
    pub fn affine_dim(&self) -> usize {
        if self.eq.is_empty() {
            return self.dim;
        }
        let rows: Vec<Vec<f64>> = self.eq.iter().map(|c| c.coeffs.clone()).collect();
        self.dim - rank_of_rows(&rows, 1e-10)
    }

    /// True when `point` satisfies every constraint within `tol` (scaled by
    /// each row's magnitude).
    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        let scale = |c: &Constraint| {
            let norm = c.coeffs.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
            norm.max(c.rhs.abs()).max(1.0)
        };
        self.eq.iter().all(|c| (c.eval(point) - c.rhs).abs() <= tol * scale(c))
            && self.ineq.iter().all(|c| c.eval(point) - c.rhs <= tol * scale(c))
    }
}

/// The complete vertex set of a bounded polytope, lexicographically sorted.
/// `tight` holds, per vertex, the indices (into the inequality list) of the
/// constraints active at that vertex; equalities are tight by definition.
#[derive(Debug, Clone)]
pub struct VertexSet {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub tight: Vec<Vec<usize>>,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Rank of a list of row vectors via modified Gram-Schmidt with
/// re-orthogonalization. Every row is unit-normalized first so the result
/// is insensitive to per-row scaling; `tol` is then absolute.
pub(crate) fn rank_of_rows(rows: &[Vec<f64>], tol: f64) -> usize {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for row in rows {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut v: Vec<f64> = row.iter().map(|x| x / norm).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
        }
        let residual = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if residual > tol {
            for x in v.iter_mut() {
                *x /= residual;
            }
            basis.push(v);
        }
    }
    basis.len()
}

/// Lexicographic comparison of float vectors; total because the geometry
/// code never produces NaN.
pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).expect("no NaN in vertex data") {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Shared helper: drop near-duplicate points (max-norm within `tol`),
/// keeping the lexicographically smallest representative, and return the
/// survivors sorted.
pub(crate) fn dedup_sorted(mut points: Vec<Vec<f64>>, tol_dedup: f64) -> Vec<Vec<f64>> {
    points.sort_by(|a, b| lex_cmp(a, b));
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    'outer: for p in points {
        // After lex sorting, any duplicate of p has first coordinate within
        // tol_dedup, so only a suffix window of `kept` needs checking.
        for q in kept.iter().rev() {
            if !p.is_empty() && p[0] - q[0] > tol_dedup {
                break;
            }
            let close = p.iter().zip(q).all(|(x, y)| (x - y).abs() <= tol_dedup);
            if close {
                continue 'outer;
            }
        }
        kept.push(p);
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_counting() {
        let mut p = HPolytope::new(2);
        p.add_ineq(vec![1.0, 0.0], 1.0).unwrap();
        p.add_ineq(vec![0.0, 1.0], 1.0).unwrap();
        p.add_ineq_block(vec![(vec![1.0, 1.0], 1.0), (vec![1.0, -1.0], 1.0)]).unwrap();
        assert_eq!(p.ineq_rows(), 4);
        assert_eq!(p.ineq_count(), 3);
    }

    #[test]
    fn affine_dim_counts_independent_equalities() {
        let mut p = HPolytope::new(3);
        assert_eq!(p.affine_dim(), 3);
        p.add_eq(vec![1.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(p.affine_dim(), 2);
        // A dependent equality must not reduce the dimension further.
        p.add_eq(vec![2.0, 2.0, 2.0], 2.0).unwrap();
        assert_eq!(p.affine_dim(), 2);
        p.add_eq(vec![1.0, 0.0, 0.0], 0.5).unwrap();
        assert_eq!(p.affine_dim(), 1);
    }

    #[test]
    fn rejects_wrong_arity() {
        let mut p = HPolytope::new(2);
        assert!(p.add_eq(vec![1.0], 0.0).is_err());
        assert!(p.add_ineq(vec![1.0, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn dedup_keeps_lex_smallest() {
        let pts = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0 + 1e-9, 0.0],
            vec![0.0, 1.0 - 1e-9],
        ];
        let kept = dedup_sorted(pts, 1e-7);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0], vec![0.0, 1.0 - 1e-9]);
        assert_eq!(kept[1], vec![1.0, 0.0]);
    }
}
