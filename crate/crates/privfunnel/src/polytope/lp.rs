//! Dense two-phase simplex over nonnegative variables.
//!
//! Small and deterministic rather than fast: every instance this crate
//! produces has at most a few hundred variables. Bland's rule is used for
//! both the entering and leaving choice, which rules out cycling, and ties
//! between equal-value optima are broken by an explicit lexicographic
//! refinement pass so repeated runs return the identical point.

use super::{Constraint, PolytopeError};
use crate::tol;

/// Maximize `objective . w` subject to `eq`, `ineq` and `w >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq: Vec<Constraint>,
    pub ineq: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub point: Vec<f64>,
    /// Indices of coordinates that are nonzero (above [`tol::LP_OPT`]).
    pub support: Vec<usize>,
}

const PIVOT_TOL: f64 = 1e-11;
const PHASE1_TOL: f64 = 1e-8;

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, PolytopeError> {
    let nv = lp.objective.len();
    for c in lp.eq.iter().chain(&lp.ineq) {
        if c.coeffs.len() != nv {
            return Err(PolytopeError::BadConstraint { got: c.coeffs.len(), want: nv });
        }
    }
    let point = solve_once(lp)?;
    let value: f64 = lp.objective.iter().zip(&point).map(|(c, w)| c * w).sum();

    // Lexicographic refinement: among optima, minimize coordinate 0, pin
    // it, minimize coordinate 1, and so on. Each step stays on the optimal
    // face, so the final point is the lexicographically smallest vertex of
    // that face. The current witness point spares most solves: a pinned-
    // feasible witness with w_i = 0 already proves min w_i = 0, and every
    // actual solve returns a new witness that zeroes out more coordinates.
    let mut refined = lp.clone();
    refined.eq.push(Constraint::new(lp.objective.clone(), value));
    let mut witness = point;
    let mut pinned = vec![0.0; nv];
    for i in 0..nv {
        if witness[i] > tol::LP_OPT {
            let mut step = refined.clone();
            step.objective = vec![0.0; nv];
            step.objective[i] = -1.0;
            witness = solve_once(&step).map_err(|e| match e {
                // The refined system contains the optimum, so emptiness
                // here is a tolerance artifact, not a real infeasibility.
                PolytopeError::Infeasible => {
                    PolytopeError::Numerical("lexicographic refinement lost feasibility".into())
                }
                other => other,
            })?;
        }
        pinned[i] = if witness[i] > tol::LP_OPT { witness[i] } else { 0.0 };
        let mut pin = vec![0.0; nv];
        pin[i] = 1.0;
        refined.eq.push(Constraint::new(pin, pinned[i]));
    }

    let support = (0..nv).filter(|&i| pinned[i] > tol::LP_OPT).collect();
    Ok(LpSolution { value, point: pinned, support })
}

/// One plain two-phase solve; returns an optimal point without tie-break.
fn solve_once(lp: &LinearProgram) -> Result<Vec<f64>, PolytopeError> {
    let nv = lp.objective.len();
    let n_slack = lp.ineq.len();
    let n = nv + n_slack;
    let m = lp.eq.len() + lp.ineq.len();

    // Standard form rows: [A | slack] z = b with b >= 0.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs: Vec<f64> = Vec::with_capacity(m);
    for c in &lp.eq {
        let mut row = vec![0.0; n];
        row[..nv].copy_from_slice(&c.coeffs);
        rows.push(row);
        rhs.push(c.rhs);
    }
    for (i, c) in lp.ineq.iter().enumerate() {
        let mut row = vec![0.0; n];
        row[..nv].copy_from_slice(&c.coeffs);
        row[nv + i] = 1.0;
        rows.push(row);
        rhs.push(c.rhs);
    }
    for (row, b) in rows.iter_mut().zip(rhs.iter_mut()) {
        if *b < 0.0 {
            for x in row.iter_mut() {
                *x = -*x;
            }
            *b = -*b;
        }
    }

    let mut t = Tableau::new(rows, rhs, n);
    t.phase_one()?;
    let mut obj = vec![0.0; n];
    obj[..nv].copy_from_slice(&lp.objective);
    t.phase_two(&obj)?;
    let z = t.solution();
    Ok(z[..nv].to_vec())
}

/// Dense tableau: `m` rows over `n` structural+slack columns plus `m`
/// artificial columns and a rhs column.
struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n: usize,
    n_total: usize,
    artificial_ok: bool,
}

impl Tableau {
    fn new(rows: Vec<Vec<f64>>, rhs: Vec<f64>, n: usize) -> Self {
        let m = rows.len();
        let n_total = n + m;
        let mut t = Vec::with_capacity(m);
        for (i, (row, b)) in rows.into_iter().zip(rhs).enumerate() {
            let mut full = vec![0.0; n_total + 1];
            full[..n].copy_from_slice(&row);
            full[n + i] = 1.0;
            full[n_total] = b;
            t.push(full);
        }
        let basis = (n..n_total).collect();
        Self { t, basis, n, n_total, artificial_ok: true }
    }

    fn m(&self) -> usize {
        self.t.len()
    }

    /// Reduced-cost row for maximizing `obj` (length n_total, artificials
    /// costed separately by the caller), given the current basis.
    fn reduced_costs(&self, obj: &[f64]) -> Vec<f64> {
        let mut cost = obj.to_vec();
        cost.push(0.0); // objective value slot (negated)
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for j in 0..=self.n_total {
                    cost[j] -= cb * self.t[r][j];
                }
            }
        }
        cost
    }

    fn pivot(&mut self, row: usize, col: usize, cost: &mut [f64]) {
        let piv = self.t[row][col];
        for x in self.t[row].iter_mut() {
            *x /= piv;
        }
        for r in 0..self.m() {
            if r != row {
                let f = self.t[r][col];
                if f != 0.0 {
                    for j in 0..=self.n_total {
                        let delta = f * self.t[row][j];
                        self.t[r][j] -= delta;
                    }
                }
            }
        }
        let f = cost[col];
        if f != 0.0 {
            for j in 0..=self.n_total {
                cost[j] -= f * self.t[row][j];
            }
        }
        self.basis[row] = col;
    }

    /// Bland's rule simplex loop on the given reduced-cost row.
    fn run(&mut self, cost: &mut Vec<f64>) -> Result<(), PolytopeError> {
        loop {
            let limit = if self.artificial_ok { self.n_total } else { self.n };
            let Some(col) = (0..limit).find(|&j| {
                cost[j] > tol::LP_OPT && !self.basis.contains(&j)
            }) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m() {
                let a = self.t[r][col];
                if a > PIVOT_TOL {
                    let ratio = self.t[r][self.n_total] / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - PIVOT_TOL
                                || (ratio < lratio + PIVOT_TOL
                                    && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, col, cost),
                None => return Err(PolytopeError::Unbounded),
            }
        }
    }

    fn phase_one(&mut self) -> Result<(), PolytopeError> {
        // Maximize minus the sum of artificials.
        let mut obj = vec![0.0; self.n_total];
        for j in self.n..self.n_total {
            obj[j] = -1.0;
        }
        let mut cost = self.reduced_costs(&obj);
        self.run(&mut cost)?;
        // The rhs slot of the cost row holds minus the objective value; the
        // phase-one objective is minus the artificial sum.
        let artificial_sum = cost[self.n_total];
        if artificial_sum > PHASE1_TOL {
            return Err(PolytopeError::Infeasible);
        }
        // Drive leftover artificials out of the basis (their value is 0, so
        // any nonzero pivot in a real column is a degenerate, safe pivot).
        for r in 0..self.m() {
            if self.basis[r] >= self.n {
                if let Some(col) = (0..self.n).find(|&j| self.t[r][j].abs() > 1e-9) {
                    self.pivot(r, col, &mut cost);
                }
                // A row with no real coefficients is redundant; its
                // artificial stays basic at value zero, which is harmless
                // because artificials are blocked from phase two.
            }
        }
        self.artificial_ok = false;
        Ok(())
    }

    fn phase_two(&mut self, obj: &[f64]) -> Result<(), PolytopeError> {
        let mut full = vec![0.0; self.n_total];
        full[..self.n].copy_from_slice(obj);
        let mut cost = self.reduced_costs(&full);
        self.run(&mut cost)
    }

    fn solution(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.n_total];
        for (r, &b) in self.basis.iter().enumerate() {
            z[b] = self.t[r][self.n_total];
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} != {b}");
    }

    fn simplex_eq(dim: usize) -> Vec<Constraint> {
        vec![Constraint::new(vec![1.0; dim], 1.0)]
    }

    #[test]
    fn corner_optimum_on_simplex() {
        let lp = LinearProgram {
            objective: vec![1.0, 0.0],
            eq: simplex_eq(2),
            ineq: vec![],
        };
        let sol = solve_lp(&lp).unwrap();
        close(sol.value, 1.0, 1e-9);
        close(sol.point[0], 1.0, 1e-9);
        close(sol.point[1], 0.0, 1e-9);
        assert_eq!(sol.support, vec![0]);
    }

    #[test]
    fn degenerate_objective_breaks_ties_lexicographically() {
        let lp = LinearProgram {
            objective: vec![1.0, 1.0],
            eq: simplex_eq(2),
            ineq: vec![],
        };
        let sol = solve_lp(&lp).unwrap();
        close(sol.value, 1.0, 1e-9);
        // Every point is optimal; the lexicographically smallest vertex
        // puts all mass on the last coordinate.
        close(sol.point[0], 0.0, 1e-9);
        close(sol.point[1], 1.0, 1e-9);
    }

    #[test]
    fn bounded_box_instance_by_hand() {
        // max 2x + y, x <= 0.6, y <= 0.7, x + y <= 1: checking the basic
        // feasible solutions by hand gives 1.6 at (0.6, 0.4).
        let lp = LinearProgram {
            objective: vec![2.0, 1.0],
            eq: vec![],
            ineq: vec![
                Constraint::new(vec![1.0, 0.0], 0.6),
                Constraint::new(vec![0.0, 1.0], 0.7),
                Constraint::new(vec![1.0, 1.0], 1.0),
            ],
        };
        let sol = solve_lp(&lp).unwrap();
        close(sol.value, 1.6, 1e-9);
        close(sol.point[0], 0.6, 1e-9);
        close(sol.point[1], 0.4, 1e-9);
        assert_eq!(sol.support, vec![0, 1]);
    }

    #[test]
    fn detects_infeasible() {
        let lp = LinearProgram {
            objective: vec![1.0],
            eq: vec![Constraint::new(vec![1.0], 2.0), Constraint::new(vec![1.0], 1.0)],
            ineq: vec![],
        };
        assert_eq!(solve_lp(&lp).unwrap_err(), PolytopeError::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let lp = LinearProgram { objective: vec![1.0], eq: vec![], ineq: vec![] };
        assert_eq!(solve_lp(&lp).unwrap_err(), PolytopeError::Unbounded);
    }

    #[test]
    fn negative_rhs_rows_are_handled() {
        // -x <= -0.25 forces x >= 0.25.
        let lp = LinearProgram {
            objective: vec![-1.0],
            eq: vec![],
            ineq: vec![Constraint::new(vec![-1.0], -0.25)],
        };
        let sol = solve_lp(&lp).unwrap();
        close(sol.point[0], 0.25, 1e-9);
    }
}
