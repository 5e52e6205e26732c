//! Independent brute-force oracles used by the test suites. Everything here
//! avoids the library's enumeration and optimization paths on purpose.

use nalgebra::{DMatrix, DVector};
use privfunnel::polytope::HPolytope;

/// Brute-force vertex enumeration: solve every dim-subset of constraints
/// taken as equalities, keep unique solutions that are feasible, dedup, and
/// sort lexicographically. Exponential; only for small instances.
pub fn vertex_oracle(p: &HPolytope) -> Vec<Vec<f64>> {
    let dim = p.dim();
    let mut rows: Vec<(&[f64], f64)> = Vec::new();
    for c in p.eq() {
        rows.push((&c.coeffs, c.rhs));
    }
    for c in p.ineq() {
        rows.push((&c.coeffs, c.rhs));
    }
    let n = rows.len();
    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut subset: Vec<usize> = (0..dim).collect();
    if n < dim {
        return found;
    }
    loop {
        let a = DMatrix::from_fn(dim, dim, |r, c| rows[subset[r]].0[c]);
        let b = DVector::from_fn(dim, |r, _| rows[subset[r]].1);
        let svd = a.clone().svd(true, true);
        let full_rank = svd.singular_values.iter().all(|&s| s > 1e-9 * svd.singular_values[0]);
        if full_rank && svd.singular_values[0] > 1e-12 {
            if let Ok(x) = svd.solve(&b, 1e-12) {
                let point: Vec<f64> = x.iter().copied().collect();
                if feasible(p, &point) {
                    found.push(point);
                }
            }
        }
        // Next dim-subset of 0..n in lexicographic order.
        let mut i = dim;
        loop {
            if i == 0 {
                return finish(found);
            }
            i -= 1;
            if subset[i] != i + n - dim {
                subset[i] += 1;
                for j in i + 1..dim {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn feasible(p: &HPolytope, point: &[f64]) -> bool {
    let scale = |coeffs: &[f64], rhs: f64| {
        coeffs.iter().map(|x| x.abs()).fold(0.0f64, f64::max).max(rhs.abs()).max(1.0)
    };
    for c in p.eq() {
        if (c.eval(point) - c.rhs).abs() > 1e-7 * scale(&c.coeffs, c.rhs) {
            return false;
        }
    }
    for c in p.ineq() {
        if c.eval(point) - c.rhs > 1e-7 * scale(&c.coeffs, c.rhs) {
            return false;
        }
    }
    true
}

fn finish(mut found: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    found.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    found.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (*x - *y).abs() <= 1e-7));
    found
}
