//! Complete vertex enumeration for bounded H-polytopes.
//!
//! The algorithm is the double description method run on the homogenization
//! of the polytope, after first eliminating the equality constraints by
//! restricting to their affine hull:
//!
//! 1. write the feasible set as `v = v0 + N u` with `N` an orthonormal basis
//!    of the equality system's null space;
//! 2. homogenize the reduced inequalities to a pointed cone in one extra
//!    dimension and run double description, inserting one inequality at a
//!    time (most-violated first) and keeping the extreme-ray invariant with
//!    an algebraic (rank-based) adjacency test;
//! 3. map rays with a positive homogenizing coordinate back to vertices,
//!    rays without one witness unboundedness;
//! 4. polish every candidate against its tight constraints, deduplicate,
//!    sort, and certify (tight set of full affine rank, feasibility within
//!    tolerance). Candidates that fail certification are interior points of
//!    faces produced by numerical drift and are discarded.
//!
//! The completeness contract is checked in the test suite against a
//! brute-force constraint-subset oracle on low-dimensional instances.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::HashMap;

use super::{dedup_sorted, rank_of_rows, HPolytope, PolytopeError, VertexSet};
use crate::tol;

#[derive(Debug, Clone)]
pub struct EnumerationOptions {
    /// Reject polytopes whose ambient dimension exceeds this.
    pub max_dim: usize,
    /// Constraint feasibility / tightness tolerance.
    pub feas_tol: f64,
    /// Vertex deduplication tolerance (max-norm).
    pub dedup_tol: f64,
    /// Abort if the intermediate ray set ever exceeds this.
    pub ray_limit: usize,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            max_dim: tol::DEFAULT_MAX_DIM,
            feas_tol: tol::FEASIBILITY,
            dedup_tol: tol::VERTEX_DEDUP,
            ray_limit: 5_000_000,
        }
    }
}

/// Sign-classification tolerance inside the double description loop; rows
/// are unit-normalized and rays max-normalized, so dots are O(1).
const SIGN_TOL: f64 = 1e-9;
/// Loose tightness used to select the constraint system a candidate vertex
/// is polished against.
const POLISH_TOL: f64 = 1e-6;

pub fn enumerate_vertices(p: &HPolytope) -> Result<VertexSet, PolytopeError> {
    enumerate_vertices_with(p, &EnumerationOptions::default())
}

pub fn enumerate_vertices_with(
    p: &HPolytope,
    opts: &EnumerationOptions,
) -> Result<VertexSet, PolytopeError> {
    let dim = p.dim();
    if dim > opts.max_dim {
        return Err(PolytopeError::DimensionTooLarge { dim, max: opts.max_dim });
    }
    if dim == 0 {
        return Err(PolytopeError::Numerical("zero-dimensional ambient space".into()));
    }

    let hull = AffineHull::of(p, opts)?;
    let free = hull.basis.len();

    // The equalities pin a single point; it is the one vertex if feasible.
    if free == 0 {
        return finalize(p, opts, vec![hull.origin.clone()]);
    }

    // Reduced, homogenized, unit-normalized rows: row . (u, t) <= 0.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(p.ineq().len() + 1);
    for c in p.ineq() {
        let mut r: Vec<f64> = hull.basis.iter().map(|n| dot(&c.coeffs, n)).collect();
        let offset = c.rhs - c.eval(&hull.origin);
        r.push(-offset);
        let norm = l2(&r);
        let coeff_norm = l2(&r[..free]);
        if coeff_norm <= 1e-12 * norm.max(1.0) {
            // Constant on the affine hull: either vacuous or empty.
            if offset < -opts.feas_tol {
                return Err(PolytopeError::Infeasible);
            }
            continue;
        }
        for x in r.iter_mut() {
            *x /= norm;
        }
        rows.push(r);
    }
    let mut t_row = vec![0.0; free + 1];
    t_row[free] = -1.0;
    rows.push(t_row);

    let cone_dim = free + 1;
    if rank_of_rows(&rows, 1e-10) < cone_dim {
        // The homogenized cone contains a line, i.e. the feasible set has a
        // recession direction (or an entire affine subspace).
        return Err(PolytopeError::Unbounded);
    }

    let rays = double_description(&rows, cone_dim, opts)?;

    // Split rays at t = 0: positive-t rays are vertices, zero-t rays are
    // recession directions of a nonempty feasible set.
    let mut candidates = Vec::new();
    let mut recession = false;
    for ray in &rays {
        let t = ray[free];
        if t > SIGN_TOL {
            let point: Vec<f64> = (0..p.dim())
                .map(|i| {
                    hull.origin[i]
                        + hull.basis.iter().enumerate().map(|(j, n)| n[i] * ray[j] / t).sum::<f64>()
                })
                .collect();
            candidates.push(point);
        } else {
            recession = true;
        }
    }
    if candidates.is_empty() {
        return Err(PolytopeError::Infeasible);
    }
    if recession {
        return Err(PolytopeError::Unbounded);
    }
    finalize(p, opts, candidates)
}

/// Affine hull of the equality system: feasible set = origin + span(basis).
struct AffineHull {
    origin: Vec<f64>,
    basis: Vec<Vec<f64>>,
}

impl AffineHull {
    fn of(p: &HPolytope, opts: &EnumerationOptions) -> Result<Self, PolytopeError> {
        let dim = p.dim();
        if p.eq().is_empty() {
            let mut basis = Vec::with_capacity(dim);
            for i in 0..dim {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                basis.push(e);
            }
            return Ok(Self { origin: vec![0.0; dim], basis });
        }

        let k = p.eq().len();
        let e = DMatrix::from_fn(k, dim, |r, c| p.eq()[r].coeffs[c]);
        let rhs = DVector::from_fn(k, |r, _| p.eq()[r].rhs);
        let svd = e.clone().svd(true, true);
        let origin = svd
            .solve(&rhs, 1e-12)
            .map_err(|m| PolytopeError::Numerical(m.to_string()))?;
        let residual = (&e * &origin - &rhs).amax();
        let scale = rhs.amax().max(1.0);
        if residual > opts.feas_tol * scale {
            return Err(PolytopeError::Infeasible);
        }

        // Orthonormal basis of the row space, extended to the null space.
        let mut row_basis: Vec<Vec<f64>> = Vec::new();
        for r in 0..k {
            let v: Vec<f64> = (0..dim).map(|c| e[(r, c)]).collect();
            if let Some(u) = orthonormal_residual(&v, &row_basis, 1e-10) {
                row_basis.push(u);
            }
        }
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for i in 0..dim {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            let mut against: Vec<&Vec<f64>> = row_basis.iter().collect();
            against.extend(basis.iter());
            if let Some(u) = orthonormal_residual_refs(&v, &against, 1e-10) {
                basis.push(u);
            }
        }
        debug_assert_eq!(basis.len(), dim - row_basis.len());
        Ok(Self { origin: origin.as_slice().to_vec(), basis })
    }
}

/// Double description on the pointed cone `{x : rows . x <= 0}`; returns
/// the extreme rays, max-normalized.
fn double_description(
    rows: &[Vec<f64>],
    cone_dim: usize,
    opts: &EnumerationOptions,
) -> Result<Vec<Vec<f64>>, PolytopeError> {
    let m = rows.len();
    let words = m.div_ceil(64);
    let trace = std::env::var_os("PRIVFUNNEL_DD_TRACE").is_some();
    if trace {
        for (i, r) in rows.iter().enumerate() {
            eprintln!("row {i}: {r:?}");
        }
    }

    // Initial simplicial cone from a well-conditioned row subset.
    let chosen = greedy_independent_rows(rows, cone_dim)
        .ok_or_else(|| PolytopeError::Numerical("could not find an initial basis".into()))?;
    if trace {
        eprintln!("initial basis rows: {chosen:?}");
    }
    let b = DMatrix::from_fn(cone_dim, cone_dim, |r, c| rows[chosen[r]][c]);
    let b_inv = b
        .full_piv_lu()
        .try_inverse()
        .ok_or_else(|| PolytopeError::Numerical("initial basis not invertible".into()))?;

    let mut processed = vec![false; m];
    for &i in &chosen {
        processed[i] = true;
    }
    let mut rays: Vec<Ray> = (0..cone_dim)
        .map(|j| {
            let mut coords: Vec<f64> = (0..cone_dim).map(|i| -b_inv[(i, j)]).collect();
            normalize_max(&mut coords);
            let mask = tight_mask(rows, &processed, &coords, words);
            Ray { coords, mask }
        })
        .collect();

    loop {
        // Most-cutting unprocessed row next; ties to the lowest index.
        let counts: Vec<(usize, usize)> = (0..m)
            .into_par_iter()
            .map(|i| {
                if processed[i] {
                    None
                } else {
                    let n =
                        rays.iter().filter(|r| dot(&rows[i], &r.coords) > SIGN_TOL).count();
                    Some((i, n))
                }
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect();
        if counts.is_empty() {
            break;
        }
        let mut pick = counts[0].0;
        let mut best = counts[0].1;
        for &(i, n) in &counts {
            if n > best {
                pick = i;
                best = n;
            }
        }

        if best == 0 {
            // None of the remaining rows cuts anything: they only mark
            // tightness. Handle them all and stop.
            for (i, _) in counts {
                processed[i] = true;
                for ray in rays.iter_mut() {
                    if dot(&rows[i], &ray.coords).abs() <= SIGN_TOL {
                        set_bit(&mut ray.mask, i);
                    }
                }
            }
            if trace {
                eprintln!("final rays:");
                for (k, r) in rays.iter().enumerate() {
                    eprintln!("  ray {k}: {:?} mask {:b}", r.coords, r.mask[0]);
                }
            }
            break;
        }

        let row = &rows[pick];
        let dots: Vec<f64> = rays.par_iter().map(|r| dot(row, &r.coords)).collect();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut zero = Vec::new();
        for (k, &s) in dots.iter().enumerate() {
            if s > SIGN_TOL {
                pos.push(k);
            } else if s < -SIGN_TOL {
                neg.push(k);
            } else {
                zero.push(k);
            }
        }

        processed[pick] = true;
        if trace {
            eprintln!(
                "insert row {pick} {:?}: pos {:?} neg {:?} zero {:?}",
                rows[pick], pos, neg, zero
            );
            for (k, r) in rays.iter().enumerate() {
                eprintln!("  ray {k}: {:?} mask {:b}", r.coords, r.mask[0]);
            }
        }
        let new_rays: Vec<Vec<Ray>> = pos
            .par_iter()
            .map(|&ip| {
                let mut local = Vec::new();
                let mut adjacency_memo: HashMap<Vec<u64>, bool> = HashMap::new();
                for &in_ in &neg {
                    let zmask = and_mask(&rays[ip].mask, &rays[in_].mask);
                    if (popcount(&zmask) as usize) + 2 < cone_dim {
                        continue;
                    }
                    let adjacent = *adjacency_memo.entry(zmask.clone()).or_insert_with(|| {
                        common_tight_rank(rows, &zmask) == cone_dim - 2
                    });
                    if !adjacent {
                        continue;
                    }
                    let (sp, sn) = (dots[ip], dots[in_]);
                    let mut coords: Vec<f64> = rays[ip]
                        .coords
                        .iter()
                        .zip(&rays[in_].coords)
                        .map(|(p_c, n_c)| sp * n_c - sn * p_c)
                        .collect();
                    normalize_max(&mut coords);
                    let mask = tight_mask(rows, &processed, &coords, words);
                    local.push(Ray { coords, mask });
                }
                local
            })
            .collect();

        let mut next: Vec<Ray> = Vec::with_capacity(zero.len() + neg.len() + 16);
        for &k in zero.iter() {
            let mut ray = rays[k].clone();
            set_bit(&mut ray.mask, pick);
            next.push(ray);
        }
        for &k in &neg {
            next.push(rays[k].clone());
        }
        for batch in new_rays {
            next.extend(batch);
        }
        if std::env::var_os("PRIVFUNNEL_DD_STATS").is_some() {
            eprintln!(
                "row {pick}: pos {} neg {} zero {} -> {} rays",
                pos.len(),
                neg.len(),
                zero.len(),
                next.len()
            );
        }
        if next.is_empty() {
            // Every ray was cut: the cone is {0}, the polytope is empty.
            return Err(PolytopeError::Infeasible);
        }
        if next.len() > opts.ray_limit {
            return Err(PolytopeError::Numerical(format!(
                "intermediate ray count {} exceeds limit {}",
                next.len(),
                opts.ray_limit
            )));
        }
        rays = next;
    }

    Ok(rays.into_iter().map(|r| r.coords).collect())
}

#[derive(Clone)]
struct Ray {
    coords: Vec<f64>,
    mask: Vec<u64>,
}

/// Polish candidates against their tight systems, deduplicate, sort, and
/// certify; assembles the final `VertexSet`.
fn finalize(
    p: &HPolytope,
    opts: &EnumerationOptions,
    candidates: Vec<Vec<f64>>,
) -> Result<VertexSet, PolytopeError> {
    let dim = p.dim();
    let scales: Vec<f64> = p
        .ineq()
        .iter()
        .map(|c| c.coeffs.iter().map(|x| x.abs()).fold(0.0f64, f64::max).max(c.rhs.abs()).max(1.0))
        .collect();

    let polished: Vec<Vec<f64>> = candidates
        .into_par_iter()
        .map(|v| {
            let snapped = polish(p, &scales, &v);
            // Keep the snap only if it certifies; drift from an
            // ill-conditioned tight system must not discard a vertex whose
            // raw coordinates were fine.
            if certify(p, &scales, &snapped, opts).is_some() {
                snapped
            } else {
                v
            }
        })
        .collect();
    let unique = dedup_sorted(polished, opts.dedup_tol);

    let mut vertices = Vec::with_capacity(unique.len());
    let mut tight_sets = Vec::with_capacity(unique.len());
    let checked: Vec<Option<(Vec<f64>, Vec<usize>)>> = unique
        .into_par_iter()
        .map(|v| {
            let tight = certify(p, &scales, &v, opts)?;
            Some((v, tight))
        })
        .collect();
    for entry in checked.into_iter().flatten() {
        vertices.push(entry.0);
        tight_sets.push(entry.1);
    }
    if vertices.is_empty() {
        return Err(PolytopeError::Infeasible);
    }
    Ok(VertexSet { dim, vertices, tight: tight_sets })
}

/// Feasibility plus the vertex certificate: within tolerance on every
/// constraint, with tight normals (equalities included) of full ambient
/// rank. Returns the tight inequality indices, or `None` for points that
/// are numerical ghosts (infeasible or interior to a face).
fn certify(
    p: &HPolytope,
    scales: &[f64],
    v: &[f64],
    opts: &EnumerationOptions,
) -> Option<Vec<usize>> {
    let mut tight = Vec::new();
    for (i, c) in p.ineq().iter().enumerate() {
        let slack = c.rhs - c.eval(v);
        if slack < -opts.feas_tol * scales[i] {
            return None;
        }
        if slack.abs() <= opts.feas_tol * scales[i] {
            tight.push(i);
        }
    }
    for c in p.eq() {
        let scale = c.coeffs.iter().map(|x| x.abs()).fold(0.0f64, f64::max).max(1.0);
        if (c.eval(v) - c.rhs).abs() > opts.feas_tol * scale {
            return None;
        }
    }
    let mut normals: Vec<Vec<f64>> = p.eq().iter().map(|c| c.coeffs.clone()).collect();
    normals.extend(tight.iter().map(|&i| p.ineq()[i].coeffs.clone()));
    if rank_of_rows(&normals, 1e-8) < p.dim() {
        return None;
    }
    Some(tight)
}

/// Least-squares snap of a candidate vertex onto its loosely-tight
/// constraint system (rows unit-normalized so mixed constraint scales do
/// not skew the solve); falls back to the raw point if the snap moves far.
fn polish(p: &HPolytope, scales: &[f64], v: &[f64]) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut push_normalized = |coeffs: &[f64], b: f64| {
        let norm = l2(coeffs);
        if norm > 0.0 {
            rows.push(coeffs.iter().map(|x| x / norm).collect());
            rhs.push(b / norm);
        }
    };
    for c in p.eq() {
        push_normalized(&c.coeffs, c.rhs);
    }
    for (i, c) in p.ineq().iter().enumerate() {
        if (c.eval(v) - c.rhs).abs() <= POLISH_TOL * scales[i] {
            push_normalized(&c.coeffs, c.rhs);
        }
    }
    if rows.len() < p.dim() {
        return v.to_vec();
    }
    let a = DMatrix::from_fn(rows.len(), p.dim(), |r, c| rows[r][c]);
    let b = DVector::from_vec(rhs);
    let Ok(snapped) = a.svd(true, true).solve(&b, 1e-12) else {
        return v.to_vec();
    };
    let moved = snapped.iter().zip(v).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
    if moved > 1e-4 {
        v.to_vec()
    } else {
        snapped.as_slice().to_vec()
    }
}

/// Greedy selection of `want` independent rows, largest residual first.
fn greedy_independent_rows(rows: &[Vec<f64>], want: usize) -> Option<Vec<usize>> {
    let mut chosen = Vec::with_capacity(want);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while chosen.len() < want {
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for (i, row) in rows.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            if let Some(u) = orthonormal_residual(row, &basis, 1e-10) {
                // Residual norm before normalization measures conditioning.
                let mut v = row.clone();
                for b in &basis {
                    let d = dot(&v, b);
                    for (x, y) in v.iter_mut().zip(b) {
                        *x -= d * y;
                    }
                }
                let r = l2(&v);
                if best.as_ref().is_none_or(|(_, br, _)| r > *br) {
                    best = Some((i, r, u));
                }
            }
        }
        let (i, _, u) = best?;
        chosen.push(i);
        basis.push(u);
    }
    Some(chosen)
}

/// Rank of the rows flagged in `mask`.
fn common_tight_rank(rows: &[Vec<f64>], mask: &[u64]) -> usize {
    let mut subset = Vec::new();
    for (w, &word) in mask.iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            subset.push(rows[w * 64 + b].clone());
            bits &= bits - 1;
        }
    }
    rank_of_rows(&subset, 1e-8)
}

fn tight_mask(rows: &[Vec<f64>], processed: &[bool], coords: &[f64], words: usize) -> Vec<u64> {
    let mut mask = vec![0u64; words];
    for (i, row) in rows.iter().enumerate() {
        if processed[i] && dot(row, coords).abs() <= SIGN_TOL {
            set_bit(&mut mask, i);
        }
    }
    mask
}

fn orthonormal_residual(v: &[f64], basis: &[Vec<f64>], tol: f64) -> Option<Vec<f64>> {
    let refs: Vec<&Vec<f64>> = basis.iter().collect();
    orthonormal_residual_refs(v, &refs, tol)
}

fn orthonormal_residual_refs(v: &[f64], basis: &[&Vec<f64>], tol: f64) -> Option<Vec<f64>> {
    let mut u = v.to_vec();
    for _ in 0..2 {
        for b in basis {
            let d = dot(&u, b);
            for (x, y) in u.iter_mut().zip(b.iter()) {
                *x -= d * y;
            }
        }
    }
    let norm = l2(&u);
    if norm <= tol * l2(v).max(1.0) {
        return None;
    }
    for x in u.iter_mut() {
        *x /= norm;
    }
    Some(u)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize_max(v: &mut [f64]) {
    let m = v.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
    if m > 0.0 {
        for x in v.iter_mut() {
            *x /= m;
        }
    }
}

#[inline]
fn set_bit(mask: &mut [u64], i: usize) {
    mask[i / 64] |= 1 << (i % 64);
}

fn and_mask(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| x & y).collect()
}

fn popcount(mask: &[u64]) -> u32 {
    mask.iter().map(|w| w.count_ones()).sum()
}
