//! Property and oracle tests for the polytope engine: enumeration must
//! agree with a brute-force constraint-subset oracle, and the LP optimum
//! must match the best vertex value.

use privfunnel::polytope::{
    enumerate_vertices, solve_lp, Constraint, HPolytope, LinearProgram,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod oracle;
use oracle::vertex_oracle;

/// Random bounded polytope: a box plus a few random cuts, sometimes with a
/// random equality.
fn random_polytope(dim: usize, extra: usize, with_eq: bool, rng: &mut ChaCha8Rng) -> HPolytope {
    let mut p = HPolytope::new(dim);
    for i in 0..dim {
        let mut lo = vec![0.0; dim];
        lo[i] = -1.0;
        p.add_ineq(lo, 1.0).unwrap(); // x_i >= -1
        let mut hi = vec![0.0; dim];
        hi[i] = 1.0;
        p.add_ineq(hi, 2.0).unwrap(); // x_i <= 2
    }
    for _ in 0..extra {
        let coeffs: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let rhs = rng.random::<f64>() * 1.5;
        p.add_ineq(coeffs, rhs).unwrap();
    }
    if with_eq {
        let coeffs: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() + 0.1).collect();
        let rhs: f64 = coeffs.iter().sum::<f64>() * 0.4;
        p.add_eq(coeffs, rhs).unwrap();
    }
    p
}

fn assert_same_vertex_set(p: &HPolytope, label: &str) {
    let expected = vertex_oracle(p);
    let got = match enumerate_vertices(p) {
        Ok(vs) => vs.vertices,
        Err(e) => {
            assert!(expected.is_empty(), "{label}: oracle found {expected:?} but got {e}");
            return;
        }
    };
    assert_eq!(
        got.len(),
        expected.len(),
        "{label}: {} enumerated vs {} oracle vertices\n got: {got:?}\n want: {expected:?}",
        got.len(),
        expected.len()
    );
    // Exact set equality under dedup-tolerance matching (vertices of these
    // instances are far apart relative to 1e-6, so greedy matching is safe).
    let mut used = vec![false; expected.len()];
    for g in &got {
        let hit = expected.iter().enumerate().find(|(i, e)| {
            !used[*i] && g.iter().zip(e.iter()).all(|(a, b)| (a - b).abs() <= 1e-6)
        });
        match hit {
            Some((i, _)) => used[i] = true,
            None => panic!("{label}: enumerated vertex {g:?} not in oracle set {expected:?}"),
        }
    }
}

#[test]
fn enumeration_matches_oracle_on_random_polytopes() {
    let mut rng = ChaCha8Rng::seed_from_u64(20260810);
    for trial in 0..50 {
        let dim = 2 + (trial % 2);
        let extra = 8usize.saturating_sub(2 * dim).min(2 + trial % 3);
        let with_eq = trial % 5 == 0;
        let p = random_polytope(dim, extra, with_eq, &mut rng);
        assert_same_vertex_set(&p, &format!("trial {trial}"));
    }
}

#[test]
fn lp_optimum_matches_best_vertex_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..25 {
        let dim = 2 + (trial % 3);
        let p = random_polytope(dim, 2, false, &mut rng);
        let objective: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();

        // Shift to nonnegative variables for the LP solver: z = x + 1,
        // so each constraint c.x <= r becomes c.z <= r + sum(c).
        let shift_ineq: Vec<Constraint> = p
            .ineq()
            .iter()
            .map(|c| Constraint::new(c.coeffs.clone(), c.rhs + c.coeffs.iter().sum::<f64>()))
            .collect();
        let lp = LinearProgram { objective: objective.clone(), eq: vec![], ineq: shift_ineq };
        let sol = solve_lp(&lp).unwrap();
        let lp_value: f64 = sol.value - objective.iter().sum::<f64>();

        let vs = enumerate_vertices(&p).unwrap();
        let best = vs
            .vertices
            .iter()
            .map(|v| objective.iter().zip(v).map(|(c, x)| c * x).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            (lp_value - best).abs() <= 1e-8,
            "trial {trial}: LP value {lp_value} vs best vertex {best}"
        );
    }
}

#[test]
fn enumeration_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = random_polytope(3, 2, true, &mut rng);
    let a = enumerate_vertices(&p).unwrap();
    let b = enumerate_vertices(&p).unwrap();
    assert_eq!(a.vertices, b.vertices);
    assert_eq!(a.tight, b.tight);
}
