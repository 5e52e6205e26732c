//! Sanitisation mechanisms as column-stochastic matrices, their reverse
//! (output distribution + posterior) representation, product composition
//! across attributes, output reduction, and sampling.

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

use crate::prob::{AttributeSchema, ProbabilityVector};
use crate::tol;

#[derive(Debug, Error, PartialEq)]
pub enum MechanismError {
    #[error("invalid mechanism: {0}")]
    InvalidMechanism(String),
    #[error("reverse representation inconsistent with the prior (max deviation {max_dev:.3e})")]
    InconsistentPrior { max_dev: f64 },
    #[error("prior has a zero entry at {index}; forward form undefined")]
    ZeroPrior { index: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("input symbol {x} out of range (alphabet size {a})")]
    InputOutOfRange { x: usize, a: usize },
}

/// A mechanism `Q` with `b` outputs and `a` inputs, stored row-per-output:
/// `Q[(y, x)] = P(Y = y | X = x)`. Every column sums to 1 within
/// [`tol::STOCHASTIC_COLUMN`] and entries are nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    q: DMatrix<f64>,
}

impl Mechanism {
    pub fn new(q: DMatrix<f64>) -> Result<Self, MechanismError> {
        if q.nrows() == 0 || q.ncols() == 0 {
            return Err(MechanismError::InvalidMechanism("empty matrix".into()));
        }
        for y in 0..q.nrows() {
            for x in 0..q.ncols() {
                if q[(y, x)] < 0.0 {
                    return Err(MechanismError::InvalidMechanism(format!(
                        "negative entry {:.3e} at ({y}, {x})",
                        q[(y, x)]
                    )));
                }
            }
        }
        for x in 0..q.ncols() {
            let s = q.column(x).sum();
            if (s - 1.0).abs() > tol::STOCHASTIC_COLUMN {
                return Err(MechanismError::InvalidMechanism(format!(
                    "column {x} sums to {s}, expected 1"
                )));
            }
        }
        Ok(Self { q })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MechanismError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(MechanismError::InvalidMechanism("empty matrix".into()));
        }
        let a = rows[0].len();
        if rows.iter().any(|r| r.len() != a) {
            return Err(MechanismError::InvalidMechanism("ragged matrix".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), a, |y, x| rows[y][x]))
    }

    /// Builds a mechanism from near-stochastic data coming out of
    /// floating-point geometry. Entries within [`tol::FEASIBILITY`] of zero
    /// are clamped to exactly zero (a vertex is only accurate to that
    /// tolerance, and leftover dust would otherwise surface as ghost
    /// outputs with arbitrary posteriors), then each column is rescaled to
    /// sum to exactly 1.
    pub fn from_rows_renormalized(rows: &[Vec<f64>]) -> Result<Self, MechanismError> {
        let a = rows.first().map_or(0, |r| r.len());
        let mut m = DMatrix::from_fn(rows.len(), a, |y, x| rows[y][x]);
        for y in 0..m.nrows() {
            for x in 0..m.ncols() {
                let v = m[(y, x)];
                if v < -tol::FEASIBILITY {
                    return Err(MechanismError::InvalidMechanism(format!(
                        "negative entry {v:.3e} at ({y}, {x})"
                    )));
                }
                if v.abs() <= tol::FEASIBILITY {
                    m[(y, x)] = 0.0;
                }
            }
        }
        for x in 0..m.ncols() {
            let s = m.column(x).sum();
            if (s - 1.0).abs() > tol::STOCHASTIC_COLUMN {
                return Err(MechanismError::InvalidMechanism(format!(
                    "column {x} sums to {s}, expected 1"
                )));
            }
            for y in 0..m.nrows() {
                m[(y, x)] /= s;
            }
        }
        Self::new(m)
    }

    pub fn identity(n: usize) -> Self {
        Self { q: DMatrix::identity(n, n) }
    }

    /// Binary randomized response with log odds ratio exactly `epsilon`.
    pub fn randomized_response(epsilon: f64) -> Self {
        let e = epsilon.exp();
        let keep = e / (1.0 + e);
        let flip = 1.0 / (1.0 + e);
        Self::from_rows(&[vec![keep, flip], vec![flip, keep]]).expect("stochastic by construction")
    }

    /// Number of outputs b.
    pub fn output_count(&self) -> usize {
        self.q.nrows()
    }

    /// Number of inputs a.
    pub fn input_count(&self) -> usize {
        self.q.ncols()
    }

    /// `P(Y = y | X = x)`.
    pub fn prob(&self, y: usize, x: usize) -> f64 {
        self.q[(y, x)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.output_count()).map(|y| self.q.row(y).iter().copied().collect()).collect()
    }

    /// Samples an output symbol for input `x` (0-based).
    pub fn apply<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Result<usize, MechanismError> {
        if x >= self.input_count() {
            return Err(MechanismError::InputOutOfRange { x, a: self.input_count() });
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for y in 0..self.output_count() {
            let p = self.q[(y, x)];
            if p > 0.0 {
                last_positive = y;
                acc += p;
                if u < acc {
                    return Ok(y);
                }
            }
        }
        // Column sums to 1 only within tolerance; attribute the sliver of
        // leftover mass to the last possible output.
        Ok(last_positive)
    }

    /// Output distribution `q = Q p_X`.
    pub fn output_distribution(&self, p_x: &ProbabilityVector) -> Result<Vec<f64>, MechanismError> {
        if p_x.len() != self.input_count() {
            return Err(MechanismError::SchemaMismatch(format!(
                "prior has {} entries, mechanism {} inputs",
                p_x.len(),
                self.input_count()
            )));
        }
        Ok((0..self.output_count())
            .map(|y| (0..self.input_count()).map(|x| self.q[(y, x)] * p_x.get(x)).sum())
            .collect())
    }
}

/// The pair `(R, q)`: output distribution `q` over `b` outputs and the
/// posterior matrix `R` (a×b) whose column `y` is `P(X | Y = y)`.
/// Consistency with a prior means `R q = p_X`.
#[derive(Debug, Clone)]
pub struct ReverseRepresentation {
    pub output_dist: ProbabilityVector,
    pub posteriors: Vec<ProbabilityVector>,
}

impl ReverseRepresentation {
    pub fn output_count(&self) -> usize {
        self.output_dist.len()
    }

    pub fn input_count(&self) -> usize {
        self.posteriors[0].len()
    }

    /// Max-norm of `R q - p_X`.
    pub fn prior_deviation(&self, p_x: &ProbabilityVector) -> f64 {
        (0..self.input_count())
            .map(|x| {
                let mixed: f64 = self
                    .posteriors
                    .iter()
                    .zip(self.output_dist.iter())
                    .map(|(col, &w)| col.get(x) * w)
                    .sum();
                (mixed - p_x.get(x)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Converts a reverse representation into the forward mechanism via
/// `Q[y|x] = q_y R[x|y] / p_X[x]`; requires a strictly positive prior and
/// consistency `R q = p_X`.
pub fn reverse_to_forward(
    rep: &ReverseRepresentation,
    p_x: &ProbabilityVector,
) -> Result<Mechanism, MechanismError> {
    if rep.input_count() != p_x.len() {
        return Err(MechanismError::SchemaMismatch(format!(
            "posteriors over {} inputs, prior over {}",
            rep.input_count(),
            p_x.len()
        )));
    }
    if let Some(x) = (0..p_x.len()).find(|&x| p_x.get(x) <= 0.0) {
        return Err(MechanismError::ZeroPrior { index: x });
    }
    let max_dev = rep.prior_deviation(p_x);
    if max_dev > tol::STOCHASTIC_COLUMN {
        return Err(MechanismError::InconsistentPrior { max_dev });
    }
    let rows: Vec<Vec<f64>> = (0..rep.output_count())
        .map(|y| {
            (0..p_x.len())
                .map(|x| rep.output_dist.get(y) * rep.posteriors[y].get(x) / p_x.get(x))
                .collect()
        })
        .collect();
    Mechanism::from_rows_renormalized(&rows)
}

/// Bayes inversion of a mechanism against a prior: `q = Q p_X` and
/// `R[x|y] = Q[y|x] p_X[x] / q_y`. Outputs with `q_y = 0` are dropped.
pub fn forward_to_reverse(
    q: &Mechanism,
    p_x: &ProbabilityVector,
) -> Result<ReverseRepresentation, MechanismError> {
    let out = q.output_distribution(p_x)?;
    let mut weights = Vec::new();
    let mut posteriors = Vec::new();
    for (y, &qy) in out.iter().enumerate() {
        if qy <= 0.0 {
            continue;
        }
        weights.push(qy);
        let col: Vec<f64> =
            (0..q.input_count()).map(|x| q.prob(y, x) * p_x.get(x) / qy).collect();
        posteriors.push(
            ProbabilityVector::from_weights(col)
                .map_err(|e| MechanismError::InvalidMechanism(e.to_string()))?,
        );
    }
    let output_dist = ProbabilityVector::from_weights(weights)
        .map_err(|e| MechanismError::InvalidMechanism(e.to_string()))?;
    Ok(ReverseRepresentation { output_dist, posteriors })
}

/// Product mechanism over a multi-attribute alphabet: applies `mechs[j]`
/// independently to attribute `j`. Input and output indices both use the
/// schema's mixed-radix flat encoding (first attribute most significant).
pub fn compose_product(
    mechs: &[Mechanism],
    schema: &AttributeSchema,
) -> Result<Mechanism, MechanismError> {
    if mechs.len() != schema.attribute_count() {
        return Err(MechanismError::SchemaMismatch(format!(
            "{} mechanisms for {} attributes",
            mechs.len(),
            schema.attribute_count()
        )));
    }
    for (j, m) in mechs.iter().enumerate() {
        if m.input_count() != schema.size(j) {
            return Err(MechanismError::SchemaMismatch(format!(
                "mechanism {j} has {} inputs, attribute has {} values",
                m.input_count(),
                schema.size(j)
            )));
        }
    }
    let out_schema = AttributeSchema::new(mechs.iter().map(|m| m.output_count()).collect())
        .map_err(|e| MechanismError::SchemaMismatch(e.to_string()))?;
    let a = schema.flat_size();
    let b = out_schema.flat_size();
    let mut q = DMatrix::zeros(b, a);
    for x_flat in 0..a {
        let x_tuple = schema.to_tuple(x_flat);
        for y_flat in 0..b {
            let y_tuple = out_schema.to_tuple(y_flat);
            q[(y_flat, x_flat)] = mechs
                .iter()
                .enumerate()
                .map(|(j, m)| m.prob(y_tuple[j], x_tuple[j]))
                .product();
        }
    }
    Mechanism::new(q)
}

/// Drops zero-probability outputs and merges outputs whose posterior
/// columns coincide within [`tol::VERTEX_DEDUP`]. Merging replaces the
/// group by its probability-weighted average posterior, which preserves
/// `R q = p_X`, leaves I(X;Y) unchanged, and cannot increase any leakage
/// measure. Outputs are renumbered in order of first appearance.
pub fn reduce_outputs(
    q: &Mechanism,
    p_x: &ProbabilityVector,
) -> Result<Mechanism, MechanismError> {
    let rev = forward_to_reverse(q, p_x)?;
    let mut group_weight: Vec<f64> = Vec::new();
    let mut group_post: Vec<Vec<f64>> = Vec::new();
    for (col, &w) in rev.posteriors.iter().zip(rev.output_dist.iter()) {
        let matched = group_post.iter().position(|g| {
            g.iter().zip(col.iter()).all(|(a, b)| (a - b).abs() <= tol::VERTEX_DEDUP)
        });
        match matched {
            Some(g) => {
                let total = group_weight[g] + w;
                for (acc, &v) in group_post[g].iter_mut().zip(col.iter()) {
                    *acc = (*acc * group_weight[g] + v * w) / total;
                }
                group_weight[g] = total;
            }
            None => {
                group_weight.push(w);
                group_post.push(col.iter().copied().collect());
            }
        }
    }
    let merged = ReverseRepresentation {
        output_dist: ProbabilityVector::from_weights(group_weight)
            .map_err(|e| MechanismError::InvalidMechanism(e.to_string()))?,
        posteriors: group_post
            .into_iter()
            .map(|g| {
                ProbabilityVector::from_weights(g)
                    .map_err(|e| MechanismError::InvalidMechanism(e.to_string()))
            })
            .collect::<Result<_, _>>()?,
    };
    reverse_to_forward(&merged, p_x)
}

/// Uniformly random column-stochastic mechanism; a test/workload helper.
pub fn random_mechanism<R: Rng + ?Sized>(b: usize, a: usize, rng: &mut R) -> Mechanism {
    loop {
        let rows: Vec<Vec<f64>> =
            (0..b).map(|_| (0..a).map(|_| rng.random::<f64>()).collect()).collect();
        let mut m = DMatrix::from_fn(b, a, |y, x| rows[y][x]);
        let mut ok = true;
        for x in 0..a {
            let s = m.column(x).sum();
            if s <= 0.0 {
                ok = false;
                break;
            }
            for y in 0..b {
                m[(y, x)] /= s;
            }
        }
        if ok {
            if let Ok(mech) = Mechanism::new(m) {
                return mech;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{mutual_information, random_joint_seeded};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} != {b}");
    }

    fn pv(v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn validates_columns() {
        assert!(Mechanism::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.4]]).is_err());
        assert!(Mechanism::from_rows(&[vec![1.5, 0.5], vec![-0.5, 0.5]]).is_err());
        assert!(Mechanism::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).is_ok());
    }

    #[test]
    fn reverse_to_forward_identity_and_constant() {
        let p_x = pv(&[0.3, 0.7]);
        // Identity posteriors with q = p_X give back the identity.
        let rep = ReverseRepresentation {
            output_dist: p_x.clone(),
            posteriors: vec![pv(&[1.0, 0.0]), pv(&[0.0, 1.0])],
        };
        let q = reverse_to_forward(&rep, &p_x).unwrap();
        assert_eq!(q, Mechanism::identity(2));
        // Single output carrying the prior gives the all-ones row.
        let rep = ReverseRepresentation {
            output_dist: pv(&[1.0]),
            posteriors: vec![p_x.clone()],
        };
        let q = reverse_to_forward(&rep, &p_x).unwrap();
        close(q.prob(0, 0), 1.0, 1e-12);
        close(q.prob(0, 1), 1.0, 1e-12);
    }

    #[test]
    fn reverse_to_forward_entrywise_formula() {
        let p_x = pv(&[0.5, 0.5]);
        let rep = ReverseRepresentation {
            output_dist: pv(&[0.5, 0.5]),
            posteriors: vec![pv(&[0.8, 0.2]), pv(&[0.2, 0.8])],
        };
        let q = reverse_to_forward(&rep, &p_x).unwrap();
        close(q.prob(0, 0), 0.8, 1e-12);
        close(q.prob(0, 1), 0.2, 1e-12);
        close(q.prob(1, 0), 0.2, 1e-12);
        close(q.prob(1, 1), 0.8, 1e-12);
    }

    #[test]
    fn reverse_to_forward_rejects_inconsistent_prior() {
        let rep = ReverseRepresentation {
            output_dist: pv(&[1.0]),
            posteriors: vec![pv(&[0.5, 0.5])],
        };
        let err = reverse_to_forward(&rep, &pv(&[0.3, 0.7])).unwrap_err();
        assert!(matches!(err, MechanismError::InconsistentPrior { .. }));
    }

    #[test]
    fn forward_to_reverse_bayes_by_hand() {
        let q = Mechanism::from_rows(&[vec![0.9, 0.2], vec![0.1, 0.8]]).unwrap();
        let p_x = pv(&[0.5, 0.5]);
        let rev = forward_to_reverse(&q, &p_x).unwrap();
        close(rev.output_dist.get(0), 0.55, 1e-12);
        close(rev.output_dist.get(1), 0.45, 1e-12);
        close(rev.posteriors[0].get(0), 9.0 / 11.0, 1e-12);
        close(rev.posteriors[0].get(1), 2.0 / 11.0, 1e-12);
    }

    #[test]
    fn round_trip_on_full_support_mechanisms() {
        let joint = random_joint_seeded(2, 3, 11);
        let p_x = joint.marginals().p_x;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..25 {
            let q = random_mechanism(3, 3, &mut rng);
            let rev = forward_to_reverse(&q, &p_x).unwrap();
            let back = reverse_to_forward(&rev, &p_x).unwrap();
            for y in 0..3 {
                for x in 0..3 {
                    close(back.prob(y, x), q.prob(y, x), 1e-9);
                }
            }
        }
    }

    #[test]
    fn compose_identities_is_identity() {
        let schema = AttributeSchema::new(vec![2, 3]).unwrap();
        let q = compose_product(&[Mechanism::identity(2), Mechanism::identity(3)], &schema)
            .unwrap();
        assert_eq!(q, Mechanism::identity(6));
    }

    #[test]
    fn compose_product_formula() {
        let schema = AttributeSchema::new(vec![2, 2]).unwrap();
        let m1 = Mechanism::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let m2 = Mechanism::from_rows(&[vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let q = compose_product(&[m1, m2], &schema).unwrap();
        // P((y1,y2) = (x1,x2) | (x1,x2)) = 0.9 * 0.8.
        for flat in 0..4 {
            close(q.prob(flat, flat), 0.72, 1e-12);
        }
    }

    #[test]
    fn compose_with_constant_factor_marginalizes() {
        let schema = AttributeSchema::new(vec![2, 2]).unwrap();
        let constant = Mechanism::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let q = compose_product(&[Mechanism::identity(2), constant], &schema).unwrap();
        assert_eq!(q.output_count(), 2);
        // Output depends on attribute 1 only.
        close(q.prob(0, 0), 1.0, 1e-12);
        close(q.prob(0, 1), 1.0, 1e-12);
        close(q.prob(1, 2), 1.0, 1e-12);
        close(q.prob(1, 3), 1.0, 1e-12);
    }

    #[test]
    fn reduce_merges_duplicate_rows() {
        // Outputs 0 and 1 split the same behavior 50/50; they merge and
        // mutual information is unchanged.
        let q = Mechanism::from_rows(&[
            vec![0.45, 0.05],
            vec![0.45, 0.05],
            vec![0.10, 0.90],
        ])
        .unwrap();
        let p_x = pv(&[0.5, 0.5]);
        let reduced = reduce_outputs(&q, &p_x).unwrap();
        assert_eq!(reduced.output_count(), 2);
        close(
            mutual_information(&p_x, &reduced).unwrap(),
            mutual_information(&p_x, &q).unwrap(),
            1e-12,
        );
        close(reduced.prob(0, 0), 0.9, 1e-12);
    }

    #[test]
    fn reduce_drops_zero_rows() {
        let q = Mechanism::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let reduced = reduce_outputs(&q, &pv(&[0.5, 0.5])).unwrap();
        assert_eq!(reduced.output_count(), 1);
    }

    #[test]
    fn reduce_proportional_posteriors() {
        // Rows 0 and 1 have proportional likelihoods, hence equal
        // posteriors; 3x2 reduces to 2x2 with identical MI.
        let q = Mechanism::from_rows(&[
            vec![0.6, 0.3],
            vec![0.2, 0.1],
            vec![0.2, 0.6],
        ])
        .unwrap();
        let p_x = pv(&[0.4, 0.6]);
        let reduced = reduce_outputs(&q, &p_x).unwrap();
        assert_eq!(reduced.output_count(), 2);
        close(
            mutual_information(&p_x, &reduced).unwrap(),
            mutual_information(&p_x, &q).unwrap(),
            1e-12,
        );
    }

    #[test]
    fn apply_identity_and_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let id = Mechanism::identity(3);
        for x in 0..3 {
            assert_eq!(id.apply(x, &mut rng).unwrap(), x);
        }
        let constant = Mechanism::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        for x in 0..2 {
            assert_eq!(constant.apply(x, &mut rng).unwrap(), 1);
        }
        assert!(id.apply(3, &mut rng).is_err());
    }

    #[test]
    fn apply_matches_probabilities() {
        let q = Mechanism::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let hits = (0..n).filter(|_| q.apply(0, &mut rng).unwrap() == 0).count();
        let rate = hits as f64 / n as f64;
        assert!((rate - 0.9).abs() < 0.01, "empirical rate {rate}");
    }

    #[test]
    fn apply_is_deterministic_per_seed() {
        let q = Mechanism::from_rows(&[vec![0.5, 0.2], vec![0.5, 0.8]]).unwrap();
        let sample = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|i| q.apply(i % 2, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(sample(7), sample(7));
        assert_ne!(sample(7), sample(8));
    }
}
