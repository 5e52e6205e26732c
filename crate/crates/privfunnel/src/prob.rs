//! Finite probability objects: the joint secret/data prior, derived
//! marginals and conditionals, entropy and mutual information in nats,
//! attribute schemas for multi-attribute data, and random prior generation.
//!
//! Conventions fixed here and relied on everywhere else:
//! * natural logarithms (nats), with `0 ln 0 = 0`;
//! * secrets index rows, data values index columns of the joint matrix;
//! * all indices are 0-based in the library (file formats are 1-based).

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use thiserror::Error;

use crate::mechanism::Mechanism;
use crate::tol;

#[derive(Debug, Error, PartialEq)]
pub enum ProbError {
    #[error("distribution has a zero dimension")]
    EmptyDistribution,
    #[error("negative entry {value:.3e} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("entries sum to {sum:.15}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("zero marginal: {axis} value {index} has probability 0")]
    ZeroMarginal { axis: &'static str, index: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("conditioning context has probability 0")]
    ZeroProbabilityContext,
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid context: {0}")]
    InvalidContext(String),
}

/// A length-k probability vector: entries nonnegative, summing to 1
/// within [`tol::DISTRIBUTION_SUM`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(v: Vec<f64>) -> Result<Self, ProbError> {
        if v.is_empty() {
            return Err(ProbError::EmptyDistribution);
        }
        for (i, &x) in v.iter().enumerate() {
            if x < 0.0 {
                return Err(ProbError::NegativeEntry { row: 0, col: i, value: x });
            }
        }
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > tol::DISTRIBUTION_SUM {
            return Err(ProbError::NotNormalized { sum });
        }
        Ok(Self(v))
    }

    /// Builds a probability vector from nonnegative weights by rescaling.
    /// Entries in `[-FEASIBILITY, 0)` are clamped to 0 first; this is the
    /// constructor used for points coming out of floating-point geometry.
    pub fn from_weights(mut v: Vec<f64>) -> Result<Self, ProbError> {
        if v.is_empty() {
            return Err(ProbError::EmptyDistribution);
        }
        for (i, x) in v.iter_mut().enumerate() {
            if *x < 0.0 {
                if *x < -tol::FEASIBILITY {
                    return Err(ProbError::NegativeEntry { row: 0, col: i, value: *x });
                }
                *x = 0.0;
            }
        }
        let sum: f64 = v.iter().sum();
        if sum <= 0.0 {
            return Err(ProbError::NotNormalized { sum });
        }
        for x in v.iter_mut() {
            *x /= sum;
        }
        Ok(Self(v))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }
}

/// Shannon entropy of nonnegative weights in nats, with `0 ln 0 = 0`.
/// The slice does not have to be normalized exactly; callers that need the
/// entropy of a distribution should pass a [`ProbabilityVector`]'s slice.
pub fn entropy_of_slice(v: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in v {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

/// Shannon entropy of a probability vector in nats.
pub fn entropy(v: &ProbabilityVector) -> f64 {
    entropy_of_slice(v.as_slice())
}

/// Mutual information of a joint distribution given as a matrix, in nats.
pub fn mutual_information_of_joint(joint: &DMatrix<f64>) -> f64 {
    let row_sums: Vec<f64> = (0..joint.nrows()).map(|r| joint.row(r).sum()).collect();
    let col_sums: Vec<f64> = (0..joint.ncols()).map(|c| joint.column(c).sum()).collect();
    let mut mi = 0.0;
    for r in 0..joint.nrows() {
        for c in 0..joint.ncols() {
            let p = joint[(r, c)];
            if p > 0.0 {
                mi += p * (p / (row_sums[r] * col_sums[c])).ln();
            }
        }
    }
    // Rounding can push a true zero to -1e-17; MI is nonnegative.
    mi.max(0.0)
}

/// I(X;Y) in nats for input distribution `p_x` pushed through mechanism `q`.
pub fn mutual_information(p_x: &ProbabilityVector, q: &Mechanism) -> Result<f64, ProbError> {
    if q.input_count() != p_x.len() {
        return Err(ProbError::DimensionMismatch(format!(
            "mechanism has {} inputs, distribution has {} entries",
            q.input_count(),
            p_x.len()
        )));
    }
    let mut joint = DMatrix::zeros(p_x.len(), q.output_count());
    for x in 0..p_x.len() {
        for y in 0..q.output_count() {
            joint[(x, y)] = p_x.get(x) * q.prob(y, x);
        }
    }
    Ok(mutual_information_of_joint(&joint))
}

/// The joint prior p(S, X) as a c×a matrix: rows are secret values, columns
/// are data values. Entries are nonnegative and sum to 1; both marginals are
/// strictly positive (zero cells are fine, zero rows or columns are not,
/// since the conditionals used throughout would otherwise be undefined).
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    p: DMatrix<f64>,
}

impl JointDistribution {
    pub fn new(p: DMatrix<f64>) -> Result<Self, ProbError> {
        if p.nrows() == 0 || p.ncols() == 0 {
            return Err(ProbError::EmptyDistribution);
        }
        for r in 0..p.nrows() {
            for c in 0..p.ncols() {
                let v = p[(r, c)];
                if v < 0.0 {
                    return Err(ProbError::NegativeEntry { row: r, col: c, value: v });
                }
            }
        }
        let sum = p.sum();
        if (sum - 1.0).abs() > tol::DISTRIBUTION_SUM {
            return Err(ProbError::NotNormalized { sum });
        }
        for r in 0..p.nrows() {
            if p.row(r).sum() <= 0.0 {
                return Err(ProbError::ZeroMarginal { axis: "secret", index: r });
            }
        }
        for c in 0..p.ncols() {
            if p.column(c).sum() <= 0.0 {
                return Err(ProbError::ZeroMarginal { axis: "data", index: c });
            }
        }
        Ok(Self { p })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ProbError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(ProbError::EmptyDistribution);
        }
        let a = rows[0].len();
        if rows.iter().any(|r| r.len() != a) {
            return Err(ProbError::DimensionMismatch("ragged joint matrix".into()));
        }
        let p = DMatrix::from_fn(rows.len(), a, |r, c| rows[r][c]);
        Self::new(p)
    }

    /// Number of secret values c.
    pub fn secret_count(&self) -> usize {
        self.p.nrows()
    }

    /// Number of data values a.
    pub fn data_count(&self) -> usize {
        self.p.ncols()
    }

    pub fn prob(&self, s: usize, x: usize) -> f64 {
        self.p[(s, x)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// All marginals and conditionals derived from the joint. Infallible:
    /// the constructor already rejected zero marginals.
    pub fn marginals(&self) -> Marginals {
        let c = self.secret_count();
        let a = self.data_count();
        let p_s: Vec<f64> = (0..c).map(|s| self.p.row(s).sum()).collect();
        let p_x: Vec<f64> = (0..a).map(|x| self.p.column(x).sum()).collect();
        let x_given_s = (0..c)
            .map(|s| {
                ProbabilityVector::from_weights((0..a).map(|x| self.p[(s, x)]).collect())
                    .expect("positive row sum")
            })
            .collect();
        let s_given_x = (0..a)
            .map(|x| {
                ProbabilityVector::from_weights((0..c).map(|s| self.p[(s, x)]).collect())
                    .expect("positive column sum")
            })
            .collect();
        Marginals {
            p_s: ProbabilityVector::from_weights(p_s).expect("joint sums to 1"),
            p_x: ProbabilityVector::from_weights(p_x).expect("joint sums to 1"),
            x_given_s,
            s_given_x,
        }
    }
}

/// Derived bundle: p(S), p(X), p(X|s) for each s, p(S|x) for each x.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub p_s: ProbabilityVector,
    pub p_x: ProbabilityVector,
    pub x_given_s: Vec<ProbabilityVector>,
    pub s_given_x: Vec<ProbabilityVector>,
}

/// Index map between flat data values and attribute tuples.
///
/// The flat encoding is mixed-radix with the first attribute most
/// significant: for sizes `(a_1, ..., a_m)` the flat index of the tuple
/// `(x_1, ..., x_m)` (all 0-based) is `((x_1 a_2 + x_2) a_3 + ...) + x_m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSchema {
    sizes: Vec<usize>,
}

impl AttributeSchema {
    pub fn new(sizes: Vec<usize>) -> Result<Self, ProbError> {
        if sizes.is_empty() {
            return Err(ProbError::InvalidSchema("no attributes".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(ProbError::InvalidSchema("attribute with zero values".into()));
        }
        Ok(Self { sizes })
    }

    pub fn attribute_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, attr: usize) -> usize {
        self.sizes[attr]
    }

    /// Total number of flat data values, `a = prod_j a_j`.
    pub fn flat_size(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn to_tuple(&self, mut flat: usize) -> Vec<usize> {
        debug_assert!(flat < self.flat_size());
        let mut tuple = vec![0; self.sizes.len()];
        for (j, &size) in self.sizes.iter().enumerate().rev() {
            tuple[j] = flat % size;
            flat /= size;
        }
        tuple
    }

    pub fn to_flat(&self, tuple: &[usize]) -> usize {
        debug_assert_eq!(tuple.len(), self.sizes.len());
        let mut flat = 0;
        for (j, &size) in self.sizes.iter().enumerate() {
            debug_assert!(tuple[j] < size);
            flat = flat * size + tuple[j];
        }
        flat
    }
}

/// Exact conditionals of one attribute given values of a set of other
/// attributes: p(X_j | x_J) and, per secret value, p(X_j | s, x_J).
///
/// A secret's entry is `None` when p(s, x_J) = 0: the conditional is
/// undefined and no observer holding that context can hold that secret.
#[derive(Debug, Clone)]
pub struct ContextConditionals {
    pub target: usize,
    pub given_context: ProbabilityVector,
    pub given_secret_and_context: Vec<Option<ProbabilityVector>>,
}

/// Conditions the joint on `context` (pairs of attribute index and 0-based
/// value) and marginalizes to attribute `target`, which must not appear in
/// the context. Errors with `ZeroProbabilityContext` when p(x_J) = 0.
pub fn condition_on_context(
    joint: &JointDistribution,
    schema: &AttributeSchema,
    target: usize,
    context: &[(usize, usize)],
) -> Result<ContextConditionals, ProbError> {
    let m = schema.attribute_count();
    if schema.flat_size() != joint.data_count() {
        return Err(ProbError::DimensionMismatch(format!(
            "schema flattens to {} values, joint has {}",
            schema.flat_size(),
            joint.data_count()
        )));
    }
    if target >= m {
        return Err(ProbError::InvalidContext(format!("target attribute {target} out of range")));
    }
    let mut seen = vec![false; m];
    for &(attr, value) in context {
        if attr >= m {
            return Err(ProbError::InvalidContext(format!("attribute {attr} out of range")));
        }
        if attr == target {
            return Err(ProbError::InvalidContext("target attribute inside context".into()));
        }
        if seen[attr] {
            return Err(ProbError::InvalidContext(format!("attribute {attr} repeated")));
        }
        if value >= schema.size(attr) {
            return Err(ProbError::InvalidContext(format!(
                "value {value} out of range for attribute {attr}"
            )));
        }
        seen[attr] = true;
    }

    let c = joint.secret_count();
    let k = schema.size(target);
    let mut ctx_weights = vec![0.0; k];
    let mut secret_weights = vec![vec![0.0; k]; c];
    for x in 0..joint.data_count() {
        let tuple = schema.to_tuple(x);
        if context.iter().any(|&(attr, value)| tuple[attr] != value) {
            continue;
        }
        let t = tuple[target];
        for s in 0..c {
            let p = joint.prob(s, x);
            ctx_weights[t] += p;
            secret_weights[s][t] += p;
        }
    }
    if ctx_weights.iter().sum::<f64>() <= 0.0 {
        return Err(ProbError::ZeroProbabilityContext);
    }
    let given_secret_and_context = secret_weights
        .into_iter()
        .map(|w| {
            if w.iter().sum::<f64>() > 0.0 {
                Some(ProbabilityVector::from_weights(w).expect("positive sum"))
            } else {
                None
            }
        })
        .collect();
    Ok(ContextConditionals {
        target,
        given_context: ProbabilityVector::from_weights(ctx_weights).expect("positive sum"),
        given_secret_and_context,
    })
}

/// Random joint prior: every cell drawn uniformly from [0, 1), then the
/// matrix is rescaled to sum to 1. Resamples in the (measure-zero) event
/// of a zero marginal so the constructor invariants always hold.
pub fn random_joint<R: Rng + ?Sized>(c: usize, a: usize, rng: &mut R) -> JointDistribution {
    assert!(c >= 2 && a >= 2, "need at least two secret and two data values");
    loop {
        let p = DMatrix::from_fn(c, a, |_, _| rng.random::<f64>());
        let total = p.sum();
        if total <= 0.0 {
            continue;
        }
        if let Ok(joint) = JointDistribution::new(p / total) {
            return joint;
        }
    }
}

/// Seeded convenience wrapper around [`random_joint`]; the generator is a
/// ChaCha8 stream, so results are reproducible across platforms.
pub fn random_joint_seeded(c: usize, a: usize, seed: u64) -> JointDistribution {
    random_joint(c, a, &mut ChaCha8Rng::seed_from_u64(seed))
}
