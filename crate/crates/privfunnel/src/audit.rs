//! Brute-force measurement of every leakage quantity of a mechanism against
//! a prior: worst-case LDP and LIP parameters, the exhaustive side-channel
//! (SRLIP) parameter over all attribute subsets, and the mutual informations
//! I(S;Y) and I(X;Y). This module is the oracle the optimizers are validated
//! against, so it shares no machinery with them: everything here is a direct
//! evaluation of the defining maxima.
//!
//! Outputs with zero probability (under the relevant conditioning) are
//! excluded from all maxima: their likelihood ratios are undefined and no
//! attacker can observe them. Likewise secret/context pairs with zero joint
//! probability are skipped. Infinity is a first-class measurement value.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanism::Mechanism;
use crate::prob::{mutual_information_of_joint, AttributeSchema, JointDistribution};

#[derive(Debug, Error, PartialEq)]
pub enum AuditError {
    #[error("mechanism has {got} inputs, joint has {want} data values")]
    DimensionMismatch { got: usize, want: usize },
    #[error("schema flattens to {got} values, joint has {want}")]
    SchemaMismatch { got: usize, want: usize },
    #[error("{m} attributes exceed the exhaustive-audit guard of {max}")]
    TooManyAttributes { m: usize, max: usize },
}

/// Exhaustive SRLIP audits enumerate all 2^m attribute subsets.
pub const MAX_AUDIT_ATTRIBUTES: usize = 12;
/// Slack used by the lemma consistency flags.
const LEMMA_SLACK: f64 = 1e-9;

/// Measured leakage of one mechanism against one prior. The lemma flags
/// record whether the implications relating the measures hold on this
/// instance (they always should; a false flag indicates a bug, not a data
/// property).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrivacyReport {
    #[serde(with = "crate::json::real_or_inf")]
    pub eps_ldp: f64,
    #[serde(with = "crate::json::real_or_inf")]
    pub eps_lip: f64,
    #[serde(
        with = "crate::json::opt_real_or_inf",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub eps_srlip: Option<f64>,
    pub mi_sy: f64,
    pub mi_xy: f64,
    pub lemma_flags: LemmaFlags,
    /// Measurement conventions, recorded for every report.
    pub conventions: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaFlags {
    /// eps_lip <= eps_ldp (LDP implies LIP at the same budget).
    pub lip_le_ldp: bool,
    /// eps_ldp <= 2 eps_lip (LIP at eps implies LDP at 2 eps).
    pub ldp_le_two_lip: bool,
    /// I(S;Y) <= eps_lip.
    pub mi_sy_le_lip: bool,
    /// eps_lip <= eps_srlip (SRLIP implies LIP); only when a schema is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_le_srlip: Option<bool>,
}

const CONVENTIONS: &str = "zero-probability outputs, contexts, and secret/context pairs are \
                           excluded from all maxima";

fn check_dims(q: &Mechanism, joint: &JointDistribution) -> Result<(), AuditError> {
    if q.input_count() != joint.data_count() {
        return Err(AuditError::DimensionMismatch {
            got: q.input_count(),
            want: joint.data_count(),
        });
    }
    Ok(())
}

/// Worst-case LDP parameter w.r.t. the secret:
/// `max_{y,s,s'} ln P(y|s) / P(y|s')`, infinity when some retained output is
/// impossible under one secret but not another.
pub fn measure_ldp(q: &Mechanism, joint: &JointDistribution) -> Result<f64, AuditError> {
    check_dims(q, joint)?;
    let m = joint.marginals();
    let c = joint.secret_count();
    let b = q.output_count();
    // channel[s][y] = P(y | s)
    let channel: Vec<Vec<f64>> = (0..c)
        .map(|s| q.output_distribution(&m.x_given_s[s]).expect("dims checked"))
        .collect();
    let mut worst = 0.0f64;
    for y in 0..b {
        if (0..c).all(|s| channel[s][y] <= 0.0) {
            continue; // output never occurs
        }
        for s in 0..c {
            for s2 in 0..c {
                if s == s2 {
                    continue;
                }
                let num = channel[s][y];
                let den = channel[s2][y];
                if den <= 0.0 {
                    if num > 0.0 {
                        return Ok(f64::INFINITY);
                    }
                    continue;
                }
                if num > 0.0 {
                    worst = worst.max((num / den).ln());
                }
            }
        }
    }
    Ok(worst)
}

/// Worst-case LIP parameter: `max_{s, y : P(y) > 0} |ln P(y|s) / P(y)|`.
pub fn measure_lip(q: &Mechanism, joint: &JointDistribution) -> Result<f64, AuditError> {
    check_dims(q, joint)?;
    Ok(lip_given_context(q, joint, None, &[]))
}

/// Exhaustive SRLIP parameter: the LIP measurement maximized over every
/// attribute subset J and every observable context value x_J. Exponential
/// in the attribute count by design; guarded at [`MAX_AUDIT_ATTRIBUTES`].
pub fn measure_srlip(
    q: &Mechanism,
    joint: &JointDistribution,
    schema: &AttributeSchema,
) -> Result<f64, AuditError> {
    check_dims(q, joint)?;
    if schema.flat_size() != joint.data_count() {
        return Err(AuditError::SchemaMismatch {
            got: schema.flat_size(),
            want: joint.data_count(),
        });
    }
    let m = schema.attribute_count();
    if m > MAX_AUDIT_ATTRIBUTES {
        return Err(AuditError::TooManyAttributes { m, max: MAX_AUDIT_ATTRIBUTES });
    }
    let mut worst = 0.0f64;
    for subset in 0u32..(1 << m) {
        let attrs: Vec<usize> = (0..m).filter(|&j| subset & (1 << j) != 0).collect();
        let mut assignment = vec![0usize; attrs.len()];
        loop {
            let context: Vec<(usize, usize)> =
                attrs.iter().copied().zip(assignment.iter().copied()).collect();
            worst = worst.max(lip_given_context(q, joint, Some(schema), &context));
            if worst.is_infinite() {
                return Ok(worst);
            }
            // Next mixed-radix assignment.
            let mut carry = true;
            for (k, &attr) in attrs.iter().enumerate().rev() {
                if !carry {
                    break;
                }
                assignment[k] += 1;
                if assignment[k] < schema.size(attr) {
                    carry = false;
                } else {
                    assignment[k] = 0;
                }
            }
            if carry {
                break;
            }
        }
    }
    Ok(worst)
}

/// LIP measurement against the prior conditioned on a context: the max over
/// observable y and possible s of `|ln P(y|s,ctx) / P(y|ctx)|`. An empty
/// context gives the plain LIP measurement.
fn lip_given_context(
    q: &Mechanism,
    joint: &JointDistribution,
    schema: Option<&AttributeSchema>,
    context: &[(usize, usize)],
) -> f64 {
    let a = joint.data_count();
    let c = joint.secret_count();
    let matches = |x: usize| -> bool {
        match schema {
            None => true,
            Some(sch) => {
                let tuple = sch.to_tuple(x);
                context.iter().all(|&(attr, value)| tuple[attr] == value)
            }
        }
    };
    // Unnormalized weights p(s, x) restricted to the context.
    let mut ctx_mass = 0.0;
    let mut secret_mass = vec![0.0; c];
    let mut x_weight = vec![0.0; a];
    let mut sx_weight = vec![vec![0.0; a]; c];
    for x in 0..a {
        if !matches(x) {
            continue;
        }
        for s in 0..c {
            let p = joint.prob(s, x);
            ctx_mass += p;
            secret_mass[s] += p;
            x_weight[x] += p;
            sx_weight[s][x] += p;
        }
    }
    if ctx_mass <= 0.0 {
        return 0.0; // unobservable context
    }
    let b = q.output_count();
    // P(y | ctx) up to the constant ctx_mass.
    let p_y: Vec<f64> =
        (0..b).map(|y| (0..a).map(|x| q.prob(y, x) * x_weight[x]).sum::<f64>() / ctx_mass).collect();
    let mut worst = 0.0f64;
    for s in 0..c {
        if secret_mass[s] <= 0.0 {
            continue; // secret impossible in this context
        }
        for y in 0..b {
            if p_y[y] <= 0.0 {
                continue; // output unobservable in this context
            }
            let p_y_s: f64 =
                (0..a).map(|x| q.prob(y, x) * sx_weight[s][x]).sum::<f64>() / secret_mass[s];
            if p_y_s <= 0.0 {
                return f64::INFINITY;
            }
            worst = worst.max((p_y_s / p_y[y]).ln().abs());
        }
    }
    worst
}

/// I(S;Y) in nats.
pub fn secret_leakage(q: &Mechanism, joint: &JointDistribution) -> Result<f64, AuditError> {
    check_dims(q, joint)?;
    let c = joint.secret_count();
    let b = q.output_count();
    let t = DMatrix::from_fn(c, b, |s, y| {
        (0..joint.data_count()).map(|x| joint.prob(s, x) * q.prob(y, x)).sum()
    });
    Ok(mutual_information_of_joint(&t))
}

/// I(X;Y) in nats.
pub fn utility(q: &Mechanism, joint: &JointDistribution) -> Result<f64, AuditError> {
    check_dims(q, joint)?;
    let a = joint.data_count();
    let b = q.output_count();
    let m = joint.marginals();
    let t = DMatrix::from_fn(a, b, |x, y| m.p_x.get(x) * q.prob(y, x));
    Ok(mutual_information_of_joint(&t))
}

/// Full report: all measures plus the lemma consistency flags.
pub fn audit_report(
    q: &Mechanism,
    joint: &JointDistribution,
    schema: Option<&AttributeSchema>,
) -> Result<PrivacyReport, AuditError> {
    let eps_ldp = measure_ldp(q, joint)?;
    let eps_lip = measure_lip(q, joint)?;
    let eps_srlip = match schema {
        Some(sch) => Some(measure_srlip(q, joint, sch)?),
        None => None,
    };
    let mi_sy = secret_leakage(q, joint)?;
    let mi_xy = utility(q, joint)?;
    // Float semantics handle infinities: x <= inf for finite x, inf <= inf.
    let lemma_flags = LemmaFlags {
        lip_le_ldp: eps_lip <= eps_ldp + LEMMA_SLACK,
        ldp_le_two_lip: eps_ldp <= 2.0 * eps_lip + LEMMA_SLACK,
        mi_sy_le_lip: mi_sy <= eps_lip + LEMMA_SLACK,
        lip_le_srlip: eps_srlip.map(|srlip| eps_lip <= srlip + LEMMA_SLACK),
    };
    Ok(PrivacyReport {
        eps_ldp,
        eps_lip,
        eps_srlip,
        mi_sy,
        mi_xy,
        lemma_flags,
        conventions: CONVENTIONS.to_string(),
    })
}

impl PrivacyReport {
    pub fn all_flags_hold(&self) -> bool {
        self.lemma_flags.lip_le_ldp
            && self.lemma_flags.ldp_le_two_lip
            && self.lemma_flags.mi_sy_le_lip
            && self.lemma_flags.lip_le_srlip.unwrap_or(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::random_mechanism;
    use crate::prob::random_joint_seeded;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} != {b}");
    }

    fn uniform_sx_joint() -> JointDistribution {
        // S = X, uniform binary.
        JointDistribution::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap()
    }

    #[test]
    fn constant_output_leaks_nothing() {
        let joint = random_joint_seeded(2, 3, 3);
        let q = Mechanism::from_rows(&[vec![1.0; 3]]).unwrap();
        close(measure_ldp(&q, &joint).unwrap(), 0.0, 1e-12);
        close(measure_lip(&q, &joint).unwrap(), 0.0, 1e-12);
    }

    #[test]
    fn randomized_response_ldp_is_exact() {
        let joint = uniform_sx_joint();
        for eps in [0.1, 0.5, 1.0, 2.0] {
            let q = Mechanism::randomized_response(eps);
            close(measure_ldp(&q, &joint).unwrap(), eps, 1e-12);
        }
    }

    #[test]
    fn identity_on_diagonal_joint_is_infinite() {
        let joint = uniform_sx_joint();
        let q = Mechanism::identity(2);
        assert!(measure_ldp(&q, &joint).unwrap().is_infinite());
        assert!(measure_lip(&q, &joint).unwrap().is_infinite());
    }

    #[test]
    fn randomized_response_lip_closed_form() {
        // P(y|s) in {e, 1}/(1+e) while P(y) = 1/2, so the ratio is either
        // 2e/(1+e) (above 1) or 2/(1+e) (below 1). By AM-GM the downward
        // shift dominates in absolute log: the measurement is ln((1+e)/2).
        let joint = uniform_sx_joint();
        for eps in [0.1, 0.5, 1.0, 2.0] {
            let q = Mechanism::randomized_response(eps);
            let e = eps.exp();
            let measured = measure_lip(&q, &joint).unwrap();
            close(measured, ((1.0 + e) / 2.0).ln(), 1e-12);
            // Both one-sided shifts are within the measurement.
            assert!(measured >= (2.0 * e / (1.0 + e)).ln() - 1e-12);
        }
    }

    #[test]
    fn independent_secret_has_zero_lip() {
        // S independent of X: any mechanism leaks nothing.
        let joint = JointDistribution::from_rows(&[
            vec![0.15, 0.35],
            vec![0.15, 0.35],
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let q = random_mechanism(3, 2, &mut rng);
            close(measure_lip(&q, &joint).unwrap(), 0.0, 1e-12);
        }
    }

    #[test]
    fn srlip_with_one_attribute_equals_lip() {
        let joint = random_joint_seeded(2, 4, 17);
        let schema = AttributeSchema::new(vec![4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let q = random_mechanism(4, 4, &mut rng);
            let lip = measure_lip(&q, &joint).unwrap();
            let srlip = measure_srlip(&q, &joint, &schema).unwrap();
            assert_eq!(lip, srlip); // bitwise: same code path
        }
    }

    #[test]
    fn side_channel_gap_instance() {
        // Two binary attributes, uniform; the secret agrees with
        // "x1 == x2" with probability 0.9. Releasing X^1 exactly leaks
        // nothing marginally (LIP = 0) but everything shifts once an
        // attacker knows X^2: P(y=x2|s=0,x2) = 0.9 vs P(y|x2) = 0.5, and
        // the extreme ratio is 0.1/0.5, so SRLIP = ln 5.
        let mut rows = vec![vec![0.0; 4], vec![0.0; 4]];
        for x1 in 0..2 {
            for x2 in 0..2 {
                let flat = x1 * 2 + x2;
                let p_agree = if x1 == x2 { 0.9 } else { 0.1 };
                rows[0][flat] = 0.25 * p_agree;
                rows[1][flat] = 0.25 * (1.0 - p_agree);
            }
        }
        let joint = JointDistribution::from_rows(&rows).unwrap();
        let schema = AttributeSchema::new(vec![2, 2]).unwrap();
        // Y = X^1: outputs first attribute exactly.
        let q = Mechanism::from_rows(&[
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
        ])
        .unwrap();
        close(measure_lip(&q, &joint).unwrap(), 0.0, 1e-12);
        close(measure_srlip(&q, &joint, &schema).unwrap(), 5f64.ln(), 1e-12);
    }

    #[test]
    fn report_flags_hold_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..50 {
            let joint = random_joint_seeded(2 + trial % 3, 2 + trial % 3, 1000 + trial as u64);
            let b = 2 + (trial % 4);
            let q = random_mechanism(b, joint.data_count(), &mut rng);
            let report = audit_report(&q, &joint, None).unwrap();
            assert!(report.all_flags_hold(), "trial {trial}: {report:?}");
            assert!(report.mi_sy <= report.eps_lip + 1e-9);
        }
    }

    #[test]
    fn measures_invariant_under_output_permutation_and_zero_rows() {
        let joint = random_joint_seeded(2, 3, 5);
        let q = Mechanism::from_rows(&[
            vec![0.5, 0.1, 0.3],
            vec![0.5, 0.9, 0.7],
        ])
        .unwrap();
        let permuted = Mechanism::from_rows(&[
            vec![0.5, 0.9, 0.7],
            vec![0.5, 0.1, 0.3],
        ])
        .unwrap();
        let padded = Mechanism::from_rows(&[
            vec![0.5, 0.1, 0.3],
            vec![0.0, 0.0, 0.0],
            vec![0.5, 0.9, 0.7],
        ])
        .unwrap();
        for other in [&permuted, &padded] {
            close(
                measure_ldp(&q, &joint).unwrap(),
                measure_ldp(other, &joint).unwrap(),
                1e-12,
            );
            close(
                measure_lip(&q, &joint).unwrap(),
                measure_lip(other, &joint).unwrap(),
                1e-12,
            );
        }
    }

    #[test]
    fn report_serializes_infinity_as_string() {
        let joint = uniform_sx_joint();
        let report = audit_report(&Mechanism::identity(2), &joint, None).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"eps_ldp\":\"inf\""), "{json}");
        let back: PrivacyReport = serde_json::from_str(&json).unwrap();
        assert!(back.eps_ldp.is_infinite());
    }

    #[test]
    fn attribute_guard() {
        let joint = random_joint_seeded(2, 2, 1);
        let mut sizes = vec![1; 12];
        sizes.push(2); // flat size 2, but 13 attributes
        let schema = AttributeSchema::new(sizes).unwrap();
        let q = Mechanism::identity(2);
        assert_eq!(
            measure_srlip(&q, &joint, &schema).unwrap_err(),
            AuditError::TooManyAttributes { m: 13, max: 12 }
        );
    }
}
