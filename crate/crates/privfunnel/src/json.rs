//! JSON wire formats: prior files, mechanism files, optimization results,
//! and the infinity-as-"inf" encoding used by privacy reports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanism::{Mechanism, MechanismError};
use crate::optimize::{Notion, OptimizationResult};
use crate::prob::{AttributeSchema, JointDistribution, ProbError};

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("malformed JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{0}")]
    Prob(#[from] ProbError),
    #[error("{0}")]
    Mechanism(#[from] MechanismError),
    #[error("inconsistent file: {0}")]
    Inconsistent(String),
}

/// Prior distribution file:
/// `{"c": 2, "a": 4, "p": [[...], [...]], "schema": {"sizes": [2, 2]}}`
/// with one row of `p` per secret value and `schema` optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorFile {
    pub c: usize,
    pub a: usize,
    pub p: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<SchemaField>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaField {
    pub sizes: Vec<usize>,
}

impl PriorFile {
    pub fn new(joint: &JointDistribution, schema: Option<&AttributeSchema>) -> Self {
        Self {
            c: joint.secret_count(),
            a: joint.data_count(),
            p: (0..joint.secret_count())
                .map(|s| (0..joint.data_count()).map(|x| joint.prob(s, x)).collect())
                .collect(),
            schema: schema.map(|s| SchemaField { sizes: s.sizes().to_vec() }),
        }
    }

    pub fn joint(&self) -> Result<JointDistribution, JsonError> {
        let joint = JointDistribution::from_rows(&self.p)?;
        if joint.secret_count() != self.c || joint.data_count() != self.a {
            return Err(JsonError::Inconsistent(format!(
                "matrix is {}x{} but file declares c={}, a={}",
                joint.secret_count(),
                joint.data_count(),
                self.c,
                self.a
            )));
        }
        Ok(joint)
    }

    pub fn attribute_schema(&self) -> Result<Option<AttributeSchema>, JsonError> {
        match &self.schema {
            None => Ok(None),
            Some(field) => {
                let schema = AttributeSchema::new(field.sizes.clone())?;
                if schema.flat_size() != self.a {
                    return Err(JsonError::Inconsistent(format!(
                        "schema flattens to {} values but a = {}",
                        schema.flat_size(),
                        self.a
                    )));
                }
                Ok(Some(schema))
            }
        }
    }
}

pub fn prior_from_json(s: &str) -> Result<PriorFile, JsonError> {
    Ok(serde_json::from_str(s)?)
}

/// Mechanism file: `{"a": 2, "b": 2, "Q": [[row per output y]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MechanismFile {
    pub a: usize,
    pub b: usize,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
}

impl MechanismFile {
    pub fn new(m: &Mechanism) -> Self {
        Self { a: m.input_count(), b: m.output_count(), q: m.rows() }
    }

    pub fn mechanism(&self) -> Result<Mechanism, JsonError> {
        let m = Mechanism::from_rows(&self.q)?;
        if m.input_count() != self.a || m.output_count() != self.b {
            return Err(JsonError::Inconsistent(format!(
                "matrix is {}x{} but file declares b={}, a={}",
                m.output_count(),
                m.input_count(),
                self.b,
                self.a
            )));
        }
        Ok(m)
    }
}

/// Parses a mechanism from either a bare mechanism file or an optimization
/// result file (which nests the mechanism), so optimizer output can be fed
/// straight back into `audit` and `sanitize`.
pub fn mechanism_from_json(s: &str) -> Result<Mechanism, JsonError> {
    #[derive(Deserialize)]
    struct Wrapper {
        mechanism: MechanismFile,
    }
    if let Ok(file) = serde_json::from_str::<MechanismFile>(s) {
        return file.mechanism();
    }
    let wrapper: Wrapper = serde_json::from_str(s)?;
    wrapper.mechanism.mechanism()
}

/// Optimization result file: the reduced mechanism plus the headline
/// numbers (utility in nats, budget, notion, total vertex count, wall time).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultFile {
    pub mechanism: MechanismFile,
    pub utility_nats: f64,
    pub epsilon: f64,
    pub notion: Notion,
    pub vertex_count: usize,
    pub time_ms: f64,
}

impl ResultFile {
    pub fn new(result: &OptimizationResult) -> Self {
        Self {
            mechanism: MechanismFile::new(&result.mechanism),
            utility_nats: result.utility,
            epsilon: result.epsilon,
            notion: result.notion,
            vertex_count: result.diagnostics.total_vertices(),
            time_ms: result.diagnostics.time_ms,
        }
    }
}

/// Serializes f64 with infinities encoded as the string `"inf"`.
pub mod real_or_inf {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            serializer.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            serializer.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(D::Error::custom(format!("expected a number or \"inf\", got {other:?}"))),
            },
        }
    }
}

/// [`real_or_inf`] lifted to `Option<f64>`; pair with
/// `skip_serializing_if = "Option::is_none"`.
pub mod opt_real_or_inf {
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, serializer: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => super::real_or_inf::serialize(x, serializer),
            None => serializer.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<Option<f64>, D::Error> {
        super::real_or_inf::deserialize(deserializer).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::random_joint_seeded;

    #[test]
    fn prior_round_trip_with_schema() {
        let joint = random_joint_seeded(2, 6, 3);
        let schema = AttributeSchema::new(vec![2, 3]).unwrap();
        let file = PriorFile::new(&joint, Some(&schema));
        let json = serde_json::to_string_pretty(&file).unwrap();
        let parsed = prior_from_json(&json).unwrap();
        assert_eq!(parsed.joint().unwrap(), joint);
        assert_eq!(parsed.attribute_schema().unwrap().unwrap(), schema);
    }

    #[test]
    fn prior_rejects_inconsistent_header() {
        let json = r#"{"c": 3, "a": 2, "p": [[0.5, 0.0], [0.0, 0.5]]}"#;
        assert!(prior_from_json(json).unwrap().joint().is_err());
    }

    #[test]
    fn prior_rejects_schema_size_mismatch() {
        let json = r#"{"c": 2, "a": 2, "p": [[0.5, 0.0], [0.0, 0.5]],
                       "schema": {"sizes": [2, 2]}}"#;
        assert!(prior_from_json(json).unwrap().attribute_schema().is_err());
    }

    #[test]
    fn mechanism_round_trip_and_flexible_parse() {
        let m = Mechanism::randomized_response(0.5);
        let bare = serde_json::to_string(&MechanismFile::new(&m)).unwrap();
        assert_eq!(mechanism_from_json(&bare).unwrap(), m);

        let wrapped = format!(
            r#"{{"mechanism": {}, "utility_nats": 0.1, "epsilon": 0.5,
                "notion": "lip", "vertex_count": 3, "time_ms": 1.0}}"#,
            bare
        );
        assert_eq!(mechanism_from_json(&wrapped).unwrap(), m);
    }

    #[test]
    fn mechanism_rejects_nonstochastic() {
        let json = r#"{"a": 2, "b": 1, "Q": [[0.9, 1.0]]}"#;
        assert!(mechanism_from_json(json).is_err());
    }
}
