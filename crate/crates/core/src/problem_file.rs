//! JSON problem-definition files (`"format": "mpct-v1"`).
//!
//! ```json
//! {
//!   "format": "mpct-v1",
//!   "model": {
//!     "A": [[1.0, 0.1], [0.0, 1.0]],
//!     "B": [[0.0], [0.1]],
//!     "x_lo": [-1.0, "-inf"], "x_hi": [1.0, "inf"],
//!     "u_lo": [-0.5], "u_hi": [0.5]
//!   },
//!   "params": {
//!     "Q": [1.0, 1.0], "R": [[0.1]], "T": [10.0, 10.0], "S": [0.1],
//!     "N": 20, "epsilon": 1e-6, "rho": 1.0,
//!     "eps_primal": 1e-4, "eps_dual": 1e-4, "max_iter": 4000
//!   },
//!   "scaling": { "state": [1.0, 1.0], "input": [1.0] }
//! }
//! ```
//!
//! Matrices are row-major nested arrays, or flat arrays meaning a diagonal
//! matrix. Infinite bounds are written as the strings `"inf"` / `"-inf"`.
//! `epsilon`, `eps_primal`, `eps_dual`, `max_iter`, `tolerance_mode`,
//! `scaling` and a free-text `description` are optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::problem::{LtiModel, MpctParams, Scaling, ToleranceMode};

pub const FORMAT_TAG: &str = "mpct-v1";

/// A bound entry: a JSON number or one of the infinity sentinels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound(pub f64);

impl Serialize for Bound {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Bound(v)),
            Raw::Text(t) => match t.trim() {
                "inf" | "+inf" => Ok(Bound(f64::INFINITY)),
                "-inf" => Ok(Bound(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("unknown bound sentinel {other:?}"))),
            },
        }
    }
}

/// `#[serde(with = "bound_vec")]` for `Vec<f64>` fields that may hold ±∞,
/// which plain JSON numbers cannot represent.
pub(crate) mod bound_vec {
    use super::Bound;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.iter().map(|x| Bound(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        Ok(Vec::<Bound>::deserialize(d)?.into_iter().map(|b| b.0).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Full(Vec<Vec<f64>>),
    Diagonal(Vec<f64>),
}

impl MatrixSpec {
    pub fn to_matrix(&self) -> Result<DenseMatrix> {
        match self {
            MatrixSpec::Full(rows) => DenseMatrix::from_rows(rows),
            MatrixSpec::Diagonal(d) => Ok(DenseMatrix::from_diagonal(d)),
        }
    }

    fn from_matrix(m: &DenseMatrix) -> Self {
        let diagonal = m.is_square() && (0..m.rows()).all(|i| (0..m.cols()).all(|j| i == j || m[(i, j)] == 0.0));
        if diagonal {
            MatrixSpec::Diagonal((0..m.rows()).map(|i| m[(i, i)]).collect())
        } else {
            MatrixSpec::Full(m.to_rows())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub x_lo: Vec<Bound>,
    pub x_hi: Vec<Bound>,
    pub u_lo: Vec<Bound>,
    pub u_hi: Vec<Bound>,
}

fn default_epsilon() -> f64 {
    MpctParams::DEFAULT_EPSILON
}

fn default_tolerance() -> f64 {
    MpctParams::DEFAULT_TOLERANCE
}

fn default_max_iter() -> usize {
    MpctParams::DEFAULT_MAX_ITER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsSpec {
    #[serde(rename = "Q")]
    pub q: MatrixSpec,
    #[serde(rename = "R")]
    pub r: MatrixSpec,
    #[serde(rename = "T")]
    pub t: MatrixSpec,
    #[serde(rename = "S")]
    pub s: MatrixSpec,
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub rho: f64,
    #[serde(default = "default_tolerance")]
    pub eps_primal: f64,
    #[serde(default = "default_tolerance")]
    pub eps_dual: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub tolerance_mode: ToleranceMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub model: ModelSpec,
    pub params: ParamsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Scaling>,
}

/// Parsed, validated contents of a problem file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemDefinition {
    pub model: LtiModel,
    pub params: MpctParams,
    pub scaling: Option<Scaling>,
}

impl ProblemFile {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        if file.format != FORMAT_TAG {
            return Err(Error::Format(format!("expected format {FORMAT_TAG:?}, found {:?}", file.format)));
        }
        Ok(file)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem file serializes")
    }

    pub fn from_definition(def: &ProblemDefinition) -> Self {
        let bounds = |v: &[f64]| v.iter().map(|&x| Bound(x)).collect();
        let (m, p) = (&def.model, &def.params);
        ProblemFile {
            format: FORMAT_TAG.to_string(),
            description: None,
            model: ModelSpec {
                a: m.a.to_rows(),
                b: m.b.to_rows(),
                x_lo: bounds(&m.x_lo),
                x_hi: bounds(&m.x_hi),
                u_lo: bounds(&m.u_lo),
                u_hi: bounds(&m.u_hi),
            },
            params: ParamsSpec {
                q: MatrixSpec::from_matrix(&p.q),
                r: MatrixSpec::from_matrix(&p.r),
                t: MatrixSpec::from_matrix(&p.t),
                s: MatrixSpec::from_matrix(&p.s),
                horizon: p.horizon,
                epsilon: p.epsilon,
                rho: p.rho,
                eps_primal: p.eps_primal,
                eps_dual: p.eps_dual,
                max_iter: p.max_iter,
                tolerance_mode: p.tolerance_mode,
            },
            scaling: def.scaling.clone(),
        }
    }

    pub fn to_definition(&self) -> Result<ProblemDefinition> {
        let plain = |v: &[Bound]| v.iter().map(|b| b.0).collect::<Vec<_>>();
        let m = &self.model;
        let model = LtiModel::new(
            DenseMatrix::from_rows(&m.a)?,
            DenseMatrix::from_rows(&m.b)?,
            plain(&m.x_lo),
            plain(&m.x_hi),
            plain(&m.u_lo),
            plain(&m.u_hi),
        )?;
        let p = &self.params;
        let params = MpctParams {
            q: p.q.to_matrix()?,
            r: p.r.to_matrix()?,
            t: p.t.to_matrix()?,
            s: p.s.to_matrix()?,
            horizon: p.horizon,
            epsilon: p.epsilon,
            rho: p.rho,
            eps_primal: p.eps_primal,
            eps_dual: p.eps_dual,
            max_iter: p.max_iter,
            tolerance_mode: p.tolerance_mode,
        };
        params.validate(model.nx(), model.nu())?;
        Ok(ProblemDefinition { model, params, scaling: self.scaling.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "format": "mpct-v1",
        "model": {
            "A": [[1.0, 0.1], [0.0, 1.0]],
            "B": [[0.0], [0.1]],
            "x_lo": [-1.0, "-inf"], "x_hi": [1.0, "inf"],
            "u_lo": [-0.5], "u_hi": [0.5]
        },
        "params": {
            "Q": [1.0, 2.0], "R": [[0.1]], "T": [10.0, 10.0], "S": [0.1],
            "N": 20, "rho": 1.0
        }
    }"#;

    #[test]
    fn parses_sentinels_and_defaults() {
        let def = ProblemFile::from_json_str(SAMPLE).unwrap().to_definition().unwrap();
        assert_eq!(def.model.x_hi, vec![1.0, f64::INFINITY]);
        assert_eq!(def.model.x_lo[1], f64::NEG_INFINITY);
        assert_eq!(def.params.q, DenseMatrix::from_diagonal(&[1.0, 2.0]));
        assert_eq!(def.params.epsilon, 1e-6);
        assert_eq!(def.params.max_iter, 4000);
        assert_eq!(def.params.eps_primal, 1e-4);
        assert!(def.scaling.is_none());
    }

    #[test]
    fn round_trips_through_json() {
        let def = ProblemFile::from_json_str(SAMPLE).unwrap().to_definition().unwrap();
        let text = ProblemFile::from_definition(&def).to_json_string();
        assert!(text.contains("\"inf\""));
        let back = ProblemFile::from_json_str(&text).unwrap().to_definition().unwrap();
        assert_eq!(back, def);
    }

    #[test]
    fn rejects_wrong_format_and_sentinel() {
        let wrong = SAMPLE.replace("mpct-v1", "mpct-v0");
        assert!(matches!(ProblemFile::from_json_str(&wrong), Err(Error::Format(_))));
        let bad = SAMPLE.replace("\"-inf\"", "\"minus infinity\"");
        assert!(matches!(ProblemFile::from_json_str(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn invalid_contents_surface_domain_errors() {
        let bad = SAMPLE.replace("\"Q\": [1.0, 2.0]", "\"Q\": [1.0, 0.0]");
        let file = ProblemFile::from_json_str(&bad).unwrap();
        assert!(matches!(file.to_definition(), Err(Error::CostNotPositiveDefinite(_))));
    }

    #[test]
    fn precomputed_data_survives_json_with_infinite_bounds() {
        let def = ProblemFile::from_json_str(SAMPLE).unwrap().to_definition().unwrap();
        let data = crate::build_problem(&def.model, &def.params).unwrap();
        let text = serde_json::to_string(&data).unwrap();
        let back: crate::PrecomputedData = serde_json::from_str(&text).unwrap();
        assert_eq!(back, data);
        assert_eq!(back.bounds().1[0], f64::INFINITY);
    }
}
