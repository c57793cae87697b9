//! JSON scenario documents.
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "period": 1.0,
//!   "body": { "type": "ball", "center": [0, 0], "radius": 1 },
//!   "interior_point": [0, 0],
//!   "drift": { "type": "zero" },
//!   "contraction": { "type": "zero" },
//!   "force": { "linear": [[1, 0], [0, 1]], "offset": [-2, 0] },
//!   "lipschitz": { "L1": 4, "Lf": 1 }
//! }
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sweeper::convex::{ConvexBody, ConvexError, HalfSpace, Point};
use sweeper::scenario::{
    AuditReport, ContractionKind, ContractionSpec, DriftShape, DriftSpec, ForceSpec, FourierSeries, LambdaCoupling,
    ScenarioError, SweepingScenario, TanhTerm,
};

use crate::error::CliError;

/// Pairs drawn by the audit that runs on every parsed scenario.
pub const AUDIT_SAMPLES: usize = 4000;
pub const AUDIT_SEED: u64 = 0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub dimension: usize,
    pub period: f64,
    pub body: BodyDoc,
    pub interior_point: Vec<f64>,
    #[serde(default)]
    pub drift: DriftDoc,
    #[serde(default)]
    pub contraction: ContractionDoc,
    pub force: ForceDoc,
    pub lipschitz: LipschitzDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodyDoc {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Polytope { halfspaces: Vec<HalfSpaceDoc>, bounding_radius: f64, interior_point: Vec<f64> },
    Ellipsoid { center: Vec<f64>, shape: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpaceDoc {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingDoc {
    #[default]
    Constant,
    Linear,
}

impl From<CouplingDoc> for LambdaCoupling {
    fn from(c: CouplingDoc) -> Self {
        match c {
            CouplingDoc::Constant => LambdaCoupling::Constant,
            CouplingDoc::Linear => LambdaCoupling::LinearInLambda,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierDoc {
    #[serde(default)]
    pub cos: Vec<Vec<f64>>,
    #[serde(default)]
    pub sin: Vec<Vec<f64>>,
    pub period: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftDoc {
    #[default]
    Zero,
    Fourier {
        #[serde(default)]
        cos: Vec<Vec<f64>>,
        #[serde(default)]
        sin: Vec<Vec<f64>>,
        period: f64,
        #[serde(default)]
        lambda_coupling: CouplingDoc,
    },
    PiecewiseLinear {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        #[serde(default)]
        lambda_coupling: CouplingDoc,
    },
    SqrtCusp {
        direction: Vec<f64>,
        cusp_time: f64,
        #[serde(default)]
        lambda_coupling: CouplingDoc,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContractionDoc {
    #[default]
    Zero,
    Affine {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
        #[serde(default)]
        lambda_coupling: CouplingDoc,
    },
    TanhRadial {
        gain: f64,
        center: Vec<f64>,
        #[serde(default)]
        lambda_coupling: CouplingDoc,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TanhTermDoc {
    pub gain: f64,
    pub direction: Vec<f64>,
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceDoc {
    #[serde(default)]
    pub linear: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    #[serde(default)]
    pub tanh_terms: Vec<TanhTermDoc>,
    #[serde(default)]
    pub forcing: Option<FourierDoc>,
    #[serde(default)]
    pub forcing_coupling: CouplingDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzDoc {
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2", default)]
    pub l2: Option<f64>,
    #[serde(rename = "Lf", default)]
    pub lf: f64,
}

fn schema(path: impl Into<String>, reason: impl Into<String>) -> CliError {
    CliError::Schema { path: path.into(), reason: reason.into() }
}

fn vector(path: &str, v: &[f64], d: usize) -> Result<Point, CliError> {
    if v.len() != d {
        return Err(schema(path, format!("expected {d} entries, got {}", v.len())));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(schema(format!("{path}[{i}]"), "must be finite"));
    }
    Ok(Point::from_column_slice(v))
}

fn matrix(path: &str, rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != d {
        return Err(schema(path, format!("expected {d} rows, got {}", rows.len())));
    }
    let mut m = DMatrix::zeros(d, d);
    for (r, row) in rows.iter().enumerate() {
        let v = vector(&format!("{path}[{r}]"), row, d)?;
        m.set_row(r, &v.transpose());
    }
    Ok(m)
}

fn vectors(path: &str, list: &[Vec<f64>], d: usize) -> Result<Vec<Point>, CliError> {
    list.iter().enumerate().map(|(k, v)| vector(&format!("{path}[{k}]"), v, d)).collect()
}

fn fourier(path: &str, cos: &[Vec<f64>], sin: &[Vec<f64>], period: f64, d: usize) -> Result<FourierSeries, CliError> {
    if !(period.is_finite() && period > 0.0) {
        return Err(schema(format!("{path}.period"), "must be positive"));
    }
    Ok(FourierSeries { cos: vectors(&format!("{path}.cos"), cos, d)?, sin: vectors(&format!("{path}.sin"), sin, d)?, period })
}

fn body_error(e: ConvexError) -> CliError {
    schema("body", e.to_string())
}

fn scenario_error(section: &str, e: ScenarioError) -> CliError {
    match e {
        ScenarioError::DimensionMismatch { what, expected, got } => schema(what, format!("dimension {got} does not match {expected}")),
        other => schema(section, other.to_string()),
    }
}

impl ScenarioDoc {
    /// Validated core scenario.
    pub fn build(&self) -> Result<SweepingScenario, CliError> {
        let d = self.dimension;
        if d == 0 || d > sweeper::convex::MAX_DIM {
            return Err(schema("dimension", format!("must lie in 1..=8, got {d}")));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(schema("period", "must be positive"));
        }
        let body = match &self.body {
            BodyDoc::Ball { center, radius } => ConvexBody::ball(vector("body.center", center, d)?, *radius).map_err(body_error)?,
            BodyDoc::Box { lower, upper } => {
                ConvexBody::axis_box(vector("body.lower", lower, d)?, vector("body.upper", upper, d)?).map_err(body_error)?
            }
            BodyDoc::Polytope { halfspaces, bounding_radius, interior_point } => {
                let rows = halfspaces
                    .iter()
                    .enumerate()
                    .map(|(k, h)| Ok(HalfSpace::new(vector(&format!("body.halfspaces[{k}].normal"), &h.normal, d)?, h.offset)))
                    .collect::<Result<Vec<_>, CliError>>()?;
                ConvexBody::polytope(rows, *bounding_radius, vector("body.interior_point", interior_point, d)?).map_err(body_error)?
            }
            BodyDoc::Ellipsoid { center, shape } => {
                ConvexBody::ellipsoid(vector("body.center", center, d)?, matrix("body.shape", shape, d)?).map_err(body_error)?
            }
        };
        let b0 = vector("interior_point", &self.interior_point, d)?;

        let drift = match &self.drift {
            DriftDoc::Zero => DriftSpec::zero(d),
            DriftDoc::Fourier { cos, sin, period, lambda_coupling } => {
                DriftSpec::new(DriftShape::Fourier(fourier("drift", cos, sin, *period, d)?), (*lambda_coupling).into(), d)
                    .map_err(|e| scenario_error("drift", e))?
            }
            DriftDoc::PiecewiseLinear { times, values, lambda_coupling } => DriftSpec::new(
                DriftShape::PiecewiseLinear { times: times.clone(), values: vectors("drift.values", values, d)? },
                (*lambda_coupling).into(),
                d,
            )
            .map_err(|e| scenario_error("drift", e))?,
            DriftDoc::SqrtCusp { direction, cusp_time, lambda_coupling } => DriftSpec::new(
                DriftShape::SqrtCusp { direction: vector("drift.direction", direction, d)?, cusp_time: *cusp_time },
                (*lambda_coupling).into(),
                d,
            )
            .map_err(|e| scenario_error("drift", e))?,
        };

        let declared_l2 = self.lipschitz.l2;
        if let Some(l2) = declared_l2 {
            if !(l2 > 0.0 && l2 < 1.0) {
                return Err(schema("lipschitz.L2", format!("L2 must lie in (0,1), got {l2}")));
            }
        }
        let contraction = match &self.contraction {
            ContractionDoc::Zero => match declared_l2 {
                None => ContractionSpec::zero(d),
                Some(l2) => ContractionSpec::new(ContractionKind::Zero, LambdaCoupling::Constant, l2, d)
                    .map_err(|e| scenario_error("contraction", e))?,
            },
            ContractionDoc::Affine { matrix: m, offset, lambda_coupling } => {
                let l2 = declared_l2.ok_or_else(|| schema("lipschitz.L2", "required for a non-zero contraction"))?;
                let offset = match offset {
                    Some(o) => vector("contraction.offset", o, d)?,
                    None => Point::zeros(d),
                };
                ContractionSpec::new(
                    ContractionKind::Affine { matrix: matrix("contraction.matrix", m, d)?, offset },
                    (*lambda_coupling).into(),
                    l2,
                    d,
                )
                .map_err(|e| scenario_error("contraction", e))?
            }
            ContractionDoc::TanhRadial { gain, center, lambda_coupling } => {
                let l2 = declared_l2.ok_or_else(|| schema("lipschitz.L2", "required for a non-zero contraction"))?;
                ContractionSpec::new(
                    ContractionKind::TanhRadial { gain: *gain, center: vector("contraction.center", center, d)? },
                    (*lambda_coupling).into(),
                    l2,
                    d,
                )
                .map_err(|e| scenario_error("contraction", e))?
            }
        };

        let f = &self.force;
        let linear = match &f.linear {
            Some(m) => matrix("force.linear", m, d)?,
            None => DMatrix::zeros(d, d),
        };
        let offset = match &f.offset {
            Some(o) => vector("force.offset", o, d)?,
            None => Point::zeros(d),
        };
        let tanh_terms = f
            .tanh_terms
            .iter()
            .enumerate()
            .map(|(k, t)| {
                Ok(TanhTerm {
                    gain: t.gain,
                    direction: vector(&format!("force.tanh_terms[{k}].direction"), &t.direction, d)?,
                    center: vector(&format!("force.tanh_terms[{k}].center"), &t.center, d)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let forcing = match &f.forcing {
            Some(doc) => fourier("force.forcing", &doc.cos, &doc.sin, doc.period, d)?,
            None => FourierSeries::zero(d),
        };
        if !(self.lipschitz.lf.is_finite() && self.lipschitz.lf >= 0.0) {
            return Err(schema("lipschitz.Lf", "must be finite and >= 0"));
        }
        let force = ForceSpec::new(linear, offset, tanh_terms, forcing, f.forcing_coupling.into(), self.lipschitz.lf)
            .map_err(|e| scenario_error("force", e))?;
        if !(self.lipschitz.l1.is_finite() && self.lipschitz.l1 >= 0.0) {
            return Err(schema("lipschitz.L1", "must be finite and >= 0"));
        }
        SweepingScenario::new(body, b0, drift, contraction, force, self.period, self.lipschitz.l1).map_err(|e| match e {
            ScenarioError::Invalid(msg) if msg.contains("interior point") => schema("interior_point", msg),
            other => scenario_error("scenario", other),
        })
    }
}

/// Lower-case hex SHA-256 of the raw document.
pub fn scenario_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Parses, validates and (unless `audit` is false) audits a scenario document.
pub fn parse_scenario(text: &str, audit: bool) -> Result<(SweepingScenario, Option<AuditReport>), CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ScenarioDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(if path == "." { "$".to_string() } else { path }, e.into_inner().to_string())
    })?;
    let scn = doc.build()?;
    if !audit {
        return Ok((scn, None));
    }
    let report = scn.lipschitz_audit(AUDIT_SAMPLES, AUDIT_SEED).map_err(|e| scenario_error("scenario", e))?;
    if !report.pass {
        return Err(CliError::AuditFailure {
            l2_empirical: report.l2_empirical,
            l2_declared: scn.l2(),
            lf_empirical: report.lf_empirical,
            lf_declared: scn.lf(),
        });
    }
    Ok((scn, Some(report)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DISK: &str = r#"{
        "dimension": 2, "period": 1.0,
        "body": {"type": "ball", "center": [0, 0], "radius": 1},
        "interior_point": [0, 0],
        "force": {"linear": [[1, 0], [0, 1]], "offset": [-2, 0]},
        "lipschitz": {"L1": 4, "Lf": 1}
    }"#;

    #[test]
    fn minimal_disk_document() {
        let (scn, report) = parse_scenario(DISK, true).unwrap();
        assert_eq!(scn.dim(), 2);
        assert!(scn.is_autonomous_at_zero());
        assert!(report.unwrap().pass);
    }

    #[test]
    fn l2_out_of_range() {
        let text = DISK.replace(r#""L1": 4"#, r#""L1": 4, "L2": 1.5"#);
        match parse_scenario(&text, true) {
            Err(CliError::Schema { path, reason }) => {
                assert_eq!(path, "lipschitz.L2");
                assert!(reason.contains("L2 must lie in (0,1)"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn underdeclared_contraction_fails_audit() {
        let text = DISK
            .replace(r#""L1": 4"#, r#""L1": 4, "L2": 0.1"#)
            .replace(r#""interior_point": [0, 0],"#, r#""interior_point": [0, 0], "contraction": {"type": "affine", "matrix": [[0.3, 0], [0, 0.3]]},"#);
        assert!(matches!(parse_scenario(&text, true), Err(CliError::AuditFailure { .. })));
        assert!(parse_scenario(&text, false).is_ok());
    }

    #[test]
    fn paths_point_at_the_offending_field() {
        let text = DISK.replace(r#""radius": 1"#, r#""radius": "one""#);
        match parse_scenario(&text, true) {
            Err(CliError::Schema { path, .. }) => assert!(path.starts_with("body"), "{path}"),
            other => panic!("unexpected {other:?}"),
        }
        let text = DISK.replace(r#""offset": [-2, 0]"#, r#""offset": [-2, 0, 1]"#);
        match parse_scenario(&text, true) {
            Err(CliError::Schema { path, .. }) => assert_eq!(path, "force.offset"),
            other => panic!("unexpected {other:?}"),
        }
        let text = DISK.replace(r#""period": 1.0"#, r#""period": 1.0, "colour": 3"#);
        assert!(matches!(parse_scenario(&text, true), Err(CliError::Schema { .. })));
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(scenario_hash(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
