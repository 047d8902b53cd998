//! Input documents: class points, family parameters and explicit pairs.

use std::path::Path;

use bochner_core::algebra::{Mat2, MatPoly};
use bochner_core::classify::{family_i, family_ii, family_iii, ClassPoint, Family};
use bochner_core::ops::DiffOp2;
use bochner_core::quad::WeightFn;
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::CliError;

/// The `--input` argument as JSON: a path to a file, or an inline document. `Null` when absent.
pub fn load(arg: Option<&str>) -> Result<Value, CliError> {
    let Some(arg) = arg else { return Ok(Value::Null) };
    let text = if Path::new(arg).is_file() {
        std::fs::read_to_string(arg)?
    } else if arg.trim_start().starts_with(['{', '[']) {
        arg.to_string()
    } else {
        return Err(CliError::Input(format!("input file {arg:?} does not exist")));
    };
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("invalid JSON: {e}")))
}

pub fn field<T: DeserializeOwned>(v: &Value, key: &str) -> Result<Option<T>, CliError> {
    match v.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(x) => serde_json::from_value(x.clone()).map(Some).map_err(|e| CliError::Input(format!("field {key:?}: {e}"))),
    }
}

pub fn family(v: &Value) -> Result<Family, CliError> {
    let name: String = field(v, "family")?.ok_or_else(|| CliError::Input("missing field \"family\"".into()))?;
    name.parse().map_err(CliError::Input)
}

/// A point given directly, wrapped in `point`, `result` or `report`, as the first scan record,
/// or as `family` with `params`.
pub fn point(v: &Value) -> Result<ClassPoint, CliError> {
    for key in ["result", "report", "point"] {
        if let Some(inner) = v.get(key).filter(|x| x.is_object()) {
            return point(inner);
        }
    }
    if let Some(records) = v.get("records").and_then(Value::as_array) {
        let first = records.first().ok_or_else(|| CliError::Input("scan report has no records".into()))?;
        return point(first);
    }
    if let Some(params) = field::<Vec<f64>>(v, "params")? {
        let fam = family(v)?;
        let need = fam.parameter_names().len();
        if params.len() != need {
            return Err(CliError::Input(format!("family {} takes {need} parameters {:?}", fam.name(), fam.parameter_names())));
        }
        let p = match fam {
            Family::I => family_i(params[0], params[1], params[2]),
            Family::II => family_ii(params[0], params[1], params[2]),
            Family::III => family_iii(params[0], params[1], params[2], params[3], params[4]),
        };
        return Ok(p?);
    }
    serde_json::from_value(v.clone()).map_err(|e| CliError::Input(format!("not a class point: {e}")))
}

/// What a pair can be built from.
pub enum PairSpec {
    Point(ClassPoint),
    /// Diagonal Jacobi pair `(1−x)^α (1+x)^β I`.
    Classical { alpha: f64, beta: f64 },
    Explicit { weight: WeightFn, op: DiffOp2 },
}

impl PairSpec {
    pub fn parse(v: &Value) -> Result<PairSpec, CliError> {
        if let Some(c) = v.get("classical") {
            let alpha = field(c, "alpha")?.unwrap_or(0.0);
            let beta = field(c, "beta")?.unwrap_or(0.0);
            return Ok(PairSpec::Classical { alpha, beta });
        }
        if let (Some(weight), Some(op)) = (field(v, "weight")?, field(v, "op")?) {
            return Ok(PairSpec::Explicit { weight, op });
        }
        point(v).map(PairSpec::Point)
    }

    pub fn classical_pair(alpha: f64, beta: f64) -> (WeightFn, DiffOp2) {
        let weight = WeightFn::single(alpha, beta, MatPoly::constant(Mat2::identity()));
        let op = DiffOp2::hypergeometric(Mat2::scalar(-(alpha + beta + 2.0)), Mat2::scalar(beta - alpha), Mat2::zero());
        (weight, op)
    }
}
