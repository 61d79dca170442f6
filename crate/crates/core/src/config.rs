//! JSON plant description.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error};
use crate::flatness::Plant;
use crate::linkage::{Link, LinkageModel, TwoLinkArm};
use crate::muscle::MuscleParams;

pub const PLANT_SCHEMA: &str = "mssflat.plant/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFile {
    pub mass: f64,
    pub length: f64,
    pub com: f64,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantFile {
    pub schema: String,
    #[serde(default)]
    pub name: String,
    pub gravity: f64,
    pub links: Vec<LinkFile>,
    /// Rows are joints, columns muscles.
    pub moment_arms: Vec<Vec<f64>>,
    pub rest_lengths: Vec<f64>,
    /// Rows of `E`.
    pub flat_outputs: Vec<Vec<f64>>,
    pub muscles: Vec<MuscleParams>,
}

fn field(field: &str, reason: impl Into<String>) -> Error {
    ConfigError::Field {
        field: field.to_string(),
        reason: reason.into(),
    }
    .into()
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, Error> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(field(name, "must be a non-empty rectangular matrix"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(field(name, "entries must be finite"));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flatten().copied(),
    ))
}

impl PlantFile {
    pub fn build(&self) -> Result<Plant, Error> {
        if self.schema != PLANT_SCHEMA {
            return Err(field(
                "schema",
                format!("expected \"{PLANT_SCHEMA}\", got \"{}\"", self.schema),
            ));
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return Err(field("gravity", "must be non-negative"));
        }
        if self.links.len() != 2 {
            return Err(field("links", "exactly two links are supported"));
        }
        for (i, l) in self.links.iter().enumerate() {
            for (name, v) in [
                ("mass", l.mass),
                ("length", l.length),
                ("com", l.com),
                ("inertia", l.inertia),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(field(&format!("links[{i}].{name}"), "must be positive"));
                }
            }
        }
        let link = |l: &LinkFile| Link {
            mass: l.mass,
            length: l.length,
            com: l.com,
            inertia: l.inertia,
        };
        let a = matrix("moment_arms", &self.moment_arms)?;
        if a.nrows() != 2 {
            return Err(field("moment_arms", "needs one row per joint"));
        }
        let e = matrix("flat_outputs", &self.flat_outputs)?;
        if self.rest_lengths.len() != a.ncols() {
            return Err(field("rest_lengths", "needs one entry per muscle"));
        }
        if self.muscles.len() != a.ncols() {
            return Err(field("muscles", "needs one entry per moment-arm column"));
        }
        let model = LinkageModel {
            arm: TwoLinkArm {
                links: [link(&self.links[0]), link(&self.links[1])],
                gravity: self.gravity,
            },
            moment_arms: a,
            rest_lengths: DVector::from_vec(self.rest_lengths.clone()),
        };
        Plant::new(model, self.muscles.clone(), &e)
    }
}

pub fn plant_from_json(text: &str) -> Result<Plant, Error> {
    let file: PlantFile = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        path: "<plant>".into(),
        reason: e.to_string(),
    })?;
    file.build()
}

pub fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| {
        ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
        .into()
    })
}

pub fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, Error> {
    serde_json::from_str(text).map_err(|e| {
        ConfigError::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
        .into()
    })
}

pub fn load_plant(path: &Path) -> Result<Plant, Error> {
    let text = read_text(path)?;
    let file: PlantFile = parse_json(path, &text)?;
    file.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHIPPED: &str = include_str!("../../../scenarios/arm_plant.json");

    #[test]
    fn shipped_plant_loads() {
        let p = plant_from_json(SHIPPED).unwrap();
        assert_eq!(p.muscles.len(), 6);
        assert_eq!(p.flat.outputs(), 4);
    }

    #[test]
    fn bad_schema_and_shapes_are_field_errors() {
        let mut f: PlantFile = serde_json::from_str(SHIPPED).unwrap();
        f.schema = "other".into();
        assert!(matches!(f.build(), Err(Error::Config(ConfigError::Field { .. }))));
        let mut f: PlantFile = serde_json::from_str(SHIPPED).unwrap();
        f.rest_lengths.pop();
        assert!(matches!(f.build(), Err(Error::Config(ConfigError::Field { .. }))));
        assert!(plant_from_json("{").is_err());
    }
}
