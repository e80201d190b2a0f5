//! Descriptor tables: schema, ingestion, encoding and target transforms.

mod encode;
mod io;
mod scaler;
mod schema;

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use encode::{encode, encode_features, DesignMatrix};
pub use io::{load_dataset, read_dataset, write_dataset};
pub use scaler::{apply_scaler, fit_scaler, ScalerStats};
pub use schema::{
    FeatureDef, FeatureKind, FeatureSchema, CALC_KR, CALC_WAVELENGTH, COORDINATION_LEVELS, DEFAULT_EXCITED_STATES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row `{row}`: missing value for required feature `{feature}`")]
    MissingValue { row: String, feature: String },
    #[error("row `{row}`: `{value}` is not a level of `{feature}`")]
    BadLevel { row: String, feature: String, value: String },
    #[error("row `{row}`: cannot parse `{value}` in column `{column}` as a number")]
    BadNumber { row: String, column: String, value: String },
    #[error("row `{row}`: target `{target}` = {value} is out of range")]
    OutOfRange { row: String, target: String, value: f64 },
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("sample `{0}` has no value for the requested target")]
    MissingTarget(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("invalid target spec: {0}")]
    TargetSpec(String),
    #[error("cannot fit a scaler on an empty matrix")]
    EmptyMatrix,
    #[error("scaler has {expected} columns, matrix has {found}")]
    ScalerWidth { expected: usize, found: usize },
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Numeric(f64),
    Level(String),
}

/// Measured photophysical properties of one emitter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub wavelength_nm: Option<f64>,
    pub kr_per_s: Option<f64>,
    pub plqy: Option<f64>,
}

impl Targets {
    pub fn get(&self, kind: TargetKind) -> Option<f64> {
        match kind {
            TargetKind::Wavelength => self.wavelength_nm,
            TargetKind::Kr => self.kr_per_s,
            TargetKind::Plqy => self.plqy,
        }
    }

    fn validate(&self, row: &str) -> Result<(), DatasetError> {
        let bad = |target: &str, value: f64| DatasetError::OutOfRange {
            row: row.to_string(),
            target: target.to_string(),
            value,
        };
        if let Some(v) = self.wavelength_nm {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad("wavelength_nm", v));
            }
        }
        if let Some(v) = self.kr_per_s {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad("kr_per_s", v));
            }
        }
        if let Some(v) = self.plqy {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad("plqy", v));
            }
        }
        Ok(())
    }
}

/// One emitter. `values` is aligned with the schema's feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub values: Vec<Option<FeatureValue>>,
    pub targets: Targets,
}

impl Sample {
    pub fn validate(&self, schema: &FeatureSchema) -> Result<(), DatasetError> {
        if self.values.len() != schema.features().len() {
            return Err(DatasetError::Schema(format!(
                "sample `{}` has {} values for {} features",
                self.id,
                self.values.len(),
                schema.features().len()
            )));
        }
        for (def, value) in schema.features().iter().zip(&self.values) {
            match (value, &def.kind) {
                (None, _) if def.required => {
                    return Err(DatasetError::MissingValue {
                        row: self.id.clone(),
                        feature: def.name.clone(),
                    })
                }
                (None, _) => {}
                (Some(FeatureValue::Numeric(v)), FeatureKind::Numeric) => {
                    if !v.is_finite() {
                        return Err(DatasetError::BadNumber {
                            row: self.id.clone(),
                            column: def.name.clone(),
                            value: v.to_string(),
                        });
                    }
                }
                (Some(FeatureValue::Level(l)), FeatureKind::Categorical { levels }) => {
                    if !levels.contains(l) {
                        return Err(DatasetError::BadLevel {
                            row: self.id.clone(),
                            feature: def.name.clone(),
                            value: l.clone(),
                        });
                    }
                }
                (Some(v), _) => {
                    return Err(DatasetError::Schema(format!(
                        "sample `{}`: value {v:?} does not match the kind of `{}`",
                        self.id, def.name
                    )))
                }
            }
        }
        self.targets.validate(&self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: FeatureSchema,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, samples: Vec<Sample>) -> Result<Self, DatasetError> {
        let mut ids = HashSet::new();
        for s in &samples {
            if !ids.insert(s.id.as_str()) {
                return Err(DatasetError::DuplicateId(s.id.clone()));
            }
            s.validate(&schema)?;
        }
        Ok(Self { schema, samples })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.id.as_str()).collect()
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            samples: rows.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Wavelength,
    Kr,
    Plqy,
}

impl TargetKind {
    /// Column name of this target in data files.
    pub fn column(self) -> &'static str {
        match self {
            TargetKind::Wavelength => "wavelength_nm",
            TargetKind::Kr => "kr_per_s",
            TargetKind::Plqy => "plqy",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            TargetKind::Wavelength => "nm",
            TargetKind::Kr => "log10(s^-1)",
            TargetKind::Plqy => "",
        }
    }
}

impl std::str::FromStr for TargetKind {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wavelength" | "wavelength_nm" => Ok(TargetKind::Wavelength),
            "kr" | "kr_per_s" => Ok(TargetKind::Kr),
            "plqy" => Ok(TargetKind::Plqy),
            other => Err(DatasetError::TargetSpec(format!("unknown target `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    Identity,
    Log10,
}

/// Which property to model, in which space, and which features to hide.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub transform: TargetTransform,
    #[serde(default)]
    pub feature_mask: BTreeSet<String>,
}

impl TargetSpec {
    pub fn new(
        kind: TargetKind,
        transform: TargetTransform,
        feature_mask: BTreeSet<String>,
    ) -> Result<Self, DatasetError> {
        let spec = Self {
            kind,
            transform,
            feature_mask,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.kind == TargetKind::Kr && self.transform != TargetTransform::Log10 {
            return Err(DatasetError::TargetSpec("k_r is modelled in log10 space".into()));
        }
        if self.kind == TargetKind::Plqy
            && !(self.feature_mask.contains(CALC_WAVELENGTH) && self.feature_mask.contains(CALC_KR))
        {
            return Err(DatasetError::TargetSpec(format!(
                "PLQY models must exclude `{CALC_WAVELENGTH}` and `{CALC_KR}`"
            )));
        }
        Ok(())
    }

    pub fn wavelength() -> Self {
        Self {
            kind: TargetKind::Wavelength,
            transform: TargetTransform::Identity,
            feature_mask: BTreeSet::new(),
        }
    }

    pub fn kr() -> Self {
        Self {
            kind: TargetKind::Kr,
            transform: TargetTransform::Log10,
            feature_mask: BTreeSet::new(),
        }
    }

    pub fn plqy() -> Self {
        Self {
            kind: TargetKind::Plqy,
            transform: TargetTransform::Identity,
            feature_mask: [CALC_WAVELENGTH, CALC_KR].iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn preset(kind: TargetKind) -> Self {
        match kind {
            TargetKind::Wavelength => Self::wavelength(),
            TargetKind::Kr => Self::kr(),
            TargetKind::Plqy => Self::plqy(),
        }
    }

    /// Natural units -> model space.
    pub fn forward(&self, value: f64) -> f64 {
        match self.transform {
            TargetTransform::Identity => value,
            TargetTransform::Log10 => value.log10(),
        }
    }

    /// Model space -> natural units, without output clipping.
    pub fn inverse(&self, value: f64) -> f64 {
        match self.transform {
            TargetTransform::Identity => value,
            TargetTransform::Log10 => 10f64.powf(value),
        }
    }

    /// Model space -> reported value. PLQY is clipped to [0, 1] here and only here.
    pub fn to_reported(&self, value: f64) -> f64 {
        let v = self.inverse(value);
        match self.kind {
            TargetKind::Plqy => v.clamp(0.0, 1.0),
            _ => v,
        }
    }
}
