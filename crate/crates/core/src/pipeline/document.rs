use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::{encode_features, Dataset, DesignMatrix, FeatureSchema, TargetSpec};
use crate::learners::TrainedRegressor;
use crate::stacking::StackModel;

pub const MODEL_DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DocumentModel {
    Single(TrainedRegressor),
    Stack(StackModel),
}

/// A persisted model together with everything needed to apply it to a raw
/// descriptor file: the schema, the target definition and the run identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub config_sha256: String,
    pub seed: u64,
    pub target: TargetSpec,
    pub schema: FeatureSchema,
    pub model: DocumentModel,
}

/// One prediction in model space and in reported units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub model_space: f64,
    pub reported: f64,
}

impl ModelDocument {
    pub fn new(config_sha256: &str, seed: u64, target: TargetSpec, schema: FeatureSchema, model: DocumentModel) -> Self {
        Self {
            format_version: MODEL_DOCUMENT_VERSION,
            config_sha256: config_sha256.to_string(),
            seed,
            target,
            schema,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let err = |e: String| PipelineError::new("model", e);
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
        let version = probe.get("format_version").and_then(|v| v.as_u64());
        if version != Some(MODEL_DOCUMENT_VERSION as u64) {
            return Err(err(format!(
                "unsupported model document version {version:?}, expected {MODEL_DOCUMENT_VERSION}"
            )));
        }
        serde_json::from_value(probe).map_err(|e| err(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::new("model", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| PipelineError::new("model", format!("{}: {e}", path.display())))
    }

    /// Model-space predictions for an encoded matrix.
    pub fn predict_matrix(&self, x: &DesignMatrix) -> Result<Vec<f64>, PipelineError> {
        match &self.model {
            DocumentModel::Single(m) => m.predict(x).map_err(|e| PipelineError::new("predict", e)),
            DocumentModel::Stack(m) => m.predict(x).map_err(|e| PipelineError::new("predict", e)),
        }
    }

    /// Encodes `dataset` with the stored target mask and predicts every row.
    pub fn predict(&self, dataset: &Dataset) -> Result<Vec<Prediction>, PipelineError> {
        let x = encode_features(dataset, &self.target.feature_mask).map_err(|e| PipelineError::new("encode", e))?;
        Ok(self
            .predict_matrix(&x)?
            .into_iter()
            .map(|v| Prediction {
                model_space: v,
                reported: self.target.to_reported(v),
            })
            .collect())
    }
}
