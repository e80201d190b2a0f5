use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::dataset::{FeatureSchema, TargetKind, TargetSpec, TargetTransform, DEFAULT_EXCITED_STATES};
use crate::learners::{registry, Params};
use crate::metrics::R2Definition;
use crate::stacking::{MetaFeatures, OofMode, StackArchitecture};
use crate::tuning::SearchSpace;

/// Which property to model; transform and mask default to the target's preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    pub kind: TargetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TargetTransform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_mask: Option<BTreeSet<String>>,
}

impl TargetConfig {
    pub fn to_spec(&self) -> Result<TargetSpec, PipelineError> {
        let preset = TargetSpec::preset(self.kind);
        TargetSpec::new(
            self.kind,
            self.transform.unwrap_or(preset.transform),
            self.feature_mask.clone().unwrap_or(preset.feature_mask),
        )
        .map_err(|e| PipelineError::new("config", e))
    }
}

fn default_fraction() -> f64 {
    0.8
}

fn default_true() -> bool {
    true
}

fn default_k() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_true")]
    pub spxy_on_standardized: bool,
    #[serde(default = "default_k")]
    pub k: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: default_fraction(),
            spxy_on_standardized: true,
            k: default_k(),
        }
    }
}

/// A learner in the comparison roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub learner: String,
    /// Fixed parameters; tuned values override them.
    #[serde(default, skip_serializing_if = "Params::is_empty")]
    pub params: Params,
    /// Search space; the learner's default space when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSpace>,
    #[serde(default = "default_true")]
    pub tune: bool,
}

impl RosterEntry {
    pub fn new(learner: &str) -> Self {
        Self {
            learner: learner.to_string(),
            params: Params::new(),
            search: None,
            tune: true,
        }
    }

    pub fn space(&self) -> SearchSpace {
        self.search.clone().unwrap_or_else(|| {
            registry()
                .get(&self.learner)
                .map(|l| l.default_space())
                .unwrap_or_default()
        })
    }
}

fn default_budget() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Trials per roster learner.
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Trials per meta-learner candidate.
    #[serde(default = "default_budget")]
    pub meta_budget: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: default_budget(),
            meta_budget: default_budget(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    /// Preset architecture; the target's preset when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<TargetKind>,
    /// Full architecture, overriding `preset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<StackArchitecture>,
    /// Overrides the architecture's out-of-fold setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oof: Option<OofMode>,
    /// Meta-learners compared on the same base layer; target default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_candidates: Option<Vec<String>>,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            preset: None,
            custom: None,
            oof: None,
            meta_candidates: None,
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_states() -> Vec<String> {
    DEFAULT_EXCITED_STATES.iter().map(|s| s.to_string()).collect()
}

/// Everything one pipeline run needs; serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    /// Seeds splitting, fold assignment, search and every learner.
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output: PathBuf,
    pub target: TargetConfig,
    #[serde(default = "default_states")]
    pub excited_states: Vec<String>,
    #[serde(default)]
    pub r2: R2Definition,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub search: SearchConfig,
    /// Compared learners; the target's default roster when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub roster: Vec<RosterEntry>,
    #[serde(default)]
    pub stack: StackConfig,
    /// Learner whose importances are reported; target default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance_learner: Option<String>,
}

/// Learners compared for each target, in table order.
pub fn default_roster(kind: TargetKind) -> Vec<&'static str> {
    let mut r = vec!["knn_uniform", "knn_distance", "svr", "krr", "rf", "gbm_leafwise", "adaboost"];
    if kind != TargetKind::Wavelength {
        r.push("gbm_levelwise");
    }
    r
}

/// Meta-learner candidates compared for each target.
pub fn default_meta_candidates(kind: TargetKind) -> Vec<&'static str> {
    match kind {
        TargetKind::Plqy => vec!["krr", "svr", "rf", "knn_distance"],
        _ => vec!["krr", "svr", "gbm_leafwise", "knn_distance"],
    }
}

pub fn default_importance_learner(kind: TargetKind) -> &'static str {
    match kind {
        TargetKind::Wavelength => "gbm_leafwise",
        _ => "rf",
    }
}

impl PipelineConfig {
    /// A config with every optional section at its default.
    pub fn new(dataset: impl Into<PathBuf>, kind: TargetKind, seed: u64) -> Self {
        Self {
            dataset: dataset.into(),
            seed,
            output: default_out(),
            target: TargetConfig {
                kind,
                transform: None,
                feature_mask: None,
            },
            excited_states: default_states(),
            r2: R2Definition::default(),
            split: SplitConfig::default(),
            search: SearchConfig::default(),
            roster: Vec::new(),
            stack: StackConfig::default(),
            importance_learner: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg = Self::from_toml_unchecked(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without validating, so overrides can be applied first.
    pub fn from_toml_unchecked(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::new("config", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::new("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// TOML without the output directory, which never affects results.
    pub fn canonical_toml(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("config serializes");
        table.remove("output");
        toml::to_string(&table).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_toml().as_bytes()))
    }

    /// Resolves relative dataset and output paths against `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        if self.dataset.is_relative() {
            self.dataset = dir.join(&self.dataset);
        }
        if self.output.is_relative() {
            self.output = dir.join(&self.output);
        }
    }

    pub fn target_spec(&self) -> Result<TargetSpec, PipelineError> {
        self.target.to_spec()
    }

    pub fn schema(&self) -> Result<FeatureSchema, PipelineError> {
        let states: Vec<&str> = self.excited_states.iter().map(String::as_str).collect();
        let default = FeatureSchema::pt_emitters(&states);
        FeatureSchema::new(default.features().to_vec(), self.excited_states.clone()).map_err(|e| PipelineError::new("config", e))
    }

    pub fn roster(&self) -> Vec<RosterEntry> {
        if self.roster.is_empty() {
            default_roster(self.target.kind).into_iter().map(RosterEntry::new).collect()
        } else {
            self.roster.clone()
        }
    }

    pub fn meta_candidates(&self) -> Vec<String> {
        match &self.stack.meta_candidates {
            Some(c) => c.clone(),
            None => default_meta_candidates(self.target.kind).into_iter().map(String::from).collect(),
        }
    }

    pub fn importance_learner(&self) -> String {
        self.importance_learner
            .clone()
            .unwrap_or_else(|| default_importance_learner(self.target.kind).to_string())
    }

    /// Stack architecture with the configured overrides; base and meta
    /// parameters are filled in by the run.
    pub fn architecture(&self) -> StackArchitecture {
        let mut arch = match &self.stack.custom {
            Some(a) => a.clone(),
            None => StackArchitecture::preset(self.stack.preset.unwrap_or(self.target.kind)),
        };
        match self.stack.oof {
            Some(mode) => arch.oof = mode,
            None => {
                if let OofMode::OutOfFold { .. } = arch.oof {
                    arch.oof = OofMode::OutOfFold { k: self.split.k };
                }
            }
        }
        arch
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::new("config", m));
        self.target_spec()?;
        self.schema()?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return bad(format!("split.train_fraction {} must lie in (0, 1)", self.split.train_fraction));
        }
        if self.split.k < 2 {
            return bad(format!("split.k = {} must be at least 2", self.split.k));
        }
        if self.search.budget == 0 || self.search.meta_budget == 0 {
            return bad("search budgets must be at least 1".into());
        }
        let reg = registry();
        let mut seen = HashSet::new();
        for e in self.roster() {
            reg.get(&e.learner).map_err(|err| PipelineError::new("config", err))?;
            if !seen.insert(e.learner.clone()) {
                return bad(format!("learner `{}` listed twice in the roster", e.learner));
            }
            e.space().validate().map_err(|err| PipelineError::new("config", err))?;
        }
        for m in self.meta_candidates() {
            reg.get(&m).map_err(|err| PipelineError::new("config", err))?;
        }
        reg.get(&self.importance_learner()).map_err(|err| PipelineError::new("config", err))?;
        let arch = self.architecture();
        if arch.bases.is_empty() {
            return bad("stack needs at least one base learner".into());
        }
        for s in arch.bases.iter().chain(std::iter::once(&arch.meta)) {
            reg.get(&s.learner).map_err(|err| PipelineError::new("config", err))?;
        }
        if let (MetaFeatures::BasePredictionsOnly | MetaFeatures::FeaturesPlusBasePredictions, OofMode::OutOfFold { k }) =
            (arch.meta_features, arch.oof)
        {
            if k != self.split.k {
                return bad(format!("stack folds ({k}) must equal split.k ({})", self.split.k));
            }
        }
        Ok(())
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = PipelineConfig::from_toml("dataset = \"d.csv\"\nseed = 7\n[target]\nkind = \"wavelength\"\n").unwrap();
        assert_eq!(cfg.split, SplitConfig::default());
        assert_eq!(cfg.roster().len(), 7);
        assert_eq!(cfg.roster()[5].learner, "gbm_leafwise");
        assert_eq!(cfg.architecture(), StackArchitecture::wavelength());
        assert_eq!(cfg.meta_candidates(), vec!["krr", "svr", "gbm_leafwise", "knn_distance"]);
        assert_eq!(cfg.importance_learner(), "gbm_leafwise");
    }

    #[test]
    fn seed_is_required() {
        assert!(PipelineConfig::from_toml("dataset = \"d.csv\"\n[target]\nkind = \"kr\"\n").is_err());
    }

    #[test]
    fn round_trips_losslessly() {
        let mut cfg = PipelineConfig::new("data/x.csv", TargetKind::Kr, 3);
        cfg.roster = vec![RosterEntry::new("rf"), {
            let mut e = RosterEntry::new("svr");
            e.params.insert("c".into(), 2.5.into());
            e.search = Some(SearchSpace::new().with("epsilon", crate::tuning::Distribution::Uniform { lo: 0.01, hi: 0.2 }));
            e
        }];
        cfg.stack.oof = Some(OofMode::InSample);
        cfg.split.k = 5;
        let text = cfg.to_toml();
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn validation_names_the_problem() {
        let mut cfg = PipelineConfig::new("d.csv", TargetKind::Plqy, 1);
        cfg.roster = vec![RosterEntry::new("rf"), RosterEntry::new("rf")];
        assert!(cfg.validate().unwrap_err().to_string().contains("twice"));
        cfg.roster = vec![RosterEntry::new("mystery")];
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::new("d.csv", TargetKind::Plqy, 1);
        cfg.target.feature_mask = Some(BTreeSet::new());
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::new("d.csv", TargetKind::Wavelength, 1);
        cfg.split.train_fraction = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn plqy_defaults() {
        let cfg = PipelineConfig::new("d.csv", TargetKind::Plqy, 1);
        assert_eq!(cfg.roster().len(), 8);
        assert_eq!(cfg.meta_candidates()[2], "rf");
        assert_eq!(cfg.architecture(), StackArchitecture::plqy());
    }
}
