use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Coordination types of the four Pt-ligand bonds, in encoding order.
pub const COORDINATION_LEVELS: [&str; 4] = ["Pt-C", "Pt-N", "Pt-O", "Pt-Cl"];

pub const DEFAULT_EXCITED_STATES: [&str; 4] = ["S1", "T1", "T2", "T3"];

/// Calculated emission wavelength feature.
pub const CALC_WAVELENGTH: &str = "Calc_lambda";
/// Calculated radiative rate feature.
pub const CALC_KR: &str = "Calc_kr";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
    pub unit: String,
    pub required: bool,
}

impl FeatureDef {
    pub fn numeric(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
            unit: unit.into(),
            required: true,
        }
    }

    pub fn categorical(name: impl Into<String>, levels: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
            unit: String::new(),
            required: true,
        }
    }

    /// Number of encoded columns this feature produces.
    pub fn width(&self) -> usize {
        match &self.kind {
            FeatureKind::Numeric => 1,
            FeatureKind::Categorical { levels } => levels.len(),
        }
    }
}

/// Ordered descriptor table layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<FeatureDef>,
    excited_state_labels: Vec<String>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDef>, excited_state_labels: Vec<String>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(DatasetError::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            if let FeatureKind::Categorical { levels } = &f.kind {
                if levels.is_empty() {
                    return Err(DatasetError::Schema(format!("feature `{}` has no levels", f.name)));
                }
                let mut lv = HashSet::new();
                for l in levels {
                    if !lv.insert(l.as_str()) {
                        return Err(DatasetError::Schema(format!(
                            "duplicate level `{l}` in feature `{}`",
                            f.name
                        )));
                    }
                }
            }
            if matches!(f.name.as_str(), "id" | "wavelength_nm" | "kr_per_s" | "plqy") {
                return Err(DatasetError::Schema(format!("`{}` is a reserved column name", f.name)));
            }
        }
        Ok(Self {
            features,
            excited_state_labels,
        })
    }

    /// Descriptor table of Pt(II) emitters with the given excited states.
    pub fn pt_emitters(states: &[&str]) -> Self {
        let mut f = vec![FeatureDef::numeric("nu", "cm^-1")];
        for n in 1..=4 {
            f.push(FeatureDef::numeric(format!("coor_bond_length{n}"), "angstrom"));
        }
        for n in 1..=4 {
            f.push(FeatureDef::categorical(format!("coor_bond_type{n}"), &COORDINATION_LEVELS));
        }
        f.push(FeatureDef::numeric("rho_Pt", "e/bohr^3"));
        for n in 1..=4 {
            f.push(FeatureDef::numeric(format!("rho_coor{n}"), "e/bohr^3"));
        }
        f.push(FeatureDef::numeric("H_T1_S0", "cm^-1"));
        f.push(FeatureDef::numeric("H_T1_S1", "cm^-1"));
        for s in states {
            f.push(FeatureDef::numeric(format!("R_EH_{s}_a"), "angstrom"));
            f.push(FeatureDef::numeric(format!("R_EH_{s}_b"), "angstrom"));
        }
        for s in states {
            f.push(FeatureDef::numeric(format!("LAMBDA_{s}"), ""));
        }
        for s in states {
            f.push(FeatureDef::numeric(format!("CT_{s}"), ""));
        }
        f.push(FeatureDef::numeric("HOMO", "eV"));
        f.push(FeatureDef::numeric("LUMO", "eV"));
        f.push(FeatureDef::numeric("mu", "debye"));
        f.push(FeatureDef::numeric("f", ""));
        f.push(FeatureDef::numeric(CALC_WAVELENGTH, "nm"));
        f.push(FeatureDef::numeric(CALC_KR, "s^-1"));
        f.push(FeatureDef::numeric("refractive_index", ""));
        Self::new(f, states.iter().map(|s| s.to_string()).collect()).expect("built-in schema is valid")
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn excited_state_labels(&self) -> &[String] {
        &self.excited_state_labels
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureDef> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Encoded width with no features masked.
    pub fn encoded_width(&self) -> usize {
        self.features.iter().map(FeatureDef::width).sum()
    }
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self::pt_emitters(&DEFAULT_EXCITED_STATES)
    }
}
