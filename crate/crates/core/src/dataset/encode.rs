use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, FeatureKind, FeatureValue, TargetSpec};
use crate::matrix::Matrix;

/// Numeric design matrix with named columns.
///
/// Categorical features expand to one column per level, named
/// `feature=level`; `provenance[j]` is the schema feature column `j` came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub columns: Vec<String>,
    pub provenance: Vec<String>,
    pub data: Matrix,
}

impl DesignMatrix {
    pub fn new(columns: Vec<String>, provenance: Vec<String>, data: Matrix) -> Self {
        assert_eq!(columns.len(), data.ncols());
        assert_eq!(provenance.len(), data.ncols());
        Self {
            columns,
            provenance,
            data,
        }
    }

    /// Columns named `x0..x{d-1}`, each its own source.
    pub fn from_matrix(data: Matrix) -> Self {
        let columns: Vec<String> = (0..data.ncols()).map(|j| format!("x{j}")).collect();
        Self {
            provenance: columns.clone(),
            columns,
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        DesignMatrix {
            columns: self.columns.clone(),
            provenance: self.provenance.clone(),
            data: self.data.select_rows(idx),
        }
    }

    /// Encoded column -> source feature.
    pub fn column_provenance(&self) -> BTreeMap<&str, &str> {
        self.columns
            .iter()
            .map(String::as_str)
            .zip(self.provenance.iter().map(String::as_str))
            .collect()
    }
}

fn check_mask(dataset: &Dataset, mask: &BTreeSet<String>) -> Result<(), DatasetError> {
    for name in mask {
        if dataset.schema().feature(name).is_none() {
            return Err(DatasetError::UnknownFeature(name.clone()));
        }
    }
    Ok(())
}

/// Encodes features only, omitting masked features.
pub fn encode_features(dataset: &Dataset, mask: &BTreeSet<String>) -> Result<DesignMatrix, DatasetError> {
    check_mask(dataset, mask)?;
    let schema = dataset.schema();
    let mut columns = Vec::new();
    let mut provenance = Vec::new();
    let mut kept = Vec::new();
    for (fi, def) in schema.features().iter().enumerate() {
        if mask.contains(&def.name) {
            continue;
        }
        kept.push(fi);
        match &def.kind {
            FeatureKind::Numeric => {
                columns.push(def.name.clone());
                provenance.push(def.name.clone());
            }
            FeatureKind::Categorical { levels } => {
                for l in levels {
                    columns.push(format!("{}={l}", def.name));
                    provenance.push(def.name.clone());
                }
            }
        }
    }

    let mut data = Matrix::zeros(dataset.len(), columns.len());
    for (i, sample) in dataset.samples().iter().enumerate() {
        let row = data.row_mut(i);
        let mut j = 0;
        for &fi in &kept {
            let def = &schema.features()[fi];
            let value = sample.values[fi].as_ref().ok_or_else(|| DatasetError::MissingValue {
                row: sample.id.clone(),
                feature: def.name.clone(),
            })?;
            match (&def.kind, value) {
                (FeatureKind::Numeric, FeatureValue::Numeric(v)) => {
                    row[j] = *v;
                    j += 1;
                }
                (FeatureKind::Categorical { levels }, FeatureValue::Level(l)) => {
                    let pos = levels.iter().position(|x| x == l).ok_or_else(|| DatasetError::BadLevel {
                        row: sample.id.clone(),
                        feature: def.name.clone(),
                        value: l.clone(),
                    })?;
                    row[j + pos] = 1.0;
                    j += levels.len();
                }
                _ => {
                    return Err(DatasetError::Schema(format!(
                        "sample `{}`: value kind mismatch for `{}`",
                        sample.id, def.name
                    )))
                }
            }
        }
    }
    Ok(DesignMatrix {
        columns,
        provenance,
        data,
    })
}

/// Encodes features and the transformed target.
pub fn encode(dataset: &Dataset, target: &TargetSpec) -> Result<(DesignMatrix, Vec<f64>), DatasetError> {
    target.validate()?;
    let y = dataset
        .samples()
        .iter()
        .map(|s| {
            s.targets
                .get(target.kind)
                .map(|v| target.forward(v))
                .ok_or_else(|| DatasetError::MissingTarget(s.id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let x = encode_features(dataset, &target.feature_mask)?;
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{read_dataset, FeatureSchema, CALC_KR, CALC_WAVELENGTH};
    use crate::synthetic;

    #[test]
    fn one_hot_follows_level_order() {
        let ds = synthetic::emitter_dataset(3, 7);
        let (x, _) = encode(&ds, &TargetSpec::wavelength()).unwrap();
        let s = &ds.samples()[0];
        let pos = ds.schema().position("coor_bond_type1").unwrap();
        let level = match &s.values[pos] {
            Some(FeatureValue::Level(l)) => l.clone(),
            _ => unreachable!(),
        };
        let start = x.columns.iter().position(|c| c == "coor_bond_type1=Pt-C").unwrap();
        let group: Vec<f64> = (0..4).map(|k| x.data.get(0, start + k)).collect();
        let expected_pos = ["Pt-C", "Pt-N", "Pt-O", "Pt-Cl"].iter().position(|l| *l == level).unwrap();
        for (k, v) in group.iter().enumerate() {
            assert_eq!(*v, if k == expected_pos { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn pt_n_encodes_as_second_level() {
        let schema = FeatureSchema::new(
            vec![crate::dataset::FeatureDef::categorical(
                "coor_bond_type1",
                &["Pt-C", "Pt-N", "Pt-O", "Pt-Cl"],
            )],
            vec![],
        )
        .unwrap();
        let ds = read_dataset("id,coor_bond_type1,kr_per_s\na,Pt-N,1.0e5\n".as_bytes(), &schema).unwrap();
        let (x, y) = encode(&ds, &TargetSpec::kr()).unwrap();
        assert_eq!(x.data.row(0), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(y, vec![5.0]);
    }

    #[test]
    fn plqy_masks_calculated_properties() {
        let ds = synthetic::emitter_dataset(5, 1);
        let (x, _) = encode(&ds, &TargetSpec::plqy()).unwrap();
        assert!(!x.columns.iter().any(|c| c == CALC_WAVELENGTH || c == CALC_KR));
        assert!(!x.provenance.iter().any(|c| c == CALC_WAVELENGTH || c == CALC_KR));
        assert_eq!(x.ncols(), ds.schema().encoded_width() - 2);
        let (full, _) = encode(&ds, &TargetSpec::wavelength()).unwrap();
        assert_eq!(full.ncols(), ds.schema().encoded_width());
    }

    #[test]
    fn missing_target_and_unknown_mask() {
        let mut ds = synthetic::emitter_dataset(4, 3);
        let mut samples = ds.samples().to_vec();
        samples[2].targets.plqy = None;
        ds = Dataset::new(ds.schema().clone(), samples).unwrap();
        let id = ds.samples()[2].id.clone();
        assert_eq!(encode(&ds, &TargetSpec::plqy()).unwrap_err(), DatasetError::MissingTarget(id));

        let mut spec = TargetSpec::wavelength();
        spec.feature_mask.insert("nope".into());
        assert_eq!(encode(&ds, &spec).unwrap_err(), DatasetError::UnknownFeature("nope".into()));
    }

    #[test]
    fn encoding_is_deterministic_and_groups_sum_to_one() {
        let ds = synthetic::emitter_dataset(40, 11);
        let (a, ya) = encode(&ds, &TargetSpec::kr()).unwrap();
        let (b, yb) = encode(&ds, &TargetSpec::kr()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ya.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), yb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        for n in 1..=4 {
            let src = format!("coor_bond_type{n}");
            let cols: Vec<usize> = (0..a.ncols()).filter(|&j| a.provenance[j] == src).collect();
            assert_eq!(cols.len(), 4);
            for i in 0..a.nrows() {
                assert_eq!(cols.iter().map(|&j| a.data.get(i, j)).sum::<f64>(), 1.0);
            }
        }
    }
}
