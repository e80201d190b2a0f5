use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, DatasetError, FeatureKind, FeatureSchema, FeatureValue, Sample, TargetKind, Targets};

const ID_COLUMN: &str = "id";
const TARGETS: [TargetKind; 3] = [TargetKind::Wavelength, TargetKind::Kr, TargetKind::Plqy];

/// Reads a comma-separated descriptor table.
///
/// The header must contain `id` and every required schema feature; target
/// columns (`wavelength_nm`, `kr_per_s`, `plqy`) are optional. Empty cells are
/// missing values. Unknown extra columns are ignored.
pub fn load_dataset(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| DatasetError::Io(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let id_col = find(ID_COLUMN).ok_or_else(|| DatasetError::MissingColumn(ID_COLUMN.into()))?;
    let mut feature_cols = Vec::with_capacity(schema.features().len());
    for def in schema.features() {
        match find(&def.name) {
            Some(c) => feature_cols.push(Some(c)),
            None if def.required => return Err(DatasetError::MissingColumn(def.name.clone())),
            None => feature_cols.push(None),
        }
    }
    let target_cols: Vec<Option<usize>> = TARGETS.iter().map(|t| find(t.column())).collect();

    let mut samples = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| DatasetError::Io(e.to_string()))?;
        let id = record.get(id_col).unwrap_or("").to_string();
        let row_name = if id.is_empty() { format!("line {}", line + 2) } else { id.clone() };
        if id.is_empty() {
            return Err(DatasetError::MissingValue {
                row: row_name,
                feature: ID_COLUMN.into(),
            });
        }

        let mut values = Vec::with_capacity(feature_cols.len());
        for (def, col) in schema.features().iter().zip(&feature_cols) {
            let cell = col.and_then(|c| record.get(c)).unwrap_or("");
            if cell.is_empty() {
                values.push(None);
                continue;
            }
            let value = match &def.kind {
                FeatureKind::Numeric => FeatureValue::Numeric(parse_number(cell, &row_name, &def.name)?),
                FeatureKind::Categorical { .. } => FeatureValue::Level(cell.to_string()),
            };
            values.push(Some(value));
        }

        let mut targets = Targets::default();
        for (kind, col) in TARGETS.iter().zip(&target_cols) {
            let cell = col.and_then(|c| record.get(c)).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let v = parse_number(cell, &row_name, kind.column())?;
            match kind {
                TargetKind::Wavelength => targets.wavelength_nm = Some(v),
                TargetKind::Kr => targets.kr_per_s = Some(v),
                TargetKind::Plqy => targets.plqy = Some(v),
            }
        }

        samples.push(Sample { id, values, targets });
    }
    Dataset::new(schema.clone(), samples)
}

fn parse_number(cell: &str, row: &str, column: &str) -> Result<f64, DatasetError> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DatasetError::BadNumber {
            row: row.to_string(),
            column: column.to_string(),
            value: cell.to_string(),
        })
}

/// Writes a dataset in the same layout [`read_dataset`] accepts.
pub fn write_dataset<W: Write>(writer: W, dataset: &Dataset) -> Result<(), DatasetError> {
    let io = |e: csv::Error| DatasetError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![ID_COLUMN.to_string()];
    header.extend(dataset.schema().features().iter().map(|f| f.name.clone()));
    header.extend(TARGETS.iter().map(|t| t.column().to_string()));
    w.write_record(&header).map_err(io)?;
    for s in dataset.samples() {
        let mut rec = vec![s.id.clone()];
        for v in &s.values {
            rec.push(match v {
                None => String::new(),
                Some(FeatureValue::Numeric(x)) => format!("{x:?}"),
                Some(FeatureValue::Level(l)) => l.clone(),
            });
        }
        for t in TARGETS {
            rec.push(s.targets.get(t).map(|v| format!("{v:?}")).unwrap_or_default());
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| DatasetError::Io(e.to_string()))
}
