use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{ApplicantProfile, Dataset, DatasetError, DecisionLabel, Row, Schema};

const LABEL: &str = "label";
const ID: &str = "id";

pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset, DatasetError> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, schema)
}

/// Reads a CSV whose header names every schema attribute plus `label`. An
/// optional `id` column supplies case identifiers; otherwise rows are named
/// `case-<n>`. Row numbers in errors count data rows from 1.
pub fn read_dataset<R: Read>(reader: R, schema: &Schema) -> Result<Dataset, DatasetError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);

    let mut attr_columns = Vec::with_capacity(schema.len());
    for attr in schema.attributes() {
        let idx = column(&attr.name).ok_or_else(|| DatasetError::MissingColumn(attr.name.clone()))?;
        attr_columns.push((attr, idx));
    }
    let label_col = column(LABEL).ok_or_else(|| DatasetError::MissingColumn(LABEL.into()))?;
    let id_col = column(ID);

    let mut rows = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let row_no = i + 1;
        let record = record?;
        let cell = |idx: usize, name: &str| {
            record.get(idx).ok_or_else(|| DatasetError::Unparseable {
                row: row_no,
                column: name.to_string(),
                reason: "row is too short".into(),
            })
        };
        let mut values = BTreeMap::new();
        for (attr, idx) in &attr_columns {
            let raw = cell(*idx, &attr.name)?;
            let value = attr.parse_cell(raw).map_err(|reason| {
                if raw.trim().parse::<f64>().is_err() && attr.kind.is_quantitative() {
                    DatasetError::Unparseable {
                        row: row_no,
                        column: attr.name.clone(),
                        reason,
                    }
                } else {
                    DatasetError::InvalidValue {
                        row: Some(row_no),
                        attr: attr.name.clone(),
                        reason,
                    }
                }
            })?;
            values.insert(attr.name.clone(), value);
        }
        let raw_label = cell(label_col, LABEL)?;
        let label = raw_label
            .trim()
            .parse::<i64>()
            .ok()
            .and_then(DecisionLabel::from_code)
            .ok_or_else(|| DatasetError::Unparseable {
                row: row_no,
                column: LABEL.into(),
                reason: format!("expected an integer label 1-4, got {raw_label:?}"),
            })?;
        let id = match id_col {
            Some(idx) => cell(idx, ID)?.to_string(),
            None => format!("case-{row_no}"),
        };
        rows.push(Row {
            profile: ApplicantProfile { id, values },
            label,
        });
    }
    Dataset::new(schema.clone(), rows)
}

/// Writes `id`, every attribute in schema order, then `label`.
pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<(), DatasetError> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec![ID.to_string()];
    header.extend(data.schema().names().map(str::to_string));
    header.push(LABEL.into());
    out.write_record(&header)?;
    for row in data.rows() {
        let mut record = vec![row.profile.id.clone()];
        for name in data.schema().names() {
            record.push(row.profile.values[name].to_string());
        }
        record.push(row.label.code().to_string());
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Attribute;

    fn gpa_schema() -> Schema {
        Schema::new(vec![Attribute::numeric("GPA", 0.0, 4.3)]).unwrap()
    }

    #[test]
    fn reads_five_row_fixture() {
        let csv = "GPA,label\n3.0,1\n3.2,2\n3.5,3\n3.8,4\n4.0,4\n";
        let data = read_dataset(csv.as_bytes(), &gpa_schema()).unwrap();
        assert_eq!(data.len(), 5);
        let gpas: Vec<f64> = data.numeric_column("GPA").unwrap();
        assert_eq!(gpas, vec![3.0, 3.2, 3.5, 3.8, 4.0]);
        let labels: Vec<u8> = data.rows().iter().map(|r| r.label.code()).collect();
        assert_eq!(labels, vec![1, 2, 3, 4, 4]);
        assert_eq!(data.rows()[0].profile.id, "case-1");
    }

    #[test]
    fn missing_label_column() {
        let err = read_dataset("GPA\n3.0\n".as_bytes(), &gpa_schema()).unwrap_err();
        assert_eq!(err.to_string(), "missing column: label");
    }

    #[test]
    fn out_of_range_names_row_and_attribute() {
        let err = read_dataset("GPA,label\n3.0,1\n7.1,2\n".as_bytes(), &gpa_schema()).unwrap_err();
        match &err {
            DatasetError::InvalidValue { row, attr, .. } => {
                assert_eq!(*row, Some(2));
                assert_eq!(attr, "GPA");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn unparseable_cell_reports_row() {
        let err = read_dataset("GPA,label\nabc,1\n".as_bytes(), &gpa_schema()).unwrap_err();
        assert!(matches!(err, DatasetError::Unparseable { row: 1, .. }));
        let err = read_dataset("GPA,label\n3.0,9\n".as_bytes(), &gpa_schema()).unwrap_err();
        assert!(matches!(err, DatasetError::Unparseable { row: 1, ref column, .. } if column == "label"));
    }

    #[test]
    fn write_then_read_is_identity() {
        let schema = Schema::admissions();
        let data = crate::dataset::generate_synthetic(&schema, &crate::dataset::SyntheticConfig::new(25, 3)).unwrap();
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), &schema).unwrap();
        assert_eq!(back, data);
    }
}
