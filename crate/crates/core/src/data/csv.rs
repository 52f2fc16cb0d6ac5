use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Task};
use crate::io::write_atomic;
use crate::{Error, Result};

/// How the label column is turned into a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelEncoding {
    /// Real-valued regression target.
    Real,
    /// Labels already are class indices `0..k`. `k` defaults to `max + 1`.
    ClassIndex { classes: Option<usize> },
    /// Distinct label values are sorted and mapped onto `0..k`.
    ClassRemap,
}

/// Column layout of a CSV table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CsvSchema {
    pub label_column: usize,
    /// `None` selects every column except the label.
    #[serde(default)]
    pub feature_columns: Option<Vec<usize>>,
    #[serde(default)]
    pub has_header: bool,
    pub labels: LabelEncoding,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl CsvSchema {
    pub fn regression(label_column: usize) -> Self {
        Self {
            label_column,
            feature_columns: None,
            has_header: false,
            labels: LabelEncoding::Real,
            delimiter: ',',
        }
    }

    pub fn classification(label_column: usize, classes: Option<usize>) -> Self {
        Self {
            labels: LabelEncoding::ClassIndex { classes },
            ..Self::regression(label_column)
        }
    }

    pub fn with_header(mut self, has_header: bool) -> Self {
        self.has_header = has_header;
        self
    }

    pub fn with_features(mut self, columns: Vec<usize>) -> Self {
        self.feature_columns = Some(columns);
        self
    }

    fn delimiter_byte(&self) -> Result<u8> {
        u8::try_from(self.delimiter)
            .ok()
            .filter(|b| b.is_ascii())
            .ok_or_else(|| Error::invalid(format!("delimiter {:?} is not ASCII", self.delimiter)))
    }

    fn feature_columns_for(&self, width: usize) -> Vec<usize> {
        match &self.feature_columns {
            Some(cols) => cols.clone(),
            None => (0..width).filter(|&c| c != self.label_column).collect(),
        }
    }
}

/// A raw record and its 1-based line number.
pub type Record = (usize, Vec<String>);

/// Reads every record of a CSV file as strings. Returns the header (if the
/// schema has one) and the data records with their 1-based line numbers.
pub fn read_csv_records(path: &Path, has_header: bool, delimiter: char) -> Result<(Option<Vec<String>>, Vec<Record>)> {
    let delimiter = CsvSchema {
        delimiter,
        ..CsvSchema::regression(0)
    }
    .delimiter_byte()?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(has_header)
        .delimiter(delimiter)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(file);
    let header = if has_header {
        let h = reader.headers().map_err(|e| csv_error(path, e))?;
        Some(h.iter().map(str::to_owned).collect())
    } else {
        None
    };
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        records.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok((header, records))
}

fn csv_error(path: &Path, e: ::csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        ::csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::MalformedRow {
            path: path.to_owned(),
            row,
            message: format!("{kind:?}"),
        },
    }
}

/// Loads a labeled table. Unparseable cells fail with the offending line.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let (_, records) = read_csv_records(path, schema.has_header, schema.delimiter)?;
    let width = records.first().map(|(_, r)| r.len()).unwrap_or(0);
    if records.is_empty() {
        return Err(Error::Format {
            path: path.to_owned(),
            message: "no data rows".into(),
        });
    }
    if schema.label_column >= width {
        return Err(Error::Format {
            path: path.to_owned(),
            message: format!(
                "label column {} absent (rows have {width} columns)",
                schema.label_column
            ),
        });
    }
    let feature_cols = schema.feature_columns_for(width);
    if feature_cols.is_empty() {
        return Err(Error::Format {
            path: path.to_owned(),
            message: "no feature columns".into(),
        });
    }
    if let Some(&c) = feature_cols.iter().find(|&&c| c >= width) {
        return Err(Error::Format {
            path: path.to_owned(),
            message: format!("feature column {c} absent (rows have {width} columns)"),
        });
    }

    let p = feature_cols.len();
    let mut features = Vec::with_capacity(records.len() * p);
    let mut raw_labels = Vec::with_capacity(records.len());
    for (line, rec) in &records {
        let malformed = |message: String| Error::MalformedRow {
            path: path.to_owned(),
            row: *line,
            message,
        };
        if rec.len() != width {
            return Err(malformed(format!("expected {width} fields, found {}", rec.len())));
        }
        for &c in &feature_cols {
            let v: f64 = rec[c]
                .parse()
                .map_err(|_| malformed(format!("column {c}: cannot parse {:?}", rec[c])))?;
            if !v.is_finite() {
                return Err(malformed(format!("column {c}: non-finite value {:?}", rec[c])));
            }
            features.push(v);
        }
        let cell = &rec[schema.label_column];
        let y: f64 = cell
            .parse()
            .map_err(|_| malformed(format!("label column {}: cannot parse {cell:?}", schema.label_column)))?;
        if !y.is_finite() {
            return Err(malformed(format!("non-finite label {cell:?}")));
        }
        raw_labels.push((*line, y));
    }

    let (task, labels) = encode_labels(path, schema.labels, &raw_labels)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, task, p, features, labels)
}

fn encode_labels(path: &Path, encoding: LabelEncoding, raw: &[(usize, f64)]) -> Result<(Task, Vec<f64>)> {
    match encoding {
        LabelEncoding::Real => Ok((Task::Regression, raw.iter().map(|&(_, y)| y).collect())),
        LabelEncoding::ClassIndex { classes } => {
            for &(line, y) in raw {
                if y < 0.0 || y.fract() != 0.0 || classes.is_some_and(|k| y >= k as f64) {
                    return Err(Error::MalformedRow {
                        path: path.to_owned(),
                        row: line,
                        message: format!("label {y} is not a valid class index"),
                    });
                }
            }
            let k = classes.unwrap_or_else(|| raw.iter().map(|&(_, y)| y as usize).max().unwrap_or(0) + 1);
            Ok((Task::Classification(k), raw.iter().map(|&(_, y)| y).collect()))
        }
        LabelEncoding::ClassRemap => {
            let distinct: BTreeSet<u64> = raw.iter().map(|&(_, y)| y.to_bits()).collect();
            let mut values: Vec<f64> = distinct.into_iter().map(f64::from_bits).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            let labels = raw
                .iter()
                .map(|&(_, y)| values.iter().position(|&v| v == y).unwrap() as f64)
                .collect();
            Ok((Task::Classification(values.len()), labels))
        }
    }
}

/// Writes selected raw records (by index into `records`) with the original
/// header, so the output keeps the input's column layout.
pub fn write_csv_records(
    path: &Path,
    header: Option<&[String]>,
    records: &[Vec<String>],
    rows: &[usize],
    delimiter: char,
) -> Result<()> {
    let delim = CsvSchema {
        delimiter,
        ..CsvSchema::regression(0)
    }
    .delimiter_byte()?;
    write_atomic(path, |w| {
        let mut out = ::csv::WriterBuilder::new()
            .delimiter(delim)
            .flexible(true)
            .from_writer(w);
        if let Some(h) = header {
            out.write_record(h)?;
        }
        for &i in rows {
            out.write_record(&records[i])?;
        }
        out.flush()
    })
}

/// Writes a dataset as `f0,…,f{p-1},label` with a header row.
pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = ::csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..data.p()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        out.write_record(&header)?;
        let mut buf = Vec::with_capacity(data.p() + 1);
        for (i, row) in data.rows().enumerate() {
            buf.clear();
            buf.extend(row.iter().map(|v| format!("{v:?}")));
            buf.push(format!("{:?}", data.label(i)));
            out.write_record(&buf)?;
        }
        out.flush()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_row_regression() {
        let f = csv_file("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let d = load_csv(f.path(), &CsvSchema::regression(2).with_header(true)).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.task(), Task::Regression);
        assert_eq!(d.row(1), &[4.0, 5.0]);
        assert_eq!(d.labels(), &[3.0, 6.0, 9.0]);
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = csv_file("a,b,y\n1,2,3\n4,x,6\n");
        let err = load_csv(f.path(), &CsvSchema::regression(2).with_header(true)).unwrap_err();
        match err {
            Error::MalformedRow { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_malformed() {
        let f = csv_file("1,2,3\n4,5\n");
        let err = load_csv(f.path(), &CsvSchema::regression(2)).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, .. }), "{err}");
    }

    #[test]
    fn missing_file_and_empty_and_absent_label() {
        let err = load_csv(Path::new("/nonexistent/x.csv"), &CsvSchema::regression(0)).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        let f = csv_file("a,b\n");
        let err = load_csv(f.path(), &CsvSchema::regression(1).with_header(true)).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        let f = csv_file("1,2\n");
        let err = load_csv(f.path(), &CsvSchema::regression(5)).unwrap_err();
        assert!(err.to_string().contains("label column 5 absent"), "{err}");
    }

    #[test]
    fn explicit_feature_columns() {
        let f = csv_file("id,x1,x2,y\n7,1,2,0\n8,3,4,1\n");
        let schema = CsvSchema::classification(3, None)
            .with_header(true)
            .with_features(vec![1, 2]);
        let d = load_csv(f.path(), &schema).unwrap();
        assert_eq!(d.task(), Task::Classification(2));
        assert_eq!(d.features(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn remap_classes() {
        let f = csv_file("0.5,3\n1.5,1\n2.5,10\n3.5,3\n");
        let schema = CsvSchema {
            labels: LabelEncoding::ClassRemap,
            ..CsvSchema::regression(1)
        };
        let d = load_csv(f.path(), &schema).unwrap();
        assert_eq!(d.task(), Task::Classification(3));
        assert_eq!(d.labels(), &[1.0, 0.0, 2.0, 1.0]);
    }

    #[test]
    fn class_index_out_of_range() {
        let f = csv_file("0.5,3\n");
        let err = load_csv(f.path(), &CsvSchema::classification(1, Some(3))).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 1, .. }));
    }

    #[test]
    fn raw_records_round_trip() {
        let f = csv_file("a,b\n1,x\n2,y\n");
        let (h, recs) = read_csv_records(f.path(), true, ',').unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o.csv");
        let recs: Vec<_> = recs.into_iter().map(|(_, r)| r).collect();
        write_csv_records(&out, h.as_deref(), &recs, &[1, 1, 0], ',').unwrap();
        assert_eq!(std::fs::read_to_string(out).unwrap(), "a,b\n2,y\n2,y\n1,x\n");
    }
}
