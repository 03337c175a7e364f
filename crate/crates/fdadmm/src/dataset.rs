//! Classification data as CSV: a header row, one example per row, all
//! columns numeric and the ±1 label last.

use std::path::Path;

use fdadmm_core::linalg::Matrix;
use fdadmm_core::objectives::LogisticData;

use crate::error::{CliError, Result};

pub fn read_dataset(path: &Path) -> Result<LogisticData> {
    let file = std::fs::File::open(path).map_err(CliError::io(path))?;
    parse_dataset(file, path)
}

pub fn parse_dataset(input: impl std::io::Read, path: &Path) -> Result<LogisticData> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let width = reader.headers().map_err(|e| csv_error(path, e))?.len();
    if width < 2 {
        return Err(CliError::format(path, 1, "need at least one feature column and a label column"));
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut values = Vec::with_capacity(width);
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| CliError::format(path, line, format!("`{field}` is not a finite number")))?;
            values.push(v);
        }
        let label = values.pop().expect("width checked");
        if label != 1.0 && label != -1.0 {
            return Err(CliError::format(path, line, format!("label must be 1 or -1, got {label}")));
        }
        labels.push(label);
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(CliError::format(path, 1, "no examples"));
    }
    Ok(LogisticData::from_examples(Matrix::from_rows(&rows), labels))
}

pub fn write_dataset(path: &Path, data: &LogisticData) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let p = data.features.cols();
    let header: Vec<String> = (0..p).map(|j| format!("x{j}")).chain(["label".to_string()]).collect();
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (r, label) in data.labels.iter().enumerate() {
        let row: Vec<String> = data.features.row(r).iter().chain([label]).map(|v| format!("{v:e}")).collect();
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        kind => CliError::format(path, line, format!("{kind:?}")),
    }
}
