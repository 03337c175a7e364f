//! Metrics CSV and round-log export.
//!
//! The metrics file has the header
//! `k,objective,primal_res,dual_res,consensus_rounds,bound_lhs,bound_rhs`,
//! one row per ADMM step. Integer columns are plain integers, the others use
//! C's `%.12e`; bound columns are empty when no reference optimum was
//! available.

use std::io::Write;
use std::path::Path;

use fdadmm_core::admm::RunRecord;
use fdadmm_core::netsim::RoundLog;

use crate::dataset::csv_error;
use crate::error::{CliError, Result};

pub const COLUMNS: [&str; 7] = ["k", "objective", "primal_res", "dual_res", "consensus_rounds", "bound_lhs", "bound_rhs"];

/// `printf("%.12e", v)`.
pub fn fmt_e12(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("LowerExp always has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
}

/// One parsed metrics row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub k: usize,
    pub objective: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub consensus_rounds: usize,
    pub bound_lhs: Option<f64>,
    pub bound_rhs: Option<f64>,
}

pub fn rows_of(record: &RunRecord) -> Vec<Row> {
    record
        .steps
        .iter()
        .map(|s| Row {
            k: s.k,
            objective: s.objective,
            primal_res: s.primal_res,
            dual_res: s.dual_res,
            consensus_rounds: s.consensus_rounds,
            bound_lhs: s.bound_lhs,
            bound_rhs: s.bound_rhs,
        })
        .collect()
}

pub fn format_csv(rows: &[Row]) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    let opt = |v: Option<f64>| v.map(fmt_e12).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.k,
            fmt_e12(r.objective),
            fmt_e12(r.primal_res),
            fmt_e12(r.dual_res),
            r.consensus_rounds,
            opt(r.bound_lhs),
            opt(r.bound_rhs)
        ));
    }
    out
}

pub fn write_csv(path: &Path, record: &RunRecord) -> Result<()> {
    std::fs::write(path, format_csv(&rows_of(record))).map_err(CliError::io(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>> {
    let file = std::fs::File::open(path).map_err(CliError::io(path))?;
    parse_csv(file, path)
}

pub fn parse_csv(input: impl std::io::Read, path: &Path) -> Result<Vec<Row>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(CliError::SchemaMismatch(format!("{}: header `{}`, expected `{}`", path.display(), header.join(","), COLUMNS.join(","))));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |col: &str, v: &str| CliError::format(path, line, format!("column {col}: cannot parse `{v}`"));
        let int = |i: usize| record[i].parse::<usize>().map_err(|_| bad(COLUMNS[i], &record[i]));
        let float = |i: usize| record[i].parse::<f64>().map_err(|_| bad(COLUMNS[i], &record[i]));
        let opt = |i: usize| if record[i].is_empty() { Ok(None) } else { float(i).map(Some) };
        rows.push(Row {
            k: int(0)?,
            objective: float(1)?,
            primal_res: float(2)?,
            dual_res: float(3)?,
            consensus_rounds: int(4)?,
            bound_lhs: opt(5)?,
            bound_rhs: opt(6)?,
        });
    }
    Ok(rows)
}

/// One JSON object per round.
pub fn write_round_log(path: &Path, log: &RoundLog) -> Result<()> {
    let file = std::fs::File::create(path).map_err(CliError::io(path))?;
    let mut w = std::io::BufWriter::new(file);
    for r in log.records() {
        serde_json::to_writer(&mut w, r).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e.into() })?;
        w.write_all(b"\n").map_err(CliError::io(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_style_exponent() {
        assert_eq!(fmt_e12(1.0), "1.000000000000e+00");
        assert_eq!(fmt_e12(-0.00123), "-1.230000000000e-03");
        assert_eq!(fmt_e12(6.02e123), "6.020000000000e+123");
        assert_eq!(fmt_e12(0.0), "0.000000000000e+00");
        assert_eq!(fmt_e12(f64::NAN), "nan");
    }

    #[test]
    fn rows_read_back() {
        let rows = vec![
            Row { k: 1, objective: 2.5, primal_res: 0.1, dual_res: 0.2, consensus_rounds: 23, bound_lhs: Some(1.0), bound_rhs: Some(3.0) },
            Row { k: 2, objective: 2.25, primal_res: 0.01, dual_res: 0.02, consensus_rounds: 6, bound_lhs: None, bound_rhs: None },
        ];
        let text = format_csv(&rows);
        assert!(text.starts_with("k,objective,primal_res,dual_res,consensus_rounds,bound_lhs,bound_rhs\n1,2.500000000000e+00,"));
        assert_eq!(parse_csv(text.as_bytes(), Path::new("r.csv")).unwrap(), rows);
    }

    #[test]
    fn foreign_header_is_a_schema_mismatch() {
        let e = parse_csv("k,objective\n1,2\n".as_bytes(), Path::new("r.csv")).unwrap_err();
        assert!(matches!(e, CliError::SchemaMismatch(_)));
    }
}
