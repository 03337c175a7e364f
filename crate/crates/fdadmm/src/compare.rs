//! Step-by-step comparison of metrics files against the first one.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::report::{self, Row};

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub names: Vec<String>,
    pub k: Vec<usize>,
    /// `rounds[f][i]`: consensus rounds of file `f` at step `k[i]`.
    pub rounds: Vec<Vec<usize>>,
    pub objective: Vec<Vec<f64>>,
}

impl Comparison {
    /// Per-step `rounds[f] − rounds[0]`.
    pub fn round_deltas(&self, f: usize) -> Vec<i64> {
        self.rounds[f].iter().zip(&self.rounds[0]).map(|(&a, &b)| a as i64 - b as i64).collect()
    }

    /// Per-step `objective[f] − objective[0]`.
    pub fn objective_deltas(&self, f: usize) -> Vec<f64> {
        self.objective[f].iter().zip(&self.objective[0]).map(|(a, b)| a - b).collect()
    }

    /// Consensus rounds of file `f` over the steps `k ≥ from_k`.
    pub fn total_rounds(&self, f: usize, from_k: usize) -> usize {
        self.k.iter().zip(&self.rounds[f]).filter(|(&k, _)| k >= from_k).map(|(_, &r)| r).sum()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (f, name) in self.names.iter().enumerate() {
            writeln!(out, "[{f}] {name}").unwrap();
        }
        write!(out, "{:>6} {:>8} {:>19}", "k", "rounds0", "objective0").unwrap();
        for f in 1..self.names.len() {
            write!(out, " {:>8} {:>19}", format!("drounds{f}"), format!("dobjective{f}")).unwrap();
        }
        out.push('\n');
        let deltas: Vec<(Vec<i64>, Vec<f64>)> = (1..self.names.len()).map(|f| (self.round_deltas(f), self.objective_deltas(f))).collect();
        for i in 0..self.k.len() {
            write!(out, "{:>6} {:>8} {:>19}", self.k[i], self.rounds[0][i], report::fmt_e12(self.objective[0][i])).unwrap();
            for (dr, dobj) in &deltas {
                write!(out, " {:>8} {:>19}", dr[i], report::fmt_e12(dobj[i])).unwrap();
            }
            out.push('\n');
        }
        write!(out, "{:>6} {:>8} {:>19}", "total", self.total_rounds(0, 0), report::fmt_e12(self.objective[0].iter().sum())).unwrap();
        for (dr, dobj) in &deltas {
            write!(out, " {:>8} {:>19}", dr.iter().sum::<i64>(), report::fmt_e12(dobj.iter().sum())).unwrap();
        }
        out.push('\n');
        out
    }
}

pub fn compare_runs(runs: &[(String, Vec<Row>)]) -> Result<Comparison> {
    if runs.len() < 2 {
        return Err(CliError::SchemaMismatch(format!("need at least two runs, got {}", runs.len())));
    }
    let k: Vec<usize> = runs[0].1.iter().map(|r| r.k).collect();
    for (name, rows) in &runs[1..] {
        if rows.len() != k.len() {
            return Err(CliError::SchemaMismatch(format!("{name} has {} rows, {} has {}", rows.len(), runs[0].0, k.len())));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(i, r)| r.k != k[*i]) {
            return Err(CliError::SchemaMismatch(format!("{name} row {} has k = {}, expected {}", i + 1, r.k, k[i])));
        }
    }
    Ok(Comparison {
        names: runs.iter().map(|(n, _)| n.clone()).collect(),
        k,
        rounds: runs.iter().map(|(_, rows)| rows.iter().map(|r| r.consensus_rounds).collect()).collect(),
        objective: runs.iter().map(|(_, rows)| rows.iter().map(|r| r.objective).collect()).collect(),
    })
}

pub fn compare_files<P: AsRef<Path>>(paths: &[P]) -> Result<Comparison> {
    let runs = paths
        .iter()
        .map(|p| Ok((p.as_ref().display().to_string(), report::read_csv(p.as_ref())?)))
        .collect::<Result<Vec<_>>>()?;
    compare_runs(&runs)
}
