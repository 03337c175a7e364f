//! Builds the instance a config describes, runs it and writes the outputs.

use std::path::{Path, PathBuf};

use fdadmm_core::admm::{attach_bound, run, Problem, RunRecord};
use fdadmm_core::objectives::{boxed, least_squares_instance, L1Regularizer, LogisticData};
use fdadmm_core::oracle::{centralized_least_squares, Reference};
use fdadmm_core::Digraph;

use crate::config::{ExperimentConfig, ProblemKind, DEFAULT_LOGISTIC_M, DEFAULT_LOGISTIC_P, DEFAULT_LS_P};
use crate::error::{CliError, Result};
use crate::{dataset, graph_file, report};

pub struct Instance {
    pub problem: Problem,
    pub graph: Digraph,
    /// Centralized optimum with multipliers, for the bound columns. Only
    /// available for least squares.
    pub reference: Option<Reference>,
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    let pr = &cfg.problem;
    let (problem, reference) = match pr.kind {
        ProblemKind::LeastSquares => {
            let p = pr.p.unwrap_or(DEFAULT_LS_P);
            let parts = least_squares_instance(pr.n, p, pr.q.unwrap_or(p), pr.seed);
            let reference = centralized_least_squares(&parts);
            (Problem::new(boxed(parts), None)?, Some(reference))
        }
        ProblemKind::L1Logistic => {
            let data = match &pr.dataset {
                Some(path) => dataset::read_dataset(path)?,
                None => {
                    let p = pr.p.unwrap_or(DEFAULT_LOGISTIC_P);
                    LogisticData::generate(pr.m.unwrap_or(DEFAULT_LOGISTIC_M), p, pr.nonzeros.unwrap_or(p / 2), pr.seed)
                }
            };
            let mu = pr.mu_fraction * data.mu_max();
            let locals = data.split(pr.n)?;
            (Problem::new(boxed(locals), Some(L1Regularizer::new(mu, 1)?))?, None)
        }
    };
    let graph = match &cfg.graph.file {
        Some(path) => {
            let g = graph_file::read_graph(path)?;
            if g.node_count() != pr.n {
                return Err(CliError::format(path, 1, format!("graph has {} nodes, problem.n is {}", g.node_count(), pr.n)));
            }
            g
        }
        None => Digraph::random_strongly_connected(pr.n, cfg.graph.extra_edge_prob, cfg.graph.seed),
    };
    Ok(Instance { problem, graph, reference })
}

pub struct Outcome {
    pub record: RunRecord,
    pub reference: Option<Reference>,
    pub csv: PathBuf,
    pub round_log: Option<PathBuf>,
}

/// Runs the experiment and writes `<name>.csv` (and `<name>.rounds.jsonl`)
/// into `out_dir`, or into `output.dir` when `out_dir` is `None`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Outcome> {
    let inst = build_instance(cfg)?;
    let mut record = run(cfg.admm.algorithm.into(), &inst.problem, &inst.graph, &cfg.admm_config())?;
    if let Some(r) = &inst.reference {
        let lambda_star = r.lambda_star.as_ref().expect("least-squares references carry multipliers");
        attach_bound(&mut record, &inst.problem, lambda_star, &r.x_star);
    }
    let dir = out_dir.unwrap_or(&cfg.output.dir);
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let csv = dir.join(format!("{}.csv", cfg.output.name));
    report::write_csv(&csv, &record)?;
    let round_log = if cfg.output.round_log {
        let path = dir.join(format!("{}.rounds.jsonl", cfg.output.name));
        report::write_round_log(&path, &record.log)?;
        Some(path)
    } else {
        None
    };
    Ok(Outcome { record, reference: inst.reference, csv, round_log })
}

/// A few lines for the terminal.
pub fn summary(out: &Outcome) -> String {
    let r = &out.record;
    let mut s = format!("algorithm {}: {} steps, converged: {}\n", r.algorithm.name(), r.steps.len(), r.converged);
    if let Some(last) = r.last() {
        s += &format!(
            "final objective {} (at the consensus point {}), primal {:.3e}, dual {:.3e}\n",
            report::fmt_e12(last.objective),
            report::fmt_e12(last.consensus_objective),
            last.primal_res,
            last.dual_res
        );
        if let Some(reference) = &out.reference {
            let gap = (last.objective - reference.f_star).abs() / reference.f_star.abs();
            s += &format!("centralized optimum {}, relative gap {gap:.3e}\n", report::fmt_e12(reference.f_star));
        }
    }
    let rounds: usize = r.steps.iter().map(|s| s.consensus_rounds).sum();
    s += &format!("consensus rounds {rounds}, t_max {}\n", r.t_max.map_or("-".to_string(), |t| t.to_string()));
    s += &format!("wrote {}", out.csv.display());
    if let Some(p) = &out.round_log {
        s += &format!(" and {}", p.display());
    }
    s
}
