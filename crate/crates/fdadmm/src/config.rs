//! Experiment configuration: one TOML file with `[problem]`, `[graph]`,
//! `[admm]` and `[output]` sections. Only `[problem]` is required.
//!
//! ```toml
//! [problem]
//! kind = "least_squares"   # or "l1_logistic"
//! n = 6
//! p = 3
//!
//! [admm]
//! algorithm = "fdadmm_ftdt" # or "dadmm_fterc", "epsilon_baseline"
//! k_max = 200
//! ```
//!
//! Relative input paths (`graph.file`, `problem.dataset`) are resolved
//! against the directory holding the config file.

use std::path::{Path, PathBuf};

use fdadmm_core::admm::{AdmmConfig, Algorithm, Arithmetic, Init};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    LeastSquares,
    L1Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    DadmmFterc,
    FdadmmFtdt,
    EpsilonBaseline,
}

impl From<AlgorithmName> for Algorithm {
    fn from(a: AlgorithmName) -> Self {
        match a {
            AlgorithmName::DadmmFterc => Algorithm::DadmmFterc,
            AlgorithmName::FdadmmFtdt => Algorithm::FdadmmFtdt,
            AlgorithmName::EpsilonBaseline => Algorithm::EpsilonBaseline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitName {
    Random,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithmeticName {
    Exact,
    Float,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    /// Number of nodes.
    pub n: usize,
    /// Unknowns (least squares) or features without the intercept
    /// (logistic). Defaults to 3 and 10.
    pub p: Option<usize>,
    /// Rows of each local least-squares block; defaults to `p`.
    pub q: Option<usize>,
    /// Total logistic examples; defaults to 200.
    pub m: Option<usize>,
    /// Nonzeros of the generating weight vector; defaults to `p / 2`.
    pub nonzeros: Option<usize>,
    /// `μ = mu_fraction · μ_max`.
    #[serde(default = "default_mu_fraction")]
    pub mu_fraction: f64,
    /// Logistic data file instead of synthetic data.
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// Edge-list file instead of a random graph.
    pub file: Option<PathBuf>,
    #[serde(default = "default_edge_prob")]
    pub extra_edge_prob: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self { file: None, extra_edge_prob: default_edge_prob(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmmSection {
    pub algorithm: AlgorithmName,
    pub rho: f64,
    pub k_max: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Upper bound on `n` for `dadmm_fterc`; defaults to `n`.
    pub n_prime: Option<usize>,
    pub init: InitName,
    pub init_seed: u64,
    pub arithmetic: ArithmeticName,
    pub stop_on_criterion: bool,
    pub cache_denominators: bool,
    /// Agreement level of the ε-consensus baseline.
    pub epsilon: f64,
    pub epsilon_max_rounds: usize,
}

impl Default for AdmmSection {
    fn default() -> Self {
        let d = AdmmConfig::default();
        Self {
            algorithm: AlgorithmName::FdadmmFtdt,
            rho: d.rho,
            k_max: d.k_max,
            eps_abs: d.eps_abs,
            eps_rel: d.eps_rel,
            n_prime: None,
            init: InitName::Random,
            init_seed: 0,
            arithmetic: ArithmeticName::Exact,
            stop_on_criterion: d.stop_on_criterion,
            cache_denominators: d.cache_denominators,
            epsilon: d.epsilon,
            epsilon_max_rounds: d.epsilon_max_rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// File stem of `<name>.csv` and `<name>.rounds.jsonl`.
    pub name: String,
    pub round_log: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("."), name: "run".into(), round_log: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub admm: AdmmSection,
    #[serde(default)]
    pub output: OutputSection,
}

pub const DEFAULT_LS_P: usize = 3;
pub const DEFAULT_LOGISTIC_P: usize = 10;
pub const DEFAULT_LOGISTIC_M: usize = 200;

fn default_mu_fraction() -> f64 {
    0.1
}

fn default_edge_prob() -> f64 {
    0.2
}

impl ExperimentConfig {
    /// Parses and validates `text`; `path` only labels error messages and
    /// anchors relative input paths.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate(text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.graph.file, &mut cfg.problem.dataset].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text, path)
    }

    /// Replaces the data, graph and initialization seeds.
    pub fn override_seed(&mut self, seed: u64) {
        self.problem.seed = seed;
        self.graph.seed = seed;
        self.admm.init_seed = seed;
    }

    pub fn admm_config(&self) -> AdmmConfig {
        let a = &self.admm;
        AdmmConfig {
            rho: a.rho,
            k_max: a.k_max,
            eps_abs: a.eps_abs,
            eps_rel: a.eps_rel,
            n_prime: match a.algorithm {
                AlgorithmName::DadmmFterc => Some(a.n_prime.unwrap_or(self.problem.n)),
                _ => a.n_prime,
            },
            init: match a.init {
                InitName::Random => Init::Random { seed: a.init_seed },
                InitName::Zero => Init::Zero,
            },
            arithmetic: match a.arithmetic {
                ArithmeticName::Exact => Arithmetic::Exact,
                ArithmeticName::Float => Arithmetic::Float,
            },
            stop_on_criterion: a.stop_on_criterion,
            cache_denominators: a.cache_denominators,
            epsilon: a.epsilon,
            epsilon_max_rounds: a.epsilon_max_rounds,
            ..AdmmConfig::default()
        }
    }

    fn validate(&self, text: &str, path: &Path) -> Result<()> {
        let fail = |section: &str, key: &str, message: String| {
            Err(CliError::Config { path: path.to_path_buf(), line: locate(text, section, key), message })
        };
        let pr = &self.problem;
        if pr.n == 0 {
            return fail("problem", "n", "n must be at least 1".into());
        }
        if pr.p == Some(0) {
            return fail("problem", "p", "p must be at least 1".into());
        }
        if pr.q == Some(0) {
            return fail("problem", "q", "q must be at least 1".into());
        }
        match pr.kind {
            ProblemKind::LeastSquares => {
                for key in ["m", "nonzeros", "dataset"] {
                    if has_key(text, "problem", key) {
                        return fail("problem", key, format!("`{key}` only applies to l1_logistic"));
                    }
                }
            }
            ProblemKind::L1Logistic => {
                if pr.q.is_some() {
                    return fail("problem", "q", "`q` only applies to least_squares".into());
                }
                let m = pr.m.unwrap_or(DEFAULT_LOGISTIC_M);
                if pr.dataset.is_none() && m < pr.n {
                    return fail("problem", "m", format!("m = {m} leaves some of the {} nodes without data", pr.n));
                }
                let p = pr.p.unwrap_or(DEFAULT_LOGISTIC_P);
                if pr.nonzeros.is_some_and(|k| k > p) {
                    return fail("problem", "nonzeros", format!("nonzeros exceeds p = {p}"));
                }
                if pr.dataset.is_some() && (pr.m.is_some() || pr.nonzeros.is_some() || pr.p.is_some()) {
                    return fail("problem", "dataset", "a dataset fixes m and p; drop `m`, `p` and `nonzeros`".into());
                }
            }
        }
        if !(pr.mu_fraction >= 0.0 && pr.mu_fraction.is_finite()) {
            return fail("problem", "mu_fraction", "mu_fraction must be finite and nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.graph.extra_edge_prob) {
            return fail("graph", "extra_edge_prob", "extra_edge_prob must lie in [0, 1]".into());
        }
        let a = &self.admm;
        if !(a.rho > 0.0 && a.rho.is_finite()) {
            return fail("admm", "rho", format!("rho must be positive and finite, got {}", a.rho));
        }
        if a.k_max == 0 {
            return fail("admm", "k_max", "k_max must be at least 1".into());
        }
        for (key, v) in [("eps_abs", a.eps_abs), ("eps_rel", a.eps_rel)] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail("admm", key, format!("{key} must be finite and nonnegative"));
            }
        }
        if let Some(np) = a.n_prime {
            if np < pr.n {
                return fail("admm", "n_prime", format!("n_prime = {np} is below n = {}", pr.n));
            }
        }
        if !(a.epsilon > 0.0 && a.epsilon.is_finite()) {
            return fail("admm", "epsilon", "epsilon must be positive".into());
        }
        if a.epsilon_max_rounds == 0 {
            return fail("admm", "epsilon_max_rounds", "epsilon_max_rounds must be at least 1".into());
        }
        let name = &self.output.name;
        if name.is_empty() || name.contains(['/', '\\']) {
            return fail("output", "name", "name must be a plain, nonempty file stem".into());
        }
        Ok(())
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]`, else the section header, else 0.
pub(crate) fn locate(text: &str, section: &str, key: &str) -> usize {
    let mut current = "";
    let mut header = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
            if current == section {
                header = i + 1;
            }
        } else if current == section && line.split('=').next().is_some_and(|k| k.trim() == key) && line.contains('=') {
            return i + 1;
        }
    }
    header
}

fn has_key(text: &str, section: &str, key: &str) -> bool {
    let line = locate(text, section, key);
    line > 0 && text.lines().nth(line - 1).is_some_and(|l| l.contains('='))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("exp.toml"))
    }

    fn line(e: CliError) -> usize {
        match e {
            CliError::Config { line, .. } => line,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_takes_the_defaults() {
        let c = parse("[problem]\nkind = \"least_squares\"\nn = 3\n").unwrap();
        let a = c.admm_config();
        assert_eq!((a.rho, a.k_max, a.eps_abs, a.eps_rel), (1.0, 500, 1e-4, 1e-2));
        assert_eq!(c.admm.algorithm, AlgorithmName::FdadmmFtdt);
    }

    #[test]
    fn unknown_algorithm_points_at_its_line() {
        let e = parse("[problem]\nkind = \"least_squares\"\nn = 3\n\n[admm]\nalgorithm = \"gossip\"\n").unwrap_err();
        assert!(e.to_string().contains("gossip"), "{e}");
        assert_eq!(line(e), 6);
    }

    #[test]
    fn unknown_key_points_at_its_line() {
        let e = parse("[problem]\nkind = \"least_squares\"\nn = 3\nsize = 4\n").unwrap_err();
        assert_eq!(line(e), 4);
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let e = parse("[problem]\nkind = \"least_squares\"\nn = 3\n[admm]\nk_max = 5\nrho = -1\n").unwrap_err();
        assert_eq!(line(e), 6);
        let e = parse("[problem]\nkind = \"least_squares\"\nn = 4\n[admm]\nn_prime = 2\n").unwrap_err();
        assert_eq!(line(e), 5);
        let e = parse("[problem]\nkind = \"least_squares\"\nn = 4\nm = 10\n").unwrap_err();
        assert_eq!(line(e), 4);
    }

    #[test]
    fn missing_problem_section() {
        assert!(parse("[admm]\nrho = 1.0\n").is_err());
    }

    #[test]
    fn dadmm_fterc_defaults_n_prime_to_n() {
        let c = parse("[problem]\nkind = \"least_squares\"\nn = 5\n[admm]\nalgorithm = \"dadmm_fterc\"\n").unwrap();
        assert_eq!(c.admm_config().n_prime, Some(5));
    }

    #[test]
    fn relative_inputs_follow_the_config_file() {
        let c = ExperimentConfig::parse(
            "[problem]\nkind = \"l1_logistic\"\nn = 2\ndataset = \"d.csv\"\n[graph]\nfile = \"g.txt\"\n",
            Path::new("exps/a.toml"),
        )
        .unwrap();
        assert_eq!(c.graph.file.unwrap(), Path::new("exps/g.txt"));
        assert_eq!(c.problem.dataset.unwrap(), Path::new("exps/d.csv"));
    }
}
