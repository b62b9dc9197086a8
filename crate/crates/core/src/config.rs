//! Plain-text experiment configuration: a named experiment plus optional
//! overrides, in a sectioned `key = value` format built for reproducible
//! batch runs (no expression language, no includes).
//!
//! Grammar, line by line: blank lines and whole-line `#` comments are
//! skipped; `experiment = <id>` must appear before any section; a
//! `[section]` header opens one of `[grid]`, `[sweep]`, `[check]`,
//! `[run]`; inside a section each line is `key = value` with
//! whitespace-separated multi-values. Unknown sections, unknown keys,
//! duplicate keys, unknown experiment ids, non-decreasing width lists,
//! and non-positive tolerances are all rejected at parse time with the
//! offending line number (line 0 marks whole-file problems).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// The seven batch experiments the runner knows how to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    AllenCahnKink,
    AllenCahnCircle,
    HeatMinimality,
    PlapDissipation,
    HomogenizationSweep,
    GlGammaSweep,
    Validators,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] = [
        ExperimentId::AllenCahnKink,
        ExperimentId::AllenCahnCircle,
        ExperimentId::HeatMinimality,
        ExperimentId::PlapDissipation,
        ExperimentId::HomogenizationSweep,
        ExperimentId::GlGammaSweep,
        ExperimentId::Validators,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::AllenCahnKink => "allen_cahn_kink",
            ExperimentId::AllenCahnCircle => "allen_cahn_circle",
            ExperimentId::HeatMinimality => "heat_minimality",
            ExperimentId::PlapDissipation => "plap_dissipation",
            ExperimentId::HomogenizationSweep => "homogenization_sweep",
            ExperimentId::GlGammaSweep => "gl_gamma_sweep",
            ExperimentId::Validators => "validators",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

impl std::fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One experiment invocation: which experiment, plus optional overrides
/// of its built-in defaults. `None` means "use the experiment's default".
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    /// Cell counts per axis (1 or 2 entries).
    pub cells: Option<Vec<usize>>,
    /// Domain extents per axis as `(lo, hi)` pairs.
    pub extent: Option<Vec<(f64, f64)>>,
    pub time_steps: Option<usize>,
    pub t_final: Option<f64>,
    /// Strictly decreasing positive width list for sweep experiments.
    pub eps_list: Option<Vec<f64>>,
    /// Experiment-specific acceptance tolerance (always positive).
    pub tolerance: Option<f64>,
    /// Number of perturbations per certificate bank.
    pub bank_count: Option<usize>,
    pub seed: u64,
    /// Worker threads for sweep members; 0 keeps the library default.
    pub workers: usize,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Minimal config: the experiment with all defaults.
    pub fn new(experiment: ExperimentId) -> Self {
        ExperimentConfig {
            experiment,
            cells: None,
            extent: None,
            time_steps: None,
            t_final: None,
            eps_list: None,
            tolerance: None,
            bank_count: None,
            seed: 0,
            workers: 0,
            output_dir: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        parse_config(&text)
    }

    /// Output directory: configured value or `out/<experiment>`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(self.experiment.as_str()))
    }
}

fn err(line: usize, reason: impl Into<String>) -> Error {
    Error::Config {
        line,
        reason: reason.into(),
    }
}

fn parse_f64(line: usize, key: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|e| err(line, format!("key '{key}': {e}")))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(line, format!("key '{key}': value must be finite")))
            }
        })
}

fn parse_usize(line: usize, key: &str, raw: &str) -> Result<usize> {
    raw.parse::<usize>()
        .map_err(|e| err(line, format!("key '{key}': {e}")))
}

/// Parse a config text. See the module docs for the grammar.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    const SECTIONS: [&str; 4] = ["grid", "sweep", "check", "run"];
    let mut experiment: Option<ExperimentId> = None;
    let mut section: Option<&str> = None;
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut cfg_cells = None;
    let mut cfg_extent = None;
    let mut cfg_time_steps = None;
    let mut cfg_t_final = None;
    let mut cfg_eps = None;
    let mut cfg_tolerance = None;
    let mut cfg_bank_count = None;
    let mut cfg_seed = 0u64;
    let mut cfg_workers = 0usize;
    let mut cfg_output_dir = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line_no, "section header is missing the closing ']'"))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(err(
                    line_no,
                    format!("unknown section '[{name}]' (known: [grid], [sweep], [check], [run])"),
                ));
            }
            section = Some(SECTIONS[SECTIONS.iter().position(|s| *s == name).unwrap()]);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected 'key = value', got '{line}'")))?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(err(line_no, format!("key '{key}' has an empty value")));
        }
        let scope = section.unwrap_or("");
        if !seen.insert(format!("{scope}.{key}")) {
            return Err(err(line_no, format!("duplicate key '{key}'")));
        }
        match (section, key) {
            (None, "experiment") => {
                experiment = Some(
                    ExperimentId::parse(value).map_err(|e| err(line_no, format!("{e}")))?,
                );
            }
            (None, other) => {
                return Err(err(
                    line_no,
                    format!("key '{other}' must live in a section; only 'experiment' may appear at the top level"),
                ));
            }
            (Some("grid"), "cells") => {
                let cells = value
                    .split_whitespace()
                    .map(|tok| parse_usize(line_no, "cells", tok))
                    .collect::<Result<Vec<_>>>()?;
                if cells.is_empty() || cells.len() > 2 {
                    return Err(err(line_no, "key 'cells' takes 1 or 2 entries"));
                }
                if cells.contains(&0) {
                    return Err(err(line_no, "key 'cells': cell counts must be positive"));
                }
                cfg_cells = Some(cells);
            }
            (Some("grid"), "extent") => {
                let nums = value
                    .split_whitespace()
                    .map(|tok| parse_f64(line_no, "extent", tok))
                    .collect::<Result<Vec<_>>>()?;
                if nums.len() != 2 && nums.len() != 4 {
                    return Err(err(
                        line_no,
                        "key 'extent' takes 'lo hi' per axis (2 or 4 numbers)",
                    ));
                }
                let pairs: Vec<(f64, f64)> =
                    nums.chunks_exact(2).map(|c| (c[0], c[1])).collect();
                for &(lo, hi) in &pairs {
                    if lo >= hi {
                        return Err(err(
                            line_no,
                            format!("key 'extent': lo {lo} must be below hi {hi}"),
                        ));
                    }
                }
                cfg_extent = Some(pairs);
            }
            (Some("grid"), "time_steps") => {
                let n = parse_usize(line_no, "time_steps", value)?;
                if n == 0 {
                    return Err(err(line_no, "key 'time_steps' must be positive"));
                }
                cfg_time_steps = Some(n);
            }
            (Some("grid"), "t_final") => {
                let t = parse_f64(line_no, "t_final", value)?;
                if t <= 0.0 {
                    return Err(err(line_no, "key 't_final' must be positive"));
                }
                cfg_t_final = Some(t);
            }
            (Some("sweep"), "eps") => {
                let eps = value
                    .split_whitespace()
                    .map(|tok| parse_f64(line_no, "eps", tok))
                    .collect::<Result<Vec<_>>>()?;
                if eps.is_empty() {
                    return Err(err(line_no, "key 'eps' needs at least one width"));
                }
                if eps.iter().any(|&e| e <= 0.0) {
                    return Err(err(line_no, "key 'eps': widths must be positive"));
                }
                if eps.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(err(
                        line_no,
                        "key 'eps': widths must be strictly decreasing",
                    ));
                }
                cfg_eps = Some(eps);
            }
            (Some("check"), "tolerance") => {
                let tol = parse_f64(line_no, "tolerance", value)?;
                if tol <= 0.0 {
                    return Err(err(line_no, "key 'tolerance' must be positive"));
                }
                cfg_tolerance = Some(tol);
            }
            (Some("check"), "bank_count") => {
                let n = parse_usize(line_no, "bank_count", value)?;
                if n == 0 {
                    return Err(err(line_no, "key 'bank_count' must be positive"));
                }
                cfg_bank_count = Some(n);
            }
            (Some("run"), "seed") => {
                cfg_seed = value
                    .parse::<u64>()
                    .map_err(|e| err(line_no, format!("key 'seed': {e}")))?;
            }
            (Some("run"), "workers") => {
                cfg_workers = parse_usize(line_no, "workers", value)?;
            }
            (Some("run"), "output_dir") => {
                cfg_output_dir = Some(PathBuf::from(value));
            }
            (Some(sec), other) => {
                return Err(err(
                    line_no,
                    format!("unknown key '{other}' in section [{sec}]"),
                ));
            }
        }
    }

    let experiment = experiment
        .ok_or_else(|| err(0, "missing required top-level key 'experiment'"))?;
    Ok(ExperimentConfig {
        experiment,
        cells: cfg_cells,
        extent: cfg_extent,
        time_steps: cfg_time_steps,
        t_final: cfg_t_final,
        eps_list: cfg_eps,
        tolerance: cfg_tolerance,
        bank_count: cfg_bank_count,
        seed: cfg_seed,
        workers: cfg_workers,
        output_dir: cfg_output_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_parses_every_key() {
        let text = "\
# demo configuration
experiment = gl_gamma_sweep

[grid]
cells = 512
extent = -1 1
time_steps = 8
t_final = 0.0001

[sweep]
eps = 0.1 0.05 0.025

[check]
tolerance = 0.02
bank_count = 32

[run]
seed = 7
workers = 2
output_dir = out/demo
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.experiment, ExperimentId::GlGammaSweep);
        assert_eq!(cfg.cells, Some(vec![512]));
        assert_eq!(cfg.extent, Some(vec![(-1.0, 1.0)]));
        assert_eq!(cfg.time_steps, Some(8));
        assert_eq!(cfg.t_final, Some(1e-4));
        assert_eq!(cfg.eps_list, Some(vec![0.1, 0.05, 0.025]));
        assert_eq!(cfg.tolerance, Some(0.02));
        assert_eq!(cfg.bank_count, Some(32));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.resolved_output_dir(), PathBuf::from("out/demo"));
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse_config("experiment = validators\n").unwrap();
        assert_eq!(cfg.experiment, ExperimentId::Validators);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.workers, 0);
        assert!(cfg.cells.is_none() && cfg.eps_list.is_none());
        assert_eq!(
            cfg.resolved_output_dir(),
            PathBuf::from("out").join("validators")
        );
    }

    fn expect_config_err(text: &str, want_line: usize, want_fragment: &str) {
        match parse_config(text) {
            Err(Error::Config { line, reason }) => {
                assert_eq!(line, want_line, "wrong line for: {reason}");
                assert!(
                    reason.contains(want_fragment),
                    "reason '{reason}' does not mention '{want_fragment}'"
                );
            }
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_experiment_is_rejected_at_parse_time_with_line() {
        expect_config_err("\n\nexperiment = warp_drive\n", 3, "warp_drive");
    }

    #[test]
    fn increasing_eps_list_is_rejected() {
        expect_config_err(
            "experiment = gl_gamma_sweep\n[sweep]\neps = 0.05 0.1\n",
            3,
            "strictly decreasing",
        );
    }

    #[test]
    fn non_positive_tolerance_is_rejected() {
        expect_config_err(
            "experiment = validators\n[check]\ntolerance = 0\n",
            3,
            "positive",
        );
        expect_config_err(
            "experiment = validators\n[check]\ntolerance = -0.1\n",
            3,
            "positive",
        );
    }

    #[test]
    fn unknown_sections_keys_and_duplicates_are_rejected() {
        expect_config_err("experiment = validators\n[magic]\n", 2, "unknown section");
        expect_config_err(
            "experiment = validators\n[grid]\nhandedness = left\n",
            3,
            "unknown key 'handedness'",
        );
        expect_config_err(
            "experiment = validators\n[run]\nseed = 1\nseed = 2\n",
            4,
            "duplicate key",
        );
        expect_config_err(
            "experiment = validators\ncells = 8\n",
            2,
            "must live in a section",
        );
    }

    #[test]
    fn malformed_lines_are_rejected() {
        expect_config_err("experiment = validators\n[grid]\ncells\n", 3, "key = value");
        expect_config_err("experiment = validators\n[grid\n", 2, "closing ']'");
        expect_config_err("experiment = validators\n[grid]\ncells =\n", 3, "empty value");
        expect_config_err(
            "experiment = validators\n[grid]\nextent = 0 1 2\n",
            3,
            "2 or 4 numbers",
        );
        expect_config_err(
            "experiment = validators\n[grid]\nextent = 1 0\n",
            3,
            "must be below",
        );
        expect_config_err("experiment = validators\n[grid]\ncells = 0\n", 3, "positive");
    }

    #[test]
    fn missing_experiment_is_a_whole_file_error() {
        expect_config_err("[run]\nseed = 4\n", 0, "experiment");
    }

    #[test]
    fn from_file_reads_and_reports_io() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "experiment = heat_minimality\n").unwrap();
        let cfg = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(cfg.experiment, ExperimentId::HeatMinimality);
        match ExperimentConfig::from_file(&dir.path().join("absent.cfg")) {
            Err(Error::Io { .. }) => {}
            other => panic!("expected Io error, got {other:?}"),
        }
    }

    #[test]
    fn every_id_roundtrips_through_its_name() {
        for id in ExperimentId::ALL {
            assert_eq!(ExperimentId::parse(id.as_str()).unwrap(), id);
        }
        assert!(matches!(
            ExperimentId::parse("unknown"),
            Err(Error::UnknownExperiment(_))
        ));
    }
}
