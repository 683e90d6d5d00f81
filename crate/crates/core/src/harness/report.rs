//! Aggregation and output files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::SamplerFamily;

use super::experiment::{ExperimentConfig, ExperimentOutcome, RunRecord};

pub const QUANTILE_RULE: &str = "linear interpolation between order statistics: h = (n - 1) p";
pub const EPSILON_N_RULE: &str = "epsilon uses n after trimming";

/// One plot-ready line per (family, B, m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub family: SamplerFamily,
    #[serde(rename = "B")]
    pub b: f64,
    pub m: usize,
    pub epsilon: f64,
    pub cost_median: f64,
    pub cost_q25: f64,
    pub cost_q75: f64,
    pub reps: usize,
}

/// Quantile of sorted data with `h = (n - 1) p` and linear interpolation.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Groups in order of first appearance; within a group `epsilon` is taken from
/// the first record.
pub fn aggregate(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: Vec<((SamplerFamily, u64, usize), f64, Vec<f64>)> = Vec::new();
    for r in records {
        let key = (r.family, r.b.to_bits(), r.m);
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.2.push(r.cost),
            None => groups.push((key, r.epsilon, vec![r.cost])),
        }
    }
    groups
        .into_iter()
        .map(|((family, b, m), epsilon, mut costs)| {
            costs.sort_by(f64::total_cmp);
            SummaryRow {
                family,
                b: f64::from_bits(b),
                m,
                epsilon,
                cost_median: quantile(&costs, 0.5),
                cost_q25: quantile(&costs, 0.25),
                cost_q75: quantile(&costs, 0.75),
                reps: costs.len(),
            }
        })
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 8] = ["family", "B", "m", "epsilon", "cost_median", "cost_q25", "cost_q75", "reps"];
pub const RUNS_HEADER: [&str; 9] = [
    "family",
    "B",
    "m",
    "seed",
    "epsilon",
    "cost",
    "realized_size",
    "wall_ms",
    "max_psi",
];

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    write_rows(path.as_ref(), rows, &SUMMARY_HEADER)
}

pub fn write_runs_csv(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    write_rows(path.as_ref(), records, &RUNS_HEADER)
}

/// `<out>.runs.csv` and `<out>.meta.json` next to the summary file.
pub fn sidecar_paths(out: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let out = out.as_ref().as_os_str().to_owned();
    let with = |suffix: &str| {
        let mut p = out.clone();
        p.push(suffix);
        PathBuf::from(p)
    };
    (with(".runs.csv"), with(".meta.json"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub stats: crate::sampler::DataStats,
    pub quantile_rule: String,
    pub epsilon_n_rule: String,
    pub skipped: Vec<super::experiment::SkippedCell>,
    pub failures: Vec<super::experiment::RunFailure>,
    pub opt: Vec<super::experiment::OptSummary>,
}

impl RunMetadata {
    pub fn new(cfg: &ExperimentConfig, outcome: &ExperimentOutcome) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            seeds: (0..cfg.repetitions as u64).map(|r| cfg.seed.wrapping_add(r)).collect(),
            stats: outcome.stats,
            quantile_rule: QUANTILE_RULE.into(),
            epsilon_n_rule: EPSILON_N_RULE.into(),
            skipped: outcome.skipped.clone(),
            failures: outcome.failures.clone(),
            opt: outcome.opt.clone(),
        }
    }
}

pub fn write_metadata(path: impl AsRef<Path>, meta: &RunMetadata) -> Result<()> {
    let text = serde_json::to_string_pretty(meta).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes the summary to `out` and the two sidecars next to it.
pub fn write_outputs(out: impl AsRef<Path>, cfg: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<Vec<SummaryRow>> {
    let rows = aggregate(&outcome.records);
    write_summary_csv(out.as_ref(), &rows)?;
    let (runs, meta) = sidecar_paths(out.as_ref());
    write_runs_csv(runs, &outcome.records)?;
    write_metadata(meta, &RunMetadata::new(cfg, outcome))?;
    Ok(rows)
}
