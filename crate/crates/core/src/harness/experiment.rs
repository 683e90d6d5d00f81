//! The sampler sweep: every (family, B, m) cell is repeated with seeds
//! `seed, seed + 1, ...`; the same seed is used across families so that the
//! comparison between samplers uses common random numbers.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kmeans::{
    core_sampler_epsilon, kmeans_cost, lloyd_profile, random_centers, weighted_dp_lloyd, CoreSamplerStats, LloydConfig,
    DEFAULT_RHO,
};
use crate::numeric::amplify_log;
use crate::optimal::SolverConfig;
use crate::privacy::{DataPoint, WeightedProfile};
use crate::sampler::{draw, make_coreset, make_full, make_optimal, make_uniform, DataStats, SamplerFamily, SamplerSpec};

use super::data::{load_csv, make_synthetic, preprocess, SyntheticSpec, DEFAULT_TRIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub k: usize,
    pub iterations: usize,
    pub m_list: Vec<usize>,
    pub b_list: Vec<f64>,
    pub lambda: f64,
    pub trim_fraction: f64,
    pub repetitions: usize,
    pub families: Vec<SamplerFamily>,
    pub seed: u64,
    pub rho: f64,
}

impl ExperimentConfig {
    /// Defaults: `k = 25`, `T = 10`, `B` in `{1e-4, ..., 3}`, `lambda = 1/2`,
    /// 2.5% trimming, 50 repetitions, all families.
    pub fn new(source: DataSource, m_list: Vec<usize>) -> Self {
        Self {
            source,
            k: 25,
            iterations: 10,
            m_list,
            b_list: vec![0.0001, 0.001, 0.01, 0.1, 1.0, 3.0],
            lambda: 0.5,
            trim_fraction: DEFAULT_TRIM,
            repetitions: 50,
            families: vec![
                SamplerFamily::Full,
                SamplerFamily::Uniform,
                SamplerFamily::Coreset,
                SamplerFamily::Optimal,
            ],
            seed: 0,
            rho: DEFAULT_RHO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(invalid("families", "at least one sampler family is required"));
        }
        if self.k == 0 || self.iterations == 0 || self.repetitions == 0 {
            return Err(invalid("k/T/reps", "must be positive"));
        }
        if self.b_list.is_empty() || self.b_list.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(invalid("B", "need a non-empty list of positive values"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid("lambda", format!("must lie in [0, 1], got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.trim_fraction) {
            return Err(invalid("trim", format!("must lie in [0, 1), got {}", self.trim_fraction)));
        }
        if !(self.rho > 0.0) {
            return Err(invalid("rho", "must be positive"));
        }
        let needs_m = self
            .families
            .iter()
            .any(|f| matches!(f, SamplerFamily::Uniform | SamplerFamily::Coreset));
        if needs_m && (self.m_list.is_empty() || self.m_list.contains(&0)) {
            return Err(invalid("m", "unif and core need a list of positive sample sizes"));
        }
        Ok(())
    }

    pub fn load_points(&self) -> Result<Vec<DataPoint>> {
        match &self.source {
            DataSource::Csv(path) => load_csv(path),
            DataSource::Synthetic(spec) => make_synthetic(spec, self.seed),
        }
    }
}

/// One repetition of one cell. `cost` is the k-means cost on all
/// preprocessed data divided by `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub family: SamplerFamily,
    #[serde(rename = "B")]
    pub b: f64,
    /// Target size; `n` for `full`, the rounded expected size for `opt`.
    pub m: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub cost: f64,
    pub realized_size: usize,
    pub wall_ms: u64,
    /// Largest amplified level over the data (`opt` only).
    pub max_psi: Option<f64>,
}

impl RunRecord {
    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self {
            wall_ms: 0,
            ..self.clone()
        } == Self {
            wall_ms: 0,
            ..other.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub family: SamplerFamily,
    pub b: f64,
    pub m: Option<usize>,
    pub seed: u64,
    pub message: String,
}

/// A (family, m) cell left out because its privacy precondition fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub family: SamplerFamily,
    pub m: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptSummary {
    pub b: f64,
    pub target_epsilon: f64,
    pub max_psi: f64,
    pub expected_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub stats: DataStats,
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub skipped: Vec<SkippedCell>,
    pub opt: Vec<OptSummary>,
}

struct Cell {
    family: SamplerFamily,
    b: f64,
    m: Option<usize>,
    lloyd: LloydConfig,
    built: std::result::Result<Built, String>,
}

struct Built {
    spec: SamplerSpec,
    epsilon: f64,
    m_label: usize,
    max_psi: Option<f64>,
}

/// Loads and preprocesses the configured data, then runs the sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let raw = cfg.load_points()?;
    let (points, stats) = preprocess(&raw, cfg.trim_fraction)?;
    run_on_points(cfg, &points, stats)
}

/// Largest `psi(x) = log(1 + q (e^{eps(1/q, x)} - 1))` over the data.
pub fn max_amplified_level<P: WeightedProfile + ?Sized>(profile: &P, spec: &SamplerSpec, points: &[DataPoint]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (i, x) in points.iter().enumerate() {
        let q = spec.prob(i, x)?;
        if q > 0.0 {
            best = best.max(amplify_log(profile.eval(1.0 / q, x), q));
        }
    }
    Ok(best)
}

fn build_cell(
    family: SamplerFamily,
    m: Option<usize>,
    lloyd: &LloydConfig,
    cfg: &ExperimentConfig,
    points: &[DataPoint],
    stats: &DataStats,
) -> Result<Built> {
    let n = stats.n;
    let core_stats = |m: usize, lambda: f64| CoreSamplerStats {
        n,
        m,
        lambda,
        mean_l1: stats.mean_l1,
        radius: stats.radius,
    };
    match family {
        SamplerFamily::Full => Ok(Built {
            spec: make_full(),
            epsilon: lloyd.full_data_epsilon(),
            m_label: n,
            max_psi: None,
        }),
        SamplerFamily::Uniform => {
            let m = m.expect("unif cells carry m");
            Ok(Built {
                spec: make_uniform(n, m)?,
                epsilon: core_sampler_epsilon(lloyd, &core_stats(m, 1.0))?,
                m_label: m,
                max_psi: None,
            })
        }
        SamplerFamily::Coreset => {
            let m = m.expect("core cells carry m");
            Ok(Built {
                spec: make_coreset(stats, m, cfg.lambda)?,
                epsilon: core_sampler_epsilon(lloyd, &core_stats(m, cfg.lambda))?,
                m_label: m,
                max_psi: None,
            })
        }
        SamplerFamily::Optimal => {
            let eps_star = lloyd.full_data_epsilon();
            let profile = Arc::new(lloyd_profile(lloyd));
            let spec = make_optimal(profile.clone(), points, &SolverConfig::new(eps_star)?)?;
            let max_psi = max_amplified_level(profile.as_ref(), &spec, points)?;
            Ok(Built {
                m_label: spec.expected_size().round() as usize,
                spec,
                epsilon: eps_star,
                max_psi: Some(max_psi),
            })
        }
    }
}

fn run_one(cell: &Cell, built: &Built, points: &[DataPoint], stats: &DataStats, seed: u64) -> Result<RunRecord> {
    let start = Instant::now();
    let sample = draw(&built.spec, points, seed)?;
    let init = random_centers(cell.lloyd.k, stats.dim, stats.radius, seed)?;
    let centers = weighted_dp_lloyd(&sample.items, &init, &cell.lloyd, seed)?;
    let cost = kmeans_cost(points, &centers)? / stats.n as f64;
    Ok(RunRecord {
        family: cell.family,
        b: cell.b,
        m: built.m_label,
        seed,
        epsilon: built.epsilon,
        cost,
        realized_size: sample.realized_size,
        wall_ms: start.elapsed().as_millis() as u64,
        max_psi: built.max_psi,
    })
}

/// Runs the sweep on already preprocessed data.
pub fn run_on_points(cfg: &ExperimentConfig, points: &[DataPoint], stats: DataStats) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    if !(stats.radius > 0.0) {
        return Err(invalid("data", "all points coincide after centering"));
    }
    let n = stats.n;
    if let Some(m) = cfg.m_list.iter().find(|&&m| m > n) {
        return Err(invalid("m", format!("{m} exceeds the {n} points left after trimming")));
    }

    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for &family in &cfg.families {
        let ms: Vec<Option<usize>> = match family {
            SamplerFamily::Full | SamplerFamily::Optimal => vec![None],
            SamplerFamily::Uniform | SamplerFamily::Coreset => cfg.m_list.iter().map(|&m| Some(m)).collect(),
        };
        for m in ms {
            if let (SamplerFamily::Coreset, Some(m)) = (family, m) {
                if cfg.lambda == 0.0 {
                    skipped.push(SkippedCell {
                        family,
                        m,
                        reason: "lambda = 0 admits no finite guarantee".into(),
                    });
                    continue;
                }
                let cap = n as f64 * stats.mean_l1 / stats.radius;
                if cfg.lambda < 1.0 && m as f64 > cap * (1.0 + 1e-12) {
                    skipped.push(SkippedCell {
                        family,
                        m,
                        reason: format!("m = {m} exceeds n x~ / r = {cap:.3}"),
                    });
                    continue;
                }
            }
            for &b in &cfg.b_list {
                let lloyd = LloydConfig::from_budget(cfg.k, cfg.iterations, b, stats.radius, stats.dim, cfg.rho)?;
                cells.push(Cell {
                    family,
                    b,
                    m,
                    lloyd,
                    built: Err(String::new()),
                });
            }
        }
    }
    cells.par_iter_mut().for_each(|cell| {
        cell.built = build_cell(cell.family, cell.m, &cell.lloyd, cfg, points, &stats).map_err(|e| e.to_string());
    });

    let opt = cells
        .iter()
        .filter_map(|c| match (&c.built, c.family) {
            (Ok(b), SamplerFamily::Optimal) => Some(OptSummary {
                b: c.b,
                target_epsilon: b.epsilon,
                max_psi: b.max_psi.unwrap_or(f64::NAN),
                expected_size: b.spec.expected_size(),
            }),
            _ => None,
        })
        .collect();

    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..cfg.repetitions).map(move |r| (c, cfg.seed.wrapping_add(r as u64))))
        .collect();
    let results: Vec<std::result::Result<RunRecord, RunFailure>> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cell = &cells[c];
            let fail = |message: String| RunFailure {
                family: cell.family,
                b: cell.b,
                m: cell.m,
                seed,
                message,
            };
            match &cell.built {
                Ok(built) => run_one(cell, built, points, &stats, seed).map_err(|e| fail(e.to_string())),
                Err(msg) => Err(fail(msg.clone())),
            }
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    Ok(ExperimentOutcome {
        stats,
        records,
        failures,
        skipped,
        opt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(families: Vec<SamplerFamily>) -> ExperimentConfig {
        ExperimentConfig {
            k: 3,
            b_list: vec![0.1, 1.0],
            repetitions: 4,
            families,
            seed: 7,
            ..ExperimentConfig::new(
                DataSource::Synthetic(SyntheticSpec {
                    n: 400,
                    d: 2,
                    k_true: 3,
                    spread: 0.1,
                }),
                vec![40, 80],
            )
        }
    }

    #[test]
    fn full_family_has_constant_epsilon() {
        let out = run_experiment(&small(vec![SamplerFamily::Full])).unwrap();
        assert!(out.failures.is_empty());
        assert_eq!(out.records.len(), 2 * 4);
        let first = &out.records[..4];
        assert!(first.iter().all(|r| r.epsilon == first[0].epsilon && r.m == out.stats.n));
        assert!(first.iter().any(|r| r.cost != first[0].cost));
        assert_eq!(first.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![7, 8, 9, 10]);
    }

    #[test]
    fn opt_epsilon_equals_full_epsilon() {
        let out = run_experiment(&small(vec![SamplerFamily::Full, SamplerFamily::Optimal])).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        for b in [0.1, 1.0] {
            let of = |f| out.records.iter().find(|r| r.family == f && r.b == b).unwrap();
            assert_eq!(of(SamplerFamily::Full).epsilon, of(SamplerFamily::Optimal).epsilon);
            let psi = of(SamplerFamily::Optimal).max_psi.unwrap();
            assert!(psi <= of(SamplerFamily::Optimal).epsilon + 1e-7);
        }
        assert_eq!(out.opt.len(), 2);
    }

    #[test]
    fn unif_and_core_agree_at_lambda_one() {
        let mut cfg = small(vec![SamplerFamily::Uniform, SamplerFamily::Coreset]);
        cfg.lambda = 1.0;
        let out = run_experiment(&cfg).unwrap();
        let (u, c): (Vec<_>, Vec<_>) = out.records.iter().partition(|r| r.family == SamplerFamily::Uniform);
        assert_eq!(u.len(), c.len());
        for (a, b) in u.iter().zip(&c) {
            assert_eq!((a.b, a.m, a.epsilon), (b.b, b.m, b.epsilon));
        }
    }

    #[test]
    fn deterministic_records() {
        let cfg = small(vec![SamplerFamily::Uniform, SamplerFamily::Coreset]);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        assert!(a.records.iter().zip(&b.records).all(|(x, y)| x.same_outcome(y)));
    }

    #[test]
    fn oversized_core_cells_are_skipped() {
        let mut cfg = small(vec![SamplerFamily::Coreset]);
        cfg.m_list = vec![40, 390];
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].m, 390);
        assert!(out.records.iter().all(|r| r.m == 40));
    }

    #[test]
    fn config_errors() {
        let mut cfg = small(vec![]);
        assert!(run_experiment(&cfg).is_err());
        cfg.families = vec![SamplerFamily::Uniform];
        cfg.m_list = vec![100_000];
        assert!(run_experiment(&cfg).is_err());
        cfg.m_list = vec![];
        assert!(cfg.validate().is_err());
    }
}
