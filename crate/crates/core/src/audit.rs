//! Desk-scale checks of the privacy and statistical claims made elsewhere in
//! the crate. Every audit is deterministic given its inputs and seed.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kmeans::{lloyd_profile, LloydConfig};
use crate::numeric::amplify_log;
use crate::optimal::SolverConfig;
use crate::privacy::DataPoint;
use crate::sampler::{draw, estimate_objective, make_coreset, make_full, make_optimal, make_uniform, DataStats, SamplerSpec};

pub const MIN_DENSITY_GRID: usize = 100;
pub const MIN_UNBIASEDNESS_TRIALS: usize = 10_000;

/// Outcome of a single audit. `passed` holds iff `observed <= bound + tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub samples: u64,
}

impl AuditReport {
    pub fn new(name: impl Into<String>, observed: f64, bound: f64, tolerance: f64, samples: u64) -> Self {
        Self {
            name: name.into(),
            passed: observed <= bound + tolerance,
            observed,
            bound,
            tolerance,
            samples,
        }
    }
}

/// Largest `|log f(y) / f'(y)|` between `Lap(0, beta)^d` and the same law
/// shifted by `w x`, along a path through the output space.
///
/// The log-ratio is separable, `sum_i (|y_i - w x_i| - |y_i|) / beta`, so the
/// path runs each coordinate across `[min(0, w x_i) - 10 beta, max(0, w x_i) + 10 beta]`
/// starting on the side away from the shift. Both ends of the path then sit
/// where every coordinate contributes its extreme term.
pub fn audit_density_ratio(beta: f64, w: f64, x: &DataPoint, grid: usize) -> Result<AuditReport> {
    audit_shifted_density_ratio(beta, w, x, grid, 1.0)
}

/// As [`audit_density_ratio`] with the actual shift multiplied by `inflation`
/// while the bound stays at `w |x|_1 / beta`. Inflations above one are the
/// negative control.
pub fn audit_shifted_density_ratio(beta: f64, w: f64, x: &DataPoint, grid: usize, inflation: f64) -> Result<AuditReport> {
    if grid < MIN_DENSITY_GRID {
        return Err(invalid("grid", format!("need at least {MIN_DENSITY_GRID} points, got {grid}")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("beta", format!("must be positive, got {beta}")));
    }
    if !(w >= 1.0) || !w.is_finite() {
        return Err(invalid("w", format!("must be at least 1, got {w}")));
    }
    let shift: Vec<f64> = x.coords().iter().map(|c| inflation * w * c).collect();
    let span: Vec<(f64, f64)> = shift
        .iter()
        .map(|&s| {
            let lo = s.min(0.0) - 10.0 * beta;
            let hi = s.max(0.0) + 10.0 * beta;
            if s >= 0.0 {
                (lo, hi)
            } else {
                (hi, lo)
            }
        })
        .collect();
    let mut observed: f64 = 0.0;
    for g in 0..grid {
        let t = g as f64 / (grid - 1) as f64;
        let log_ratio: f64 = span
            .iter()
            .zip(&shift)
            .map(|(&(from, to), &s)| {
                let y = from + t * (to - from);
                ((y - s).abs() - y.abs()) / beta
            })
            .sum();
        observed = observed.max(log_ratio.abs());
    }
    Ok(AuditReport::new(
        "density_ratio",
        observed,
        w * x.l1_norm() / beta,
        1e-9,
        grid as u64,
    ))
}

/// Exact amplification check on `outcomes`-ary randomized response of the
/// presence bit of a single point.
///
/// The base mechanism reports the bit (as outcome 0 or 1) with probability
/// `e^eps / (e^eps + k - 1)` and every other outcome with `1 / (e^eps + k - 1)`,
/// so it is exactly `eps`-DP. Including the point with probability `q`
/// turns the output law on the one-point data set into the mixture
/// `q P(. | 1) + (1 - q) P(. | 0)`. The report holds the largest log-ratio in
/// either direction over all outcomes; the bound is `log(1 + q (e^eps - 1))`.
pub fn audit_amplification_exact(q: f64, eps_true: f64, outcomes: usize) -> Result<AuditReport> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(invalid("q", format!("must lie in (0, 1], got {q}")));
    }
    if !(eps_true > 0.0) || !eps_true.is_finite() {
        return Err(invalid("eps_true", format!("must be positive, got {eps_true}")));
    }
    if outcomes < 2 {
        return Err(invalid("outcomes", "need at least two outcomes"));
    }
    let e = eps_true.exp();
    let z = e + (outcomes - 1) as f64;
    let law = |bit: usize, o: usize| if o == bit { e / z } else { 1.0 / z };
    let mut observed = f64::NEG_INFINITY;
    for o in 0..outcomes {
        let absent = law(0, o);
        let mixed = q * law(1, o) + (1.0 - q) * law(0, o);
        let r = (mixed / absent).ln();
        observed = observed.max(r).max(-r);
    }
    Ok(AuditReport::new(
        "amplification_exact",
        observed,
        amplify_log(eps_true, q),
        1e-12,
        outcomes as u64,
    ))
}

/// Monte-Carlo check that `estimate_objective` is unbiased for `spec`.
///
/// Trial `t` draws with seed `seed + t`. `observed = |mean - phi_D|`,
/// `bound = 3 * standard error`.
pub fn audit_unbiasedness<L>(spec: &SamplerSpec, data: &[DataPoint], loss: L, trials: usize, seed: u64) -> Result<AuditReport>
where
    L: Fn(&DataPoint) -> f64 + Sync,
{
    if trials < MIN_UNBIASEDNESS_TRIALS {
        return Err(invalid(
            "trials",
            format!("need at least {MIN_UNBIASEDNESS_TRIALS}, got {trials}"),
        ));
    }
    let exact: f64 = data.iter().map(&loss).sum();
    // deviations from the exact value, so a zero-variance sampler reports zero
    let deviations = (0..trials)
        .into_par_iter()
        .map(|t| draw(spec, data, seed.wrapping_add(t as u64)).map(|s| estimate_objective(&s, &loss) - exact))
        .collect::<Result<Vec<f64>>>()?;
    let n = trials as f64;
    let mean = deviations.iter().sum::<f64>() / n;
    let var = deviations.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    Ok(AuditReport::new(
        format!("unbiasedness_{}", spec.family()),
        mean.abs(),
        3.0 * se,
        1e-12 * exact.abs().max(1.0),
        trials as u64,
    ))
}

/// `log(1 + theta(z))` with `theta(z) = (e^{(a + t z)/(b + s z)} - 1)(b + s z)`.
/// At a zero denominator the value is the limit from the right: infinite
/// unless the numerator vanishes too.
pub fn endpoint_objective(a: f64, t: f64, b: f64, s: f64, z: f64) -> f64 {
    let v = b + s * z;
    if v <= 0.0 {
        return if a + t * z > 0.0 { f64::INFINITY } else { 0.0 };
    }
    amplify_log((a + t * z) / v, v)
}

/// Checks that `theta` over an even grid of `[0, r]` peaks at an endpoint:
/// `observed` is the largest interior value, `bound` the larger endpoint value.
pub fn audit_endpoint_maximum(a: f64, t: f64, b: f64, s: f64, r: f64, grid: usize) -> Result<AuditReport> {
    if grid < 3 {
        return Err(invalid("grid", "need at least three points"));
    }
    if !(r > 0.0) {
        return Err(invalid("r", format!("must be positive, got {r}")));
    }
    let f = |z: f64| endpoint_objective(a, t, b, s, z);
    let bound = f(0.0).max(f(r));
    let observed = (1..grid - 1)
        .map(|g| f(r * g as f64 / (grid - 1) as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(AuditReport::new("endpoint_maximum", observed, bound, 1e-12, grid as u64))
}

fn suite_points(n: usize, dim: usize, seed: u64) -> Result<Vec<DataPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect();
    let mean: Vec<f64> = (0..dim).map(|j| raw.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    raw.into_iter()
        .map(|p| DataPoint::new(p.iter().zip(&mean).map(|(v, m)| v - m).collect()))
        .collect()
}

/// The fixed audit battery run by the CLI `audit` command.
///
/// Negative controls are reported with `passed` set when the underlying audit
/// correctly fails.
pub fn run_suite(seed: u64) -> Result<Vec<AuditReport>> {
    type Job = Box<dyn Fn() -> Result<AuditReport> + Send + Sync>;
    let mut jobs: Vec<Job> = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..8 {
        let beta = 0.1 + 5.0 * rng.random::<f64>();
        let w = 1.0 + 20.0 * rng.random::<f64>();
        let x = DataPoint::new((0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())?;
        let control = x.clone();
        jobs.push(Box::new(move || {
            let mut r = audit_density_ratio(beta, w, &x, 10_000)?;
            r.name = format!("density_ratio_{i}");
            Ok(r)
        }));
        jobs.push(Box::new(move || {
            let inner = audit_shifted_density_ratio(beta, w, &control, 10_000, 2.0)?;
            Ok(AuditReport {
                name: format!("density_ratio_negative_control_{i}"),
                passed: !inner.passed,
                ..inner
            })
        }));
    }
    for q in [0.1, 0.5, 0.9] {
        for eps in [0.5, 1.0, 2.0] {
            jobs.push(Box::new(move || {
                let mut r = audit_amplification_exact(q, eps, 4)?;
                r.name = format!("amplification_q{q}_eps{eps}");
                // exact arithmetic: equality, not just the upper bound
                r.passed &= (r.observed - r.bound).abs() <= r.tolerance;
                Ok(r)
            }));
        }
    }
    for i in 0..4 {
        let (a, t) = (rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0);
        let (b, s) = (rng.random::<f64>() * 0.5, rng.random::<f64>() * 0.5);
        jobs.push(Box::new(move || {
            let mut r = audit_endpoint_maximum(a, t, b, s, 1.0, 1_000)?;
            r.name = format!("endpoint_maximum_{i}");
            Ok(r)
        }));
    }

    let points = Arc::new(suite_points(100, 2, seed ^ 0x5eed)?);
    let stats = DataStats::from_points(&points)?;
    let m = 20.min((stats.n as f64 * stats.mean_l1 / stats.radius).floor() as usize).max(1);
    let lloyd = LloydConfig::from_budget(3, 2, 1.0, stats.radius, stats.dim, crate::kmeans::DEFAULT_RHO)?;
    let eps_star = lloyd.full_data_epsilon();
    let specs = vec![
        make_full(),
        make_uniform(stats.n, m)?,
        make_coreset(&stats, m, 0.5)?,
        make_optimal(Arc::new(lloyd_profile(&lloyd)), &points, &SolverConfig::new(eps_star)?)?,
    ];
    for (i, spec) in specs.into_iter().enumerate() {
        let points = Arc::clone(&points);
        jobs.push(Box::new(move || {
            let loss = |x: &DataPoint| 1.0 + x.coords().iter().map(|c| c * c).sum::<f64>();
            audit_unbiasedness(&spec, &points, loss, MIN_UNBIASEDNESS_TRIALS, seed.wrapping_add(1000 * i as u64))
        }));
    }

    jobs.par_iter().map(|job| job()).collect()
}
