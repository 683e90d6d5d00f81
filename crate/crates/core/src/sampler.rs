//! Poisson importance sampling.
//!
//! Each point `x_i` is kept independently with probability `q(x_i)` and, when
//! kept, carries weight `1 / q(x_i)`. Selection randomness is counter based:
//! the uniform variate of point `i` under seed `s` is word `2 i` of the ChaCha8
//! stream `SELECTION_STREAM` keyed by `s`, so a draw does not depend on the
//! order in which points are visited.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::optimal::{solve_dataset, solve_point, SolverConfig};
use crate::privacy::{DataPoint, WeightedDataset, WeightedPoint, WeightedProfile};

pub const SELECTION_STREAM: u64 = 0;

/// Relative tolerance for `sum x_i = 0`.
pub const CENTERING_TOL: f64 = 1e-9;

/// Probabilities this close above one are rounding noise and read as one.
const PROB_ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SamplerFamily {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "unif")]
    Uniform,
    #[serde(rename = "core")]
    Coreset,
    #[serde(rename = "opt")]
    Optimal,
}

impl SamplerFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerFamily::Full => "full",
            SamplerFamily::Uniform => "unif",
            SamplerFamily::Coreset => "core",
            SamplerFamily::Optimal => "opt",
        }
    }
}

impl fmt::Display for SamplerFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SamplerFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(SamplerFamily::Full),
            "unif" | "uniform" => Ok(SamplerFamily::Uniform),
            "core" | "coreset" => Ok(SamplerFamily::Coreset),
            "opt" | "optimal" => Ok(SamplerFamily::Optimal),
            other => Err(invalid("family", format!("unknown sampler family `{other}`"))),
        }
    }
}

/// Norm statistics of a (preprocessed) data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataStats {
    pub n: usize,
    pub dim: usize,
    /// `r = max |x_i|_1`
    pub radius: f64,
    /// `x~ = mean |x_i|_1`
    pub mean_l1: f64,
    /// `|mean x_i|_1`; zero for a centered set.
    pub center_residual: f64,
}

impl DataStats {
    pub fn from_points(points: &[DataPoint]) -> Result<Self> {
        let first = points.first().ok_or(Error::Empty("no points"))?;
        let dim = first.dim();
        let n = points.len();
        let mut sum = vec![0.0; dim];
        let mut radius: f64 = 0.0;
        let mut total_l1 = 0.0;
        for p in points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
            for (s, c) in sum.iter_mut().zip(p.coords()) {
                *s += c;
            }
            let l1 = p.l1_norm();
            radius = radius.max(l1);
            total_l1 += l1;
        }
        Ok(Self {
            n,
            dim,
            radius,
            mean_l1: total_l1 / n as f64,
            center_residual: sum.iter().map(|s| (s / n as f64).abs()).sum(),
        })
    }

    pub fn is_centered(&self) -> bool {
        self.center_residual <= CENTERING_TOL * self.mean_l1
    }
}

#[derive(Clone)]
enum Rule {
    Constant(f64),
    Coreset { lambda: f64, m: f64, n: f64, mean_l1: f64 },
    Optimal {
        probs: Vec<f64>,
        profile: Arc<dyn WeightedProfile>,
        cfg: SolverConfig,
    },
}

/// A selection-probability rule bound to the statistics of one data set.
#[derive(Clone)]
pub struct SamplerSpec {
    family: SamplerFamily,
    rule: Rule,
    bound_n: Option<usize>,
    expected_size: f64,
    lambda: f64,
    target_size: Option<usize>,
}

impl fmt::Debug for SamplerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SamplerSpec")
            .field("family", &self.family)
            .field("bound_n", &self.bound_n)
            .field("expected_size", &self.expected_size)
            .field("lambda", &self.lambda)
            .field("target_size", &self.target_size)
            .finish()
    }
}

impl SamplerSpec {
    pub fn family(&self) -> SamplerFamily {
        self.family
    }

    /// `sum_i q(x_i)` over the bound data set (`None` for the unbound full
    /// sampler, whose expected size is the data size).
    pub fn expected_size(&self) -> f64 {
        self.expected_size
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The requested expected sample size `m`, where one was given.
    pub fn target_size(&self) -> Option<usize> {
        self.target_size
    }

    /// Selection probability of an arbitrary point. For the optimal sampler
    /// this solves the point's weight on demand.
    pub fn prob_of(&self, x: &DataPoint) -> Result<f64> {
        let q = match &self.rule {
            Rule::Constant(p) => *p,
            Rule::Coreset { lambda, m, n, mean_l1 } => {
                let uniform = lambda * m / n;
                if *lambda == 1.0 {
                    uniform
                } else {
                    uniform + (1.0 - lambda) * m * x.l1_norm() / (n * mean_l1)
                }
            }
            Rule::Optimal { profile, cfg, .. } => 1.0 / solve_point(profile.as_ref(), x, cfg)?.weight,
        };
        normalize_prob(q)
    }

    /// Selection probability of the `index`-th point of the bound data set.
    pub fn prob(&self, index: usize, x: &DataPoint) -> Result<f64> {
        match &self.rule {
            Rule::Optimal { probs, .. } => probs
                .get(index)
                .copied()
                .ok_or_else(|| invalid("index", format!("{index} is outside the bound data set"))),
            _ => self.prob_of(x),
        }
    }

    fn check_bound(&self, n: usize) -> Result<()> {
        match self.bound_n {
            Some(bound) if bound != n => Err(invalid(
                "data",
                format!("sampler is bound to {bound} points but got {n}"),
            )),
            _ => Ok(()),
        }
    }
}

fn normalize_prob(q: f64) -> Result<f64> {
    if q.is_nan() || q < 0.0 || q > 1.0 + PROB_ROUNDING {
        return Err(Error::InvalidProbability(q));
    }
    Ok(q.min(1.0))
}

/// `q = 1`: every point, weight one.
pub fn make_full() -> SamplerSpec {
    SamplerSpec {
        family: SamplerFamily::Full,
        rule: Rule::Constant(1.0),
        bound_n: None,
        expected_size: f64::NAN,
        lambda: 1.0,
        target_size: None,
    }
}

/// Constant probability `m / n`.
pub fn make_uniform(n: usize, m: usize) -> Result<SamplerSpec> {
    if m == 0 {
        return Err(invalid("m", "the expected sample size must be positive"));
    }
    if m > n {
        return Err(invalid("m", format!("{m} exceeds the data size {n}")));
    }
    Ok(SamplerSpec {
        family: SamplerFamily::Uniform,
        rule: Rule::Constant(m as f64 / n as f64),
        bound_n: Some(n),
        expected_size: m as f64,
        lambda: 1.0,
        target_size: Some(m),
    })
}

/// Mixture of uniform sampling and sampling proportional to the l1 norm:
/// `q(x) = lambda m / n + (1 - lambda) m |x|_1 / (n x~)`.
///
/// Requires centered data and, for `lambda < 1`, `m <= n x~ / r` so that no
/// probability exceeds one.
pub fn make_coreset(stats: &DataStats, m: usize, lambda: f64) -> Result<SamplerSpec> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid("lambda", format!("must lie in [0, 1], got {lambda}")));
    }
    if m == 0 {
        return Err(invalid("m", "the expected sample size must be positive"));
    }
    if m > stats.n {
        return Err(invalid("m", format!("{m} exceeds the data size {}", stats.n)));
    }
    if !stats.is_centered() {
        return Err(Error::NotCentered {
            residual: stats.center_residual,
            tolerance: CENTERING_TOL * stats.mean_l1,
        });
    }
    if lambda < 1.0 {
        if !(stats.mean_l1 > 0.0) {
            return Err(invalid("data", "mean l1 norm is zero; norm-proportional sampling is undefined"));
        }
        let cap = stats.n as f64 * stats.mean_l1 / stats.radius;
        if m as f64 > cap * (1.0 + PROB_ROUNDING) {
            return Err(invalid(
                "m",
                format!("{m} exceeds n x~ / r = {cap}; some probabilities would exceed one"),
            ));
        }
    }
    Ok(SamplerSpec {
        family: SamplerFamily::Coreset,
        rule: Rule::Coreset {
            lambda,
            m: m as f64,
            n: stats.n as f64,
            mean_l1: stats.mean_l1,
        },
        bound_n: Some(stats.n),
        expected_size: m as f64,
        lambda,
        target_size: Some(m),
    })
}

/// Privacy-optimal sampler: `q(x_i) = 1 / w*_i` with `w*` from
/// [`solve_dataset`] at `cfg.target_epsilon`.
pub fn make_optimal(profile: Arc<dyn WeightedProfile>, data: &[DataPoint], cfg: &SolverConfig) -> Result<SamplerSpec> {
    let solution = solve_dataset(profile.as_ref(), data, cfg)?;
    let probs: Vec<f64> = solution.weights.iter().map(|w| 1.0 / w).collect();
    let expected_size = probs.iter().sum();
    Ok(SamplerSpec {
        family: SamplerFamily::Optimal,
        rule: Rule::Optimal {
            probs,
            profile,
            cfg: *cfg,
        },
        bound_n: Some(data.len()),
        expected_size,
        lambda: f64::NAN,
        target_size: None,
    })
}

/// One realisation of a Poisson importance sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDraw {
    pub items: WeightedDataset,
    /// Positions of the selected points in the input.
    pub indices: Vec<usize>,
    pub seed: u64,
    pub realized_size: usize,
}

fn selection_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SELECTION_STREAM);
    rng
}

/// The uniform variate deciding whether point `index` is kept under `seed`.
pub fn selection_uniform(seed: u64, index: usize) -> f64 {
    let mut rng = selection_rng(seed);
    rng.set_word_pos(2 * index as u128);
    rng.random::<f64>()
}

/// Keeps point `i` iff its selection variate is below `q(x_i)`; kept points
/// carry weight `1 / q(x_i)`. Points with `q = 0` are never kept.
pub fn draw(spec: &SamplerSpec, data: &[DataPoint], seed: u64) -> Result<SampleDraw> {
    let dim = data.first().ok_or(Error::Empty("no points to sample from"))?.dim();
    spec.check_bound(data.len())?;
    let mut rng = selection_rng(seed);
    let mut items = Vec::new();
    let mut indices = Vec::new();
    for (i, x) in data.iter().enumerate() {
        let q = spec.prob(i, x)?;
        // consumed for every point so that word 2i always belongs to point i
        let u: f64 = rng.random();
        if q > 0.0 && u < q {
            items.push(WeightedPoint::new(1.0 / q, x.clone())?);
            indices.push(i);
        }
    }
    let realized_size = items.len();
    Ok(SampleDraw {
        items: WeightedDataset::new(dim, items)?,
        indices,
        seed,
        realized_size,
    })
}

/// Inverse-probability weighted objective `sum_{(w, x) in S} w loss(x)`.
pub fn estimate_objective<L>(sample: &SampleDraw, loss: L) -> f64
where
    L: Fn(&DataPoint) -> f64,
{
    sample
        .items
        .items()
        .iter()
        .map(|p| p.weight() * loss(p.point()))
        .sum()
}
