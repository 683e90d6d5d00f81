//! Weighted DP-Lloyd k-means and its privacy accounting.
//!
//! Every iteration assigns each weighted point to its nearest center (squared
//! Euclidean distance, lowest index on ties) and then moves center `j` to
//!
//! ```text
//! c_j = (zeta_j + sum_{(w, x) in C_j} w x) / (xi_j + sum_{(w, x) in C_j} w)
//! ```
//!
//! with `xi_j ~ Lap(0, beta_count)` and the `d` entries of `zeta_j` iid
//! `Lap(0, beta_sum)`. A center whose noisy weight is at most `1e-12` stays
//! where it is for that iteration.
//!
//! # Noise layout
//!
//! Noise comes from ChaCha8 stream [`NOISE_STREAM`] keyed by the run seed and
//! is consumed in the fixed order `(iteration, cluster, [count, sum_0 .. sum_{d-1}])`,
//! one `u64` per variate, whether or not a cluster is empty. A variate is
//! produced from `u ~ Open01` as
//!
//! ```text
//! Lap(0, b) = -b * signum(u - 1/2) * ln(1 - 2 |u - 1/2|)
//! ```

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::amplify_log;
use crate::privacy::{DataPoint, WeightedDataset, WeightedProfile};

pub const NOISE_STREAM: u64 = 1;
pub const INIT_STREAM: u64 = 2;

/// Noise allocation constant for splitting the budget between the count and
/// sum queries.
pub const DEFAULT_RHO: f64 = 0.225;

/// Noisy weights at or below this leave the center unchanged.
const MIN_DENOMINATOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LloydConfig {
    pub k: usize,
    pub iterations: usize,
    pub beta_sum: f64,
    pub beta_count: f64,
    /// l1 radius of the data domain.
    pub radius: f64,
    pub rho: f64,
}

impl LloydConfig {
    pub fn new(k: usize, iterations: usize, beta_sum: f64, beta_count: f64, radius: f64) -> Result<Self> {
        let cfg = Self {
            k,
            iterations,
            beta_sum,
            beta_count,
            radius,
            rho: DEFAULT_RHO,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Scales from the allocation constant `budget` (larger means less noise).
    pub fn from_budget(k: usize, iterations: usize, budget: f64, radius: f64, dim: usize, rho: f64) -> Result<Self> {
        let (beta_sum, beta_count) = allocate_noise(budget, iterations, radius, dim, rho)?;
        let cfg = Self {
            k,
            iterations,
            beta_sum,
            beta_count,
            radius,
            rho,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k", "must be positive"));
        }
        if self.iterations == 0 {
            return Err(invalid("iterations", "must be positive"));
        }
        for (name, v) in [
            ("beta_sum", self.beta_sum),
            ("beta_count", self.beta_count),
            ("radius", self.radius),
            ("rho", self.rho),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Privacy level of DP-Lloyd on the full data with unit weights:
    /// `(r / beta_sum + 1 / beta_count) T`.
    pub fn full_data_epsilon(&self) -> f64 {
        (1.0 / self.beta_count + self.radius / self.beta_sum) * self.iterations as f64
    }
}

/// `beta_sum = sqrt(T r / B) cbrt(d / (2 rho))`, `beta_count = cbrt(4 d rho^2) beta_sum`.
pub fn allocate_noise(budget: f64, iterations: usize, radius: f64, dim: usize, rho: f64) -> Result<(f64, f64)> {
    for (name, v) in [("budget", budget), ("radius", radius), ("rho", rho)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(invalid(name, format!("must be positive and finite, got {v}")));
        }
    }
    if iterations == 0 || dim == 0 {
        return Err(invalid("iterations/dim", "must be positive"));
    }
    let t = iterations as f64;
    let d = dim as f64;
    let beta_sum = (t * radius / budget).sqrt() * (d / (2.0 * rho)).cbrt();
    let beta_count = (4.0 * d * rho * rho).cbrt() * beta_sum;
    Ok((beta_sum, beta_count))
}

/// Cluster centers, `k` vectors of a common dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centers {
    points: Vec<Vec<f64>>,
}

impl Centers {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().ok_or(Error::Empty("no centers"))?.len();
        if dim == 0 {
            return Err(invalid("centers", "zero-dimensional center"));
        }
        for c in &points {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(invalid("centers", "non-finite coordinate"));
            }
        }
        Ok(Self { points })
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Index and squared distance of the nearest center.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (j, c) in self.points.iter().enumerate() {
            let d = squared_distance(x, c);
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn assign(data: &WeightedDataset, centers: &Centers) -> ClusterAssignment {
    ClusterAssignment {
        labels: data.items().iter().map(|p| centers.nearest(p.point()).0).collect(),
    }
}

/// Source of the per-iteration noise; see the module docs for the order in
/// which variates are requested.
pub trait NoiseSource {
    fn count_noise(&mut self) -> f64;
    fn sum_noise(&mut self) -> f64;
}

/// No noise at all: the update is plain (weighted) Lloyd.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn count_noise(&mut self) -> f64 {
        0.0
    }
    fn sum_noise(&mut self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct LaplaceNoise {
    rng: ChaCha8Rng,
    beta_sum: f64,
    beta_count: f64,
}

impl LaplaceNoise {
    pub fn new(seed: u64, beta_sum: f64, beta_count: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(NOISE_STREAM);
        Self {
            rng,
            beta_sum,
            beta_count,
        }
    }
}

impl NoiseSource for LaplaceNoise {
    fn count_noise(&mut self) -> f64 {
        sample_laplace(&mut self.rng, self.beta_count)
    }
    fn sum_noise(&mut self) -> f64 {
        sample_laplace(&mut self.rng, self.beta_sum)
    }
}

/// Inverse-CDF transform of `u in (0, 1)` to `Lap(0, scale)`.
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    let centered = u - 0.5;
    -scale * centered.signum() * (1.0 - 2.0 * centered.abs()).ln()
}

pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    laplace_from_uniform(u, scale)
}

/// `k` distinct items of `data`, chosen uniformly with the run seed.
pub fn init_centers(data: &WeightedDataset, k: usize, seed: u64) -> Result<Centers> {
    if k == 0 {
        return Err(invalid("k", "must be positive"));
    }
    if k > data.len() {
        return Err(invalid("k", format!("{k} centers requested from {} items", data.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let picks = rand::seq::index::sample(&mut rng, data.len(), k);
    Centers::new(picks.iter().map(|i| data.items()[i].point().coords().to_vec()).collect())
}

/// `k` centers with coordinates uniform in `[-r/d, r/d]`, so inside the l1
/// ball of radius `r`. Independent of the data, hence free in privacy terms.
pub fn random_centers(k: usize, dim: usize, radius: f64, seed: u64) -> Result<Centers> {
    if k == 0 || dim == 0 {
        return Err(invalid("k/dim", "must be positive"));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(invalid("radius", format!("must be positive, got {radius}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let half = radius / dim as f64;
    Centers::new(
        (0..k)
            .map(|_| (0..dim).map(|_| rng.random_range(-half..=half)).collect())
            .collect(),
    )
}

/// Runs `iterations` noisy weighted Lloyd updates from `init`.
pub fn weighted_lloyd<N: NoiseSource + ?Sized>(
    data: &WeightedDataset,
    init: &Centers,
    iterations: usize,
    noise: &mut N,
) -> Result<Centers> {
    if data.dimension() != init.dim() {
        return Err(Error::DimensionMismatch {
            expected: init.dim(),
            found: data.dimension(),
        });
    }
    let k = init.k();
    let d = init.dim();
    let mut centers = init.points.clone();
    let mut sums = vec![vec![0.0; d]; k];
    let mut weights = vec![0.0; k];

    for _ in 0..iterations {
        let current = Centers { points: centers };
        sums.iter_mut().for_each(|s| s.iter_mut().for_each(|v| *v = 0.0));
        weights.iter_mut().for_each(|w| *w = 0.0);
        for item in data.items() {
            let (j, _) = current.nearest(item.point());
            let w = item.weight();
            weights[j] += w;
            for (s, x) in sums[j].iter_mut().zip(item.point().coords()) {
                *s += w * x;
            }
        }
        centers = current.points;
        for j in 0..k {
            let xi = noise.count_noise();
            let zeta: Vec<f64> = (0..d).map(|_| noise.sum_noise()).collect();
            let denom = xi + weights[j];
            if denom <= MIN_DENOMINATOR {
                continue;
            }
            for ((c, s), z) in centers[j].iter_mut().zip(&sums[j]).zip(&zeta) {
                *c = (z + s) / denom;
            }
        }
    }
    Centers::new(centers)
}

/// Weighted DP-Lloyd with Laplace noise drawn from `seed`.
pub fn weighted_dp_lloyd(data: &WeightedDataset, init: &Centers, cfg: &LloydConfig, seed: u64) -> Result<Centers> {
    cfg.validate()?;
    if init.k() != cfg.k {
        return Err(invalid("init", format!("expected {} centers, got {}", cfg.k, init.k())));
    }
    if let Some(p) = data.items().iter().find(|p| p.point().l1_norm() > cfg.radius * (1.0 + 1e-12)) {
        return Err(invalid(
            "data",
            format!("point with l1 norm {} outside the radius {}", p.point().l1_norm(), cfg.radius),
        ));
    }
    let mut noise = LaplaceNoise::new(seed, cfg.beta_sum, cfg.beta_count);
    weighted_lloyd(data, init, cfg.iterations, &mut noise)
}

/// `eps(w, x) = (1 / beta_count + |x|_1 / beta_sum) T w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydProfile {
    beta_sum: f64,
    beta_count: f64,
    iterations: f64,
}

pub fn lloyd_profile(cfg: &LloydConfig) -> LloydProfile {
    LloydProfile {
        beta_sum: cfg.beta_sum,
        beta_count: cfg.beta_count,
        iterations: cfg.iterations as f64,
    }
}

impl LloydProfile {
    /// `(1 / beta_count + |x|_1 / beta_sum) T`, the level per unit weight.
    pub fn slope(&self, l1_norm: f64) -> f64 {
        (1.0 / self.beta_count + l1_norm / self.beta_sum) * self.iterations
    }
}

impl WeightedProfile for LloydProfile {
    fn eval(&self, w: f64, x: &DataPoint) -> f64 {
        self.slope(x.l1_norm()) * w
    }

    fn deriv(&self, _w: f64, x: &DataPoint) -> f64 {
        self.slope(x.l1_norm())
    }

    fn strong_convexity(&self, x: &DataPoint) -> f64 {
        let s = self.slope(x.l1_norm());
        s * s * s.exp()
    }
}

/// `(a T)^2 exp(a T)` with `a = 1 / beta_count + |x|_1 / beta_sum`: the minimum
/// over `w >= 1` of the second derivative of `exp(eps_Lloyd(w, x))`.
pub fn lloyd_strong_convexity(cfg: &LloydConfig, x: &DataPoint) -> f64 {
    lloyd_profile(cfg).strong_convexity(x)
}

/// Inputs of the coreset-style sampler guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreSamplerStats {
    pub n: usize,
    pub m: usize,
    pub lambda: f64,
    pub mean_l1: f64,
    pub radius: f64,
}

/// `(e^{u/v} - 1) v`, returned as `log(1 + .)`.
fn log_one_plus_theta(u: f64, v: f64) -> f64 {
    amplify_log(u / v, v)
}

/// Pure-DP level of weighted DP-Lloyd run on a coreset-style sample of a
/// centered data set in the l1 ball of radius `r`:
///
/// ```text
/// log(1 + max{ th(A1, A2), th(A1', A2') }),   th(u, v) = (e^{u/v} - 1) v
/// A1  = (1/beta_count + r/beta_sum) T      A2  = m/n (lambda + (1 - lambda) r / x~)
/// A1' = T / beta_count                    A2' = lambda m / n
/// ```
///
/// With `lambda = 0` and a positive count sensitivity the result is infinite:
/// points of small positive norm are selected with vanishing probability but
/// still move the noisy count by their full weight.
pub fn core_sampler_epsilon(cfg: &LloydConfig, stats: &CoreSamplerStats) -> Result<f64> {
    cfg.validate()?;
    let CoreSamplerStats {
        n,
        m,
        lambda,
        mean_l1,
        radius,
    } = *stats;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid("lambda", format!("must lie in [0, 1], got {lambda}")));
    }
    if m == 0 || m > n {
        return Err(invalid("m", format!("need 1 <= m <= n, got m = {m}, n = {n}")));
    }
    let (nf, mf) = (n as f64, m as f64);
    let a2 = if lambda == 1.0 {
        mf / nf
    } else {
        if !(mean_l1 > 0.0) || !(radius >= mean_l1) {
            return Err(invalid("mean_l1", format!("need 0 < x~ <= r, got x~ = {mean_l1}, r = {radius}")));
        }
        if mf > nf * mean_l1 / radius * (1.0 + 1e-12) {
            return Err(invalid("m", format!("{m} exceeds n x~ / r = {}", nf * mean_l1 / radius)));
        }
        mf / nf * (lambda + (1.0 - lambda) * radius / mean_l1)
    };
    let a2 = a2.min(1.0);
    let t = cfg.iterations as f64;
    let a1 = (1.0 / cfg.beta_count + radius / cfg.beta_sum) * t;
    let mut eps = log_one_plus_theta(a1, a2);
    let a2_zero = lambda * mf / nf;
    if a2_zero > 0.0 {
        eps = eps.max(log_one_plus_theta(t / cfg.beta_count, a2_zero));
    } else {
        eps = f64::INFINITY;
    }
    Ok(eps)
}

/// `sum_i min_j |x_i - c_j|^2`.
pub fn kmeans_cost(data: &[DataPoint], centers: &Centers) -> Result<f64> {
    let mut total = 0.0;
    for x in data {
        if x.dim() != centers.dim() {
            return Err(Error::DimensionMismatch {
                expected: centers.dim(),
                found: x.dim(),
            });
        }
        total += centers.nearest(x).1;
    }
    Ok(total)
}
