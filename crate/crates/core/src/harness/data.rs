//! Data ingestion, preprocessing and synthetic data.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::privacy::DataPoint;
use crate::sampler::DataStats;

pub const DEFAULT_TRIM: f64 = 0.025;
pub const SYNTHETIC_STREAM: u64 = 3;

/// Reads headerless comma-separated rows of finite numbers.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<DataPoint>> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_csv(file)
}

/// Rows and columns in errors are 1-based.
pub fn parse_csv<R: Read>(reader: R) -> Result<Vec<DataPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points = Vec::new();
    let mut arity = None;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        let expected = *arity.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(Error::Parse {
                row,
                column: expected.min(rec.len()) + 1,
                message: format!("expected {expected} fields, found {}", rec.len()),
            });
        }
        let mut coords = Vec::with_capacity(rec.len());
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: j + 1,
                message: format!("not a number: `{field}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: j + 1,
                    message: format!("non-finite value `{field}`"),
                });
            }
            coords.push(v);
        }
        points.push(DataPoint::new(coords)?);
    }
    if points.is_empty() {
        return Err(Error::Empty("input file has no rows"));
    }
    Ok(points)
}

fn center(points: &[DataPoint]) -> Result<Vec<DataPoint>> {
    let d = points[0].dim();
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, c) in mean.iter_mut().zip(p.coords()) {
            *m += c;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    points
        .iter()
        .map(|p| DataPoint::new(p.coords().iter().zip(&mean).map(|(c, m)| c - m).collect()))
        .collect()
}

/// Center, drop the `floor(trim n)` points of largest l1 norm (among equal
/// norms the later rows go first), then center again.
pub fn preprocess(points: &[DataPoint], trim_fraction: f64) -> Result<(Vec<DataPoint>, DataStats)> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("no points to preprocess"));
    }
    if !(0.0..1.0).contains(&trim_fraction) {
        return Err(invalid("trim_fraction", format!("must lie in [0, 1), got {trim_fraction}")));
    }
    if (n as f64) * (1.0 - trim_fraction) < 1.0 {
        return Err(invalid("trim_fraction", format!("nothing left of {n} points")));
    }
    let dim = points[0].dim();
    if let Some(p) = points.iter().find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: p.dim(),
        });
    }
    let centered = center(points)?;
    let drop = (trim_fraction * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = centered.iter().map(DataPoint::l1_norm).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(b.cmp(&a)));
    let mut keep = vec![true; n];
    for &i in &order[..drop] {
        keep[i] = false;
    }
    let kept: Vec<DataPoint> = centered.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect();
    let mut out = center(&kept)?;
    let mut stats = DataStats::from_points(&out)?;
    // a further pass only matters for badly conditioned inputs
    for _ in 0..2 {
        if stats.is_centered() {
            break;
        }
        out = center(&out)?;
        stats = DataStats::from_points(&out)?;
    }
    if !stats.is_centered() {
        return Err(Error::NotCentered {
            residual: stats.center_residual,
            tolerance: crate::sampler::CENTERING_TOL * stats.mean_l1,
        });
    }
    Ok((out, stats))
}

/// A mixture of `k_true` equally weighted spherical Gaussians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub k_true: usize,
    pub spread: f64,
}

impl std::str::FromStr for SyntheticSpec {
    type Err = Error;

    /// `n,d,k,spread`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(invalid("synthetic", format!("expected n,d,k,spread, got `{s}`")));
        }
        let int = |i: usize, name: &'static str| {
            parts[i]
                .parse::<usize>()
                .map_err(|_| invalid(name, format!("not a non-negative integer: `{}`", parts[i])))
        };
        let spread = parts[3]
            .parse::<f64>()
            .map_err(|_| invalid("spread", format!("not a number: `{}`", parts[3])))?;
        Ok(Self {
            n: int(0, "n")?,
            d: int(1, "d")?,
            k_true: int(2, "k_true")?,
            spread,
        })
    }
}

/// Component centers are uniform in `[-1, 1]^d`, each point picks a component
/// uniformly and adds `spread * N(0, I)`. The result is scaled so that the
/// radius after [`preprocess`] with the default trim is one (unless the data
/// is a single repeated point).
pub fn make_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Vec<DataPoint>> {
    if spec.k_true == 0 || spec.n == 0 || spec.d == 0 {
        return Err(invalid("synthetic", "n, d and k_true must be positive"));
    }
    if !(spec.spread >= 0.0) || !spec.spread.is_finite() {
        return Err(invalid("spread", format!("must be non-negative, got {}", spec.spread)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SYNTHETIC_STREAM);
    let centers: Vec<Vec<f64>> = (0..spec.k_true)
        .map(|_| (0..spec.d).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    let raw: Vec<Vec<f64>> = (0..spec.n)
        .map(|_| {
            let c = &centers[rng.random_range(0..spec.k_true)];
            c.iter()
                .map(|&m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + spec.spread * z
                })
                .collect()
        })
        .collect();
    let points = raw.iter().map(|p| DataPoint::new(p.clone())).collect::<Result<Vec<_>>>()?;
    if spec.n as f64 * (1.0 - DEFAULT_TRIM) < 1.0 {
        return Ok(points);
    }
    let (_, stats) = preprocess(&points, DEFAULT_TRIM)?;
    let raw_scale = points.iter().map(DataPoint::l1_norm).fold(0.0, f64::max);
    if !(stats.radius > 1e-12 * raw_scale) {
        return Ok(points);
    }
    let scale = 1.0 / stats.radius;
    raw.into_iter()
        .map(|p| DataPoint::new(p.into_iter().map(|v| v * scale).collect()))
        .collect()
}
