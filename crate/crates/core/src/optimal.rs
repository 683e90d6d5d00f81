//! Privacy-optimal importance weights.
//!
//! For a target level `eps_star`, each point gets the largest weight `w >= 1`
//! (smallest selection probability `1/w`) whose amplified level stays within
//! the target:
//!
//! ```text
//! log(1 + (exp(eps(w, x)) - 1) / w) <= eps_star
//! ```
//!
//! The problem separates over points. With `exp(eps(., x))` strongly convex the
//! feasible set is an interval `[1, w*]` and `w*` is found by bisection on
//!
//! ```text
//! g(w) = (exp(eps(w, x)) - 1) / w - (exp(eps_star) - 1)
//! ```
//!
//! inside a bracket derived from the strong-convexity constant. Signs of `g`
//! are evaluated in log space so large levels do not overflow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::amplify_log;
use crate::privacy::{DataPoint, WeightedProfile};

/// Relative tolerance under which `eps(1, x)` counts as equal to the target.
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub target_epsilon: f64,
    /// Final bracket width on `w`.
    pub accuracy: f64,
    pub max_evals_per_point: usize,
}

impl SolverConfig {
    pub fn new(target_epsilon: f64) -> Result<Self> {
        let cfg = Self {
            target_epsilon,
            accuracy: 1e-9,
            max_evals_per_point: 200,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_accuracy(mut self, accuracy: f64) -> Result<Self> {
        self.accuracy = accuracy;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_epsilon > 0.0) || !self.target_epsilon.is_finite() {
            return Err(invalid("target_epsilon", format!("must be positive, got {}", self.target_epsilon)));
        }
        if !(self.accuracy > 0.0) {
            return Err(invalid("accuracy", format!("must be positive, got {}", self.accuracy)));
        }
        if self.max_evals_per_point == 0 {
            return Err(invalid("max_evals_per_point", "must be positive"));
        }
        Ok(())
    }
}

/// Result of solving a single point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSolution {
    pub weight: f64,
    /// Evaluations of `eps(w, x)` made while bisecting.
    pub evals: usize,
    /// Bracket setup: `eps(1, x)` and `eps'(1, x)`.
    pub setup_evals: usize,
    /// Whether the privacy constraint is active at `weight`.
    pub binding: bool,
    /// `psi - eps_star` at the returned weight; never positive.
    pub residual: f64,
    /// Upper bound on `|residual|` from the final bracket, when the upper end
    /// was evaluated. This is the constraint-side accuracy implied by the
    /// width-`accuracy` bracket on `w`.
    pub residual_bound: Option<f64>,
    /// Upper end of the initial bracket.
    pub bracket: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightSolution {
    pub weights: Vec<f64>,
    pub eval_counts: Vec<usize>,
    pub setup_counts: Vec<usize>,
    pub binding: Vec<bool>,
}

impl WeightSolution {
    /// Expected sample size of the induced Poisson sampler, `sum 1/w_i`.
    pub fn expected_size(&self) -> f64 {
        self.weights.iter().map(|w| 1.0 / w).sum()
    }
}

/// Amplified level at weight `w` minus the target. Has the sign of `g(w)`.
pub fn privacy_excess<P: WeightedProfile + ?Sized>(
    profile: &P,
    x: &DataPoint,
    eps_star: f64,
    w: f64,
) -> f64 {
    let eps = profile.eval(w, x);
    if eps.is_nan() {
        return f64::NAN;
    }
    if eps == f64::INFINITY {
        return f64::INFINITY;
    }
    amplify_log(eps, 1.0 / w) - eps_star
}

/// `eps_star >= eps(1, x)`: weight one is feasible.
pub fn check_feasible<P: WeightedProfile + ?Sized>(profile: &P, x: &DataPoint, eps_star: f64) -> bool {
    profile.eval(1.0, x) <= eps_star
}

/// Quantities the bracket is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketParts {
    pub eps_at_one: f64,
    pub slope_at_one: f64,
    pub mu: f64,
    /// `min(e^{eps(1,x)} + mu/2, eps'(1,x) e^{eps(1,x)} + 1)`
    pub v_bar: f64,
    /// Unclamped upper end.
    pub upper: f64,
}

impl BracketParts {
    fn compute<P: WeightedProfile + ?Sized>(profile: &P, x: &DataPoint, eps_star: f64) -> Result<Self> {
        let eps_at_one = profile.eval(1.0, x);
        let slope_at_one = profile.deriv(1.0, x);
        let mu = profile.strong_convexity(x);
        if !(mu > 0.0) {
            return Err(Error::DegenerateConvexity(mu));
        }
        let e1 = eps_at_one.exp();
        let v_bar = (e1 + mu / 2.0).min(slope_at_one * e1 + 1.0);
        // Strong convexity at w = 1 makes every w >= 2 (e^eps* - v_bar) / mu + 2
        // infeasible.
        let upper = 2.0 * (eps_star.exp() - v_bar) / mu + 2.0;
        if !upper.is_finite() {
            return Err(Error::NonFinite("computing the upper bracket"));
        }
        Ok(Self {
            eps_at_one,
            slope_at_one,
            mu,
            v_bar,
            upper,
        })
    }
}

/// Upper end `b >= 1` of the search bracket: every `w > b` violates the
/// constraint. Values below one are clamped to one.
pub fn bracket_upper<P: WeightedProfile + ?Sized>(profile: &P, x: &DataPoint, eps_star: f64) -> Result<f64> {
    Ok(BracketParts::compute(profile, x, eps_star)?.upper.max(1.0))
}

/// `ceil(log2(ceil((e^eps* - v_bar) / (alpha mu))))`, the bisection evaluation
/// count predicted from the bracket parameters.
///
/// `None` when `v_bar >= e^eps*`, where the logarithm is undefined even though
/// the root can lie well above one.
pub fn evaluation_bound<P: WeightedProfile + ?Sized>(profile: &P, x: &DataPoint, cfg: &SolverConfig) -> Option<u32> {
    let parts = BracketParts::compute(profile, x, cfg.target_epsilon).ok()?;
    let ratio = (cfg.target_epsilon.exp() - parts.v_bar) / (cfg.accuracy * parts.mu);
    if !(ratio > 0.0) || !ratio.is_finite() {
        return None;
    }
    Some(ratio.ceil().log2().ceil() as u32)
}

/// Largest feasible weight for one point, to within `cfg.accuracy`.
///
/// The bisection keeps a feasible lower end and returns it, so the returned
/// weight never violates the constraint.
pub fn solve_point<P: WeightedProfile + ?Sized>(
    profile: &P,
    x: &DataPoint,
    cfg: &SolverConfig,
) -> Result<PointSolution> {
    cfg.validate()?;
    let eps_star = cfg.target_epsilon;
    let parts = BracketParts::compute(profile, x, eps_star)?;
    let eps1 = parts.eps_at_one;
    if !(eps1 <= eps_star) {
        return Err(Error::Infeasible {
            eps_at_one: eps1,
            target: eps_star,
        });
    }
    let b = parts.upper.max(1.0);
    let at_boundary = eps_star - eps1 <= BOUNDARY_TOL * eps_star.max(1.0);
    let at_one = |binding: bool, evals: usize| PointSolution {
        weight: 1.0,
        evals,
        setup_evals: 2,
        binding,
        residual: eps1 - eps_star,
        residual_bound: None,
        bracket: b,
    };

    if b <= 1.0 {
        return Ok(at_one(at_boundary, 0));
    }

    let mut evals = 0usize;
    let (mut lo, mut h_lo) = if at_boundary {
        // w = 1 is itself a root. A second root above one exists only when the
        // amplified level initially decreases in w.
        if parts.slope_at_one >= -(-eps1).exp_m1() {
            return Ok(at_one(true, 0));
        }
        let eta = cfg.accuracy.min((b - 1.0) / 4.0);
        let start = 1.0 + eta;
        let h = privacy_excess(profile, x, eps_star, start);
        evals += 1;
        if h.is_nan() {
            return Err(Error::NonFinite("evaluating the profile"));
        }
        if h > 0.0 {
            return Ok(at_one(true, evals));
        }
        (start, h)
    } else {
        (1.0, eps1 - eps_star)
    };

    let mut hi = b;
    let mut h_hi: Option<f64> = None;
    while hi - lo > cfg.accuracy {
        let mid = lo + (hi - lo) / 2.0;
        if mid <= lo || mid >= hi {
            break;
        }
        if evals >= cfg.max_evals_per_point {
            return Err(Error::EvaluationBudgetExceeded {
                limit: cfg.max_evals_per_point,
            });
        }
        let h = privacy_excess(profile, x, eps_star, mid);
        evals += 1;
        if h.is_nan() {
            return Err(Error::NonFinite("evaluating the profile"));
        }
        if h <= 0.0 {
            lo = mid;
            h_lo = h;
        } else {
            hi = mid;
            h_hi = Some(h);
        }
    }

    if h_hi.is_none() {
        // The upper end was never probed; make sure it really is infeasible.
        let h = privacy_excess(profile, x, eps_star, hi);
        evals += 1;
        if h < 0.0 {
            return Err(Error::InvalidBracket { bracket: b });
        }
        h_hi = Some(h);
    }

    Ok(PointSolution {
        weight: lo,
        evals,
        setup_evals: 2,
        binding: true,
        residual: h_lo,
        residual_bound: h_hi.map(|h| h - h_lo),
        bracket: b,
    })
}

/// Solves every point independently (in parallel) and assembles the result in
/// input order. Failures are reported together with their point indices.
pub fn solve_dataset<P: WeightedProfile + ?Sized>(
    profile: &P,
    data: &[DataPoint],
    cfg: &SolverConfig,
) -> Result<WeightSolution> {
    cfg.validate()?;
    let results: Vec<Result<PointSolution>> = data.par_iter().map(|x| solve_point(profile, x, cfg)).collect();

    let mut out = WeightSolution::default();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => {
                out.weights.push(s.weight);
                out.eval_counts.push(s.evals);
                out.setup_counts.push(s.setup_evals);
                out.binding.push(s.binding);
            }
            Err(e) => failures.push((i, e)),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(Error::PointFailures(failures))
    }
}
