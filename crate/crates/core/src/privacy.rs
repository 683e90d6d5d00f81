//! Privacy budgets, data points, distinguishability profiles and the
//! amplification calculus for Poisson (importance) subsampling.
//!
//! All privacy levels are measured in nats. A *weighted* profile `eps(w, x)`
//! bounds the indistinguishability between running a mechanism on a weighted
//! data set with and without the extra item `(w, x)`; an (unweighted)
//! [`Profile`] `psi(x)` does the same for a mechanism over plain points.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::amplify_log;

/// An `(epsilon, delta)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || epsilon.is_infinite() {
            return Err(invalid("epsilon", format!("must be finite and >= 0, got {epsilon}")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(invalid("delta", format!("must lie in [0, 1], got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    /// A pure `epsilon` budget (`delta = 0`).
    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// A point of `R^d` with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    coords: Vec<f64>,
}

impl DataPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Empty("data point has no coordinates"));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(invalid("coords", format!("non-finite coordinate {bad}")));
        }
        Ok(Self { coords })
    }

    /// Like [`DataPoint::new`], additionally enforcing `|x|_1 <= radius`.
    pub fn within_radius(coords: Vec<f64>, radius: f64) -> Result<Self> {
        let p = Self::new(coords)?;
        if p.l1_norm() > radius {
            return Err(invalid(
                "coords",
                format!("l1 norm {} exceeds the domain radius {radius}", p.l1_norm()),
            ));
        }
        Ok(p)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn l1_norm(&self) -> f64 {
        self.coords.iter().map(|c| c.abs()).sum()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

impl std::ops::Deref for DataPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.coords
    }
}

/// An importance-weighted point; the weight is the reciprocal of the point's
/// selection probability and therefore at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPoint {
    pub(crate) weight: f64,
    pub(crate) point: DataPoint,
}

impl WeightedPoint {
    pub fn new(weight: f64, point: DataPoint) -> Result<Self> {
        if !(weight >= 1.0) || weight.is_infinite() {
            return Err(invalid("weight", format!("must be finite and >= 1, got {weight}")));
        }
        Ok(Self { weight, point })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn point(&self) -> &DataPoint {
        &self.point
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDataset {
    dimension: usize,
    items: Vec<WeightedPoint>,
}

impl WeightedDataset {
    pub fn new(dimension: usize, items: Vec<WeightedPoint>) -> Result<Self> {
        if dimension == 0 {
            return Err(invalid("dimension", "must be positive"));
        }
        if let Some(p) = items.iter().find(|p| p.point.dim() != dimension) {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: p.point.dim(),
            });
        }
        Ok(Self { dimension, items })
    }

    /// Every point with weight one.
    pub fn unit(points: &[DataPoint]) -> Result<Self> {
        let dim = points.first().ok_or(Error::Empty("no points"))?.dim();
        let items = points
            .iter()
            .map(|p| WeightedPoint::new(1.0, p.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim, items)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn items(&self) -> &[WeightedPoint] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// A weighted distinguishability profile `eps(w, x)` with its derivative in
/// `w` and a strong-convexity constant of `w -> exp(eps(w, x))` on `[1, inf)`.
///
/// Implementations must be pure: the solver and sampler call them from
/// several threads.
pub trait WeightedProfile: Send + Sync {
    fn eval(&self, w: f64, x: &DataPoint) -> f64;

    /// `d eps(w, x) / dw`.
    fn deriv(&self, w: f64, x: &DataPoint) -> f64;

    /// A lower bound on the second derivative of `exp(eps(., x))` over `w >= 1`.
    fn strong_convexity(&self, x: &DataPoint) -> f64;
}

impl<P: WeightedProfile + ?Sized> WeightedProfile for &P {
    fn eval(&self, w: f64, x: &DataPoint) -> f64 {
        (**self).eval(w, x)
    }
    fn deriv(&self, w: f64, x: &DataPoint) -> f64 {
        (**self).deriv(w, x)
    }
    fn strong_convexity(&self, x: &DataPoint) -> f64 {
        (**self).strong_convexity(x)
    }
}

impl<P: WeightedProfile + ?Sized> WeightedProfile for std::sync::Arc<P> {
    fn eval(&self, w: f64, x: &DataPoint) -> f64 {
        (**self).eval(w, x)
    }
    fn deriv(&self, w: f64, x: &DataPoint) -> f64 {
        (**self).deriv(w, x)
    }
    fn strong_convexity(&self, x: &DataPoint) -> f64 {
        (**self).strong_convexity(x)
    }
}

/// A weighted profile assembled from three closures.
#[derive(Clone)]
pub struct FnProfile<E, D, M> {
    eval: E,
    deriv: D,
    mu: M,
}

impl<E, D, M> FnProfile<E, D, M>
where
    E: Fn(f64, &DataPoint) -> f64 + Send + Sync,
    D: Fn(f64, &DataPoint) -> f64 + Send + Sync,
    M: Fn(&DataPoint) -> f64 + Send + Sync,
{
    pub fn new(eval: E, deriv: D, mu: M) -> Self {
        Self { eval, deriv, mu }
    }
}

impl<E, D, M> WeightedProfile for FnProfile<E, D, M>
where
    E: Fn(f64, &DataPoint) -> f64 + Send + Sync,
    D: Fn(f64, &DataPoint) -> f64 + Send + Sync,
    M: Fn(&DataPoint) -> f64 + Send + Sync,
{
    fn eval(&self, w: f64, x: &DataPoint) -> f64 {
        (self.eval)(w, x)
    }
    fn deriv(&self, w: f64, x: &DataPoint) -> f64 {
        (self.deriv)(w, x)
    }
    fn strong_convexity(&self, x: &DataPoint) -> f64 {
        (self.mu)(x)
    }
}

/// A distinguishability profile `psi(x)` of a mechanism over plain points.
pub trait Profile {
    fn eval(&self, x: &DataPoint) -> Result<f64>;
}

impl<F> Profile for F
where
    F: Fn(&DataPoint) -> f64,
{
    fn eval(&self, x: &DataPoint) -> Result<f64> {
        Ok(self(x))
    }
}

/// Privacy amplification by Poisson subsampling with a constant inclusion
/// probability `p`.
pub fn subsample_amplify(budget: PrivacyBudget, p: f64) -> Result<PrivacyBudget> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    let epsilon = amplify_log(budget.epsilon, p).min(budget.epsilon);
    PrivacyBudget::new(epsilon, p * budget.delta)
}

/// The profile of `M o S_q`: a point selected with probability `q(x)` enters
/// the mechanism with weight `1 / q(x)`.
pub struct AmplifiedProfile<P, Q> {
    profile: P,
    q: Q,
}

/// Builds `psi(x) = log(1 + q(x) (exp(eps(1/q(x), x)) - 1))`.
///
/// Only pure-epsilon profiles are supported; there is no `delta` channel.
pub fn amplified_profile<P, Q>(profile: P, q: Q) -> AmplifiedProfile<P, Q>
where
    P: WeightedProfile,
    Q: Fn(&DataPoint) -> f64,
{
    AmplifiedProfile { profile, q }
}

impl<P, Q> AmplifiedProfile<P, Q>
where
    P: WeightedProfile,
    Q: Fn(&DataPoint) -> f64,
{
    pub fn selection_probability(&self, x: &DataPoint) -> Result<f64> {
        let q = (self.q)(x);
        if q.is_nan() || q <= 0.0 || q > 1.0 {
            return Err(Error::InvalidProbability(q));
        }
        Ok(q)
    }
}

impl<P, Q> Profile for AmplifiedProfile<P, Q>
where
    P: WeightedProfile,
    Q: Fn(&DataPoint) -> f64,
{
    fn eval(&self, x: &DataPoint) -> Result<f64> {
        let q = self.selection_probability(x)?;
        let eps = self.profile.eval(1.0 / q, x);
        if !(eps >= 0.0) {
            return Err(Error::NonFinite("evaluating the weighted profile"));
        }
        Ok(amplify_log(eps, q))
    }
}

/// Whether some selection probability below one strictly reduces the level
/// of `x` below the unsampled `eps(1, x)`.
pub fn improvement_possible<P: WeightedProfile + ?Sized>(profile: &P, x: &DataPoint) -> bool {
    let eps = profile.eval(1.0, x);
    let slope = profile.deriv(1.0, x);
    slope < -(-eps).exp_m1()
}

/// Sampled certificate that no Poisson importance sampler can push `x` below
/// its unsampled level: checks `eps(w, x) <= w eps'(w, x)` at every grid
/// point.
///
/// This is only as strong as the grid; the underlying condition quantifies
/// over all `w >= 1`. A relative slack of `1e-12` absorbs rounding in profiles
/// that meet the condition with equality.
pub fn improvement_impossible<P: WeightedProfile + ?Sized>(
    profile: &P,
    x: &DataPoint,
    w_grid: &[f64],
) -> Result<bool> {
    if w_grid.is_empty() {
        return Err(Error::Empty("weight grid"));
    }
    if let Some(w) = w_grid.iter().find(|w| !(**w >= 1.0)) {
        return Err(invalid("w_grid", format!("weights must be >= 1, got {w}")));
    }
    Ok(w_grid.iter().all(|&w| {
        let lhs = profile.eval(w, x);
        let rhs = w * profile.deriv(w, x);
        lhs <= rhs + 1e-12 * rhs.abs()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pt(c: &[f64]) -> DataPoint {
        DataPoint::new(c.to_vec()).unwrap()
    }

    fn constant(c: f64) -> impl WeightedProfile {
        FnProfile::new(move |_, _: &DataPoint| c, |_, _: &DataPoint| 0.0, |_: &DataPoint| 0.0)
    }

    fn linear(c: f64) -> impl WeightedProfile {
        FnProfile::new(
            move |w, _: &DataPoint| c * w,
            move |_, _: &DataPoint| c,
            move |_: &DataPoint| c * c * c.exp(),
        )
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(-0.1, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.5).is_err());
        assert!(PrivacyBudget::new(f64::NAN, 0.0).is_err());
        let b = PrivacyBudget::pure(2.0).unwrap();
        assert_eq!(b.delta(), 0.0);
    }

    #[test]
    fn points_and_weights_validate() {
        assert!(DataPoint::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(DataPoint::new(vec![]).is_err());
        assert!(DataPoint::within_radius(vec![0.5, -0.6], 1.0).is_err());
        assert_eq!(pt(&[0.5, -0.25]).l1_norm(), 0.75);
        assert!(WeightedPoint::new(0.9, pt(&[0.0])).is_err());
        let items = vec![
            WeightedPoint::new(1.0, pt(&[0.0, 1.0])).unwrap(),
            WeightedPoint::new(2.0, pt(&[0.0])).unwrap(),
        ];
        assert!(matches!(
            WeightedDataset::new(2, items),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn subsample_examples() {
        let b = subsample_amplify(PrivacyBudget::new(1.0, 0.0).unwrap(), 1.0).unwrap();
        assert_eq!((b.epsilon(), b.delta()), (1.0, 0.0));

        // high-precision value of log(1 + (e - 1) / 2)
        let b = subsample_amplify(PrivacyBudget::new(1.0, 0.1).unwrap(), 0.5).unwrap();
        assert_abs_diff_eq!(b.epsilon(), 0.620_114_506_958_277_5, epsilon = 1e-15);
        assert_abs_diff_eq!(b.delta(), 0.05, epsilon = 1e-17);

        let b = subsample_amplify(PrivacyBudget::pure(0.0).unwrap(), 0.3).unwrap();
        assert_eq!((b.epsilon(), b.delta()), (0.0, 0.0));

        for p in [0.0, -0.1, 1.0001, f64::NAN] {
            assert!(subsample_amplify(PrivacyBudget::pure(1.0).unwrap(), p).is_err());
        }
    }

    #[test]
    fn amplified_profile_examples() {
        let x = pt(&[0.1]);
        let psi = amplified_profile(constant(1.0), |_: &DataPoint| 0.5);
        let direct = subsample_amplify(PrivacyBudget::pure(1.0).unwrap(), 0.5).unwrap();
        assert_abs_diff_eq!(psi.eval(&x).unwrap(), direct.epsilon(), epsilon = 1e-15);

        let psi = amplified_profile(linear(0.7), |_: &DataPoint| 1.0);
        assert_eq!(psi.eval(&x).unwrap(), 0.7);

        // eps(w, x) = w |x|_1 at q = 1/4; high-precision reference value
        let l1 = FnProfile::new(
            |w, x: &DataPoint| w * x.l1_norm(),
            |_, x: &DataPoint| x.l1_norm(),
            |_: &DataPoint| 0.0,
        );
        let psi = amplified_profile(l1, |_: &DataPoint| 0.25);
        assert_abs_diff_eq!(psi.eval(&x).unwrap(), 0.115_964_649_536_482_86, epsilon = 1e-15);
    }

    #[test]
    fn amplified_profile_rejects_bad_probabilities() {
        let x = pt(&[0.0]);
        let zero = amplified_profile(constant(1.0), |_: &DataPoint| 0.0);
        assert_eq!(zero.eval(&x), Err(Error::InvalidProbability(0.0)));
        let big = amplified_profile(constant(1.0), |_: &DataPoint| 1.2);
        assert_eq!(big.eval(&x), Err(Error::InvalidProbability(1.2)));
    }

    #[test]
    fn improvement_predicates() {
        let x = pt(&[1.0]);
        assert!(improvement_possible(&constant(1.0), &x));
        assert!(!improvement_possible(&linear(0.5), &x));
        assert!(!improvement_possible(&constant(0.0), &x));

        let grid: Vec<f64> = (0..50).map(|i| 1.0 + i as f64 * 0.7).collect();
        assert!(improvement_impossible(&linear(0.37), &x, &grid).unwrap());
        let log1p = FnProfile::new(
            |w: f64, _: &DataPoint| w.ln_1p(),
            |w: f64, _: &DataPoint| 1.0 / (1.0 + w),
            |_: &DataPoint| 0.0,
        );
        assert!(!improvement_impossible(&log1p, &x, &[3.0]).unwrap());
        assert!(!improvement_impossible(&constant(0.2), &x, &grid).unwrap());
        assert!(improvement_impossible(&constant(0.2), &x, &[]).is_err());
        assert!(improvement_impossible(&constant(0.2), &x, &[0.5]).is_err());
    }

    #[test]
    fn linear_profiles_never_improve_on_full_data() {
        let x = pt(&[0.0]);
        for c in [0.1, 1.0, 3.0] {
            for i in 1..=200 {
                let q = i as f64 / 200.0;
                let psi = amplified_profile(linear(c), move |_: &DataPoint| q);
                assert!(psi.eval(&x).unwrap() >= c - 1e-12, "c={c} q={q}");
            }
        }
    }
}
