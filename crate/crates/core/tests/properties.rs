use proptest::prelude::*;

use pais::harness::{preprocess, quantile};
use pais::kmeans::{lloyd_profile, weighted_lloyd, Centers, LloydConfig, ZeroNoise};
use pais::numeric::amplify_log;
use pais::optimal::{evaluation_bound, solve_point, SolverConfig};
use pais::sampler::{draw, make_coreset, make_uniform, DataStats};
use pais::{DataPoint, WeightedDataset, WeightedPoint, WeightedProfile};

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim)
}

fn lloyd(t: usize, bs: f64, bc: f64, r: f64) -> LloydConfig {
    LloydConfig::new(2, t, bs, bc, r).unwrap()
}

fn psi(profile: &impl WeightedProfile, x: &DataPoint, w: f64) -> f64 {
    amplify_log(profile.eval(w, x), 1.0 / w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lloyd_psi_decreases_then_increases(
        t in 1usize..10, bs in 0.5f64..100.0, bc in 0.5f64..100.0, c in point(3),
    ) {
        let cfg = LloydConfig::new(2, t, bs, bc, 3.0).unwrap();
        let p = lloyd_profile(&cfg);
        let x = DataPoint::new(c).unwrap();
        // convex in w, so along a grid the increments change sign at most once
        let vals: Vec<f64> = (0..200).map(|i| psi(&p, &x, 1.0 + i as f64 * 0.25)).collect();
        let signs: Vec<bool> = vals.windows(2).map(|v| v[1] - v[0] > 1e-12).collect();
        let flips = signs.windows(2).filter(|s| s[0] && !s[1]).count();
        prop_assert_eq!(flips, 0);
    }

    #[test]
    fn solved_weight_meets_target(
        t in 1usize..10, bs in 0.5f64..100.0, bc in 0.5f64..100.0,
        c in point(2), scale in 0.0f64..1.0, extra in 0.0f64..2.0,
    ) {
        let cfg = lloyd(t, bs, bc, 2.0);
        let p = lloyd_profile(&cfg);
        let x = DataPoint::new(c.iter().map(|v| v * scale).collect()).unwrap();
        let eps_star = p.eval(1.0, &x) + extra;
        let sol = solve_point(&p, &x, &SolverConfig::new(eps_star).unwrap()).unwrap();
        prop_assert!(sol.weight >= 1.0);
        prop_assert!(psi(&p, &x, sol.weight) <= eps_star + 1e-7);
    }

    #[test]
    fn evaluation_bound_is_monotone_in_accuracy(
        t in 1usize..10, bs in 0.5f64..100.0, bc in 0.5f64..100.0, c in point(2), extra in 0.01f64..3.0,
    ) {
        let p = lloyd_profile(&lloyd(t, bs, bc, 2.0));
        let x = DataPoint::new(c).unwrap();
        let eps_star = p.eval(1.0, &x) + extra;
        let coarse = SolverConfig::new(eps_star).unwrap().with_accuracy(1e-3).unwrap();
        let fine = SolverConfig::new(eps_star).unwrap().with_accuracy(1e-9).unwrap();
        if let (Some(a), Some(b)) = (evaluation_bound(&p, &x, &coarse), evaluation_bound(&p, &x, &fine)) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn draws_are_deterministic(seed in any::<u64>(), m in 1usize..50) {
        let data: Vec<DataPoint> = (0..50).map(|i| DataPoint::new(vec![i as f64]).unwrap()).collect();
        let spec = make_uniform(50, m).unwrap();
        let a = draw(&spec, &data, seed).unwrap();
        let b = draw(&spec, &data, seed).unwrap();
        prop_assert_eq!(a.indices, b.indices);
        prop_assert_eq!(a.realized_size, b.realized_size);
    }

    #[test]
    fn coreset_probabilities_stay_in_unit_interval(
        raw in prop::collection::vec(point(2), 20..60), lambda in 0.0f64..=1.0,
    ) {
        let pts: Vec<DataPoint> = raw.into_iter().map(|c| DataPoint::new(c).unwrap()).collect();
        let (data, stats) = preprocess(&pts, 0.0).unwrap();
        prop_assume!(stats.radius > 1e-9);
        let cap = (stats.n as f64 * stats.mean_l1 / stats.radius).floor() as usize;
        prop_assume!(cap >= 1);
        let spec = make_coreset(&stats, cap, lambda).unwrap();
        let mut total = 0.0;
        for (i, x) in data.iter().enumerate() {
            let q = spec.prob(i, x).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&q));
            total += q;
        }
        prop_assert!((total - cap as f64).abs() <= 1e-9 * cap as f64);
    }

    #[test]
    fn preprocess_centers(raw in prop::collection::vec(point(3), 10..80), trim in 0.0f64..0.2) {
        let pts: Vec<DataPoint> = raw.into_iter().map(|c| DataPoint::new(c).unwrap()).collect();
        let (data, stats): (Vec<DataPoint>, DataStats) = preprocess(&pts, trim).unwrap();
        prop_assert_eq!(data.len(), stats.n);
        for j in 0..3 {
            let s: f64 = data.iter().map(|p| p.coords()[j]).sum();
            prop_assert!(s.abs() <= 1e-9);
        }
        prop_assert!(data.iter().all(|p| p.l1_norm() <= stats.radius));
    }

    #[test]
    fn quantile_within_range(mut v in prop::collection::vec(-1e3f64..1e3, 1..40), p in 0.0f64..=1.0) {
        v.sort_by(f64::total_cmp);
        let q = quantile(&v, p);
        prop_assert!(q >= v[0] && q <= v[v.len() - 1]);
        prop_assert!(quantile(&v, 0.0) == v[0] && quantile(&v, 1.0) == v[v.len() - 1]);
    }

    #[test]
    fn lloyd_ignores_power_of_two_weight_scaling(
        raw in prop::collection::vec(point(2), 8..40), shift in 0i32..6,
    ) {
        let c = 2f64.powi(shift);
        let pts: Vec<DataPoint> = raw.into_iter().map(|v| DataPoint::new(v).unwrap()).collect();
        let init = Centers::new(pts[..3].iter().map(|p| p.coords().to_vec()).collect()).unwrap();
        let plain = WeightedDataset::unit(&pts).unwrap();
        let scaled = WeightedDataset::new(
            2,
            pts.iter().map(|p| WeightedPoint::new(c, p.clone()).unwrap()).collect(),
        ).unwrap();
        let a = weighted_lloyd(&plain, &init, 4, &mut ZeroNoise).unwrap();
        let b = weighted_lloyd(&scaled, &init, 4, &mut ZeroNoise).unwrap();
        prop_assert_eq!(a.points(), b.points());
    }
}
