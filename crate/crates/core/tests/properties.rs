use proptest::prelude::*;

use proactive_core::demand::{entropy, sample_outcome, zipf_profile};
use proactive_core::eval::{expected_cycle_cost, nonproactive_cost};
use proactive_core::recommend::{solve_rating, PreferenceMapping, RatingVector};
use proactive_core::shaping::project_simplex_slice;
use proactive_core::{
    ConditionalProfile, CostModel, Cube, DemandProfile, EvalConfig, Instance, ItemCatalog, ProactiveAllocation,
};

fn weights(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len)
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Random instance with `users x slots x items` drawn small enough to enumerate.
fn instance() -> impl Strategy<Value = Instance> {
    (1usize..=3, 2usize..=3, 1usize..=3)
        .prop_flat_map(|(n, t, m)| {
            (
                prop::collection::vec(0.5f64..3.0, m),
                prop::collection::vec((0.0f64..1.0, weights(m..=m)), n * t),
                Just((n, t, m)),
            )
        })
        .prop_map(|(sizes, rows, (n, t, m))| {
            let mut probs = Cube::zeros(n, t, m);
            for (k, (activity, w)) in rows.iter().enumerate() {
                for (j, p) in normalized(w).iter().enumerate() {
                    probs.set(k / t, k % t, j, activity * p);
                }
            }
            Instance::new(
                ItemCatalog::new(sizes).unwrap(),
                DemandProfile::from_probs(probs).unwrap(),
                CostModel::quadratic(),
            )
            .unwrap()
        })
}

fn allocation(inst: &Instance, fractions: &[f64]) -> ProactiveAllocation {
    let (n, t, m) = inst.profile.probs().dims();
    let mut k = 0;
    let x = Cube::from_fn(n, t, m, |_, _, item| {
        let v = fractions[k % fractions.len()] * inst.catalog.size(item);
        k += 1;
        v
    });
    ProactiveAllocation::new(&inst.catalog, x).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entropy_is_permutation_invariant_and_bounded(w in weights(1..=8), rot in 0usize..8) {
        let pi = normalized(&w);
        let mut shifted = pi.clone();
        shifted.rotate_left(rot % pi.len());
        let h = entropy(&ConditionalProfile::new(pi.clone()).unwrap());
        let hs = entropy(&ConditionalProfile::new(shifted).unwrap());
        prop_assert!((h - hs).abs() < 1e-12);
        prop_assert!(h >= -1e-15 && h <= (pi.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn zipf_sums_to_activity_and_decreases(items in 1usize..60, power in 0.1f64..6.0, activity in 0.0f64..=1.0) {
        let p = zipf_profile(items, power, activity).unwrap();
        prop_assert!((p.iter().sum::<f64>() - activity).abs() < 1e-12);
        prop_assert!(p.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn sampled_frequencies_match_probabilities(w in weights(1..=4), activity in 0.0f64..=1.0, seed in any::<u64>()) {
        let row: Vec<f64> = normalized(&w).iter().map(|p| activity * p).collect();
        let m = row.len();
        let profile = DemandProfile::homogeneous(1, &[row.clone()]).unwrap();
        let samples = 4000u64;
        let mut counts = vec![0u64; m + 1];
        for s in 0..samples {
            counts[sample_outcome(&profile, 0, seed, s).choice[0]] += 1;
        }
        let mut probs = vec![1.0 - activity];
        probs.extend(&row);
        for (c, p) in counts.iter().zip(&probs) {
            let sd = (p * (1.0 - p) / samples as f64).sqrt();
            let freq = *c as f64 / samples as f64;
            prop_assert!((freq - p).abs() <= 5.0 * sd + 1e-12, "freq {} p {}", freq, p);
        }
    }

    #[test]
    fn costs_are_midpoint_convex(a in 0.0f64..9.0, b in 0.0f64..9.0, kind in 0usize..3) {
        let c = match kind {
            0 => CostModel::quadratic(),
            1 => CostModel::outage(9.8).unwrap(),
            _ => CostModel::polynomial(vec![0.0, 1.0, 0.3, 0.05]).unwrap(),
        };
        let mid = c.cost(0.5 * (a + b)).unwrap();
        prop_assert!(mid <= 0.5 * (c.cost(a).unwrap() + c.cost(b).unwrap()) + 1e-12);
        prop_assert!(c.marginal(a.min(b)).unwrap() <= c.marginal(a.max(b)).unwrap() + 1e-12);
    }

    #[test]
    fn ratings_round_trip(w in weights(2..=6), r in prop::collection::vec(0.0f64..=1.0, 6), q in 0.0f64..0.95) {
        let pi = normalized(&w);
        let target: Vec<f64> = pi.iter().map(|p| (1.0 - q) * p).collect();
        let original = RatingVector::new(r[..pi.len()].to_vec()).unwrap();
        let sol = solve_rating(&target, q, &original, PreferenceMapping::LinearFractional).unwrap();
        prop_assert!(sol.ratings.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let mapped = PreferenceMapping::LinearFractional.apply(&sol.ratings, q).unwrap();
        for (a, b) in mapped.iter().zip(&target) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn slice_projection_is_feasible_and_idempotent(y in prop::collection::vec(-2.0f64..2.0, 1..8), mass in 0.0f64..=1.0) {
        let p = project_simplex_slice(&y, mass);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - mass).abs() < 1e-12);
        let again = project_simplex_slice(&p, mass);
        for (a, b) in p.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_matches_enumeration(inst in instance(), fr in prop::collection::vec(0.0f64..=1.0, 1..10)) {
        let alloc = allocation(&inst, &fr);
        let exact = expected_cycle_cost(&inst, &alloc, &EvalConfig::enumerate()).unwrap().value();
        let closed = expected_cycle_cost(&inst, &alloc, &EvalConfig::analytic()).unwrap().value();
        prop_assert!((exact - closed).abs() <= 1e-9 * (1.0 + exact));
    }

    #[test]
    fn cycle_cost_is_convex_in_allocation(
        inst in instance(),
        a in prop::collection::vec(0.0f64..=1.0, 1..10),
        b in prop::collection::vec(0.0f64..=1.0, 1..10),
    ) {
        let (xa, xb) = (allocation(&inst, &a), allocation(&inst, &b));
        let mid: Vec<f64> = xa.cube().as_slice().iter().zip(xb.cube().as_slice()).map(|(u, v)| 0.5 * (u + v)).collect();
        let (n, t, m) = inst.profile.probs().dims();
        let xm = ProactiveAllocation::new(&inst.catalog, Cube::from_vec(n, t, m, mid).unwrap()).unwrap();
        let cfg = EvalConfig::enumerate();
        let f = |x: &ProactiveAllocation| expected_cycle_cost(&inst, x, &cfg).unwrap().value();
        prop_assert!(f(&xm) <= 0.5 * (f(&xa) + f(&xb)) + 1e-10);
    }

    #[test]
    fn zero_allocation_is_the_baseline(inst in instance()) {
        let cfg = EvalConfig::enumerate();
        let zero = ProactiveAllocation::zeros_for(&inst);
        let a = expected_cycle_cost(&inst, &zero, &cfg).unwrap().value();
        let b = nonproactive_cost(&inst, &cfg).unwrap().value();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
    }
}
