mod common;

use motforge::cost::{CostFamily, CostFunction};
use motforge::lp::LpStatus;
use motforge::measures::{convex_order_leq, wasserstein1, ConvexOrderFailure, DiscreteMeasure};
use motforge::motlp::{solve_mot, Sense};
use motforge::pipelines::random_instance;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, max_mu: usize, max_nu: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(&mut rng, max_mu, max_nu, false);
    (inst.mu, inst.nu)
}

fn family() -> impl Strategy<Value = CostFamily> {
    prop::sample::select(vec![
        CostFamily::AbsDiffNeg,
        CostFamily::AbsDiff,
        CostFamily::SmNeg,
        CostFamily::SmPos,
        CostFamily::Cubic,
        CostFamily::MirroredAbs,
    ])
}

fn sense() -> impl Strategy<Value = Sense> {
    prop_oneof![Just(Sense::Min), Just(Sense::Max)]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimal_couplings_are_feasible(seed in any::<u64>(), f in family(), s in sense()) {
        let (mu, nu) = instance(seed, 5, 7);
        let cost = CostFunction::Family(f);
        let sol = solve_mot(&mu, &nu, &cost, s).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        let (m1, m2) = sol.coupling.marginals();
        prop_assert!(wasserstein1(&m1, &mu).unwrap() <= 1e-9);
        prop_assert!(wasserstein1(&m2, &nu).unwrap() <= 1e-9);
        prop_assert!(sol.coupling.is_martingale(1e-9).holds);
        prop_assert!(close(cost.integrate(&sol.coupling).unwrap(), sol.value, 1e-9));
    }

    #[test]
    fn solves_are_deterministic(seed in any::<u64>(), f in family()) {
        let (mu, nu) = instance(seed, 5, 7);
        let cost = CostFunction::Family(f);
        let a = solve_mot(&mu, &nu, &cost, Sense::Min).unwrap();
        let b = solve_mot(&mu, &nu, &cost, Sense::Min).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn max_is_minus_min_of_negated_cost(seed in any::<u64>()) {
        let (mu, nu) = instance(seed, 4, 6);
        let hi = solve_mot(&mu, &nu, &CostFamily::SmNeg.into(), Sense::Max).unwrap();
        let lo = solve_mot(&mu, &nu, &CostFamily::SmPos.into(), Sense::Min).unwrap();
        prop_assert!(close(hi.value, -lo.value, 1e-9));
    }

    #[test]
    fn marginals_of_martingale_couplings_are_ordered(seed in any::<u64>(), shift in 0.01f64..1.0) {
        let (mu, nu) = instance(seed, 6, 8);
        prop_assert!(convex_order_leq(&mu, &nu, 1e-9).unwrap().holds);
        let shifted = convex_order_leq(&mu, &nu.shifted(shift), 1e-9).unwrap();
        prop_assert!(!shifted.holds);
        let is_mean_mismatch = matches!(shifted.failure, Some(ConvexOrderFailure::MeanMismatch { .. }));
        prop_assert!(is_mean_mismatch);
    }

    #[test]
    fn w1_is_a_metric_on_samples(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (x, _) = instance(a, 6, 6);
        let (y, _) = instance(b, 6, 6);
        let (z, _) = instance(c, 6, 6);
        let d = |p: &DiscreteMeasure, q: &DiscreteMeasure| wasserstein1(p, q).unwrap();
        prop_assert!(d(&x, &x) <= 1e-15);
        prop_assert!(close(d(&x, &y), d(&y, &x), 1e-12));
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// The simplex optimum equals the best vertex of the coupling polytope.
    #[test]
    fn value_matches_vertex_enumeration(seed in any::<u64>(), f in family(), s in sense()) {
        let (mu, nu) = instance(seed, 3, 4);
        prop_assume!(mu.len() * nu.len() <= 12);
        let cost = CostFunction::Family(f);
        let (a, b) = common::martingale_polytope(&mu, &nu);
        let verts = common::vertices(&a, &b);
        prop_assert!(!verts.is_empty());
        let c: Vec<f64> = mu
            .atoms()
            .iter()
            .flat_map(|&(x, _)| nu.atoms().iter().map(move |&(y, _)| (x, y)))
            .map(|(x, y)| cost.eval(x, y).unwrap())
            .collect();
        let values = verts.iter().map(|v| v.iter().zip(&c).map(|(q, k)| q * k).sum::<f64>());
        let best = match s {
            Sense::Min => values.fold(f64::INFINITY, f64::min),
            Sense::Max => values.fold(f64::NEG_INFINITY, f64::max),
        };
        let sol = solve_mot(&mu, &nu, &cost, s).unwrap();
        prop_assert!(close(sol.value, best, 1e-9), "simplex {} vs vertices {}", sol.value, best);
    }
}

#[test]
fn unordered_marginals_are_infeasible_with_witness() {
    let mu = DiscreteMeasure::new(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
    let nu = DiscreteMeasure::dirac(0.0);
    let sol = solve_mot(&mu, &nu, &CostFamily::AbsDiff.into(), Sense::Min).unwrap();
    assert_eq!(sol.status, LpStatus::Infeasible);
    let verdict = sol.convex_order.expect("diagnostic attached");
    assert!(!verdict.holds);
    assert!(verdict.witness.is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// No competitor on a small subset improves an optimal coupling.
    #[test]
    fn optimal_supports_are_finitely_monotone(seed in any::<u64>(), f in family()) {
        use motforge::measures::SUPPORT_THRESHOLD;
        use motforge::monotone::is_finitely_monotone;
        let (mu, nu) = instance(seed, 4, 6);
        let cost = CostFunction::Family(f);
        let sol = solve_mot(&mu, &nu, &cost, Sense::Min).unwrap();
        let support = sol.coupling.support(SUPPORT_THRESHOLD);
        let v = is_finitely_monotone(&support, &cost, 3, 20, seed).unwrap();
        prop_assert!(v.monotone, "certificate {:?}", v.certificate);
    }
}
