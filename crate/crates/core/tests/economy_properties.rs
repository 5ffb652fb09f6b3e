mod common;

use eqlearn::{demand, DemandMethod, Economy, Family, ParametricUtility, PriceVector, ThetaBox};
use proptest::prelude::*;

fn family_strategy(m: usize) -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::Linear),
        (0.1..=1.0f64).prop_map(|rho| Family::Ces { rho }),
        prop::collection::vec(0.05..0.95f64, m).prop_map(|f| Family::Amdahl { f }),
    ]
}

fn utility_strategy(m: usize) -> impl Strategy<Value = ParametricUtility> {
    (family_strategy(m), prop::collection::vec(0.01..=1.0f64, m)).prop_map(|(family, theta)| {
        ParametricUtility::new(family, theta, ThetaBox::default()).unwrap()
    })
}

fn prices_strategy(m: usize) -> impl Strategy<Value = PriceVector> {
    prop::collection::vec(0.01..1.0f64, m).prop_map(|v| PriceVector::normalized(v).unwrap())
}

/// Best utility on a fine grid of the budget set (m = 2), an oracle that
/// shares no code with the demand solvers.
fn grid_demand(u: &ParametricUtility, p: &[f64], budget: f64, steps: usize) -> f64 {
    let mut best: f64 = 0.0;
    for a in 0..=steps {
        let x0 = a as f64 / steps as f64;
        let rest = budget - p[0] * x0;
        if rest < -1e-12 {
            break;
        }
        let x1 = (rest / p[1]).clamp(0.0, 1.0);
        best = best.max(u.utility(&[x0, x1]).unwrap());
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn features_are_monotone_and_bounded(
        family in family_strategy(3),
        xs in prop::collection::vec(0.0..=1.0f64, 2),
    ) {
        let (lo, hi) = if xs[0] <= xs[1] { (xs[0], xs[1]) } else { (xs[1], xs[0]) };
        for j in 0..3 {
            let (a, b) = (family.feature(j, lo), family.feature(j, hi));
            prop_assert!(a <= b + 1e-15);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&b));
            prop_assert_eq!(family.feature(j, 0.0), 0.0);
            prop_assert!((family.feature(j, 1.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn utility_is_monotone(u in utility_strategy(2), x in prop::collection::vec(0.0..=1.0f64, 2), bump in 0.0..=1.0f64) {
        let mut y = x.clone();
        y[0] = (y[0] + bump).min(1.0);
        prop_assert!(u.utility(&y).unwrap() >= u.utility(&x).unwrap() - 1e-15);
    }

    #[test]
    fn demand_is_budget_feasible(u in utility_strategy(3), p in prices_strategy(3), budget in 0.0..1.0f64, seed in any::<u64>()) {
        for method in [
            DemandMethod::Exact,
            DemandMethod::ProjectedAscent,
            DemandMethod::MonteCarlo { samples: 50, seed },
        ] {
            let d = demand(&u, &p, budget, method).unwrap();
            prop_assert!(d.bundle.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
            prop_assert!(p.cost(&d.bundle) <= budget + 1e-9, "{:?}: cost {} > {}", method, p.cost(&d.bundle), budget);
            prop_assert!((d.utility - u.utility(&d.bundle).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_demand_dominates_other_oracles(u in utility_strategy(3), p in prices_strategy(3), budget in 0.0..1.0f64, seed in any::<u64>()) {
        let exact = demand(&u, &p, budget, DemandMethod::Exact).unwrap().utility;
        let ascent = demand(&u, &p, budget, DemandMethod::ProjectedAscent).unwrap().utility;
        let mc = demand(&u, &p, budget, DemandMethod::MonteCarlo { samples: 200, seed }).unwrap().utility;
        prop_assert!(exact >= ascent - 1e-7, "exact {} < ascent {}", exact, ascent);
        prop_assert!(exact >= mc - 1e-7, "exact {} < mc {}", exact, mc);
        prop_assert!(ascent >= exact * (1.0 - 1e-3) - 1e-12, "ascent {} far below exact {}", ascent, exact);
    }

    #[test]
    fn ascent_beats_monte_carlo(
        theta in prop::collection::vec(0.01..=1.0f64, 3),
        rho in prop::option::of(0.1..=1.0f64),
        p in prices_strategy(3),
        budget in 0.0..1.0f64,
        seed in any::<u64>(),
    ) {
        let family = rho.map_or(Family::Linear, |rho| Family::Ces { rho });
        let u = ParametricUtility::new(family, theta, ThetaBox::default()).unwrap();
        let ascent = demand(&u, &p, budget, DemandMethod::ProjectedAscent).unwrap().utility;
        let mc = demand(&u, &p, budget, DemandMethod::MonteCarlo { samples: 50, seed }).unwrap().utility;
        prop_assert!(ascent >= mc - 1e-6, "ascent {} below mc {}", ascent, mc);
    }

    #[test]
    fn exact_demand_matches_grid_search(u in utility_strategy(2), p in prices_strategy(2), budget in 0.0..1.0f64) {
        let exact = demand(&u, &p, budget, DemandMethod::Exact).unwrap().utility;
        let grid = grid_demand(&u, p.values(), budget, 4000);
        prop_assert!(exact >= grid - 1e-9, "exact {} below grid {}", exact, grid);
        prop_assert!(exact <= grid + 2e-3, "exact {} far above grid {}", exact, grid);
    }

    #[test]
    fn economy_file_round_trip(seed in any::<u64>(), n in 1usize..5, m in 1usize..4) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let family = common::random_family(&mut rng, m, true);
        let e = common::random_economy(&mut rng, n, m, family);
        let json = serde_json::to_string(&e.to_file()).unwrap();
        let back = Economy::from_json_str(&json).unwrap();
        prop_assert_eq!(back, e);
    }
}

#[test]
fn linear_demand_breaks_ties_by_index() {
    let u = ParametricUtility::linear(vec![0.5, 0.5]).unwrap();
    let p = PriceVector::uniform(2);
    let d = demand(&u, &p, 0.25, DemandMethod::ExactLinear).unwrap();
    assert_eq!(d.bundle, vec![0.5, 0.0]);
}

#[test]
fn zero_budget_buys_nothing() {
    let u = ParametricUtility::new(
        Family::Ces { rho: 0.5 },
        vec![0.4, 0.9],
        ThetaBox::default(),
    )
    .unwrap();
    let d = demand(&u, &PriceVector::uniform(2), 0.0, DemandMethod::Exact).unwrap();
    assert_eq!(d.utility, 0.0);
}

#[test]
fn monte_carlo_is_seed_deterministic() {
    let u = ParametricUtility::new(
        Family::Amdahl { f: vec![0.3, 0.6] },
        vec![0.4, 0.9],
        ThetaBox::default(),
    )
    .unwrap();
    let p = PriceVector::new(vec![0.3, 0.7]).unwrap();
    let run = |seed| demand(&u, &p, 0.4, DemandMethod::MonteCarlo { samples: 100, seed }).unwrap();
    assert_eq!(run(5), run(5));
    assert_ne!(run(5).bundle, run(6).bundle);
}
