//! Seeded fixtures shared by the benchmarks.

use eqlearn::{Economy, Family, ParametricUtility, PriceVector, ThetaBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random economy with `theta` uniform in `[0.1, 1)` and flat-Dirichlet
/// endowment columns.
pub fn economy(n: usize, m: usize, family: Family, seed: u64) -> Economy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta_box = ThetaBox::new(0.05, 1.2).unwrap();
    let utilities = (0..n)
        .map(|_| {
            let theta = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
            ParametricUtility::new(family.clone(), theta, theta_box).unwrap()
        })
        .collect();
    let mut endowments = vec![vec![0.0; m]; n];
    for j in 0..m {
        let w: Vec<f64> = (0..n)
            .map(|_| -rng.random::<f64>().max(1e-12).ln())
            .collect();
        let s: f64 = w.iter().sum();
        for (row, wi) in endowments.iter_mut().zip(&w) {
            row[j] = wi / s;
        }
    }
    Economy::new(endowments, utilities, 0.1).unwrap()
}

pub fn prices(m: usize, seed: u64) -> PriceVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PriceVector::normalized((0..m).map(|_| rng.random_range(0.05..1.0)).collect()).unwrap()
}
