#![allow(dead_code)]

use eqlearn::{Economy, Family, ParametricUtility, ThetaBox};
use rand::Rng;

/// Each column drawn from a flat Dirichlet, summing to 1.
pub fn simplex_columns(rng: &mut impl Rng, n: usize, m: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; m]; n];
    for j in 0..m {
        let w: Vec<f64> = (0..n)
            .map(|_| -rng.random::<f64>().max(1e-12).ln())
            .collect();
        let s: f64 = w.iter().sum();
        for i in 0..n {
            rows[i][j] = w[i] / s;
        }
        let total: f64 = rows.iter().map(|r| r[j]).sum();
        rows[n - 1][j] += 1.0 - total;
    }
    rows
}

pub fn random_family(rng: &mut impl Rng, m: usize, allow_amdahl: bool) -> Family {
    match rng.random_range(0..if allow_amdahl { 3 } else { 2 }) {
        0 => Family::Linear,
        1 => Family::Ces {
            rho: rng.random_range(0.3..=1.0),
        },
        _ => Family::Amdahl {
            f: (0..m).map(|_| rng.random_range(0.1..0.9)).collect(),
        },
    }
}

pub fn random_economy(rng: &mut impl Rng, n: usize, m: usize, family: Family) -> Economy {
    let theta_box = ThetaBox::new(0.05, 1.2).unwrap();
    let utilities = (0..n)
        .map(|_| {
            let theta = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
            ParametricUtility::new(family.clone(), theta, theta_box).unwrap()
        })
        .collect();
    Economy::new(simplex_columns(rng, n, m), utilities, 0.0).unwrap()
}

pub fn golden_economy() -> Economy {
    let u = |t: [f64; 2]| ParametricUtility::linear(t.to_vec()).unwrap();
    Economy::new(
        vec![vec![0.45, 0.05], vec![0.45, 0.05], vec![0.1, 0.9]],
        vec![u([0.1, 1.0]), u([0.2, 1.0]), u([1.0, 0.1])],
        0.0,
    )
    .unwrap()
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
