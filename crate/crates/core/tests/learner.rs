mod common;

use eqlearn::learner::{init_length, MleOptions, Observation};
use eqlearn::{
    delta_schedule, fit_quasi_mle, init_schedule, sample_and_project, DeltaSchedule, Economy,
    Family, Learner, LearnerConfig, ParametricUtility, Phase, ThetaBox,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[test]
fn init_schedule_hands_every_single_resource_bundle_m_squared_times() {
    for n in 1..=5 {
        for m in 1..=5 {
            let len = init_length(n, m);
            assert_eq!(len, (m * m * m).max(n * m * m));
            let mut counts = vec![vec![0usize; m]; n];
            for t in 1..=len {
                let x = init_schedule(n, m, t).unwrap();
                for j in 0..m {
                    assert!(x.column_sum(j) <= 1.0);
                }
                for (i, row) in counts.iter_mut().enumerate() {
                    let held: Vec<usize> = (0..m).filter(|&j| x.row(i)[j] > 0.0).collect();
                    assert!(held.len() <= 1);
                    if let [j] = held[..] {
                        assert_eq!(x.row(i)[j], 1.0);
                        row[j] += 1;
                    }
                }
            }
            for row in &counts {
                assert!(row.iter().all(|&c| c == m * m), "n{n} m{m}: {counts:?}");
            }
            assert!(init_schedule(n, m, len + 1).is_err());
        }
    }
}

#[test]
fn anytime_deltas_sum_to_zeta_two_share() {
    let (delta, n) = (0.05, 4);
    let kind = DeltaSchedule::Anytime { delta };
    let terms = 1_000_000;
    let partial: f64 = (1..=terms)
        .map(|t| delta_schedule(kind, n, t).unwrap())
        .sum();
    // sum 1/t^2 = pi^2 / 6, and the tail past N is about 1/N.
    let total = delta / (3.0 * n as f64);
    let tail = 2.0 * delta / (n as f64 * std::f64::consts::PI.powi(2) * terms as f64);
    assert!(partial <= total);
    assert!((total - partial - tail).abs() < 1e-3 * tail);
    let fixed = DeltaSchedule::FiniteHorizon { horizon: 2000 };
    assert_eq!(delta_schedule(fixed, n, 1).unwrap(), 5e-4);
    assert_eq!(delta_schedule(fixed, n, 1999).unwrap(), 5e-4);
}

fn score_norm(family: &Family, history: &[Observation], q: &DMatrix<f64>, theta: &[f64]) -> f64 {
    let m = theta.len();
    let mut s = DVector::zeros(m);
    for obs in history {
        let index: f64 = obs.features.iter().zip(theta).map(|(a, b)| a * b).sum();
        let r = family.link(index) - obs.feedback;
        for j in 0..m {
            s[j] += obs.features[j] * r;
        }
    }
    let solved = q.clone().cholesky().unwrap().solve(&s);
    s.dot(&solved).sqrt()
}

#[test]
fn fitted_score_beats_random_probes() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let theta_box = ThetaBox::new(0.05, 1.2).unwrap();
    for family in [Family::Linear, Family::Ces { rho: 0.6 }] {
        let m = 3;
        let truth = vec![0.4, 0.8, 0.6];
        let u = ParametricUtility::new(family.clone(), truth.clone(), theta_box).unwrap();
        let mut q = DMatrix::zeros(m, m);
        let history: Vec<Observation> = (0..200)
            .map(|_| {
                let x: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                let features = u.features(&x).unwrap();
                let v = DVector::from_column_slice(&features);
                q += &v * v.transpose();
                let noise: f64 = rng.sample(rand_distr::StandardNormal);
                Observation {
                    features,
                    feedback: u.utility(&x).unwrap() + 0.1 * noise,
                }
            })
            .collect();
        let fit = fit_quasi_mle(
            &history,
            &q,
            &family,
            theta_box,
            None,
            MleOptions::default(),
        )
        .unwrap();
        assert!(theta_box.contains(&fit.theta));
        let best = score_norm(&family, &history, &q, &fit.theta);
        for _ in 0..100 {
            let probe: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..=1.2)).collect();
            let other = score_norm(&family, &history, &q, &probe);
            assert!(best <= other + 1e-9, "{family:?}: {best} > {other}");
        }
    }
}

#[test]
fn sample_covariance_matches_scaled_inverse_design() {
    let q = DMatrix::from_row_slice(3, 3, &[40.0, 5.0, 2.0, 5.0, 30.0, -4.0, 2.0, -4.0, 25.0]);
    let alpha = 0.3;
    let center = [0.5, 0.6, 0.7];
    let wide = ThetaBox::new(1e-6, 100.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let draws = 100_000;
    let mut mean = DVector::<f64>::zeros(3);
    let mut second = DMatrix::<f64>::zeros(3, 3);
    for _ in 0..draws {
        let (theta, fallback) = sample_and_project(&center, &q, alpha, wide, &mut rng).unwrap();
        assert!(!fallback);
        let v = DVector::from_column_slice(&theta);
        mean += &v;
        second += &v * v.transpose();
    }
    let nf = draws as f64;
    mean /= nf;
    let cov = second / nf - &mean * mean.transpose();
    let expected = q.try_inverse().unwrap() * (alpha * alpha);
    let rel = (&cov - &expected).norm() / expected.norm();
    assert!(rel < 0.05, "relative Frobenius error {rel}");
}

#[test]
fn samples_outside_the_box_are_clamped_to_its_faces() {
    let q = DMatrix::<f64>::identity(2, 2);
    let theta_box = ThetaBox::new(0.1, 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut hit_min = false;
    for _ in 0..100 {
        let (theta, _) = sample_and_project(&[0.15, 0.15], &q, 5.0, theta_box, &mut rng).unwrap();
        assert!(theta_box.contains(&theta));
        hit_min |= theta.contains(&0.1);
    }
    assert!(hit_min);
}

fn ces_economy(seed: u64, sigma: f64) -> Economy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    common::random_economy(&mut rng, 3, 2, Family::Ces { rho: 0.7 })
        .with_noise_sigma(sigma)
        .unwrap()
}

#[test]
fn estimation_error_shrinks_in_median() {
    let checkpoints = [500, 1000, 2000];
    let errors: Vec<[f64; 3]> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let e = ces_economy(100 + seed, 0.1);
            let config = LearnerConfig {
                delta: DeltaSchedule::FiniteHorizon { horizon: 2000 },
                ..Default::default()
            };
            let mut learner = Learner::new(&e, config, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
            let mut out = [0.0; 3];
            for t in 1..=2000 {
                learner.round(&e, &mut rng).unwrap();
                if let Some(k) = checkpoints.iter().position(|&c| c == t) {
                    out[k] = (0..e.n())
                        .map(|i| {
                            let truth = e.utility(i).theta();
                            let est = learner.agent(i).theta_bar();
                            truth
                                .iter()
                                .zip(est)
                                .map(|(a, b)| (a - b).powi(2))
                                .sum::<f64>()
                                .sqrt()
                        })
                        .fold(0.0, f64::max);
                }
            }
            out
        })
        .collect();
    let median = |k: usize| {
        let mut v: Vec<f64> = errors.iter().map(|e| e[k]).collect();
        v.sort_by(f64::total_cmp);
        0.5 * (v[4] + v[5])
    };
    let m: Vec<f64> = (0..3).map(median).collect();
    assert!(m[0] >= m[1] && m[1] >= m[2], "medians {m:?}");
}

#[test]
fn finite_horizon_alpha_is_non_decreasing() {
    let e = ces_economy(30, 0.1);
    let config = LearnerConfig {
        delta: DeltaSchedule::FiniteHorizon { horizon: 2000 },
        ..Default::default()
    };
    let learner = Learner::new(&e, config, 0).unwrap();
    for i in 0..e.n() {
        let mut last = 0.0;
        for t in 2..=2000 {
            let c = learner.constants(i, t).unwrap();
            assert!(c.alpha_t >= last, "agent {i} t {t}");
            last = c.alpha_t;
        }
    }
}

#[test]
fn design_grows_by_one_outer_product_per_round() {
    let e = ces_economy(31, 0.1);
    let config = LearnerConfig {
        rebuild_every: 0,
        ..Default::default()
    };
    let mut learner = Learner::new(&e, config, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..(learner.init_length() + 40) {
        let before: Vec<DMatrix<f64>> = (0..e.n()).map(|i| learner.agent(i).q().clone()).collect();
        let (proposal, _) = learner.round(&e, &mut rng).unwrap();
        for (i, q0) in before.iter().enumerate() {
            let agent = learner.agent(i);
            let v = DVector::from_vec(agent.features(proposal.outcome.allocation.row(i)));
            let diff = (agent.q() - q0 - &v * v.transpose()).amax();
            assert!(diff < 1e-12, "agent {i}: {diff}");
            assert!((agent.q() - agent.design_from_history()).amax() < 1e-9);
        }
    }
}

#[test]
fn estimates_stay_in_the_box_and_phases_switch_once() {
    let e = ces_economy(32, 0.1);
    let mut learner = Learner::new(&e, LearnerConfig::default(), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let init = learner.init_length();
    for t in 1..=(init + 60) {
        let (proposal, _) = learner.round(&e, &mut rng).unwrap();
        let expected = if t <= init {
            Phase::Initialization
        } else {
            Phase::Learning
        };
        assert_eq!(proposal.phase, expected, "round {t}");
        for i in 0..e.n() {
            let a = learner.agent(i);
            assert!(a.theta_box().contains(a.theta_bar()));
            assert!(a.theta_box().contains(a.theta_sampled()));
        }
    }
}

#[test]
fn equal_seeds_give_identical_round_streams() {
    let e = ces_economy(33, 0.1);
    let run = || {
        let mut learner = Learner::new(&e, LearnerConfig::default(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        (0..(learner.init_length() + 30))
            .map(|_| learner.round(&e, &mut rng).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
