//! Online learning of competitive equilibria in exchange economies.
//!
//! The crate simulates exchange economies whose agents hold parametric
//! utilities `u_i(x) = mu(theta_i . phi(x))` with unknown `theta_i`, runs a
//! Thompson-sampling style mechanism that learns the parameters from noisy
//! utility feedback while allocating resources at competitive equilibria of
//! the sampled utilities, and scores every round with the CE and fair
//! division losses.
//!
//! Modules:
//! - [`economy`]: utilities, endowments, prices and demand oracles.
//! - [`equilibrium`]: proportional response and tatonnement CE solvers plus
//!   certification.
//! - [`losses`]: CE, sharing-incentive, Pareto-efficiency and FD losses.
//! - [`learner`]: the online learning mechanism.
//! - [`diagnostics`]: confidence radii, tail bounds and event tracking.
//! - [`harness`]: seeded experiment runs and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }};
}

pub mod diagnostics;
pub mod economy;
pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod learner;
pub mod losses;
mod seed;

pub use diagnostics::{
    chi_square_tail_bound, compute_constants, log_dominance_check, normal_tail_lower_bound,
    record_events, Beta2Variant, ConfidenceConstants, EventTrace,
};
pub use economy::{
    demand, eval_features, eval_utility, sample_feedback, Allocation, DemandMethod, DemandResult,
    Economy, EconomyFile, Family, ParametricUtility, PriceVector, ThetaBox,
};
pub use equilibrium::{
    certify_ce, certify_ce_with, solve_ce_proportional_response, solve_ce_tatonnement,
    CeCertificate, MarketOutcome, SolveReport, SolverWarning,
};
pub use error::{Error, Result};
pub use harness::{run_experiment, ExperimentConfig, RoundRecord};
pub use learner::{
    delta_schedule, fit_quasi_mle, init_schedule, sample_and_project, DeltaSchedule, Learner,
    LearnerConfig, Phase,
};
pub use losses::{
    loss_ce, loss_fd, loss_pe_exact_small, loss_pe_upper, loss_si, LossReport, ReferenceEquilibrium,
};
