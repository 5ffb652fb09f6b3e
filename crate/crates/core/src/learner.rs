//! Thompson-sampling style learner for equilibrium allocation.
//!
//! Each round splits into [`Learner::propose`], which fits the quasi-MLE,
//! samples a parameter per agent and solves the market under the sampled
//! utilities, and [`Learner::observe`], which takes the noisy feedback. The
//! first `m^2 max(n, m)` rounds follow a fixed single-resource schedule.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{compute_constants, Beta2Variant, ConfidenceConstants, ConstantsInput};
use crate::economy::{
    sample_feedback, Allocation, Economy, Family, ParametricUtility, PriceVector, ThetaBox,
};
use crate::equilibrium::{
    proportional_response, tatonnement_from, MarketOutcome, ProportionalResponseOptions,
    SolverWarning, TatonnementOptions,
};
use crate::error::{Error, Result};

/// Ridge added to a singular design matrix.
pub const RIDGE: f64 = 1e-8;
/// Eigenvalue floor for the sampling covariance fallback.
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initialization,
    Learning,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Initialization => "initialization",
            Phase::Learning => "learning",
        }
    }
}

/// Confidence schedule `delta_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaSchedule {
    /// `2 delta / (n pi^2 t^2)`.
    Anytime { delta: f64 },
    /// `1 / T` for every round.
    FiniteHorizon { horizon: usize },
}

impl DeltaSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DeltaSchedule::Anytime { delta } if !(delta > 0.0 && delta < 1.0) => Err(
                Error::Config(format!("anytime delta must lie in (0, 1), got {delta}")),
            ),
            DeltaSchedule::FiniteHorizon { horizon } if horizon < 2 => Err(Error::Config(format!(
                "finite horizon must be at least 2, got {horizon}"
            ))),
            _ => Ok(()),
        }
    }
}

pub fn delta_schedule(kind: DeltaSchedule, n: usize, t: usize) -> Result<f64> {
    if t == 0 || n == 0 {
        return Err(Error::Contract(format!(
            "delta schedule needs t, n >= 1 (t = {t}, n = {n})"
        )));
    }
    kind.validate()?;
    Ok(match kind {
        DeltaSchedule::Anytime { delta } => {
            2.0 * delta / (n as f64 * std::f64::consts::PI.powi(2) * (t as f64).powi(2))
        }
        DeltaSchedule::FiniteHorizon { horizon } => 1.0 / horizon as f64,
    })
}

/// Number of initialization rounds, `m^2 max(n, m)`.
pub fn init_length(n: usize, m: usize) -> usize {
    m * m * n.max(m)
}

/// Allocation of initialization round `t` (1-based).
///
/// Within each block of `max(n, m)` rounds, round `k` hands resource `h` to
/// agent `(h + k - 2) mod n` when `m < n`, and otherwise gives agent `h`
/// resource `(h + k - 2) mod m`, for `h = 1..=min(n, m)`. Over the whole
/// phase every agent holds every single resource alone exactly `m^2` times.
pub fn init_schedule(n: usize, m: usize, t: usize) -> Result<Allocation> {
    let len = init_length(n, m);
    if n == 0 || m == 0 || t == 0 || t > len {
        return Err(Error::Contract(format!(
            "initialization round {t} outside 1..={len} for n = {n}, m = {m}"
        )));
    }
    let block = n.max(m);
    let k = (t - 1) % block + 1;
    let mut rows = vec![vec![0.0; m]; n];
    for h in 1..=n.min(m) {
        let (agent, resource) = if m < n {
            ((h + k - 2) % n, h - 1)
        } else {
            (h - 1, (h + k - 2) % m)
        };
        rows[agent][resource] = 1.0;
    }
    Ok(Allocation::from_rows_unchecked(rows))
}

/// `C_mu` and `L_mu`: bounds on `mu'` over the attainable index range
/// `[theta_min min_j phi_j(1), m theta_max max_j phi_j(1)]`.
pub fn link_constants(family: &Family, theta_box: ThetaBox, m: usize) -> (f64, f64) {
    if family.has_identity_link() {
        return (1.0, 1.0);
    }
    let ones: Vec<f64> = (0..m).map(|j| family.feature(j, 1.0)).collect();
    let lo = theta_box.min * ones.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m as f64 * theta_box.max * ones.iter().copied().fold(0.0, f64::max);
    let (a, b) = (family.link_derivative(lo), family.link_derivative(hi));
    (a.min(b), a.max(b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub features: Vec<f64>,
    pub feedback: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub max_iters: usize,
    /// Stop once the projected-gradient step is below this (inf-norm).
    pub grad_tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            max_iters: 500,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MleFit {
    pub theta: Vec<f64>,
    /// `|score|^2` in the `Q^{-1}` norm at `theta`.
    pub objective: f64,
    pub iterations: usize,
    /// True when `Q` was singular and a ridge was added.
    pub ridge: bool,
}

struct Score<'a> {
    family: &'a Family,
    history: &'a [Observation],
    q: &'a DMatrix<f64>,
    q_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// `sum_s phi_s y_s`, used when the link is the identity.
    linear_rhs: Option<DVector<f64>>,
}

impl Score<'_> {
    fn score(&self, theta: &DVector<f64>) -> DVector<f64> {
        if let Some(b) = &self.linear_rhs {
            return self.q * theta - b;
        }
        let m = theta.len();
        let mut g = DVector::zeros(m);
        for obs in self.history {
            let y: f64 = obs
                .features
                .iter()
                .zip(theta.iter())
                .map(|(a, b)| a * b)
                .sum();
            if y == 0.0 && obs.features.iter().all(|&v| v == 0.0) {
                continue;
            }
            let r = self.family.link(y) - obs.feedback;
            for (gj, &pj) in g.iter_mut().zip(&obs.features) {
                *gj += pj * r;
            }
        }
        g
    }

    /// `sum_s mu'(theta . phi_s) phi_s phi_s^T`.
    fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        if self.linear_rhs.is_some() {
            return self.q.clone();
        }
        let m = theta.len();
        let mut j = DMatrix::zeros(m, m);
        for obs in self.history {
            if obs.features.iter().all(|&v| v == 0.0) {
                continue;
            }
            let y: f64 = obs
                .features
                .iter()
                .zip(theta.iter())
                .map(|(a, b)| a * b)
                .sum();
            let w = self.family.link_derivative(y);
            for a in 0..m {
                for b in 0..m {
                    j[(a, b)] += w * obs.features[a] * obs.features[b];
                }
            }
        }
        j
    }

    fn objective_of(&self, g: &DVector<f64>) -> f64 {
        g.dot(&self.q_chol.solve(g))
    }
}

fn clamp_vec(v: &DVector<f64>, b: ThetaBox) -> DVector<f64> {
    v.map(|x| x.clamp(b.min, b.max))
}

/// Quasi-maximum-likelihood estimate over the box: minimizes
/// `|sum_s phi_s (mu(theta . phi_s) - y_s)|` in the `Q^{-1}` norm.
///
/// Projected Newton on the free coordinates with a Gauss-Newton Hessian
/// `2 J Q^{-1} J`, falling back to a projected-gradient step with
/// backtracking when the Newton direction does not decrease the objective.
pub fn fit_quasi_mle(
    history: &[Observation],
    q: &DMatrix<f64>,
    family: &Family,
    theta_box: ThetaBox,
    start: Option<&[f64]>,
    options: MleOptions,
) -> Result<MleFit> {
    let m = q.nrows();
    if m == 0 || q.ncols() != m {
        return Err(Error::Contract(
            "design matrix must be square and non-empty".into(),
        ));
    }
    if history.iter().any(|o| o.features.len() != m) {
        return Err(Error::Contract(
            "observation dimension does not match Q".into(),
        ));
    }
    let (q_chol, ridge) = match q.clone().cholesky() {
        Some(c) => (c, false),
        None => {
            let reg = q + DMatrix::identity(m, m) * RIDGE;
            let c = reg.cholesky().ok_or_else(|| {
                Error::Domain("design matrix is not positive semidefinite".into())
            })?;
            (c, true)
        }
    };
    let linear_rhs = family.has_identity_link().then(|| {
        let mut b = DVector::zeros(m);
        for obs in history {
            for (bj, &pj) in b.iter_mut().zip(&obs.features) {
                *bj += pj * obs.feedback;
            }
        }
        b
    });
    let score = Score {
        family,
        history,
        q,
        q_chol,
        linear_rhs,
    };

    let mut theta = match start {
        Some(s) if s.len() == m => clamp_vec(&DVector::from_column_slice(s), theta_box),
        Some(_) => {
            return Err(Error::Contract(
                "start point has the wrong dimension".into(),
            ))
        }
        None => DVector::from_element(m, 0.5 * (theta_box.min + theta_box.max)),
    };
    let mut g = score.score(&theta);
    let mut f = score.objective_of(&g);
    let mut iterations = 0;
    let mut pg_step = f64::NAN;

    while iterations < options.max_iters && f > 0.0 {
        iterations += 1;
        let jac = score.jacobian(&theta);
        let qinv_g = score.q_chol.solve(&g);
        let grad = &jac * &qinv_g * 2.0;
        let projected = clamp_vec(&(&theta - &grad), theta_box);
        if (&projected - &theta).amax() < options.grad_tol {
            break;
        }
        let eps = 1e-12 * (1.0 + theta_box.max.abs());
        let free: Vec<usize> = (0..m)
            .filter(|&j| {
                !((theta[j] <= theta_box.min + eps && grad[j] > 0.0)
                    || (theta[j] >= theta_box.max - eps && grad[j] < 0.0))
            })
            .collect();

        let armijo = |cand: &DVector<f64>, fc: f64| fc <= f + 1e-4 * grad.dot(&(cand - &theta));
        let mut accepted: Option<(DVector<f64>, DVector<f64>, f64)> = None;

        if !free.is_empty() {
            let qinv_j = score.q_chol.solve(&jac);
            let hess = &jac * qinv_j * 2.0;
            let k = free.len();
            let h_ff = DMatrix::from_fn(k, k, |a, b| hess[(free[a], free[b])]);
            let g_f = DVector::from_fn(k, |a, _| grad[free[a]]);
            if let Some(c) = h_ff.cholesky() {
                let d_f = -c.solve(&g_f);
                let mut d = DVector::zeros(m);
                for (a, &j) in free.iter().enumerate() {
                    d[j] = d_f[a];
                }
                let mut s = 1.0;
                for _ in 0..40 {
                    let cand = clamp_vec(&(&theta + &d * s), theta_box);
                    let gc = score.score(&cand);
                    let fc = score.objective_of(&gc);
                    if armijo(&cand, fc) {
                        accepted = Some((cand, gc, fc));
                        break;
                    }
                    s *= 0.5;
                }
            }
        }
        if accepted.is_none() {
            let mut eta = if pg_step.is_finite() {
                2.0 * pg_step
            } else {
                1.0 / grad.amax().max(f64::MIN_POSITIVE)
            };
            for _ in 0..60 {
                let cand = clamp_vec(&(&theta - &grad * eta), theta_box);
                let gc = score.score(&cand);
                let fc = score.objective_of(&gc);
                if armijo(&cand, fc) {
                    pg_step = eta;
                    accepted = Some((cand, gc, fc));
                    break;
                }
                eta *= 0.5;
            }
        }
        match accepted {
            Some((cand, gc, fc)) => {
                let moved = (&cand - &theta).amax();
                theta = cand;
                g = gc;
                f = fc;
                if moved < 1e-15 {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(MleFit {
        theta: theta.iter().copied().collect(),
        objective: f,
        iterations,
        ridge,
    })
}

/// Draws `theta' = theta_bar + alpha L z` with `L L^T = Q^{-1}` and clamps it
/// into the box. The flag reports the eigenvalue-floor fallback.
pub fn sample_and_project<R: Rng + ?Sized>(
    theta_bar: &[f64],
    q: &DMatrix<f64>,
    alpha: f64,
    theta_box: ThetaBox,
    rng: &mut R,
) -> Result<(Vec<f64>, bool)> {
    let m = theta_bar.len();
    if q.nrows() != m || q.ncols() != m {
        return Err(Error::Contract("design matrix does not match theta".into()));
    }
    if !(alpha >= 0.0) {
        return Err(Error::Contract(format!(
            "alpha must be non-negative, got {alpha}"
        )));
    }
    let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let (factor, fallback) = covariance_factor(q);
    let draw = DVector::from_column_slice(theta_bar) + factor * z * alpha;
    let mut theta: Vec<f64> = draw.iter().copied().collect();
    theta_box.project(&mut theta);
    Ok((theta, fallback))
}

/// A factor `L` with `L L^T = Q^{-1}`; Cholesky when possible, otherwise a
/// symmetric eigendecomposition with floored eigenvalues.
fn covariance_factor(q: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if let Some(inv) = q.clone().cholesky().map(|c| c.inverse()) {
        let sym = (&inv + inv.transpose()) * 0.5;
        if let Some(c) = sym.cholesky() {
            return (c.l(), false);
        }
    }
    let eig = q.clone().symmetric_eigen();
    let scale = eig.eigenvalues.map(|l| (1.0 / l.max(EIGEN_FLOOR)).sqrt());
    (&eig.eigenvectors * DMatrix::from_diagonal(&scale), true)
}

/// Per-agent learner state. Holds the agent's family and box, never the
/// true parameter.
#[derive(Clone, Debug)]
pub struct AgentState {
    family: Family,
    theta_box: ThetaBox,
    q: DMatrix<f64>,
    history: Vec<Observation>,
    theta_bar: Vec<f64>,
    theta_sampled: Vec<f64>,
    since_rebuild: usize,
}

impl AgentState {
    fn new(family: Family, theta_box: ThetaBox, m: usize) -> Self {
        let mid = vec![0.5 * (theta_box.min + theta_box.max); m];
        AgentState {
            family,
            theta_box,
            q: DMatrix::zeros(m, m),
            history: Vec::new(),
            theta_bar: mid.clone(),
            theta_sampled: mid,
            since_rebuild: 0,
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn theta_box(&self) -> ThetaBox {
        self.theta_box
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    pub fn theta_bar(&self) -> &[f64] {
        &self.theta_bar
    }

    pub fn theta_sampled(&self) -> &[f64] {
        &self.theta_sampled
    }

    /// `phi(x)` for this agent's family (coordinates clamped into `[0, 1]`).
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| self.family.feature(j, v.clamp(0.0, 1.0)))
            .collect()
    }

    /// `sum_s phi_s phi_s^T` recomputed from history.
    pub fn design_from_history(&self) -> DMatrix<f64> {
        let m = self.q.nrows();
        let mut q = DMatrix::zeros(m, m);
        for obs in &self.history {
            let v = DVector::from_column_slice(&obs.features);
            q += &v * v.transpose();
        }
        q
    }

    /// `|a - b|_Q`.
    pub fn q_norm(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let m = self.q.nrows();
        if a.len() != m || b.len() != m {
            return Err(Error::Contract("vector dimension does not match Q".into()));
        }
        let d = DVector::from_fn(m, |j, _| a[j] - b[j]);
        Ok(d.dot(&(&self.q * &d)).max(0.0).sqrt())
    }

    /// `sqrt(v^T Q^{-1} v)`.
    pub fn inverse_norm(&self, v: &[f64]) -> Result<f64> {
        let m = self.q.nrows();
        if v.len() != m {
            return Err(Error::Contract("vector dimension does not match Q".into()));
        }
        let v = DVector::from_column_slice(v);
        let chol = match self.q.clone().cholesky() {
            Some(c) => c,
            None => (&self.q + DMatrix::identity(m, m) * RIDGE)
                .cholesky()
                .ok_or_else(|| {
                    Error::Domain("design matrix is not positive semidefinite".into())
                })?,
        };
        Ok(v.dot(&chol.solve(&v)).max(0.0).sqrt())
    }

    fn observe(&mut self, features: Vec<f64>, feedback: f64, rebuild_every: usize) {
        let v = DVector::from_column_slice(&features);
        self.q += &v * v.transpose();
        self.history.push(Observation { features, feedback });
        self.since_rebuild += 1;
        if rebuild_every > 0 && self.since_rebuild >= rebuild_every {
            self.q = self.design_from_history();
            self.since_rebuild = 0;
        }
    }
}

/// Market solver run on the sampled utilities each round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CeSolver {
    #[default]
    #[serde(rename = "pr")]
    ProportionalResponse,
    Tatonnement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub delta: DeltaSchedule,
    /// Noise level assumed by the exploration scale.
    pub sigma: f64,
    pub ce_solver: CeSolver,
    /// Solver iterations per round.
    pub ce_iters: usize,
    /// Start each round's market solve from the previous round's outcome.
    pub ce_warm_start: bool,
    /// Replaces the exploration scale `alpha_t` when set.
    pub alpha_override: Option<f64>,
    pub beta2: Beta2Variant,
    /// Full rebuild of `Q` from history every this many observations.
    pub rebuild_every: usize,
    pub mle: MleOptions,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            delta: DeltaSchedule::Anytime { delta: 0.05 },
            sigma: 0.1,
            ce_solver: CeSolver::ProportionalResponse,
            ce_iters: 10,
            ce_warm_start: true,
            alpha_override: None,
            beta2: Beta2Variant::ProofConsistent,
            rebuild_every: 256,
            mle: MleOptions::default(),
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        self.delta.validate()?;
        if !(self.sigma >= 0.0) {
            return Err(Error::Config(format!(
                "sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        if self.ce_iters == 0 {
            return Err(Error::Config("ce_iters must be positive".into()));
        }
        if let Some(a) = self.alpha_override {
            if !(a >= 0.0) {
                return Err(Error::Config(format!(
                    "alpha_override must be non-negative, got {a}"
                )));
            }
        }
        Ok(())
    }
}

/// Numerical fallbacks taken while proposing a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fallback {
    Ridge { agent: usize },
    EigenFloor { agent: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningDetails {
    pub delta_t: f64,
    pub theta_bar: Vec<Vec<f64>>,
    pub theta_sampled: Vec<Vec<f64>>,
    /// Per-agent constants; `alpha_t` is the scale actually used.
    pub constants: Vec<ConfidenceConstants>,
    pub fallbacks: Vec<Fallback>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub t: usize,
    pub phase: Phase,
    pub outcome: MarketOutcome,
    pub warning: Option<SolverWarning>,
    /// Present for learning rounds.
    pub learning: Option<LearningDetails>,
}

#[derive(Clone, Debug)]
pub struct Learner {
    n: usize,
    m: usize,
    endowments: Vec<Vec<f64>>,
    agents: Vec<AgentState>,
    config: LearnerConfig,
    t: usize,
    pending: Option<usize>,
    warm: Option<MarketOutcome>,
    rng: ChaCha8Rng,
}

impl Learner {
    /// Reads the public side of `economy` (endowments, families, boxes).
    pub fn new(economy: &Economy, config: LearnerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let m = economy.m();
        Ok(Learner {
            n: economy.n(),
            m,
            endowments: economy.endowments().to_vec(),
            agents: economy
                .utilities()
                .iter()
                .map(|u| AgentState::new(u.family().clone(), u.theta_box(), m))
                .collect(),
            config,
            t: 0,
            pending: None,
            warm: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Rounds completed so far.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn init_length(&self) -> usize {
        init_length(self.n, self.m)
    }

    /// Phase of the next round.
    pub fn phase(&self) -> Phase {
        if self.t < self.init_length() {
            Phase::Initialization
        } else {
            Phase::Learning
        }
    }

    pub fn agent(&self, i: usize) -> &AgentState {
        &self.agents[i]
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn set_alpha_override(&mut self, alpha: Option<f64>) -> Result<()> {
        let mut c = self.config.clone();
        c.alpha_override = alpha;
        c.validate()?;
        self.config = c;
        Ok(())
    }

    /// Constants for agent `i` at round `t`.
    pub fn constants(&self, i: usize, t: usize) -> Result<ConfidenceConstants> {
        let a = &self.agents[i];
        let delta_t = delta_schedule(self.config.delta, self.n, t)?;
        let (c_mu, l_mu) = link_constants(&a.family, a.theta_box, self.m);
        let phi_one_norm_sq = (0..self.m).map(|j| a.family.feature(j, 1.0).powi(2)).sum();
        let c = compute_constants(ConstantsInput {
            m: self.m,
            t,
            delta_t,
            delta2_t: delta_t,
            sigma: self.config.sigma,
            c_mu,
            l_mu,
            phi_one_norm_sq,
            beta2: self.config.beta2,
        })?;
        Ok(match self.config.alpha_override {
            Some(alpha) => c.with_alpha(alpha),
            None => c,
        })
    }

    /// Chooses the allocation and prices for the next round.
    pub fn propose(&mut self) -> Result<Proposal> {
        let t = self.t + 1;
        if self.phase() == Phase::Initialization {
            self.pending = Some(t);
            return Ok(Proposal {
                t,
                phase: Phase::Initialization,
                outcome: MarketOutcome {
                    allocation: init_schedule(self.n, self.m, t)?,
                    prices: PriceVector::uniform(self.m),
                },
                warning: None,
                learning: None,
            });
        }

        let delta_t = delta_schedule(self.config.delta, self.n, t)?;
        let mut fallbacks = Vec::new();
        let mut constants = Vec::with_capacity(self.n);
        let mut utilities = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let c = self.constants(i, t)?;
            let a = &self.agents[i];
            let fit = fit_quasi_mle(
                &a.history,
                &a.q,
                &a.family,
                a.theta_box,
                Some(&a.theta_bar),
                self.config.mle,
            )?;
            if fit.ridge {
                warn!("round {t}: agent {i} design matrix singular, ridge added");
                fallbacks.push(Fallback::Ridge { agent: i });
            }
            let (sampled, floored) =
                sample_and_project(&fit.theta, &a.q, c.alpha_t, a.theta_box, &mut self.rng)?;
            if floored {
                warn!("round {t}: agent {i} sampling covariance needed an eigenvalue floor");
                fallbacks.push(Fallback::EigenFloor { agent: i });
            }
            utilities.push(ParametricUtility::new(
                a.family.clone(),
                sampled.clone(),
                a.theta_box,
            )?);
            let a = &mut self.agents[i];
            a.theta_bar = fit.theta;
            a.theta_sampled = sampled;
            constants.push(c);
        }

        let warm = if self.config.ce_warm_start {
            self.warm.as_ref()
        } else {
            None
        };
        let report = match self.config.ce_solver {
            CeSolver::ProportionalResponse => proportional_response(
                &utilities,
                &self.endowments,
                ProportionalResponseOptions {
                    iters: self.config.ce_iters,
                    ..Default::default()
                },
                warm,
            )?,
            CeSolver::Tatonnement => tatonnement_from(
                &utilities,
                &self.endowments,
                TatonnementOptions {
                    max_iters: self.config.ce_iters,
                    ..Default::default()
                },
                warm.map(|w| &w.prices),
            )?,
        };
        if let Some(w) = &report.warning {
            warn!("round {t}: market solver warning {w:?}");
        }
        self.pending = Some(t);
        Ok(Proposal {
            t,
            phase: Phase::Learning,
            outcome: report.outcome,
            warning: report.warning,
            learning: Some(LearningDetails {
                delta_t,
                theta_bar: self.agents.iter().map(|a| a.theta_bar.clone()).collect(),
                theta_sampled: self
                    .agents
                    .iter()
                    .map(|a| a.theta_sampled.clone())
                    .collect(),
                constants,
                fallbacks,
            }),
        })
    }

    /// Records one feedback value per agent for `proposal` and advances `t`.
    pub fn observe(&mut self, proposal: &Proposal, feedback: &[f64]) -> Result<()> {
        if self.pending != Some(proposal.t) {
            return Err(Error::Contract(format!(
                "observation for round {} but the pending round is {:?}",
                proposal.t, self.pending
            )));
        }
        if feedback.len() != self.n {
            return Err(Error::Contract(format!(
                "{} feedback values for {} agents",
                feedback.len(),
                self.n
            )));
        }
        let rebuild = self.config.rebuild_every;
        for (i, a) in self.agents.iter_mut().enumerate() {
            let features = a.features(proposal.outcome.allocation.row(i));
            a.observe(features, feedback[i], rebuild);
        }
        if proposal.phase == Phase::Learning {
            self.warm = Some(proposal.outcome.clone());
        }
        self.pending = None;
        self.t += 1;
        Ok(())
    }

    /// One full round against `economy`, drawing feedback from `rng`.
    pub fn round<R: Rng + ?Sized>(
        &mut self,
        economy: &Economy,
        rng: &mut R,
    ) -> Result<(Proposal, Vec<f64>)> {
        let proposal = self.propose()?;
        let feedback = (0..self.n)
            .map(|i| sample_feedback(economy, i, proposal.outcome.allocation.row(i), rng))
            .collect::<Result<Vec<_>>>()?;
        self.observe(&proposal, &feedback)?;
        Ok((proposal, feedback))
    }
}
