//! Confidence-set constants, concentration bounds and event tracking.
//!
//! Everything here is analysis plumbing: the learner only reads `alpha_t`,
//! the rest is used to check high-probability events on simulated runs.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Learner, Proposal};

/// Absolute slack on event checks so that exact-zero radii survive rounding.
pub const EVENT_SLACK: f64 = 1e-9;

/// Which form of the exploration radius `beta2` to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beta2Variant {
    /// `alpha * sqrt(m + gamma2)`, the scale of an alpha-scaled chi-square draw.
    #[default]
    ProofConsistent,
    /// `sqrt(alpha * (m + gamma2))`.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsInput {
    pub m: usize,
    pub t: usize,
    pub delta_t: f64,
    pub delta2_t: f64,
    pub sigma: f64,
    pub c_mu: f64,
    pub l_mu: f64,
    pub phi_one_norm_sq: f64,
    pub beta2: Beta2Variant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConstants {
    pub kappa: f64,
    pub alpha_t: f64,
    pub beta1_t: f64,
    pub beta2_t: f64,
    pub beta3_t: f64,
    pub gamma2_t: f64,
    pub input: ConstantsInput,
}

impl ConfidenceConstants {
    /// Same constants with the exploration scale replaced by `alpha`
    /// (`beta2` and `beta3` follow).
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha_t = alpha;
        self.beta2_t = beta2(self.input.beta2, alpha, self.input.m, self.gamma2_t);
        self.beta3_t = self.input.l_mu * (self.beta1_t + self.beta2_t);
        self
    }
}

/// `3 + 2 ln(1 + 2 |phi(1)|^2)`.
pub fn kappa(phi_one_norm_sq: f64) -> f64 {
    3.0 + 2.0 * (1.0 + 2.0 * phi_one_norm_sq).ln()
}

/// Self-normalized-bound form `sqrt(3 + 2 ln(1 + 2 c^2 / lambda0))`, exposed
/// for comparison with [`kappa`].
pub fn kappa_self_normalized(c: f64, lambda0: f64) -> f64 {
    (3.0 + 2.0 * (1.0 + 2.0 * c * c / lambda0).ln()).sqrt()
}

fn beta2(variant: Beta2Variant, alpha: f64, m: usize, gamma2: f64) -> f64 {
    let s = m as f64 + gamma2;
    match variant {
        Beta2Variant::ProofConsistent => alpha * s.sqrt(),
        Beta2Variant::Literal => (alpha * s).sqrt(),
    }
}

pub fn compute_constants(input: ConstantsInput) -> Result<ConfidenceConstants> {
    let ConstantsInput {
        m,
        t,
        delta_t,
        delta2_t,
        sigma,
        c_mu,
        l_mu,
        phi_one_norm_sq,
        beta2: variant,
    } = input;
    if t < 2 {
        return Err(Error::Contract(format!("constants need t >= 2, got {t}")));
    }
    if m == 0 {
        return Err(Error::Contract("constants need m >= 1".into()));
    }
    for (name, d) in [("delta_t", delta_t), ("delta2_t", delta2_t)] {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::Contract(format!("{name} = {d} must lie in (0, 1)")));
        }
    }
    if !(sigma >= 0.0) || !(c_mu > 0.0) || !(l_mu > 0.0) || !(phi_one_norm_sq > 0.0) {
        return Err(Error::Contract(format!(
            "need sigma >= 0 and positive C_mu, L_mu, |phi(1)|^2 (got {sigma}, {c_mu}, {l_mu}, {phi_one_norm_sq})"
        )));
    }
    let mf = m as f64;
    let ln_t = (t as f64).ln();
    let ln_m_delta = (mf / delta_t).ln();
    let kappa = kappa(phi_one_norm_sq);
    let alpha_t =
        (4.0 * kappa * kappa * sigma * sigma / (c_mu * c_mu) * mf * ln_t * ln_m_delta).sqrt();
    let beta1_t = 2.0 / c_mu * kappa * sigma * (2.0 * mf * ln_t).sqrt() * ln_m_delta.sqrt();
    let ln_inv = (1.0 / delta2_t).ln();
    let gamma2_t = (8.0 * ln_inv).max((8.0 * mf * ln_inv).sqrt());
    let beta2_t = beta2(variant, alpha_t, m, gamma2_t);
    Ok(ConfidenceConstants {
        kappa,
        alpha_t,
        beta1_t,
        beta2_t,
        beta3_t: l_mu * (beta1_t + beta2_t),
        gamma2_t,
        input,
    })
}

/// Upper bound on `P(Z > m + alpha)` for `Z ~ chi^2_m`.
pub fn chi_square_tail_bound(m: usize, alpha: f64) -> f64 {
    let mf = m as f64;
    if alpha > mf {
        (-alpha / 8.0).exp()
    } else {
        (-alpha * alpha / (8.0 * mf)).exp()
    }
}

/// Lower bound on the standard normal upper tail `P(Z > t)`.
pub fn normal_tail_lower_bound(t: f64) -> f64 {
    (2.0 / PI).sqrt() * (-t * t / 2.0).exp() / (t + (t * t + 4.0).sqrt())
}

/// Anti-concentration constant: the normal tail bound at `sqrt(2)`.
pub fn q0() -> f64 {
    normal_tail_lower_bound(SQRT_2)
}

/// Whether `x <= c / ln(1 + c) * ln(1 + x)` for `0 <= x <= c`.
pub fn log_dominance_check(x: f64, c: f64) -> Result<bool> {
    if !(c > 0.0) || !(x >= 0.0) || x > c {
        return Err(Error::Contract(format!(
            "need 0 <= x <= c and c > 0, got x = {x}, c = {c}"
        )));
    }
    let rhs = c / c.ln_1p() * x.ln_1p();
    // The two sides coincide at both ends; allow rounding there.
    Ok(x <= rhs * (1.0 + 4.0 * f64::EPSILON))
}

/// Elliptical-potential ceiling `m ln(|phi(1)|^2 T / m^2)` on `sum_t ln(1 + rho_t^2)`.
pub fn elliptical_potential_bound(m: usize, phi_one_norm_sq: f64, horizon: usize) -> f64 {
    let mf = m as f64;
    mf * (phi_one_norm_sq * horizon as f64 / (mf * mf)).ln()
}

/// Post-initialization ceiling on `rho`: `|phi(1)| / (m min_j phi_j(1))`.
pub fn rho_bound(phi_one: &[f64]) -> f64 {
    let norm = phi_one.iter().map(|v| v * v).sum::<f64>().sqrt();
    let min = phi_one.iter().copied().fold(f64::INFINITY, f64::min);
    norm / (phi_one.len() as f64 * min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: usize,
    pub agent: usize,
    pub a_holds: bool,
    pub b_holds: bool,
    pub rho: f64,
}

/// Append-only log of per-agent, per-round events.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub records: Vec<EventRecord>,
}

impl EventTrace {
    pub fn extend(&mut self, records: impl IntoIterator<Item = EventRecord>) {
        self.records.extend(records);
    }

    /// Empirical frequencies of `a_holds` and `b_holds` over rounds `t >= min_t`;
    /// `None` when no record qualifies.
    pub fn frequencies(&self, min_t: usize) -> Option<(f64, f64)> {
        let kept: Vec<&EventRecord> = self.records.iter().filter(|r| r.t >= min_t).collect();
        if kept.is_empty() {
            return None;
        }
        let n = kept.len() as f64;
        let a = kept.iter().filter(|r| r.a_holds).count() as f64 / n;
        let b = kept.iter().filter(|r| r.b_holds).count() as f64 / n;
        Some((a, b))
    }
}

/// Evaluates events A and B and `rho` for every agent of a learning-phase
/// proposal. Must run before the proposal's feedback is observed, so that the
/// learner's design matrices are the ones the proposal was made with.
/// Initialization-phase proposals yield no records.
pub fn record_events(
    learner: &Learner,
    proposal: &Proposal,
    true_thetas: &[Vec<f64>],
) -> Result<Vec<EventRecord>> {
    if proposal.t != learner.t() + 1 {
        return Err(Error::Contract(format!(
            "proposal for round {} does not match learner at round {}",
            proposal.t,
            learner.t() + 1
        )));
    }
    let Some(learning) = &proposal.learning else {
        return Ok(Vec::new());
    };
    if true_thetas.len() != learner.n() {
        return Err(Error::Contract(
            "one true theta per agent is required".into(),
        ));
    }
    (0..learner.n())
        .map(|i| {
            let agent = learner.agent(i);
            let c = &learning.constants[i];
            let a = agent.q_norm(&true_thetas[i], &learning.theta_bar[i])?;
            let b = agent.q_norm(&learning.theta_bar[i], &learning.theta_sampled[i])?;
            let features = agent.features(proposal.outcome.allocation.row(i));
            Ok(EventRecord {
                t: proposal.t,
                agent: i,
                a_holds: a <= c.beta1_t + EVENT_SLACK,
                b_holds: b <= c.beta2_t + EVENT_SLACK,
                rho: agent.inverse_norm(&features)?,
            })
        })
        .collect()
}
