//! Competitive-equilibrium solvers and certification.
//!
//! Two solvers are provided: proportional response dynamics (bids follow each
//! good's share of the agent's utility, budgets follow prices) and
//! tatonnement on excess demand. Both return a [`SolveReport`]; neither fails
//! on non-convergence, they flag it instead.

use serde::{Deserialize, Serialize};

use crate::economy::{demand, Allocation, DemandMethod, ParametricUtility, PriceVector};
use crate::error::{Error, Result};

/// Price floor applied to goods that receive no bids.
pub const PRICE_FLOOR: f64 = 1e-12;

/// Share floor so that goods an agent currently holds none of stay reachable.
const SHARE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub allocation: Allocation,
    pub prices: PriceVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverWarning {
    /// Goods that received no bids; their prices were floored and they were
    /// handed back to endowment holders.
    ZeroBid { goods: Vec<usize> },
    /// Tatonnement stopped at `max_iters`; the best iterate was returned.
    NotConverged { residual: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub outcome: MarketOutcome,
    pub iterations: usize,
    /// Proportional response: last max bid change. Tatonnement: `||z(p)||_inf`
    /// at the returned prices.
    pub residual: f64,
    pub warning: Option<SolverWarning>,
}

fn check_inputs(
    utilities: &[ParametricUtility],
    endowments: &[Vec<f64>],
) -> Result<(usize, usize)> {
    let n = endowments.len();
    if n == 0 || utilities.len() != n {
        return Err(Error::Contract(format!(
            "{} utilities for {n} endowment rows",
            utilities.len()
        )));
    }
    let m = endowments[0].len();
    if m == 0 || endowments.iter().any(|r| r.len() != m) || utilities.iter().any(|u| u.dim() != m) {
        return Err(Error::Contract("inconsistent resource dimension".into()));
    }
    Ok((n, m))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProportionalResponseOptions {
    pub iters: usize,
    /// Stop early once the largest bid change falls below this.
    pub bid_tol: f64,
}

impl Default for ProportionalResponseOptions {
    fn default() -> Self {
        ProportionalResponseOptions {
            iters: 200,
            bid_tol: 1e-10,
        }
    }
}

/// Proportional response dynamics from uniform prices and the endowment
/// allocation, running at most `iters` rounds.
pub fn solve_ce_proportional_response(
    utilities: &[ParametricUtility],
    endowments: &[Vec<f64>],
    iters: usize,
) -> Result<SolveReport> {
    let options = ProportionalResponseOptions {
        iters,
        ..Default::default()
    };
    proportional_response(utilities, endowments, options, None)
}

/// Proportional response with explicit options and an optional warm start.
///
/// Each round: `budget_i = p . e_i`, `bid_ij = budget_i * s_ij / sum_k s_ik`
/// with `s_ij = theta_ij phi_j(x_ij)`, `p_j = sum_i bid_ij`,
/// `x_ij = bid_ij / p_j`. Markets clear exactly by construction.
pub fn proportional_response(
    utilities: &[ParametricUtility],
    endowments: &[Vec<f64>],
    options: ProportionalResponseOptions,
    warm_start: Option<&MarketOutcome>,
) -> Result<SolveReport> {
    let (n, m) = check_inputs(utilities, endowments)?;
    if options.iters == 0 {
        return Err(Error::Contract(
            "proportional response needs iters >= 1".into(),
        ));
    }
    let (mut x, mut p) = match warm_start {
        Some(w) if w.allocation.n() == n && w.allocation.m() == m && w.prices.len() == m => {
            (w.allocation.rows().to_vec(), w.prices.values().to_vec())
        }
        Some(_) => return Err(Error::Contract("warm start has the wrong shape".into())),
        None => (endowments.to_vec(), vec![1.0 / m as f64; m]),
    };
    let mut bids = vec![vec![0.0; m]; n];
    let mut prev = vec![vec![f64::INFINITY; m]; n];
    let mut zero_bid = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    for _ in 0..options.iters {
        iterations += 1;
        for i in 0..n {
            let u = &utilities[i];
            let budget: f64 = p.iter().zip(&endowments[i]).map(|(a, b)| a * b).sum();
            let theta = u.theta();
            let family = u.family();
            let mut total = 0.0;
            for j in 0..m {
                let s = theta[j] * family.feature(j, x[i][j].clamp(SHARE_FLOOR, 1.0));
                bids[i][j] = s;
                total += s;
            }
            for b in bids[i].iter_mut() {
                *b = if total > 0.0 {
                    budget * *b / total
                } else {
                    0.0
                };
            }
        }
        zero_bid.clear();
        for j in 0..m {
            let pj: f64 = bids.iter().map(|b| b[j]).sum();
            if pj > 0.0 {
                p[j] = pj;
                for i in 0..n {
                    x[i][j] = bids[i][j] / pj;
                }
            } else {
                zero_bid.push(j);
                p[j] = PRICE_FLOOR;
                for i in 0..n {
                    x[i][j] = endowments[i][j];
                }
            }
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);

        residual = bids
            .iter()
            .zip(&prev)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        prev.clone_from(&bids);
        if residual < options.bid_tol {
            break;
        }
    }

    let prices = PriceVector::normalized(p)?;
    Ok(SolveReport {
        outcome: MarketOutcome {
            allocation: Allocation::new(x)?,
            prices,
        },
        iterations,
        residual,
        warning: (!zero_bid.is_empty()).then_some(SolverWarning::ZeroBid { goods: zero_bid }),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TatonnementOptions {
    pub step: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub demand: DemandMethod,
}

impl Default for TatonnementOptions {
    fn default() -> Self {
        TatonnementOptions {
            step: 0.1,
            max_iters: 5000,
            tol: 1e-6,
            demand: DemandMethod::Exact,
        }
    }
}

/// Aggregate demand minus supply at `prices`.
pub fn excess_demand(
    utilities: &[ParametricUtility],
    endowments: &[Vec<f64>],
    prices: &PriceVector,
    method: DemandMethod,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = prices.len();
    let mut z = vec![-1.0; m];
    let mut bundles = Vec::with_capacity(utilities.len());
    for (u, e) in utilities.iter().zip(endowments) {
        let d = demand(u, prices, prices.cost(e), method)?;
        for (zj, dj) in z.iter_mut().zip(&d.bundle) {
            *zj += dj;
        }
        bundles.push(d.bundle);
    }
    Ok((z, bundles))
}

/// Tatonnement: `p <- normalize(max(p + step z(p), floor))` from uniform prices.
pub fn solve_ce_tatonnement(
    utilities: &[ParametricUtility],
    endowments: &[Vec<f64>],
    options: TatonnementOptions,
) -> Result<SolveReport> {
    tatonnement_from(utilities, endowments, options, None)
}

pub fn tatonnement_from(
    utilities: &[ParametricUtility],
    endowments: &[Vec<f64>],
    options: TatonnementOptions,
    start: Option<&PriceVector>,
) -> Result<SolveReport> {
    let (_, m) = check_inputs(utilities, endowments)?;
    if !(options.step > 0.0) || !(options.tol >= 0.0) {
        return Err(Error::Contract(format!(
            "tatonnement needs step > 0 and tol >= 0, got {} and {}",
            options.step, options.tol
        )));
    }
    let mut p = match start {
        Some(s) if s.len() == m => s.clone(),
        Some(_) => return Err(Error::Contract("start prices have the wrong length".into())),
        None => PriceVector::uniform(m),
    };
    let mut best: Option<(f64, PriceVector, Vec<Vec<f64>>)> = None;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..=options.max_iters {
        let (z, bundles) = excess_demand(utilities, endowments, &p, options.demand)?;
        let r = z.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if best.as_ref().is_none_or(|(b, _, _)| r < *b) {
            best = Some((r, p.clone(), bundles));
        }
        if r <= options.tol {
            converged = true;
            break;
        }
        if iterations == options.max_iters {
            break;
        }
        iterations += 1;
        let next: Vec<f64> = p
            .values()
            .iter()
            .zip(&z)
            .map(|(pj, zj)| (pj + options.step * zj).max(PRICE_FLOOR))
            .collect();
        p = PriceVector::normalized(next)?;
    }
    let (residual, prices, mut bundles) = best.expect("at least one evaluation");
    for j in 0..m {
        let s: f64 = bundles.iter().map(|b| b[j]).sum();
        let scale = if s > 1.0 { 1.0 / s } else { 1.0 };
        for b in bundles.iter_mut() {
            b[j] = (b[j] * scale).min(1.0);
        }
    }
    Ok(SolveReport {
        outcome: MarketOutcome {
            allocation: Allocation::new(bundles)?,
            prices,
        },
        iterations,
        residual,
        warning: (!converged).then_some(SolverWarning::NotConverged { residual }),
    })
}

/// Per-good clearing and per-agent optimality gaps of a market outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CeCertificate {
    /// `sum_i x_ij - 1` per good.
    pub clearing_gap: Vec<f64>,
    /// `u_i(d_i(p)) - u_i(x_i)` per agent.
    pub demand_gap: Vec<f64>,
    pub eps: f64,
    pub is_equilibrium: bool,
}

/// Certifies with the projected-ascent demand oracle.
pub fn certify_ce(
    outcome: &MarketOutcome,
    utilities: &[ParametricUtility],
    endowments: &[Vec<f64>],
    eps: f64,
) -> Result<CeCertificate> {
    certify_ce_with(
        outcome,
        utilities,
        endowments,
        eps,
        DemandMethod::ProjectedAscent,
    )
}

pub fn certify_ce_with(
    outcome: &MarketOutcome,
    utilities: &[ParametricUtility],
    endowments: &[Vec<f64>],
    eps: f64,
    method: DemandMethod,
) -> Result<CeCertificate> {
    let (n, m) = check_inputs(utilities, endowments)?;
    let x = &outcome.allocation;
    let p = &outcome.prices;
    if x.n() != n || x.m() != m || p.len() != m {
        return Err(Error::Contract(
            "outcome shape does not match the economy".into(),
        ));
    }
    let clearing_gap: Vec<f64> = (0..m).map(|j| x.column_sum(j) - 1.0).collect();
    let demand_gap = (0..n)
        .map(|i| {
            let d = demand(&utilities[i], p, p.cost(&endowments[i]), method)?;
            Ok(d.utility - utilities[i].utility(x.row(i))?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let is_equilibrium = max(&clearing_gap) <= eps && max(&demand_gap) <= eps;
    Ok(CeCertificate {
        clearing_gap,
        demand_gap,
        eps,
        is_equilibrium,
    })
}
