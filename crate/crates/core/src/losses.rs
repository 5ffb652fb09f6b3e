//! CE, sharing-incentive, Pareto-efficiency and fair-division losses.
//!
//! All per-agent terms are clamped at zero before summation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::economy::{demand, Allocation, DemandMethod, Economy};
use crate::equilibrium::{
    certify_ce_with, proportional_response, tatonnement_from, CeCertificate, MarketOutcome,
    ProportionalResponseOptions, TatonnementOptions,
};
use crate::error::{Error, Result};
use crate::seed::sub_seed;

/// Largest `n * m` accepted by the grid Pareto-front oracle.
pub const PE_EXACT_MAX_CELLS: usize = 6;

/// Profile quantum used for Pareto domination (strict tolerance 1e-12).
const PROFILE_QUANTUM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_ce: f64,
    pub l_si: f64,
    pub l_pe_upper: f64,
    pub l_pe_exact: Option<f64>,
    pub l_fd_upper: f64,
    /// Smallest number of accepted Monte-Carlo samples over agents (0 when
    /// the CE loss used a deterministic demand oracle).
    pub mc_samples_used: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CeLoss {
    pub value: f64,
    pub per_agent: Vec<f64>,
    pub mc_samples_used: usize,
}

fn positive(a: f64) -> f64 {
    a.max(0.0)
}

fn check_allocation(e: &Economy, x: &Allocation) -> Result<()> {
    if x.n() != e.n() || x.m() != e.m() {
        return Err(Error::Contract(format!(
            "allocation is {}x{}, economy is {}x{}",
            x.n(),
            x.m(),
            e.n(),
            e.m()
        )));
    }
    Ok(())
}

/// `sum_i (max_{p.y <= p.e_i} u_i(y) - u_i(x_i))^+`.
///
/// The best affordable utility is estimated with `method`; the endowment and
/// the current bundle are always included as candidates so the estimate never
/// falls below either. With [`DemandMethod::MonteCarlo`], `seed` is a round
/// seed and each agent samples from its own derived stream.
pub fn loss_ce(e: &Economy, outcome: &MarketOutcome, method: DemandMethod) -> Result<CeLoss> {
    let x = &outcome.allocation;
    check_allocation(e, x)?;
    let p = &outcome.prices;
    let mut per_agent = Vec::with_capacity(e.n());
    let mut mc_min = usize::MAX;
    for i in 0..e.n() {
        let u = e.utility(i);
        let agent_method = match method {
            DemandMethod::MonteCarlo { samples, seed } => DemandMethod::MonteCarlo {
                samples,
                seed: sub_seed(seed, i as u64),
            },
            other => other,
        };
        let d = demand(u, p, e.budget(i, p), agent_method)?;
        if matches!(method, DemandMethod::MonteCarlo { .. }) {
            mc_min = mc_min.min(d.accepted);
        }
        let achieved = u.utility(x.row(i))?;
        let best = d.utility.max(u.utility(e.endowment(i))?).max(achieved);
        per_agent.push(positive(best - achieved));
    }
    Ok(CeLoss {
        value: per_agent.iter().sum(),
        per_agent,
        mc_samples_used: if mc_min == usize::MAX { 0 } else { mc_min },
    })
}

/// `sum_i (u_i(e_i) - u_i(x_i))^+`.
pub fn loss_si(e: &Economy, x: &Allocation) -> Result<f64> {
    check_allocation(e, x)?;
    (0..e.n())
        .map(|i| {
            let u = e.utility(i);
            Ok(positive(u.utility(e.endowment(i))? - u.utility(x.row(i))?))
        })
        .sum()
}

/// A market outcome that has been certified as a competitive equilibrium of
/// the true economy, and is therefore Pareto-efficient.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceEquilibrium {
    outcome: MarketOutcome,
    certificate: CeCertificate,
    utilities: Vec<f64>,
}

impl ReferenceEquilibrium {
    /// Wraps `outcome` after certifying it with the exact demand oracle at
    /// tolerance `eps`; refuses uncertified outcomes.
    pub fn certify(e: &Economy, outcome: MarketOutcome, eps: f64) -> Result<Self> {
        let certificate = certify_ce_with(
            &outcome,
            e.utilities(),
            e.endowments(),
            eps,
            DemandMethod::Exact,
        )?;
        if !certificate.is_equilibrium {
            return Err(Error::Contract(format!(
                "reference outcome is not an equilibrium at eps = {eps}: \
                 clearing gap {:?}, demand gap {:?}",
                certificate.clearing_gap, certificate.demand_gap
            )));
        }
        let utilities = (0..e.n())
            .map(|i| e.utility(i).utility(outcome.allocation.row(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ReferenceEquilibrium {
            outcome,
            certificate,
            utilities,
        })
    }

    /// Solves the true economy with long-run proportional response (falling
    /// back to tatonnement warm-started at its prices) and certifies the result.
    pub fn solve(e: &Economy, eps: f64) -> Result<Self> {
        let pr = proportional_response(
            e.utilities(),
            e.endowments(),
            ProportionalResponseOptions {
                iters: 20_000,
                bid_tol: 1e-14,
            },
            None,
        )?;
        match Self::certify(e, pr.outcome.clone(), eps) {
            Ok(r) => Ok(r),
            Err(pr_err) => {
                let t = tatonnement_from(
                    e.utilities(),
                    e.endowments(),
                    TatonnementOptions {
                        step: 0.05,
                        max_iters: 20_000,
                        tol: eps * 1e-3,
                        ..Default::default()
                    },
                    Some(&pr.outcome.prices),
                )?;
                Self::certify(e, t.outcome, eps).map_err(|_| pr_err)
            }
        }
    }

    pub fn outcome(&self) -> &MarketOutcome {
        &self.outcome
    }

    pub fn certificate(&self) -> &CeCertificate {
        &self.certificate
    }

    /// `u_i(x*_i)` for every agent.
    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }
}

/// `sum_i (u_i(x*_i) - u_i(x_i))^+` against a certified equilibrium `x*`;
/// an upper bound on the Pareto-efficiency loss.
pub fn loss_pe_upper(e: &Economy, x: &Allocation, reference: &ReferenceEquilibrium) -> Result<f64> {
    check_allocation(e, x)?;
    if reference.utilities.len() != e.n() {
        return Err(Error::Contract(
            "reference belongs to a different economy".into(),
        ));
    }
    (0..e.n())
        .map(|i| {
            Ok(positive(
                reference.utilities[i] - e.utility(i).utility(x.row(i))?,
            ))
        })
        .sum()
}

/// Result of the grid Pareto-front oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeGridLoss {
    pub value: f64,
    pub grid_step: f64,
    /// Number of distinct Pareto-efficient utility profiles on the grid
    /// (0 when the single-resource shortcut was used).
    pub front_size: usize,
}

/// `min over grid Pareto-efficient x' of sum_i (u_i(x'_i) - u_i(x_i))^+`.
///
/// Allocations are enumerated on a grid of `grid_step` (which must divide 1).
/// Utilities are strictly increasing, so efficient allocations hand out every
/// unit; the front is built agent by agent, since an efficient allocation is
/// also efficient for every prefix of agents splitting their own resources.
pub fn loss_pe_exact_small(e: &Economy, x: &Allocation, grid_step: f64) -> Result<PeGridLoss> {
    check_allocation(e, x)?;
    let (n, m) = (e.n(), e.m());
    if n * m > PE_EXACT_MAX_CELLS {
        return Err(Error::Contract(format!(
            "exact PE loss is limited to n*m <= {PE_EXACT_MAX_CELLS} (got {}); use loss_pe_upper",
            n * m
        )));
    }
    let units = (1.0 / grid_step).round();
    if !(grid_step > 0.0) || units < 1.0 || (units * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "grid step {grid_step} must divide 1"
        )));
    }
    let k = units as usize;
    let current = (0..n)
        .map(|i| e.utility(i).utility(x.row(i)))
        .collect::<Result<Vec<_>>>()?;

    if n == 1 {
        let full = e.utility(0).utility(&vec![1.0; m])?;
        return Ok(PeGridLoss {
            value: positive(full - current[0]),
            grid_step,
            front_size: 1,
        });
    }
    if m == 1 {
        // With one resource every non-wasteful split is efficient; minimize
        // the separable objective over compositions of `k` units.
        let gain = |i: usize, a: usize| -> f64 {
            positive(e.utility(i).utility_unchecked(&[a as f64 / k as f64]) - current[i])
        };
        let mut best: Vec<f64> = (0..=k).map(|a| gain(0, a)).collect();
        for i in 1..n {
            let mut next = vec![f64::INFINITY; k + 1];
            for total in 0..=k {
                for a in 0..=total {
                    let v = best[total - a] + gain(i, a);
                    if v < next[total] {
                        next[total] = v;
                    }
                }
            }
            best = next;
        }
        return Ok(PeGridLoss {
            value: best[k],
            grid_step,
            front_size: 0,
        });
    }

    let grid = Grid::new(m, k);
    let tables: Vec<Vec<i64>> = (0..n)
        .map(|i| {
            let u = e.utility(i);
            (0..grid.cells())
                .map(|c| {
                    let bundle: Vec<f64> = grid
                        .decode(c)
                        .iter()
                        .map(|&v| v as f64 / k as f64)
                        .collect();
                    quantize(u.utility_unchecked(&bundle))
                })
                .collect()
        })
        .collect();

    let front = front_for_prefix(&grid, &tables, n, grid.cells() - 1, &mut BTreeMap::new());
    let value = front
        .chunks_exact(n)
        .map(|profile| {
            profile
                .iter()
                .zip(&current)
                .map(|(&q, &c)| positive(q as f64 * PROFILE_QUANTUM - c))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    Ok(PeGridLoss {
        value,
        grid_step,
        front_size: front.len() / n,
    })
}

fn quantize(v: f64) -> i64 {
    (v / PROFILE_QUANTUM).round() as i64
}

/// Mixed-radix indexing of integer bundles in `{0..=k}^m`.
struct Grid {
    m: usize,
    base: usize,
}

impl Grid {
    fn new(m: usize, k: usize) -> Self {
        Grid { m, base: k + 1 }
    }

    fn cells(&self) -> usize {
        self.base.pow(self.m as u32)
    }

    fn decode(&self, mut c: usize) -> Vec<usize> {
        let mut v = vec![0; self.m];
        for slot in v.iter_mut() {
            *slot = c % self.base;
            c /= self.base;
        }
        v
    }

    /// Calls `f(c, r - c)` for every bundle `c <= r` componentwise.
    fn for_each_split(&self, r: usize, mut f: impl FnMut(usize, usize)) {
        let rv = self.decode(r);
        let mut cv = vec![0usize; self.m];
        loop {
            let mut c = 0;
            let mut rest = 0;
            for j in (0..self.m).rev() {
                c = c * self.base + cv[j];
                rest = rest * self.base + (rv[j] - cv[j]);
            }
            f(c, rest);
            let mut j = 0;
            loop {
                if j == self.m {
                    return;
                }
                if cv[j] < rv[j] {
                    cv[j] += 1;
                    break;
                }
                cv[j] = 0;
                j += 1;
            }
        }
    }
}

/// Pareto front (flattened profiles of `agents` entries) for the first
/// `agents` agents splitting supply `r` completely.
fn front_for_prefix(
    grid: &Grid,
    tables: &[Vec<i64>],
    agents: usize,
    r: usize,
    memo: &mut BTreeMap<(usize, usize), Vec<i64>>,
) -> Vec<i64> {
    if agents == 1 {
        return vec![tables[0][r]];
    }
    if let Some(f) = memo.get(&(agents, r)) {
        return f.clone();
    }
    let mut points: Vec<i64> = Vec::new();
    let last = &tables[agents - 1];
    if agents == 2 {
        grid.for_each_split(r, |c, rest| {
            points.push(tables[0][rest]);
            points.push(last[c]);
        });
    } else {
        let mut splits = Vec::new();
        grid.for_each_split(r, |c, rest| splits.push((c, rest)));
        for (c, rest) in splits {
            let sub = front_for_prefix(grid, tables, agents - 1, rest, memo);
            for profile in sub.chunks_exact(agents - 1) {
                points.extend_from_slice(profile);
                points.push(last[c]);
            }
        }
    }
    let front = pareto_filter(points, agents);
    // Sub-fronts are only reused for strict prefixes of the full agent set.
    if agents < tables.len() {
        memo.insert((agents, r), front.clone());
    }
    front
}

/// Keeps the distinct non-dominated profiles of a flattened point set.
fn pareto_filter(points: Vec<i64>, dim: usize) -> Vec<i64> {
    if dim > 3 {
        return pareto_filter_naive(points, dim);
    }
    // Pad to three coordinates; the zero padding never breaks a comparison.
    let mut rows: Vec<[i64; 3]> = points
        .chunks_exact(dim)
        .map(|r| {
            let mut a = [0; 3];
            a[..dim].copy_from_slice(r);
            a
        })
        .collect();
    rows.sort_unstable_by(|a, b| b.cmp(a));
    rows.dedup();
    let mut out = Vec::new();
    match dim {
        1 => out.push(rows[0][0]),
        2 => {
            let mut best = i64::MIN;
            for r in rows {
                if r[1] > best {
                    best = r[1];
                    out.extend_from_slice(&r[..2]);
                }
            }
        }
        _ => {
            // Staircase over (b, c): keys increase while values decrease.
            let mut stairs: BTreeMap<i64, i64> = BTreeMap::new();
            for r in rows {
                let (b, c) = (r[1], r[2]);
                if let Some((_, &cmax)) = stairs.range(b..).next() {
                    if cmax >= c {
                        continue;
                    }
                }
                out.extend_from_slice(&r);
                let dominated: Vec<i64> = stairs
                    .range(..=b)
                    .rev()
                    .take_while(|(_, &v)| v <= c)
                    .map(|(&k, _)| k)
                    .collect();
                for k in dominated {
                    stairs.remove(&k);
                }
                stairs.insert(b, c);
            }
        }
    }
    out
}

fn pareto_filter_naive(points: Vec<i64>, dim: usize) -> Vec<i64> {
    let mut rows: Vec<&[i64]> = points.chunks_exact(dim).collect();
    rows.sort_unstable_by(|a, b| b.cmp(a));
    rows.dedup();
    let mut kept: Vec<&[i64]> = Vec::new();
    for r in rows {
        if !kept.iter().any(|w| w.iter().zip(r).all(|(a, b)| a >= b)) {
            kept.push(r);
        }
    }
    kept.concat()
}

/// Options controlling [`loss_fd`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions {
    pub ce_demand: DemandMethod,
    /// Grid step for the exact PE oracle; `None` skips it.
    pub pe_exact_grid: Option<f64>,
}

/// Assembles the per-round loss report for `outcome`.
pub fn loss_fd(
    e: &Economy,
    outcome: &MarketOutcome,
    reference: &ReferenceEquilibrium,
    options: LossOptions,
) -> Result<LossReport> {
    let x = &outcome.allocation;
    let ce = loss_ce(e, outcome, options.ce_demand)?;
    let l_si = loss_si(e, x)?;
    let l_pe_upper = loss_pe_upper(e, x, reference)?;
    let l_pe_exact = match options.pe_exact_grid {
        Some(step) => Some(loss_pe_exact_small(e, x, step)?.value),
        None => None,
    };
    Ok(LossReport {
        l_ce: ce.value,
        l_si,
        l_pe_upper,
        l_pe_exact,
        l_fd_upper: l_pe_upper.max(l_si),
        mc_samples_used: ce.mc_samples_used,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CumulativeLoss {
    pub l_ce: f64,
    pub l_fd_upper: f64,
}

/// Running prefix sums of the CE and FD losses.
pub fn cumulative(reports: &[LossReport]) -> Vec<CumulativeLoss> {
    reports
        .iter()
        .scan(CumulativeLoss::default(), |acc, r| {
            acc.l_ce += r.l_ce;
            acc.l_fd_upper += r.l_fd_upper;
            Some(*acc)
        })
        .collect()
}

/// Totals over all reports; zero for an empty slice.
pub fn cumulative_total(reports: &[LossReport]) -> CumulativeLoss {
    cumulative(reports).last().copied().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::{ParametricUtility, PriceVector};

    fn golden() -> Economy {
        let u = |t: [f64; 2]| ParametricUtility::linear(t.to_vec()).unwrap();
        Economy::new(
            vec![vec![0.45, 0.05], vec![0.45, 0.05], vec![0.1, 0.9]],
            vec![u([0.1, 1.0]), u([0.2, 1.0]), u([1.0, 0.1])],
            0.0,
        )
        .unwrap()
    }

    fn equilibrium() -> MarketOutcome {
        MarketOutcome {
            allocation: Allocation::new(vec![vec![0.0, 0.5], vec![0.0, 0.5], vec![1.0, 0.0]])
                .unwrap(),
            prices: PriceVector::new(vec![0.5, 0.5]).unwrap(),
        }
    }

    fn alternative() -> Allocation {
        Allocation::new(vec![vec![0.35, 0.49], vec![0.35, 0.49], vec![0.3, 0.02]]).unwrap()
    }

    #[test]
    fn ce_loss_zero_at_equilibrium() {
        let l = loss_ce(&golden(), &equilibrium(), DemandMethod::ExactLinear).unwrap();
        assert!(l.value.abs() < 1e-9);
    }

    #[test]
    fn ce_loss_alternative_allocation() {
        let outcome = MarketOutcome {
            allocation: alternative(),
            prices: PriceVector::new(vec![0.5, 0.5]).unwrap(),
        };
        let l = loss_ce(&golden(), &outcome, DemandMethod::ExactLinear).unwrap();
        assert_close!(l.value, 0.698, 1e-12);
    }

    #[test]
    fn ce_loss_single_owner() {
        let u = ParametricUtility::linear(vec![0.3, 0.6]).unwrap();
        let e = Economy::new(vec![vec![1.0, 1.0]], vec![u], 0.0).unwrap();
        let outcome = MarketOutcome {
            allocation: Allocation::new(vec![vec![1.0, 1.0]]).unwrap(),
            prices: PriceVector::new(vec![0.3, 0.7]).unwrap(),
        };
        for method in [
            DemandMethod::Exact,
            DemandMethod::ProjectedAscent,
            DemandMethod::MonteCarlo {
                samples: 50,
                seed: 1,
            },
        ] {
            assert_eq!(loss_ce(&e, &outcome, method).unwrap().value, 0.0);
        }
    }

    #[test]
    fn si_loss_examples() {
        let e = golden();
        assert_eq!(loss_si(&e, &e.endowment_allocation()).unwrap(), 0.0);
        assert_eq!(loss_si(&e, &equilibrium().allocation).unwrap(), 0.0);
        assert_close!(loss_si(&e, &Allocation::zeros(3, 2)).unwrap(), 0.425, 1e-12);
        assert_eq!(loss_si(&e, &alternative()).unwrap(), 0.0);
    }

    #[test]
    fn reference_refuses_uncertified_outcome() {
        let e = golden();
        let bad = MarketOutcome {
            allocation: e.endowment_allocation(),
            prices: PriceVector::new(vec![0.5, 0.5]).unwrap(),
        };
        assert!(matches!(
            ReferenceEquilibrium::certify(&e, bad, 1e-3),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn pe_upper_examples() {
        let e = golden();
        let r = ReferenceEquilibrium::certify(&e, equilibrium(), 1e-6).unwrap();
        assert_eq!(
            loss_pe_upper(&e, &equilibrium().allocation, &r).unwrap(),
            0.0
        );
        let end = loss_pe_upper(&e, &e.endowment_allocation(), &r).unwrap();
        assert_close!(end, 1.575, 1e-12);
        assert_close!(loss_pe_upper(&e, &alternative(), &r).unwrap(), 0.698, 1e-12);
    }

    #[test]
    fn solved_reference_matches_golden() {
        let e = golden();
        let r = ReferenceEquilibrium::solve(&e, 1e-6).unwrap();
        for (a, b) in r.utilities().iter().zip([0.5, 0.5, 1.0]) {
            assert_close!(*a, b, 1e-4);
        }
    }

    #[test]
    fn pe_exact_zero_for_single_agent_bundle() {
        let e = golden();
        let everything =
            Allocation::new(vec![vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let l = loss_pe_exact_small(&e, &everything, 0.05).unwrap();
        assert_eq!(l.value, 0.0);
    }

    #[test]
    fn pe_exact_zero_at_equilibrium() {
        let e = golden();
        let l = loss_pe_exact_small(&e, &equilibrium().allocation, 0.01).unwrap();
        assert!(l.value <= 0.01, "{l:?}");
    }

    #[test]
    fn pe_exact_rejects_large_instances() {
        let u = || ParametricUtility::linear(vec![0.5, 0.5, 0.5]).unwrap();
        let e = Economy::new(
            vec![vec![0.5; 3], vec![0.5; 3], vec![0.0; 3]],
            vec![u(), u(), u()],
            0.0,
        )
        .unwrap();
        assert!(matches!(
            loss_pe_exact_small(&e, &Allocation::zeros(3, 3), 0.1),
            Err(Error::Contract(_))
        ));
        assert!(loss_pe_exact_small(&golden(), &alternative(), 0.03).is_err());
    }

    #[test]
    fn pe_exact_single_resource_dp() {
        let u = |t: f64| ParametricUtility::linear(vec![t]).unwrap();
        let e = Economy::new(vec![vec![0.5], vec![0.5]], vec![u(0.5), u(1.0)], 0.0).unwrap();
        // Wasteful: 0.4 of the good is unused; giving it to agent 1 costs 0.5 * 0.4.
        let x = Allocation::new(vec![vec![0.1], vec![0.5]]).unwrap();
        assert_close!(loss_pe_exact_small(&e, &x, 0.1).unwrap().value, 0.2, 1e-9);
        let x = Allocation::new(vec![vec![0.5], vec![0.5]]).unwrap();
        assert_eq!(loss_pe_exact_small(&e, &x, 0.1).unwrap().value, 0.0);
    }

    #[test]
    fn pareto_filter_three_dims() {
        let pts = vec![3, 1, 1, 1, 3, 1, 1, 1, 3, 1, 1, 1, 2, 2, 2, 3, 1, 1];
        let f = pareto_filter(pts, 3);
        let mut rows: Vec<&[i64]> = f.chunks(3).collect();
        rows.sort();
        assert_eq!(
            rows,
            vec![&[1, 1, 3][..], &[1, 3, 1], &[2, 2, 2], &[3, 1, 1]]
        );
    }

    #[test]
    fn cumulative_sums() {
        assert!(cumulative(&[]).is_empty());
        assert_eq!(cumulative_total(&[]), CumulativeLoss::default());
        let r = LossReport {
            l_ce: 0.25,
            l_si: 0.1,
            l_pe_upper: 0.3,
            l_pe_exact: None,
            l_fd_upper: 0.3,
            mc_samples_used: 0,
        };
        let c = cumulative(&vec![r; 8]);
        assert_eq!(c.len(), 8);
        assert_eq!(c[7].l_ce, 2.0);
        assert_close!(c[7].l_fd_upper, 2.4, 1e-12);
    }

    #[test]
    fn fd_is_max_of_parts() {
        let e = golden();
        let r = ReferenceEquilibrium::certify(&e, equilibrium(), 1e-6).unwrap();
        let outcome = MarketOutcome {
            allocation: e.endowment_allocation(),
            prices: PriceVector::new(vec![0.5, 0.5]).unwrap(),
        };
        let rep = loss_fd(
            &e,
            &outcome,
            &r,
            LossOptions {
                ce_demand: DemandMethod::Exact,
                pe_exact_grid: None,
            },
        )
        .unwrap();
        assert_eq!(rep.l_fd_upper, rep.l_pe_upper.max(rep.l_si));
        assert_eq!(rep.l_si, 0.0);
        assert_close!(rep.l_pe_upper, 1.575, 1e-12);
    }
}
