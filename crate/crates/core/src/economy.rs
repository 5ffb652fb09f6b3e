//! Exchange-economy world model: endowments, allocations, prices, the
//! parametric utility class `u(x) = mu(theta . phi(x))` and the
//! budget-constrained demand oracles.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used on every feasibility and normalization check.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Proposal cap for the Monte-Carlo demand oracle.
pub const MC_MAX_PROPOSALS: usize = 100_000;

/// Functional form of an agent's utility.
///
/// Each family fixes a coordinatewise feature map `phi` and an outer link `mu`:
///
/// | family   | `phi_j(x)`                   | `mu(y)`       |
/// |----------|------------------------------|---------------|
/// | Linear   | `x`                          | `y`           |
/// | CES(rho) | `x^rho`                      | `y^(1/rho)`   |
/// | Amdahl   | `x / (f_j + (1 - f_j) x)`    | `y`           |
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Linear,
    Ces { rho: f64 },
    Amdahl { f: Vec<f64> },
}

impl Family {
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            Family::Linear => Ok(()),
            Family::Ces { rho } => {
                if *rho > 0.0 && *rho <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidEconomy(format!(
                        "CES exponent must lie in (0, 1], got {rho}"
                    )))
                }
            }
            Family::Amdahl { f } => {
                if f.len() != m {
                    return Err(Error::InvalidEconomy(format!(
                        "Amdahl family needs {m} parallel fractions, got {}",
                        f.len()
                    )));
                }
                match f.iter().find(|&&fj| !(fj > 0.0 && fj < 1.0)) {
                    Some(bad) => Err(Error::InvalidEconomy(format!(
                        "Amdahl parallel fraction must lie in (0, 1), got {bad}"
                    ))),
                    None => Ok(()),
                }
            }
        }
    }

    /// True when the link `mu` is the identity.
    pub fn has_identity_link(&self) -> bool {
        match self {
            Family::Linear | Family::Amdahl { .. } => true,
            Family::Ces { rho } => *rho == 1.0,
        }
    }

    /// True when `theta . phi(x)` is linear in `x`, i.e. demand is a greedy
    /// fractional knapsack.
    pub fn is_linear(&self) -> bool {
        matches!(self, Family::Linear) || matches!(self, Family::Ces { rho } if *rho == 1.0)
    }

    #[inline]
    pub fn feature(&self, j: usize, x: f64) -> f64 {
        match self {
            Family::Linear => x,
            Family::Ces { rho } => {
                if *rho == 1.0 {
                    x
                } else {
                    x.powf(*rho)
                }
            }
            Family::Amdahl { f } => {
                let fj = f[j];
                x / (fj + (1.0 - fj) * x)
            }
        }
    }

    /// `d phi_j / dx` at `x`. Infinite at `x = 0` for CES with `rho < 1`.
    #[inline]
    pub fn feature_derivative(&self, j: usize, x: f64) -> f64 {
        match self {
            Family::Linear => 1.0,
            Family::Ces { rho } => rho * x.powf(rho - 1.0),
            Family::Amdahl { f } => {
                let fj = f[j];
                let d = fj + (1.0 - fj) * x;
                fj / (d * d)
            }
        }
    }

    #[inline]
    pub fn link(&self, y: f64) -> f64 {
        match self {
            Family::Ces { rho } if *rho != 1.0 => y.max(0.0).powf(1.0 / rho),
            _ => y,
        }
    }

    #[inline]
    pub fn link_derivative(&self, y: f64) -> f64 {
        match self {
            Family::Ces { rho } if *rho != 1.0 => y.max(0.0).powf(1.0 / rho - 1.0) / rho,
            _ => 1.0,
        }
    }
}

/// Axis-aligned parameter box `[min, max]^m` with `min > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaBox {
    pub min: f64,
    pub max: f64,
}

impl ThetaBox {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min > 0.0) || !(max >= min) || !max.is_finite() {
            return Err(Error::InvalidEconomy(format!(
                "parameter box needs 0 < min <= max < inf, got [{min}, {max}]"
            )));
        }
        Ok(ThetaBox { min, max })
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.iter().all(|&t| t >= self.min && t <= self.max)
    }

    /// Euclidean projection onto the box (coordinatewise clamp).
    pub fn project(&self, theta: &mut [f64]) {
        for t in theta.iter_mut() {
            *t = t.clamp(self.min, self.max);
        }
    }
}

impl Default for ThetaBox {
    fn default() -> Self {
        ThetaBox {
            min: 0.01,
            max: 1.0,
        }
    }
}

/// One agent's utility `mu(theta . phi(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParametricUtility {
    family: Family,
    theta: Vec<f64>,
    theta_box: ThetaBox,
}

impl ParametricUtility {
    pub fn new(family: Family, theta: Vec<f64>, theta_box: ThetaBox) -> Result<Self> {
        family.validate(theta.len())?;
        if theta.is_empty() {
            return Err(Error::InvalidEconomy("empty parameter vector".into()));
        }
        if !theta_box.contains(&theta) {
            return Err(Error::InvalidEconomy(format!(
                "parameters {theta:?} outside box [{}, {}]",
                theta_box.min, theta_box.max
            )));
        }
        Ok(ParametricUtility {
            family,
            theta,
            theta_box,
        })
    }

    pub fn linear(theta: Vec<f64>) -> Result<Self> {
        let lo = theta
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .min(0.01);
        let hi = theta.iter().copied().fold(1.0, f64::max);
        Self::new(Family::Linear, theta, ThetaBox::new(lo, hi)?)
    }

    /// Same family and box with a different parameter vector. The caller
    /// guarantees `theta` lies in the box (e.g. after projection).
    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        debug_assert_eq!(theta.len(), self.theta.len());
        debug_assert!(self.theta_box.contains(&theta));
        ParametricUtility {
            family: self.family.clone(),
            theta,
            theta_box: self.theta_box,
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_box(&self) -> ThetaBox {
        self.theta_box
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// `phi(x)`, rejecting coordinates outside `[0, 1]` beyond tolerance.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_bundle(x, self.dim())?;
        Ok(self.features_unchecked(x))
    }

    pub(crate) fn features_unchecked(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &xj)| self.family.feature(j, xj.clamp(0.0, 1.0)))
            .collect()
    }

    /// `theta . phi(x)` without domain checks.
    #[inline]
    pub(crate) fn index_unchecked(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.theta)
            .enumerate()
            .map(|(j, (&xj, &t))| t * self.family.feature(j, xj.clamp(0.0, 1.0)))
            .sum()
    }

    pub fn utility(&self, x: &[f64]) -> Result<f64> {
        check_bundle(x, self.dim())?;
        Ok(self.utility_unchecked(x))
    }

    #[inline]
    pub(crate) fn utility_unchecked(&self, x: &[f64]) -> f64 {
        self.family.link(self.index_unchecked(x))
    }

    /// `phi(1)`, the feature vector of a full unit of every resource.
    pub fn features_of_ones(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.family.feature(j, 1.0))
            .collect()
    }
}

fn check_bundle(x: &[f64], m: usize) -> Result<()> {
    if x.len() != m {
        return Err(Error::Domain(format!(
            "bundle has {} coordinates, expected {m}",
            x.len()
        )));
    }
    match x
        .iter()
        .find(|&&v| !(-FEASIBILITY_TOL..=1.0 + FEASIBILITY_TOL).contains(&v))
    {
        Some(v) => Err(Error::Domain(format!(
            "allocation coordinate {v} outside [0, 1]"
        ))),
        None => Ok(()),
    }
}

/// `phi(x)` for a single agent bundle.
pub fn eval_features(u: &ParametricUtility, x: &[f64]) -> Result<Vec<f64>> {
    u.features(x)
}

/// `mu(theta . phi(x))` for a single agent bundle.
pub fn eval_utility(u: &ParametricUtility, x: &[f64]) -> Result<f64> {
    u.utility(x)
}

/// An n x m allocation with every column summing to at most one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Allocation {
    rows: Vec<Vec<f64>>,
}

impl Allocation {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || m == 0 {
            return Err(Error::Domain("allocation must be non-empty".into()));
        }
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Domain("allocation rows have unequal length".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0 + FEASIBILITY_TOL).contains(&v) {
                    return Err(Error::Domain(format!(
                        "allocation entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
            }
        }
        for j in 0..m {
            let s: f64 = rows.iter().map(|r| r[j]).sum();
            if s > 1.0 + FEASIBILITY_TOL {
                return Err(Error::Domain(format!(
                    "resource {j} over-allocated: column sum {s}"
                )));
            }
        }
        Ok(Allocation { rows })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Allocation {
            rows: vec![vec![0.0; m]; n],
        }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn m(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        self.rows.iter().map(|r| r[j]).sum()
    }

    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<f64>>) -> Self {
        Allocation { rows }
    }
}

impl TryFrom<Vec<Vec<f64>>> for Allocation {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Allocation::new(rows)
    }
}

impl From<Allocation> for Vec<Vec<f64>> {
    fn from(a: Allocation) -> Self {
        a.rows
    }
}

/// Nonnegative prices summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PriceVector(Vec<f64>);

impl PriceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("empty price vector".into()));
        }
        if let Some(v) = values.iter().find(|&&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("negative or non-finite price {v}")));
        }
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > FEASIBILITY_TOL {
            return Err(Error::Domain(format!("prices sum to {s}, expected 1")));
        }
        Ok(PriceVector(values))
    }

    /// Rescales a nonnegative, not-all-zero vector to sum one.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let s: f64 = values.iter().sum();
        if values.iter().any(|&v| !(v >= 0.0)) || !(s > 0.0) || !s.is_finite() {
            return Err(Error::Domain(format!(
                "cannot normalize price vector {values:?}"
            )));
        }
        values.iter_mut().for_each(|v| *v /= s);
        Ok(PriceVector(values))
    }

    pub fn uniform(m: usize) -> Self {
        PriceVector(vec![1.0 / m as f64; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `p . x`
    pub fn cost(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(p, x)| p * x).sum()
    }
}

impl TryFrom<Vec<f64>> for PriceVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        PriceVector::new(v)
    }
}

impl From<PriceVector> for Vec<f64> {
    fn from(p: PriceVector) -> Self {
        p.0
    }
}

/// The ground-truth world: endowments, true utilities and feedback noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Economy {
    endowments: Vec<Vec<f64>>,
    utilities: Vec<ParametricUtility>,
    noise_sigma: f64,
}

impl Economy {
    pub fn new(
        endowments: Vec<Vec<f64>>,
        utilities: Vec<ParametricUtility>,
        noise_sigma: f64,
    ) -> Result<Self> {
        let n = endowments.len();
        if n == 0 {
            return Err(Error::InvalidEconomy(
                "economy needs at least one agent".into(),
            ));
        }
        let m = endowments[0].len();
        if m == 0 {
            return Err(Error::InvalidEconomy(
                "economy needs at least one resource".into(),
            ));
        }
        if endowments.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidEconomy(
                "endowment rows have unequal length".into(),
            ));
        }
        if let Some(v) = endowments.iter().flatten().find(|&&v| !(v >= 0.0)) {
            return Err(Error::InvalidEconomy(format!("negative endowment {v}")));
        }
        for j in 0..m {
            let s: f64 = endowments.iter().map(|r| r[j]).sum();
            if (s - 1.0).abs() > FEASIBILITY_TOL {
                return Err(Error::InvalidEconomy(format!(
                    "supply of resource {j} sums to {s}, expected 1"
                )));
            }
        }
        if utilities.len() != n {
            return Err(Error::InvalidEconomy(format!(
                "{} utilities for {n} agents",
                utilities.len()
            )));
        }
        if let Some(u) = utilities.iter().find(|u| u.dim() != m) {
            return Err(Error::InvalidEconomy(format!(
                "utility dimension {} does not match {m} resources",
                u.dim()
            )));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::InvalidEconomy(format!(
                "noise scale must be nonnegative, got {noise_sigma}"
            )));
        }
        Ok(Economy {
            endowments,
            utilities,
            noise_sigma,
        })
    }

    pub fn n(&self) -> usize {
        self.endowments.len()
    }

    pub fn m(&self) -> usize {
        self.endowments[0].len()
    }

    pub fn endowments(&self) -> &[Vec<f64>] {
        &self.endowments
    }

    pub fn endowment(&self, i: usize) -> &[f64] {
        &self.endowments[i]
    }

    pub fn endowment_allocation(&self) -> Allocation {
        Allocation::from_rows_unchecked(self.endowments.clone())
    }

    pub fn utilities(&self) -> &[ParametricUtility] {
        &self.utilities
    }

    pub fn utility(&self, i: usize) -> &ParametricUtility {
        &self.utilities[i]
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn with_noise_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::InvalidEconomy(format!(
                "negative noise scale {sigma}"
            )));
        }
        self.noise_sigma = sigma;
        Ok(self)
    }

    /// `p . e_i`
    pub fn budget(&self, i: usize, prices: &PriceVector) -> f64 {
        prices.cost(&self.endowments[i])
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: EconomyFile = serde_json::from_str(s)?;
        file.into_economy()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_file(&self) -> EconomyFile {
        EconomyFile {
            n: self.n(),
            m: self.m(),
            endowments: self.endowments.clone(),
            agents: self
                .utilities
                .iter()
                .map(|u| AgentSpec {
                    params: match u.family() {
                        Family::Linear => FamilyParams::Linear,
                        Family::Ces { rho } => FamilyParams::Ces { rho: *rho },
                        Family::Amdahl { f } => FamilyParams::Amdahl {
                            f: ParallelFraction::PerResource(f.clone()),
                        },
                    },
                    theta: u.theta().to_vec(),
                    theta_min: u.theta_box().min,
                    theta_max: u.theta_box().max,
                })
                .collect(),
            sigma: self.noise_sigma,
        }
    }
}

/// `u_i(x_i) + N(0, sigma^2)`.
pub fn sample_feedback<R: Rng + ?Sized>(
    economy: &Economy,
    i: usize,
    x_i: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let u = economy.utility(i).utility(x_i)?;
    let z: f64 = StandardNormal.sample(rng);
    Ok(u + economy.noise_sigma * z)
}

// ---------------------------------------------------------------------------
// Economy definition file
// ---------------------------------------------------------------------------

/// On-disk economy definition (JSON).
///
/// ```json
/// {
///   "n": 3, "m": 2,
///   "endowments": [[0.45, 0.05], [0.45, 0.05], [0.1, 0.9]],
///   "agents": [
///     {"family": "linear", "theta": [0.1, 1.0], "theta_min": 0.01, "theta_max": 1.0},
///     {"family": "ces", "params": {"rho": 0.5}, "theta": [0.3, 0.7]},
///     {"family": "amdahl", "params": {"f": 0.3}, "theta": [0.5, 0.5]}
///   ],
///   "sigma": 0.1
/// }
/// ```
///
/// `theta_min` defaults to 0.01 and `theta_max` to 1.0. Amdahl's `f` is a
/// scalar (replicated across resources) or a per-resource array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyFile {
    pub n: usize,
    pub m: usize,
    pub endowments: Vec<Vec<f64>>,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    #[serde(flatten)]
    pub params: FamilyParams,
    pub theta: Vec<f64>,
    #[serde(default = "default_theta_min")]
    pub theta_min: f64,
    #[serde(default = "default_theta_max")]
    pub theta_max: f64,
}

fn default_theta_min() -> f64 {
    ThetaBox::default().min
}

fn default_theta_max() -> f64 {
    ThetaBox::default().max
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum FamilyParams {
    Linear,
    Ces { rho: f64 },
    Amdahl { f: ParallelFraction },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParallelFraction {
    Scalar(f64),
    PerResource(Vec<f64>),
}

impl FamilyParams {
    fn into_family(self, m: usize) -> Family {
        match self {
            FamilyParams::Linear => Family::Linear,
            FamilyParams::Ces { rho } => Family::Ces { rho },
            FamilyParams::Amdahl { f } => Family::Amdahl {
                f: match f {
                    ParallelFraction::Scalar(v) => vec![v; m],
                    ParallelFraction::PerResource(v) => v,
                },
            },
        }
    }
}

impl EconomyFile {
    pub fn into_economy(self) -> Result<Economy> {
        if self.endowments.len() != self.n {
            return Err(Error::InvalidEconomy(format!(
                "declared n = {} but {} endowment rows",
                self.n,
                self.endowments.len()
            )));
        }
        if self.agents.len() != self.n {
            return Err(Error::InvalidEconomy(format!(
                "declared n = {} but {} agents",
                self.n,
                self.agents.len()
            )));
        }
        if self.endowments.iter().any(|r| r.len() != self.m) {
            return Err(Error::InvalidEconomy(format!(
                "endowment rows must have m = {} entries",
                self.m
            )));
        }
        let m = self.m;
        let utilities = self
            .agents
            .into_iter()
            .map(|a| {
                let family = a.params.into_family(m);
                ParametricUtility::new(family, a.theta, ThetaBox::new(a.theta_min, a.theta_max)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Economy::new(self.endowments, utilities, self.sigma)
    }
}

// ---------------------------------------------------------------------------
// Demand
// ---------------------------------------------------------------------------

/// How to solve `max u(x) s.t. p . x <= budget, 0 <= x <= 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DemandMethod {
    /// Greedy by `theta_j / p_j`; valid only for linear utilities.
    ExactLinear,
    /// Greedy for linear utilities, multiplier bisection (water-filling) for
    /// strictly concave features. Exact up to bisection precision.
    Exact,
    /// Curvature-scaled projected ascent over the box-and-budget polytope.
    ProjectedAscent,
    /// Best of `samples` budget-feasible uniform simplex draws.
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemandResult {
    pub bundle: Vec<f64>,
    pub utility: f64,
    /// Accepted Monte-Carlo samples (0 for deterministic methods).
    pub accepted: usize,
    /// Set when Monte-Carlo sampling accepted nothing.
    pub low_quality: bool,
}

impl DemandResult {
    fn deterministic(u: &ParametricUtility, bundle: Vec<f64>) -> Self {
        let utility = u.utility_unchecked(&bundle);
        DemandResult {
            bundle,
            utility,
            accepted: 0,
            low_quality: false,
        }
    }
}

/// Budget-constrained utility maximization for one agent.
pub fn demand(
    u: &ParametricUtility,
    prices: &PriceVector,
    budget: f64,
    method: DemandMethod,
) -> Result<DemandResult> {
    if prices.len() != u.dim() {
        return Err(Error::Domain(format!(
            "{} prices for a {}-resource utility",
            prices.len(),
            u.dim()
        )));
    }
    if !(budget >= 0.0) {
        return Err(Error::Contract(format!("negative budget {budget}")));
    }
    let p = prices.values();
    match method {
        DemandMethod::ExactLinear => {
            if !u.family().is_linear() {
                return Err(Error::Contract(
                    "exact linear demand requested for a non-linear utility".into(),
                ));
            }
            Ok(DemandResult::deterministic(
                u,
                greedy_linear(u.theta(), p, budget),
            ))
        }
        DemandMethod::Exact => {
            let x = if u.family().is_linear() {
                greedy_linear(u.theta(), p, budget)
            } else {
                water_filling(u, p, budget)
            };
            Ok(DemandResult::deterministic(u, x))
        }
        DemandMethod::ProjectedAscent => Ok(DemandResult::deterministic(
            u,
            projected_ascent(u, p, budget),
        )),
        DemandMethod::MonteCarlo { samples, seed } => Ok(monte_carlo(u, p, budget, samples, seed)),
    }
}

/// Fractional knapsack: buy resources in decreasing `theta_j / p_j` order,
/// ties broken by lower index. Free goods with positive weight are taken first.
fn greedy_linear(theta: &[f64], p: &[f64], budget: f64) -> Vec<f64> {
    let m = theta.len();
    let mut x = vec![0.0; m];
    let mut order: Vec<usize> = (0..m).collect();
    let ratio = |j: usize| {
        if p[j] > 0.0 {
            theta[j] / p[j]
        } else if theta[j] > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    // Stable sort keeps lower indices first among equal ratios.
    order.sort_by(|&a, &b| ratio(b).total_cmp(&ratio(a)));
    let mut remaining = budget;
    for j in order {
        if p[j] <= 0.0 {
            x[j] = 1.0;
            continue;
        }
        if remaining <= 0.0 {
            break;
        }
        let q = (remaining / p[j]).min(1.0);
        x[j] = q;
        remaining -= q * p[j];
    }
    x
}

/// KKT solution for strictly concave separable features: for multiplier
/// `lambda`, each coordinate maximizes `theta_j phi_j(x) - lambda p_j x` on
/// `[0, 1]`; `lambda` is bisected until the budget binds.
fn water_filling(u: &ParametricUtility, p: &[f64], budget: f64) -> Vec<f64> {
    let m = u.dim();
    let total: f64 = p.iter().sum();
    if total <= budget {
        return vec![1.0; m];
    }
    if budget <= 0.0 {
        return p
            .iter()
            .map(|&pj| if pj > 0.0 { 0.0 } else { 1.0 })
            .collect();
    }
    let family = u.family();
    let theta = u.theta();
    let response = |lambda: f64, x: &mut [f64]| -> f64 {
        let mut spend = 0.0;
        for j in 0..m {
            x[j] = if p[j] <= 0.0 {
                1.0
            } else {
                let q = lambda * p[j];
                let v = match family {
                    Family::Ces { rho } => (theta[j] * rho / q).powf(1.0 / (1.0 - rho)),
                    Family::Amdahl { f } => {
                        let fj = f[j];
                        ((theta[j] * fj / q).sqrt() - fj) / (1.0 - fj)
                    }
                    Family::Linear => unreachable!("linear handled by greedy"),
                };
                v.clamp(0.0, 1.0)
            };
            spend += p[j] * x[j];
        }
        spend
    };
    let mut x = vec![0.0; m];
    let mut hi = 1.0;
    while response(hi, &mut x) > budget {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if response(mid, &mut x) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    response(hi, &mut x);
    x
}

const ASCENT_ITERS: usize = 200;
const ASCENT_STEP: f64 = 1.0;
const ASCENT_MAX_STEP: f64 = 4.0;
const ASCENT_HALVINGS: usize = 60;
/// Armijo sufficient-increase fraction.
const ASCENT_ARMIJO: f64 = 1e-4;
const ASCENT_STOP: f64 = 1e-12;
const ASCENT_CURVATURE_FLOOR: f64 = 1e-12;

fn index(u: &ParametricUtility, x: &[f64]) -> f64 {
    let family = u.family();
    u.theta()
        .iter()
        .zip(x)
        .enumerate()
        .map(|(j, (t, &xj))| t * family.feature(j, xj.clamp(0.0, 1.0)))
        .sum()
}

/// `|phi_j''(x)|`; the features are concave so this is the curvature.
fn feature_curvature(family: &Family, j: usize, x: f64) -> f64 {
    match family {
        Family::Linear => 0.0,
        Family::Ces { rho } => rho * (1.0 - rho) * x.powf(rho - 2.0),
        Family::Amdahl { f } => {
            let fj = f[j];
            let d = fj + (1.0 - fj) * x;
            2.0 * fj * (1.0 - fj) / (d * d * d)
        }
    }
}

/// Projection onto `{z : 0 <= z_j <= cap_j, sum_j z_j <= budget}` in the
/// metric with weights `1 / scale_j`.
fn project_spending(y: &[f64], scale: &[f64], caps: &[f64], budget: f64) -> Vec<f64> {
    let shift = |lambda: f64| -> Vec<f64> {
        y.iter()
            .zip(scale)
            .zip(caps)
            .map(|((&v, &s), &c)| (v - lambda * s).clamp(0.0, c))
            .collect()
    };
    let total = |z: &[f64]| z.iter().sum::<f64>();
    let z0 = shift(0.0);
    if total(&z0) <= budget {
        return z0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while total(&shift(hi)) > budget && hi < 1e300 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(&shift(mid)) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    shift(hi)
}

/// Projected ascent on the index `theta . phi(x)` (which shares the
/// maximizer of `mu(theta . phi(x))`) in spending coordinates `z_j = p_j x_j`,
/// where the budget set is a capped simplex. The objective is separable, so
/// the gradient is scaled by the inverse diagonal curvature and projected in
/// the matching metric. Without this a CES good near zero, whose marginal
/// utility blows up, pins every step to a tiny length. Steps backtrack along
/// the projection arc from twice the previous accepted step. Free goods are
/// taken whole.
fn projected_ascent(u: &ParametricUtility, p: &[f64], budget: f64) -> Vec<f64> {
    let m = u.dim();
    let mut x = vec![1.0; m];
    let priced: Vec<usize> = (0..m).filter(|&j| p[j] > 0.0).collect();
    if priced.is_empty() {
        return x;
    }
    let k_len = priced.len();
    let caps: Vec<f64> = priced.iter().map(|&j| p[j]).collect();
    let even = budget / k_len as f64;
    let mut z = project_spending(&vec![even; k_len], &vec![1.0; k_len], &caps, budget);
    let to_x = |z: &[f64], x: &mut [f64]| {
        for (k, &j) in priced.iter().enumerate() {
            x[j] = (z[k] / p[j]).clamp(0.0, 1.0);
        }
    };
    to_x(&z, &mut x);
    let mut value = index(u, &x);
    let family = u.family();
    let theta = u.theta();
    let mut grad = vec![0.0; k_len];
    let mut scale = vec![0.0; k_len];
    let mut trial = x.clone();
    let mut last_step = 0.5 * ASCENT_STEP;
    for _ in 0..ASCENT_ITERS {
        for (k, &j) in priced.iter().enumerate() {
            let xj = x[j].max(1e-9);
            grad[k] = theta[j] * family.feature_derivative(j, xj) / p[j];
            let c = theta[j] * feature_curvature(family, j, xj) / (p[j] * p[j]);
            scale[k] = 1.0 / (c + ASCENT_CURVATURE_FLOOR);
        }
        let top = scale.iter().copied().fold(0.0, f64::max);
        scale.iter_mut().for_each(|s| *s /= top);
        let dir: Vec<f64> = grad.iter().zip(&scale).map(|(g, s)| g * s).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            break;
        }
        let mut step = (2.0 * last_step).min(ASCENT_MAX_STEP);
        let mut accepted = None;
        for _ in 0..ASCENT_HALVINGS {
            let y: Vec<f64> = z
                .iter()
                .zip(&dir)
                .map(|(zk, dk)| zk + step * dk / norm)
                .collect();
            let next = project_spending(&y, &scale, &caps, budget);
            to_x(&next, &mut trial);
            let next_value = index(u, &trial);
            let ascent: f64 = grad
                .iter()
                .zip(next.iter().zip(&z))
                .map(|(g, (a, b))| g * (a - b))
                .sum();
            if next_value > value && next_value >= value + ASCENT_ARMIJO * ascent {
                accepted = Some((next, next_value));
                last_step = step;
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_value)) = accepted else {
            break;
        };
        let improvement = next_value - value;
        z = next;
        to_x(&z, &mut x);
        value = next_value;
        if improvement <= ASCENT_STOP * value.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Uniform Dirichlet draw over the (m+1)-simplex; the last coordinate is slack.
pub(crate) fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut total = 0.0;
    for v in out.iter_mut() {
        let e: f64 = Exp1.sample(rng);
        *v = e;
        total += e;
    }
    let slack: f64 = Exp1.sample(rng);
    total += slack;
    out.iter_mut().for_each(|v| *v /= total);
}

fn monte_carlo(
    u: &ParametricUtility,
    p: &[f64],
    budget: f64,
    samples: usize,
    seed: u64,
) -> DemandResult {
    let m = u.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = budget * (1.0 + FEASIBILITY_TOL);
    let mut y = vec![0.0; m];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut accepted = 0;
    let mut proposals = 0;
    while accepted < samples && proposals < MC_MAX_PROPOSALS {
        proposals += 1;
        sample_simplex(&mut rng, &mut y);
        let cost: f64 = y.iter().zip(p).map(|(a, b)| a * b).sum();
        if cost > limit {
            continue;
        }
        accepted += 1;
        let value = u.utility_unchecked(&y);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, y.clone()));
        }
    }
    match best {
        Some((utility, bundle)) => DemandResult {
            bundle,
            utility,
            accepted,
            low_quality: false,
        },
        None => DemandResult {
            bundle: vec![0.0; m],
            utility: u.utility_unchecked(&vec![0.0; m]),
            accepted: 0,
            low_quality: true,
        },
    }
}
