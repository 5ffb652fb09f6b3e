//! Experiment configuration, seeded runs and CSV output.
//!
//! Every seed runs as an independent job with its own random streams (economy
//! draw, exploration, feedback, Monte-Carlo losses), so results do not depend
//! on the order or number of other seeds.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{record_events, Beta2Variant, EventTrace};
use crate::economy::{DemandMethod, Economy, Family, ParametricUtility, ThetaBox};
use crate::error::{Error, Result};
use crate::learner::{init_length, CeSolver, DeltaSchedule, Learner, LearnerConfig, Phase};
use crate::losses::{loss_fd, LossOptions, ReferenceEquilibrium, PE_EXACT_MAX_CELLS};
use crate::seed::sub_seed;

/// Exact header of the per-round CSV.
pub const CSV_HEADER: &str =
    "run_id,t,phase,l_ce,l_si,l_pe_upper,l_fd_upper,cum_l_ce,cum_l_fd_upper,a_holds,b_holds,rho,ce_warn";

/// Tolerance at which the reference equilibrium must be certified.
pub const REFERENCE_EPS: f64 = 1e-5;

const STREAM_ECONOMY: u64 = 0;
const STREAM_LEARNER: u64 = 1;
const STREAM_FEEDBACK: u64 = 2;
const STREAM_LOSSES: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GeneratorFamily {
    Linear,
    Ces {
        rho: f64,
    },
    /// One parallel fraction shared by every agent and resource.
    Amdahl {
        f: f64,
    },
}

fn default_theta_range() -> [f64; 2] {
    [0.1, 1.0]
}

fn default_theta_box() -> [f64; 2] {
    [0.05, 1.2]
}

fn default_dirichlet() -> f64 {
    1.0
}

fn default_sigma() -> f64 {
    0.1
}

/// Random economy: `theta*` uniform in `theta_range^m`, endowments drawn per
/// resource from a symmetric Dirichlet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub m: usize,
    #[serde(flatten)]
    pub family: GeneratorFamily,
    #[serde(default = "default_theta_range")]
    pub theta_range: [f64; 2],
    #[serde(default = "default_theta_box")]
    pub theta_box: [f64; 2],
    #[serde(default = "default_dirichlet")]
    pub dirichlet: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

impl GeneratorSpec {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Config("generator needs n, m >= 1".into()));
        }
        let [lo, hi] = self.theta_range;
        let [bmin, bmax] = self.theta_box;
        ThetaBox::new(bmin, bmax).map_err(|e| Error::Config(e.to_string()))?;
        if !(lo <= hi && lo >= bmin && hi <= bmax) {
            return Err(Error::Config(format!(
                "theta range [{lo}, {hi}] must lie inside the box [{bmin}, {bmax}]"
            )));
        }
        if !(self.dirichlet > 0.0) || !(self.sigma >= 0.0) {
            return Err(Error::Config(
                "dirichlet must be positive and sigma non-negative".into(),
            ));
        }
        self.family()
            .validate(self.m)
            .map_err(|e| Error::Config(e.to_string()))
    }

    fn family(&self) -> Family {
        match self.family {
            GeneratorFamily::Linear => Family::Linear,
            GeneratorFamily::Ces { rho } => Family::Ces { rho },
            GeneratorFamily::Amdahl { f } => Family::Amdahl { f: vec![f; self.m] },
        }
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Economy> {
        self.validate()?;
        let (n, m) = (self.n, self.m);
        let theta_box = ThetaBox::new(self.theta_box[0], self.theta_box[1])?;
        let [lo, hi] = self.theta_range;
        let family = self.family();
        let utilities = (0..n)
            .map(|_| {
                let theta = (0..m)
                    .map(|_| lo + (hi - lo) * rng.random::<f64>())
                    .collect();
                ParametricUtility::new(family.clone(), theta, theta_box)
            })
            .collect::<Result<Vec<_>>>()?;
        let gamma = Gamma::new(self.dirichlet, 1.0)
            .map_err(|e| Error::Config(format!("dirichlet parameter: {e}")))?;
        let mut endowments = vec![vec![0.0; m]; n];
        for j in 0..m {
            let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            for (row, d) in endowments.iter_mut().zip(&draws) {
                row[j] = d / total;
            }
        }
        Economy::new(endowments, utilities, self.sigma)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EconomySource {
    Generator(GeneratorSpec),
    /// Economy definition file; relative paths resolve against the config file.
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaKind {
    /// `delta_t = 1 / T`.
    #[default]
    FiniteHorizon,
    Anytime {
        delta: f64,
    },
}

fn default_mc_budget() -> usize {
    50
}

fn default_ce_iters() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub economy: EconomySource,
    pub horizon: usize,
    #[serde(default)]
    pub delta: DeltaKind,
    pub seeds: Vec<u64>,
    /// Monte-Carlo proposals per agent for the CE loss.
    #[serde(default = "default_mc_budget")]
    pub mc_budget: usize,
    #[serde(default)]
    pub ce_solver: CeSolver,
    #[serde(default = "default_ce_iters")]
    pub ce_iters: usize,
    #[serde(default)]
    pub alpha_override: Option<f64>,
    #[serde(default)]
    pub beta2: Beta2Variant,
    /// Grid step for the exact PE loss (small economies only; slow).
    #[serde(default)]
    pub pe_exact_grid: Option<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file, resolving a relative economy path against the
    /// file's directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c: ExperimentConfig = serde_json::from_str(&text)?;
        if let EconomySource::File(p) = &mut c.economy {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    fn shape(&self) -> Result<(usize, usize)> {
        match &self.economy {
            EconomySource::Generator(g) => Ok((g.n, g.m)),
            EconomySource::File(p) => {
                let e = Economy::from_path(p)?;
                Ok((e.n(), e.m()))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let EconomySource::Generator(g) = &self.economy {
            g.validate()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.horizon == 0 || self.mc_budget == 0 || self.ce_iters == 0 {
            return Err(Error::Config(
                "horizon, mc_budget and ce_iters must be positive".into(),
            ));
        }
        let (n, m) = self.shape()?;
        let init = init_length(n, m);
        if matches!(self.delta, DeltaKind::FiniteHorizon) && self.horizon <= init {
            return Err(Error::Config(format!(
                "finite-horizon schedule needs T > m^2 max(n, m) = {init}, got T = {}",
                self.horizon
            )));
        }
        if let Some(step) = self.pe_exact_grid {
            if n * m > PE_EXACT_MAX_CELLS || !(step > 0.0) {
                return Err(Error::Config(format!(
                    "pe_exact_grid needs n*m <= {PE_EXACT_MAX_CELLS} and a positive step"
                )));
            }
        }
        self.learner_config(0.0).validate()
    }

    fn learner_config(&self, sigma: f64) -> LearnerConfig {
        LearnerConfig {
            delta: match self.delta {
                DeltaKind::FiniteHorizon => DeltaSchedule::FiniteHorizon {
                    horizon: self.horizon.max(2),
                },
                DeltaKind::Anytime { delta } => DeltaSchedule::Anytime { delta },
            },
            sigma,
            ce_solver: self.ce_solver,
            ce_iters: self.ce_iters,
            alpha_override: self.alpha_override,
            beta2: self.beta2,
            ..LearnerConfig::default()
        }
    }

    /// The economy used by `seed`.
    pub fn economy_for_seed(&self, seed: u64) -> Result<Economy> {
        match &self.economy {
            EconomySource::Generator(g) => g.generate(&mut ChaCha8Rng::seed_from_u64(sub_seed(
                seed,
                STREAM_ECONOMY,
            ))),
            EconomySource::File(p) => Economy::from_path(p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub run_id: u64,
    pub t: usize,
    pub phase: Phase,
    pub l_ce: f64,
    pub l_si: f64,
    pub l_pe_upper: f64,
    pub l_fd_upper: f64,
    pub cum_l_ce: f64,
    pub cum_l_fd_upper: f64,
    /// Event A held for every agent (learning rounds only).
    pub a_holds: Option<bool>,
    pub b_holds: Option<bool>,
    /// Largest `rho` over agents (learning rounds only).
    pub rho: Option<f64>,
    pub ce_warn: bool,
    #[serde(skip)]
    pub l_pe_exact: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub economy: Economy,
    pub reference: ReferenceEquilibrium,
    pub records: Vec<RoundRecord>,
    pub events: EventTrace,
}

/// Runs one seed to the horizon.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    let economy = config.economy_for_seed(seed)?;
    let reference = ReferenceEquilibrium::solve(&economy, REFERENCE_EPS)?;
    let mut learner = Learner::new(
        &economy,
        config.learner_config(economy.noise_sigma()),
        sub_seed(seed, STREAM_LEARNER),
    )?;
    let mut feedback_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, STREAM_FEEDBACK));
    let loss_seed = sub_seed(seed, STREAM_LOSSES);
    let thetas: Vec<Vec<f64>> = economy
        .utilities()
        .iter()
        .map(|u| u.theta().to_vec())
        .collect();

    let mut records = Vec::with_capacity(config.horizon);
    let mut events = EventTrace::default();
    let (mut cum_ce, mut cum_fd) = (0.0, 0.0);
    for _ in 0..config.horizon {
        let proposal = learner.propose()?;
        let round_events = record_events(&learner, &proposal, &thetas)?;
        let feedback = (0..economy.n())
            .map(|i| {
                crate::economy::sample_feedback(
                    &economy,
                    i,
                    proposal.outcome.allocation.row(i),
                    &mut feedback_rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        learner.observe(&proposal, &feedback)?;

        let report = loss_fd(
            &economy,
            &proposal.outcome,
            &reference,
            LossOptions {
                ce_demand: DemandMethod::MonteCarlo {
                    samples: config.mc_budget,
                    seed: sub_seed(loss_seed, proposal.t as u64),
                },
                pe_exact_grid: config.pe_exact_grid,
            },
        )?;
        cum_ce += report.l_ce;
        cum_fd += report.l_fd_upper;
        let learning = proposal.phase == Phase::Learning;
        records.push(RoundRecord {
            run_id: seed,
            t: proposal.t,
            phase: proposal.phase,
            l_ce: report.l_ce,
            l_si: report.l_si,
            l_pe_upper: report.l_pe_upper,
            l_fd_upper: report.l_fd_upper,
            cum_l_ce: cum_ce,
            cum_l_fd_upper: cum_fd,
            a_holds: learning.then(|| round_events.iter().all(|e| e.a_holds)),
            b_holds: learning.then(|| round_events.iter().all(|e| e.b_holds)),
            rho: learning.then(|| round_events.iter().map(|e| e.rho).fold(0.0, f64::max)),
            ce_warn: proposal.warning.is_some(),
            l_pe_exact: report.l_pe_exact,
        });
        events.extend(round_events);
    }
    Ok(RunResult {
        seed,
        economy,
        reference,
        records,
        events,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t: usize,
    pub runs: usize,
    pub mean_cum_l_ce: f64,
    /// Standard error across runs; 0 when there is a single run.
    pub stderr_cum_l_ce: f64,
    pub single_run: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    /// One result per seed, in config order.
    pub runs: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    pub fn records(&self) -> Vec<RoundRecord> {
        self.runs
            .iter()
            .flat_map(|r| r.records.iter().cloned())
            .collect()
    }
}

/// Runs every seed (in parallel) and summarizes the cumulative CE loss.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<RoundRecord> = runs
        .iter()
        .flat_map(|r| r.records.iter().cloned())
        .collect();
    Ok(ExperimentOutput {
        summary: summarize(&records),
        runs,
    })
}

/// Per-round mean and standard error of `cum_l_ce` across runs.
pub fn summarize(records: &[RoundRecord]) -> Vec<SummaryRow> {
    let horizon = records.iter().map(|r| r.t).max().unwrap_or(0);
    let mut by_t: Vec<Vec<f64>> = vec![Vec::new(); horizon + 1];
    for r in records {
        by_t[r.t].push(r.cum_l_ce);
    }
    by_t.iter()
        .enumerate()
        .skip(1)
        .filter(|(_, v)| !v.is_empty())
        .map(|(t, v)| {
            let k = v.len() as f64;
            let mean = v.iter().sum::<f64>() / k;
            let stderr = if v.len() > 1 {
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                t,
                runs: v.len(),
                mean_cum_l_ce: mean,
                stderr_cum_l_ce: stderr,
                single_run: v.len() == 1,
            }
        })
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the per-round CSV (header only for an empty slice).
pub fn emit_csv(records: &[RoundRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(CSV_HEADER.split(','))
        .map_err(csv_err(path))?;
    for r in records {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV produced by [`emit_csv`].
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<RoundRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(String::from)
        .collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Config(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(csv_err(path)))
        .collect()
}

pub fn emit_summary(records: &[RoundRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let rows = summarize(records);
    if rows.is_empty() {
        w.write_record([
            "t",
            "runs",
            "mean_cum_l_ce",
            "stderr_cum_l_ce",
            "single_run",
        ])
        .map_err(csv_err(path))?;
    }
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `run_id,t,l_pe_exact` for records that carry the exact PE loss.
pub fn emit_pe_exact(records: &[RoundRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("run_id,t,l_pe_exact\n");
    for r in records {
        if let Some(v) = r.l_pe_exact {
            text.push_str(&format!("{},{},{v}\n", r.run_id, r.t));
        }
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes `rounds.csv` and `summary.csv` (plus `pe_exact.csv` when the exact
/// PE loss was requested) into `dir`, returning the written paths.
pub fn write_outputs(
    config: &ExperimentConfig,
    output: &ExperimentOutput,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let records = output.records();
    let mut written = vec![dir.join("rounds.csv"), dir.join("summary.csv")];
    emit_csv(&records, &written[0])?;
    emit_summary(&records, &written[1])?;
    if config.pe_exact_grid.is_some() {
        let p = dir.join("pe_exact.csv");
        emit_pe_exact(&records, &p)?;
        written.push(p);
    }
    Ok(written)
}
