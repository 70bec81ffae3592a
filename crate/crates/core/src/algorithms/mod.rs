//! Online decomposition loops.
//!
//! Every algorithm is a [`Learner`]: it proposes a decomposition and consumes
//! the averaged noisy feedback for it. The driver owns the environment, draws
//! the feedback, and records the true latency and cost next to each round for
//! the metrics. Learners never see those true values.

mod e2e;
mod etc;
mod odin;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{Decomposition, SearchGrid, SolverKind};
use crate::confidence::ConfidenceParams;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::simulator::{EnvironmentSpec, TrueValues};

pub use e2e::E2eLearner;
pub use etc::EtcLearner;
pub use odin::OdinLearner;

const NOISE_STREAM: u64 = 0;
const EXPLORE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Odin,
    OdinE2e,
    Etc { alpha: f64 },
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Odin => f.write_str("odin"),
            Algorithm::OdinE2e => f.write_str("odin-e2e"),
            Algorithm::Etc { alpha } => write!(f, "etc-{alpha}"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "odin" => Ok(Algorithm::Odin),
            "odin-e2e" => Ok(Algorithm::OdinE2e),
            _ => {
                let alpha = s
                    .strip_prefix("etc-")
                    .and_then(|a| a.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown algorithm '{s}'")))?;
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "explore-then-commit fraction must lie in (0, 1), got {alpha}"
                    )));
                }
                Ok(Algorithm::Etc { alpha })
            }
        }
    }
}

/// Parameters of one online run.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    /// Time horizon `T`.
    pub horizon: f64,
    /// Decision epoch `tau_dm`.
    pub decision_epoch: f64,
    /// Per-domain query epochs; each must divide `decision_epoch`.
    pub query_epochs: Vec<f64>,
    pub delta: f64,
    /// Per-domain kernel (dimension 1). The joint baseline lifts it to `D` inputs.
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub rkhs_bounds_f: Vec<f64>,
    pub rkhs_bounds_g: Vec<f64>,
    /// Multiplier applied to every confidence width.
    pub beta_scale: f64,
    /// Full passes over the grid observed before round 1.
    pub warm_start_passes: usize,
    /// Cap on the joint baseline's candidate count; larger grids are thinned
    /// evenly per domain.
    pub e2e_max_candidates: usize,
    pub solver: SolverKind,
}

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let n = r.round();
    if n >= 1.0 && (r - n).abs() <= 1e-9 * n {
        Some(n as usize)
    } else {
        None
    }
}

impl AlgoConfig {
    /// Number of decision rounds `N = T / tau_dm`.
    pub fn rounds(&self) -> Result<usize> {
        integer_ratio(self.horizon, self.decision_epoch).ok_or_else(|| {
            Error::InvalidInput(format!(
                "horizon {} is not a positive multiple of the decision epoch {}",
                self.horizon, self.decision_epoch
            ))
        })
    }

    /// Samples averaged per round for each domain, `tau_dm / tau_i`.
    pub fn epoch_ratios(&self) -> Result<Vec<usize>> {
        self.query_epochs
            .iter()
            .enumerate()
            .map(|(i, &q)| {
                integer_ratio(self.decision_epoch, q).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "query epoch {q} of domain {} does not divide the decision epoch {}",
                        i + 1,
                        self.decision_epoch
                    ))
                })
            })
            .collect()
    }

    /// Exploration rounds of explore-then-commit, `ceil(alpha N)`.
    pub fn exploration_rounds(&self) -> Result<usize> {
        let Algorithm::Etc { alpha } = self.algorithm else {
            return Ok(0);
        };
        let v = alpha * self.rounds()? as f64;
        let r = v.round();
        let n = if (v - r).abs() < 1e-9 { r } else { v.ceil() };
        if n < 1.0 {
            return Err(Error::InvalidInput(format!(
                "explore-then-commit needs alpha * N >= 1, got {v}"
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self, env: &EnvironmentSpec, grid: &SearchGrid) -> Result<()> {
        let d = env.num_domains();
        if grid.num_domains() != d {
            return Err(Error::InvalidInput(format!(
                "grid covers {} domains, environment has {d}",
                grid.num_domains()
            )));
        }
        if self.kernel.dimension() != 1 {
            return Err(Error::InvalidInput("per-domain kernel must have dimension 1".into()));
        }
        if !(self.decision_epoch.is_finite() && self.decision_epoch > 0.0) {
            return Err(Error::InvalidInput("decision epoch must be positive".into()));
        }
        self.rounds()?;
        if self.query_epochs.len() != d {
            return Err(Error::InvalidInput(format!(
                "{} query epochs for {d} domains",
                self.query_epochs.len()
            )));
        }
        for (i, (q, dom)) in self.query_epochs.iter().zip(env.domains()).enumerate() {
            if *q != dom.query_epoch {
                return Err(Error::InvalidInput(format!(
                    "domain {}: configured query epoch {q} differs from the environment's {}",
                    i + 1,
                    dom.query_epoch
                )));
            }
        }
        self.epoch_ratios()?;
        if self.rkhs_bounds_f.len() != d || self.rkhs_bounds_g.len() != d {
            return Err(Error::InvalidInput(format!("need {d} RKHS bounds per function")));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidInput("lambda must be positive".into()));
        }
        if !(self.beta_scale.is_finite() && self.beta_scale >= 0.0) {
            return Err(Error::InvalidInput("beta scale must be nonnegative".into()));
        }
        if self.e2e_max_candidates == 0 {
            return Err(Error::InvalidInput("joint candidate cap must be positive".into()));
        }
        for (b, r) in self.rkhs_bounds_f.iter().zip(env.latency_noise_std()) {
            self.confidence_params(*b, *r, 1.0, d).validate()?;
        }
        for (b, r) in self.rkhs_bounds_g.iter().zip(env.cost_noise_std()) {
            self.confidence_params(*b, *r, 1.0, d).validate()?;
        }
        self.exploration_rounds()?;
        Ok(())
    }

    fn confidence_params(&self, bound: f64, noise: f64, ratio: f64, d: usize) -> ConfidenceParams {
        ConfidenceParams {
            rkhs_norm_bound: bound,
            noise_norm: noise,
            epoch_ratio: ratio,
            num_domains: d,
            failure_prob: self.delta,
        }
    }
}

/// How a round's decomposition was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionFlag {
    /// Optimistic constraint satisfiable; the argmin was taken over it.
    Feasible,
    /// No grid point met the optimistic constraint; least-latency fallback.
    Infeasible,
    /// Uniform exploration round (explore-then-commit).
    Exploration,
}

/// Per-domain feedback averaged over the round's samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundFeedback {
    pub latency: Vec<f64>,
    pub cost: Vec<f64>,
}

/// A learner's decision for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub decomposition: Decomposition,
    pub flag: SelectionFlag,
    /// Widths used for the selection, one per surrogate.
    pub beta_f: Vec<f64>,
    pub beta_g: Vec<f64>,
    /// Summed latency lower bound at the chosen point, when a bound was used.
    pub latency_lcb_sum: Option<f64>,
}

/// Surrogate diagnostics after consuming a round's feedback.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Posterior standard deviation at the chosen point before the update,
    /// one per surrogate.
    pub sigma_before: Vec<f64>,
    /// Realized information gain after the update, one per surrogate.
    pub info_gain: Vec<f64>,
}

/// One noisy `(latency, cost)` sample of domain `i` at target `x`.
pub type Sampler<'a> = dyn FnMut(usize, f64) -> Result<(f64, f64)> + 'a;

pub trait Learner {
    /// Observes every grid point `passes` times before the first round.
    fn warm_start(&mut self, passes: usize, sample: &mut Sampler<'_>) -> Result<()>;
    fn propose(&mut self) -> Result<Proposal>;
    fn observe(&mut self, decision: &Decomposition, feedback: &RoundFeedback) -> Result<Diagnostics>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub decomposition: Decomposition,
    pub flag: SelectionFlag,
    pub feedback: RoundFeedback,
    /// Simulator-side values for metrics only.
    pub truth: TrueValues,
    pub beta_f: Vec<f64>,
    pub beta_g: Vec<f64>,
    pub latency_lcb_sum: Option<f64>,
    pub sigma_before: Vec<f64>,
    pub info_gain: Vec<f64>,
}

/// Full trajectory of one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub sla_target: f64,
    pub decision_epoch: f64,
    pub rounds: Vec<RoundRecord>,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Runs `learner` against `env` for the configured number of rounds.
pub fn drive(
    learner: &mut dyn Learner,
    env: &EnvironmentSpec,
    config: &AlgoConfig,
    seed: u64,
) -> Result<RunRecord> {
    let rounds = config.rounds()?;
    let ratios = config.epoch_ratios()?;
    let mut noise = rng(seed, NOISE_STREAM);
    if config.warm_start_passes > 0 {
        let mut sample = |i: usize, x: f64| env.observe_averaged(i, x, ratios[i], &mut noise);
        learner.warm_start(config.warm_start_passes, &mut sample)?;
    }
    let mut records = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let p = learner.propose()?;
        let targets = p.decomposition.targets();
        let mut feedback = RoundFeedback::default();
        for (i, &x) in targets.iter().enumerate() {
            let (yf, yg) = env.observe_averaged(i, x, ratios[i], &mut noise)?;
            feedback.latency.push(yf);
            feedback.cost.push(yg);
        }
        let truth = env.true_values(targets)?;
        let diag = learner.observe(&p.decomposition, &feedback)?;
        records.push(RoundRecord {
            decomposition: p.decomposition,
            flag: p.flag,
            feedback,
            truth,
            beta_f: p.beta_f,
            beta_g: p.beta_g,
            latency_lcb_sum: p.latency_lcb_sum,
            sigma_before: diag.sigma_before,
            info_gain: diag.info_gain,
        });
    }
    Ok(RunRecord {
        algorithm: config.algorithm,
        seed,
        sla_target: env.sla_target(),
        decision_epoch: config.decision_epoch,
        rounds: records,
    })
}

/// Builds the learner named by `config.algorithm`.
pub fn build_learner(
    env: &EnvironmentSpec,
    config: &AlgoConfig,
    grid: &SearchGrid,
    seed: u64,
) -> Result<Box<dyn Learner>> {
    config.validate(env, grid)?;
    Ok(match config.algorithm {
        Algorithm::Odin => Box::new(OdinLearner::new(env, config, grid)?),
        Algorithm::OdinE2e => Box::new(E2eLearner::new(env, config, grid)?),
        Algorithm::Etc { .. } => Box::new(EtcLearner::new(env, config, grid, rng(seed, EXPLORE_STREAM))?),
    })
}

fn expect_algorithm(config: &AlgoConfig, ok: fn(&Algorithm) -> bool, name: &str) -> Result<()> {
    if ok(&config.algorithm) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "configuration is for {}, not {name}",
            config.algorithm
        )))
    }
}

/// Per-domain constrained Bayesian optimization.
pub fn run_odin(env: &EnvironmentSpec, config: &AlgoConfig, grid: &SearchGrid, seed: u64) -> Result<RunRecord> {
    expect_algorithm(config, |a| matches!(a, Algorithm::Odin), "odin")?;
    let mut learner = build_learner(env, config, grid, seed)?;
    drive(learner.as_mut(), env, config, seed)
}

/// Baseline treating the whole network as one black box over `D` inputs.
pub fn run_odin_e2e(env: &EnvironmentSpec, config: &AlgoConfig, grid: &SearchGrid, seed: u64) -> Result<RunRecord> {
    expect_algorithm(config, |a| matches!(a, Algorithm::OdinE2e), "odin-e2e")?;
    let mut learner = build_learner(env, config, grid, seed)?;
    drive(learner.as_mut(), env, config, seed)
}

/// Explore-then-commit baseline.
pub fn run_etc(env: &EnvironmentSpec, config: &AlgoConfig, grid: &SearchGrid, seed: u64) -> Result<RunRecord> {
    expect_algorithm(config, |a| matches!(a, Algorithm::Etc { .. }), "etc")?;
    let mut learner = build_learner(env, config, grid, seed)?;
    drive(learner.as_mut(), env, config, seed)
}

/// Dispatches on `config.algorithm`.
pub fn run(env: &EnvironmentSpec, config: &AlgoConfig, grid: &SearchGrid, seed: u64) -> Result<RunRecord> {
    let mut learner = build_learner(env, config, grid, seed)?;
    drive(learner.as_mut(), env, config, seed)
}

/// Grid points of domain `i` as 1-D kernel inputs.
pub fn domain_points(grid: &SearchGrid, i: usize) -> Vec<Vec<f64>> {
    grid.domain(i).iter().map(|&x| vec![x]).collect()
}
