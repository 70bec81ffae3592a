use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::{SearchGrid, SolverKind};
use crate::algorithms::{AlgoConfig, Algorithm};
use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::simulator::{CostFamily, DomainSpec, EnvironmentSpec, LatencyFamily};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            lower: 0.1,
            upper: 10.0,
            points: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub latency: LatencyFamily,
    pub cost: CostFamily,
    #[serde(default = "one")]
    pub query_epoch: f64,
    /// Overrides the environment-wide grid for this domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    #[serde(default)]
    pub grid: GridConfig,
    pub domains: Vec<DomainConfig>,
}

impl Default for EnvironmentConfig {
    /// Three domains whose end-to-end latency spans roughly 1.7 to 27.7 over
    /// the grid, so every default SLA target is attainable but binding.
    fn default() -> Self {
        let grid = |lower, upper| {
            Some(GridConfig {
                lower,
                upper,
                points: 100,
            })
        };
        EnvironmentConfig {
            grid: GridConfig::default(),
            domains: vec![
                DomainConfig {
                    latency: LatencyFamily::Log { w: 4.0 },
                    cost: CostFamily::Rational { w: 20.0, b: 1.0 },
                    query_epoch: 1.0,
                    grid: grid(1.0, 10.0),
                },
                DomainConfig {
                    latency: LatencyFamily::Exp { w: 0.8 },
                    cost: CostFamily::InvQuad { w: 2.0 },
                    query_epoch: 1.0,
                    grid: grid(0.5, 2.5),
                },
                DomainConfig {
                    latency: LatencyFamily::Quad { w: 1.0 },
                    cost: CostFamily::Gaussian { w: 10.0 },
                    query_epoch: 1.0,
                    grid: grid(0.5, 3.0),
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_id")]
    pub experiment_id: String,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    #[serde(default = "default_sla_targets")]
    pub sla_targets: Vec<f64>,
    #[serde(default = "default_noise_levels")]
    pub noise_levels: Vec<f64>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<f64>,
    #[serde(default = "one")]
    pub decision_epoch: f64,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<String>,
    #[serde(default = "default_num_seeds")]
    pub num_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_kernel")]
    pub kernel: KernelFamily,
    #[serde(default = "one")]
    pub lambda: f64,
    /// RKHS norm bounds of the latency functions, one per domain.
    #[serde(default = "default_bounds")]
    pub rkhs_bound_f: Vec<f64>,
    /// RKHS norm bounds of the cost functions, one per domain.
    #[serde(default = "default_bounds")]
    pub rkhs_bound_g: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_beta_scale")]
    pub beta_scale: f64,
    #[serde(default)]
    pub warm_start_passes: usize,
    #[serde(default = "default_e2e_cap")]
    pub e2e_max_candidates: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn one() -> f64 {
    1.0
}
fn default_id() -> String {
    "default".into()
}
fn default_sla_targets() -> Vec<f64> {
    vec![7.5, 10.0, 12.5, 15.0, 17.5, 20.0, 22.5]
}
fn default_noise_levels() -> Vec<f64> {
    vec![0.05, 0.5]
}
fn default_horizons() -> Vec<f64> {
    vec![100.0, 1000.0]
}
fn default_algorithms() -> Vec<String> {
    ["odin", "odin-e2e", "etc-0.1", "etc-0.2"].map(String::from).to_vec()
}
fn default_num_seeds() -> usize {
    10
}
fn default_kernel() -> KernelFamily {
    KernelFamily::SquaredExponential { lengthscale: 1.0 }
}
fn default_bounds() -> Vec<f64> {
    vec![1.0; 3]
}
fn default_beta_scale() -> f64 {
    0.05
}
fn default_delta() -> f64 {
    0.1
}
fn default_e2e_cap() -> usize {
    1000
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_parallelism() -> usize {
    8
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

/// One `(algorithm, L, R, T)` combination of the experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub sla_target: f64,
    pub noise_level: f64,
    pub horizon: f64,
}

impl Cell {
    /// Stable file stem for this cell.
    pub fn stem(&self) -> String {
        format!(
            "{}_L{}_R{}_T{}",
            self.algorithm, self.sla_target, self.noise_level, self.horizon
        )
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn parsed_algorithms(&self) -> Result<Vec<Algorithm>> {
        self.algorithms.iter().map(|a| a.parse()).collect()
    }

    pub fn grid(&self) -> Result<SearchGrid> {
        let env = &self.environment;
        let bounds: Vec<(f64, f64, usize)> = env
            .domains
            .iter()
            .map(|d| {
                let g = d.grid.unwrap_or(env.grid);
                (g.lower, g.upper, g.points)
            })
            .collect();
        SearchGrid::uniform(&bounds)
    }

    /// The environment at SLA target `sla` and noise level `noise`.
    pub fn environment(&self, sla: f64, noise: f64) -> Result<EnvironmentSpec> {
        let domains = self
            .environment
            .domains
            .iter()
            .map(|d| DomainSpec {
                latency: d.latency,
                cost: d.cost,
                noise_level: noise,
                query_epoch: d.query_epoch,
            })
            .collect();
        EnvironmentSpec::new(domains, sla, self.grid()?)
    }

    pub fn algo_config(&self, algorithm: Algorithm, horizon: f64) -> Result<AlgoConfig> {
        Ok(AlgoConfig {
            algorithm,
            horizon,
            decision_epoch: self.decision_epoch,
            query_epochs: self.environment.domains.iter().map(|d| d.query_epoch).collect(),
            delta: self.delta,
            kernel: KernelSpec::new(self.kernel, 1)?,
            lambda: self.lambda,
            rkhs_bounds_f: self.rkhs_bound_f.clone(),
            rkhs_bounds_g: self.rkhs_bound_g.clone(),
            beta_scale: self.beta_scale,
            warm_start_passes: self.warm_start_passes,
            e2e_max_candidates: self.e2e_max_candidates,
            solver: SolverKind::Auto,
        })
    }

    /// Every cell in enumeration order: algorithm, then L, then R, then T.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let algs = self.parsed_algorithms()?;
        let mut out = Vec::new();
        for &algorithm in &algs {
            for &sla_target in &self.sla_targets {
                for &noise_level in &self.noise_levels {
                    for &horizon in &self.horizons {
                        out.push(Cell {
                            algorithm,
                            sla_target,
                            noise_level,
                            horizon,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let d = self.environment.domains.len();
        if d == 0 {
            errs.push("environment.domains: at least one domain is required".to_string());
        }
        if self.experiment_id.is_empty() || self.experiment_id.contains([',', '\n', '"']) {
            errs.push("experiment_id: must be nonempty without commas, quotes or newlines".into());
        }
        let grid = match self.grid() {
            Ok(g) => Some(g),
            Err(e) => {
                errs.push(format!("environment.grid: {e}"));
                None
            }
        };
        if self.sla_targets.is_empty() {
            errs.push("sla_targets: empty".into());
        }
        if self.noise_levels.is_empty() {
            errs.push("noise_levels: empty".into());
        }
        for &r in &self.noise_levels {
            if !(r.is_finite() && r >= 0.0) {
                errs.push(format!("noise_levels: {r} is not a nonnegative number"));
            }
        }
        if self.horizons.is_empty() {
            errs.push("horizons: empty".into());
        }
        if self.algorithms.is_empty() {
            errs.push("algorithms: empty".into());
        }
        let mut algs = Vec::new();
        for a in &self.algorithms {
            match a.parse::<Algorithm>() {
                Ok(alg) => algs.push(alg),
                Err(e) => errs.push(format!("algorithms: {e}")),
            }
        }
        if self.num_seeds == 0 {
            errs.push("num_seeds: must be at least 1".into());
        }
        if self.parallelism == 0 {
            errs.push("parallelism: must be at least 1".into());
        }
        if self.rkhs_bound_f.len() != d {
            errs.push(format!("rkhs_bound_f: {} values for {d} domains", self.rkhs_bound_f.len()));
        }
        if self.rkhs_bound_g.len() != d {
            errs.push(format!("rkhs_bound_g: {} values for {d} domains", self.rkhs_bound_g.len()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            errs.push(format!("delta: {} is outside (0, 1)", self.delta));
        }
        if let Err(e) = KernelSpec::new(self.kernel, 1) {
            errs.push(format!("kernel: {e}"));
        }
        if let Some(grid) = grid.filter(|_| d > 0) {
            let probe_noise = self.noise_levels.iter().copied().find(|r| r.is_finite() && *r >= 0.0);
            let mut probe = None;
            for &sla in &self.sla_targets {
                match self.environment(sla, probe_noise.unwrap_or(0.0)) {
                    Ok(env) => probe = probe.or(Some(env)),
                    Err(e) => errs.push(format!("sla_targets: L = {sla} rejected: {e}")),
                }
            }
            // Run-level checks only make sense once the scalar fields are sound.
            if let Some(env) = probe.filter(|_| errs.is_empty()) {
                for &alg in &algs {
                    for &t in &self.horizons {
                        if let Err(e) = self.algo_config(alg, t).and_then(|c| c.validate(&env, &grid)) {
                            errs.push(format!("{alg} at T = {t}: {e}"));
                        }
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}
