//! Synthetic multi-domain environments.
//!
//! Each domain has a hidden latency function `f` (increasing in the assigned
//! target) and cost function `g` (decreasing), observed through additive
//! Gaussian noise whose standard deviation is a fixed fraction of the
//! function's largest magnitude over the environment grid.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::acquisition::{ordered_sum, Decomposition, SearchGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LatencyFamily {
    /// `w ln x`
    Log { w: f64 },
    /// `w e^x`
    Exp { w: f64 },
    /// `w x^2`
    Quad { w: f64 },
    /// `w x`, the one family inside the linear kernel's RKHS.
    Linear { w: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostFamily {
    /// `w / (x + b)`
    Rational { w: f64, b: f64 },
    /// `w / x^2`
    InvQuad { w: f64 },
    /// `w e^{-x^2}`
    Gaussian { w: f64 },
    /// `w x`; `w` may be negative so that cost falls as the target loosens.
    Linear { w: f64 },
}

impl LatencyFamily {
    pub fn eval(&self, x: f64) -> Result<f64> {
        let v = match *self {
            LatencyFamily::Log { w } => {
                if x <= 0.0 {
                    return Err(Error::InvalidInput(format!("log latency undefined at {x}")));
                }
                w * x.ln()
            }
            LatencyFamily::Exp { w } => w * x.exp(),
            LatencyFamily::Quad { w } => w * x * x,
            LatencyFamily::Linear { w } => w * x,
        };
        finite(v, x)
    }

    fn check_params(&self) -> Result<()> {
        let w = match *self {
            LatencyFamily::Log { w }
            | LatencyFamily::Exp { w }
            | LatencyFamily::Quad { w }
            | LatencyFamily::Linear { w } => w,
        };
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::InvalidInput(format!("latency weight must be positive, got {w}")));
        }
        Ok(())
    }
}

impl CostFamily {
    pub fn eval(&self, x: f64) -> Result<f64> {
        let v = match *self {
            CostFamily::Rational { w, b } => {
                if x + b <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "rational cost needs x + b > 0, got x = {x}, b = {b}"
                    )));
                }
                w / (x + b)
            }
            CostFamily::InvQuad { w } => {
                if x <= 0.0 {
                    return Err(Error::InvalidInput(format!("inverse-quadratic cost undefined at {x}")));
                }
                w / (x * x)
            }
            CostFamily::Gaussian { w } => w * (-x * x).exp(),
            CostFamily::Linear { w } => w * x,
        };
        finite(v, x)
    }

    fn check_params(&self) -> Result<()> {
        let ok = match *self {
            CostFamily::Rational { w, b } => w.is_finite() && w > 0.0 && b.is_finite() && b >= 0.0,
            CostFamily::InvQuad { w } | CostFamily::Gaussian { w } => w.is_finite() && w > 0.0,
            CostFamily::Linear { w } => w.is_finite() && w != 0.0,
        };
        if !ok {
            return Err(Error::InvalidInput(format!("invalid cost parameters {self:?}")));
        }
        Ok(())
    }
}

fn finite(v: f64, x: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("function value not finite at {x}")))
    }
}

/// One domain's hidden behaviour.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub latency: LatencyFamily,
    pub cost: CostFamily,
    /// Noise standard deviation as a fraction of the function's largest
    /// magnitude over the grid.
    pub noise_level: f64,
    pub query_epoch: f64,
}

impl DomainSpec {
    pub fn true_latency(&self, x: f64) -> Result<f64> {
        self.latency.eval(x)
    }

    pub fn true_cost(&self, x: f64) -> Result<f64> {
        self.cost.eval(x)
    }
}

pub fn true_latency(d: &DomainSpec, x: f64) -> Result<f64> {
    d.true_latency(x)
}

pub fn true_cost(d: &DomainSpec, x: f64) -> Result<f64> {
    d.true_cost(x)
}

/// Exact latency and cost values of a decomposition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrueValues {
    pub latency: Vec<f64>,
    pub cost: Vec<f64>,
}

/// A validated multi-domain environment with its SLA target and grid.
#[derive(Debug, Clone)]
pub struct EnvironmentSpec {
    domains: Vec<DomainSpec>,
    sla_target: f64,
    grid: SearchGrid,
    latency_noise_std: Vec<f64>,
    cost_noise_std: Vec<f64>,
}

impl EnvironmentSpec {
    /// Validates every function on every grid point and checks that some grid
    /// combination meets the SLA.
    pub fn new(domains: Vec<DomainSpec>, sla_target: f64, grid: SearchGrid) -> Result<Self> {
        let env = Self::unchecked(domains, sla_target, grid)?;
        env.optimal_decomposition()?;
        Ok(env)
    }

    fn unchecked(domains: Vec<DomainSpec>, sla_target: f64, grid: SearchGrid) -> Result<Self> {
        if domains.is_empty() {
            return Err(Error::InvalidInput("environment needs at least one domain".into()));
        }
        if domains.len() != grid.num_domains() {
            return Err(Error::InvalidInput(format!(
                "{} domains but grid covers {}",
                domains.len(),
                grid.num_domains()
            )));
        }
        if !(sla_target.is_finite() && sla_target > 0.0) {
            return Err(Error::InvalidInput(format!("SLA target must be positive, got {sla_target}")));
        }
        let mut latency_noise_std = Vec::with_capacity(domains.len());
        let mut cost_noise_std = Vec::with_capacity(domains.len());
        for (i, d) in domains.iter().enumerate() {
            d.latency.check_params()?;
            d.cost.check_params()?;
            if !(d.noise_level.is_finite() && d.noise_level >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "domain {}: noise level must be nonnegative",
                    i + 1
                )));
            }
            if !(d.query_epoch.is_finite() && d.query_epoch > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "domain {}: query epoch must be positive",
                    i + 1
                )));
            }
            let mut f_max: f64 = 0.0;
            let mut g_max: f64 = 0.0;
            for &x in grid.domain(i) {
                f_max = f_max.max(d.true_latency(x)?.abs());
                g_max = g_max.max(d.true_cost(x)?.abs());
            }
            latency_noise_std.push(d.noise_level * f_max);
            cost_noise_std.push(d.noise_level * g_max);
        }
        Ok(EnvironmentSpec {
            domains,
            sla_target,
            grid,
            latency_noise_std,
            cost_noise_std,
        })
    }

    pub fn domains(&self) -> &[DomainSpec] {
        &self.domains
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn sla_target(&self) -> f64 {
        self.sla_target
    }

    pub fn grid(&self) -> &SearchGrid {
        &self.grid
    }

    /// Latency noise standard deviation per domain.
    pub fn latency_noise_std(&self) -> &[f64] {
        &self.latency_noise_std
    }

    /// Cost noise standard deviation per domain.
    pub fn cost_noise_std(&self) -> &[f64] {
        &self.cost_noise_std
    }

    /// Same domains with a different SLA target (re-validated).
    pub fn with_sla_target(&self, sla_target: f64) -> Result<Self> {
        Self::new(self.domains.clone(), sla_target, self.grid.clone())
    }

    /// Same environment with every domain's noise level replaced.
    pub fn with_noise_level(&self, level: f64) -> Result<Self> {
        let domains = self
            .domains
            .iter()
            .map(|d| DomainSpec {
                noise_level: level,
                ..d.clone()
            })
            .collect();
        Self::unchecked(domains, self.sla_target, self.grid.clone())
    }

    /// One noisy `(latency, cost)` sample from domain `i` at target `x`.
    pub fn observe<R: Rng + ?Sized>(&self, i: usize, x: f64, rng: &mut R) -> Result<(f64, f64)> {
        let d = self
            .domains
            .get(i)
            .ok_or_else(|| Error::InvalidInput(format!("no domain {i}")))?;
        let zf: f64 = rng.sample(StandardNormal);
        let zg: f64 = rng.sample(StandardNormal);
        Ok((
            d.true_latency(x)? + self.latency_noise_std[i] * zf,
            d.true_cost(x)? + self.cost_noise_std[i] * zg,
        ))
    }

    /// Mean of `samples` independent observations of domain `i` at `x`.
    pub fn observe_averaged<R: Rng + ?Sized>(
        &self,
        i: usize,
        x: f64,
        samples: usize,
        rng: &mut R,
    ) -> Result<(f64, f64)> {
        if samples == 0 {
            return Err(Error::InvalidInput("need at least one sample".into()));
        }
        let (mut sf, mut sg) = self.observe(i, x, rng)?;
        for _ in 1..samples {
            let (f, g) = self.observe(i, x, rng)?;
            sf += f;
            sg += g;
        }
        Ok((sf / samples as f64, sg / samples as f64))
    }

    pub fn true_values(&self, targets: &[f64]) -> Result<TrueValues> {
        if targets.len() != self.domains.len() {
            return Err(Error::InvalidInput(format!(
                "{} targets for {} domains",
                targets.len(),
                self.domains.len()
            )));
        }
        let mut tv = TrueValues::default();
        for (d, &x) in self.domains.iter().zip(targets) {
            tv.latency.push(d.true_latency(x)?);
            tv.cost.push(d.true_cost(x)?);
        }
        Ok(tv)
    }

    /// Smallest and largest achievable end-to-end latency over the grid.
    pub fn latency_range(&self) -> Result<(f64, f64)> {
        let mut lo = Vec::with_capacity(self.domains.len());
        let mut hi = Vec::with_capacity(self.domains.len());
        for (i, d) in self.domains.iter().enumerate() {
            let vals = self
                .grid
                .domain(i)
                .iter()
                .map(|&x| d.true_latency(x))
                .collect::<Result<Vec<_>>>()?;
            lo.push(vals.iter().copied().fold(f64::INFINITY, f64::min));
            hi.push(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok((ordered_sum(lo), ordered_sum(hi)))
    }

    /// Brute-force solution of the offline problem over the grid: the feasible
    /// combination of least total cost, lexicographically first on ties.
    pub fn optimal_decomposition(&self) -> Result<(Decomposition, f64)> {
        let d = self.domains.len();
        let tables: Vec<(Vec<f64>, Vec<f64>)> = (0..d)
            .map(|i| {
                let dom = &self.domains[i];
                let pts = self.grid.domain(i);
                let f = pts.iter().map(|&x| dom.true_latency(x)).collect::<Result<Vec<_>>>()?;
                let g = pts.iter().map(|&x| dom.true_cost(x)).collect::<Result<Vec<_>>>()?;
                Ok((f, g))
            })
            .collect::<Result<_>>()?;
        let mut idx = vec![0usize; d];
        let mut best: Option<(Vec<usize>, f64)> = None;
        loop {
            let lat = ordered_sum(idx.iter().zip(&tables).map(|(&j, t)| t.0[j]));
            if lat <= self.sla_target {
                let cost = ordered_sum(idx.iter().zip(&tables).map(|(&j, t)| t.1[j]));
                if best.as_ref().is_none_or(|b| cost < b.1) {
                    best = Some((idx.clone(), cost));
                }
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return match best {
                        Some((indices, cost)) => Ok((self.grid.decomposition(&indices)?, cost)),
                        None => Err(Error::InfeasibleEnvironment(format!(
                            "no grid combination meets the SLA target {}",
                            self.sla_target
                        ))),
                    };
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < tables[k].0.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

pub fn optimal_decomposition(env: &EnvironmentSpec) -> Result<(Decomposition, f64)> {
    env.optimal_decomposition()
}
