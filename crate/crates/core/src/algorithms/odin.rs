use std::sync::Arc;

use crate::acquisition::{ordered_sum, select, Decomposition, DomainTable, SearchGrid, SolverKind};
use crate::confidence::{beta, ConfidenceParams};
use crate::error::{Error, Result};
use crate::simulator::EnvironmentSpec;
use crate::surrogate::{greedy_information_gain_cached, CandidatePosterior};

use super::{domain_points, AlgoConfig, Diagnostics, Learner, Proposal, RoundFeedback, Sampler, SelectionFlag};

/// Per-domain GP surrogates for latency and cost with optimistic (lower
/// confidence bound) selection on both the objective and the constraint.
pub struct OdinLearner {
    grid: SearchGrid,
    sla: f64,
    // Channel 0 is latency, channel 1 is cost.
    posteriors: Vec<CandidatePosterior>,
    gains: Vec<Arc<Vec<f64>>>,
    params_f: Vec<ConfidenceParams>,
    params_g: Vec<ConfidenceParams>,
    beta_scale: f64,
    solver: SolverKind,
}

impl OdinLearner {
    pub fn new(env: &EnvironmentSpec, config: &AlgoConfig, grid: &SearchGrid) -> Result<Self> {
        let d = env.num_domains();
        let ratios = config.epoch_ratios()?;
        let rounds = config.rounds()?;
        let mut posteriors = Vec::with_capacity(d);
        let mut gains = Vec::with_capacity(d);
        let mut params_f = Vec::with_capacity(d);
        let mut params_g = Vec::with_capacity(d);
        for i in 0..d {
            let pts = domain_points(grid, i);
            posteriors.push(CandidatePosterior::new(&config.kernel, config.lambda, &pts, 2)?);
            let horizon = rounds + config.warm_start_passes * pts.len();
            gains.push(greedy_information_gain_cached(&config.kernel, config.lambda, &pts, horizon)?);
            let ratio = ratios[i] as f64;
            params_f.push(config.confidence_params(config.rkhs_bounds_f[i], env.latency_noise_std()[i], ratio, d));
            params_g.push(config.confidence_params(config.rkhs_bounds_g[i], env.cost_noise_std()[i], ratio, d));
        }
        Ok(OdinLearner {
            grid: grid.clone(),
            sla: env.sla_target(),
            posteriors,
            gains,
            params_f,
            params_g,
            beta_scale: config.beta_scale,
            solver: config.solver,
        })
    }

    fn widths(&self, i: usize) -> Result<(f64, f64)> {
        let t = self.posteriors[i].observations();
        let gamma = *self.gains[i]
            .get(t)
            .ok_or_else(|| Error::InvalidInput(format!("information gain not tabulated for t = {t}")))?;
        Ok((
            self.beta_scale * beta(&self.params_f[i], gamma)?,
            self.beta_scale * beta(&self.params_g[i], gamma)?,
        ))
    }
}

impl Learner for OdinLearner {
    fn warm_start(&mut self, passes: usize, sample: &mut Sampler<'_>) -> Result<()> {
        for _ in 0..passes {
            for i in 0..self.grid.num_domains() {
                for (j, &x) in self.grid.domain(i).iter().enumerate() {
                    let (yf, yg) = sample(i, x)?;
                    self.posteriors[i].observe(j, &[yf, yg])?;
                }
            }
        }
        Ok(())
    }

    fn propose(&mut self) -> Result<Proposal> {
        let d = self.grid.num_domains();
        let mut beta_f = Vec::with_capacity(d);
        let mut beta_g = Vec::with_capacity(d);
        let mut tables = Vec::with_capacity(d);
        for (i, post) in self.posteriors.iter().enumerate() {
            let (bf, bg) = self.widths(i)?;
            let mut lat = Vec::with_capacity(post.len());
            let mut cost = Vec::with_capacity(post.len());
            for j in 0..post.len() {
                let sd = post.std_dev(j)?;
                lat.push(post.mean(0, j) - bf * sd);
                cost.push(post.mean(1, j) - bg * sd);
            }
            tables.push(DomainTable::new(lat, cost)?);
            beta_f.push(bf);
            beta_g.push(bg);
        }
        let sel = select(&tables, self.sla, self.solver)?;
        if sel.feasible {
            // Re-derive the optimistic latency sum from the posteriors.
            let check = ordered_sum(
                sel.indices
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| {
                        let p = &self.posteriors[i];
                        Ok(p.mean(0, j) - beta_f[i] * p.std_dev(j)?)
                    })
                    .collect::<Result<Vec<f64>>>()?,
            );
            if !(check <= self.sla) {
                return Err(Error::InvariantViolation(format!(
                    "selection flagged feasible but summed latency bound {check} exceeds {}",
                    self.sla
                )));
            }
        }
        Ok(Proposal {
            decomposition: self.grid.decomposition(&sel.indices)?,
            flag: if sel.feasible {
                SelectionFlag::Feasible
            } else {
                SelectionFlag::Infeasible
            },
            beta_f,
            beta_g,
            latency_lcb_sum: Some(sel.latency_sum),
        })
    }

    fn observe(&mut self, decision: &Decomposition, feedback: &RoundFeedback) -> Result<Diagnostics> {
        let mut diag = Diagnostics::default();
        for (i, &j) in decision.indices().iter().enumerate() {
            let post = &mut self.posteriors[i];
            let before = post.observe(j, &[feedback.latency[i], feedback.cost[i]])?;
            diag.sigma_before.push(before.sqrt());
            diag.info_gain.push(post.realized_information_gain());
        }
        Ok(diag)
    }
}
