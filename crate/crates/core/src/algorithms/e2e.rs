use std::sync::Arc;

use crate::acquisition::{ordered_sum, select_joint, Decomposition, SearchGrid};
use crate::confidence::{beta, ConfidenceParams};
use crate::error::{Error, Result};
use crate::simulator::EnvironmentSpec;
use crate::surrogate::{greedy_information_gain_cached, CandidatePosterior};

use super::{AlgoConfig, Diagnostics, Learner, Proposal, RoundFeedback, Sampler, SelectionFlag};

/// Largest per-domain count `s` with `s^d <= cap`.
fn per_domain_cap(cap: usize, d: usize) -> usize {
    let mut s = 1usize;
    while (s + 1).checked_pow(d as u32).is_some_and(|v| v <= cap) {
        s += 1;
    }
    s
}

/// `count` indices spread evenly over `0..len`, both ends included.
fn thin(len: usize, count: usize) -> Vec<usize> {
    if count >= len {
        return (0..len).collect();
    }
    if count == 1 {
        return vec![0];
    }
    let mut out: Vec<usize> = (0..count)
        .map(|k| (k * (len - 1) + (count - 1) / 2) / (count - 1))
        .collect();
    out.dedup();
    out
}

/// Joint surrogate over the whole decomposition: one GP for the end-to-end
/// latency `sum_i f^i` and one for the total cost `sum_i g^i`, both over
/// `D`-dimensional inputs.
pub struct E2eLearner {
    grid: SearchGrid,
    sla: f64,
    // Grid index tuples in lexicographic order.
    candidates: Vec<Vec<usize>>,
    posterior: CandidatePosterior,
    gains: Arc<Vec<f64>>,
    params_f: ConfidenceParams,
    params_g: ConfidenceParams,
    beta_scale: f64,
}

impl E2eLearner {
    pub fn new(env: &EnvironmentSpec, config: &AlgoConfig, grid: &SearchGrid) -> Result<Self> {
        let d = env.num_domains();
        let kept: Vec<Vec<usize>> = match grid.combinations() {
            Some(c) if c <= config.e2e_max_candidates as u128 => {
                (0..d).map(|i| (0..grid.resolution(i)).collect()).collect()
            }
            _ => {
                let s = per_domain_cap(config.e2e_max_candidates, d);
                (0..d).map(|i| thin(grid.resolution(i), s)).collect()
            }
        };
        let mut candidates = vec![Vec::new()];
        for axis in &kept {
            candidates = candidates
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&j| {
                        let mut p = prefix.clone();
                        p.push(j);
                        p
                    })
                })
                .collect();
        }
        let points: Vec<Vec<f64>> = candidates
            .iter()
            .map(|idx| idx.iter().enumerate().map(|(i, &j)| grid.domain(i)[j]).collect())
            .collect();
        let kernel = config.kernel.with_dimension(d)?;
        let posterior = CandidatePosterior::new(&kernel, config.lambda, &points, 2)?;
        let horizon = config.rounds()? + config.warm_start_passes * points.len();
        let gains = greedy_information_gain_cached(&kernel, config.lambda, &points, horizon)?;

        // Sum of independent per-domain noises. With a common averaging ratio
        // the root-sum-square norm keeps the same ratio; otherwise the ratios
        // are folded into the norm.
        let ratios = config.epoch_ratios()?;
        let common = ratios.iter().all(|&r| r == ratios[0]);
        let fold = |stds: &[f64]| -> (f64, f64) {
            if common {
                (ordered_sum(stds.iter().map(|s| s * s)).sqrt(), ratios[0] as f64)
            } else {
                let v = ordered_sum(stds.iter().zip(&ratios).map(|(s, &r)| s * s / r as f64));
                (v.sqrt(), 1.0)
            }
        };
        let (noise_f, ratio_f) = fold(env.latency_noise_std());
        let (noise_g, ratio_g) = fold(env.cost_noise_std());
        let params_f = config.confidence_params(ordered_sum(config.rkhs_bounds_f.iter().copied()), noise_f, ratio_f, 1);
        let params_g = config.confidence_params(ordered_sum(config.rkhs_bounds_g.iter().copied()), noise_g, ratio_g, 1);
        Ok(E2eLearner {
            grid: grid.clone(),
            sla: env.sla_target(),
            candidates,
            posterior,
            gains,
            params_f,
            params_g,
            beta_scale: config.beta_scale,
        })
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    pub fn noise_norms(&self) -> (f64, f64) {
        (self.params_f.noise_norm, self.params_g.noise_norm)
    }

    fn candidate_index(&self, indices: &[usize]) -> Result<usize> {
        self.candidates
            .binary_search_by(|c| c.as_slice().cmp(indices))
            .map_err(|_| Error::InvalidInput(format!("decomposition {indices:?} is not a joint candidate")))
    }
}

impl Learner for E2eLearner {
    fn warm_start(&mut self, passes: usize, sample: &mut Sampler<'_>) -> Result<()> {
        for _ in 0..passes {
            for c in 0..self.candidates.len() {
                let mut yf = Vec::with_capacity(self.grid.num_domains());
                let mut yg = Vec::with_capacity(self.grid.num_domains());
                for (i, &j) in self.candidates[c].iter().enumerate() {
                    let (f, g) = sample(i, self.grid.domain(i)[j])?;
                    yf.push(f);
                    yg.push(g);
                }
                self.posterior.observe(c, &[ordered_sum(yf), ordered_sum(yg)])?;
            }
        }
        Ok(())
    }

    fn propose(&mut self) -> Result<Proposal> {
        let t = self.posterior.observations();
        let gamma = *self
            .gains
            .get(t)
            .ok_or_else(|| Error::InvalidInput(format!("information gain not tabulated for t = {t}")))?;
        let bf = self.beta_scale * beta(&self.params_f, gamma)?;
        let bg = self.beta_scale * beta(&self.params_g, gamma)?;
        let n = self.posterior.len();
        let mut lat = Vec::with_capacity(n);
        let mut cost = Vec::with_capacity(n);
        for c in 0..n {
            let sd = self.posterior.std_dev(c)?;
            lat.push(self.posterior.mean(0, c) - bf * sd);
            cost.push(self.posterior.mean(1, c) - bg * sd);
        }
        let (c, feasible) = select_joint(&lat, &cost, self.sla)?;
        Ok(Proposal {
            decomposition: self.grid.decomposition(&self.candidates[c])?,
            flag: if feasible {
                SelectionFlag::Feasible
            } else {
                SelectionFlag::Infeasible
            },
            beta_f: vec![bf],
            beta_g: vec![bg],
            latency_lcb_sum: Some(lat[c]),
        })
    }

    fn observe(&mut self, decision: &Decomposition, feedback: &RoundFeedback) -> Result<Diagnostics> {
        let c = self.candidate_index(decision.indices())?;
        let yf = ordered_sum(feedback.latency.iter().copied());
        let yg = ordered_sum(feedback.cost.iter().copied());
        let before = self.posterior.observe(c, &[yf, yg])?;
        Ok(Diagnostics {
            sigma_before: vec![before.sqrt()],
            info_gain: vec![self.posterior.realized_information_gain()],
        })
    }
}
