use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{select, Decomposition, DomainTable, SearchGrid, SolverKind};
use crate::error::Result;
use crate::simulator::EnvironmentSpec;
use crate::surrogate::CandidatePosterior;

use super::{domain_points, AlgoConfig, Diagnostics, Learner, Proposal, RoundFeedback, Sampler, SelectionFlag};

/// Uniform exploration for the first `ceil(alpha N)` rounds, then a single
/// solve of the offline problem with posterior means in place of the unknown
/// functions, played for the rest of the horizon.
pub struct EtcLearner {
    grid: SearchGrid,
    sla: f64,
    posteriors: Vec<CandidatePosterior>,
    explore_rounds: usize,
    round: usize,
    committed: Option<(Decomposition, bool, f64)>,
    rng: ChaCha8Rng,
    solver: SolverKind,
}

impl EtcLearner {
    pub fn new(env: &EnvironmentSpec, config: &AlgoConfig, grid: &SearchGrid, rng: ChaCha8Rng) -> Result<Self> {
        let posteriors = (0..env.num_domains())
            .map(|i| CandidatePosterior::new(&config.kernel, config.lambda, &domain_points(grid, i), 2))
            .collect::<Result<Vec<_>>>()?;
        Ok(EtcLearner {
            grid: grid.clone(),
            sla: env.sla_target(),
            posteriors,
            explore_rounds: config.exploration_rounds()?,
            round: 0,
            committed: None,
            rng,
            solver: config.solver,
        })
    }

    pub fn exploration_rounds(&self) -> usize {
        self.explore_rounds
    }

    fn commit(&mut self) -> Result<(Decomposition, bool, f64)> {
        let tables = self
            .posteriors
            .iter()
            .map(|p| DomainTable::new(p.means(0).to_vec(), p.means(1).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let sel = select(&tables, self.sla, self.solver)?;
        Ok((self.grid.decomposition(&sel.indices)?, sel.feasible, sel.latency_sum))
    }
}

impl Learner for EtcLearner {
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
        if self.round < self.explore_rounds {
            let idx: Vec<usize> = (0..d)
                .map(|i| self.rng.random_range(0..self.grid.resolution(i)))
                .collect();
            return Ok(Proposal {
                decomposition: self.grid.decomposition(&idx)?,
                flag: SelectionFlag::Exploration,
                beta_f: vec![0.0; d],
                beta_g: vec![0.0; d],
                latency_lcb_sum: None,
            });
        }
        if self.committed.is_none() {
            self.committed = Some(self.commit()?);
        }
        let (decomposition, feasible, latency_sum) = self.committed.clone().expect("committed above");
        Ok(Proposal {
            decomposition,
            flag: if feasible {
                SelectionFlag::Feasible
            } else {
                SelectionFlag::Infeasible
            },
            beta_f: vec![0.0; d],
            beta_g: vec![0.0; d],
            latency_lcb_sum: Some(latency_sum),
        })
    }

    fn observe(&mut self, decision: &Decomposition, feedback: &RoundFeedback) -> Result<Diagnostics> {
        let exploring = self.round < self.explore_rounds;
        self.round += 1;
        let mut diag = Diagnostics::default();
        for (i, &j) in decision.indices().iter().enumerate() {
            let post = &mut self.posteriors[i];
            let before = if exploring {
                post.observe(j, &[feedback.latency[i], feedback.cost[i]])?
            } else {
                // Surrogates are frozen once committed.
                post.variance(j)?
            };
            diag.sigma_before.push(before.sqrt());
            diag.info_gain.push(post.realized_information_gain());
        }
        Ok(diag)
    }
}
