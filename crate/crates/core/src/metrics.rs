//! Regret, hard constraint violation and SLA satisfaction.
//!
//! Everything here is computed from the simulator's true latency and cost
//! values, never from the noisy feedback a learner saw.

use crate::acquisition::ordered_sum;
use crate::algorithms::RunRecord;
use crate::error::{Error, Result};

/// Per-round and cumulative regret of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretSeries {
    /// `r_t`, may be negative when an infeasible point undercuts the optimum.
    pub instantaneous: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// `R(T) = tau_dm * R_N`.
    pub scaled_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationSeries {
    /// `v_t = (sum_i f^i - L)^+`.
    pub instantaneous: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// `V_t / (L t)`.
    pub normalized: Vec<f64>,
    /// `V(T) = tau_dm * V_N`.
    pub scaled_total: f64,
}

/// Every per-run quantity the harness reports.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub regret: RegretSeries,
    pub violation: ViolationSeries,
    /// Whether the round's true end-to-end latency met the SLA.
    pub satisfied: Vec<bool>,
    pub satisfaction_rate: f64,
    pub mean_latency: f64,
}

fn running_sum(values: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// True end-to-end latency of every round.
pub fn total_latencies(record: &RunRecord) -> Vec<f64> {
    record
        .rounds
        .iter()
        .map(|r| ordered_sum(r.truth.latency.iter().copied()))
        .collect()
}

/// True total cost of every round.
pub fn total_costs(record: &RunRecord) -> Vec<f64> {
    record
        .rounds
        .iter()
        .map(|r| ordered_sum(r.truth.cost.iter().copied()))
        .collect()
}

pub fn regret_from_costs(costs: &[f64], oracle_cost: f64, decision_epoch: f64) -> RegretSeries {
    let instantaneous: Vec<f64> = costs.iter().map(|c| c - oracle_cost).collect();
    let cumulative = running_sum(&instantaneous);
    let scaled_total = decision_epoch * cumulative.last().copied().unwrap_or(0.0);
    RegretSeries {
        instantaneous,
        cumulative,
        scaled_total,
    }
}

pub fn violation_from_latencies(latencies: &[f64], sla: f64, decision_epoch: f64) -> ViolationSeries {
    let instantaneous: Vec<f64> = latencies.iter().map(|l| (l - sla).max(0.0)).collect();
    let cumulative = running_sum(&instantaneous);
    let normalized = cumulative
        .iter()
        .enumerate()
        .map(|(t, v)| v / (sla * (t + 1) as f64))
        .collect();
    let scaled_total = decision_epoch * cumulative.last().copied().unwrap_or(0.0);
    ViolationSeries {
        instantaneous,
        cumulative,
        normalized,
        scaled_total,
    }
}

/// Fraction of rounds with latency at most `sla`. An empty run counts as
/// fully satisfied.
pub fn satisfaction_from_latencies(latencies: &[f64], sla: f64) -> f64 {
    if latencies.is_empty() {
        return 1.0;
    }
    latencies.iter().filter(|&&l| l <= sla).count() as f64 / latencies.len() as f64
}

pub fn regret_series(record: &RunRecord, oracle_cost: f64, decision_epoch: f64) -> RegretSeries {
    regret_from_costs(&total_costs(record), oracle_cost, decision_epoch)
}

pub fn violation_series(record: &RunRecord, sla: f64, decision_epoch: f64) -> ViolationSeries {
    violation_from_latencies(&total_latencies(record), sla, decision_epoch)
}

pub fn satisfaction_rate(record: &RunRecord, sla: f64) -> f64 {
    satisfaction_from_latencies(&total_latencies(record), sla)
}

impl MetricSeries {
    /// All metrics of `record` against its own SLA target and decision epoch.
    pub fn from_record(record: &RunRecord, oracle_cost: f64) -> Self {
        let lat = total_latencies(record);
        let sla = record.sla_target;
        let mean_latency = if lat.is_empty() {
            0.0
        } else {
            ordered_sum(lat.iter().copied()) / lat.len() as f64
        };
        MetricSeries {
            regret: regret_series(record, oracle_cost, record.decision_epoch),
            violation: violation_from_latencies(&lat, sla, record.decision_epoch),
            satisfied: lat.iter().map(|&l| l <= sla).collect(),
            satisfaction_rate: satisfaction_from_latencies(&lat, sla),
            mean_latency,
        }
    }

    pub fn len(&self) -> usize {
        self.satisfied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.satisfied.is_empty()
    }
}

/// Pointwise mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanStd {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Pointwise statistics of equally long series. The standard deviation uses
/// the `n - 1` denominator and is zero for a single series.
pub fn mean_std(series: &[&[f64]]) -> Result<MeanStd> {
    let Some(first) = series.first() else {
        return Err(Error::InvalidInput("cannot aggregate zero series".into()));
    };
    let len = first.len();
    if let Some(bad) = series.iter().find(|s| s.len() != len) {
        return Err(Error::InvalidInput(format!(
            "series lengths differ: {len} and {}",
            bad.len()
        )));
    }
    let n = series.len() as f64;
    let mut mean = Vec::with_capacity(len);
    let mut std = Vec::with_capacity(len);
    for t in 0..len {
        let m = ordered_sum(series.iter().map(|s| s[t])) / n;
        let s = if series.len() > 1 {
            (ordered_sum(series.iter().map(|s| (s[t] - m).powi(2))) / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        std.push(s);
    }
    Ok(MeanStd { mean, std })
}

/// Across-run statistics of the reported series.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub runs: usize,
    pub cumulative_regret: MeanStd,
    pub normalized_violation: MeanStd,
    pub satisfaction_rate: MeanStd,
    pub mean_latency: MeanStd,
}

pub fn aggregate(series_list: &[MetricSeries]) -> Result<AggregateSeries> {
    let regret: Vec<&[f64]> = series_list.iter().map(|s| s.regret.cumulative.as_slice()).collect();
    let viol: Vec<&[f64]> = series_list.iter().map(|s| s.violation.normalized.as_slice()).collect();
    let sat: Vec<[f64; 1]> = series_list.iter().map(|s| [s.satisfaction_rate]).collect();
    let lat: Vec<[f64; 1]> = series_list.iter().map(|s| [s.mean_latency]).collect();
    Ok(AggregateSeries {
        runs: series_list.len(),
        cumulative_regret: mean_std(&regret)?,
        normalized_violation: mean_std(&viol)?,
        satisfaction_rate: mean_std(&sat.iter().map(|a| a.as_slice()).collect::<Vec<_>>())?,
        mean_latency: mean_std(&lat.iter().map(|a| a.as_slice()).collect::<Vec<_>>())?,
    })
}
