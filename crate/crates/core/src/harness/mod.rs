//! Experiment grid execution and CSV persistence.
//!
//! A run directory holds one per-round CSV per `(cell, seed)` under `runs/`,
//! one across-seed aggregate per cell under `aggregates/`, a plain-text
//! `manifest.txt`, and `summary.csv` with one row per cell. Output bytes
//! depend only on the effective configuration, never on the thread count.

mod config;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::acquisition::ordered_sum;
use crate::algorithms::{self, domain_points, Algorithm, RunRecord, SelectionFlag};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricSeries};
use crate::simulator::EnvironmentSpec;
use crate::surrogate::greedy_information_gain_cached;

pub use config::{Cell, DomainConfig, EnvironmentConfig, ExperimentConfig, GridConfig};

pub const MANIFEST: &str = "manifest.txt";
pub const SUMMARY: &str = "summary.csv";

/// Per-run quantities used by the property checks.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDiagnostics {
    pub cell: Cell,
    pub seed: u64,
    pub rounds: usize,
    /// `sum_t sigma_{t-1}(x_t)` per surrogate.
    pub sigma_sums: Vec<f64>,
    /// Greedy information gain after `N` observations per domain; only
    /// filled for the per-domain algorithm.
    pub gamma_hat: Vec<f64>,
    /// Rounds selected under a satisfiable optimistic constraint.
    pub feasible_rounds: usize,
    pub final_cum_regret: f64,
    pub final_violation_norm: f64,
    pub satisfaction_rate: f64,
    pub mean_latency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub runs: Vec<RunDiagnostics>,
    /// Paths relative to the output directory, in manifest order.
    pub files: Vec<PathBuf>,
    pub config_sha256: String,
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub sla_target: f64,
    pub noise_level: f64,
    pub horizon: f64,
    pub runs: usize,
    pub cum_regret_mean: f64,
    pub cum_regret_std: f64,
    pub violation_norm_mean: f64,
    pub violation_norm_std: f64,
    pub satisfaction_mean: f64,
    pub latency_mean: f64,
}

/// Hash of the configuration with the fields that cannot change outputs
/// (thread count and output location) blanked.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.parallelism = 1;
    c.output_dir = PathBuf::new();
    hex::encode(Sha256::digest(c.to_toml().as_bytes()))
}

fn csv_bytes(header: &[String], rows: &[Vec<String>], path: &Path) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn run_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = ["experiment_id", "algorithm", "seed", "L", "noise_level", "T", "round"]
        .map(String::from)
        .to_vec();
    for prefix in ["x", "yf", "yg", "f_true", "g_true"] {
        h.extend((1..=d).map(|i| format!("{prefix}_{i}")));
    }
    h.extend(
        ["feasible_flag", "inst_regret", "cum_regret", "inst_violation", "cum_violation_norm"].map(String::from),
    );
    h
}

fn run_rows(id: &str, cell: &Cell, rec: &RunRecord, m: &MetricSeries) -> Vec<Vec<String>> {
    rec.rounds
        .iter()
        .enumerate()
        .map(|(t, r)| {
            let mut row = vec![
                id.to_string(),
                cell.algorithm.to_string(),
                rec.seed.to_string(),
                cell.sla_target.to_string(),
                cell.noise_level.to_string(),
                cell.horizon.to_string(),
                (t + 1).to_string(),
            ];
            for col in [
                r.decomposition.targets(),
                &r.feedback.latency,
                &r.feedback.cost,
                &r.truth.latency,
                &r.truth.cost,
            ] {
                row.extend(col.iter().map(f64::to_string));
            }
            row.push(if m.satisfied[t] { "1" } else { "0" }.to_string());
            row.push(m.regret.instantaneous[t].to_string());
            row.push(m.regret.cumulative[t].to_string());
            row.push(m.violation.instantaneous[t].to_string());
            row.push(m.violation.normalized[t].to_string());
            row
        })
        .collect()
}

fn aggregate_header() -> Vec<String> {
    [
        "round",
        "cum_regret_mean",
        "cum_regret_std",
        "cum_violation_norm_mean",
        "cum_violation_norm_std",
        "e2e_latency_mean",
        "e2e_latency_std",
        "satisfied_fraction",
    ]
    .map(String::from)
    .to_vec()
}

struct Task<'a> {
    cell: &'a Cell,
    seed: u64,
    env: &'a EnvironmentSpec,
    oracle_cost: f64,
}

struct TaskOutput {
    diagnostics: RunDiagnostics,
    series: MetricSeries,
    latencies: Vec<f64>,
    file: PathBuf,
    rows: usize,
}

fn execute(config: &ExperimentConfig, out: &Path, task: &Task<'_>) -> Result<TaskOutput> {
    let cell = task.cell;
    let algo = config.algo_config(cell.algorithm, cell.horizon)?;
    let rec = algorithms::run(task.env, &algo, task.env.grid(), task.seed)?;
    let series = MetricSeries::from_record(&rec, task.oracle_cost);
    let latencies = metrics::total_latencies(&rec);
    let file = PathBuf::from("runs").join(format!("{}_s{}.csv", cell.stem(), task.seed));
    let path = out.join(&file);
    let d = task.env.num_domains();
    let bytes = csv_bytes(&run_header(d), &run_rows(&config.experiment_id, cell, &rec, &series), &path)?;
    write(&path, &bytes)?;

    let width = rec.rounds.first().map_or(0, |r| r.sigma_before.len());
    let sigma_sums = (0..width)
        .map(|i| ordered_sum(rec.rounds.iter().map(|r| r.sigma_before[i])))
        .collect();
    let gamma_hat = if cell.algorithm == Algorithm::Odin {
        let n = rec.rounds.len();
        (0..d)
            .map(|i| {
                let pts = domain_points(task.env.grid(), i);
                let horizon = n + algo.warm_start_passes * pts.len();
                Ok(greedy_information_gain_cached(&algo.kernel, algo.lambda, &pts, horizon)?[n])
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let diagnostics = RunDiagnostics {
        cell: cell.clone(),
        seed: task.seed,
        rounds: rec.rounds.len(),
        sigma_sums,
        gamma_hat,
        feasible_rounds: rec.rounds.iter().filter(|r| r.flag == SelectionFlag::Feasible).count(),
        final_cum_regret: series.regret.cumulative.last().copied().unwrap_or(0.0),
        final_violation_norm: series.violation.normalized.last().copied().unwrap_or(0.0),
        satisfaction_rate: series.satisfaction_rate,
        mean_latency: series.mean_latency,
    };
    Ok(TaskOutput {
        diagnostics,
        rows: rec.rounds.len(),
        series,
        latencies,
        file,
    })
}

/// Runs every `(algorithm, L, R, T, seed)` combination and writes the run
/// directory. Seeds are `base_seed + replicate`, shared across cells so
/// that algorithms face the same noise draws.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let out = config.output_dir.as_path();
    for sub in ["runs", "aggregates"] {
        let p = out.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let cells = config.cells()?;

    // Environments and oracle costs per (L, R), computed once.
    let mut envs: HashMap<(u64, u64), EnvironmentSpec> = HashMap::new();
    let mut oracle: HashMap<u64, f64> = HashMap::new();
    for &l in &config.sla_targets {
        let base = config.environment(l, 0.0)?;
        oracle.insert(l.to_bits(), base.optimal_decomposition()?.1);
        for &r in &config.noise_levels {
            envs.insert((l.to_bits(), r.to_bits()), base.with_noise_level(r)?);
        }
    }
    let tasks: Vec<Task<'_>> = cells
        .iter()
        .flat_map(|cell| {
            let env = &envs[&(cell.sla_target.to_bits(), cell.noise_level.to_bits())];
            let oracle_cost = oracle[&cell.sla_target.to_bits()];
            (0..config.num_seeds as u64).map(move |k| Task {
                cell,
                seed: config.base_seed + k,
                env,
                oracle_cost,
            })
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let outputs: Vec<TaskOutput> =
        pool.install(|| tasks.par_iter().map(|t| execute(config, out, t)).collect::<Result<Vec<_>>>())?;

    let mut manifest_files: Vec<(PathBuf, usize)> = Vec::new();
    let mut report_files = Vec::new();
    for (cell, chunk) in cells.iter().zip(outputs.chunks(config.num_seeds)) {
        for o in chunk {
            manifest_files.push((o.file.clone(), o.rows));
        }
        let series: Vec<MetricSeries> = chunk.iter().map(|o| o.series.clone()).collect();
        let agg = metrics::aggregate(&series)?;
        let lat: Vec<&[f64]> = chunk.iter().map(|o| o.latencies.as_slice()).collect();
        let lat = metrics::mean_std(&lat)?;
        let n = agg.cumulative_regret.mean.len();
        let rows: Vec<Vec<String>> = (0..n)
            .map(|t| {
                let sat = chunk.iter().filter(|o| o.series.satisfied[t]).count() as f64 / chunk.len() as f64;
                vec![
                    (t + 1).to_string(),
                    agg.cumulative_regret.mean[t].to_string(),
                    agg.cumulative_regret.std[t].to_string(),
                    agg.normalized_violation.mean[t].to_string(),
                    agg.normalized_violation.std[t].to_string(),
                    lat.mean[t].to_string(),
                    lat.std[t].to_string(),
                    sat.to_string(),
                ]
            })
            .collect();
        let file = PathBuf::from("aggregates").join(format!("{}.csv", cell.stem()));
        let path = out.join(&file);
        write(&path, &csv_bytes(&aggregate_header(), &rows, &path)?)?;
        manifest_files.push((file, n));
    }

    let hash = config_hash(config);
    let mut manifest = format!(
        "sladecomp {}\nexperiment_id {}\nconfig_sha256 {hash}\nruns {}\n",
        env!("CARGO_PKG_VERSION"),
        config.experiment_id,
        outputs.len()
    );
    for (f, rows) in &manifest_files {
        manifest.push_str(&format!("{}\t{rows}\n", unix_path(f)));
        report_files.push(f.clone());
    }
    write(&out.join(MANIFEST), manifest.as_bytes())?;
    emit_summary(out)?;

    Ok(ExperimentReport {
        runs: outputs.into_iter().map(|o| o.diagnostics).collect(),
        files: report_files,
        config_sha256: hash,
    })
}

fn unix_path(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Manifest entries `(relative path, expected data rows)`.
pub fn read_manifest(out_dir: &Path) -> Result<Vec<(String, usize)>> {
    let path = out_dir.join(MANIFEST);
    let text = fs::read_to_string(&path)
        .map_err(|_| Error::Integrity(format!("no {MANIFEST} in {}", out_dir.display())))?;
    let mut entries = Vec::new();
    for line in text.lines() {
        if let Some((file, rows)) = line.split_once('\t') {
            let rows = rows
                .parse()
                .map_err(|_| Error::Integrity(format!("malformed manifest line '{line}'")))?;
            entries.push((file.to_string(), rows));
        }
    }
    if entries.is_empty() {
        return Err(Error::Integrity(format!("{MANIFEST} lists no files")));
    }
    Ok(entries)
}

struct RunFile {
    algorithm: String,
    sla: f64,
    noise: f64,
    horizon: f64,
    inst_regret: Vec<f64>,
    latencies: Vec<f64>,
}

fn read_run_file(path: &Path, expected_rows: usize) -> Result<RunFile> {
    let name = path.display();
    let mut rdr = csv::Reader::from_path(path).map_err(|_| Error::Integrity(format!("missing run file {name}")))?;
    let header = rdr
        .headers()
        .map_err(|e| Error::Integrity(format!("{name}: {e}")))?
        .clone();
    let col = |key: &str| {
        header
            .iter()
            .position(|h| h == key)
            .ok_or_else(|| Error::Integrity(format!("{name}: no column {key}")))
    };
    let f_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("f_true_"))
        .map(|(i, _)| i)
        .collect();
    if f_cols.is_empty() || header.len() != run_header(f_cols.len()).len() {
        return Err(Error::Integrity(format!("{name}: unexpected header")));
    }
    let (c_alg, c_l, c_r, c_t, c_round, c_reg) =
        (col("algorithm")?, col("L")?, col("noise_level")?, col("T")?, col("round")?, col("inst_regret")?);
    let num = |rec: &csv::StringRecord, i: usize, line: usize| -> Result<f64> {
        rec.get(i)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Integrity(format!("{name}: bad number at data row {line}")))
    };
    let mut out = RunFile {
        algorithm: String::new(),
        sla: 0.0,
        noise: 0.0,
        horizon: 0.0,
        inst_regret: Vec::new(),
        latencies: Vec::new(),
    };
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Integrity(format!("{name}: {e}")))?;
        if num(&rec, c_round, k + 1)? != (k + 1) as f64 {
            return Err(Error::Integrity(format!("{name}: round numbers out of sequence at row {}", k + 1)));
        }
        if k == 0 {
            out.algorithm = rec[c_alg].to_string();
            out.sla = num(&rec, c_l, 1)?;
            out.noise = num(&rec, c_r, 1)?;
            out.horizon = num(&rec, c_t, 1)?;
        }
        out.inst_regret.push(num(&rec, c_reg, k + 1)?);
        let f = f_cols.iter().map(|&i| num(&rec, i, k + 1)).collect::<Result<Vec<_>>>()?;
        out.latencies.push(ordered_sum(f));
    }
    if out.latencies.len() != expected_rows {
        return Err(Error::Integrity(format!(
            "{name}: {} rows, manifest expects {expected_rows}",
            out.latencies.len()
        )));
    }
    Ok(out)
}

/// Recomputes the per-cell summary from the per-round CSVs alone and writes
/// `summary.csv`.
pub fn emit_summary(out_dir: &Path) -> Result<Vec<SummaryRow>> {
    let entries = read_manifest(out_dir)?;
    for (file, _) in &entries {
        if !out_dir.join(file).is_file() {
            return Err(Error::Integrity(format!("listed file {file} is missing")));
        }
    }
    let mut order: Vec<(String, u64, u64, u64)> = Vec::new();
    let mut groups: HashMap<(String, u64, u64, u64), Vec<RunFile>> = HashMap::new();
    for (file, rows) in entries.iter().filter(|(f, _)| f.starts_with("runs/")) {
        let rf = read_run_file(&out_dir.join(file), *rows)?;
        let key = (rf.algorithm.clone(), rf.sla.to_bits(), rf.noise.to_bits(), rf.horizon.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(rf);
    }
    if order.is_empty() {
        return Err(Error::Integrity("manifest lists no run files".into()));
    }
    let mut rows = Vec::with_capacity(order.len());
    for key in &order {
        let runs = &groups[key];
        let first = &runs[0];
        let regret: Vec<[f64; 1]> = runs.iter().map(|r| [ordered_sum(r.inst_regret.iter().copied())]).collect();
        let viol: Vec<[f64; 1]> = runs
            .iter()
            .map(|r| {
                let v = metrics::violation_from_latencies(&r.latencies, r.sla, 1.0);
                [v.normalized.last().copied().unwrap_or(0.0)]
            })
            .collect();
        let regret = metrics::mean_std(&regret.iter().map(|a| a.as_slice()).collect::<Vec<_>>())?;
        let viol = metrics::mean_std(&viol.iter().map(|a| a.as_slice()).collect::<Vec<_>>())?;
        let n = runs.len() as f64;
        let sat = ordered_sum(runs.iter().map(|r| metrics::satisfaction_from_latencies(&r.latencies, r.sla))) / n;
        let lat = ordered_sum(
            runs.iter()
                .map(|r| ordered_sum(r.latencies.iter().copied()) / r.latencies.len().max(1) as f64),
        ) / n;
        rows.push(SummaryRow {
            algorithm: first.algorithm.clone(),
            sla_target: first.sla,
            noise_level: first.noise,
            horizon: first.horizon,
            runs: runs.len(),
            cum_regret_mean: regret.mean[0],
            cum_regret_std: regret.std[0],
            violation_norm_mean: viol.mean[0],
            violation_norm_std: viol.std[0],
            satisfaction_mean: sat,
            latency_mean: lat,
        });
    }
    let header: Vec<String> = [
        "algorithm",
        "L",
        "noise_level",
        "T",
        "runs",
        "cum_regret_mean",
        "cum_regret_std",
        "cum_violation_norm_mean",
        "cum_violation_norm_std",
        "satisfaction_rate_mean",
        "e2e_latency_mean",
    ]
    .map(String::from)
    .to_vec();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.algorithm.clone(),
                r.sla_target.to_string(),
                r.noise_level.to_string(),
                r.horizon.to_string(),
                r.runs.to_string(),
                r.cum_regret_mean.to_string(),
                r.cum_regret_std.to_string(),
                r.violation_norm_mean.to_string(),
                r.violation_norm_std.to_string(),
                r.satisfaction_mean.to_string(),
                r.latency_mean.to_string(),
            ]
        })
        .collect();
    let path = out_dir.join(SUMMARY);
    write(&path, &csv_bytes(&header, &body, &path)?)?;
    Ok(rows)
}
