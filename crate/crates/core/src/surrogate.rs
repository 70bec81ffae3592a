//! Gaussian-process surrogates.
//!
//! [`ObservationHistory`] is the general surrogate: it stores every observation
//! and keeps a lower-triangular factor of `K_t + lambda I` that grows by one row
//! per update, so off-grid queries cost one forward substitution.
//!
//! [`CandidatePosterior`] tracks the same posterior restricted to a fixed
//! finite candidate set. It conditions sequentially on each observation with a
//! rank-one covariance update, which is what the online loops use since every
//! decision is drawn from a grid.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Variances below this are treated as a numerical failure rather than roundoff.
pub const VARIANCE_TOLERANCE: f64 = -1e-10;

fn clamp_variance(var: f64) -> Result<f64> {
    if !var.is_finite() || var < VARIANCE_TOLERANCE {
        return Err(Error::Numerical(format!(
            "posterior variance {var} below tolerance; solver state is ill-conditioned"
        )));
    }
    Ok(var.max(0.0))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidInput(format!(
            "regularizer lambda must be positive, got {lambda}"
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ordered observations of one unknown function plus an incrementally
/// maintained Cholesky factor of `K_t + lambda I_t`.
#[derive(Debug, Clone)]
pub struct ObservationHistory {
    kernel: KernelSpec,
    lambda: f64,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
    // Packed lower factor; row i occupies chol[i(i+1)/2 .. i(i+1)/2 + i + 1].
    chol: Vec<f64>,
    // L^{-1} Y, so the posterior mean is (L^{-1} k_t(x)) . whitened
    whitened: Vec<f64>,
    info_gain: f64,
}

impl ObservationHistory {
    pub fn new(kernel: KernelSpec, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(ObservationHistory {
            kernel,
            lambda,
            inputs: Vec::new(),
            outputs: Vec::new(),
            chol: Vec::new(),
            whitened: Vec::new(),
            info_gain: 0.0,
        })
    }

    /// Builds a history in one shot with a full factorization.
    pub fn from_observations(
        kernel: KernelSpec,
        lambda: f64,
        inputs: Vec<Vec<f64>>,
        outputs: Vec<f64>,
    ) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::InvalidInput(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        let mut h = Self::new(kernel, lambda)?;
        for (x, y) in inputs.iter().zip(&outputs) {
            kernel.check_point(x)?;
            if !y.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite observation {y}")));
            }
        }
        h.inputs = inputs;
        h.outputs = outputs;
        h.refactor()?;
        Ok(h)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.chol[start..start + i + 1]
    }

    /// Solves `L v = b` in place against the first `b.len()` rows.
    fn forward_solve(&self, b: &mut [f64]) {
        for i in 0..b.len() {
            let row = self.row(i);
            let s = b[i] - dot(&row[..i], &b[..i]);
            b[i] = s / row[i];
        }
    }

    fn cross_kernel(&self, x: &[f64]) -> Vec<f64> {
        self.inputs
            .iter()
            .map(|xi| self.kernel.eval_unchecked(xi, x))
            .collect()
    }

    /// Recomputes the factor, whitened outputs and information gain from scratch.
    fn refactor(&mut self) -> Result<()> {
        let t = self.inputs.len();
        self.chol = Vec::with_capacity(t * (t + 1) / 2);
        self.whitened = Vec::with_capacity(t);
        self.info_gain = 0.0;
        for i in 0..t {
            let mut l: Vec<f64> = (0..i)
                .map(|j| self.kernel.eval_unchecked(&self.inputs[j], &self.inputs[i]))
                .collect();
            self.forward_solve(&mut l);
            let var = self.kernel.eval_unchecked(&self.inputs[i], &self.inputs[i]) - dot(&l, &l);
            let d2 = var + self.lambda;
            if !(d2.is_finite() && d2 > 0.0) {
                return Err(Error::Numerical(format!(
                    "factorization of K + lambda I lost positive definiteness at row {i}"
                )));
            }
            let d = d2.sqrt();
            let z = (self.outputs[i] - dot(&l, &self.whitened)) / d;
            self.chol.extend_from_slice(&l);
            self.chol.push(d);
            self.whitened.push(z);
            self.info_gain += 0.5 * (var.max(0.0) / self.lambda).ln_1p();
        }
        Ok(())
    }

    /// Appends `(x, y)` and extends the factor by one row.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.kernel.check_point(x)?;
        if !y.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite observation {y}")));
        }
        let mut l = self.cross_kernel(x);
        self.forward_solve(&mut l);
        let var = self.kernel.eval_unchecked(x, x) - dot(&l, &l);
        let d2 = var + self.lambda;
        self.inputs.push(x.to_vec());
        self.outputs.push(y);
        if !(d2.is_finite() && d2 > 0.0) {
            // Incremental extension broke down; fall back to a full rebuild.
            if let Err(e) = self.refactor() {
                self.inputs.pop();
                self.outputs.pop();
                self.refactor()?;
                return Err(e);
            }
            return Ok(());
        }
        let d = d2.sqrt();
        let z = (y - dot(&l, &self.whitened)) / d;
        self.chol.extend_from_slice(&l);
        self.chol.push(d);
        self.whitened.push(z);
        self.info_gain += 0.5 * (var.max(0.0) / self.lambda).ln_1p();
        Ok(())
    }

    /// Posterior mean and variance at `x`.
    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.kernel.check_point(x)?;
        let prior = self.kernel.eval_unchecked(x, x);
        if self.is_empty() {
            return Ok((0.0, prior));
        }
        let mut v = self.cross_kernel(x);
        self.forward_solve(&mut v);
        let mean = dot(&v, &self.whitened);
        if !mean.is_finite() {
            return Err(Error::Numerical(format!("non-finite posterior mean at {x:?}")));
        }
        let var = clamp_variance(prior - dot(&v, &v))?;
        Ok((mean, var))
    }

    pub fn posterior_mean(&self, x: &[f64]) -> Result<f64> {
        self.posterior(x).map(|(m, _)| m)
    }

    pub fn posterior_variance(&self, x: &[f64]) -> Result<f64> {
        self.posterior(x).map(|(_, v)| v)
    }

    /// `1/2 ln det(I + K_t / lambda)` over the stored inputs.
    pub fn realized_information_gain(&self) -> f64 {
        self.info_gain
    }
}

/// Posterior over a fixed candidate set, shared by several output channels
/// observed at the same inputs (e.g. latency and cost of one domain).
///
/// Channels share the covariance because they share kernel and inputs; only
/// their means differ.
#[derive(Debug, Clone)]
pub struct CandidatePosterior {
    lambda: f64,
    size: usize,
    cov: Vec<f64>,
    means: Vec<Vec<f64>>,
    observations: usize,
    info_gain: f64,
}

impl CandidatePosterior {
    pub fn new(
        kernel: &KernelSpec,
        lambda: f64,
        candidates: &[Vec<f64>],
        channels: usize,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        if candidates.is_empty() {
            return Err(Error::InvalidInput("candidate set is empty".into()));
        }
        for c in candidates {
            kernel.check_point(c)?;
        }
        let size = candidates.len();
        let mut cov = vec![0.0; size * size];
        for a in 0..size {
            for b in 0..=a {
                let v = kernel.eval_unchecked(&candidates[a], &candidates[b]);
                cov[a * size + b] = v;
                cov[b * size + a] = v;
            }
        }
        Ok(CandidatePosterior {
            lambda,
            size,
            cov,
            means: vec![vec![0.0; size]; channels],
            observations: 0,
            info_gain: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn observations(&self) -> usize {
        self.observations
    }

    pub fn channels(&self) -> usize {
        self.means.len()
    }

    pub fn mean(&self, channel: usize, idx: usize) -> f64 {
        self.means[channel][idx]
    }

    pub fn means(&self, channel: usize) -> &[f64] {
        &self.means[channel]
    }

    pub fn variance(&self, idx: usize) -> Result<f64> {
        clamp_variance(self.cov[idx * self.size + idx])
    }

    pub fn std_dev(&self, idx: usize) -> Result<f64> {
        self.variance(idx).map(f64::sqrt)
    }

    /// Posterior covariance between two candidates.
    pub fn covariance(&self, a: usize, b: usize) -> f64 {
        self.cov[a * self.size + b]
    }

    pub fn realized_information_gain(&self) -> f64 {
        self.info_gain
    }

    /// Conditions on one observation per channel at candidate `idx`.
    /// Returns the posterior variance at `idx` before the update.
    pub fn observe(&mut self, idx: usize, ys: &[f64]) -> Result<f64> {
        if idx >= self.size {
            return Err(Error::InvalidInput(format!(
                "candidate index {idx} out of range ({})",
                self.size
            )));
        }
        if ys.len() != self.means.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} channel values, got {}",
                self.means.len(),
                ys.len()
            )));
        }
        if let Some(y) = ys.iter().find(|y| !y.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite observation {y}")));
        }
        let n = self.size;
        let col: Vec<f64> = self.cov[idx * n..(idx + 1) * n].to_vec();
        let prior_var = clamp_variance(col[idx])?;
        let s = col[idx] + self.lambda;
        for (mean, &y) in self.means.iter_mut().zip(ys) {
            let gain = (y - mean[idx]) / s;
            for (m, c) in mean.iter_mut().zip(&col) {
                *m += c * gain;
            }
        }
        for a in 0..n {
            let scaled = col[a] / s;
            if scaled == 0.0 {
                continue;
            }
            let row = &mut self.cov[a * n..(a + 1) * n];
            for (r, c) in row.iter_mut().zip(&col) {
                *r -= scaled * c;
            }
        }
        self.observations += 1;
        self.info_gain += 0.5 * (prior_var / self.lambda).ln_1p();
        Ok(prior_var)
    }
}

/// Greedy maximum-information-gain sweep over a finite candidate set.
///
/// Entry `t` of the result is the information gain of the first `t` greedy
/// picks (entry 0 is 0). Each pick takes the candidate of largest posterior
/// variance, lowest index on ties. The sequence is prefix-consistent, so the
/// value for `t` does not depend on `horizon`.
pub fn greedy_information_gain(
    kernel: &KernelSpec,
    lambda: f64,
    candidates: &[Vec<f64>],
    horizon: usize,
) -> Result<Vec<f64>> {
    let mut post = CandidatePosterior::new(kernel, lambda, candidates, 0)?;
    let mut gains = Vec::with_capacity(horizon + 1);
    gains.push(0.0);
    for _ in 0..horizon {
        let mut best = 0;
        let mut best_var = f64::NEG_INFINITY;
        for j in 0..post.len() {
            let v = post.covariance(j, j);
            if v > best_var {
                best = j;
                best_var = v;
            }
        }
        post.observe(best, &[])?;
        gains.push(post.realized_information_gain());
    }
    Ok(gains)
}

type GainKey = Vec<u64>;

fn gain_cache() -> &'static Mutex<HashMap<GainKey, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<GainKey, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn gain_key(kernel: &KernelSpec, lambda: f64, candidates: &[Vec<f64>]) -> GainKey {
    use crate::kernel::KernelFamily;
    let mut key = vec![kernel.dimension() as u64, lambda.to_bits()];
    match kernel.family() {
        KernelFamily::Linear => key.push(0),
        KernelFamily::SquaredExponential { lengthscale } => {
            key.push(1);
            key.push(lengthscale.to_bits());
        }
    }
    key.push(candidates.len() as u64);
    key.extend(candidates.iter().flatten().map(|v| v.to_bits()));
    key
}

/// Memoized [`greedy_information_gain`]. Runs over the same kernel, regularizer
/// and candidate set share one sweep, extended on demand.
pub fn greedy_information_gain_cached(
    kernel: &KernelSpec,
    lambda: f64,
    candidates: &[Vec<f64>],
    horizon: usize,
) -> Result<Arc<Vec<f64>>> {
    let key = gain_key(kernel, lambda, candidates);
    if let Some(hit) = gain_cache().lock().expect("gain cache poisoned").get(&key) {
        if hit.len() > horizon {
            return Ok(Arc::clone(hit));
        }
    }
    let gains = Arc::new(greedy_information_gain(kernel, lambda, candidates, horizon)?);
    let mut cache = gain_cache().lock().expect("gain cache poisoned");
    let entry = cache.entry(key).or_insert_with(|| Arc::clone(&gains));
    if entry.len() < gains.len() {
        *entry = Arc::clone(&gains);
    }
    Ok(gains)
}
