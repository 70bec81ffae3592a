#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sladecomp::simulator::{CostFamily, LatencyFamily};
use sladecomp::{DomainSpec, EnvironmentSpec, KernelFamily, SearchGrid};

/// Kernel written out independently of the library.
pub fn kernel(family: KernelFamily, a: &[f64], b: &[f64]) -> f64 {
    match family {
        KernelFamily::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        KernelFamily::SquaredExponential { lengthscale } => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-d2 / (2.0 * lengthscale * lengthscale)).exp()
        }
    }
}

/// Posterior mean and variance by a dense LU solve of `(K + lambda I)`.
pub fn dense_posterior(
    family: KernelFamily,
    lambda: f64,
    xs: &[Vec<f64>],
    ys: &[f64],
    x: &[f64],
) -> (f64, f64) {
    let t = xs.len();
    let prior = kernel(family, x, x);
    if t == 0 {
        return (0.0, prior);
    }
    let k = DMatrix::from_fn(t, t, |i, j| kernel(family, &xs[i], &xs[j]) + if i == j { lambda } else { 0.0 });
    let kx = DVector::from_fn(t, |i, _| kernel(family, &xs[i], x));
    let lu = k.lu();
    let alpha = lu.solve(&DVector::from_column_slice(ys)).expect("regularized Gram is invertible");
    let beta = lu.solve(&kx).expect("regularized Gram is invertible");
    (kx.dot(&alpha), prior - kx.dot(&beta))
}

pub fn random_domain<R: Rng>(rng: &mut R, lower: f64) -> DomainSpec {
    let latency = match rng.random_range(0..3) {
        0 if lower >= 1.0 => LatencyFamily::Log { w: rng.random_range(0.5..3.0) },
        0 | 1 => LatencyFamily::Quad { w: rng.random_range(0.1..1.0) },
        _ => LatencyFamily::Exp { w: rng.random_range(0.1..1.0) },
    };
    let cost = match rng.random_range(0..3) {
        0 => CostFamily::Rational { w: rng.random_range(1.0..10.0), b: rng.random_range(0.0..2.0) },
        1 => CostFamily::InvQuad { w: rng.random_range(1.0..10.0) },
        _ => CostFamily::Gaussian { w: rng.random_range(1.0..10.0) },
    };
    DomainSpec { latency, cost, noise_level: 0.0, query_epoch: 1.0 }
}

/// A random small environment with a feasible SLA target strictly inside
/// its latency range.
pub fn random_small_env<R: Rng>(rng: &mut R) -> EnvironmentSpec {
    let d = rng.random_range(1..=3);
    let mut domains = Vec::new();
    let mut bounds = Vec::new();
    for _ in 0..d {
        let lower = if rng.random_bool(0.5) { 1.0 } else { 0.5 };
        let upper = lower + rng.random_range(1.0..2.5);
        bounds.push((lower, upper, rng.random_range(2..=10)));
        domains.push(random_domain(rng, lower));
    }
    let grid = SearchGrid::uniform(&bounds).unwrap();
    let probe = EnvironmentSpec::new(domains.clone(), 1e9, grid.clone()).unwrap();
    let (lo, hi) = probe.latency_range().unwrap();
    let sla = lo + rng.random_range(0.05..0.95) * (hi - lo);
    EnvironmentSpec::new(domains, sla, grid).unwrap()
}

/// Independent brute force: every combination, cheapest feasible, first on ties.
pub fn brute_force(env: &EnvironmentSpec) -> Option<(Vec<usize>, f64)> {
    let grid = env.grid();
    let d = env.num_domains();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let total: usize = (0..d).map(|i| grid.resolution(i)).product();
    for mut code in 0..total {
        let mut idx = vec![0; d];
        for i in (0..d).rev() {
            idx[i] = code % grid.resolution(i);
            code /= grid.resolution(i);
        }
        let mut lat = 0.0;
        let mut cost = 0.0;
        for (i, &j) in idx.iter().enumerate() {
            let x = grid.domain(i)[j];
            lat += env.domains()[i].true_latency(x).unwrap();
            cost += env.domains()[i].true_cost(x).unwrap();
        }
        if lat <= env.sla_target() && best.as_ref().map_or(true, |b| cost < b.1) {
            best = Some((idx, cost));
        }
    }
    best
}
