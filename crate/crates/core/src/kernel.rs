//! Kernel functions and Gram matrices.
//!
//! Two positive semi-definite families are provided: the linear kernel
//! `k(x, x') = <x, x'>` and the squared-exponential kernel
//! `k(x, x') = exp(-|x - x'|^2 / (2 l^2))`. Every surrogate in a run shares a
//! single [`KernelSpec`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelFamily {
    Linear,
    SquaredExponential { lengthscale: f64 },
}

/// Kernel family, hyperparameters and input dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    dimension: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidInput("kernel dimension must be positive".into()));
        }
        if let KernelFamily::SquaredExponential { lengthscale } = family {
            if !(lengthscale.is_finite() && lengthscale > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "squared-exponential lengthscale must be positive and finite, got {lengthscale}"
                )));
            }
        }
        Ok(KernelSpec { family, dimension })
    }

    pub fn linear(dimension: usize) -> Result<Self> {
        Self::new(KernelFamily::Linear, dimension)
    }

    pub fn squared_exponential(lengthscale: f64, dimension: usize) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential { lengthscale }, dimension)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Same family and hyperparameters over a different input dimension.
    pub fn with_dimension(&self, dimension: usize) -> Result<Self> {
        Self::new(self.family, dimension)
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::InvalidInput(format!(
                "point has dimension {} but kernel expects {}",
                x.len(),
                self.dimension
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coordinate in {x:?}")));
        }
        Ok(())
    }

    /// Evaluates `k(x, x2)`.
    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(x2)?;
        Ok(self.eval_unchecked(x, x2))
    }

    /// `k(x, x2)` without dimension checks. Callers guarantee valid points.
    pub(crate) fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Linear => x.iter().zip(x2).map(|(a, b)| a * b).sum(),
            KernelFamily::SquaredExponential { lengthscale } => {
                let sq: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * lengthscale * lengthscale)).exp()
            }
        }
    }

    /// Gram matrix `[k(p_m, p_n)]` over an ordered point list.
    pub fn gram(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        if points.is_empty() {
            return Err(Error::InvalidInput("gram matrix needs at least one point".into()));
        }
        for p in points {
            self.check_point(p)?;
        }
        let n = points.len();
        let mut k = DMatrix::zeros(n, n);
        for m in 0..n {
            for j in 0..=m {
                let v = self.eval_unchecked(&points[m], &points[j]);
                k[(m, j)] = v;
                k[(j, m)] = v;
            }
        }
        Ok(k)
    }
}

/// Free-function form of [`KernelSpec::eval`].
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    spec.eval(x, x2)
}

/// Free-function form of [`KernelSpec::gram`].
pub fn gram(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    spec.gram(points)
}
