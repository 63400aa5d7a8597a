//! Kernel functions and feature-space manifold statistics.
//!
//! The feature map `φ` induced by a kernel is never built. Squared distances
//! in the feature space are expanded through the kernel trick:
//!
//! ```text
//! ‖φ(a) − φ(b)‖² = K(a, a) − 2 K(a, b) + K(b, b)
//! ```
//!
//! The differentiable counterparts used during training live in
//! [`crate::neural::Graph::kernel`] and [`crate::neural::Graph::kernel_diag`].

use std::fmt;

use crate::error::{Error, Result};
use crate::neural::Tensor;

/// Tiny negative squared distances above this are rounding noise and clamp to zero.
pub const PSD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `aᵀb`
    Linear,
    /// `exp(−γ‖a − b‖²)`
    Rbf { gamma: f64 },
    /// Laplacian kernel `exp(−γ‖a − b‖)`.
    Exp { gamma: f64 },
    /// `(aᵀb + coef0)^degree`
    Polynomial { degree: u32, coef0: f64 },
}

impl KernelSpec {
    /// RBF kernel with the default bandwidth `γ = 1/d`.
    pub fn rbf_for_dim(dim: usize) -> Self {
        KernelSpec::Rbf {
            gamma: default_gamma(dim),
        }
    }

    pub fn exp_for_dim(dim: usize) -> Self {
        KernelSpec::Exp {
            gamma: default_gamma(dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } | KernelSpec::Exp { gamma } => {
                if gamma.is_finite() && gamma > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("kernel gamma must be > 0, got {gamma}")))
                }
            }
            KernelSpec::Polynomial { degree, coef0 } => {
                if degree == 0 {
                    Err(Error::Config("polynomial degree must be >= 1".into()))
                } else if !coef0.is_finite() {
                    Err(Error::Config("polynomial coef0 must be finite".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::Exp { .. } => "exp",
            KernelSpec::Polynomial { .. } => "poly",
        }
    }

    /// `K(a, b)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dims(a, b)?;
        Ok(self.eval_unchecked(a, b))
    }

    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Rbf { gamma } => (-gamma * sq_dist(a, b)).exp(),
            KernelSpec::Exp { gamma } => (-gamma * sq_dist(a, b).sqrt()).exp(),
            KernelSpec::Polynomial { degree, coef0 } => (dot(a, b) + coef0).powi(degree as i32),
        }
    }

    /// Accumulates `scale · ∂K(a, b)/∂a` into `out`.
    ///
    /// The Laplacian kernel is not differentiable at `a = b`; the zero
    /// subgradient is used there.
    pub(crate) fn accumulate_grad_first(&self, a: &[f64], b: &[f64], scale: f64, out: &mut [f64]) {
        match *self {
            KernelSpec::Linear => {
                for (o, &bv) in out.iter_mut().zip(b) {
                    *o += scale * bv;
                }
            }
            KernelSpec::Rbf { gamma } => {
                let k = (-gamma * sq_dist(a, b)).exp();
                let f = -2.0 * gamma * k * scale;
                for ((o, &av), &bv) in out.iter_mut().zip(a).zip(b) {
                    *o += f * (av - bv);
                }
            }
            KernelSpec::Exp { gamma } => {
                let r = sq_dist(a, b).sqrt();
                if r == 0.0 {
                    return;
                }
                let k = (-gamma * r).exp();
                let f = -gamma * k * scale / r;
                for ((o, &av), &bv) in out.iter_mut().zip(a).zip(b) {
                    *o += f * (av - bv);
                }
            }
            KernelSpec::Polynomial { degree, coef0 } => {
                let base = dot(a, b) + coef0;
                let f = scale * degree as f64 * base.powi(degree as i32 - 1);
                for (o, &bv) in out.iter_mut().zip(b) {
                    *o += f * bv;
                }
            }
        }
    }

    /// Accumulates `scale · d K(a, a)/da` into `out`.
    pub(crate) fn accumulate_grad_diag(&self, a: &[f64], scale: f64, out: &mut [f64]) {
        match *self {
            // stationary kernels are constant on the diagonal
            KernelSpec::Rbf { .. } | KernelSpec::Exp { .. } => {}
            KernelSpec::Linear => {
                for (o, &av) in out.iter_mut().zip(a) {
                    *o += 2.0 * scale * av;
                }
            }
            KernelSpec::Polynomial { degree, coef0 } => {
                let base = dot(a, a) + coef0;
                let f = 2.0 * scale * degree as f64 * base.powi(degree as i32 - 1);
                for (o, &av) in out.iter_mut().zip(a) {
                    *o += f * av;
                }
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Rbf { gamma } => write!(f, "rbf(gamma={gamma})"),
            KernelSpec::Exp { gamma } => write!(f, "exp(gamma={gamma})"),
            KernelSpec::Polynomial { degree, coef0 } => {
                write!(f, "poly(degree={degree}, coef0={coef0})")
            }
        }
    }
}

pub fn default_gamma(dim: usize) -> f64 {
    1.0 / dim.max(1) as f64
}

/// `‖φ(a) − φ(b)‖² = K(a,a) − 2K(a,b) + K(b,b)`.
pub fn feature_sq_dist(k: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    clamp_sq_dist(
        k.eval_unchecked(a, a) - 2.0 * k.eval_unchecked(a, b) + k.eval_unchecked(b, b),
    )
}

/// Mean squared feature-space distance from `c` to each row of `points`.
pub fn kernel_radius(k: &KernelSpec, points: &Tensor, c: &[f64]) -> Result<f64> {
    if points.cols() != c.len() {
        return Err(Error::Dimension {
            expected: points.cols(),
            actual: c.len(),
        });
    }
    let kcc = k.eval_unchecked(c, c);
    let total: f64 = points
        .iter_rows()
        .map(|s| kcc - 2.0 * k.eval_unchecked(c, s) + k.eval_unchecked(s, s))
        .sum();
    clamp_sq_dist(total / points.rows() as f64)
}

fn clamp_sq_dist(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v > -PSD_SLACK {
        Ok(0.0)
    } else {
        Err(Error::NotPsd(v))
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
