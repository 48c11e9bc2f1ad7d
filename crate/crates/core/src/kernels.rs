//! Base kernels, Gram matrices and the runtime Mercer (PSD) check.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::conformal::ConformalKernel;
use crate::error::{Error, Result};
use crate::linalg::{extreme_eigenvalue_estimates, symmetric_eigenvalues, Matrix};
use crate::sparse::{self, SparseVector};

/// Gram matrices up to this size get a full eigendecomposition in
/// [`check_psd`]; larger ones are spot-checked.
pub const EXACT_PSD_LIMIT: usize = 500;

/// A base kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum KernelSpec {
    /// `⟨x, y⟩`
    Linear,
    /// `exp(−γ‖x − y‖²)`
    Gaussian { gamma: f64 },
    /// Gaussian-Cosine: `exp(−γ(1 − cos(x, y)))`
    GaussianCosine { gamma: f64 },
    /// Heat kernel on the multinomial:
    /// `(4πt)^(−n/2) · exp(−arccos²(Σ√(xᵢyᵢ)) / t)` with `n = dim − 1`.
    /// `normalized = false` drops the constant factor; `log_scale` returns
    /// the logarithm (the only usable form at vocabulary-sized `n`).
    Diffusion {
        t: f64,
        normalized: bool,
        log_scale: bool,
    },
}

impl KernelSpec {
    pub fn linear() -> Self {
        KernelSpec::Linear
    }

    pub fn gaussian(gamma: f64) -> Result<Self> {
        positive("gamma", gamma)?;
        Ok(KernelSpec::Gaussian { gamma })
    }

    /// Gaussian kernel in the `exp(−‖x−y‖²/(2σ²))` parameterisation.
    pub fn gaussian_sigma(sigma: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        Self::gaussian(sigma_to_gamma(sigma))
    }

    pub fn gaussian_cosine(gamma: f64) -> Result<Self> {
        positive("gamma", gamma)?;
        Ok(KernelSpec::GaussianCosine { gamma })
    }

    pub fn diffusion(t: f64, normalized: bool, log_scale: bool) -> Result<Self> {
        positive("t", t)?;
        Ok(KernelSpec::Diffusion {
            t,
            normalized,
            log_scale,
        })
    }

    /// Builds a Gaussian kernel from `gamma`, `sigma` or both; when both are
    /// present they must agree through `γ = 1/(2σ²)`.
    pub fn gaussian_from(gamma: Option<f64>, sigma: Option<f64>) -> Result<Self> {
        match (gamma, sigma) {
            (Some(g), None) => Self::gaussian(g),
            (None, Some(s)) => Self::gaussian_sigma(s),
            (Some(g), Some(s)) => {
                positive("sigma", s)?;
                let implied = sigma_to_gamma(s);
                if (g - implied).abs() > 1e-12 * implied.max(1.0) {
                    return Err(Error::param(format!(
                        "gamma {g} disagrees with sigma {s} (implies {implied})"
                    )));
                }
                Self::gaussian(g)
            }
            (None, None) => Err(Error::param("gaussian kernel needs gamma or sigma")),
        }
    }

    /// Checks the parameters of a spec built directly from its variants.
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Gaussian { gamma } | KernelSpec::GaussianCosine { gamma } => {
                positive("gamma", gamma)
            }
            KernelSpec::Diffusion { t, .. } => positive("t", t),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            KernelSpec::Gaussian { gamma } | KernelSpec::GaussianCosine { gamma } => Some(gamma),
            _ => None,
        }
    }

    /// Short name used in result tables.
    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::GaussianCosine { .. } => "gc",
            KernelSpec::Diffusion { .. } => "diffusion",
        }
    }

    /// True when the kernel is only defined on simplex points.
    pub fn needs_simplex(&self) -> bool {
        matches!(self, KernelSpec::Diffusion { .. })
    }

    pub fn eval_pair(&self, a: &SparseVector, b: &SparseVector) -> Result<f64> {
        match *self {
            KernelSpec::Linear => sparse::dot(a, b),
            KernelSpec::Gaussian { gamma } => {
                Ok(libm::exp(-gamma * sparse::sq_euclidean_dist(a, b)?))
            }
            KernelSpec::GaussianCosine { gamma } => {
                Ok(libm::exp(-gamma * sparse::cosine_distance(a, b)?))
            }
            KernelSpec::Diffusion {
                t,
                normalized,
                log_scale,
            } => {
                let angle = libm::acos(sparse::bhattacharyya(a, b)?);
                let log_k = diffusion_log_value(t, a.dim(), angle, normalized);
                Ok(if log_scale { log_k } else { libm::exp(log_k) })
            }
        }
    }
}

pub fn sigma_to_gamma(sigma: f64) -> f64 {
    1.0 / (2.0 * sigma * sigma)
}

pub(crate) fn diffusion_log_value(t: f64, dim: usize, angle: f64, normalized: bool) -> f64 {
    let n = dim.saturating_sub(1) as f64;
    let constant = if normalized {
        -0.5 * n * libm::log(4.0 * PI * t)
    } else {
        0.0
    };
    constant - angle * angle / t
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!(
            "{name} must be a positive finite number, got {v}"
        )))
    }
}

/// A kernel that may factor as `D(x)·D(y)·k(x, y)`.
///
/// `factor` is the per-point multiplier (1 for plain kernels) so solvers can
/// cache `D` once per training point instead of once per pair.
pub trait Kernel {
    fn base(&self, a: &SparseVector, b: &SparseVector) -> Result<f64>;

    fn factor(&self, _x: &SparseVector) -> Result<f64> {
        Ok(1.0)
    }

    fn eval(&self, a: &SparseVector, b: &SparseVector) -> Result<f64> {
        Ok(self.factor(a)? * self.factor(b)? * self.base(a, b)?)
    }

    fn describe(&self) -> String;
}

impl Kernel for KernelSpec {
    fn base(&self, a: &SparseVector, b: &SparseVector) -> Result<f64> {
        self.eval_pair(a, b)
    }

    fn describe(&self) -> String {
        match *self {
            KernelSpec::Linear => "linear".into(),
            KernelSpec::Gaussian { gamma } => format!("gaussian(gamma={gamma})"),
            KernelSpec::GaussianCosine { gamma } => format!("gc(gamma={gamma})"),
            KernelSpec::Diffusion {
                t,
                normalized,
                log_scale,
            } => {
                format!("diffusion(t={t}, normalized={normalized}, log={log_scale})")
            }
        }
    }
}

/// The kernel a model was trained under: a base kernel or its conformal
/// transformation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum KernelFn {
    Base { spec: KernelSpec },
    Conformal { kernel: Box<ConformalKernel> },
}

impl KernelFn {
    pub fn base_spec(&self) -> &KernelSpec {
        match self {
            KernelFn::Base { spec } => spec,
            KernelFn::Conformal { kernel } => &kernel.base,
        }
    }
}

impl From<KernelSpec> for KernelFn {
    fn from(spec: KernelSpec) -> Self {
        KernelFn::Base { spec }
    }
}

impl From<ConformalKernel> for KernelFn {
    fn from(kernel: ConformalKernel) -> Self {
        KernelFn::Conformal {
            kernel: Box::new(kernel),
        }
    }
}

impl Kernel for KernelFn {
    fn base(&self, a: &SparseVector, b: &SparseVector) -> Result<f64> {
        self.base_spec().eval_pair(a, b)
    }

    fn factor(&self, x: &SparseVector) -> Result<f64> {
        match self {
            KernelFn::Base { .. } => Ok(1.0),
            KernelFn::Conformal { kernel } => kernel.factor(x),
        }
    }

    fn describe(&self) -> String {
        match self {
            KernelFn::Base { spec } => spec.describe(),
            KernelFn::Conformal { kernel } => kernel.describe(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: Matrix,
    pub source: String,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.values.n()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }
}

/// Gram matrix `K(i,j) = k(xᵢ, xⱼ)`. Only the upper triangle is evaluated;
/// the lower one is its mirror, so the result is exactly symmetric.
pub fn gram<K: Kernel + Sync + ?Sized>(kernel: &K, points: &[SparseVector]) -> Result<GramMatrix> {
    if points.is_empty() {
        return Err(Error::param("gram matrix of an empty point set"));
    }
    let dim = points[0].dim();
    if let Some(p) = points.iter().find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch {
            left: dim,
            right: p.dim(),
        });
    }
    let factors = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            kernel.factor(p).map_err(|e| Error::GramEntry {
                i,
                j: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = points.len();
    let row = |i: usize| -> Result<Vec<f64>> {
        (i..n)
            .map(|j| {
                kernel
                    .base(&points[i], &points[j])
                    .map(|k| factors[i] * factors[j] * k)
                    .map_err(|e| Error::GramEntry {
                        i,
                        j,
                        source: Box::new(e),
                    })
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(row).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..n).map(row).collect::<Result<_>>()?;

    let mut values = Matrix::zeros(n);
    for (i, r) in rows.into_iter().enumerate() {
        for (off, v) in r.into_iter().enumerate() {
            values.set(i, i + off, v);
            values.set(i + off, i, v);
        }
    }
    Ok(GramMatrix {
        values,
        source: kernel.describe(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// False when the extremes are power-iteration estimates.
    pub exact: bool,
}

/// Passes iff `λ_min ≥ −rel_tol · max(1, λ_max)`.
pub fn check_psd(g: &GramMatrix, rel_tol: f64) -> PsdReport {
    let n = g.n();
    let (min, max, exact) = if n <= EXACT_PSD_LIMIT {
        let ev = symmetric_eigenvalues(&g.values);
        (ev[0], ev[n - 1], true)
    } else {
        let (lo, hi) = extreme_eigenvalue_estimates(&g.values, 300, 32, 0x5eed);
        (lo, hi, false)
    };
    PsdReport {
        is_psd: min >= -rel_tol * max.max(1.0),
        min_eigenvalue: min,
        max_eigenvalue: max,
        exact,
    }
}
