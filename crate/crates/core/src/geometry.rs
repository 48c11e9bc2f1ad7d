//! Riemannian metric induced by a kernel on a low-dimensional dense input
//! space, `g_ij(x) = ∂²k(x, y)/∂xᵢ∂yⱼ |_{y=x}`, its conformal counterpart and
//! the magnification factor `√det g`.
//!
//! Metrics are computed by central finite differences. The closed forms for
//! the Gaussian-Cosine kernel are provided for cross-checking.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::conformal::FittedConformal;
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelSpec};
use crate::linalg::{symmetric_eigenvalues, Matrix};
use crate::sparse::SparseVector;

pub const DEFAULT_STEP: f64 = 1e-4;
/// Largest input dimension accepted by the metric routines.
pub const MAX_DIM: usize = 64;
/// Eigenvalues at or below this are treated as zero by the pseudo-determinant.
pub const PSEUDO_DET_FLOOR: f64 = 1e-12;
/// Relative tolerance of a finite-difference metric. A step-halving
/// discrepancy above ten times this is reported as [`Error::Unstable`].
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricAtPoint {
    pub point: Vec<f64>,
    pub g: Matrix,
    pub source: String,
}

fn check_point(x: &[f64], h: f64) -> Result<()> {
    if x.is_empty() || x.len() > MAX_DIM {
        return Err(Error::param(format!(
            "metric needs 1..={MAX_DIM} dimensions, got {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidVector("non-finite coordinate".into()));
    }
    if !(1e-6..=1e-2).contains(&h) {
        return Err(Error::param(format!(
            "finite-difference step {h} outside [1e-6, 1e-2]"
        )));
    }
    Ok(())
}

fn shifted(x: &[f64], i: usize, d: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[i] += d;
    y
}

/// Dense kernel callback used by the finite-difference helpers.
pub type DenseKernel<'a> = dyn Fn(&[f64], &[f64]) -> Result<f64> + 'a;

/// Central-difference mixed partial `∂²k/∂xᵢ∂yⱼ` at `y = x`, neither
/// symmetrized nor checked.
pub fn mixed_partial_fd(k: &DenseKernel<'_>, x: &[f64], h: f64) -> Result<Matrix> {
    let n = x.len();
    let mut g = Matrix::zeros(n);
    let plus: Vec<Vec<f64>> = (0..n).map(|i| shifted(x, i, h)).collect();
    let minus: Vec<Vec<f64>> = (0..n).map(|i| shifted(x, i, -h)).collect();
    for i in 0..n {
        for j in 0..n {
            let v = k(&plus[i], &plus[j])? - k(&plus[i], &minus[j])? - k(&minus[i], &plus[j])?
                + k(&minus[i], &minus[j])?;
            g.set(i, j, v / (4.0 * h * h));
        }
    }
    Ok(g)
}

fn dense_kernel<K: Kernel + ?Sized>(kernel: &K) -> impl Fn(&[f64], &[f64]) -> Result<f64> + '_ {
    move |a, b| kernel.eval(&SparseVector::from_dense(a), &SparseVector::from_dense(b))
}

/// Induced metric by finite differences with a step-halving check.
pub fn induced_metric_fd<K: Kernel + ?Sized>(
    kernel: &K,
    x: &[f64],
    h: f64,
) -> Result<MetricAtPoint> {
    check_point(x, h)?;
    let k = dense_kernel(kernel);
    let coarse = mixed_partial_fd(&k, x, h)?.symmetrized();
    let fine = mixed_partial_fd(&k, x, 0.5 * h)?.symmetrized();
    let scale = fine.frobenius().max(f64::MIN_POSITIVE);
    let gap = coarse.sub(&fine).frobenius() / scale;
    if gap > 10.0 * FD_TOLERANCE && fine.frobenius() > 1e-12 {
        return Err(Error::Unstable(format!(
            "metric changes by {gap:.3e} (relative) when halving h = {h}"
        )));
    }
    Ok(MetricAtPoint {
        point: x.to_vec(),
        g: fine,
        source: kernel.describe(),
    })
}

/// `g_ij = (γ/‖x‖²)(δᵢⱼ − xᵢxⱼ/‖x‖²)`.
///
/// On the unit sphere this is `γ(δᵢⱼ − xᵢxⱼ)`. Off the sphere the second
/// factor of `‖x‖` comes from differentiating `1/‖y‖` in the cosine.
pub fn gc_metric_closed(gamma: f64, x: &[f64]) -> Result<MetricAtPoint> {
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    if norm2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    let n = x.len();
    let mut g = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            g.set(i, j, gamma / norm2 * (delta - x[i] * x[j] / norm2));
        }
    }
    Ok(MetricAtPoint {
        point: x.to_vec(),
        g,
        source: format!("gc(gamma={gamma}) closed form"),
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConformalMetric {
    /// `D²g + DᵢDⱼk(x,x) + D(Dᵢkⱼ + Dⱼkᵢ)`.
    pub general: MetricAtPoint,
    /// `D²g + DᵢDⱼ` with the closed-form GC metric; only for a GC base.
    pub gc_specialized: Option<MetricAtPoint>,
    pub base: MetricAtPoint,
    pub d: f64,
    pub grad_d: Vec<f64>,
    /// `∂k(x', x)/∂x'ᵢ` at `x' = x`.
    pub grad_k: Vec<f64>,
    pub k_xx: f64,
}

/// Metric of `D(x)D(y)k(x, y)` at `x`.
pub fn conformal_metric(
    fitted: &FittedConformal,
    base: &KernelSpec,
    x: &[f64],
    h: f64,
) -> Result<ConformalMetric> {
    check_point(x, h)?;
    let n = x.len();
    let d_at = |p: &[f64]| fitted.eval(&SparseVector::from_dense(p));
    let k = dense_kernel(base);
    let d = d_at(x)?;
    let k_xx = k(x, x)?;
    let mut grad_d = Vec::with_capacity(n);
    let mut grad_k = Vec::with_capacity(n);
    for i in 0..n {
        let (p, m) = (shifted(x, i, h), shifted(x, i, -h));
        grad_d.push((d_at(&p)? - d_at(&m)?) / (2.0 * h));
        grad_k.push((k(&p, x)? - k(&m, x)?) / (2.0 * h));
    }
    let base_metric = induced_metric_fd(base, x, h)?;
    let mut g = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v = d * d * base_metric.g.get(i, j)
                + grad_d[i] * grad_d[j] * k_xx
                + d * (grad_d[i] * grad_k[j] + grad_d[j] * grad_k[i]);
            g.set(i, j, v);
        }
    }
    let gc_specialized = match *base {
        KernelSpec::GaussianCosine { gamma } => {
            let closed = gc_metric_closed(gamma, x)?;
            let mut s = Matrix::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    s.set(i, j, d * d * closed.g.get(i, j) + grad_d[i] * grad_d[j]);
                }
            }
            Some(MetricAtPoint {
                point: x.to_vec(),
                g: s,
                source: format!("{} specialised", fitted.spec.name()),
            })
        }
        _ => None,
    };
    Ok(ConformalMetric {
        general: MetricAtPoint {
            point: x.to_vec(),
            g,
            source: format!("{}·{}", fitted.spec.name(), base.describe()),
        },
        gc_specialized,
        base: base_metric,
        d,
        grad_d,
        grad_k,
        k_xx,
    })
}

/// `√max(det g, 0)`.
pub fn magnification_factor(g: &Matrix) -> f64 {
    libm::sqrt(determinant(g).max(0.0))
}

/// `√` of the product of the eigenvalues above [`PSEUDO_DET_FLOOR`]: the
/// volume element restricted to the non-degenerate directions.
pub fn pseudo_magnification_factor(g: &Matrix) -> f64 {
    let det: f64 = symmetric_eigenvalues(&g.symmetrized())
        .into_iter()
        .filter(|&l| l > PSEUDO_DET_FLOOR)
        .product();
    libm::sqrt(det)
}

/// Determinant by LU with partial pivoting.
pub fn determinant(m: &Matrix) -> f64 {
    let n = m.n();
    let mut a = m.to_rows();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap_or(col);
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                let (top, bottom) = a.split_at_mut(r);
                for (dst, src) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *dst -= f * src;
                }
            }
        }
    }
    det
}

/// Diffusion kernel evaluated on raw coordinates: negative components are
/// clamped to zero and the affinity `Σ√(xᵢyᵢ)` to `[0, 1]`, with no
/// requirement that the points lie on the simplex. Only meant for probing
/// the kernel's behaviour under finite differences.
pub fn diffusion_raw(t: f64, x: &[f64], y: &[f64]) -> f64 {
    let affinity: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| libm::sqrt(a.max(0.0) * b.max(0.0)))
        .sum();
    let angle = libm::acos(affinity.clamp(0.0, 1.0));
    let n = x.len() as f64 - 1.0;
    libm::pow(4.0 * core::f64::consts::PI * t, -0.5 * n) * libm::exp(-angle * angle / t)
}

/// Frobenius norm of the finite-difference mixed partial of the raw
/// diffusion kernel at `x`, for each step in `steps`.
pub fn diffusion_fd_growth(t: f64, x: &[f64], steps: &[f64]) -> Vec<f64> {
    let k = |a: &[f64], b: &[f64]| Ok(diffusion_raw(t, a, b));
    steps
        .iter()
        .map(|&h| {
            mixed_partial_fd(&k, x, h)
                .map(|g| g.frobenius())
                .unwrap_or(f64::NAN)
        })
        .collect()
}

/// `‖g·x‖ / (‖g‖_F·‖x‖)`.
pub fn null_direction_residual(g: &Matrix, x: &[f64]) -> f64 {
    let gx = g.mul_vec(x);
    let num = libm::sqrt(gx.iter().map(|v| v * v).sum());
    let xn = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>());
    num / (g.frobenius() * xn)
}

pub fn relative_frobenius(a: &Matrix, reference: &Matrix) -> f64 {
    a.sub(reference).frobenius() / reference.frobenius().max(f64::MIN_POSITIVE)
}

/// Metric of the Gaussian kernel, `2γ·I`.
pub fn gaussian_metric_closed(gamma: f64, n: usize) -> Matrix {
    let mut g = Matrix::zeros(n);
    for i in 0..n {
        g.set(i, i, 2.0 * gamma);
    }
    g
}

#[doc(hidden)]
pub fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}
