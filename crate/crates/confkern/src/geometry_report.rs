//! Per-point metric reports for low-dimensional inputs.

use confkern_core::geometry::{
    conformal_metric, gaussian_metric_closed, gc_metric_closed, induced_metric_fd,
    magnification_factor, null_direction_residual, pseudo_magnification_factor, relative_frobenius,
};
use confkern_core::linalg::Matrix;
use confkern_core::{FittedConformal, KernelSpec};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalReport {
    pub d: f64,
    pub grad_d: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub magnification: f64,
    pub pseudo_magnification: f64,
    /// GC base only.
    pub g_specialized: Option<Vec<Vec<f64>>>,
    pub general_vs_specialized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub point: Vec<f64>,
    /// Finite-difference metric of the base kernel.
    pub g: Vec<Vec<f64>>,
    pub g_closed: Option<Vec<Vec<f64>>>,
    /// Relative Frobenius distance between the closed form and `g`.
    pub closed_vs_fd: Option<f64>,
    pub magnification: f64,
    pub pseudo_magnification: f64,
    /// `‖g·x‖ / (‖g‖‖x‖)` of the closed GC metric.
    pub null_residual: Option<f64>,
    pub conformal: Option<ConformalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub kernel: KernelSpec,
    pub transform: Option<String>,
    pub h: f64,
    pub points: Vec<PointReport>,
}

fn closed_form(kernel: &KernelSpec, x: &[f64]) -> Result<Option<Matrix>> {
    Ok(match *kernel {
        KernelSpec::Linear => Some(Matrix::identity(x.len())),
        KernelSpec::Gaussian { gamma } => Some(gaussian_metric_closed(gamma, x.len())),
        KernelSpec::GaussianCosine { gamma } => Some(gc_metric_closed(gamma, x)?.g),
        KernelSpec::Diffusion { .. } => None,
    })
}

pub fn point_report(
    kernel: &KernelSpec,
    fitted: Option<&FittedConformal>,
    x: &[f64],
    h: f64,
) -> Result<PointReport> {
    let fd = induced_metric_fd(kernel, x, h)?.g;
    let closed = closed_form(kernel, x)?;
    let conformal = match fitted {
        None => None,
        Some(f) => {
            let cm = conformal_metric(f, kernel, x, h)?;
            let spec = cm.gc_specialized.as_ref().map(|s| s.g.clone());
            Some(ConformalReport {
                d: cm.d,
                grad_d: cm.grad_d.clone(),
                magnification: magnification_factor(&cm.general.g),
                pseudo_magnification: pseudo_magnification_factor(&cm.general.g),
                general_vs_specialized: spec.as_ref().map(|s| relative_frobenius(&cm.general.g, s)),
                g_specialized: spec.map(|s| s.to_rows()),
                g: cm.general.g.to_rows(),
            })
        }
    };
    Ok(PointReport {
        point: x.to_vec(),
        closed_vs_fd: closed.as_ref().map(|c| relative_frobenius(&fd, c)),
        null_residual: match kernel {
            KernelSpec::GaussianCosine { .. } => {
                closed.as_ref().map(|c| null_direction_residual(c, x))
            }
            _ => None,
        },
        magnification: magnification_factor(&fd),
        pseudo_magnification: pseudo_magnification_factor(&fd),
        g_closed: closed.map(|c| c.to_rows()),
        g: fd.to_rows(),
        conformal,
    })
}

pub fn geometry_report(
    kernel: &KernelSpec,
    fitted: Option<&FittedConformal>,
    points: &[Vec<f64>],
    h: f64,
) -> Result<GeometryReport> {
    Ok(GeometryReport {
        kernel: *kernel,
        transform: fitted.map(|f| f.spec.name().to_string()),
        h,
        points: points
            .iter()
            .map(|x| point_report(kernel, fitted, x, h))
            .collect::<Result<_>>()?,
    })
}
