//! Conformal factors `D(x)` and the transformed kernel
//! `k̃(x, y) = D(x)·D(y)·k(x, y)`.
//!
//! Five factor families are supported:
//!
//! | kind   | `D(x)`                                    | scale per SV                              |
//! |--------|-------------------------------------------|-------------------------------------------|
//! | `D1`   | `Σᵢ αᵢ exp(−‖x−xᵢ‖²/(2τ²))`               | one global `τ`                            |
//! | `D2`   | `Σᵢ exp(−‖x−xᵢ‖²/(2τᵢ²))`                 | from squared distances to `M` nearest SVs |
//! | `D3`   | `exp(−κ f(x)²)`                           | first-pass decision function `f`          |
//! | `Dcos` | `Σₛ exp(−d_cos(x, xₛ)/(2τₛ²))`            | mean cosine distance to `M` nearest SVs   |
//! | `Darc` | `Σₛ exp(−d_geo(x, xₛ)/(2τₛ²))`            | mean geodesic distance to `M` nearest SVs |
//!
//! Cosine and geodesic distances enter unsquared. The denominator of the
//! `Dcos`/`Darc` exponent is selectable through [`ExponentScale`].

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelSpec};
use crate::sparse::{self, SparseVector};
use crate::svm::TrainedModel;

/// Replacement scale when every neighbour distance is zero.
pub const TAU_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ConformalSpec {
    D1 { tau: f64 },
    D2 { m: usize },
    D3 { kappa: f64 },
    Cosine { m: usize },
    Arc { m: usize },
}

impl ConformalSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ConformalSpec::D1 { tau } if !(tau.is_finite() && tau > 0.0) => {
                Err(Error::param(format!("tau must be positive, got {tau}")))
            }
            ConformalSpec::D3 { kappa } if !(kappa.is_finite() && kappa >= 0.0) => Err(
                Error::param(format!("kappa must be non-negative, got {kappa}")),
            ),
            ConformalSpec::D2 { m } | ConformalSpec::Cosine { m } | ConformalSpec::Arc { m }
                if m == 0 =>
            {
                Err(Error::param("M must be at least 1"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConformalSpec::D1 { .. } => "d1",
            ConformalSpec::D2 { .. } => "d2",
            ConformalSpec::D3 { .. } => "d3",
            ConformalSpec::Cosine { .. } => "dcos",
            ConformalSpec::Arc { .. } => "darc",
        }
    }

    fn neighbours(&self) -> Option<usize> {
        match *self {
            ConformalSpec::D2 { m } | ConformalSpec::Cosine { m } | ConformalSpec::Arc { m } => {
                Some(m)
            }
            _ => None,
        }
    }
}

/// Denominator of the `Dcos` / `Darc` exponent `−d/den(τₛ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ExponentScale {
    /// `2τ²`
    #[default]
    TwoTauSquared,
    /// `τ`
    Tau,
    /// `2τ`
    TwoTau,
}

impl ExponentScale {
    #[inline]
    fn denominator(self, tau: f64) -> f64 {
        match self {
            ExponentScale::TwoTauSquared => 2.0 * tau * tau,
            ExponentScale::Tau => tau,
            ExponentScale::TwoTau => 2.0 * tau,
        }
    }
}

/// How `D2` turns squared neighbour distances into `τᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NeighbourScale {
    /// `τᵢ = mean ‖xⱼ − xᵢ‖²`, used as a length in `2τᵢ²`.
    MeanSquared,
    /// `τᵢ² = mean ‖xⱼ − xᵢ‖²` (root-mean-square neighbour distance).
    #[default]
    RootMeanSquared,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ConformalOptions {
    pub exponent: ExponentScale,
    pub neighbour_scale: NeighbourScale,
    /// Multiplies every fitted `τₛ`.
    pub tau_scale: f64,
}

impl Default for ConformalOptions {
    fn default() -> Self {
        Self {
            exponent: ExponentScale::default(),
            neighbour_scale: NeighbourScale::default(),
            tau_scale: 1.0,
        }
    }
}

impl ConformalOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tau_scale.is_finite() && self.tau_scale > 0.0) {
            return Err(Error::param(format!(
                "tau scale must be positive, got {}",
                self.tau_scale
            )));
        }
        Ok(())
    }
}

/// A conformal factor fitted on the support vectors of a first-pass model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FittedConformal {
    pub spec: ConformalSpec,
    pub options: ConformalOptions,
    pub sv_points: Vec<SparseVector>,
    /// Per-SV `τₛ` (D2 / Dcos / Darc).
    pub sv_taus: Vec<f64>,
    /// First-pass `αᵢ` (D1).
    pub sv_alphas: Vec<f64>,
    /// First-pass model, whose decision value drives D3.
    pub base_model: Option<Box<TrainedModel>>,
}

impl FittedConformal {
    /// Fits the factor on the support vectors of `model`.
    pub fn fit(
        spec: ConformalSpec,
        model: &TrainedModel,
        options: ConformalOptions,
    ) -> Result<Self> {
        spec.validate()?;
        options.validate()?;
        let mut out = Self {
            spec,
            options,
            sv_points: Vec::new(),
            sv_taus: Vec::new(),
            sv_alphas: Vec::new(),
            base_model: None,
        };
        match spec {
            ConformalSpec::D1 { .. } => {
                out.sv_points = model.support_vectors.clone();
                out.sv_alphas = model.alphas.clone();
            }
            ConformalSpec::D3 { .. } => out.base_model = Some(Box::new(model.clone())),
            _ => {
                out.sv_taus = scaled_taus(spec, &model.support_vectors, options)?;
                out.sv_points = model.support_vectors.clone();
            }
        }
        Ok(out)
    }

    /// Fits a neighbour-scaled factor (D2 / Dcos / Darc) on explicit support
    /// vectors.
    pub fn from_support_vectors(
        spec: ConformalSpec,
        svs: Vec<SparseVector>,
        options: ConformalOptions,
    ) -> Result<Self> {
        spec.validate()?;
        options.validate()?;
        if spec.neighbours().is_none() {
            return Err(Error::param(format!(
                "{} needs a trained model",
                spec.name()
            )));
        }
        let sv_taus = scaled_taus(spec, &svs, options)?;
        Ok(Self {
            spec,
            options,
            sv_points: svs,
            sv_taus,
            sv_alphas: Vec::new(),
            base_model: None,
        })
    }

    /// D1 from explicit support vectors and weights.
    pub fn d1(tau: f64, svs: Vec<SparseVector>, alphas: Vec<f64>) -> Result<Self> {
        let spec = ConformalSpec::D1 { tau };
        spec.validate()?;
        if svs.len() != alphas.len() || svs.is_empty() {
            return Err(Error::param(
                "D1 needs one positive alpha per support vector",
            ));
        }
        Ok(Self {
            spec,
            options: ConformalOptions::default(),
            sv_points: svs,
            sv_taus: Vec::new(),
            sv_alphas: alphas,
            base_model: None,
        })
    }

    /// `D(x)`.
    pub fn eval(&self, x: &SparseVector) -> Result<f64> {
        match self.spec {
            ConformalSpec::D1 { tau } => {
                let den = 2.0 * tau * tau;
                let mut terms = Vec::with_capacity(self.sv_points.len());
                for (sv, a) in self.sv_points.iter().zip(&self.sv_alphas) {
                    terms.push(a * libm::exp(-sparse::sq_euclidean_dist(x, sv)? / den));
                }
                Ok(ordered_sum(terms))
            }
            ConformalSpec::D3 { kappa } => {
                let model = self
                    .base_model
                    .as_ref()
                    .ok_or_else(|| Error::param("D3 factor has no base model"))?;
                let f = model.decision(x)?;
                Ok(libm::exp(-kappa * f * f))
            }
            ConformalSpec::D2 { .. } => {
                let mut terms = Vec::with_capacity(self.sv_points.len());
                for (sv, tau) in self.sv_points.iter().zip(&self.sv_taus) {
                    terms.push(libm::exp(
                        -sparse::sq_euclidean_dist(x, sv)? / (2.0 * tau * tau),
                    ));
                }
                Ok(ordered_sum(terms))
            }
            ConformalSpec::Cosine { .. } | ConformalSpec::Arc { .. } => {
                let mut terms = Vec::with_capacity(self.sv_points.len());
                for (sv, &tau) in self.sv_points.iter().zip(&self.sv_taus) {
                    let d = neighbour_distance(self.spec, x, sv)?;
                    terms.push(libm::exp(-d / self.options.exponent.denominator(tau)));
                }
                Ok(ordered_sum(terms))
            }
        }
    }
}

/// Sums in ascending order so the result does not depend on SV order.
fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

fn neighbour_distance(spec: ConformalSpec, a: &SparseVector, b: &SparseVector) -> Result<f64> {
    match spec {
        ConformalSpec::D2 { .. } => sparse::sq_euclidean_dist(a, b),
        ConformalSpec::Cosine { .. } => sparse::cosine_distance(a, b),
        ConformalSpec::Arc { .. } => sparse::geodesic_distance(a, b),
        _ => Err(Error::param(format!(
            "{} has no neighbour distance",
            spec.name()
        ))),
    }
}

fn scaled_taus(
    spec: ConformalSpec,
    svs: &[SparseVector],
    options: ConformalOptions,
) -> Result<Vec<f64>> {
    let mut taus = fit_taus(spec, svs, options.neighbour_scale)?;
    if options.tau_scale != 1.0 {
        taus.iter_mut().for_each(|t| *t *= options.tau_scale);
    }
    Ok(taus)
}

/// Per-SV scales: the mean distance from each SV to its `min(M, |SV|−1)`
/// nearest other SVs, under the kind's own distance (squared Euclidean for
/// D2, cosine for Dcos, geodesic for Darc). Zero scales (duplicate SVs) are
/// replaced by the smallest positive scale, or [`TAU_FLOOR`].
pub fn fit_taus(
    spec: ConformalSpec,
    svs: &[SparseVector],
    scale: NeighbourScale,
) -> Result<Vec<f64>> {
    let m = spec
        .neighbours()
        .ok_or_else(|| Error::param(format!("{} has no per-SV scale", spec.name())))?;
    if svs.len() < 2 {
        return Err(Error::TooFewSupportVectors(svs.len()));
    }
    let m = m.min(svs.len() - 1);
    let n = svs.len();
    let mut dist = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = neighbour_distance(spec, &svs[i], &svs[j])?;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut taus = Vec::with_capacity(n);
    let mut row = Vec::with_capacity(n - 1);
    for i in 0..n {
        row.clear();
        row.extend((0..n).filter(|&j| j != i).map(|j| dist[i * n + j]));
        row.sort_by(f64::total_cmp);
        let mean = row[..m].iter().sum::<f64>() / m as f64;
        taus.push(match (spec, scale) {
            (ConformalSpec::D2 { .. }, NeighbourScale::RootMeanSquared) => libm::sqrt(mean),
            _ => mean,
        });
    }
    let floor = taus
        .iter()
        .copied()
        .filter(|&t| t > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { TAU_FLOOR };
    for t in &mut taus {
        if *t <= 0.0 {
            *t = floor;
        }
    }
    Ok(taus)
}

/// `k̃(x, y) = D(x)·D(y)·k(x, y)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConformalKernel {
    pub base: KernelSpec,
    pub fitted: FittedConformal,
}

impl ConformalKernel {
    pub fn new(base: KernelSpec, fitted: FittedConformal) -> Self {
        Self { base, fitted }
    }
}

impl Kernel for ConformalKernel {
    fn base(&self, a: &SparseVector, b: &SparseVector) -> Result<f64> {
        self.base.eval_pair(a, b)
    }

    fn factor(&self, x: &SparseVector) -> Result<f64> {
        self.fitted.eval(x)
    }

    fn describe(&self) -> String {
        format!("{}·{}", self.fitted.spec.name(), self.base.describe())
    }
}
