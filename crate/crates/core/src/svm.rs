//! Soft-margin binary SVM trained by SMO.
//!
//! The solver works on the dual
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  0 ≤ αᵢ ≤ C,  yᵀα = 0,   Qᵢⱼ = yᵢyⱼK(xᵢ, xⱼ)
//! ```
//!
//! picking the first index by maximal KKT violation and the second by the
//! second-order gain `−b²/a`. Shrinking is not used. Kernel rows are held in
//! a small LRU cache; conformal factors are evaluated once per point.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelFn};
use crate::sparse::SparseVector;

/// Curvature floor for pairs with `K_ii + K_jj − 2K_ij ≤ 0`.
const CURVATURE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainSet {
    pub points: Vec<SparseVector>,
    pub labels: Vec<i8>,
}

impl TrainSet {
    pub fn new(points: Vec<SparseVector>, labels: Vec<i8>) -> Result<Self> {
        let ts = Self { points, labels };
        ts.validate()?;
        Ok(ts)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.labels.len() {
            return Err(Error::InvalidTrainSet(format!(
                "{} points but {} labels",
                self.points.len(),
                self.labels.len()
            )));
        }
        if self.points.len() < 2 {
            return Err(Error::InvalidTrainSet("need at least two points".into()));
        }
        if let Some(bad) = self.labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(Error::InvalidTrainSet(format!("label {bad} is not ±1")));
        }
        if !self.labels.contains(&1) || !self.labels.contains(&-1) {
            return Err(Error::InvalidTrainSet(
                "both classes must be present".into(),
            ));
        }
        let dim = self.points[0].dim();
        if let Some(p) = self.points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: p.dim(),
            });
        }
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> TrainSet {
        TrainSet {
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    /// Iteration budget is `max_passes · n`; `None` means `10·n` passes.
    pub max_passes: Option<usize>,
    pub seed: u64,
    pub cache_rows: usize,
    /// Keep every kernel row (ignores `cache_rows`).
    pub materialize: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_passes: None,
            seed: 0,
            cache_rows: 512,
            materialize: false,
        }
    }
}

impl SvmParams {
    pub fn with_c(c: f64) -> Self {
        Self {
            c,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::param(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::param(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_passes == Some(0) {
            return Err(Error::param("max_passes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainedModel {
    /// Positions of the support vectors in the training set.
    pub sv_indices: Vec<usize>,
    pub support_vectors: Vec<SparseVector>,
    pub alphas: Vec<f64>,
    pub labels: Vec<i8>,
    pub bias: f64,
    pub kernel: KernelFn,
    /// `D(xᵢ)` at each support vector (1 for base kernels).
    pub sv_factors: Vec<f64>,
    pub c: f64,
    pub tol: f64,
    /// `max_up(−yG) − min_low(−yG)` at termination.
    pub kkt_violation: f64,
    pub iterations: usize,
    /// Dual objective `Σα − ½αᵀQα`.
    pub objective: f64,
}

impl TrainedModel {
    pub fn n_sv(&self) -> usize {
        self.alphas.len()
    }

    /// `f(x) = Σ αᵢyᵢK(xᵢ, x) + b`.
    pub fn decision(&self, x: &SparseVector) -> Result<f64> {
        if let Some(sv) = self.support_vectors.first() {
            if sv.dim() != x.dim() {
                return Err(Error::DimensionMismatch {
                    left: sv.dim(),
                    right: x.dim(),
                });
            }
        }
        let dx = self.kernel.factor(x)?;
        let mut sum = 0.0;
        for k in 0..self.alphas.len() {
            let base = self.kernel.base(&self.support_vectors[k], x)?;
            sum += self.alphas[k] * f64::from(self.labels[k]) * (self.sv_factors[k] * dx * base);
        }
        Ok(sum + self.bias)
    }

    pub fn decision_batch(&self, xs: &[SparseVector]) -> Result<Vec<f64>> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            xs.par_iter().map(|x| self.decision(x)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            xs.iter().map(|x| self.decision(x)).collect()
        }
    }

    pub fn predict(&self, x: &SparseVector) -> Result<i8> {
        Ok(sign(self.decision(x)?))
    }
}

/// `sign` with `sign(0) = +1`.
#[inline]
pub fn sign(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

pub fn predict_labels(model: &TrainedModel, xs: &[SparseVector]) -> Result<Vec<i8>> {
    Ok(model.decision_batch(xs)?.into_iter().map(sign).collect())
}

/// Snapshot handed to [`train_observed`] after every pair update.
#[derive(Debug)]
pub struct Step<'a> {
    pub iteration: usize,
    pub alphas: &'a [f64],
    pub labels: &'a [i8],
    pub objective: f64,
}

pub fn train(ts: &TrainSet, kernel: &KernelFn, params: &SvmParams) -> Result<TrainedModel> {
    let order = scan_order(ts.len(), params.seed);
    Solver::new(ts, kernel, params, order)?.run(None)
}

/// Trains with an explicit scan order, which fixes how ties between equally
/// violating indices are broken. `order` must be a permutation of `0..n`.
pub fn train_with_order(
    ts: &TrainSet,
    kernel: &KernelFn,
    params: &SvmParams,
    order: Vec<usize>,
) -> Result<TrainedModel> {
    let mut seen = vec![false; ts.len()];
    if order.len() != ts.len()
        || order
            .iter()
            .any(|&i| i >= ts.len() || core::mem::replace(&mut seen[i], true))
    {
        return Err(Error::param(
            "scan order must be a permutation of the training indices",
        ));
    }
    Solver::new(ts, kernel, params, order)?.run(None)
}

/// Like [`train`], calling `observe` after every accepted pair update.
pub fn train_observed(
    ts: &TrainSet,
    kernel: &KernelFn,
    params: &SvmParams,
    observe: &mut dyn FnMut(&Step<'_>),
) -> Result<TrainedModel> {
    let order = scan_order(ts.len(), params.seed);
    Solver::new(ts, kernel, params, order)?.run(Some(observe))
}

/// The seed-derived index permutation used for tie-breaking.
pub fn scan_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

struct RowCache {
    capacity: usize,
    slot_of: Vec<usize>,
    owner: Vec<usize>,
    last_used: Vec<u64>,
    rows: Vec<Vec<f64>>,
    clock: u64,
}

impl RowCache {
    fn new(n: usize, capacity: usize) -> Self {
        Self {
            capacity: capacity.clamp(2, n.max(2)),
            slot_of: vec![usize::MAX; n],
            owner: Vec::new(),
            last_used: Vec::new(),
            rows: Vec::new(),
            clock: 0,
        }
    }

    /// Slot holding row `i`, computing it if needed. Never evicts `keep`.
    fn ensure(
        &mut self,
        i: usize,
        keep: usize,
        compute: impl FnOnce(&mut Vec<f64>) -> Result<()>,
    ) -> Result<usize> {
        self.clock += 1;
        let s = self.slot_of[i];
        if s != usize::MAX {
            self.last_used[s] = self.clock;
            return Ok(s);
        }
        let s = if self.rows.len() < self.capacity {
            self.rows.push(Vec::new());
            self.owner.push(i);
            self.last_used.push(self.clock);
            self.rows.len() - 1
        } else {
            let victim = (0..self.rows.len())
                .filter(|&s| self.owner[s] != keep)
                .min_by_key(|&s| self.last_used[s])
                .expect("cache holds at least two rows");
            self.slot_of[self.owner[victim]] = usize::MAX;
            self.owner[victim] = i;
            self.last_used[victim] = self.clock;
            victim
        };
        self.slot_of[i] = s;
        if let Err(e) = compute(&mut self.rows[s]) {
            self.slot_of[i] = usize::MAX;
            self.owner[s] = usize::MAX;
            return Err(e);
        }
        Ok(s)
    }
}

struct Solver<'a> {
    points: &'a [SparseVector],
    y: Vec<f64>,
    labels: &'a [i8],
    kernel: &'a KernelFn,
    factors: Vec<f64>,
    diag: Vec<f64>,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    c: f64,
    tol: f64,
    max_iter: usize,
    order: Vec<usize>,
    cache: RowCache,
}

impl<'a> Solver<'a> {
    fn new(
        ts: &'a TrainSet,
        kernel: &'a KernelFn,
        params: &SvmParams,
        order: Vec<usize>,
    ) -> Result<Self> {
        ts.validate()?;
        params.validate()?;
        let n = ts.len();
        let factors = ts
            .points
            .iter()
            .map(|p| kernel.factor(p))
            .collect::<Result<Vec<_>>>()?;
        let mut diag = Vec::with_capacity(n);
        for (i, p) in ts.points.iter().enumerate() {
            diag.push(factors[i] * factors[i] * kernel.base(p, p)?);
        }
        let passes = params.max_passes.unwrap_or(10 * n);
        let capacity = if params.materialize {
            n
        } else {
            params.cache_rows
        };
        Ok(Self {
            points: &ts.points,
            y: ts.labels.iter().map(|&l| f64::from(l)).collect(),
            labels: &ts.labels,
            kernel,
            factors,
            diag,
            alpha: vec![0.0; n],
            grad: vec![-1.0; n],
            c: params.c,
            tol: params.tol,
            max_iter: passes.saturating_mul(n).max(1),
            order,
            cache: RowCache::new(n, capacity),
        })
    }

    fn row(&mut self, i: usize, keep: usize) -> Result<usize> {
        let (points, kernel, factors) = (self.points, self.kernel, &self.factors);
        self.cache.ensure(i, keep, |row| {
            row.clear();
            row.reserve(points.len());
            for (k, p) in points.iter().enumerate() {
                let v = kernel.base(&points[i], p).map_err(|e| Error::GramEntry {
                    i,
                    j: k,
                    source: alloc::boxed::Box::new(e),
                })?;
                row.push(factors[i] * factors[k] * v);
            }
            Ok(())
        })
    }

    #[inline]
    fn in_up(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] < self.c
        } else {
            self.alpha[t] > 0.0
        }
    }

    #[inline]
    fn in_low(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.c
        }
    }

    /// `(i, m, M)`: the maximal violator in I_up and the extreme values of
    /// `−yG` over I_up and I_low.
    fn extremes(&self) -> (Option<usize>, f64, f64) {
        let mut best = None;
        let mut m = f64::NEG_INFINITY;
        let mut big_m = f64::INFINITY;
        for &t in &self.order {
            let v = -self.y[t] * self.grad[t];
            if self.in_up(t) && v > m {
                m = v;
                best = Some(t);
            }
            if self.in_low(t) && v < big_m {
                big_m = v;
            }
        }
        (best, m, big_m)
    }

    fn objective(&self) -> f64 {
        0.5 * self
            .alpha
            .iter()
            .zip(&self.grad)
            .map(|(a, g)| a * (1.0 - g))
            .sum::<f64>()
    }

    fn run(mut self, mut observe: Option<&mut dyn FnMut(&Step<'_>)>) -> Result<TrainedModel> {
        let n = self.points.len();
        let mut iterations = 0usize;
        let mut negative_curvature = 0usize;
        let violation = loop {
            let (i, m, big_m) = self.extremes();
            let gap = m - big_m;
            let Some(i) = i.filter(|_| gap >= self.tol) else {
                break if gap.is_finite() { gap.max(0.0) } else { 0.0 };
            };
            if iterations >= self.max_iter {
                return Err(Error::NotConverged {
                    iterations,
                    violation: gap,
                    negative_curvature,
                });
            }
            let si = self.row(i, usize::MAX)?;
            // Second index: best second-order gain among violating I_low members.
            let mut j = None;
            let mut best_gain = f64::INFINITY;
            {
                let ki = &self.cache.rows[si];
                for &t in &self.order {
                    if !self.in_low(t) {
                        continue;
                    }
                    let b = m + self.y[t] * self.grad[t];
                    if b <= 0.0 {
                        continue;
                    }
                    let mut a = self.diag[i] + self.diag[t] - 2.0 * ki[t];
                    if a <= 0.0 {
                        a = CURVATURE_FLOOR;
                    }
                    let gain = -(b * b) / a;
                    if gain < best_gain {
                        best_gain = gain;
                        j = Some(t);
                    }
                }
            }
            let Some(j) = j else {
                break gap;
            };
            let sj = self.row(j, i)?;
            let si = self.cache.slot_of[i];
            let kij = self.cache.rows[si][j];
            let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
            let c = self.c;
            let mut quad = self.diag[i] + self.diag[j] - 2.0 * kij;
            if quad <= 0.0 {
                negative_curvature += 1;
                quad = CURVATURE_FLOOR;
            }
            let (mut ai, mut aj) = (old_i, old_j);
            if self.y[i] != self.y[j] {
                let delta = (-self.grad[i] - self.grad[j]) / quad;
                let diff = ai - aj;
                ai += delta;
                aj += delta;
                if diff > 0.0 {
                    if aj < 0.0 {
                        aj = 0.0;
                        ai = diff;
                    }
                } else if ai < 0.0 {
                    ai = 0.0;
                    aj = -diff;
                }
                if diff > 0.0 {
                    if ai > c {
                        ai = c;
                        aj = c - diff;
                    }
                } else if aj > c {
                    aj = c;
                    ai = c + diff;
                }
            } else {
                let delta = (self.grad[i] - self.grad[j]) / quad;
                let sum = ai + aj;
                ai -= delta;
                aj += delta;
                if sum > c {
                    if ai > c {
                        ai = c;
                        aj = sum - c;
                    }
                } else if aj < 0.0 {
                    aj = 0.0;
                    ai = sum;
                }
                if sum > c {
                    if aj > c {
                        aj = c;
                        ai = sum - c;
                    }
                } else if ai < 0.0 {
                    ai = 0.0;
                    aj = sum;
                }
            }
            self.alpha[i] = ai;
            self.alpha[j] = aj;
            let (di, dj) = (ai - old_i, aj - old_j);
            let (ki, kj) = (&self.cache.rows[si], &self.cache.rows[sj]);
            let (yi, yj) = (self.y[i], self.y[j]);
            for t in 0..n {
                self.grad[t] += self.y[t] * (yi * ki[t] * di + yj * kj[t] * dj);
            }
            iterations += 1;
            if let Some(obs) = observe.as_mut() {
                let objective = self.objective();
                obs(&Step {
                    iteration: iterations,
                    alphas: &self.alpha,
                    labels: self.labels,
                    objective,
                });
            }
        };
        Ok(self.finish(violation, iterations))
    }

    fn bias(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum) = (0usize, 0.0);
        for t in 0..self.alpha.len() {
            let yg = self.y[t] * self.grad[t];
            if self.alpha[t] >= self.c {
                if self.y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if self.y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        let rho = if free > 0 {
            sum / free as f64
        } else {
            0.5 * (ub + lb)
        };
        -rho
    }

    fn finish(self, violation: f64, iterations: usize) -> TrainedModel {
        let bias = self.bias();
        let objective = self.objective();
        let sv_indices: Vec<usize> = (0..self.alpha.len())
            .filter(|&t| self.alpha[t] > 0.0)
            .collect();
        TrainedModel {
            support_vectors: sv_indices.iter().map(|&t| self.points[t].clone()).collect(),
            alphas: sv_indices.iter().map(|&t| self.alpha[t]).collect(),
            labels: sv_indices.iter().map(|&t| self.labels[t]).collect(),
            sv_factors: sv_indices.iter().map(|&t| self.factors[t]).collect(),
            sv_indices,
            bias,
            kernel: self.kernel.clone(),
            c: self.c,
            tol: self.tol,
            kkt_violation: violation,
            iterations,
            objective,
        }
    }
}
