//! Experiment harness: stratified folds, classification metrics, the
//! two-pass conformal procedure, cross-validated comparisons, synthetic
//! Monte-Carlo replications and grid enumeration.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conformal::{
    ConformalKernel, ConformalOptions, ConformalSpec, FittedConformal, NeighbourScale,
};
use crate::datasets::{gen_synthetic, Boundary, SyntheticSpec, TaskSpec};
use crate::error::{Error, Result};
use crate::kernels::{KernelFn, KernelSpec};
use crate::sparse::SparseVector;
use crate::stats::{mean_ci95, paired_ttest};
use crate::svm::{predict_labels, train, SvmParams, TrainSet, TrainedModel};
use crate::text::{Norm, Weighting};

/// Significance level for the efficiency-gain rule.
pub const SIGNIFICANCE: f64 = 0.05;

/// `k` folds as `(train, test)` index lists. Each class is shuffled with the
/// seed and dealt round-robin; negatives start where positives stopped so
/// fold sizes differ by at most one.
pub fn stratified_kfold(
    labels: &[i8],
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::param(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    let mut start = 0;
    for class in [1i8, -1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                label: class,
                count: members.len(),
                folds: k,
            });
        }
        members.shuffle(&mut rng);
        for (r, &i) in members.iter().enumerate() {
            fold_of[i] = (start + r) % k;
        }
        start = (start + members.len()) % k;
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
        return Err(Error::param(format!("label {bad} is not ±1")));
    }
    Ok((0..k)
        .map(|f| {
            let test: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
            let train: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != f).collect();
            (train, test)
        })
        .collect())
}

/// `2PR/(P+R)`, defined as 0 when there are no true positives.
pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let tp = tp as f64;
    2.0 * tp / (2.0 * tp + fp as f64 + fn_ as f64)
}

/// `(E_o − E_m)/E_o · 100`, or `None` when `E_o = 0`.
pub fn error_decrease(e_original: f64, e_modified: f64) -> Option<f64> {
    if e_original == 0.0 {
        None
    } else {
        Some((e_original - e_modified) / e_original * 100.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(truth: &[i8], predicted: &[i8]) -> Self {
        let mut c = Confusion::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t > 0, p > 0) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn f1(&self) -> f64 {
        f1_score(self.tp, self.fp, self.fn_)
    }

    pub fn error_rate(&self) -> f64 {
        (self.fp + self.fn_) as f64 / self.total().max(1) as f64
    }

    fn add(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldMetrics {
    pub confusion: Confusion,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub error: f64,
    pub n_sv: usize,
}

impl FoldMetrics {
    pub fn new(confusion: Confusion, n_sv: usize) -> Self {
        Self {
            f1: confusion.f1(),
            precision: confusion.precision(),
            recall: confusion.recall(),
            error: confusion.error_rate(),
            confusion,
            n_sv,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluated {
    pub model: TrainedModel,
    pub predictions: Vec<i8>,
    pub metrics: FoldMetrics,
}

fn evaluate(model: TrainedModel, test: &TrainSet) -> Result<Evaluated> {
    let predictions = predict_labels(&model, &test.points)?;
    let metrics = FoldMetrics::new(
        Confusion::from_predictions(&test.labels, &predictions),
        model.n_sv(),
    );
    Ok(Evaluated {
        model,
        predictions,
        metrics,
    })
}

/// Trains `kernel`, fits `transform` on its support vectors, retrains with
/// the conformal kernel at the same `C`, and scores both on `test`.
pub fn two_pass(
    kernel: &KernelSpec,
    transform: &ConformalSpec,
    options: ConformalOptions,
    params: &SvmParams,
    train_set: &TrainSet,
    test: &TrainSet,
) -> Result<(Evaluated, Evaluated)> {
    let pass = |pass: &'static str| {
        move |e: Error| Error::Pass {
            pass,
            source: alloc::boxed::Box::new(e),
        }
    };
    let first = train(train_set, &KernelFn::from(*kernel), params).map_err(pass("original"))?;
    let fitted = FittedConformal::fit(*transform, &first, options).map_err(pass("transform"))?;
    let conformal = KernelFn::from(ConformalKernel::new(*kernel, fitted));
    let second = train(train_set, &conformal, params).map_err(pass("transformed"))?;
    let original = evaluate(first, test).map_err(pass("original"))?;
    let transformed = evaluate(second, test).map_err(pass("transformed"))?;
    Ok((original, transformed))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentConfig {
    pub task: String,
    pub kernel: KernelSpec,
    pub transform: Option<ConformalSpec>,
    pub conformal: ConformalOptions,
    pub svm: SvmParams,
    pub folds: usize,
    pub weighting: Weighting,
    pub norm: Norm,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(task: impl Into<String>, kernel: KernelSpec, c: f64) -> Self {
        Self {
            task: task.into(),
            kernel,
            transform: None,
            conformal: ConformalOptions::default(),
            svm: SvmParams::with_c(c),
            folds: 20,
            weighting: Weighting::Tf,
            norm: Norm::L1,
            seed: 0,
        }
    }

    /// GC and Darc are only defined on L¹-normalized (simplex) embeddings.
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if let Some(t) = &self.transform {
            t.validate()?;
        }
        let needs_l1 = matches!(
            self.kernel,
            KernelSpec::GaussianCosine { .. } | KernelSpec::Diffusion { .. }
        ) || matches!(self.transform, Some(ConformalSpec::Arc { .. }));
        if needs_l1 && self.norm != Norm::L1 {
            return Err(Error::param(format!(
                "{} with {} requires the l1 norm",
                self.kernel.name(),
                self.transform.map_or("no transform", |t| t.name())
            )));
        }
        if self.folds < 2 {
            return Err(Error::param("need at least 2 folds"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldResult {
    pub fold: usize,
    pub original: FoldMetrics,
    pub transformed: Option<FoldMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    /// Mean of the per-fold F1 values.
    pub f1: f64,
    /// F1 of the confusion counts pooled over folds.
    pub pooled_f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub error: f64,
    pub n_sv: f64,
}

fn summarize(folds: &[FoldMetrics]) -> Summary {
    let n = folds.len().max(1) as f64;
    let mut pooled = Confusion::default();
    for f in folds {
        pooled.add(&f.confusion);
    }
    Summary {
        f1: folds.iter().map(|f| f.f1).sum::<f64>() / n,
        pooled_f1: pooled.f1(),
        precision: folds.iter().map(|f| f.precision).sum::<f64>() / n,
        recall: folds.iter().map(|f| f.recall).sum::<f64>() / n,
        error: folds.iter().map(|f| f.error).sum::<f64>() / n,
        n_sv: folds.iter().map(|f| f.n_sv as f64).sum::<f64>() / n,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentResult {
    pub folds: Vec<FoldResult>,
    pub original: Summary,
    pub transformed: Option<Summary>,
    /// Paired t-test on per-fold F1, when a transform was run.
    pub p_value: Option<f64>,
    pub error_decrease: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Improvement {
    AccuracyGain,
    EfficiencyGain,
    NoGain,
}

impl Improvement {
    pub fn name(self) -> &'static str {
        match self {
            Improvement::AccuracyGain => "accuracy",
            Improvement::EfficiencyGain => "efficiency",
            Improvement::NoGain => "none",
        }
    }
}

/// Higher mean F1 is an accuracy gain; lower F1 that is not significantly
/// lower, reached with fewer support vectors, is an efficiency gain.
pub fn classify_improvement(
    f1_original: f64,
    f1_transformed: f64,
    p_value: f64,
    sv_original: f64,
    sv_transformed: f64,
) -> Improvement {
    if f1_transformed > f1_original {
        Improvement::AccuracyGain
    } else if f1_transformed < f1_original
        && p_value >= SIGNIFICANCE
        && sv_transformed < sv_original
    {
        Improvement::EfficiencyGain
    } else {
        Improvement::NoGain
    }
}

impl ExperimentResult {
    pub fn improvement(&self) -> Option<Improvement> {
        let t = self.transformed.as_ref()?;
        Some(classify_improvement(
            self.original.f1,
            t.f1,
            self.p_value?,
            self.original.n_sv,
            t.n_sv,
        ))
    }
}

#[cfg(feature = "parallel")]
fn map_ordered<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_ordered<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Cross-validated comparison of the base kernel and, when configured, its
/// conformal transform. `prepare` builds the train and test sets of a fold
/// from its index lists.
pub fn cross_validate_with<F>(
    config: &ExperimentConfig,
    labels: &[i8],
    prepare: F,
) -> Result<ExperimentResult>
where
    F: Fn(&[usize], &[usize]) -> Result<(TrainSet, TrainSet)> + Sync + Send,
{
    config.validate()?;
    let folds = stratified_kfold(labels, config.folds, config.seed)?;
    let indexed: Vec<_> = folds.iter().enumerate().collect();
    let results = map_ordered(&indexed, |&(f, (tr, te))| -> Result<FoldResult> {
        let (train_set, test) = prepare(tr, te)?;
        let params = SvmParams {
            seed: config.seed.wrapping_add(f as u64),
            ..config.svm
        };
        match &config.transform {
            None => {
                let m = train(&train_set, &KernelFn::from(config.kernel), &params)?;
                Ok(FoldResult {
                    fold: f,
                    original: evaluate(m, &test)?.metrics,
                    transformed: None,
                })
            }
            Some(t) => {
                let (o, c) = two_pass(
                    &config.kernel,
                    t,
                    config.conformal,
                    &params,
                    &train_set,
                    &test,
                )?;
                Ok(FoldResult {
                    fold: f,
                    original: o.metrics,
                    transformed: Some(c.metrics),
                })
            }
        }
    });
    let folds: Vec<FoldResult> = results.into_iter().collect::<Result<_>>()?;
    let original = summarize(&folds.iter().map(|f| f.original).collect::<Vec<_>>());
    let (transformed, p_value, error_decrease) = if config.transform.is_some() {
        let t: Vec<FoldMetrics> = folds.iter().filter_map(|f| f.transformed).collect();
        let s = summarize(&t);
        let a: Vec<f64> = folds.iter().map(|f| f.original.f1).collect();
        let b: Vec<f64> = t.iter().map(|m| m.f1).collect();
        let p = paired_ttest(&a, &b)?.p_value;
        let ed = error_decrease(original.error, s.error);
        (Some(s), Some(p), ed)
    } else {
        (None, None, None)
    };
    Ok(ExperimentResult {
        folds,
        original,
        transformed,
        p_value,
        error_decrease,
    })
}

/// [`cross_validate_with`] over pre-embedded points.
pub fn cross_validate(
    config: &ExperimentConfig,
    points: &[SparseVector],
    labels: &[i8],
) -> Result<ExperimentResult> {
    let all = TrainSet {
        points: points.to_vec(),
        labels: labels.to_vec(),
    };
    cross_validate_with(config, labels, |tr, te| {
        Ok((all.subset(tr), all.subset(te)))
    })
}

/// Monte-Carlo replication on a synthetic boundary.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticExperiment {
    pub spec: SyntheticSpec,
    pub trials: usize,
    pub sigma: f64,
    pub transform: ConformalSpec,
    pub conformal: ConformalOptions,
    pub svm: SvmParams,
}

impl SyntheticExperiment {
    /// Sine boundary, D2 with `M = 3`, 100 training and 10000 test points.
    /// `τᵢ` is twice the root-mean-square distance to the three nearest
    /// support vectors and `C = 10`.
    pub fn d2_replication(sigma: f64, trials: usize, seed: u64) -> Self {
        Self {
            spec: SyntheticSpec::new(Boundary::Sin, 100, 10_000, seed),
            trials,
            sigma,
            transform: ConformalSpec::D2 { m: 3 },
            conformal: ConformalOptions {
                neighbour_scale: NeighbourScale::RootMeanSquared,
                tau_scale: 2.0,
                ..ConformalOptions::default()
            },
            svm: SvmParams::with_c(10.0),
        }
    }

    /// Bump boundary, D3 with `κ = 1`, 100 training and 1000 test points,
    /// `C = 10`.
    pub fn d3_replication(sigma: f64, trials: usize, seed: u64) -> Self {
        Self {
            spec: SyntheticSpec::new(Boundary::Bump, 100, 1_000, seed),
            trials,
            sigma,
            transform: ConformalSpec::D3 { kappa: 1.0 },
            conformal: ConformalOptions::default(),
            svm: SvmParams::with_c(10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialOutcome {
    pub trial: usize,
    pub error_original: f64,
    pub error_transformed: f64,
    pub sv_original: usize,
    pub sv_transformed: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticSummary {
    pub sigma: f64,
    pub trials: usize,
    /// Trials that could not be run (single-class draw or solver failure).
    pub failed: usize,
    pub mean_error_original: f64,
    pub mean_error_transformed: f64,
    /// `E_d` of the trial-averaged errors, in percent.
    pub error_decrease: Option<f64>,
    /// 95% half-width of `error_decrease`, treating `E_o` as fixed.
    pub ci_half_width: f64,
    pub outcomes: Vec<TrialOutcome>,
}

impl SyntheticSummary {
    /// Whether `value` lies within the run's own 95% interval.
    pub fn ci_contains(&self, value: f64) -> bool {
        self.error_decrease
            .is_some_and(|ed| (ed - value).abs() <= self.ci_half_width)
    }
}

pub fn run_synthetic_trial(exp: &SyntheticExperiment, trial: usize) -> Result<TrialOutcome> {
    let (train_set, test) = gen_synthetic(&exp.spec, trial as u64);
    let kernel = KernelSpec::gaussian_sigma(exp.sigma)?;
    let params = SvmParams {
        seed: exp.spec.seed.wrapping_add(trial as u64),
        ..exp.svm
    };
    let (o, c) = two_pass(
        &kernel,
        &exp.transform,
        exp.conformal,
        &params,
        &train_set,
        &test,
    )?;
    Ok(TrialOutcome {
        trial,
        error_original: o.metrics.error,
        error_transformed: c.metrics.error,
        sv_original: o.metrics.n_sv,
        sv_transformed: c.metrics.n_sv,
    })
}

pub fn run_synthetic(exp: &SyntheticExperiment) -> Result<SyntheticSummary> {
    if exp.trials == 0 {
        return Err(Error::param("need at least one trial"));
    }
    let trials: Vec<usize> = (0..exp.trials).collect();
    let results = map_ordered(&trials, |&t| run_synthetic_trial(exp, t));
    let mut outcomes = Vec::with_capacity(exp.trials);
    let mut failed = 0;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(Error::Pass { .. })
            | Err(Error::InvalidTrainSet(_))
            | Err(Error::TooFewSupportVectors(_)) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if outcomes.is_empty() {
        return Err(Error::Unstable(format!("all {} trials failed", exp.trials)));
    }
    let eo: Vec<f64> = outcomes.iter().map(|o| o.error_original).collect();
    let em: Vec<f64> = outcomes.iter().map(|o| o.error_transformed).collect();
    let diff: Vec<f64> = eo.iter().zip(&em).map(|(a, b)| a - b).collect();
    let (mean_eo, _) = mean_ci95(&eo);
    let (mean_em, _) = mean_ci95(&em);
    let (_, half) = mean_ci95(&diff);
    Ok(SyntheticSummary {
        sigma: exp.sigma,
        trials: exp.trials,
        failed,
        mean_error_original: mean_eo,
        mean_error_transformed: mean_em,
        error_decrease: error_decrease(mean_eo, mean_em),
        ci_half_width: if mean_eo > 0.0 {
            half / mean_eo * 100.0
        } else {
            f64::NAN
        },
        outcomes,
    })
}

/// One cell of a hyper-parameter grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridCell {
    pub task: TaskSpec,
    pub kernel: KernelSpec,
    pub transform: Option<ConformalSpec>,
    pub c: f64,
    pub norm: Norm,
    pub weighting: Weighting,
}

impl GridCell {
    /// Stable identifier used to resume interrupted runs.
    pub fn key(&self) -> String {
        format!(
            "{}|{}|{}|{:e}|{}|{}|{}",
            self.task.name(),
            self.kernel.name(),
            self.kernel
                .gamma()
                .map_or(String::from("-"), |g| format!("{g:e}")),
            self.c,
            self.norm.name(),
            match self.weighting {
                Weighting::Tf => "tf",
                Weighting::TfIdf => "tfidf",
            },
            self.transform.map_or("none", |t| t.name()),
        )
    }
}

/// Kernel family of a grid; `gammas` is ignored for the linear kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum KernelFamily {
    Linear,
    Gaussian,
    Gc,
}

/// The Cartesian product `tasks × kernels × γ × C × norms × weightings`,
/// dropping L² cells for kernels or transforms that need simplex input.
pub fn enumerate_grid(
    tasks: &[TaskSpec],
    kernels: &[(KernelFamily, Option<ConformalSpec>)],
    gammas: &[f64],
    cs: &[f64],
    norms: &[Norm],
    weightings: &[Weighting],
) -> Result<Vec<GridCell>> {
    let mut cells = Vec::new();
    for task in tasks {
        for &(family, transform) in kernels {
            let specs: Vec<KernelSpec> = match family {
                KernelFamily::Linear => vec![KernelSpec::Linear],
                KernelFamily::Gaussian => gammas
                    .iter()
                    .map(|&g| KernelSpec::gaussian(g))
                    .collect::<Result<_>>()?,
                KernelFamily::Gc => gammas
                    .iter()
                    .map(|&g| KernelSpec::gaussian_cosine(g))
                    .collect::<Result<_>>()?,
            };
            let simplex_only =
                family == KernelFamily::Gc || matches!(transform, Some(ConformalSpec::Arc { .. }));
            for kernel in &specs {
                for &c in cs {
                    for &norm in norms {
                        if simplex_only && norm != Norm::L1 {
                            continue;
                        }
                        for &weighting in weightings {
                            cells.push(GridCell {
                                task: task.clone(),
                                kernel: *kernel,
                                transform,
                                c,
                                norm,
                                weighting,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(cells)
}
