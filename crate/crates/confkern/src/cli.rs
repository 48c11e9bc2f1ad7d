use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use confkern_core::conformal::{ConformalOptions, ExponentScale, NeighbourScale};
use confkern_core::datasets::{gen_synthetic, Boundary, SyntheticSpec, TaskSpec, DEFAULT_TOPICS};
use confkern_core::eval::{
    cross_validate, run_synthetic, ExperimentResult, GridCell, Improvement, SyntheticExperiment,
    SyntheticSummary,
};
use confkern_core::svm::{predict_labels, train};
use confkern_core::text::{Norm, Weighting};
use confkern_core::{
    ConformalKernel, ConformalSpec, FittedConformal, KernelFn, KernelSpec, SparseVector, SvmParams,
    TrainSet,
};
use serde::Serialize;

use crate::corpus::{corpus_path, load_stopwords, Corpus, CorpusFormat, CorpusSpec};
use crate::error::{CliError, Result};
use crate::geometry_report::geometry_report;
use crate::grid::{experiment_config, result_row, run_grid, GridConfig};
use crate::manifest::{manifest_path, RunManifest};
use crate::output::{
    load_model, points_csv, read_dense_rows, read_labelled, results_csv, save_model, synth_csv,
    write_atomic, write_json, ResultRow,
};

#[derive(Debug, Parser)]
#[command(
    name = "confkern",
    version,
    about = "SVM experiments with conformally transformed kernels"
)]
pub struct Cli {
    /// Worker threads for trials, folds and grid cells (default: one per core).
    #[arg(long, global = true, env = "CONFKERN_JOBS")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo error decrease on a synthetic boundary, one row per sigma.
    Synth(SynthArgs),
    /// Export a synthetic data set as `x,y,label` CSV.
    Data(DataArgs),
    /// Cross-validated text classification on Reuters.
    Text(TextArgs),
    /// Induced metric and magnification factor at given points, as JSON.
    Geometry(GeometryArgs),
    /// Run a configured grid of text experiments.
    Grid(GridArgs),
    /// Train a model on labelled CSV points and save it as JSON.
    Train(TrainArgs),
    /// Decision values of a saved model.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BoundaryArg {
    Sin,
    Bump,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Sin => Boundary::Sin,
            BoundaryArg::Bump => Boundary::Bump,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformArg {
    None,
    D1,
    D2,
    D3,
    Dcos,
    Darc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TauRule {
    /// `τ² = mean squared neighbour distance`
    Rms,
    /// `τ = mean squared neighbour distance`
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExponentArg {
    #[value(name = "2tau2")]
    TwoTauSquared,
    Tau,
    #[value(name = "2tau")]
    TwoTau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Linear,
    Gaussian,
    Gc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskKind {
    Ovr,
    Ovo,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// KKT tolerance.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    /// Iteration cap as a multiple of the training-set size (default: ten times that size).
    #[arg(long)]
    pub max_passes: Option<usize>,
    /// Kernel rows kept in the LRU cache.
    #[arg(long, default_value_t = 512)]
    pub cache_rows: usize,
    /// Precompute the whole Gram matrix.
    #[arg(long)]
    pub materialize: bool,
}

impl SolverArgs {
    pub fn params(&self, c: f64, seed: u64) -> SvmParams {
        SvmParams {
            c,
            tol: self.tol,
            max_passes: self.max_passes,
            seed,
            cache_rows: self.cache_rows,
            materialize: self.materialize,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TransformArgs {
    /// Nearest support vectors per neighbour scale.
    #[arg(long)]
    pub m: Option<usize>,
    /// D3 exponent weight.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Fixed D1 width.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_enum, default_value_t = TauRule::Rms)]
    pub tau_rule: TauRule,
    /// Multiplies every fitted neighbour scale.
    #[arg(long)]
    pub tau_scale: Option<f64>,
    /// Denominator of the Dcos / Darc exponent.
    #[arg(long, value_enum, default_value_t = ExponentArg::TwoTauSquared)]
    pub exponent: ExponentArg,
}

impl TransformArgs {
    /// The conformal spec for `kind`, rejecting flags that do not apply.
    pub fn spec(&self, kind: TransformArg) -> Result<Option<ConformalSpec>> {
        let reject = |flag: &str, set: bool| {
            if set {
                Err(CliError::usage(format!(
                    "--{flag} does not apply to transform {}",
                    kind_name(kind)
                )))
            } else {
                Ok(())
            }
        };
        reject(
            "m",
            self.m.is_some()
                && !matches!(
                    kind,
                    TransformArg::D2 | TransformArg::Dcos | TransformArg::Darc
                ),
        )?;
        reject("kappa", self.kappa.is_some() && kind != TransformArg::D3)?;
        reject("tau", self.tau.is_some() && kind != TransformArg::D1)?;
        reject(
            "tau-rule",
            self.tau_rule != TauRule::Rms && kind != TransformArg::D2,
        )?;
        reject(
            "exponent",
            self.exponent != ExponentArg::TwoTauSquared
                && !matches!(kind, TransformArg::Dcos | TransformArg::Darc),
        )?;
        if let Some(t) = self.tau_scale {
            if !(t.is_finite() && t > 0.0) {
                return Err(CliError::usage(format!(
                    "--tau-scale must be positive, got {t}"
                )));
            }
        }
        let m = self.m.unwrap_or(3);
        let spec = match kind {
            TransformArg::None => None,
            TransformArg::D1 => Some(ConformalSpec::D1 {
                tau: self
                    .tau
                    .ok_or_else(|| CliError::usage("transform d1 needs --tau"))?,
            }),
            TransformArg::D2 => Some(ConformalSpec::D2 { m }),
            TransformArg::D3 => Some(ConformalSpec::D3 {
                kappa: self.kappa.unwrap_or(1.0),
            }),
            TransformArg::Dcos => Some(ConformalSpec::Cosine { m }),
            TransformArg::Darc => Some(ConformalSpec::Arc { m }),
        };
        if let Some(s) = &spec {
            s.validate()?;
        }
        Ok(spec)
    }

    pub fn options(&self, default_tau_scale: f64) -> ConformalOptions {
        ConformalOptions {
            exponent: match self.exponent {
                ExponentArg::TwoTauSquared => ExponentScale::TwoTauSquared,
                ExponentArg::Tau => ExponentScale::Tau,
                ExponentArg::TwoTau => ExponentScale::TwoTau,
            },
            neighbour_scale: match self.tau_rule {
                TauRule::Rms => NeighbourScale::RootMeanSquared,
                TauRule::Literal => NeighbourScale::MeanSquared,
            },
            tau_scale: self.tau_scale.unwrap_or(default_tau_scale),
        }
    }
}

fn kind_name(kind: TransformArg) -> String {
    kind.to_possible_value()
        .map_or("?".into(), |v| v.get_name().to_string())
}

fn kernel_spec(kind: KernelArg, gamma: Option<f64>) -> Result<KernelSpec> {
    match (kind, gamma) {
        (KernelArg::Linear, None) => Ok(KernelSpec::Linear),
        (KernelArg::Linear, Some(_)) => Err(CliError::usage(
            "--gamma does not apply to the linear kernel",
        )),
        (_, None) => Err(CliError::usage(
            "--gamma is required for gaussian and gc kernels",
        )),
        (KernelArg::Gaussian, Some(g)) => Ok(KernelSpec::gaussian(g)?),
        (KernelArg::Gc, Some(g)) => Ok(KernelSpec::gaussian_cosine(g)?),
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = BoundaryArg::Sin)]
    pub boundary: BoundaryArg,
    #[arg(long, default_value_t = 100)]
    pub train: usize,
    /// Test points per trial (default: 10000 for sin, 1000 for bump).
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Gaussian widths, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_negative_numbers = true
    )]
    pub sigma: Vec<f64>,
    #[arg(long, value_enum, default_value_t = TransformArg::D2)]
    pub transform: TransformArg,
    #[command(flatten)]
    pub conformal: TransformArgs,
    #[arg(long, default_value_t = 10.0)]
    pub c: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Results CSV (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full summaries including per-trial outcomes.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value_t = BoundaryArg::Sin)]
    pub boundary: BoundaryArg,
    #[arg(long, default_value_t = 100)]
    pub train: usize,
    #[arg(long, default_value_t = 1000)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub trial: u64,
    /// Export the test split instead of the training split.
    #[arg(long)]
    pub test_split: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Reuters directory.
    #[arg(long, env = "CONFKERN_CORPUS")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Auto)]
    pub format: CorpusFormat,
    /// Stopword list, one word per line (default: built-in English list).
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Topics kept as labels, comma separated, in priority order.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TOPICS.map(String::from))]
    pub topics: Vec<String>,
    #[arg(long, default_value_t = 500)]
    pub min_docs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TextArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum)]
    pub task: TaskKind,
    #[arg(long)]
    pub positive: String,
    #[arg(long)]
    pub negative: Option<String>,
    #[arg(long, value_enum)]
    pub kernel: KernelArg,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub c: f64,
    #[arg(long, value_enum, default_value_t = NormArg::L1)]
    pub norm: NormArg,
    #[arg(long, action = ArgAction::Set, default_value_t = false)]
    pub tfidf: bool,
    #[arg(long, value_enum, default_value_t = TransformArg::None)]
    pub transform: TransformArg,
    #[command(flatten)]
    pub conformal: TransformArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 20)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Results CSV row (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-fold metrics and corpus statistics.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Vocabulary dump: index, term, document frequency, idf.
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GeometryArgs {
    #[arg(long, value_enum)]
    pub kernel: KernelArg,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// One point per row.
    #[arg(long)]
    pub points: PathBuf,
    /// Finite-difference step.
    #[arg(long, default_value_t = confkern_core::geometry::DEFAULT_STEP)]
    pub h: f64,
    #[arg(long, value_enum, default_value_t = TransformArg::None)]
    pub transform: TransformArg,
    /// Support vectors for the conformal factor, one per row.
    #[arg(long)]
    pub svs: Option<PathBuf>,
    #[command(flatten)]
    pub conformal: TransformArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// TOML grid description.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, env = "CONFKERN_CORPUS")]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Rows, failed cells and improvement shares.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Skip cells already completed in the manifest next to --out.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Labelled points: features then a ±1 label per row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub kernel: KernelArg,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub c: f64,
    #[arg(long, value_enum, default_value_t = TransformArg::None)]
    pub transform: TransformArg,
    #[command(flatten)]
    pub conformal: TransformArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// The last column of --data is a label to score against.
    #[arg(long)]
    pub labelled: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::usage("--jobs must be positive"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| CliError::data(e.to_string()))?;
        return pool.install(|| dispatch(cli.command));
    }
    dispatch(cli.command)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Data(a) => cmd_data(&a),
        Command::Text(a) => cmd_text(&a),
        Command::Geometry(a) => cmd_geometry(&a),
        Command::Grid(a) => cmd_grid(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn outputs(paths: &[Option<&PathBuf>]) -> Vec<PathBuf> {
    paths.iter().flatten().map(|p| (*p).clone()).collect()
}

/// Writes the manifest for a single-shot command whose primary output is `out`.
fn write_manifest<C: Serialize>(
    command: &str,
    seed: u64,
    config: &C,
    out: Option<&PathBuf>,
    extra: &[Option<&PathBuf>],
) -> Result<()> {
    let Some(out) = out else { return Ok(()) };
    let mut all = vec![Some(out)];
    all.extend_from_slice(extra);
    let mut m = RunManifest::new(command, seed, config, outputs(&all))?;
    m.finish();
    m.save(&manifest_path(out))
}

#[derive(Debug, Serialize)]
struct SynthConfig<'a> {
    experiments: &'a [SyntheticExperiment],
}

pub fn synth_experiments(a: &SynthArgs) -> Result<Vec<SyntheticExperiment>> {
    if a.transform == TransformArg::None
        || matches!(a.transform, TransformArg::Dcos | TransformArg::Darc)
    {
        return Err(CliError::usage("synth supports transforms d1, d2 and d3"));
    }
    if a.trials == 0 || a.train < 2 {
        return Err(CliError::usage(
            "need at least one trial and two training points",
        ));
    }
    let transform = a.conformal.spec(a.transform)?.expect("transform present");
    let boundary = Boundary::from(a.boundary);
    let test = a.test.unwrap_or(match boundary {
        Boundary::Sin => 10_000,
        Boundary::Bump => 1_000,
    });
    let options = a.conformal.options(if a.transform == TransformArg::D2 {
        2.0
    } else {
        1.0
    });
    a.sigma
        .iter()
        .map(|&sigma| {
            KernelSpec::gaussian_sigma(sigma)?;
            let svm = a.solver.params(a.c, a.seed);
            svm_check(&svm)?;
            Ok(SyntheticExperiment {
                spec: SyntheticSpec::new(boundary, a.train, test, a.seed),
                trials: a.trials,
                sigma,
                transform,
                conformal: options,
                svm,
            })
        })
        .collect()
}

fn svm_check(p: &SvmParams) -> Result<()> {
    if !(p.c.is_finite() && p.c > 0.0)
        || !(p.tol.is_finite() && p.tol > 0.0)
        || p.max_passes == Some(0)
    {
        return Err(CliError::usage(
            "C and tol must be positive, max passes non-zero",
        ));
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let experiments = synth_experiments(a)?;
    let mut summaries: Vec<SyntheticSummary> = Vec::new();
    for exp in &experiments {
        let s = run_synthetic(exp)?;
        eprintln!(
            "sigma {}: E_d {} ± {:.2} ({} trials, {} failed)",
            s.sigma,
            s.error_decrease
                .map_or("n/a".into(), |e| format!("{e:.3}%")),
            s.ci_half_width,
            s.trials,
            s.failed
        );
        summaries.push(s);
    }
    let transform = experiments[0].transform.name();
    emit(
        a.out.as_deref(),
        &synth_csv(Boundary::from(a.boundary).name(), transform, &summaries)?,
    )?;
    if let Some(j) = &a.json {
        write_json(j, &summaries)?;
    }
    write_manifest(
        "synth",
        a.seed,
        &SynthConfig {
            experiments: &experiments,
        },
        a.out.as_ref(),
        &[a.json.as_ref()],
    )
}

fn cmd_data(a: &DataArgs) -> Result<()> {
    if (a.train == 0 && !a.test_split) || (a.test == 0 && a.test_split) {
        return Err(CliError::usage("requested split is empty"));
    }
    let spec = SyntheticSpec::new(a.boundary.into(), a.train, a.test, a.seed);
    let (train_set, test) = gen_synthetic(&spec, a.trial);
    emit(
        a.out.as_deref(),
        &points_csv(if a.test_split { &test } else { &train_set })?,
    )?;
    write_manifest(
        "data",
        a.seed,
        &(spec, a.trial, a.test_split),
        a.out.as_ref(),
        &[],
    )
}

fn task_spec(kind: TaskKind, positive: &str, negative: Option<&str>) -> Result<TaskSpec> {
    match (kind, negative) {
        (TaskKind::Ovr, None) => Ok(TaskSpec::OneVsRest {
            positive: positive.into(),
        }),
        (TaskKind::Ovr, Some(_)) => Err(CliError::usage("--negative only applies to --task ovo")),
        (TaskKind::Ovo, None) => Err(CliError::usage("--task ovo needs --negative")),
        (TaskKind::Ovo, Some(n)) if n == positive => {
            Err(CliError::usage("positive and negative topics must differ"))
        }
        (TaskKind::Ovo, Some(n)) => Ok(TaskSpec::OneVsOne {
            positive: positive.into(),
            negative: n.into(),
        }),
    }
}

#[derive(Debug, Serialize)]
struct TextReport<'a> {
    row: &'a ResultRow,
    improvement: Option<Improvement>,
    documents: usize,
    vocabulary: usize,
    topic_counts: &'a std::collections::BTreeMap<String, usize>,
    dropped_empty: usize,
    result: &'a ExperimentResult,
}

fn cmd_text(a: &TextArgs) -> Result<()> {
    if matches!(a.transform, TransformArg::D1 | TransformArg::D3) {
        return Err(CliError::usage(
            "text supports transforms none, d2, dcos and darc",
        ));
    }
    let cell = GridCell {
        task: task_spec(a.task, &a.positive, a.negative.as_deref())?,
        kernel: kernel_spec(a.kernel, a.gamma)?,
        transform: a.conformal.spec(a.transform)?,
        c: a.c,
        norm: match a.norm {
            NormArg::L1 => Norm::L1,
            NormArg::L2 => Norm::L2,
        },
        weighting: if a.tfidf {
            Weighting::TfIdf
        } else {
            Weighting::Tf
        },
    };
    let svm = a.solver.params(a.c, a.seed);
    svm_check(&svm)?;
    let config = experiment_config(&cell, a.folds, a.seed, a.conformal.options(1.0), svm);
    config.validate()?;

    let spec = CorpusSpec {
        source_path: corpus_path(a.corpus.corpus.clone())?,
        topics: a.corpus.topics.clone(),
        min_docs: a.corpus.min_docs,
        format: a.corpus.format,
    };
    let corpus = Corpus::load(&spec, &load_stopwords(a.corpus.stopwords.as_deref())?)?;
    eprintln!(
        "{} documents, {} terms",
        corpus.docs.len(),
        corpus.vocab.len()
    );
    if let Some(v) = &a.vocab_out {
        write_atomic(v, corpus.vocab.to_tsv().as_bytes())?;
    }
    let embeddings = corpus.embeddings(cell.weighting, cell.norm)?;
    let (points, labels) = corpus.task(&cell.task, &embeddings)?;
    let result = cross_validate(&config, &points, &labels)?;
    let row = result_row(&cell, &result);
    emit(a.out.as_deref(), &results_csv(std::slice::from_ref(&row))?)?;
    if let Some(j) = &a.json {
        write_json(
            j,
            &TextReport {
                row: &row,
                improvement: result.improvement(),
                documents: corpus.docs.len(),
                vocabulary: corpus.vocab.len(),
                topic_counts: &corpus.raw_counts,
                dropped_empty: corpus.dropped_empty,
                result: &result,
            },
        )?;
    }
    write_manifest(
        "text",
        a.seed,
        &(&spec, &config),
        a.out.as_ref(),
        &[a.json.as_ref(), a.vocab_out.as_ref()],
    )
}

fn dense_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let rows = read_dense_rows(path)?;
    if rows.is_empty() {
        return Err(CliError::data(format!("{} has no points", path.display())));
    }
    Ok(rows)
}

fn cmd_geometry(a: &GeometryArgs) -> Result<()> {
    if matches!(a.transform, TransformArg::D3) {
        return Err(CliError::usage(
            "geometry supports transforms none, d1, d2, dcos and darc",
        ));
    }
    let kernel = kernel_spec(a.kernel, a.gamma)?;
    let transform = a.conformal.spec(a.transform)?;
    let fitted = match (transform, &a.svs) {
        (None, None) => None,
        (None, Some(_)) => return Err(CliError::usage("--svs needs a transform")),
        (Some(_), None) => return Err(CliError::usage("a transform needs --svs")),
        (Some(spec), Some(path)) => {
            let svs: Vec<SparseVector> = dense_points(path)?
                .iter()
                .map(|r| SparseVector::from_dense(r))
                .collect();
            Some(match spec {
                ConformalSpec::D1 { tau } => {
                    let n = svs.len();
                    FittedConformal::d1(tau, svs, vec![1.0; n])?
                }
                _ => FittedConformal::from_support_vectors(spec, svs, a.conformal.options(1.0))?,
            })
        }
    };
    let points = dense_points(&a.points)?;
    let report = geometry_report(&kernel, fitted.as_ref(), &points, a.h)?;
    let mut bytes =
        serde_json::to_vec_pretty(&report).map_err(|e| CliError::data(e.to_string()))?;
    bytes.push(b'\n');
    emit(a.out.as_deref(), &bytes)?;
    write_manifest(
        "geometry",
        0,
        &(&kernel, &transform, a.h, &a.points),
        a.out.as_ref(),
        &[],
    )
}

fn cmd_grid(a: &GridArgs) -> Result<()> {
    let mut cfg = GridConfig::load(&a.config)?;
    if a.corpus.is_some() {
        cfg.corpus = a.corpus.clone();
    }
    let cells = cfg.cells()?;
    cfg.corpus = Some(corpus_path(cfg.corpus.clone())?);
    let mpath = manifest_path(&a.out);
    let mut manifest = if a.resume && mpath.exists() {
        let m = RunManifest::load(&mpath)?;
        let snapshot = serde_json::to_value(&cfg).map_err(|e| CliError::data(e.to_string()))?;
        if m.config != snapshot {
            return Err(CliError::usage(format!(
                "{} was written for a different grid config",
                mpath.display()
            )));
        }
        m
    } else {
        RunManifest::new(
            "grid",
            cfg.seed,
            &cfg,
            outputs(&[Some(&a.out), a.json.as_ref()]),
        )?
    };
    manifest.finished_unix = None;
    manifest.save(&mpath)?;

    let spec = CorpusSpec {
        source_path: cfg.corpus.clone().expect("resolved above"),
        topics: cfg.topics.clone(),
        min_docs: cfg.min_docs,
        format: cfg.format,
    };
    let corpus = Corpus::load(&spec, &load_stopwords(cfg.stopwords.as_deref())?)?;
    let total = cells.len();
    let mut done = cells
        .iter()
        .filter(|c| manifest.completed(&c.key()).is_some())
        .count();
    eprintln!(
        "{} documents, {} terms, {total} cells, {done} already done",
        corpus.docs.len(),
        corpus.vocab.len()
    );
    let outcome = run_grid(
        &cfg,
        &corpus,
        &mut manifest,
        Some(&mpath),
        |cell, record| {
            done += 1;
            let status = match record {
                crate::manifest::CellRecord::Done { .. } => "ok".to_string(),
                crate::manifest::CellRecord::Failed { error } => format!("FAILED: {error}"),
            };
            eprintln!("[{done}/{total}] {} {status}", cell.key());
        },
    )?;
    write_atomic(&a.out, &results_csv(&outcome.rows)?)?;
    if let Some(j) = &a.json {
        write_json(j, &outcome)?;
    }
    for s in &outcome.shares {
        eprintln!(
            "{}: {} cells, accuracy gain {:.1}%, efficiency gain {:.1}%, no gain {:.1}%",
            s.model, s.cells, s.accuracy_gain, s.efficiency_gain, s.no_gain
        );
    }
    if !outcome.failed.is_empty() {
        eprintln!(
            "warning: {} cells failed; rerun with --resume to retry them",
            outcome.failed.len()
        );
    }
    manifest.finish();
    manifest.save(&mpath)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let kernel = kernel_spec(a.kernel, a.gamma)?;
    let transform = a.conformal.spec(a.transform)?;
    let params = a.solver.params(a.c, a.seed);
    svm_check(&params)?;
    let ts: TrainSet = read_labelled(&a.data)?;
    let mut model = train(&ts, &KernelFn::from(kernel), &params)?;
    if let Some(spec) = transform {
        let fitted = FittedConformal::fit(spec, &model, a.conformal.options(1.0))?;
        model = train(
            &ts,
            &KernelFn::from(ConformalKernel::new(kernel, fitted)),
            &params,
        )?;
    }
    let errors = predict_labels(&model, &ts.points)?
        .iter()
        .zip(&ts.labels)
        .filter(|(p, l)| p != l)
        .count();
    eprintln!(
        "{} support vectors, training error {:.5}, KKT violation {:e}",
        model.n_sv(),
        errors as f64 / ts.len() as f64,
        model.kkt_violation
    );
    save_model(&a.out, &model)?;
    write_manifest(
        "train",
        a.seed,
        &(&a.data, &model.kernel, params),
        Some(&a.out),
        &[],
    )
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (points, labels): (Vec<SparseVector>, Option<Vec<i8>>) = if a.labelled {
        let ts = read_labelled(&a.data)?;
        (ts.points, Some(ts.labels))
    } else {
        (
            dense_points(&a.data)?
                .iter()
                .map(|r| SparseVector::from_dense(r))
                .collect(),
            None,
        )
    };
    let scores = model.decision_batch(&points)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| CliError::data(e.to_string());
    w.write_record(["decision", "predicted"]).map_err(wrap)?;
    for s in &scores {
        w.write_record([format!("{s:?}"), confkern_core::svm::sign(*s).to_string()])
            .map_err(wrap)?;
    }
    emit(
        a.out.as_deref(),
        &w.into_inner().map_err(|e| CliError::data(e.to_string()))?,
    )?;
    if let Some(labels) = labels {
        let wrong = scores
            .iter()
            .zip(&labels)
            .filter(|(s, &l)| confkern_core::svm::sign(**s) != l)
            .count();
        eprintln!("error rate {:.5}", wrong as f64 / labels.len() as f64);
    }
    write_manifest("predict", 0, &(&a.model, &a.data), a.out.as_ref(), &[])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("confkern").chain(args.iter().copied()))
    }

    #[test]
    fn synth_defaults_follow_boundary() {
        let Command::Synth(a) = parse(&["synth", "--sigma", "0.3,2"]).unwrap().command else {
            panic!()
        };
        let exps = synth_experiments(&a).unwrap();
        assert_eq!(exps.len(), 2);
        assert_eq!(exps[0].spec.n_test, 10_000);
        assert_eq!(exps[0].conformal.tau_scale, 2.0);
        assert_eq!(exps[1].svm.c, 10.0);
        let Command::Synth(b) = parse(&[
            "synth",
            "--boundary",
            "bump",
            "--transform",
            "d3",
            "--sigma",
            "0.05",
        ])
        .unwrap()
        .command
        else {
            panic!()
        };
        let e = &synth_experiments(&b).unwrap()[0];
        assert_eq!(e.spec.n_test, 1_000);
        assert_eq!(e.transform, ConformalSpec::D3 { kappa: 1.0 });
    }

    #[test]
    fn invalid_combinations_are_usage_errors() {
        let bad = [
            vec!["synth", "--sigma", "1", "--kappa", "1"],
            vec!["synth", "--sigma", "1", "--transform", "d1"],
            vec!["synth", "--sigma", "-1"],
            vec![
                "synth",
                "--sigma",
                "1",
                "--transform",
                "d3",
                "--tau-rule",
                "literal",
            ],
        ];
        for args in bad {
            let Command::Synth(a) = parse(&args).unwrap().command else {
                panic!()
            };
            let err = synth_experiments(&a).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{args:?}: {err}");
        }
        assert!(parse(&["synth"]).is_err());
        assert!(parse(&["synth", "--sigma", "1", "--boundary", "circle"]).is_err());
    }

    #[test]
    fn text_rejects_l2_with_gc() {
        let args = [
            "text",
            "--task",
            "ovr",
            "--positive",
            "earn",
            "--kernel",
            "gc",
            "--gamma",
            "0.001",
            "--c",
            "1000",
            "--norm",
            "l2",
            "--corpus",
            "/nonexistent",
        ];
        let Command::Text(a) = parse(&args).unwrap().command else {
            panic!()
        };
        assert_eq!(cmd_text(&a).unwrap_err().exit_code(), 1);
        let mut ok = args.to_vec();
        ok[12] = "l1";
        let Command::Text(a) = parse(&ok).unwrap().command else {
            panic!()
        };
        assert_eq!(cmd_text(&a).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn task_flags() {
        assert!(task_spec(TaskKind::Ovr, "earn", Some("acq")).is_err());
        assert!(task_spec(TaskKind::Ovo, "earn", None).is_err());
        assert!(task_spec(TaskKind::Ovo, "acq", Some("acq")).is_err());
        assert_eq!(
            task_spec(TaskKind::Ovo, "acq", Some("money-fx"))
                .unwrap()
                .name(),
            "acq vs money-fx"
        );
    }
}
