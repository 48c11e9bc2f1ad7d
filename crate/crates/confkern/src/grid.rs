//! Hyper-parameter grids over the text tasks.
//!
//! A grid is described by a TOML file:
//!
//! ```toml
//! schema_version = 1
//! corpus = "/data/reuters"     # optional; --corpus or CONFKERN_CORPUS otherwise
//! format = "auto"              # auto | categorized | sgml
//! topics = ["earn", "acq", "money-fx", "grain", "crude"]
//! min_docs = 500
//! folds = 20
//! seed = 0
//! gammas = [0.0001, 0.001, 0.01, 0.1]
//! cs = [1, 10, 100, 1000]
//! norms = ["l1", "l2"]
//! weightings = ["tf", "tfidf"]
//!
//! [[tasks]]
//! kind = "all_ovr"             # ovr | ovo | all_ovr | all_ovo
//!
//! [[kernels]]
//! family = "gaussian"          # linear | gaussian | gc
//! transform = { kind = "cosine", m = 3 }
//!
//! [conformal]                  # optional
//! exponent = "two_tau_squared"
//! tau_scale = 1.0
//!
//! [svm]                        # optional; c is taken from `cs`
//! tol = 0.001
//! cache_rows = 512
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use confkern_core::conformal::ConformalOptions;
use confkern_core::datasets::{TaskSpec, DEFAULT_TOPICS};
use confkern_core::eval::{
    cross_validate, enumerate_grid, ExperimentConfig, ExperimentResult, GridCell, Improvement,
    KernelFamily,
};
use confkern_core::text::{Norm, Weighting};
use confkern_core::{ConformalSpec, SparseVector, SvmParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusFormat};
use crate::error::{CliError, Result};
use crate::manifest::{CellRecord, RunManifest};
use crate::output::{model_name, ResultRow};

pub const GRID_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskEntry {
    Ovr {
        positive: String,
    },
    Ovo {
        positive: String,
        negative: String,
    },
    /// Every topic against the rest.
    AllOvr,
    /// Every unordered pair of topics, in topic order.
    AllOvo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEntry {
    pub family: KernelFamily,
    #[serde(default)]
    pub transform: Option<ConformalSpec>,
}

fn default_topics() -> Vec<String> {
    DEFAULT_TOPICS.iter().map(|t| t.to_string()).collect()
}
fn default_min_docs() -> usize {
    500
}
fn default_folds() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub format: CorpusFormat,
    #[serde(default = "default_topics")]
    pub topics: Vec<String>,
    #[serde(default = "default_min_docs")]
    pub min_docs: usize,
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gammas: Vec<f64>,
    pub cs: Vec<f64>,
    pub norms: Vec<Norm>,
    pub weightings: Vec<Weighting>,
    pub tasks: Vec<TaskEntry>,
    pub kernels: Vec<KernelEntry>,
    #[serde(default)]
    pub conformal: ConformalOptions,
    #[serde(default)]
    pub svm: SvmParams,
}

impl GridConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| CliError::usage(format!("grid config: {e}")))?;
        if cfg.schema_version != GRID_SCHEMA {
            return Err(CliError::usage(format!(
                "grid config schema {} is not supported (expected {GRID_SCHEMA})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
    }

    pub fn task_specs(&self) -> Vec<TaskSpec> {
        let mut out = Vec::new();
        for t in &self.tasks {
            match t {
                TaskEntry::Ovr { positive } => out.push(TaskSpec::OneVsRest {
                    positive: positive.clone(),
                }),
                TaskEntry::Ovo { positive, negative } => out.push(TaskSpec::OneVsOne {
                    positive: positive.clone(),
                    negative: negative.clone(),
                }),
                TaskEntry::AllOvr => out.extend(self.topics.iter().map(|p| TaskSpec::OneVsRest {
                    positive: p.clone(),
                })),
                TaskEntry::AllOvo => {
                    for (i, p) in self.topics.iter().enumerate() {
                        for n in &self.topics[i + 1..] {
                            out.push(TaskSpec::OneVsOne {
                                positive: p.clone(),
                                negative: n.clone(),
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// All cells in output order. Duplicate cells are a configuration error.
    pub fn cells(&self) -> Result<Vec<GridCell>> {
        let needs_gamma = self
            .kernels
            .iter()
            .any(|k| k.family != KernelFamily::Linear);
        if needs_gamma && self.gammas.is_empty() {
            return Err(CliError::usage("grid config: gammas is empty"));
        }
        if self.cs.is_empty()
            || self.norms.is_empty()
            || self.weightings.is_empty()
            || self.kernels.is_empty()
        {
            return Err(CliError::usage(
                "grid config: cs, norms, weightings and kernels must be non-empty",
            ));
        }
        let tasks = self.task_specs();
        if tasks.is_empty() {
            return Err(CliError::usage("grid config: no tasks"));
        }
        let kernels: Vec<(KernelFamily, Option<ConformalSpec>)> = self
            .kernels
            .iter()
            .map(|k| (k.family, k.transform))
            .collect();
        let cells = enumerate_grid(
            &tasks,
            &kernels,
            &self.gammas,
            &self.cs,
            &self.norms,
            &self.weightings,
        )?;
        let mut seen = BTreeSet::new();
        for c in &cells {
            if !seen.insert(c.key()) {
                return Err(CliError::usage(format!(
                    "grid config produces cell {} twice",
                    c.key()
                )));
            }
        }
        Ok(cells)
    }
}

pub fn experiment_config(
    cell: &GridCell,
    folds: usize,
    seed: u64,
    conformal: ConformalOptions,
    svm: SvmParams,
) -> ExperimentConfig {
    ExperimentConfig {
        task: cell.task.name(),
        kernel: cell.kernel,
        transform: cell.transform,
        conformal,
        svm: SvmParams { c: cell.c, ..svm },
        folds,
        weighting: cell.weighting,
        norm: cell.norm,
        seed,
    }
}

pub fn result_row(cell: &GridCell, r: &ExperimentResult) -> ResultRow {
    ResultRow::new(
        &cell.kernel,
        cell.transform.as_ref(),
        cell.task.name(),
        cell.norm.name(),
        cell.weighting,
        cell.c,
        r,
    )
}

/// Embeddings of every document for each representation the cells use.
pub struct EmbeddingCache(BTreeMap<(Weighting, Norm), Vec<SparseVector>>);

impl EmbeddingCache {
    pub fn build(corpus: &Corpus, cells: &[GridCell]) -> Result<Self> {
        let keys: BTreeSet<(Weighting, Norm)> =
            cells.iter().map(|c| (c.weighting, c.norm)).collect();
        let mut map = BTreeMap::new();
        for (w, n) in keys {
            map.insert((w, n), corpus.embeddings(w, n)?);
        }
        Ok(Self(map))
    }

    pub fn get(&self, w: Weighting, n: Norm) -> &[SparseVector] {
        &self.0[&(w, n)]
    }
}

pub fn run_cell(
    cfg: &GridConfig,
    corpus: &Corpus,
    cache: &EmbeddingCache,
    cell: &GridCell,
) -> Result<ExperimentResult> {
    let (points, labels) = corpus.task(&cell.task, cache.get(cell.weighting, cell.norm))?;
    let config = experiment_config(cell, cfg.folds, cfg.seed, cfg.conformal, cfg.svm);
    Ok(cross_validate(&config, &points, &labels)?)
}

/// Share of transformed cells per model in each improvement class, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementShare {
    pub model: String,
    pub cells: usize,
    pub accuracy_gain: f64,
    pub efficiency_gain: f64,
    pub no_gain: f64,
    /// Accuracy or efficiency gain.
    pub any_gain: f64,
}

pub fn improvement_shares(records: &[(&GridCell, Improvement)]) -> Vec<ImprovementShare> {
    let mut groups: BTreeMap<String, [usize; 3]> = BTreeMap::new();
    for (cell, imp) in records {
        let g = groups
            .entry(model_name(&cell.kernel, cell.transform.as_ref()))
            .or_default();
        g[match imp {
            Improvement::AccuracyGain => 0,
            Improvement::EfficiencyGain => 1,
            Improvement::NoGain => 2,
        }] += 1;
    }
    groups
        .into_iter()
        .map(|(model, c)| {
            let n: usize = c.iter().sum();
            let pct = |k: usize| 100.0 * k as f64 / n as f64;
            ImprovementShare {
                model,
                cells: n,
                accuracy_gain: pct(c[0]),
                efficiency_gain: pct(c[1]),
                no_gain: pct(c[2]),
                any_gain: pct(c[0] + c[1]),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub rows: Vec<ResultRow>,
    pub failed: Vec<(String, String)>,
    pub shares: Vec<ImprovementShare>,
    /// Cells run by this invocation, as opposed to taken from the manifest.
    pub ran: usize,
}

/// Runs every cell missing from `manifest`, saving the manifest after each
/// completed cell when `save_to` is set. Rows come back in cell order.
pub fn run_grid(
    cfg: &GridConfig,
    corpus: &Corpus,
    manifest: &mut RunManifest,
    save_to: Option<&Path>,
    mut progress: impl FnMut(&GridCell, &CellRecord) + Send,
) -> Result<GridOutcome> {
    let cells = cfg.cells()?;
    let pending: Vec<&GridCell> = cells
        .iter()
        .filter(|c| manifest.completed(&c.key()).is_none())
        .collect();
    let cache = EmbeddingCache::build(corpus, &cells)?;
    let shared = Mutex::new((&mut *manifest, &mut progress));
    let save_errors: Vec<CliError> = pending
        .par_iter()
        .filter_map(|cell| {
            let record = match run_cell(cfg, corpus, &cache, cell) {
                Ok(r) => CellRecord::Done {
                    row: result_row(cell, &r),
                    improvement: r.improvement(),
                },
                Err(e) => CellRecord::Failed {
                    error: e.to_string(),
                },
            };
            let mut guard = shared.lock().unwrap_or_else(|p| p.into_inner());
            let (m, progress) = &mut *guard;
            progress(cell, &record);
            m.cells.insert(cell.key(), record);
            save_to.and_then(|p| m.save(p).err())
        })
        .collect();
    if let Some(e) = save_errors.into_iter().next() {
        return Err(e);
    }

    let mut rows = Vec::new();
    let mut failed = Vec::new();
    let mut improvements = Vec::new();
    for cell in &cells {
        match manifest.cells.get(&cell.key()) {
            Some(CellRecord::Done { row, improvement }) => {
                rows.push(row.clone());
                if let Some(i) = improvement {
                    improvements.push((cell, *i));
                }
            }
            Some(CellRecord::Failed { error }) => failed.push((cell.key(), error.clone())),
            None => failed.push((cell.key(), "not run".into())),
        }
    }
    Ok(GridOutcome {
        rows,
        failed,
        shares: improvement_shares(&improvements),
        ran: pending.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAUSSIAN_GRID: &str = r#"
schema_version = 1
gammas = [0.0001, 0.001, 0.01, 0.1]
cs = [1, 10, 100, 1000]
norms = ["l1", "l2"]
weightings = ["tf", "tfidf"]
[[tasks]]
kind = "all_ovr"
[[kernels]]
family = "gaussian"
transform = { kind = "cosine", m = 3 }
"#;

    #[test]
    fn gaussian_ovr_cardinality() {
        let cfg = GridConfig::parse(GAUSSIAN_GRID).unwrap();
        assert_eq!(cfg.folds, 20);
        assert_eq!(cfg.cells().unwrap().len(), 320);
    }

    #[test]
    fn gc_and_pairs() {
        let text = GAUSSIAN_GRID
            .replace("all_ovr", "all_ovo")
            .replace("\"gaussian\"", "\"gc\"");
        let cfg = GridConfig::parse(&text).unwrap();
        // 10 pairs, L1 only for GC.
        assert_eq!(cfg.cells().unwrap().len(), 10 * 4 * 4 * 2);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            GridConfig::parse("schema_version = 2"),
            Err(CliError::Usage(_))
        ));
        let dup = format!("{GAUSSIAN_GRID}\n[[kernels]]\nfamily = \"gaussian\"\ntransform = {{ kind = \"cosine\", m = 3 }}\n");
        assert!(GridConfig::parse(&dup).unwrap().cells().is_err());
        let unknown = format!("{GAUSSIAN_GRID}\ncolour = 1\n");
        assert!(GridConfig::parse(&unknown).is_err());
    }

    #[test]
    fn shipped_grids() {
        let ovr = GridConfig::parse(include_str!("../../../docs/grids/ovr.toml")).unwrap();
        let ovo = GridConfig::parse(include_str!("../../../docs/grids/ovo.toml")).unwrap();
        // Per task: linear 16, gaussian 64, gc with dcos 32, gc with darc 32.
        assert_eq!(ovr.cells().unwrap().len(), 5 * 144);
        assert_eq!(ovo.cells().unwrap().len(), 10 * 144);
    }

    #[test]
    fn partial_svm_section() {
        let cfg = GridConfig::parse(&format!("{GAUSSIAN_GRID}\n[svm]\ntol = 0.01\n")).unwrap();
        assert_eq!(cfg.svm.tol, 0.01);
        assert_eq!(cfg.svm.cache_rows, 512);
    }
}
