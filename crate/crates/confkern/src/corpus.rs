//! Reuters-21578 ingestion.
//!
//! Two on-disk layouts are understood:
//!
//! * categorized: a `cats.txt` index whose lines read `training/123 earn acq`,
//!   with one plain-text file per document at the listed relative path
//!   (the layout of the NLTK distribution);
//! * SGML: the original `reut2-*.sgm` files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use confkern_core::datasets::{assign_labels, make_task, TaskSpec, DEFAULT_TOPICS};
use confkern_core::text::{embed, Document, Norm, Stopwords, Vocabulary, Weighting};
use confkern_core::SparseVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CORPUS_ENV: &str = "CONFKERN_CORPUS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// `cats.txt` if present, otherwise `*.sgm`.
    #[default]
    Auto,
    Categorized,
    Sgml,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub source_path: PathBuf,
    pub topics: Vec<String>,
    /// Every selected topic must have at least this many documents.
    pub min_docs: usize,
    pub format: CorpusFormat,
}

impl CorpusSpec {
    pub fn new(source_path: impl Into<PathBuf>) -> Self {
        Self {
            source_path: source_path.into(),
            topics: DEFAULT_TOPICS.iter().map(|t| t.to_string()).collect(),
            min_docs: 500,
            format: CorpusFormat::Auto,
        }
    }
}

fn read_latin1(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(bytes.iter().map(|&b| b as char).collect())
}

fn resolve_format(root: &Path, format: CorpusFormat) -> Result<CorpusFormat> {
    if !root.is_dir() {
        return Err(CliError::data(format!(
            "corpus directory {} does not exist",
            root.display()
        )));
    }
    match format {
        CorpusFormat::Auto if root.join("cats.txt").is_file() => Ok(CorpusFormat::Categorized),
        CorpusFormat::Auto if !sgml_files(root)?.is_empty() => Ok(CorpusFormat::Sgml),
        CorpusFormat::Auto => Err(CliError::data(format!(
            "{} has neither cats.txt nor *.sgm files",
            root.display()
        ))),
        f => Ok(f),
    }
}

fn sgml_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| CliError::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("sgm")))
        .collect();
    files.sort();
    Ok(files)
}

/// Reads every categorized document of the corpus, in index order.
pub fn load_documents(root: &Path, format: CorpusFormat) -> Result<Vec<Document>> {
    match resolve_format(root, format)? {
        CorpusFormat::Categorized => load_categorized(root),
        _ => {
            let files = sgml_files(root)?;
            if files.is_empty() {
                return Err(CliError::data(format!(
                    "no *.sgm files in {}",
                    root.display()
                )));
            }
            let parts: Vec<Vec<Document>> = files
                .par_iter()
                .map(|f| parse_sgml(&read_latin1(f)?, f))
                .collect::<Result<_>>()?;
            Ok(parts.into_iter().flatten().collect())
        }
    }
}

fn load_categorized(root: &Path) -> Result<Vec<Document>> {
    let index_path = root.join("cats.txt");
    let index = read_latin1(&index_path)?;
    let mut entries = Vec::new();
    for (n, line) in index.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let topics: Vec<String> = fields.map(str::to_string).collect();
        if topics.is_empty() {
            return Err(CliError::data(format!(
                "{}:{}: document {id} has no category",
                index_path.display(),
                n + 1
            )));
        }
        entries.push((id.to_string(), topics));
    }
    entries
        .into_par_iter()
        .map(|(id, topics)| {
            let text = read_latin1(&root.join(&id))?;
            Ok(Document::new(id, text, topics))
        })
        .collect()
}

fn between<'a>(s: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = s.find(open)? + open.len();
    let end = s[start..].find(close)? + start;
    Some(&s[start..end])
}

fn attribute<'a>(tag: &'a str, name: &str) -> Option<&'a str> {
    between(tag, &format!("{name}=\""), "\"")
}

fn strip_tags(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_tag = false;
    for c in s.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => {
                in_tag = false;
                out.push(' ');
            }
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    out.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&")
        .replace("&#3;", " ")
}

/// Parses one SGML file. Documents outside the train/test splits or without
/// topics are skipped.
pub fn parse_sgml(text: &str, origin: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("<REUTERS") {
        let block_end = rest[start..].find("</REUTERS>").ok_or_else(|| {
            CliError::data(format!(
                "{}: unterminated <REUTERS> element",
                origin.display()
            ))
        })?;
        let block = &rest[start..start + block_end];
        rest = &rest[start + block_end + "</REUTERS>".len()..];

        let tag = &block[..block.find('>').unwrap_or(block.len())];
        let id = attribute(tag, "NEWID").ok_or_else(|| {
            CliError::data(format!("{}: <REUTERS> without NEWID", origin.display()))
        })?;
        if attribute(tag, "TOPICS") != Some("YES")
            || attribute(tag, "LEWISSPLIT") == Some("NOT-USED")
        {
            continue;
        }
        let topics: Vec<String> = between(block, "<TOPICS>", "</TOPICS>")
            .map(|t| {
                t.split("<D>")
                    .filter_map(|d| d.split("</D>").next())
                    .map(str::trim)
                    .filter(|d| !d.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default();
        if topics.is_empty() {
            continue;
        }
        let body = between(block, "<TEXT", "</TEXT>")
            .map(|t| &t[t.find('>').map_or(0, |i| i + 1)..])
            .unwrap_or("");
        docs.push(Document::new(
            format!("newid/{id}"),
            strip_tags(body),
            topics,
        ));
    }
    Ok(docs)
}

/// Number of documents listing each topic, before any filtering.
pub fn topic_counts(docs: &[Document], topics: &[String]) -> BTreeMap<String, usize> {
    topics
        .iter()
        .map(|t| {
            (
                t.clone(),
                docs.iter().filter(|d| d.topics.contains(t)).count(),
            )
        })
        .collect()
}

/// Labelled, preprocessed documents of the selected topics together with
/// their vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub docs: Vec<Document>,
    pub vocab: Vocabulary,
    pub raw_counts: BTreeMap<String, usize>,
    /// Documents of a selected topic left with no tokens.
    pub dropped_empty: usize,
}

impl Corpus {
    pub fn prepare(
        mut docs: Vec<Document>,
        topics: &[String],
        min_docs: usize,
        stopwords: &Stopwords,
    ) -> Result<Self> {
        let raw_counts = topic_counts(&docs, topics);
        for (t, &n) in &raw_counts {
            if n < min_docs {
                return Err(CliError::data(format!(
                    "topic {t} has {n} documents, fewer than {min_docs}"
                )));
            }
        }
        let selected: Vec<&str> = topics.iter().map(String::as_str).collect();
        assign_labels(&mut docs, &selected);
        docs.retain(|d| d.label.is_some());
        docs.par_iter_mut().for_each(|d| d.preprocess(stopwords));
        let before = docs.len();
        docs.retain(|d| !d.tokens.is_empty());
        let dropped_empty = before - docs.len();
        let vocab = Vocabulary::from_documents(&docs);
        Ok(Self {
            docs,
            vocab,
            raw_counts,
            dropped_empty,
        })
    }

    pub fn load(spec: &CorpusSpec, stopwords: &Stopwords) -> Result<Self> {
        let docs = load_documents(&spec.source_path, spec.format)?;
        Self::prepare(docs, &spec.topics, spec.min_docs, stopwords)
    }

    pub fn embeddings(&self, weighting: Weighting, norm: Norm) -> Result<Vec<SparseVector>> {
        Ok(embed(&self.docs, &self.vocab, weighting, norm)?)
    }

    /// Points and labels of a binary task drawn from precomputed embeddings.
    pub fn task(
        &self,
        task: &TaskSpec,
        embeddings: &[SparseVector],
    ) -> Result<(Vec<SparseVector>, Vec<i8>)> {
        for t in task_topics(task) {
            if !self.raw_counts.contains_key(t) {
                return Err(CliError::usage(format!(
                    "topic {t} is not among the selected topics"
                )));
            }
        }
        let (idx, labels) = make_task(&self.docs, task)?;
        Ok((idx.iter().map(|&i| embeddings[i].clone()).collect(), labels))
    }
}

fn task_topics(task: &TaskSpec) -> Vec<&str> {
    match task {
        TaskSpec::OneVsRest { positive } => vec![positive],
        TaskSpec::OneVsOne { positive, negative } => vec![positive, negative],
    }
}

/// Loads a stopword list, one word per line.
pub fn load_stopwords(path: Option<&Path>) -> Result<Stopwords> {
    match path {
        None => Ok(Stopwords::english()),
        Some(p) => Ok(Stopwords::parse(
            &fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        )),
    }
}

/// Corpus directory from the flag, falling back to `CONFKERN_CORPUS`.
pub fn corpus_path(flag: Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| std::env::var_os(CORPUS_ENV).map(PathBuf::from))
        .ok_or_else(|| {
            CliError::data(format!(
                "no corpus given: pass --corpus or set {CORPUS_ENV}"
            ))
        })
}
