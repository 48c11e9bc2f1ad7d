//! Document preprocessing and TF / TF-IDF embedding.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sparse::SparseVector;

mod porter;

pub use porter::stem as porter_stem;

/// Tokens shorter than this are dropped before stemming.
pub const MIN_TOKEN_LEN: usize = 3;

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Stopwords(BTreeSet<String>);

impl Stopwords {
    /// The bundled 179-word English list.
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    /// One term per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.to_lowercase())
                .collect(),
        )
    }

    pub fn contains(&self, w: &str) -> bool {
        self.0.contains(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Stopwords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Lowercase, split on anything that is not an ASCII letter, drop stopwords
/// and tokens shorter than three letters, then Porter-stem.
pub fn preprocess(raw: &str, stopwords: &Stopwords) -> Vec<String> {
    raw.split(|c: char| !c.is_ascii_alphabetic())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
        .filter(|t| !stopwords.contains(t) && t.len() >= MIN_TOKEN_LEN)
        .map(|t| porter_stem(&t))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Document {
    pub id: String,
    pub raw_text: String,
    pub tokens: Vec<String>,
    /// Single assigned topic.
    pub label: Option<String>,
    /// Every topic the source lists, in source order.
    pub topics: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>, topics: Vec<String>) -> Self {
        Self {
            id: id.into(),
            raw_text: raw_text.into(),
            tokens: Vec::new(),
            label: None,
            topics,
        }
    }

    pub fn preprocess(&mut self, stopwords: &Stopwords) {
        self.tokens = preprocess(&self.raw_text, stopwords);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Weighting {
    Tf,
    TfIdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    pub fn name(self) -> &'static str {
        match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
        }
    }
}

/// Term index with document frequencies. Indices follow lexicographic term
/// order, so the same documents always give the same vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vocabulary {
    index: BTreeMap<String, u32>,
    terms: Vec<String>,
    df: Vec<u32>,
    n_docs: usize,
}

impl Vocabulary {
    pub fn build<'a, I, D>(docs: I) -> Self
    where
        I: IntoIterator<Item = D>,
        D: IntoIterator<Item = &'a String>,
    {
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            let unique: BTreeSet<&String> = doc.into_iter().collect();
            for t in unique {
                *counts.entry(t.clone()).or_insert(0) += 1;
            }
        }
        let mut index = BTreeMap::new();
        let mut terms = Vec::with_capacity(counts.len());
        let mut df = Vec::with_capacity(counts.len());
        for (i, (term, count)) in counts.into_iter().enumerate() {
            index.insert(term.clone(), i as u32);
            terms.push(term);
            df.push(count);
        }
        Self {
            index,
            terms,
            df,
            n_docs,
        }
    }

    pub fn from_documents(docs: &[Document]) -> Self {
        Self::build(docs.iter().map(|d| d.tokens.iter()))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).map(|&i| i as usize)
    }

    pub fn term(&self, i: usize) -> &str {
        &self.terms[i]
    }

    pub fn df(&self, i: usize) -> usize {
        self.df[i] as usize
    }

    pub fn idf(&self, i: usize) -> f64 {
        idf(self.n_docs, self.df(i))
    }

    /// `term\tindex\tdf` lines, with a header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("term\tindex\tdf\n");
        for (i, t) in self.terms.iter().enumerate() {
            out.push_str(t);
            out.push('\t');
            out.push_str(&i.to_string());
            out.push('\t');
            out.push_str(&self.df[i].to_string());
            out.push('\n');
        }
        out
    }
}

/// Smoothed inverse document frequency `ln((N+1)/(df+1)) + 1`.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    libm::log((n_docs as f64 + 1.0) / (df as f64 + 1.0)) + 1.0
}

/// Embeds one token list. Out-of-vocabulary tokens are ignored; a document
/// left with no known term is an error. L¹ output is flagged as a simplex
/// point.
pub fn embed_tokens(
    id: &str,
    tokens: &[String],
    vocab: &Vocabulary,
    weighting: Weighting,
    norm: Norm,
) -> Result<SparseVector> {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.get(t) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyDocument(id.to_string()));
    }
    let entries: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(i, c)| match weighting {
            Weighting::Tf => (i, c),
            Weighting::TfIdf => (i, c * vocab.idf(i)),
        })
        .collect();
    let raw = SparseVector::new(vocab.len(), entries)?;
    match norm {
        Norm::L1 => raw.l1_normalized(),
        Norm::L2 => raw.l2_normalized(),
    }
}

pub fn embed(
    docs: &[Document],
    vocab: &Vocabulary,
    weighting: Weighting,
    norm: Norm,
) -> Result<Vec<SparseVector>> {
    docs.iter()
        .map(|d| embed_tokens(&d.id, &d.tokens, vocab, weighting, norm))
        .collect()
}
