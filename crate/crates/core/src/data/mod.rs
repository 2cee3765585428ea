//! Corpus representation, the PUE1 embedding file format, SCAR sampling,
//! synthetic PU task generation and transductive task assembly.
//!
//! Ground-truth labels travel with [`EmbeddedDoc`] so that experiments can be
//! scored, but training code only ever sees a [`PuView`], which carries
//! vectors and LP/U membership and nothing else.

mod pue1;
mod sampling;
mod tokens;

pub use pue1::{load_corpus, save_corpus};
pub use sampling::{
    gen_synthetic, gen_synthetic_task, make_transductive_task, scar_sample, SynthSpec,
};
pub use tokens::{load_tokens, save_tokens};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("record {index}: {message}")]
    Record { index: usize, message: String },
    #[error("trailing {0} bytes after last record")]
    Trailing(usize),
    #[error("tokens file line {line}: {message}")]
    Tokens { line: usize, message: String },
    #[error("invalid document {index} ({id:?}): {message}")]
    InvalidDoc {
        index: usize,
        id: String,
        message: String,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need {needed} positive documents, corpus has {available}")]
    InsufficientPositives { needed: usize, available: usize },
    #[error("task does not match corpus: {0}")]
    TaskMismatch(String),
}

/// Ground-truth class of a document, used only by evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    Positive,
    Negative,
}

impl Truth {
    pub fn is_positive(self) -> bool {
        matches!(self, Truth::Positive)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedDoc {
    pub id: String,
    pub vector: Vec<f32>,
    pub truth: Option<Truth>,
    pub tokens: Option<Vec<String>>,
}

impl EmbeddedDoc {
    pub fn new(id: impl Into<String>, vector: Vec<f32>, truth: Option<Truth>) -> Self {
        Self {
            id: id.into(),
            vector,
            truth,
            tokens: None,
        }
    }
}

/// An ordered, validated collection of documents sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    dim: usize,
    docs: Vec<EmbeddedDoc>,
}

impl Corpus {
    pub fn new(dim: usize, docs: Vec<EmbeddedDoc>) -> Result<Self, DataError> {
        if dim == 0 {
            return Err(DataError::InvalidParameter("dimension must be >= 1".into()));
        }
        let mut seen = HashSet::with_capacity(docs.len());
        for (index, doc) in docs.iter().enumerate() {
            validate_doc(index, doc, dim)?;
            if !seen.insert(doc.id.as_str()) {
                return Err(DataError::InvalidDoc {
                    index,
                    id: doc.id.clone(),
                    message: "duplicate id".into(),
                });
            }
        }
        Ok(Self { dim, docs })
    }

    pub fn empty(dim: usize) -> Result<Self, DataError> {
        Self::new(dim, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[EmbeddedDoc] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddedDoc> {
        self.docs.iter().find(|d| d.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    /// Attaches BM25 token lists; every id in `tokens` must exist in the corpus.
    pub fn attach_tokens(
        &mut self,
        mut tokens: HashMap<String, Vec<String>>,
    ) -> Result<(), DataError> {
        let known: HashSet<&str> = self.ids().collect();
        if let Some(unknown) = tokens.keys().find(|k| !known.contains(k.as_str())) {
            return Err(DataError::TaskMismatch(format!(
                "tokens given for unknown id {unknown:?}"
            )));
        }
        for doc in &mut self.docs {
            if let Some(t) = tokens.remove(&doc.id) {
                doc.tokens = Some(t);
            }
        }
        Ok(())
    }

    /// Keeps only documents whose ids are in `keep`, preserving order.
    pub fn subset(&self, keep: &BTreeSet<String>) -> Corpus {
        Corpus {
            dim: self.dim,
            docs: self
                .docs
                .iter()
                .filter(|d| keep.contains(&d.id))
                .cloned()
                .collect(),
        }
    }

    /// Concatenates two corpora of the same dimension.
    pub fn concat(&self, other: &Corpus) -> Result<Corpus, DataError> {
        if self.dim != other.dim {
            return Err(DataError::InvalidParameter(format!(
                "cannot concatenate corpora of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        let mut docs = self.docs.clone();
        docs.extend(other.docs.iter().cloned());
        Corpus::new(self.dim, docs)
    }
}

fn validate_doc(index: usize, doc: &EmbeddedDoc, dim: usize) -> Result<(), DataError> {
    let fail = |message: String| DataError::InvalidDoc {
        index,
        id: doc.id.clone(),
        message,
    };
    if doc.id.is_empty() {
        return Err(fail("empty id".into()));
    }
    if doc.id.len() > u16::MAX as usize {
        return Err(fail(format!("id longer than {} bytes", u16::MAX)));
    }
    if doc.vector.len() != dim {
        return Err(fail(format!(
            "vector has {} entries, corpus dimension is {dim}",
            doc.vector.len()
        )));
    }
    if let Some(j) = doc.vector.iter().position(|v| !v.is_finite()) {
        return Err(fail(format!("non-finite entry at position {j}")));
    }
    Ok(())
}

/// A transductive PU task: labelled positives and the unlabelled remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PuTask {
    pub lp_ids: BTreeSet<String>,
    pub u_ids: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_frequency_hint: Option<f64>,
}

impl PuTask {
    pub fn new(lp_ids: BTreeSet<String>, u_ids: BTreeSet<String>) -> Result<Self, DataError> {
        let task = Self {
            lp_ids,
            u_ids,
            label_frequency_hint: None,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.lp_ids.is_empty() {
            return Err(DataError::TaskMismatch(
                "task has no labelled positives".into(),
            ));
        }
        if let Some(id) = self.lp_ids.intersection(&self.u_ids).next() {
            return Err(DataError::TaskMismatch(format!(
                "id {id:?} is both LP and U"
            )));
        }
        if let Some(c) = self.label_frequency_hint {
            if !(c > 0.0 && c <= 1.0) {
                return Err(DataError::TaskMismatch(format!(
                    "label frequency hint {c} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Label status `s`: true iff the id is a labelled positive.
    pub fn is_labelled(&self, id: &str) -> bool {
        self.lp_ids.contains(id)
    }
}

/// What training code is allowed to see: vectors and LP/U membership.
///
/// Rows of `lp` follow corpus order restricted to LP, likewise for `u`.
#[derive(Debug, Clone)]
pub struct PuView {
    pub lp_ids: Vec<String>,
    pub u_ids: Vec<String>,
    pub lp: Array2<f64>,
    pub u: Array2<f64>,
    pub lp_tokens: Option<Vec<Vec<String>>>,
    pub u_tokens: Option<Vec<Vec<String>>>,
}

impl PuView {
    /// Builds the view; LP ∪ U must cover exactly the corpus.
    pub fn new(corpus: &Corpus, task: &PuTask) -> Result<Self, DataError> {
        task.validate()?;
        if task.lp_ids.len() + task.u_ids.len() != corpus.len() {
            return Err(DataError::TaskMismatch(format!(
                "|LP| + |U| = {} but corpus has {} documents",
                task.lp_ids.len() + task.u_ids.len(),
                corpus.len()
            )));
        }
        let dim = corpus.dim();
        let mut lp_ids = Vec::with_capacity(task.lp_ids.len());
        let mut u_ids = Vec::with_capacity(task.u_ids.len());
        let mut lp_rows = Vec::with_capacity(task.lp_ids.len() * dim);
        let mut u_rows = Vec::with_capacity(task.u_ids.len() * dim);
        let mut lp_tokens = Vec::new();
        let mut u_tokens = Vec::new();
        let mut tokens_complete = true;
        for doc in corpus.docs() {
            let (ids, rows, toks) = if task.lp_ids.contains(&doc.id) {
                (&mut lp_ids, &mut lp_rows, &mut lp_tokens)
            } else if task.u_ids.contains(&doc.id) {
                (&mut u_ids, &mut u_rows, &mut u_tokens)
            } else {
                return Err(DataError::TaskMismatch(format!(
                    "corpus document {:?} is in neither LP nor U",
                    doc.id
                )));
            };
            ids.push(doc.id.clone());
            rows.extend(doc.vector.iter().map(|&v| v as f64));
            match &doc.tokens {
                Some(t) => toks.push(t.clone()),
                None => tokens_complete = false,
            }
        }
        let lp = Array2::from_shape_vec((lp_ids.len(), dim), lp_rows).expect("row-major shape");
        let u = Array2::from_shape_vec((u_ids.len(), dim), u_rows).expect("row-major shape");
        let (lp_tokens, u_tokens) = if tokens_complete {
            (Some(lp_tokens), Some(u_tokens))
        } else {
            (None, None)
        };
        Ok(Self {
            lp_ids,
            u_ids,
            lp,
            u,
            lp_tokens,
            u_tokens,
        })
    }

    pub fn dim(&self) -> usize {
        self.lp.ncols()
    }

    /// The whole training set X = LP ∪ U, LP rows first.
    pub fn all(&self) -> Array2<f64> {
        ndarray::concatenate(ndarray::Axis(0), &[self.lp.view(), self.u.view()])
            .expect("LP and U share a dimension")
    }
}
