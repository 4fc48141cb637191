//! Batch retrieval over a snapshot with BM25, TF-IDF, Dirichlet-smoothed
//! query likelihood and a boolean matching coefficient.
//!
//! Every scorer ranks by score descending, breaks ties by ascending doc id
//! and truncates to the requested depth.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::{Run, Topic};
use crate::index::IndexSnapshot;
use crate::textproc::Preprocessor;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;
pub const DEFAULT_MU: f64 = 1000.0;

/// Runs with fewer topics than this are flagged; batch evaluation assumes at
/// least this many queries.
pub const MIN_BATCH_TOPICS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("snapshot contains no documents")]
    EmptySnapshot,
    #[error("no topics to run")]
    NoTopics,
    #[error("unknown retrieval model {0:?}")]
    UnknownModel(String),
    #[error("invalid parameter {name}={value} for {model}")]
    InvalidParam { model: String, name: String, value: f64 },
    #[error("unknown parameter {name:?} for {model}")]
    UnknownParam { model: String, name: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_id", rename_all = "snake_case")]
pub enum ModelSpec {
    Bm25 { k1: f64, b: f64 },
    Boolean,
    DirichletLm { mu: f64 },
    Tfidf,
}

impl ModelSpec {
    pub const IDS: [&'static str; 4] = ["bm25", "boolean", "dirichlet_lm", "tfidf"];

    pub fn bm25() -> Self {
        Self::Bm25 {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }

    pub fn dirichlet() -> Self {
        Self::DirichletLm { mu: DEFAULT_MU }
    }

    /// The four models with default parameters.
    pub fn defaults() -> Vec<ModelSpec> {
        vec![Self::bm25(), Self::Boolean, Self::dirichlet(), Self::Tfidf]
    }

    /// Builds a model from its id, filling unspecified parameters with defaults.
    pub fn from_id(model_id: &str, params: &BTreeMap<String, f64>) -> Result<Self, RetrievalError> {
        let allowed: &[&str] = match model_id {
            "bm25" => &["k1", "b"],
            "dirichlet_lm" => &["mu"],
            "boolean" | "tfidf" => &[],
            other => return Err(RetrievalError::UnknownModel(other.to_string())),
        };
        if let Some(name) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(RetrievalError::UnknownParam {
                model: model_id.to_string(),
                name: name.clone(),
            });
        }
        let get = |name: &str, default: f64| params.get(name).copied().unwrap_or(default);
        let spec = match model_id {
            "bm25" => Self::Bm25 {
                k1: get("k1", DEFAULT_K1),
                b: get("b", DEFAULT_B),
            },
            "dirichlet_lm" => Self::DirichletLm {
                mu: get("mu", DEFAULT_MU),
            },
            "boolean" => Self::Boolean,
            _ => Self::Tfidf,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |name: &str, value: f64| RetrievalError::InvalidParam {
            model: self.id().to_string(),
            name: name.to_string(),
            value,
        };
        match *self {
            Self::Bm25 { k1, b } => {
                if !(k1 >= 0.0 && k1.is_finite()) {
                    return Err(bad("k1", k1));
                }
                if !(0.0..=1.0).contains(&b) {
                    return Err(bad("b", b));
                }
            }
            Self::DirichletLm { mu } => {
                if !(mu > 0.0 && mu.is_finite()) {
                    return Err(bad("mu", mu));
                }
            }
            Self::Boolean | Self::Tfidf => {}
        }
        Ok(())
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Bm25 { .. } => "bm25",
            Self::Boolean => "boolean",
            Self::DirichletLm { .. } => "dirichlet_lm",
            Self::Tfidf => "tfidf",
        }
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        match *self {
            Self::Bm25 { k1, b } => [("b".to_string(), b), ("k1".to_string(), k1)].into(),
            Self::DirichletLm { mu } => [("mu".to_string(), mu)].into(),
            Self::Boolean | Self::Tfidf => BTreeMap::new(),
        }
    }

    /// Id plus parameters, e.g. `bm25[b=0.75,k1=1.2]`; distinguishes two
    /// configurations of the same model.
    pub fn label(&self) -> String {
        let params = self.params();
        if params.is_empty() {
            return self.id().to_string();
        }
        let inner: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}[{}]", self.id(), inner.join(","))
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Which topic fields form the query text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryFields {
    #[default]
    Title,
    TitleDescription,
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub topic_id: String,
    /// Processed terms, duplicates preserved.
    pub terms: Vec<String>,
}

impl Query {
    pub fn from_topic(topic: &Topic, pre: &Preprocessor, fields: QueryFields) -> Self {
        let mut text = topic.title.clone();
        let mut append = |s: &Option<String>| {
            if let Some(s) = s {
                text.push(' ');
                text.push_str(s);
            }
        };
        match fields {
            QueryFields::Title => {}
            QueryFields::TitleDescription => append(&topic.description),
            QueryFields::All => {
                append(&topic.description);
                append(&topic.narrative);
            }
        }
        Self {
            topic_id: topic.topic_id.clone(),
            terms: pre.terms(&text),
        }
    }

    fn unique_terms(&self) -> BTreeSet<&str> {
        self.terms.iter().map(String::as_str).collect()
    }

    /// Unique terms with their multiplicity in the query.
    fn term_counts(&self) -> BTreeMap<&str, u32> {
        let mut counts = BTreeMap::new();
        for t in &self.terms {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: Arc<str>,
    pub score: f64,
}

fn ensure_nonempty(snapshot: &IndexSnapshot) -> Result<(), RetrievalError> {
    if snapshot.doc_count() == 0 {
        Err(RetrievalError::EmptySnapshot)
    } else {
        Ok(())
    }
}

/// Term frequency of `term` in `doc_id`, by binary search in the sorted postings.
fn tf(snapshot: &IndexSnapshot, term: &str, doc_id: &str) -> u32 {
    let list = snapshot.postings(term);
    list.binary_search_by(|p| p.doc_id.as_ref().cmp(doc_id))
        .map(|i| list[i].tf)
        .unwrap_or(0)
}

/// Documents containing at least one of `terms`, in doc id order.
fn candidates<'a>(snapshot: &'a IndexSnapshot, terms: impl IntoIterator<Item = &'a str>) -> BTreeSet<Arc<str>> {
    terms
        .into_iter()
        .flat_map(|t| snapshot.postings(t).iter().map(|p| Arc::clone(&p.doc_id)))
        .collect()
}

fn rank(mut scored: Vec<ScoredDoc>, depth: usize) -> Vec<ScoredDoc> {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
    scored.truncate(depth);
    scored
}

pub(crate) fn bm25_scaled(
    query: &Query,
    snapshot: &IndexSnapshot,
    k1: f64,
    b: f64,
    idf_scale: f64,
    depth: usize,
) -> Result<Vec<ScoredDoc>, RetrievalError> {
    ensure_nonempty(snapshot)?;
    let n = snapshot.doc_count() as f64;
    let avgdl = snapshot.avg_doc_len();
    let weighted: Vec<(&str, f64)> = query
        .unique_terms()
        .into_iter()
        .filter_map(|t| {
            let df = snapshot.stats(t).df as f64;
            (df > 0.0).then(|| (t, idf_scale * (1.0 + (n - df + 0.5) / (df + 0.5)).ln()))
        })
        .collect();
    let scored = candidates(snapshot, weighted.iter().map(|(t, _)| *t))
        .into_iter()
        .map(|doc| {
            let len = snapshot.doc_len(&doc).unwrap_or(0) as f64;
            let norm = if avgdl > 0.0 { len / avgdl } else { 0.0 };
            let score = weighted
                .iter()
                .map(|&(t, idf)| {
                    let f = tf(snapshot, t, &doc) as f64;
                    idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * norm))
                })
                .sum();
            ScoredDoc { doc_id: doc, score }
        })
        .filter(|d| d.score != 0.0)
        .collect();
    Ok(rank(scored, depth))
}

/// Okapi BM25 with idf `ln(1 + (N - df + 0.5) / (df + 0.5))`, summed over
/// unique query terms.
pub fn score_bm25(
    query: &Query,
    snapshot: &IndexSnapshot,
    k1: f64,
    b: f64,
    depth: usize,
) -> Result<Vec<ScoredDoc>, RetrievalError> {
    bm25_scaled(query, snapshot, k1, b, 1.0, depth)
}

/// `Σ tf · ln(N / df)` over unique query terms present in the index.
pub fn score_tfidf(
    query: &Query,
    snapshot: &IndexSnapshot,
    depth: usize,
) -> Result<Vec<ScoredDoc>, RetrievalError> {
    ensure_nonempty(snapshot)?;
    let n = snapshot.doc_count() as f64;
    let weighted: Vec<(&str, f64)> = query
        .unique_terms()
        .into_iter()
        .filter_map(|t| {
            let df = snapshot.stats(t).df as f64;
            (df > 0.0).then(|| (t, (n / df).ln()))
        })
        .collect();
    let scored = candidates(snapshot, weighted.iter().map(|(t, _)| *t))
        .into_iter()
        .map(|doc| {
            let score = weighted
                .iter()
                .map(|&(t, idf)| tf(snapshot, t, &doc) as f64 * idf)
                .sum();
            ScoredDoc { doc_id: doc, score }
        })
        .filter(|d| d.score != 0.0)
        .collect();
    Ok(rank(scored, depth))
}

/// Query likelihood with Dirichlet smoothing. Every query term occurrence
/// contributes `ln((tf + mu·cf/|C|) / (len + mu))`; terms unseen in the
/// collection are skipped and only documents matching some term are scored.
pub fn score_dirichlet_lm(
    query: &Query,
    snapshot: &IndexSnapshot,
    mu: f64,
    depth: usize,
) -> Result<Vec<ScoredDoc>, RetrievalError> {
    ensure_nonempty(snapshot)?;
    let total = snapshot.total_tokens() as f64;
    let weighted: Vec<(&str, f64, f64)> = query
        .term_counts()
        .into_iter()
        .filter_map(|(t, count)| {
            let cf = snapshot.stats(t).cf as f64;
            (cf > 0.0).then(|| (t, count as f64, mu * cf / total))
        })
        .collect();
    let scored = candidates(snapshot, weighted.iter().map(|(t, _, _)| *t))
        .into_iter()
        .map(|doc| {
            let len = snapshot.doc_len(&doc).unwrap_or(0) as f64;
            let score = weighted
                .iter()
                .map(|&(t, count, smoothed)| {
                    count * ((tf(snapshot, t, &doc) as f64 + smoothed) / (len + mu)).ln()
                })
                .sum();
            ScoredDoc { doc_id: doc, score }
        })
        .collect();
    Ok(rank(scored, depth))
}

/// Fraction of the unique query terms that occur in the document.
pub fn score_boolean(
    query: &Query,
    snapshot: &IndexSnapshot,
    depth: usize,
) -> Result<Vec<ScoredDoc>, RetrievalError> {
    ensure_nonempty(snapshot)?;
    let unique = query.unique_terms();
    if unique.is_empty() {
        return Ok(Vec::new());
    }
    let denom = unique.len() as f64;
    let scored = candidates(snapshot, unique.iter().copied())
        .into_iter()
        .map(|doc| {
            let matched = unique.iter().filter(|t| tf(snapshot, t, &doc) > 0).count();
            ScoredDoc {
                doc_id: doc,
                score: matched as f64 / denom,
            }
        })
        .collect();
    Ok(rank(scored, depth))
}

pub fn score(
    query: &Query,
    snapshot: &IndexSnapshot,
    model: &ModelSpec,
    depth: usize,
) -> Result<Vec<ScoredDoc>, RetrievalError> {
    match *model {
        ModelSpec::Bm25 { k1, b } => score_bm25(query, snapshot, k1, b, depth),
        ModelSpec::Boolean => score_boolean(query, snapshot, depth),
        ModelSpec::DirichletLm { mu } => score_dirichlet_lm(query, snapshot, mu, depth),
        ModelSpec::Tfidf => score_tfidf(query, snapshot, depth),
    }
}

/// Run tag: `stoplist.stemmer.model.vK`.
pub fn run_tag(pre: &Preprocessor, model: &ModelSpec, version: u32) -> String {
    format!("{}.{}.v{}", pre.id(), model.id(), version)
}

/// Runs every topic against the snapshot. Topics whose query is empty after
/// preprocessing, or that retrieve nothing, get an empty list.
pub fn run_batch(
    topics: &[Topic],
    pre: &Preprocessor,
    model: &ModelSpec,
    snapshot: &IndexSnapshot,
    depth: usize,
    fields: QueryFields,
) -> Result<Run, RetrievalError> {
    if topics.is_empty() {
        return Err(RetrievalError::NoTopics);
    }
    ensure_nonempty(snapshot)?;
    model.validate()?;
    if topics.len() < MIN_BATCH_TOPICS {
        tracing::warn!(
            topics = topics.len(),
            "batch has fewer than {MIN_BATCH_TOPICS} topics"
        );
    }
    let seen: HashSet<&str> = topics.iter().map(|t| t.topic_id.as_str()).collect();
    debug_assert_eq!(seen.len(), topics.len());

    let results: Vec<(String, Vec<ScoredDoc>)> = topics
        .par_iter()
        .map(|topic| {
            let query = Query::from_topic(topic, pre, fields);
            score(&query, snapshot, model, depth).map(|docs| (query.topic_id, docs))
        })
        .collect::<Result<_, _>>()?;

    let mut run = Run::new(run_tag(pre, model, snapshot.version()), snapshot.version());
    for (topic_id, docs) in results {
        run.push_topic(
            topic_id,
            docs.into_iter().map(|d| (d.doc_id.to_string(), d.score)).collect(),
        );
    }
    Ok(run)
}
