//! Effectiveness measures over runs and qrels, following trec_eval's
//! conventions: unjudged documents are non-relevant, a document is relevant
//! when its grade is positive, and topics without relevant documents are
//! left out of means.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::{compare_topic_ids, Qrels, Run};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("topic has no relevant documents")]
    NoRelevantDocs,
    #[error("no topic of the run has relevance judgments")]
    NoJudgedTopics,
    #[error("unknown measure {0:?}")]
    UnknownMeasure(String),
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Measure {
    Ap,
    Ndcg,
    NdcgAt(usize),
    PAt(usize),
    Rprec,
    RecipRank,
}

impl Measure {
    pub fn cutoff(self) -> Option<usize> {
        match self {
            Self::NdcgAt(k) | Self::PAt(k) => Some(k),
            _ => None,
        }
    }

    /// Whether the measure is undefined for topics without relevant documents.
    pub fn needs_relevant(self) -> bool {
        matches!(self, Self::Ap | Self::Ndcg | Self::NdcgAt(_) | Self::Rprec)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ap => f.write_str("ap"),
            Self::Ndcg => f.write_str("ndcg"),
            Self::NdcgAt(k) => write!(f, "ndcg_cut_{k}"),
            Self::PAt(k) => write!(f, "p_{k}"),
            Self::Rprec => f.write_str("rprec"),
            Self::RecipRank => f.write_str("recip_rank"),
        }
    }
}

impl FromStr for Measure {
    type Err = EvalError;

    /// Accepts the canonical ids (`ap`, `ndcg`, `ndcg_cut_10`, `p_10`,
    /// `rprec`, `recip_rank`) and the trec_eval spellings `map`, `P_10`,
    /// `Rprec`, `P@10`, `ndcg@10`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        let cut = |prefix: &str| -> Option<Result<usize, EvalError>> {
            let k = lower.strip_prefix(prefix)?;
            Some(match k.parse::<usize>() {
                Ok(0) => Err(EvalError::ZeroCutoff),
                Ok(k) => Ok(k),
                Err(_) => Err(EvalError::UnknownMeasure(s.to_string())),
            })
        };
        match lower.as_str() {
            "ap" | "map" => return Ok(Self::Ap),
            "ndcg" => return Ok(Self::Ndcg),
            "rprec" => return Ok(Self::Rprec),
            "recip_rank" | "rr" => return Ok(Self::RecipRank),
            _ => {}
        }
        for prefix in ["ndcg_cut_", "ndcg@"] {
            if let Some(k) = cut(prefix) {
                return k.map(Self::NdcgAt);
            }
        }
        for prefix in ["p_", "p@"] {
            if let Some(k) = cut(prefix) {
                return k.map(Self::PAt);
            }
        }
        Err(EvalError::UnknownMeasure(s.to_string()))
    }
}

impl From<Measure> for String {
    fn from(m: Measure) -> Self {
        m.to_string()
    }
}

impl TryFrom<String> for Measure {
    type Error = EvalError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Judgments for one topic.
pub type TopicQrels = BTreeMap<String, u32>;

fn num_relevant(judged: &TopicQrels) -> usize {
    judged.values().filter(|&&g| g > 0).count()
}

fn is_relevant(judged: &TopicQrels, doc: &str) -> bool {
    judged.get(doc).is_some_and(|&g| g > 0)
}

pub fn average_precision<S: AsRef<str>>(ranked: &[S], judged: &TopicQrels) -> Result<f64, EvalError> {
    let r = num_relevant(judged);
    if r == 0 {
        return Err(EvalError::NoRelevantDocs);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, doc) in ranked.iter().enumerate() {
        if is_relevant(judged, doc.as_ref()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / r as f64)
}

/// nDCG with linear gain and a `log2(rank + 1)` discount; the ideal ranking
/// orders all judged grades descending. `cutoff` limits both.
pub fn ndcg<S: AsRef<str>>(ranked: &[S], judged: &TopicQrels, cutoff: Option<usize>) -> Result<f64, EvalError> {
    if num_relevant(judged) == 0 {
        return Err(EvalError::NoRelevantDocs);
    }
    let depth = cutoff.unwrap_or(usize::MAX);
    let discount = |i: usize| ((i + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(depth)
        .enumerate()
        .map(|(i, d)| judged.get(d.as_ref()).copied().unwrap_or(0) as f64 / discount(i))
        .sum();
    let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(depth)
        .enumerate()
        .map(|(i, &g)| g as f64 / discount(i))
        .sum();
    Ok(dcg / idcg)
}

/// Relevant documents in the top `k`, divided by `k`.
pub fn precision_at_k<S: AsRef<str>>(ranked: &[S], judged: &TopicQrels, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroCutoff);
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|d| is_relevant(judged, d.as_ref()))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Precision at rank R, the number of relevant documents.
pub fn r_precision<S: AsRef<str>>(ranked: &[S], judged: &TopicQrels) -> Result<f64, EvalError> {
    let r = num_relevant(judged);
    if r == 0 {
        return Err(EvalError::NoRelevantDocs);
    }
    precision_at_k(ranked, judged, r)
}

pub fn reciprocal_rank<S: AsRef<str>>(ranked: &[S], judged: &TopicQrels) -> f64 {
    ranked
        .iter()
        .position(|d| is_relevant(judged, d.as_ref()))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

pub fn measure_topic<S: AsRef<str>>(measure: Measure, ranked: &[S], judged: &TopicQrels) -> Result<f64, EvalError> {
    match measure {
        Measure::Ap => average_precision(ranked, judged),
        Measure::Ndcg => ndcg(ranked, judged, None),
        Measure::NdcgAt(k) => ndcg(ranked, judged, Some(k)),
        Measure::PAt(k) => precision_at_k(ranked, judged, k),
        Measure::Rprec => r_precision(ranked, judged),
        Measure::RecipRank => Ok(reciprocal_rank(ranked, judged)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub tag: String,
    pub snapshot_version: u32,
    pub measure: Measure,
    /// Per-topic values for topics with at least one relevant document.
    pub per_topic: BTreeMap<String, f64>,
    /// Arithmetic mean of `per_topic`.
    pub mean: f64,
    /// Judged topics left out because they have no relevant documents.
    pub excluded_topics: Vec<String>,
}

/// Evaluates every judged topic. Judged topics missing from the run score 0;
/// run topics without any judgment are ignored.
pub fn evaluate_run(run: &Run, qrels: &Qrels, measure: Measure) -> Result<EvaluationResult, EvalError> {
    let judged_topics: Vec<&str> = qrels.topics().collect();
    if !judged_topics.iter().any(|t| run.entries.contains_key(*t)) {
        return Err(EvalError::NoJudgedTopics);
    }
    let outcomes: Vec<(&str, Result<f64, EvalError>)> = judged_topics
        .par_iter()
        .map(|&topic| {
            let judged = qrels.topic(topic).expect("topic listed by qrels");
            let ranked: Vec<&str> = run
                .topic(topic)
                .map(|docs| docs.iter().map(|d| d.doc_id.as_str()).collect())
                .unwrap_or_default();
            (topic, measure_topic(measure, &ranked, judged))
        })
        .collect();

    let mut per_topic = BTreeMap::new();
    let mut excluded_topics = Vec::new();
    for (topic, outcome) in outcomes {
        // A topic without relevant documents carries no signal for any
        // measure, so it is excluded uniformly.
        match outcome {
            Ok(v) if qrels.num_relevant(topic) > 0 => {
                per_topic.insert(topic.to_string(), v);
            }
            Ok(_) | Err(EvalError::NoRelevantDocs) => excluded_topics.push(topic.to_string()),
            Err(e) => return Err(e),
        }
    }
    if per_topic.is_empty() {
        return Err(EvalError::NoJudgedTopics);
    }
    excluded_topics.sort_by(|a, b| compare_topic_ids(a, b));
    let mean = per_topic.values().sum::<f64>() / per_topic.len() as f64;
    Ok(EvaluationResult {
        tag: run.tag.clone(),
        snapshot_version: run.snapshot_version,
        measure,
        per_topic,
        mean,
        excluded_topics,
    })
}

pub const EVALUATION_CSV_HEADER: &str = "measure,topic,system,snapshot_version,value";

impl EvaluationResult {
    /// Per-topic rows in topic order followed by an `all` row for the mean.
    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> io::Result<()> {
        if header {
            writeln!(out, "{EVALUATION_CSV_HEADER}")?;
        }
        let mut topics: Vec<&String> = self.per_topic.keys().collect();
        topics.sort_by(|a, b| compare_topic_ids(a, b));
        for topic in topics {
            writeln!(
                out,
                "{},{},{},{},{:.6}",
                self.measure, topic, self.tag, self.snapshot_version, self.per_topic[topic]
            )?;
        }
        writeln!(
            out,
            "{},all,{},{},{:.6}",
            self.measure, self.tag, self.snapshot_version, self.mean
        )
    }
}
