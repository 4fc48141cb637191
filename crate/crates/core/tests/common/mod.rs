//! Reference implementations used as test oracles. None of them touch the
//! inverted index: everything is recomputed from raw documents.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use progeval_core::analysis::AnalysisError;
use progeval_core::bundler::BundlePlan;
use progeval_core::corpus_io::Document;
use progeval_core::index::{index_bundle, IndexSnapshot};
use progeval_core::retrieval::ModelSpec;
use progeval_core::textproc::Preprocessor;

/// Term counts of one preprocessed document.
pub struct BruteDoc {
    pub id: String,
    pub len: usize,
    pub counts: BTreeMap<String, u32>,
}

pub fn analyze(docs: &[Document], pre: &Preprocessor) -> Vec<BruteDoc> {
    docs.iter()
        .map(|d| {
            let terms = pre.terms(&d.text);
            let mut counts = BTreeMap::new();
            for t in &terms {
                *counts.entry(t.clone()).or_insert(0) += 1;
            }
            BruteDoc {
                id: d.doc_id.clone(),
                len: terms.len(),
                counts,
            }
        })
        .collect()
}

/// Full-scan scoring of every document, ranked by score then doc id.
pub fn brute_force_rank(docs: &[BruteDoc], query: &[String], model: &ModelSpec, depth: usize) -> Vec<(String, f64)> {
    let n = docs.len() as f64;
    let total: f64 = docs.iter().map(|d| d.len as f64).sum();
    let avgdl = total / n;
    let df = |t: &str| docs.iter().filter(|d| d.counts.contains_key(t)).count() as f64;
    let cf = |t: &str| docs.iter().map(|d| *d.counts.get(t).unwrap_or(&0) as f64).sum::<f64>();
    let tf = |d: &BruteDoc, t: &str| *d.counts.get(t).unwrap_or(&0) as f64;

    let unique: BTreeSet<&str> = query.iter().map(String::as_str).collect();
    let mut multiplicity: BTreeMap<&str, f64> = BTreeMap::new();
    for t in query {
        *multiplicity.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    let known: Vec<&str> = unique.iter().copied().filter(|t| df(t) > 0.0).collect();

    let mut scored: Vec<(String, f64)> = Vec::new();
    for d in docs {
        if !known.iter().any(|t| tf(d, t) > 0.0) {
            continue;
        }
        let score = match *model {
            ModelSpec::Bm25 { k1, b } => known
                .iter()
                .map(|t| {
                    let idf = (1.0 + (n - df(t) + 0.5) / (df(t) + 0.5)).ln();
                    let f = tf(d, t);
                    idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * d.len as f64 / avgdl))
                })
                .sum::<f64>(),
            ModelSpec::Tfidf => known.iter().map(|t| tf(d, t) * (n / df(t)).ln()).sum(),
            ModelSpec::DirichletLm { mu } => known
                .iter()
                .map(|t| multiplicity[t] * ((tf(d, t) + mu * cf(t) / total) / (d.len as f64 + mu)).ln())
                .sum(),
            ModelSpec::Boolean => {
                unique.iter().filter(|t| tf(d, t) > 0.0).count() as f64 / unique.len() as f64
            }
        };
        let drops_zero = matches!(model, ModelSpec::Bm25 { .. } | ModelSpec::Tfidf);
        if !(drops_zero && score == 0.0) {
            scored.push((d.id.clone(), score));
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(depth);
    scored
}

/// One-shot index over the given documents, as a single bundle.
pub fn batch_snapshot(docs: &[Document], pre: &Preprocessor) -> IndexSnapshot {
    IndexSnapshot::empty().merge(&index_bundle(docs, 1, pre).unwrap()).unwrap()
}

/// Documents in bundles `1..=version` of the plan.
pub fn docs_through(corpus: &[Document], plan: &BundlePlan, version: usize) -> Vec<Document> {
    let wanted: BTreeSet<&str> = (1..=version)
        .flat_map(|i| plan.bundle_members(i).unwrap().iter().map(String::as_str))
        .collect();
    corpus.iter().filter(|d| wanted.contains(d.doc_id.as_str())).cloned().collect()
}

/// Kendall's τ-b by explicit enumeration of all pairs.
pub fn tau_b_quadratic(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    let n = x.len();
    let (mut concordant, mut discordant, mut only_x, mut only_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            match (dx == 0.0, dy == 0.0) {
                (true, true) => {}
                (true, false) => only_x += 1,
                (false, true) => only_y += 1,
                (false, false) if (dx > 0.0) == (dy > 0.0) => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let a = (concordant + discordant + only_y) as f64;
    let b = (concordant + discordant + only_x) as f64;
    if a == 0.0 || b == 0.0 {
        return Err(AnalysisError::DegenerateRanking);
    }
    Ok((concordant - discordant) as f64 / (a * b).sqrt())
}

pub fn plan_for(corpus: &[Document], n: usize, seed: u64) -> BundlePlan {
    let ids: Vec<&str> = corpus.iter().map(|d| d.doc_id.as_str()).collect();
    progeval_core::bundler::plan_bundles(&ids, n, seed).unwrap()
}
