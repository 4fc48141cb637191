//! Convergence of partial-index evaluation toward full-index evaluation.
//!
//! [`grid_run`] fills a [`MeasureMatrix`] with per-topic values for every
//! (pipeline, snapshot version); [`convergence_report`] turns it into three
//! series per version: mean relative difference per system, Kendall's τ-b
//! between the system ranking at that version and at the final one, and a
//! five-number summary of the pooled per-topic relative differences.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bundler::BundlePlan;
use crate::corpus_io::{compare_topic_ids, Document, Qrels, Topic};
use crate::evaluation::{evaluate_run, EvalError, EvaluationResult, Measure};
use crate::index::{index_bundle, IndexError, IndexSnapshot};
use crate::retrieval::{run_batch, QueryFields, RetrievalError};
use crate::textproc::{Pipeline, Preprocessor, StemmerRegistry, TextError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("rankings cover different systems")]
    MismatchedIdSets,
    #[error("system {0:?} listed twice")]
    DuplicateId(String),
    #[error("Kendall's tau is undefined when one ranking is entirely tied")]
    DegenerateRanking,
    #[error("scores must be finite")]
    NonFinite,
    #[error("score vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("incomplete measure matrix: {0}")]
    IncompleteMatrix(String),
    #[error("no pipelines to run")]
    EmptyGrid,
    #[error("document {0:?} is in the bundle plan but not in the corpus")]
    MissingDocument(String),
    #[error("matrix file line {line}: {reason}")]
    MalformedMatrix { line: usize, reason: String },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// `(partial - full) / full`. `None` marks the undefined case `full = 0`,
/// `partial ≠ 0`; two zeros compare as equal.
pub fn relative_difference(partial: f64, full: f64) -> Option<f64> {
    if full == 0.0 {
        (partial == 0.0).then_some(0.0)
    } else {
        Some((partial - full) / full)
    }
}

/// Kendall's τ-b between two paired score vectors, in O(n log n)
/// (Knight's merge-sort algorithm).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let n = x.len();
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let tied_pairs = |run: u64| run * run.saturating_sub(1) / 2;
    let total = tied_pairs(n as u64);

    // Ties in x, and joint ties in (x, y), from runs in the sorted order.
    let (mut ties_x, mut ties_xy) = (0u64, 0u64);
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for i in 1..n {
        if pairs[i].0 == pairs[i - 1].0 {
            run_x += 1;
            if pairs[i].1 == pairs[i - 1].1 {
                run_xy += 1;
            } else {
                ties_xy += tied_pairs(run_xy);
                run_xy = 1;
            }
        } else {
            ties_x += tied_pairs(run_x);
            ties_xy += tied_pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    ties_x += tied_pairs(run_x);
    ties_xy += tied_pairs(run_xy);

    // Discordant pairs are the inversions left in y.
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let discordant = count_inversions(&mut ys, &mut buf);

    let mut ties_y = 0u64;
    let mut run_y = 1u64;
    for i in 1..n {
        if ys[i] == ys[i - 1] {
            run_y += 1;
        } else {
            ties_y += tied_pairs(run_y);
            run_y = 1;
        }
    }
    ties_y += tied_pairs(run_y);

    let untied_x = total - ties_x;
    let untied_y = total - ties_y;
    if untied_x == 0 || untied_y == 0 {
        return Err(AnalysisError::DegenerateRanking);
    }
    let numerator = total as f64 - ties_x as f64 - ties_y as f64 + ties_xy as f64 - 2.0 * discordant as f64;
    Ok(numerator / ((untied_x as f64) * (untied_y as f64)).sqrt())
}

/// Stable merge sort of `v` counting strict inversions.
fn count_inversions(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        count_inversions(left, bl) + count_inversions(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            count += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    count
}

fn check_unique<S: AsRef<str>>(ids: &[S]) -> Result<HashMap<&str, usize>, AnalysisError> {
    let mut pos = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if pos.insert(id.as_ref(), i).is_some() {
            return Err(AnalysisError::DuplicateId(id.as_ref().to_string()));
        }
    }
    Ok(pos)
}

/// τ between two orderings of the same system ids (best first).
pub fn kendall_tau<S: AsRef<str>>(ranking_a: &[S], ranking_b: &[S]) -> Result<f64, AnalysisError> {
    let pos_a = check_unique(ranking_a)?;
    let pos_b = check_unique(ranking_b)?;
    if pos_a.len() != pos_b.len() || pos_a.keys().any(|k| !pos_b.contains_key(k)) {
        return Err(AnalysisError::MismatchedIdSets);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = ranking_a
        .iter()
        .map(|id| {
            let id = id.as_ref();
            (pos_a[id] as f64, pos_b[id] as f64)
        })
        .unzip();
    kendall_tau_b(&xs, &ys)
}

/// τ-b between two score assignments over the same systems; equal scores are ties.
pub fn kendall_tau_scores(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
) -> Result<f64, AnalysisError> {
    if a.len() != b.len() || a.keys().any(|k| !b.contains_key(k)) {
        return Err(AnalysisError::MismatchedIdSets);
    }
    let xs: Vec<f64> = a.values().copied().collect();
    let ys: Vec<f64> = a.keys().map(|k| b[k]).collect();
    kendall_tau_b(&xs, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile by linear interpolation between order statistics (R type 7).
/// `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn five_number_summary(values: &[f64]) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(FiveNumber {
        min: v[0],
        q1: quantile_sorted(&v, 0.25),
        median: quantile_sorted(&v, 0.5),
        q3: quantile_sorted(&v, 0.75),
        max: v[v.len() - 1],
    })
}

/// Measure values by (pipeline, snapshot version, topic), plus the per-cell means.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureMatrix {
    measure: Measure,
    values: BTreeMap<(String, u32, String), f64>,
    means: BTreeMap<(String, u32), f64>,
}

pub const MATRIX_CSV_HEADER: &str = "measure,pipeline,version,topic,value";

impl MeasureMatrix {
    pub fn new(measure: Measure) -> Self {
        Self {
            measure,
            values: BTreeMap::new(),
            means: BTreeMap::new(),
        }
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn insert(&mut self, pipeline: &str, result: &EvaluationResult) {
        let version = result.snapshot_version;
        for (topic, &v) in &result.per_topic {
            self.values
                .insert((pipeline.to_string(), version, topic.clone()), v);
        }
        self.means.insert((pipeline.to_string(), version), result.mean);
    }

    pub fn value(&self, pipeline: &str, version: u32, topic: &str) -> Option<f64> {
        self.values
            .get(&(pipeline.to_string(), version, topic.to_string()))
            .copied()
    }

    pub fn mean(&self, pipeline: &str, version: u32) -> Option<f64> {
        self.means.get(&(pipeline.to_string(), version)).copied()
    }

    pub fn pipelines(&self) -> BTreeSet<&str> {
        self.means.keys().map(|(p, _)| p.as_str()).collect()
    }

    pub fn versions(&self) -> BTreeSet<u32> {
        self.means.keys().map(|&(_, v)| v).collect()
    }

    /// Topic → value for one cell.
    pub fn cell(&self, pipeline: &str, version: u32) -> BTreeMap<&str, f64> {
        self.values
            .range((pipeline.to_string(), version, String::new())..)
            .take_while(|((p, v, _), _)| p == pipeline && *v == version)
            .map(|((_, _, t), &x)| (t.as_str(), x))
            .collect()
    }

    pub fn cell_count(&self) -> usize {
        self.means.len()
    }

    /// One row per (pipeline, version, topic) and an `all` row per cell
    /// carrying the mean. Values use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{MATRIX_CSV_HEADER}")?;
        for ((pipeline, version), mean) in &self.means {
            let cell = self.cell(pipeline, *version);
            let mut topics: Vec<&&str> = cell.keys().collect();
            topics.sort_by(|a, b| compare_topic_ids(a, b));
            for topic in topics {
                writeln!(out, "{},{pipeline},{version},{topic},{}", self.measure, cell[*topic])?;
            }
            writeln!(out, "{},{pipeline},{version},all,{mean}", self.measure)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, AnalysisError> {
        let mut matrix: Option<MeasureMatrix> = None;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let bad = |reason: &str| AnalysisError::MalformedMatrix {
                line: line_no,
                reason: reason.to_string(),
            };
            if line_no == 1 {
                if line.trim() != MATRIX_CSV_HEADER {
                    return Err(bad("unexpected header"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad("expected 5 columns"));
            }
            let measure: Measure = fields[0].parse().map_err(|_| bad("unknown measure"))?;
            let m = matrix.get_or_insert_with(|| MeasureMatrix::new(measure));
            if m.measure != measure {
                return Err(bad("mixed measures"));
            }
            let version: u32 = fields[2].parse().map_err(|_| bad("invalid version"))?;
            let value: f64 = fields[4].parse().map_err(|_| bad("invalid value"))?;
            if fields[3] == "all" {
                m.means.insert((fields[1].to_string(), version), value);
            } else {
                m.values
                    .insert((fields[1].to_string(), version, fields[3].to_string()), value);
            }
        }
        let matrix = matrix.ok_or_else(|| AnalysisError::MalformedMatrix {
            line: 1,
            reason: "no rows".into(),
        })?;
        for ((pipeline, version), mean) in &matrix.means {
            let cell = matrix.cell(pipeline, *version);
            if cell.is_empty() {
                return Err(AnalysisError::IncompleteMatrix(format!(
                    "{pipeline} v{version} has a mean but no topics"
                )));
            }
            let recomputed = cell.values().sum::<f64>() / cell.len() as f64;
            if (recomputed - mean).abs() > 1e-12 {
                return Err(AnalysisError::IncompleteMatrix(format!(
                    "{pipeline} v{version}: mean {mean} disagrees with topics ({recomputed})"
                )));
            }
        }
        Ok(matrix)
    }
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub measure: Measure,
    pub depth: usize,
    pub fields: QueryFields,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            measure: Measure::Ndcg,
            depth: crate::corpus_io::DEFAULT_RUN_DEPTH,
            fields: QueryFields::Title,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridOutput {
    pub matrix: MeasureMatrix,
    /// Snapshot chains built, one per distinct (stoplist, stemmer) pair.
    pub chains_built: usize,
}

/// Indexes the plan's bundles in order and returns snapshots `1..=n`.
pub fn build_chain(
    docs: &HashMap<&str, &Document>,
    plan: &BundlePlan,
    pre: &Preprocessor,
) -> Result<Vec<Arc<IndexSnapshot>>, AnalysisError> {
    let mut chain = Vec::with_capacity(plan.n());
    let mut current = IndexSnapshot::empty();
    for i in 1..=plan.n() {
        let bundle: Vec<Document> = plan
            .bundle_members(i)
            .expect("index within plan")
            .iter()
            .map(|id| {
                docs.get(id.as_str())
                    .map(|d| (*d).clone())
                    .ok_or_else(|| AnalysisError::MissingDocument(id.clone()))
            })
            .collect::<Result<_, _>>()?;
        let segment = index_bundle(&bundle, i as u32, pre)?;
        current = current.merge(&segment)?;
        chain.push(Arc::new(current.clone()));
    }
    Ok(chain)
}

/// Runs and evaluates every pipeline on every snapshot version. One snapshot
/// chain is built per distinct (stoplist, stemmer) pair and shared by all
/// models of that pair.
pub fn grid_run(
    pipelines: &[Pipeline],
    corpus: &[Document],
    topics: &[Topic],
    qrels: &Qrels,
    plan: &BundlePlan,
    registry: &StemmerRegistry,
    config: &GridConfig,
) -> Result<GridOutput, AnalysisError> {
    if pipelines.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    let docs: HashMap<&str, &Document> = corpus.iter().map(|d| (d.doc_id.as_str(), d)).collect();

    let mut groups: Vec<(Preprocessor, Vec<&Pipeline>)> = Vec::new();
    for p in pipelines {
        let key = format!("{}.{}", p.stoplist, p.stemmer);
        match groups.iter_mut().find(|(pre, _)| pre.id() == key) {
            Some((_, members)) => members.push(p),
            None => groups.push((p.preprocessor(registry)?, vec![p])),
        }
    }

    let chains_built = AtomicUsize::new(0);
    let results: Vec<Vec<(String, EvaluationResult)>> = groups
        .par_iter()
        .map(|(pre, members)| {
            let chain = build_chain(&docs, plan, pre)?;
            chains_built.fetch_add(1, Ordering::Relaxed);
            let mut out = Vec::new();
            for snapshot in &chain {
                for p in members {
                    let run = run_batch(topics, pre, &p.model, snapshot, config.depth, config.fields)?;
                    out.push((p.id(), evaluate_run(&run, qrels, config.measure)?));
                }
            }
            Ok(out)
        })
        .collect::<Result<_, AnalysisError>>()?;

    let mut matrix = MeasureMatrix::new(config.measure);
    for (pipeline, result) in results.iter().flatten() {
        matrix.insert(pipeline, result);
    }
    Ok(GridOutput {
        matrix,
        chains_built: chains_built.into_inner(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemRelDiff {
    pub system: String,
    pub version: u32,
    /// Mean over topics with a defined relative difference.
    pub mean_rel_diff: Option<f64>,
    pub defined: usize,
    pub undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VersionTau {
    pub version: u32,
    /// `None` when either ranking is entirely tied.
    pub tau: Option<f64>,
    pub n_systems: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VersionBoxplot {
    pub version: u32,
    pub summary: Option<FiveNumber>,
    pub count: usize,
    pub mean_abs: Option<f64>,
    pub median_abs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub measure: Measure,
    pub final_version: u32,
    pub reldiff_by_system: Vec<SystemRelDiff>,
    pub tau_by_version: Vec<VersionTau>,
    pub boxplot_by_version: Vec<VersionBoxplot>,
}

/// Compares every version `1..=n` against the final version `n`.
pub fn convergence_report(matrix: &MeasureMatrix) -> Result<ConvergenceReport, AnalysisError> {
    let pipelines: Vec<&str> = matrix.pipelines().into_iter().collect();
    let final_version = *matrix
        .versions()
        .iter()
        .next_back()
        .ok_or_else(|| AnalysisError::IncompleteMatrix("matrix is empty".into()))?;
    let reference_topics: BTreeSet<&str> = matrix
        .cell(pipelines[0], final_version)
        .keys()
        .copied()
        .collect();
    for p in &pipelines {
        for v in 1..=final_version {
            let topics: BTreeSet<&str> = matrix.cell(p, v).keys().copied().collect();
            if matrix.mean(p, v).is_none() || topics != reference_topics {
                return Err(AnalysisError::IncompleteMatrix(format!(
                    "{p} version {v} is missing or covers different topics"
                )));
            }
        }
    }

    let finals: BTreeMap<String, f64> = pipelines
        .iter()
        .map(|p| (p.to_string(), matrix.mean(p, final_version).expect("checked")))
        .collect();

    let mut reldiff_by_system = Vec::new();
    let mut tau_by_version = Vec::new();
    let mut boxplot_by_version = Vec::new();
    for v in 1..=final_version {
        let mut pooled = Vec::new();
        for p in &pipelines {
            let partial = matrix.cell(p, v);
            let full = matrix.cell(p, final_version);
            let diffs: Vec<Option<f64>> = reference_topics
                .iter()
                .map(|t| relative_difference(partial[t], full[t]))
                .collect();
            let defined: Vec<f64> = diffs.iter().flatten().copied().collect();
            reldiff_by_system.push(SystemRelDiff {
                system: p.to_string(),
                version: v,
                mean_rel_diff: (!defined.is_empty())
                    .then(|| defined.iter().sum::<f64>() / defined.len() as f64),
                defined: defined.len(),
                undefined: diffs.len() - defined.len(),
            });
            pooled.extend(defined);
        }

        let means: BTreeMap<String, f64> = pipelines
            .iter()
            .map(|p| (p.to_string(), matrix.mean(p, v).expect("checked")))
            .collect();
        let tau = match kendall_tau_scores(&means, &finals) {
            Ok(t) => Some(t),
            Err(AnalysisError::DegenerateRanking) => None,
            Err(e) => return Err(e),
        };
        tau_by_version.push(VersionTau {
            version: v,
            tau,
            n_systems: pipelines.len(),
        });

        let abs: Vec<f64> = pooled.iter().map(|d| d.abs()).collect();
        boxplot_by_version.push(VersionBoxplot {
            version: v,
            summary: five_number_summary(&pooled),
            count: pooled.len(),
            mean_abs: (!abs.is_empty()).then(|| abs.iter().sum::<f64>() / abs.len() as f64),
            median_abs: five_number_summary(&abs).map(|s| s.median),
        });
    }

    Ok(ConvergenceReport {
        measure: matrix.measure(),
        final_version,
        reldiff_by_system,
        tau_by_version,
        boxplot_by_version,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

pub const RELDIFF_CSV_HEADER: &str = "system,version,mean_rel_diff,defined,undefined";
pub const TAU_CSV_HEADER: &str = "version,tau,n_systems";
pub const BOXPLOT_CSV_HEADER: &str = "version,min,q1,median,q3,max,count,mean_abs,median_abs";

impl ConvergenceReport {
    pub fn reldiff_csv(&self) -> String {
        let mut out = format!("{RELDIFF_CSV_HEADER}\n");
        for r in &self.reldiff_by_system {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.system,
                r.version,
                fmt_opt(r.mean_rel_diff),
                r.defined,
                r.undefined
            ));
        }
        out
    }

    pub fn tau_csv(&self) -> String {
        let mut out = format!("{TAU_CSV_HEADER}\n");
        for t in &self.tau_by_version {
            out.push_str(&format!("{},{},{}\n", t.version, fmt_opt(t.tau), t.n_systems));
        }
        out
    }

    pub fn boxplot_csv(&self) -> String {
        let mut out = format!("{BOXPLOT_CSV_HEADER}\n");
        for b in &self.boxplot_by_version {
            let five = match b.summary {
                Some(s) => [s.min, s.q1, s.median, s.q3, s.max].map(|x| format!("{x:.6}")).join(","),
                None => ["NA"; 5].join(","),
            };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.version,
                five,
                b.count,
                fmt_opt(b.mean_abs),
                fmt_opt(b.median_abs)
            ));
        }
        out
    }

    /// `(file name, contents)` for the three exports.
    pub fn csv_files(&self) -> [(&'static str, String); 3] {
        [
            ("reldiff_by_system.csv", self.reldiff_csv()),
            ("tau_by_version.csv", self.tau_csv()),
            ("boxplot_by_version.csv", self.boxplot_csv()),
        ]
    }
}
