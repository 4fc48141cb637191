//! One corpus, one progression, and the user's models, runs and evaluations.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use progeval_core::analysis::{build_chain, convergence_report, MeasureMatrix};
use progeval_core::bundler::{plan_bundles, BundlePlan};
use progeval_core::corpus_io::{parse_qrels, parse_topics, parse_trec_documents, Document, Qrels, Run, Topic};
use progeval_core::evaluation::{evaluate_run, EvaluationResult, Measure};
use progeval_core::index::{index_bundle, IndexSegment, IndexSnapshot};
use progeval_core::progression::{
    Decision, LiveSource, Observer, ProgressionEngine, ProgressionError, ProgressionState, ReplaySource, SegmentSource,
    Status, StatusView,
};
use progeval_core::retrieval::{run_batch, ModelSpec, QueryFields};
use progeval_core::textproc::{Preprocessor, StemmerId, StemmerRegistry, StoplistId};

use crate::error::ApiError;

/// Models that can be compared side by side in one session.
/// Upper bound on rebuilding saved versions when a session is restored.
const RESTORE_TIMEOUT: std::time::Duration = std::time::Duration::from_secs(600);

pub const MAX_MODELS: usize = 4;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Defaults to the server's configured speedup.
    #[serde(default)]
    pub speedup_factor: Option<f64>,
    /// Directory of `segment-<i>.bin` files; computed at session start when absent.
    #[serde(default)]
    pub segments_dir: Option<PathBuf>,
}

impl ReplayConfig {
    pub fn speedup(&self) -> f64 {
        self.speedup_factor.unwrap_or(1.0)
    }
}

fn default_bundles() -> usize {
    progeval_core::bundler::DEFAULT_BUNDLES
}

fn default_stoplist() -> String {
    "lucene".into()
}

fn default_stemmer() -> String {
    "porter".into()
}

fn default_model() -> String {
    "bm25".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub corpus_path: PathBuf,
    pub topics_path: PathBuf,
    pub qrels_path: PathBuf,
    #[serde(default = "default_bundles")]
    pub n_bundles: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stoplist")]
    pub stoplist_id: String,
    #[serde(default = "default_stemmer")]
    pub stemmer_id: String,
    #[serde(default = "default_model")]
    pub model_id: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub replay: ReplayConfig,
    #[serde(default)]
    pub measure: Option<String>,
}

/// Config after validation.
struct Resolved {
    stoplist: StoplistId,
    stemmer: StemmerId,
    model: ModelSpec,
    measure: Measure,
}

impl SessionConfig {
    fn resolve(&self, registry: &StemmerRegistry) -> Result<Resolved, ApiError> {
        for (name, path) in [
            ("corpus_path", &self.corpus_path),
            ("topics_path", &self.topics_path),
            ("qrels_path", &self.qrels_path),
        ] {
            if !path.is_file() {
                return Err(ApiError::bad_request(format!("{name} {} is not a readable file", path.display())));
            }
        }
        if self.n_bundles == 0 {
            return Err(ApiError::bad_request("n_bundles must be at least 1"));
        }
        if self.replay.enabled && !(self.replay.speedup().is_finite() && self.replay.speedup() > 0.0) {
            return Err(ApiError::bad_request("replay.speedup_factor must be a positive number"));
        }
        let stoplist: StoplistId = self.stoplist_id.parse().map_err(ApiError::bad_request)?;
        let stemmer: StemmerId = self.stemmer_id.parse().map_err(ApiError::bad_request)?;
        registry.resolve(&stemmer).map_err(ApiError::bad_request)?;
        let model = ModelSpec::from_id(&self.model_id, &self.params).map_err(ApiError::bad_request)?;
        let measure = match &self.measure {
            Some(m) => m.parse().map_err(ApiError::bad_request)?,
            None => Measure::Ndcg,
        };
        Ok(Resolved {
            stoplist,
            stemmer,
            model,
            measure,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub model: String,
    pub snapshot_version: u32,
}

/// User-facing state that survives restarts.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Settings {
    models: Vec<ModelSpec>,
    measure: Measure,
    runs: Vec<RunRecord>,
    /// Keyed `model|version|measure`.
    evaluations: BTreeMap<String, Arc<EvaluationResult>>,
    next_run: u64,
}

struct Inner {
    settings: Settings,
    run_data: HashMap<(String, u32), Arc<Run>>,
    convergence: HashMap<String, Arc<ConvergencePayload>>,
}

fn eval_key(model: &str, version: u32, measure: Measure) -> String {
    format!("{model}|{version}|{measure}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePayload {
    pub measure: Measure,
    pub final_version: u32,
    pub systems: Vec<String>,
    pub reldiff_by_system: String,
    pub tau_by_version: String,
    pub boxplot_by_version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub model: String,
    pub model_id: String,
    pub params: BTreeMap<String, f64>,
}

impl From<&ModelSpec> for ModelInfo {
    fn from(m: &ModelSpec) -> Self {
        Self {
            model: m.label(),
            model_id: m.id().to_string(),
            params: m.params(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub model: String,
    pub snapshot_version: u32,
    pub measure: Measure,
    pub mean: f64,
    pub topics: usize,
    pub cached: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopicValue {
    pub topic: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub model_id: String,
    pub run_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_topic: Option<Vec<TopicValue>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Topic,
    Overall,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationsResponse {
    pub measure: Measure,
    pub scope: &'static str,
    pub snapshot_version: u32,
    pub models: Vec<ModelEvaluation>,
    /// Registered models without a run at this version.
    pub absent: Vec<String>,
}

/// Where a session's segments come from, kept for rebuilding old versions.
enum Corpus {
    Live(Arc<Vec<Document>>),
    Replay(Arc<Vec<IndexSegment>>),
}

pub struct Session {
    pub id: String,
    config: SessionConfig,
    topics: Arc<Vec<Topic>>,
    qrels: Arc<Qrels>,
    plan: BundlePlan,
    pre: Preprocessor,
    corpus: Corpus,
    engine: ProgressionEngine,
    inner: Mutex<Inner>,
    dir: Option<PathBuf>,
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut out = BufWriter::new(fs::File::create(&tmp)?);
        serde_json::to_writer_pretty(&mut out, value)?;
        io::Write::flush(&mut out)?;
    }
    fs::rename(tmp, path)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<T> {
    let file = BufReader::new(fs::File::open(path)?);
    serde_json::from_reader(file).map_err(io::Error::other)
}

fn parse_file<T, E: std::fmt::Display>(
    path: &Path,
    parse: impl FnOnce(BufReader<fs::File>) -> Result<T, E>,
) -> Result<T, ApiError> {
    let file = fs::File::open(path).map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))?;
    parse(BufReader::new(file)).map_err(|e| ApiError::unprocessable(format!("{}: {e}", path.display())))
}

fn segment_path(dir: &Path, version: usize) -> PathBuf {
    dir.join(format!("segment-{version}.bin"))
}

/// Indexes every bundle up front, recording build times for replay.
fn precompute_segments(docs: &[Document], plan: &BundlePlan, pre: &Preprocessor) -> Result<Vec<IndexSegment>, ApiError> {
    let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    (1..=plan.n())
        .map(|i| {
            let bundle: Vec<Document> = plan
                .bundle_members(i)
                .expect("index within plan")
                .iter()
                .map(|id| by_id[id.as_str()].clone())
                .collect();
            index_bundle(&bundle, i as u32, pre).map_err(ApiError::internal)
        })
        .collect()
}

fn load_segments(dir: &Path, n: usize) -> Result<Vec<IndexSegment>, ApiError> {
    (1..=n)
        .map(|i| {
            let path = segment_path(dir, i);
            let file = fs::File::open(&path).map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))?;
            let seg = IndexSegment::read_from(BufReader::new(file))
                .map_err(|e| ApiError::unprocessable(format!("{}: {e}", path.display())))?;
            if seg.bundle_index as usize != i {
                return Err(ApiError::unprocessable(format!("{} holds bundle {}", path.display(), seg.bundle_index)));
            }
            Ok(seg)
        })
        .collect()
}

pub fn save_segments(dir: &Path, segments: &[IndexSegment]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for seg in segments {
        let mut out = BufWriter::new(fs::File::create(segment_path(dir, seg.bundle_index as usize))?);
        seg.write_to(&mut out)?;
        io::Write::flush(&mut out)?;
    }
    Ok(())
}

impl Session {
    /// Parses the corpus, plans bundles and starts indexing. With a saved
    /// progression and settings, resumes where a previous process stopped.
    pub fn open(
        id: String,
        config: SessionConfig,
        registry: &StemmerRegistry,
        dir: Option<PathBuf>,
        saved: Option<(ProgressionState, serde_json::Value)>,
    ) -> Result<Session, ApiError> {
        let resolved = config.resolve(registry)?;
        let docs = parse_file(&config.corpus_path, parse_trec_documents)?;
        let topics = parse_file(&config.topics_path, parse_topics)?;
        let qrels = parse_file(&config.qrels_path, parse_qrels)?;
        if docs.is_empty() {
            return Err(ApiError::unprocessable("corpus contains no documents"));
        }
        if topics.is_empty() {
            return Err(ApiError::unprocessable("topics file contains no topics"));
        }
        let ids: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
        let plan = plan_bundles(&ids, config.n_bundles, config.seed).map_err(ApiError::bad_request)?;
        let stemmer = registry.resolve(&resolved.stemmer).map_err(ApiError::bad_request)?;
        let pre = Preprocessor::new(resolved.stoplist, stemmer);

        let (corpus, source): (Corpus, Box<dyn SegmentSource>) = if config.replay.enabled {
            let saved_dir = dir.as_ref().map(|d| d.join("segments"));
            let segments = match (&config.replay.segments_dir, &saved_dir) {
                (Some(src), _) => load_segments(src, plan.n())?,
                (None, Some(d)) if segment_path(d, plan.n()).is_file() => load_segments(d, plan.n())?,
                _ => {
                    let segs = precompute_segments(&docs, &plan, &pre)?;
                    if let Some(d) = &saved_dir {
                        save_segments(d, &segs).map_err(ApiError::internal)?;
                    }
                    segs
                }
            };
            let source = ReplaySource::new(segments.clone(), config.replay.speedup());
            (Corpus::Replay(Arc::new(segments)), Box::new(source))
        } else {
            let source = LiveSource::new(&docs, &plan, pre.clone()).map_err(ApiError::internal)?;
            (Corpus::Live(Arc::new(docs)), Box::new(source))
        };

        let (state, settings) = match saved {
            Some((state, settings)) => {
                let settings: Settings = serde_json::from_value(settings).map_err(ApiError::internal)?;
                if state.bundle_sizes() != plan.bundle_sizes().as_slice() {
                    return Err(ApiError::unprocessable("saved progression does not match the corpus"));
                }
                (state, settings)
            }
            None => (
                ProgressionState::from_plan(&plan).map_err(ApiError::internal)?,
                Settings {
                    models: vec![resolved.model],
                    measure: resolved.measure,
                    runs: Vec::new(),
                    evaluations: BTreeMap::new(),
                    next_run: 1,
                },
            ),
        };

        let observer: Option<Observer> = dir.clone().map(|d| -> Observer {
            Box::new(move |state: &ProgressionState| {
                if let Err(e) = write_json_atomic(&d.join("progression.json"), state) {
                    tracing::warn!(error = %e, "could not persist progression");
                }
            })
        });
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(ApiError::internal)?;
            write_json_atomic(&d.join("config.json"), &config).map_err(ApiError::internal)?;
            write_json_atomic(&d.join("settings.json"), &settings).map_err(ApiError::internal)?;
            write_json_atomic(&d.join("progression.json"), &state).map_err(ApiError::internal)?;
        }
        let engine = ProgressionEngine::with_observer(state, source, observer);

        let session = Session {
            id,
            config,
            topics: Arc::new(topics),
            qrels: Arc::new(qrels),
            plan,
            pre,
            corpus,
            engine,
            inner: Mutex::new(Inner {
                settings,
                run_data: HashMap::new(),
                convergence: HashMap::new(),
            }),
            dir,
        };
        session.engine.start().map_err(ApiError::internal)?;
        Ok(session)
    }

    /// Reads a session directory written by a previous process.
    pub fn load(id: String, dir: PathBuf, registry: &StemmerRegistry) -> Result<Session, ApiError> {
        let config: SessionConfig = read_json(&dir.join("config.json")).map_err(ApiError::internal)?;
        let state: ProgressionState = read_json(&dir.join("progression.json")).map_err(ApiError::internal)?;
        let settings: serde_json::Value = read_json(&dir.join("settings.json")).map_err(ApiError::internal)?;
        let session = Session::open(id, config, registry, Some(dir), Some((state, settings)))?;
        if !session.engine.wait_restored(RESTORE_TIMEOUT) {
            return Err(ApiError::internal("could not rebuild the saved index versions"));
        }
        Ok(session)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn plan(&self) -> &BundlePlan {
        &self.plan
    }

    pub fn status(&self) -> Arc<StatusView> {
        self.engine.status()
    }

    pub fn engine(&self) -> &ProgressionEngine {
        &self.engine
    }

    pub fn decide(&self, decision: Decision) -> Result<StatusView, ApiError> {
        self.engine.decide(decision).map_err(|e| match e {
            ProgressionError::NoPendingVersion => ApiError::conflict("no pending index version to decide on"),
            other => ApiError::internal(other),
        })
    }

    async fn persist(&self, settings: &Settings) -> Result<(), ApiError> {
        if let Some(d) = &self.dir {
            write_json_atomic(&d.join("settings.json"), settings).map_err(ApiError::internal)?;
        }
        Ok(())
    }

    pub async fn models(&self) -> Vec<ModelInfo> {
        self.inner.lock().await.settings.models.iter().map(ModelInfo::from).collect()
    }

    pub async fn measure(&self) -> Measure {
        self.inner.lock().await.settings.measure
    }

    pub async fn set_measure(&self, measure: Measure) -> Result<(), ApiError> {
        let mut inner = self.inner.lock().await;
        inner.settings.measure = measure;
        self.persist(&inner.settings).await
    }

    pub async fn runs(&self) -> Vec<RunRecord> {
        self.inner.lock().await.settings.runs.clone()
    }

    fn current(&self) -> Result<Arc<IndexSnapshot>, ApiError> {
        self.engine
            .current_snapshot()
            .map_err(|_| ApiError::conflict("no index snapshot is available yet"))
    }

    /// Runs `model` on the active snapshot and evaluates it with the
    /// selected measure. A model/version pair is only run once.
    pub async fn submit_run(&self, model: ModelSpec) -> Result<RunSummary, ApiError> {
        let label = model.label();
        let mut inner = self.inner.lock().await;
        if !inner.settings.models.iter().any(|m| m.label() == label) {
            if inner.settings.models.len() >= MAX_MODELS {
                return Err(ApiError::conflict(format!(
                    "at most {MAX_MODELS} models can be compared; remove one first"
                )));
            }
            inner.settings.models.push(model.clone());
        }
        let snapshot = self.current()?;
        let version = snapshot.version();
        let measure = inner.settings.measure;

        if let Some(record) = inner
            .settings
            .runs
            .iter()
            .find(|r| r.model == label && r.snapshot_version == version)
            .cloned()
        {
            let result = self.evaluation(&mut inner, &model, version, Some(&snapshot), measure).await?;
            return Ok(RunSummary {
                run_id: record.run_id,
                model: label,
                snapshot_version: version,
                measure,
                mean: result.mean,
                topics: result.per_topic.len(),
                cached: true,
            });
        }

        let run_id = format!("run-{}", inner.settings.next_run);
        inner.settings.next_run += 1;
        inner.settings.runs.push(RunRecord {
            run_id: run_id.clone(),
            model: label.clone(),
            snapshot_version: version,
        });
        let result = self.evaluation(&mut inner, &model, version, Some(&snapshot), measure).await?;
        self.persist(&inner.settings).await?;
        Ok(RunSummary {
            run_id,
            model: label,
            snapshot_version: version,
            measure,
            mean: result.mean,
            topics: result.per_topic.len(),
            cached: false,
        })
    }

    /// Cached evaluation of `model` at `version`. Retrieval runs only when
    /// no run is held for that version, and needs `snapshot` to do so.
    async fn evaluation(
        &self,
        inner: &mut Inner,
        model: &ModelSpec,
        version: u32,
        snapshot: Option<&Arc<IndexSnapshot>>,
        measure: Measure,
    ) -> Result<Arc<EvaluationResult>, ApiError> {
        let label = model.label();
        let key = eval_key(&label, version, measure);
        if let Some(hit) = inner.settings.evaluations.get(&key) {
            return Ok(Arc::clone(hit));
        }
        let run = match inner.run_data.get(&(label.clone(), version)) {
            Some(run) => Arc::clone(run),
            None => {
                let snapshot = snapshot.filter(|s| s.version() == version).ok_or_else(|| {
                    ApiError::conflict(format!("{label} at version {version} was not evaluated with {measure}"))
                })?;
                let (topics, pre, model, snapshot) =
                    (Arc::clone(&self.topics), self.pre.clone(), model.clone(), Arc::clone(snapshot));
                let run = tokio::task::spawn_blocking(move || {
                    run_batch(&topics, &pre, &model, &snapshot, progeval_core::corpus_io::DEFAULT_RUN_DEPTH, QueryFields::Title)
                })
                .await
                .map_err(ApiError::internal)?
                .map_err(ApiError::internal)?;
                let run = Arc::new(run);
                inner.run_data.insert((label, version), Arc::clone(&run));
                run
            }
        };
        let result = Arc::new(evaluate_run(&run, &self.qrels, measure).map_err(ApiError::unprocessable)?);
        inner.settings.evaluations.insert(key, Arc::clone(&result));
        Ok(result)
    }

    /// Evaluations of every registered model that has a run at `version`,
    /// the active one by default. Earlier versions are served from cache.
    pub async fn evaluations(
        &self,
        measure: Option<Measure>,
        scope: Scope,
        version: Option<u32>,
    ) -> Result<EvaluationsResponse, ApiError> {
        let mut inner = self.inner.lock().await;
        let measure = measure.unwrap_or(inner.settings.measure);
        let snapshot = self.current()?;
        let version = match version {
            None => snapshot.version(),
            Some(v) if (1..=snapshot.version()).contains(&v) => v,
            Some(v) => return Err(ApiError::bad_request(format!("version {v} has not been adopted"))),
        };
        let mut models = Vec::new();
        let mut absent = Vec::new();
        let registered = inner.settings.models.clone();
        let mut added = false;
        for model in &registered {
            let label = model.label();
            let record = inner
                .settings
                .runs
                .iter()
                .find(|r| r.model == label && r.snapshot_version == version)
                .cloned();
            let Some(record) = record else {
                absent.push(label);
                continue;
            };
            added |= !inner.settings.evaluations.contains_key(&eval_key(&label, version, measure));
            let result = self.evaluation(&mut inner, model, version, Some(&snapshot), measure).await?;
            let (mean, per_topic) = match scope {
                Scope::Overall => (Some(result.mean), None),
                Scope::Topic => {
                    let mut values: Vec<TopicValue> = result
                        .per_topic
                        .iter()
                        .map(|(t, &v)| TopicValue { topic: t.clone(), value: v })
                        .collect();
                    values.sort_by(|a, b| progeval_core::corpus_io::compare_topic_ids(&a.topic, &b.topic));
                    (None, Some(values))
                }
            };
            models.push(ModelEvaluation {
                model: label,
                model_id: model.id().to_string(),
                run_id: record.run_id,
                mean,
                per_topic,
            });
        }
        if added {
            self.persist(&inner.settings).await?;
        }
        Ok(EvaluationsResponse {
            measure,
            scope: match scope {
                Scope::Topic => "topic",
                Scope::Overall => "overall",
            },
            snapshot_version: version,
            models,
            absent,
        })
    }

    /// Convergence of every registered model toward the final index. Only
    /// available once every bundle has been adopted.
    pub async fn convergence(&self, measure: Option<Measure>) -> Result<Arc<ConvergencePayload>, ApiError> {
        let view = self.engine.status();
        if view.status != Status::Complete {
            return Err(ApiError::conflict(format!(
                "convergence needs the full index: {} of {} bundles adopted",
                view.active_version, view.n_bundles
            )));
        }
        let mut inner = self.inner.lock().await;
        let measure = measure.unwrap_or(inner.settings.measure);
        if let Some(hit) = inner.convergence.get(&measure.to_string()) {
            return Ok(Arc::clone(hit));
        }
        let models = inner.settings.models.clone();
        let topics = Arc::clone(&self.topics);
        let qrels = Arc::clone(&self.qrels);
        let pre = self.pre.clone();
        let chain_input = match &self.corpus {
            Corpus::Live(docs) => Ok((Arc::clone(docs), self.plan.clone())),
            Corpus::Replay(segs) => Err(Arc::clone(segs)),
        };
        let payload = tokio::task::spawn_blocking(move || -> Result<ConvergencePayload, ApiError> {
            let chain = match chain_input {
                Ok((docs, plan)) => {
                    let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
                    build_chain(&by_id, &plan, &pre).map_err(ApiError::internal)?
                }
                Err(segs) => IndexSnapshot::chain(segs.iter()).map_err(ApiError::internal)?,
            };
            let mut matrix = MeasureMatrix::new(measure);
            let mut systems = Vec::new();
            for model in &models {
                let system = format!("{}.{}", pre.id(), model.label());
                for snapshot in &chain {
                    let run = run_batch(&topics, &pre, model, snapshot, progeval_core::corpus_io::DEFAULT_RUN_DEPTH, QueryFields::Title)
                        .map_err(ApiError::internal)?;
                    let result = evaluate_run(&run, &qrels, measure).map_err(ApiError::unprocessable)?;
                    matrix.insert(&system, &result);
                }
                systems.push(system);
            }
            let report = convergence_report(&matrix).map_err(ApiError::internal)?;
            Ok(ConvergencePayload {
                measure,
                final_version: report.final_version,
                systems,
                reldiff_by_system: report.reldiff_csv(),
                tau_by_version: report.tau_csv(),
                boxplot_by_version: report.boxplot_csv(),
            })
        })
        .await
        .map_err(ApiError::internal)??;
        let payload = Arc::new(payload);
        inner.convergence.insert(measure.to_string(), Arc::clone(&payload));
        Ok(payload)
    }

    pub fn shutdown(&self) {
        self.engine.shutdown();
    }
}
