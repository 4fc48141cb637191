use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use progeval_core::analysis::{convergence_report, grid_run, GridConfig, MeasureMatrix};
use progeval_core::corpus_io::{
    parse_qrels, parse_topics, parse_trec_documents, write_run, write_topics, write_trec_documents, DEFAULT_RUN_DEPTH,
};
use progeval_core::retrieval::QueryFields;
use progeval_core::synth::{generate, SynthSpec};
use progeval_core::textproc::StemmerRegistry;
use progeval_core::{
    index_bundle, plan_bundles, IndexSnapshot, run_batch, BundlePlan, Document, Measure, ModelSpec, Pipeline, Preprocessor, StemmerId,
    StoplistId,
};
use progeval_service::{save_segments, AppState, DATA_DIR_ENV};

/// Progressive indexing and evaluation of retrieval pipelines.
#[derive(Parser)]
#[command(name = "progeval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus, topics and qrels.
    Synth(SynthArgs),
    /// Split a corpus into seeded random bundles.
    Bundle(BundleArgs),
    /// Index every bundle and write the segment files.
    Index(IndexArgs),
    /// Retrieve with one model on one index version.
    Run(RunArgs),
    /// Evaluate a grid of pipelines on every index version.
    Grid(GridArgs),
    /// Convergence CSVs from a grid matrix.
    Analyze(AnalyzeArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for corpus.trec, topics.trec and qrels.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SynthSpec::default().n_docs)]
    docs: usize,
    #[arg(long, default_value_t = SynthSpec::default().n_topics)]
    topics: usize,
    #[arg(long, default_value_t = SynthSpec::default().relevant_per_topic)]
    relevant: usize,
    #[arg(long, default_value_t = SynthSpec::default().vocab_size)]
    vocab: usize,
    #[arg(long, default_value_t = SynthSpec::default().seed)]
    seed: u64,
}

#[derive(Args)]
struct PlanArgs {
    /// Existing bundle plan; overrides --bundles and --seed.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long, default_value_t = progeval_core::bundler::DEFAULT_BUNDLES)]
    bundles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BundleArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = progeval_core::bundler::DEFAULT_BUNDLES)]
    bundles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Plan file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, default_value = "lucene")]
    stoplist: StoplistId,
    #[arg(long, default_value = "porter")]
    stemmer: StemmerId,
    /// Directory for segment-<i>.bin files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, default_value = "lucene")]
    stoplist: StoplistId,
    #[arg(long, default_value = "porter")]
    stemmer: StemmerId,
    #[arg(long, default_value = "bm25")]
    model: String,
    /// Model parameter as name=value, repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    /// Index version to search; the full index when omitted.
    #[arg(long)]
    version: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_RUN_DEPTH)]
    depth: usize,
    /// Run file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, value_delimiter = ',', default_value = "lucene,nostop")]
    stoplist: Vec<StoplistId>,
    #[arg(long, value_delimiter = ',', default_value = "porter,nostem")]
    stemmer: Vec<StemmerId>,
    #[arg(long, value_delimiter = ',', default_value = "bm25,tfidf,dirichlet_lm,boolean")]
    model: Vec<String>,
    #[arg(long, default_value = "ndcg")]
    measure: Measure,
    #[arg(long, default_value_t = DEFAULT_RUN_DEPTH)]
    depth: usize,
    /// Matrix CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Matrix CSV written by `grid`.
    #[arg(long)]
    matrix: PathBuf,
    /// Directory for the three report CSVs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Session persistence directory.
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// Speedup for replay sessions that do not set their own.
    #[arg(long, default_value_t = 1.0)]
    replay_speedup: f64,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let value = value.trim().parse().map_err(|_| format!("bad number in {s:?}"))?;
    Ok((name.trim().to_string(), value))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    let docs = parse_trec_documents(open(path)?).with_context(|| format!("parsing {}", path.display()))?;
    if docs.is_empty() {
        bail!("{} holds no documents", path.display());
    }
    Ok(docs)
}

fn read_topics(path: &Path) -> Result<Vec<progeval_core::Topic>> {
    parse_topics(open(path)?).with_context(|| format!("parsing {}", path.display()))
}

impl PlanArgs {
    fn resolve(&self, corpus: &[Document]) -> Result<BundlePlan> {
        let plan = match &self.plan {
            Some(path) => BundlePlan::read(open(path)?).with_context(|| format!("reading {}", path.display()))?,
            None => {
                let ids: Vec<&str> = corpus.iter().map(|d| d.doc_id.as_str()).collect();
                plan_bundles(&ids, self.bundles, self.seed)?
            }
        };
        if plan.corpus_size() != corpus.len() {
            bail!("plan covers {} documents but the corpus has {}", plan.corpus_size(), corpus.len());
        }
        Ok(plan)
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_docs: args.docs,
        n_topics: args.topics,
        relevant_per_topic: args.relevant,
        vocab_size: args.vocab,
        seed: args.seed,
        ..SynthSpec::default()
    };
    let c = generate(&spec)?;
    fs::create_dir_all(&args.out)?;
    let mut w = create(&args.out.join("corpus.trec"))?;
    write_trec_documents(&c.documents, &mut w)?;
    w.flush()?;
    let mut w = create(&args.out.join("topics.trec"))?;
    write_topics(&c.topics, &mut w)?;
    w.flush()?;
    let mut w = create(&args.out.join("qrels.txt"))?;
    c.qrels.write(&mut w)?;
    w.flush()?;
    tracing::info!(docs = c.documents.len(), topics = c.topics.len(), judgments = c.qrels.len(), "wrote synthetic collection");
    Ok(())
}

fn bundle(args: BundleArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let ids: Vec<&str> = corpus.iter().map(|d| d.doc_id.as_str()).collect();
    let plan = plan_bundles(&ids, args.bundles, args.seed)?;
    let mut out = output(args.out.as_deref())?;
    plan.write(&mut out)?;
    out.flush()?;
    tracing::info!(n = plan.n(), sizes = ?plan.bundle_sizes(), "planned bundles");
    Ok(())
}

fn bundle_docs(corpus: &[Document], plan: &BundlePlan, i: usize) -> Result<Vec<Document>> {
    let by_id: HashMap<&str, &Document> = corpus.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    plan.bundle_members(i)?
        .iter()
        .map(|id| by_id.get(id.as_str()).map(|d| (*d).clone()).with_context(|| format!("plan names unknown document {id}")))
        .collect()
}

fn index(args: IndexArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let plan = args.plan.resolve(&corpus)?;
    let pre = Preprocessor::builtin(args.stoplist, &args.stemmer)?;
    let mut segments = Vec::with_capacity(plan.n());
    for i in 1..=plan.n() {
        let seg = index_bundle(&bundle_docs(&corpus, &plan, i)?, i as u32, &pre)?;
        tracing::info!(bundle = i, docs = seg.doc_count(), terms = seg.postings.len(), micros = seg.build_micros, "indexed");
        segments.push(seg);
    }
    save_segments(&args.out, &segments).with_context(|| format!("writing segments to {}", args.out.display()))?;
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let topics = read_topics(&args.topics)?;
    let plan = args.plan.resolve(&corpus)?;
    let version = args.version.unwrap_or(plan.n());
    if !(1..=plan.n()).contains(&version) {
        bail!("version must be between 1 and {}", plan.n());
    }
    let params: BTreeMap<String, f64> = args.params.into_iter().collect();
    let model = ModelSpec::from_id(&args.model, &params)?;
    let pre = Preprocessor::builtin(args.stoplist, &args.stemmer)?;
    let mut snapshot = IndexSnapshot::empty();
    for i in 1..=version {
        snapshot = snapshot.merge(&index_bundle(&bundle_docs(&corpus, &plan, i)?, i as u32, &pre)?)?;
    }
    let result = run_batch(&topics, &pre, &model, &snapshot, args.depth, QueryFields::Title)?;
    let mut out = output(args.out.as_deref())?;
    write_run(&result, &mut out)?;
    out.flush()?;
    Ok(())
}

fn grid(args: GridArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let topics = read_topics(&args.topics)?;
    let qrels = parse_qrels(open(&args.qrels)?).with_context(|| format!("parsing {}", args.qrels.display()))?;
    let plan = args.plan.resolve(&corpus)?;
    let models = args
        .model
        .iter()
        .map(|id| ModelSpec::from_id(id, &BTreeMap::new()))
        .collect::<Result<Vec<_>, _>>()?;
    let pipelines = Pipeline::grid(&args.stoplist, &args.stemmer, &models);
    let config = GridConfig {
        measure: args.measure,
        depth: args.depth,
        ..GridConfig::default()
    };
    let started = Instant::now();
    let out = grid_run(&pipelines, &corpus, &topics, &qrels, &plan, &StemmerRegistry::new(), &config)?;
    tracing::info!(
        pipelines = pipelines.len(),
        chains = out.chains_built,
        cells = out.matrix.cell_count(),
        secs = started.elapsed().as_secs_f64(),
        "grid done"
    );
    let mut w = create(&args.out)?;
    out.matrix.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let matrix = MeasureMatrix::read_csv(open(&args.matrix)?).with_context(|| format!("reading {}", args.matrix.display()))?;
    let report = convergence_report(&matrix)?;
    fs::create_dir_all(&args.out)?;
    for (name, body) in report.csv_files() {
        fs::write(args.out.join(name), body)?;
    }
    if let Some(last) = report.tau_by_version.last() {
        tracing::info!(version = last.version, tau = ?last.tau, "analysis written");
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    if !(args.replay_speedup.is_finite() && args.replay_speedup > 0.0) {
        bail!("--replay-speedup must be positive");
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let state = AppState::with_replay_speedup(args.data_dir.clone(), StemmerRegistry::new(), args.replay_speedup);
        let restored = state.restore();
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .with_context(|| format!("binding {}", args.addr))?;
        tracing::info!(addr = %listener.local_addr()?, restored, data_dir = ?args.data_dir, "listening");
        let server = progeval_service::serve(listener, state.clone());
        tokio::select! {
            r = server => r?,
            _ = tokio::signal::ctrl_c() => tracing::info!("shutting down"),
        }
        state.shutdown();
        Ok(())
    })
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Synth(a) => synth(a),
        Command::Bundle(a) => bundle(a),
        Command::Index(a) => index(a),
        Command::Run(a) => run(a),
        Command::Grid(a) => grid(a),
        Command::Analyze(a) => analyze(a),
        Command::Serve(a) => serve(a),
    }
}
