//! Background bundle indexing with user-controlled snapshot adoption.
//!
//! [`ProgressionState`] is the pure state machine. [`ProgressionEngine`]
//! drives it with one builder thread and publishes the active snapshot
//! through an atomic pointer, so readers never wait on the builder.
//!
//! Bundle 1 is adopted as soon as it is built. Every later bundle pauses the
//! builder and waits for a [`Decision`]; a deferred version stays pending
//! and can be adopted later.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use arc_swap::{ArcSwap, ArcSwapOption};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundler::BundlePlan;
use crate::corpus_io::Document;
use crate::index::{index_bundle, IndexError, IndexSegment, IndexSnapshot};
use crate::textproc::Preprocessor;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProgressionError {
    #[error("progression already started")]
    AlreadyStarted,
    #[error("segment {found} is not the one being built ({expected:?})")]
    VersionMismatch { expected: Option<u32>, found: u32 },
    #[error("no pending version to decide on")]
    NoPendingVersion,
    #[error("no snapshot has been published yet")]
    NotYetAvailable,
    #[error("plan has no bundles")]
    EmptyPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Idle,
    Building,
    PendingDecision,
    Complete,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Idle => "idle",
            Status::Building => "building",
            Status::PendingDecision => "pending_decision",
            Status::Complete => "complete",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    #[serde(rename = "update")]
    Update,
    #[serde(rename = "continue", alias = "continue_current")]
    ContinueCurrent,
}

impl FromStr for Decision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "update" => Ok(Decision::Update),
            "continue" | "continue_current" => Ok(Decision::ContinueCurrent),
            other => Err(format!("unknown decision {other:?}")),
        }
    }
}

/// Emitted when a bundle after the first finishes building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub pending_version: u32,
    pub doc_count: usize,
    pub percent_indexed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionState {
    bundle_sizes: Vec<usize>,
    started: bool,
    active: u32,
    /// Built but not adopted, consecutive from `active + 1`.
    ready: VecDeque<u32>,
    building: Option<u32>,
    next_to_build: u32,
    awaiting_decision: bool,
    notifications: Vec<Notification>,
}

impl ProgressionState {
    pub fn new(bundle_sizes: Vec<usize>) -> Result<Self, ProgressionError> {
        if bundle_sizes.is_empty() {
            return Err(ProgressionError::EmptyPlan);
        }
        Ok(Self {
            bundle_sizes,
            started: false,
            active: 0,
            ready: VecDeque::new(),
            building: None,
            next_to_build: 1,
            awaiting_decision: false,
            notifications: Vec::new(),
        })
    }

    pub fn from_plan(plan: &BundlePlan) -> Result<Self, ProgressionError> {
        Self::new(plan.bundle_sizes())
    }

    pub fn start(&mut self) -> Result<(), ProgressionError> {
        if self.started {
            return Err(ProgressionError::AlreadyStarted);
        }
        self.started = true;
        self.building = Some(1);
        self.next_to_build = 1;
        Ok(())
    }

    /// Records that segment `version` finished. Returns the notification
    /// for versions ≥ 2; those also pause the builder until [`decide`](Self::decide).
    pub fn on_segment_ready(&mut self, version: u32) -> Result<Option<Notification>, ProgressionError> {
        if self.building != Some(version) {
            return Err(ProgressionError::VersionMismatch {
                expected: self.building,
                found: version,
            });
        }
        self.next_to_build = version + 1;
        if version == 1 {
            self.active = 1;
            self.building = (self.next_to_build <= self.n()).then_some(self.next_to_build);
            return Ok(None);
        }
        self.ready.push_back(version);
        self.building = None;
        self.awaiting_decision = true;
        let doc_count = self.docs_through(version);
        let note = Notification {
            pending_version: version,
            doc_count,
            percent_indexed: self.percent_of(doc_count),
        };
        self.notifications.push(note.clone());
        Ok(Some(note))
    }

    pub fn decide(&mut self, decision: Decision) -> Result<(), ProgressionError> {
        if self.ready.is_empty() {
            return Err(ProgressionError::NoPendingVersion);
        }
        if decision == Decision::Update {
            self.active = self.ready.pop_front().expect("nonempty");
        }
        if self.awaiting_decision {
            self.awaiting_decision = false;
            self.building = (self.next_to_build <= self.n()).then_some(self.next_to_build);
        }
        Ok(())
    }

    pub fn n(&self) -> u32 {
        self.bundle_sizes.len() as u32
    }

    pub fn bundle_sizes(&self) -> &[usize] {
        &self.bundle_sizes
    }

    pub fn total_docs(&self) -> usize {
        self.bundle_sizes.iter().sum()
    }

    pub fn active_version(&self) -> u32 {
        self.active
    }

    pub fn pending_version(&self) -> Option<u32> {
        self.ready.front().copied()
    }

    /// Built versions not yet adopted, oldest first.
    pub fn ready_versions(&self) -> impl Iterator<Item = u32> + '_ {
        self.ready.iter().copied()
    }

    pub fn building_version(&self) -> Option<u32> {
        self.building
    }

    /// Highest version whose segment exists.
    pub fn built_through(&self) -> u32 {
        self.ready.back().copied().unwrap_or(self.active)
    }

    pub fn awaiting_decision(&self) -> bool {
        self.awaiting_decision
    }

    pub fn notifications(&self) -> &[Notification] {
        &self.notifications
    }

    pub fn status(&self) -> Status {
        if !self.started {
            Status::Idle
        } else if self.active == self.n() {
            Status::Complete
        } else if !self.ready.is_empty() {
            Status::PendingDecision
        } else {
            Status::Building
        }
    }

    fn docs_through(&self, version: u32) -> usize {
        self.bundle_sizes.iter().take(version as usize).sum()
    }

    fn percent_of(&self, docs: usize) -> f64 {
        docs as f64 / self.total_docs() as f64 * 100.0
    }

    pub fn docs_indexed(&self) -> usize {
        self.docs_through(self.active)
    }

    pub fn percent_indexed(&self) -> f64 {
        self.percent_of(self.docs_indexed())
    }

    pub fn view(&self) -> StatusView {
        StatusView {
            status: self.status(),
            active_version: self.active,
            pending_version: self.pending_version(),
            building_version: self.building,
            percent_indexed: self.percent_indexed(),
            docs_indexed: self.docs_indexed(),
            total_docs: self.total_docs(),
            n_bundles: self.n(),
            notifications: self.notifications.len(),
            last_notification: self.notifications.last().cloned(),
            error: None,
        }
    }
}

/// Point-in-time copy of the progression, cheap to hand to pollers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusView {
    pub status: Status,
    pub active_version: u32,
    pub pending_version: Option<u32>,
    pub building_version: Option<u32>,
    pub percent_indexed: f64,
    pub docs_indexed: usize,
    pub total_docs: usize,
    pub n_bundles: u32,
    pub notifications: usize,
    pub last_notification: Option<Notification>,
    pub error: Option<String>,
}

/// Produces the segment for a bundle. Runs on the builder thread.
pub trait SegmentSource: Send + 'static {
    fn build(&mut self, version: u32) -> Result<IndexSegment, IndexError>;

    /// Rebuilds a version that already existed before a restart.
    fn restore(&mut self, version: u32) -> Result<IndexSegment, IndexError> {
        self.build(version)
    }
}

/// Indexes bundles from documents held in memory.
pub struct LiveSource {
    bundles: Vec<Vec<Document>>,
    pre: Preprocessor,
}

impl LiveSource {
    /// Fails with the id of the first planned document missing from `corpus`.
    pub fn new(corpus: &[Document], plan: &BundlePlan, pre: Preprocessor) -> Result<Self, String> {
        let by_id: BTreeMap<&str, &Document> = corpus.iter().map(|d| (d.doc_id.as_str(), d)).collect();
        let bundles = (1..=plan.n())
            .map(|i| {
                plan.bundle_members(i)
                    .expect("index within plan")
                    .iter()
                    .map(|id| by_id.get(id.as_str()).map(|d| (*d).clone()).ok_or_else(|| id.clone()))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { bundles, pre })
    }
}

impl SegmentSource for LiveSource {
    fn build(&mut self, version: u32) -> Result<IndexSegment, IndexError> {
        index_bundle(&self.bundles[version as usize - 1], version, &self.pre)
    }
}

/// Releases precomputed segments, each after its recorded build time
/// divided by `speedup`.
pub struct ReplaySource {
    segments: Vec<IndexSegment>,
    speedup: f64,
}

impl ReplaySource {
    /// `segments[i]` must be bundle `i + 1`.
    pub fn new(segments: Vec<IndexSegment>, speedup: f64) -> Self {
        assert!(speedup > 0.0, "speedup must be positive");
        Self { segments, speedup }
    }

    pub fn delay(&self, version: u32) -> Duration {
        let micros = self.segments[version as usize - 1].build_micros as f64 / self.speedup;
        Duration::from_secs_f64(micros / 1e6)
    }
}

impl SegmentSource for ReplaySource {
    fn build(&mut self, version: u32) -> Result<IndexSegment, IndexError> {
        let seg = self.restore(version)?;
        thread::sleep(self.delay(version));
        Ok(seg)
    }

    fn restore(&mut self, version: u32) -> Result<IndexSegment, IndexError> {
        self.segments
            .get(version as usize - 1)
            .cloned()
            .ok_or_else(|| IndexError::BadSegmentFile(format!("no precomputed segment {version}")))
    }
}

struct Coordinator {
    state: ProgressionState,
    snapshots: BTreeMap<u32, Arc<IndexSnapshot>>,
    failure: Option<String>,
    shutdown: bool,
    /// Set while versions from before a restart are being rebuilt.
    restoring: bool,
}

/// Called with the new state after every transition, under the coordinator lock.
pub type Observer = Box<dyn Fn(&ProgressionState) + Send + Sync>;

struct Shared {
    coord: Mutex<Coordinator>,
    changed: Condvar,
    current: ArcSwapOption<IndexSnapshot>,
    view: ArcSwap<StatusView>,
    observer: Option<Observer>,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Coordinator> {
        self.coord.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Publishes the snapshot and status for the coordinator's current state.
    fn publish(&self, coord: &mut Coordinator) {
        let active = coord.state.active_version();
        coord.snapshots.retain(|&v, _| v >= active);
        let snap = coord.snapshots.get(&active).cloned();
        let same = match (snap.as_ref(), self.current.load().as_ref()) {
            (Some(a), Some(b)) => Arc::ptr_eq(a, b),
            (None, None) => true,
            _ => false,
        };
        if !same {
            self.current.store(snap);
        }
        let mut view = coord.state.view();
        view.error = coord.failure.clone();
        if let Some(observer) = &self.observer {
            if **self.view.load() != view {
                observer(&coord.state);
            }
        }
        self.view.store(Arc::new(view));
        self.changed.notify_all();
    }
}

/// One builder thread plus a serialized coordinator; readers load the
/// published snapshot and status without locking.
pub struct ProgressionEngine {
    shared: Arc<Shared>,
    source: Mutex<Option<Box<dyn SegmentSource>>>,
    handle: Mutex<Option<JoinHandle<()>>>,
}

impl ProgressionEngine {
    pub fn new(state: ProgressionState, source: Box<dyn SegmentSource>) -> Self {
        Self::with_observer(state, source, None)
    }

    pub fn with_observer(state: ProgressionState, source: Box<dyn SegmentSource>, observer: Option<Observer>) -> Self {
        let view = state.view();
        Self {
            shared: Arc::new(Shared {
                coord: Mutex::new(Coordinator {
                    state,
                    snapshots: BTreeMap::new(),
                    failure: None,
                    shutdown: false,
                    restoring: false,
                }),
                changed: Condvar::new(),
                current: ArcSwapOption::empty(),
                view: ArcSwap::from_pointee(view),
                observer,
            }),
            source: Mutex::new(Some(source)),
            handle: Mutex::new(None),
        }
    }

    /// Starts a fresh progression, or resumes one restored from a saved
    /// state. On resume, already-built versions are rebuilt before the
    /// snapshot is republished; the status is visible immediately.
    pub fn start(&self) -> Result<(), ProgressionError> {
        let source = self
            .source
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .take()
            .ok_or(ProgressionError::AlreadyStarted)?;
        let rebuild_through = {
            let mut coord = self.shared.lock();
            if coord.state.status() == Status::Idle {
                coord.state.start()?;
            }
            coord.restoring = coord.state.built_through() > 0;
            self.shared.publish(&mut coord);
            coord.state.built_through()
        };
        let shared = Arc::clone(&self.shared);
        let handle = thread::Builder::new()
            .name("progression-builder".into())
            .spawn(move || builder_loop(shared, source, rebuild_through))
            .expect("spawn builder thread");
        *self.handle.lock().unwrap_or_else(|e| e.into_inner()) = Some(handle);
        Ok(())
    }

    /// Waits for a resumed progression to republish its active snapshot.
    /// Returns false on timeout or builder failure.
    pub fn wait_restored(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut coord = self.shared.lock();
        while coord.restoring && coord.failure.is_none() {
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            coord = self
                .shared
                .changed
                .wait_timeout(coord, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        coord.failure.is_none()
    }

    /// Applies a decision. During a restore this waits for the rebuilt
    /// snapshots so the adopted version is never missing.
    pub fn decide(&self, decision: Decision) -> Result<StatusView, ProgressionError> {
        let mut coord = self.shared.lock();
        while coord.restoring && coord.failure.is_none() {
            coord = self.shared.changed.wait(coord).unwrap_or_else(|e| e.into_inner());
        }
        coord.state.decide(decision)?;
        self.shared.publish(&mut coord);
        Ok(coord.state.view())
    }

    /// The snapshot for the active version. Lock-free.
    pub fn current_snapshot(&self) -> Result<Arc<IndexSnapshot>, ProgressionError> {
        self.shared.current.load_full().ok_or(ProgressionError::NotYetAvailable)
    }

    /// Latest published status. Lock-free.
    pub fn status(&self) -> Arc<StatusView> {
        self.shared.view.load_full()
    }

    /// A copy of the full state, for persistence.
    pub fn state(&self) -> ProgressionState {
        self.shared.lock().state.clone()
    }

    /// Blocks until `pred` holds for the status, or the timeout passes.
    pub fn wait_until<F>(&self, timeout: Duration, mut pred: F) -> Option<StatusView>
    where
        F: FnMut(&StatusView) -> bool,
    {
        let deadline = Instant::now() + timeout;
        let mut coord = self.shared.lock();
        loop {
            let mut view = coord.state.view();
            view.error = coord.failure.clone();
            if pred(&view) {
                return Some(view);
            }
            let now = Instant::now();
            if now >= deadline || coord.failure.is_some() {
                return None;
            }
            coord = self
                .shared
                .changed
                .wait_timeout(coord, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    /// Stops the builder after its current segment and waits for it.
    pub fn shutdown(&self) {
        self.shared.lock().shutdown = true;
        self.shared.changed.notify_all();
        if let Some(h) = self.handle.lock().unwrap_or_else(|e| e.into_inner()).take() {
            let _ = h.join();
        }
    }
}

impl Drop for ProgressionEngine {
    fn drop(&mut self) {
        self.shared.lock().shutdown = true;
        self.shared.changed.notify_all();
    }
}

fn builder_loop(shared: Arc<Shared>, mut source: Box<dyn SegmentSource>, rebuild_through: u32) {
    let fail = |shared: &Shared, msg: String| {
        tracing::error!(error = %msg, "builder stopped");
        let mut coord = shared.lock();
        coord.failure = Some(msg);
        shared.publish(&mut coord);
    };

    let mut latest = Arc::new(IndexSnapshot::empty());
    // Restore versions that existed before a restart, without state transitions.
    for version in 1..=rebuild_through {
        match source.restore(version).and_then(|seg| latest.merge(&seg)) {
            Ok(snap) => latest = Arc::new(snap),
            Err(e) => return fail(&shared, e.to_string()),
        }
        let mut coord = shared.lock();
        if version >= coord.state.active_version() {
            coord.snapshots.insert(version, Arc::clone(&latest));
        }
        if version == rebuild_through {
            coord.restoring = false;
            shared.publish(&mut coord);
        }
    }

    loop {
        let version = {
            let mut coord = shared.lock();
            loop {
                if coord.shutdown {
                    return;
                }
                if let Some(v) = coord.state.building_version() {
                    break v;
                }
                if !coord.state.awaiting_decision() {
                    return;
                }
                coord = shared.changed.wait(coord).unwrap_or_else(|e| e.into_inner());
            }
        };
        let started = Instant::now();
        let snap = match source.build(version).and_then(|seg| latest.merge(&seg)) {
            Ok(snap) => Arc::new(snap),
            Err(e) => return fail(&shared, e.to_string()),
        };
        latest = Arc::clone(&snap);
        let mut coord = shared.lock();
        coord.snapshots.insert(version, snap);
        match coord.state.on_segment_ready(version) {
            Ok(note) => {
                tracing::info!(version, elapsed_ms = started.elapsed().as_millis() as u64, notified = note.is_some(), "segment ready");
            }
            Err(e) => {
                drop(coord);
                return fail(&shared, e.to_string());
            }
        }
        shared.publish(&mut coord);
    }
}
