//! State machine traces against a reference model, and the threaded engine.

mod common;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use progeval_core::index::{index_bundle, IndexSegment, IndexSnapshot};
use progeval_core::progression::{
    Decision, LiveSource, ProgressionEngine, ProgressionError, ProgressionState, ReplaySource, Status,
};
use progeval_core::synth::{generate, SynthCorpus, SynthSpec};
use progeval_core::textproc::{Preprocessor, StemmerId, StoplistId};

use common::{docs_through, plan_for};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Event {
    Ready(u32),
    Decide(Decision),
}

/// Plain-integer restatement of the protocol.
#[derive(Debug, Clone, PartialEq)]
struct Model {
    n: u32,
    active: u32,
    built: u32,
    paused: bool,
}

impl Model {
    fn pending(&self) -> Option<u32> {
        (self.built > self.active).then_some(self.active + 1)
    }
    fn building(&self) -> Option<u32> {
        (!self.paused && self.built < self.n).then_some(self.built + 1)
    }
    fn status(&self) -> Status {
        if self.active == self.n {
            Status::Complete
        } else if self.pending().is_some() {
            Status::PendingDecision
        } else {
            Status::Building
        }
    }
    fn apply(&mut self, e: Event) {
        match e {
            Event::Ready(v) => {
                self.built = v;
                if v == 1 {
                    self.active = 1;
                } else {
                    self.paused = true;
                }
            }
            Event::Decide(d) => {
                if d == Decision::Update {
                    self.active += 1;
                }
                self.paused = false;
            }
        }
    }
}

fn enabled(s: &ProgressionState) -> Vec<Event> {
    let mut out = Vec::new();
    if let Some(v) = s.building_version() {
        out.push(Event::Ready(v));
    }
    if s.pending_version().is_some() {
        out.push(Event::Decide(Decision::Update));
        // Deferring only means something while the builder waits on it.
        if s.awaiting_decision() {
            out.push(Event::Decide(Decision::ContinueCurrent));
        }
    }
    out
}

struct Stats {
    traces: usize,
    finished_builds: usize,
}

fn explore(s: ProgressionState, model: Model, updates: u32, stats: &mut Stats) {
    assert_eq!(s.active_version(), model.active);
    assert_eq!(s.pending_version(), model.pending());
    assert_eq!(s.building_version(), model.building());
    assert_eq!(s.status(), model.status());
    if let Some(p) = s.pending_version() {
        assert_eq!(p, s.active_version() + 1);
        if let Some(b) = s.building_version() {
            assert!(p < b);
        }
    }
    assert_eq!(s.status() == Status::Complete, s.active_version() == s.n());

    // Once the builder is done, completion hinges on every update being accepted.
    if s.building_version().is_none() && !s.awaiting_decision() {
        stats.finished_builds += 1;
        assert_eq!(s.status() == Status::Complete, updates == s.n() - 1, "{s:?}");
    }

    let events = enabled(&s);
    if events.is_empty() {
        assert_eq!(s.status(), Status::Complete, "stuck: {s:?}");
        stats.traces += 1;
        return;
    }
    for e in events {
        let mut next = s.clone();
        let mut next_model = model.clone();
        match e {
            Event::Ready(v) => {
                let note = next.on_segment_ready(v).unwrap();
                assert_eq!(note.is_some(), v >= 2);
            }
            Event::Decide(d) => next.decide(d).unwrap(),
        }
        next_model.apply(e);
        assert!(next.active_version() >= s.active_version(), "active went backwards");
        let added = u32::from(e == Event::Decide(Decision::Update));
        explore(next, next_model, updates + added, stats);
    }
}

#[test]
fn all_decision_sequences_up_to_four_bundles() {
    for n in 1..=4u32 {
        let mut s = ProgressionState::new(vec![5; n as usize]).unwrap();
        s.start().unwrap();
        let model = Model { n, active: 0, built: 0, paused: false };
        let mut stats = Stats { traces: 0, finished_builds: 0 };
        explore(s, model, 0, &mut stats);
        assert!(stats.traces >= 1);
        assert!(stats.finished_builds >= 1);
    }
}

#[test]
fn always_updating_completes_after_n_segments() {
    for n in 1..=10u32 {
        let mut s = ProgressionState::new(vec![3; n as usize]).unwrap();
        s.start().unwrap();
        let mut segments = 0;
        while s.status() != Status::Complete {
            if let Some(v) = s.building_version() {
                s.on_segment_ready(v).unwrap();
                segments += 1;
            }
            if s.pending_version().is_some() {
                s.decide(Decision::Update).unwrap();
            }
        }
        assert_eq!(segments, n);
        assert_eq!(s.notifications().len(), n as usize - 1);
    }
}

#[test]
fn errors_outside_the_protocol() {
    let mut s = ProgressionState::new(vec![1, 1, 1]).unwrap();
    assert_eq!(s.decide(Decision::Update), Err(ProgressionError::NoPendingVersion));
    s.start().unwrap();
    assert_eq!(
        s.on_segment_ready(2),
        Err(ProgressionError::VersionMismatch { expected: Some(1), found: 2 })
    );
    assert!(ProgressionState::new(vec![]).is_err());
}

fn corpus(n_docs: usize) -> SynthCorpus {
    generate(&SynthSpec {
        n_docs,
        vocab_size: 800,
        n_topics: 3,
        relevant_per_topic: 2,
        seed: 5,
        ..SynthSpec::default()
    })
    .unwrap()
}

fn pre() -> Preprocessor {
    Preprocessor::builtin(StoplistId::Lucene, &StemmerId::Porter).unwrap()
}

fn segments(c: &SynthCorpus, n: usize) -> Vec<IndexSegment> {
    let plan = plan_for(&c.documents, n, 9);
    (1..=n)
        .map(|i| {
            let prev = docs_through(&c.documents, &plan, i - 1);
            let bundle: Vec<_> = docs_through(&c.documents, &plan, i)
                .into_iter()
                .filter(|d| !prev.contains(d))
                .collect();
            index_bundle(&bundle, i as u32, &pre()).unwrap()
        })
        .collect()
}

const WAIT: Duration = Duration::from_secs(30);

#[test]
fn live_engine_walks_through_all_versions() {
    let c = corpus(120);
    let plan = plan_for(&c.documents, 4, 9);
    let expected = IndexSnapshot::chain(&segments(&c, 4)).unwrap();
    let state = ProgressionState::from_plan(&plan).unwrap();
    let engine = ProgressionEngine::new(state, Box::new(LiveSource::new(&c.documents, &plan, pre()).unwrap()));

    assert_eq!(engine.current_snapshot().unwrap_err(), ProgressionError::NotYetAvailable);
    assert_eq!(engine.status().status, Status::Idle);
    engine.start().unwrap();
    assert_eq!(engine.start(), Err(ProgressionError::AlreadyStarted));

    let view = engine.wait_until(WAIT, |v| v.pending_version == Some(2)).unwrap();
    assert_eq!(view.active_version, 1);
    assert_eq!(view.status, Status::PendingDecision);
    assert_eq!(view.building_version, None);
    assert_eq!(view.docs_indexed, 30);
    assert!((view.percent_indexed - 25.0).abs() < 1e-9);
    assert_eq!(engine.current_snapshot().unwrap().fingerprint(), expected[0].fingerprint());

    // Defer 2, let 3 finish, then adopt both.
    engine.decide(Decision::ContinueCurrent).unwrap();
    engine.wait_until(WAIT, |v| v.notifications == 2).unwrap();
    assert_eq!(engine.status().active_version, 1);
    assert_eq!(engine.status().pending_version, Some(2));
    engine.decide(Decision::Update).unwrap();
    assert_eq!(engine.current_snapshot().unwrap().fingerprint(), expected[1].fingerprint());
    engine.decide(Decision::Update).unwrap();
    assert_eq!(engine.current_snapshot().unwrap().version(), 3);
    engine.wait_until(WAIT, |v| v.pending_version == Some(4)).unwrap();
    let done = engine.decide(Decision::Update).unwrap();
    assert_eq!(done.status, Status::Complete);
    assert!((done.percent_indexed - 100.0).abs() < 1e-9);
    assert!(engine.current_snapshot().unwrap().same_content(&expected[3]));
    assert_eq!(engine.decide(Decision::Update), Err(ProgressionError::NoPendingVersion));
    engine.shutdown();
}

#[test]
fn replay_releases_segments_on_a_timer() {
    let c = corpus(60);
    let mut segs = segments(&c, 3);
    for s in &mut segs {
        s.build_micros = 200_000;
    }
    let state = ProgressionState::new(segs.iter().map(|s| s.doc_count()).collect()).unwrap();
    let engine = ProgressionEngine::new(state, Box::new(ReplaySource::new(segs, 4.0)));
    let t0 = Instant::now();
    engine.start().unwrap();
    engine.wait_until(WAIT, |v| v.active_version == 1).unwrap();
    engine.wait_until(WAIT, |v| v.pending_version == Some(2)).unwrap();
    // Two segments at 200 ms / 4 each.
    assert!(t0.elapsed() >= Duration::from_millis(100), "{:?}", t0.elapsed());
    engine.decide(Decision::Update).unwrap();
    engine.wait_until(WAIT, |v| v.pending_version == Some(3)).unwrap();
    engine.decide(Decision::Update).unwrap();
    assert_eq!(engine.status().status, Status::Complete);
}

#[test]
fn replay_notifications_are_deterministic() {
    let c = corpus(90);
    let run = || {
        let segs = segments(&c, 5);
        let state = ProgressionState::new(segs.iter().map(|s| s.doc_count()).collect()).unwrap();
        let engine = ProgressionEngine::new(state, Box::new(ReplaySource::new(segs, 1000.0)));
        engine.start().unwrap();
        for v in 2..=5 {
            engine.wait_until(WAIT, |s| s.pending_version == Some(v)).unwrap();
            engine.decide(Decision::Update).unwrap();
        }
        engine.state().notifications().to_vec()
    };
    let a = run();
    assert_eq!(a.len(), 4);
    assert_eq!(a, run());
}

#[test]
fn resumed_engine_rebuilds_and_keeps_the_pending_decision() {
    let c = corpus(80);
    let plan = plan_for(&c.documents, 4, 9);
    let expected = IndexSnapshot::chain(&segments(&c, 4)).unwrap();

    let mut saved = ProgressionState::from_plan(&plan).unwrap();
    saved.start().unwrap();
    saved.on_segment_ready(1).unwrap();
    saved.on_segment_ready(2).unwrap();
    saved.decide(Decision::Update).unwrap();
    saved.on_segment_ready(3).unwrap();
    let saved: ProgressionState = serde_json::from_str(&serde_json::to_string(&saved).unwrap()).unwrap();

    let engine = ProgressionEngine::new(saved, Box::new(LiveSource::new(&c.documents, &plan, pre()).unwrap()));
    engine.start().unwrap();
    let view = engine.status();
    assert_eq!((view.active_version, view.pending_version), (2, Some(3)));
    engine.wait_until(WAIT, |_| engine.current_snapshot().is_ok()).unwrap();
    assert_eq!(engine.current_snapshot().unwrap().fingerprint(), expected[1].fingerprint());
    engine.decide(Decision::Update).unwrap();
    assert_eq!(engine.current_snapshot().unwrap().fingerprint(), expected[2].fingerprint());
    engine.wait_until(WAIT, |v| v.pending_version == Some(4)).unwrap();
    engine.decide(Decision::Update).unwrap();
    assert_eq!(engine.current_snapshot().unwrap().fingerprint(), expected[3].fingerprint());
}

#[test]
fn readers_never_see_mixed_versions() {
    const SWAPS: usize = 10;
    const MIN_READS: usize = 10_000;
    let c = corpus(220);
    let segs = segments(&c, SWAPS + 1);
    let expected: Vec<u64> = IndexSnapshot::chain(&segs).unwrap().iter().map(|s| s.fingerprint()).collect();
    let state = ProgressionState::new(segs.iter().map(|s| s.doc_count()).collect()).unwrap();
    let engine = Arc::new(ProgressionEngine::new(state, Box::new(ReplaySource::new(segs, 1e6))));
    engine.start().unwrap();
    engine.wait_until(WAIT, |v| v.active_version == 1).unwrap();

    let done = Arc::new(AtomicBool::new(false));
    let reads = Arc::new(AtomicUsize::new(0));
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let (engine, done, reads, expected) = (engine.clone(), done.clone(), reads.clone(), expected.clone());
            thread::spawn(move || {
                let mut last = 0;
                let mut mixed = 0;
                while !done.load(Ordering::Acquire) || reads.load(Ordering::Relaxed) < MIN_READS {
                    let snap = engine.current_snapshot().unwrap();
                    let v = snap.version();
                    if snap.fingerprint() != expected[v as usize - 1] || snap.doc_count() == 0 {
                        mixed += 1;
                    }
                    assert!(v >= last, "version went from {last} to {v}");
                    last = v;
                    reads.fetch_add(1, Ordering::Relaxed);
                }
                mixed
            })
        })
        .collect();

    for v in 2..=(SWAPS as u32 + 1) {
        engine.wait_until(WAIT, |s| s.pending_version == Some(v)).unwrap();
        thread::sleep(Duration::from_millis(2));
        engine.decide(Decision::Update).unwrap();
    }
    done.store(true, Ordering::Release);
    let mixed: usize = readers.into_iter().map(|h| h.join().unwrap()).sum();
    assert_eq!(engine.status().status, Status::Complete);
    assert!(reads.load(Ordering::Relaxed) >= MIN_READS);
    assert_eq!(mixed, 0);
}
