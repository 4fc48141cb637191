//! Progressive retrieval evaluation over incrementally built indexes.
//!
//! The corpus is split into disjoint bundles ([`bundler`]), each bundle is
//! indexed into a segment and merged into an immutable snapshot
//! ([`index`]), and a coordinator hands snapshots to query users while the
//! next bundle is being built ([`progression`]). Runs produced against any
//! snapshot ([`retrieval`]) are evaluated ([`evaluation`]) and compared to
//! the full-index results ([`analysis`]).

pub mod analysis;
pub mod bundler;
pub mod corpus_io;
pub mod evaluation;
pub mod index;
pub mod progression;
pub mod retrieval;
pub mod rng;
pub mod synth;
pub mod textproc;

pub use bundler::{plan_bundles, BundlePlan};
pub use corpus_io::{Document, Qrels, RankedDoc, Run, Topic};
pub use evaluation::{evaluate_run, EvaluationResult, Measure};
pub use index::{index_bundle, IndexSegment, IndexSnapshot};
pub use retrieval::{run_batch, ModelSpec};
pub use textproc::{Pipeline, Preprocessor, StemmerId, StoplistId};
