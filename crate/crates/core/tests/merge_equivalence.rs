//! An incrementally merged snapshot must be indistinguishable from an index
//! built in one pass over the same documents.

mod common;

use proptest::prelude::*;

use progeval_core::index::{index_bundle, IndexSnapshot};
use progeval_core::retrieval::{score, ModelSpec, Query};
use progeval_core::synth::{generate, SynthSpec};
use progeval_core::textproc::{Preprocessor, StemmerId, StoplistId};

use common::{batch_snapshot, docs_through, plan_for};

fn spec(n_docs: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        n_docs,
        vocab_size: 400,
        doc_len_mu: 3.5,
        n_topics: 3,
        relevant_per_topic: 1,
        seed,
        ..SynthSpec::default()
    }
}

fn check_chain(n_docs: usize, n: usize, seed: u64, pre: &Preprocessor) -> Result<(), TestCaseError> {
    let corpus = generate(&spec(n_docs, seed)).unwrap();
    let plan = plan_for(&corpus.documents, n, seed);
    let segments: Vec<_> = (1..=n)
        .map(|i| {
            let docs = docs_through(&corpus.documents, &plan, i);
            let prev = docs_through(&corpus.documents, &plan, i - 1);
            let bundle: Vec<_> = docs.into_iter().filter(|d| !prev.contains(d)).collect();
            index_bundle(&bundle, i as u32, pre).unwrap()
        })
        .collect();
    let chain = IndexSnapshot::chain(&segments).unwrap();
    prop_assert_eq!(chain.len(), n);

    let queries: Vec<Query> = corpus
        .topics
        .iter()
        .map(|t| Query::from_topic(t, pre, Default::default()))
        .collect();
    for (i, incremental) in chain.iter().enumerate() {
        let version = i + 1;
        let batch = batch_snapshot(&docs_through(&corpus.documents, &plan, version), pre);
        prop_assert_eq!(incremental.version() as usize, version);
        prop_assert!(incremental.same_content(&batch), "version {} differs", version);
        prop_assert_eq!(incremental.doc_count(), plan.docs_through(version));
        prop_assert_eq!(incremental.total_tokens(), batch.total_tokens());
        for term in batch.terms() {
            prop_assert_eq!(incremental.stats(term), batch.stats(term));
            prop_assert_eq!(incremental.postings(term), batch.postings(term));
        }
        for q in &queries {
            for model in [ModelSpec::bm25(), ModelSpec::Tfidf, ModelSpec::dirichlet(), ModelSpec::Boolean] {
                prop_assert_eq!(score(q, incremental, &model, 1000).unwrap(), score(q, &batch, &model, 1000).unwrap());
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn incremental_chain_equals_batch_build(
        n_docs in 1usize..=200,
        n_raw in 1usize..=10,
        seed in any::<u64>(),
        stoplist in prop::sample::select(StoplistId::ALL.to_vec()),
        porter in any::<bool>(),
    ) {
        let n = n_raw.min(n_docs);
        let stemmer = if porter { StemmerId::Porter } else { StemmerId::NoStem };
        let pre = Preprocessor::builtin(stoplist, &stemmer).unwrap();
        check_chain(n_docs, n, seed, &pre)?;
    }
}

#[test]
fn snapshots_share_untouched_postings() {
    let pre = Preprocessor::builtin(StoplistId::NoStop, &StemmerId::NoStem).unwrap();
    let corpus = generate(&spec(60, 3)).unwrap();
    let plan = plan_for(&corpus.documents, 2, 3);
    let first = docs_through(&corpus.documents, &plan, 1);
    let second: Vec<_> = corpus.documents.iter().filter(|d| !first.contains(d)).cloned().collect();
    let v1 = IndexSnapshot::empty().merge(&index_bundle(&first, 1, &pre).unwrap()).unwrap();
    let seg2 = index_bundle(&second, 2, &pre).unwrap();
    let v2 = v1.merge(&seg2).unwrap();
    let untouched = v1.terms().find(|t| !seg2.postings.contains_key(*t));
    if let Some(term) = untouched {
        assert!(v2.shares_postings(&v1, term));
    }
    let touched = v1.terms().find(|t| seg2.postings.contains_key(*t)).expect("common term");
    assert!(!v2.shares_postings(&v1, touched));
}
