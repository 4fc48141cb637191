//! File formats: write/parse round trips, and parsers never panic.

use proptest::prelude::*;

use progeval_core::bundler::{plan_bundles, BundlePlan};
use progeval_core::corpus_io::{
    parse_qrels, parse_run, parse_topics, parse_trec_documents, write_run, write_topics, write_trec_documents,
    Document, Qrels, Run, Topic,
};

fn token() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9_.-]{0,11}"
}

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z]{1,8}", 1..8).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn run_round_trip(
        tag in "[a-z]{1,6}\\.[a-z]{1,6}\\.v[1-9]",
        topics in prop::collection::btree_map("[1-9][0-9]{0,3}", prop::collection::btree_set(token(), 0..20), 1..5),
    ) {
        let mut run = Run::new(tag.clone(), 0);
        for (topic, docs) in &topics {
            let ranked: Vec<(String, f64)> = docs
                .iter()
                .enumerate()
                .map(|(i, d)| (d.clone(), 100.0 - i as f64 * 0.5))
                .collect();
            run.push_topic(topic.clone(), ranked);
        }
        let mut buf = Vec::new();
        write_run(&run, &mut buf).unwrap();
        if buf.is_empty() {
            return Ok(());
        }
        let back = parse_run(&buf[..]).unwrap();
        prop_assert_eq!(&back.tag, &tag);
        for (topic, docs) in &run.entries {
            if docs.is_empty() {
                continue;
            }
            let parsed = back.topic(topic).unwrap();
            prop_assert_eq!(parsed.len(), docs.len());
            for (a, b) in parsed.iter().zip(docs) {
                prop_assert_eq!(&a.doc_id, &b.doc_id);
                prop_assert_eq!(a.rank, b.rank);
                prop_assert!((a.score - b.score).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn qrels_round_trip(entries in prop::collection::btree_map(("[1-9][0-9]{0,2}", token()), 0u32..4, 0..40)) {
        let mut qrels = Qrels::new();
        for ((t, d), g) in &entries {
            qrels.insert(t, d, *g).unwrap();
        }
        let mut buf = Vec::new();
        qrels.write(&mut buf).unwrap();
        prop_assert_eq!(parse_qrels(&buf[..]).unwrap(), qrels);
    }

    #[test]
    fn documents_round_trip(docs in prop::collection::btree_map(token(), words(), 0..12)) {
        let docs: Vec<Document> = docs.into_iter().map(|(id, text)| Document::new(id, text)).collect();
        let mut buf = Vec::new();
        write_trec_documents(&docs, &mut buf).unwrap();
        let back = parse_trec_documents(&buf[..]).unwrap();
        prop_assert_eq!(back.len(), docs.len());
        for (a, b) in back.iter().zip(&docs) {
            prop_assert_eq!(&a.doc_id, &b.doc_id);
            prop_assert_eq!(a.text.split_whitespace().collect::<Vec<_>>(), b.text.split_whitespace().collect::<Vec<_>>());
        }
    }

    #[test]
    fn topics_round_trip(titles in prop::collection::vec((words(), prop::option::of(words())), 1..6)) {
        let topics: Vec<Topic> = titles
            .into_iter()
            .enumerate()
            .map(|(i, (title, description))| Topic {
                topic_id: (301 + i).to_string(),
                title,
                description,
                narrative: None,
            })
            .collect();
        let mut buf = Vec::new();
        write_topics(&topics, &mut buf).unwrap();
        prop_assert_eq!(parse_topics(&buf[..]).unwrap(), topics);
    }

    #[test]
    fn bundle_plan_file_round_trip(size in 1usize..300, n in 1usize..12, seed in any::<u64>()) {
        prop_assume!(n <= size);
        let ids: Vec<String> = (0..size).map(|i| format!("doc{i}")).collect();
        let plan = plan_bundles(&ids, n, seed).unwrap();
        let mut buf = Vec::new();
        plan.write(&mut buf).unwrap();
        prop_assert_eq!(BundlePlan::read(&buf[..]).unwrap(), plan);
    }

    #[test]
    fn parsers_are_total(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_trec_documents(&bytes[..]);
        let _ = parse_topics(&bytes[..]);
        let _ = parse_qrels(&bytes[..]);
        let _ = parse_run(&bytes[..]);
        let _ = BundlePlan::read(&bytes[..]);
    }

    #[test]
    fn parsers_are_total_on_tagged_text(
        parts in prop::collection::vec(prop::sample::select(vec![
            "<DOC>", "</DOC>", "<DOCNO>", "</DOCNO>", "<top>", "</top>", "<num>", "<title>", "<desc>",
            "<narr>", "Number:", " x ", "\n", "301", "Q0", "1.5", "-2", "\u{e5}",
        ]), 0..60)
    ) {
        let text = parts.concat();
        let _ = parse_trec_documents(text.as_bytes());
        let _ = parse_topics(text.as_bytes());
        let _ = parse_qrels(text.as_bytes());
        let _ = parse_run(text.as_bytes());
    }
}
