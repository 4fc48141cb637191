//! Measures on the committed fixture against values from trec_eval.

use std::collections::BTreeMap;

use progeval_core::corpus_io::{parse_qrels, parse_run};
use progeval_core::evaluation::{evaluate_run, Measure};

const TOLERANCE: f64 = 1e-4;

fn golden() -> BTreeMap<(String, String), f64> {
    include_str!("data/measures/golden.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            ((f[0].to_string(), f[1].to_string()), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn fixture_matches_golden_values() {
    let run = parse_run(&include_bytes!("data/measures/run.txt")[..]).unwrap();
    let qrels = parse_qrels(&include_bytes!("data/measures/qrels.txt")[..]).unwrap();
    let golden = golden();
    assert_eq!(golden.len(), 21);
    let mut checked = 0;
    for ((measure, topic), expected) in &golden {
        let m: Measure = measure.parse().unwrap();
        let result = evaluate_run(&run, &qrels, m).unwrap();
        let got = result.per_topic[topic];
        assert!(
            (got - expected).abs() <= TOLERANCE,
            "{measure} topic {topic}: got {got}, expected {expected}"
        );
        checked += 1;
    }
    assert_eq!(checked, 21);
}

#[test]
fn means_are_topic_averages() {
    let run = parse_run(&include_bytes!("data/measures/run.txt")[..]).unwrap();
    let qrels = parse_qrels(&include_bytes!("data/measures/qrels.txt")[..]).unwrap();
    let golden = golden();
    for m in ["ap", "ndcg", "p_5", "rprec", "recip_rank"] {
        let expected: f64 = golden.iter().filter(|((g, _), _)| g == m).map(|(_, v)| v).sum::<f64>() / 3.0;
        let got = evaluate_run(&run, &qrels, m.parse().unwrap()).unwrap().mean;
        assert!((got - expected).abs() <= TOLERANCE, "{m}: {got} vs {expected}");
    }
}
