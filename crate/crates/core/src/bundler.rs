//! Deterministic partition of a corpus into `n` disjoint, uniformly sampled
//! bundles. Bundles `1..n-1` hold `k = ⌊|D|/n⌋` documents; bundle `n` holds
//! the remaining `|D| - k(n-1)`.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

pub const DEFAULT_BUNDLES: usize = 10;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("cannot split an empty corpus into bundles")]
    EmptyCorpus,
    #[error("{n} bundles requested for {docs} documents")]
    TooManyBundles { n: usize, docs: usize },
    #[error("bundle count must be at least 1")]
    ZeroBundles,
    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),
    #[error("bundle index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("plan file line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundlePlan {
    n: usize,
    seed: u64,
    corpus_size: usize,
    /// Members of bundle `i + 1`, sorted by doc id.
    bundles: Vec<Vec<String>>,
}

/// Shuffles the sorted doc ids with seeded Fisher–Yates and cuts the
/// permutation into contiguous bundles.
pub fn plan_bundles<S: AsRef<str>>(
    doc_ids: &[S],
    n: usize,
    seed: u64,
) -> Result<BundlePlan, BundleError> {
    if n == 0 {
        return Err(BundleError::ZeroBundles);
    }
    if doc_ids.is_empty() {
        return Err(BundleError::EmptyCorpus);
    }
    if n > doc_ids.len() {
        return Err(BundleError::TooManyBundles {
            n,
            docs: doc_ids.len(),
        });
    }
    let mut ids: Vec<&str> = doc_ids.iter().map(AsRef::as_ref).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(BundleError::DuplicateDocId(w[0].to_string()));
    }

    let mut rng = SplitMix64::new(seed);
    for i in (1..ids.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        ids.swap(i, j);
    }

    let k = ids.len() / n;
    let mut bundles: Vec<Vec<String>> = (0..n)
        .map(|b| {
            let end = if b + 1 == n { ids.len() } else { (b + 1) * k };
            ids[b * k..end].iter().map(|s| s.to_string()).collect()
        })
        .collect();
    for b in &mut bundles {
        b.sort_unstable();
    }
    Ok(BundlePlan {
        n,
        seed,
        corpus_size: ids.len(),
        bundles,
    })
}

impl BundlePlan {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    /// Doc ids in bundle `index` (1-based), sorted.
    pub fn bundle_members(&self, index: usize) -> Result<&[String], BundleError> {
        if index == 0 || index > self.n {
            return Err(BundleError::IndexOutOfRange { index, n: self.n });
        }
        Ok(&self.bundles[index - 1])
    }

    pub fn bundle_sizes(&self) -> Vec<usize> {
        self.bundles.iter().map(Vec::len).collect()
    }

    /// Documents covered by bundles `1..=version`.
    pub fn docs_through(&self, version: usize) -> usize {
        self.bundles.iter().take(version).map(Vec::len).sum()
    }

    /// Doc id → bundle index, sorted by doc id.
    pub fn assignment(&self) -> BTreeMap<&str, usize> {
        self.bundles
            .iter()
            .enumerate()
            .flat_map(|(i, b)| b.iter().map(move |d| (d.as_str(), i + 1)))
            .collect()
    }

    /// Writes the header `n seed corpus_size`, then `doc_id bundle_index`
    /// lines sorted by doc id.
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{} {} {}", self.n, self.seed, self.corpus_size)?;
        for (doc_id, bundle) in self.assignment() {
            writeln!(out, "{doc_id} {bundle}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, BundleError> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.ok_or(BundleError::Malformed {
            line: 1,
            reason: "missing header".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parse_err = |line: usize, what: &str| BundleError::Malformed {
            line,
            reason: format!("invalid {what}"),
        };
        if fields.len() != 3 {
            return Err(parse_err(1, "header"));
        }
        let n: usize = fields[0].parse().map_err(|_| parse_err(1, "bundle count"))?;
        let seed: u64 = fields[1].parse().map_err(|_| parse_err(1, "seed"))?;
        let corpus_size: usize = fields[2].parse().map_err(|_| parse_err(1, "corpus size"))?;
        if n == 0 {
            return Err(BundleError::ZeroBundles);
        }

        let mut bundles = vec![Vec::new(); n];
        let mut seen = HashSet::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line_no = i + 2;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 2 {
                return Err(parse_err(line_no, "assignment"));
            }
            let index: usize = fields[1].parse().map_err(|_| parse_err(line_no, "bundle index"))?;
            if index == 0 || index > n {
                return Err(BundleError::IndexOutOfRange { index, n });
            }
            if !seen.insert(fields[0].to_string()) {
                return Err(BundleError::DuplicateDocId(fields[0].to_string()));
            }
            bundles[index - 1].push(fields[0].to_string());
        }
        if seen.len() != corpus_size {
            return Err(BundleError::Malformed {
                line: 1,
                reason: format!("header says {corpus_size} documents, found {}", seen.len()),
            });
        }
        for b in &mut bundles {
            b.sort_unstable();
        }
        Ok(Self {
            n,
            seed,
            corpus_size,
            bundles,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("D{i:05}")).collect()
    }

    #[test]
    fn sizes_follow_floor_formula() {
        let docs = ids(10);
        assert_eq!(plan_bundles(&docs, 3, 1).unwrap().bundle_sizes(), [3, 3, 4]);
        assert_eq!(plan_bundles(&docs, 10, 1).unwrap().bundle_sizes(), [1; 10]);
        let one = plan_bundles(&docs, 1, 1).unwrap();
        assert_eq!(one.bundle_members(1).unwrap(), &docs[..]);
    }

    #[test]
    fn rejects_bad_requests() {
        let docs = ids(3);
        assert!(matches!(plan_bundles(&docs, 4, 0), Err(BundleError::TooManyBundles { .. })));
        assert!(matches!(plan_bundles::<String>(&[], 1, 0), Err(BundleError::EmptyCorpus)));
        assert!(matches!(plan_bundles(&docs, 0, 0), Err(BundleError::ZeroBundles)));
        let dup = vec!["a", "b", "a"];
        assert!(matches!(plan_bundles(&dup, 1, 0), Err(BundleError::DuplicateDocId(_))));
        let plan = plan_bundles(&docs, 3, 0).unwrap();
        assert!(matches!(plan.bundle_members(0), Err(BundleError::IndexOutOfRange { .. })));
        assert!(matches!(plan.bundle_members(4), Err(BundleError::IndexOutOfRange { .. })));
    }

    #[test]
    fn input_order_does_not_matter() {
        let docs = ids(50);
        let mut reversed = docs.clone();
        reversed.reverse();
        assert_eq!(plan_bundles(&docs, 7, 42).unwrap(), plan_bundles(&reversed, 7, 42).unwrap());
    }

    #[test]
    fn different_seeds_give_different_plans() {
        let docs = ids(100);
        assert_ne!(plan_bundles(&docs, 10, 1).unwrap(), plan_bundles(&docs, 10, 2).unwrap());
    }

    #[test]
    fn plan_file_round_trip() {
        let plan = plan_bundles(&ids(23), 4, 99).unwrap();
        let mut buf = Vec::new();
        plan.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("4 99 23\nD00000 "));
        assert_eq!(BundlePlan::read(&buf[..]).unwrap(), plan);
    }

    /// Chi-square critical value for 9 degrees of freedom at significance 0.001.
    const CHI2_9DF_P001: f64 = 27.877;

    #[test]
    fn bundle_index_is_uniform_per_document() {
        let docs = ids(100);
        let mut counts = vec![[0u32; 10]; 100];
        for seed in 0..1000u64 {
            let plan = plan_bundles(&docs, 10, seed).unwrap();
            for (doc, bundle) in plan.assignment() {
                let d: usize = doc[1..].parse().unwrap();
                counts[d][bundle - 1] += 1;
            }
        }
        for (doc, row) in counts.iter().enumerate() {
            let chi2: f64 = row
                .iter()
                .map(|&c| (c as f64 - 100.0).powi(2) / 100.0)
                .sum();
            assert!(chi2 < CHI2_9DF_P001, "doc {doc}: chi2 = {chi2}, counts {row:?}");
        }
    }

    proptest! {
        #[test]
        fn partition_properties(size in 1usize..2000, n_frac in 0.0f64..1.0, seed: u64) {
            let n = 1 + ((size - 1) as f64 * n_frac) as usize;
            let docs = ids(size);
            let plan = plan_bundles(&docs, n, seed).unwrap();
            let k = size / n;
            let sizes = plan.bundle_sizes();
            for s in &sizes[..n - 1] {
                prop_assert_eq!(*s, k);
            }
            prop_assert_eq!(sizes[n - 1], size - k * (n - 1));

            let mut all: Vec<&String> = (1..=n).flat_map(|i| plan.bundle_members(i).unwrap()).collect();
            all.sort();
            let before = all.len();
            all.dedup();
            prop_assert_eq!(before, all.len());
            prop_assert_eq!(all.len(), size);

            prop_assert_eq!(plan_bundles(&docs, n, seed).unwrap(), plan);
        }
    }
}
