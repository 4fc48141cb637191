//! Seeded synthetic test collections: documents, topics and graded qrels.
//!
//! Background tokens follow a Zipf law over a vocabulary whose head is real
//! English function words and whose tail is pronounceable nonsense words in
//! three inflected forms (`bako`, `bakos`, `bakoing`), so stoplists and
//! stemmers both change what gets indexed. Each topic owns three theme
//! words; selected documents receive theme tokens at a chosen density and
//! are graded by the density actually present.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::{Document, Qrels, Topic};
use crate::textproc::{Stoplist, StoplistId};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_docs: usize,
    pub vocab_size: usize,
    /// Log-normal document length parameters, in tokens.
    pub doc_len_mu: f64,
    pub doc_len_sigma: f64,
    pub zipf_s: f64,
    pub n_topics: usize,
    pub relevant_per_topic: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_docs: 1000,
            vocab_size: 5000,
            doc_len_mu: 5.0,
            doc_len_sigma: 0.5,
            zipf_s: 1.1,
            n_topics: 50,
            relevant_per_topic: 10,
            seed: 42,
        }
    }
}

pub const FIRST_TOPIC_ID: usize = 301;
pub const THEME_SIZE: usize = 3;
pub const GRADE_1_DENSITY: f64 = 0.03;
pub const GRADE_2_DENSITY: f64 = 0.07;
const MIN_DOC_LEN: usize = 10;

const HEAD_WORDS: &[&str] = &[
    "the", "of", "and", "to", "a", "in", "is", "that", "for", "it", "as", "was", "with", "be", "by", "on",
    "not", "he", "this", "are", "or", "his", "from", "at", "which", "but", "have", "an", "they", "were",
    "her", "she", "there", "been", "all", "we", "their", "has", "would", "will",
];
const SUFFIXES: [&str; 3] = ["", "s", "ing"];
const CONSONANTS: &[u8] = b"bcdfghklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub documents: Vec<Document>,
    pub topics: Vec<Topic>,
    pub qrels: Qrels,
}

/// Bijective base-80 spelling of `k` in consonant-vowel syllables, at least two.
fn spell(k: usize) -> String {
    let radix = CONSONANTS.len() * VOWELS.len();
    // Offsetting past the one-digit numbers forces two syllables.
    let mut k = k + radix + 1;
    let mut syllables = Vec::new();
    while k > 0 {
        k -= 1;
        let digit = k % radix;
        syllables.push([CONSONANTS[digit / VOWELS.len()], VOWELS[digit % VOWELS.len()]]);
        k /= radix;
    }
    syllables.iter().rev().flat_map(|s| s.iter().map(|&b| b as char)).collect()
}

struct Vocabulary {
    /// Surface forms by Zipf rank (0-based).
    words: Vec<String>,
    /// Base word index for each rank; `None` for head words.
    base_of: Vec<Option<usize>>,
    /// Forms of each base word, uninflected first.
    forms: Vec<[String; 3]>,
}

impl Vocabulary {
    fn build(size: usize) -> Self {
        let stop: Vec<_> = StoplistId::ALL.iter().map(|&id| Stoplist::builtin(id)).collect();
        let mut words: Vec<String> = HEAD_WORDS.iter().take(size).map(|w| w.to_string()).collect();
        let mut base_of = vec![None; words.len()];
        let mut forms = Vec::new();
        let mut k = 0;
        while words.len() < size {
            let stem = spell(k);
            k += 1;
            let variants = SUFFIXES.map(|s| format!("{stem}{s}"));
            if variants.iter().any(|v| stop.iter().any(|s| s.contains(v))) {
                continue;
            }
            for v in &variants {
                if words.len() < size {
                    words.push(v.clone());
                    base_of.push(Some(forms.len()));
                }
            }
            forms.push(variants);
        }
        Self { words, base_of, forms }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SynthError> {
        for (name, v) in [
            ("n_docs", self.n_docs),
            ("vocab_size", self.vocab_size),
            ("n_topics", self.n_topics),
            ("relevant_per_topic", self.relevant_per_topic),
        ] {
            if v == 0 {
                return Err(SynthError::NonPositive(name));
            }
        }
        if self.zipf_s.is_nan() || self.zipf_s <= 0.0 {
            return Err(SynthError::NonPositive("zipf_s"));
        }
        if self.doc_len_sigma.is_nan() || self.doc_len_sigma < 0.0 || !self.doc_len_mu.is_finite() {
            return Err(SynthError::InfeasibleSpec("invalid document length parameters".into()));
        }
        if self.relevant_per_topic > self.n_docs {
            return Err(SynthError::InfeasibleSpec(format!(
                "relevant_per_topic {} exceeds n_docs {}",
                self.relevant_per_topic, self.n_docs
            )));
        }
        Ok(())
    }
}

/// Generates a collection fully determined by `spec` (including its seed).
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab = Vocabulary::build(spec.vocab_size);

    // Themes come from the middle of the base-word ranks: frequent enough to
    // appear in background text, rare enough to discriminate.
    let n_bases = vocab.forms.len();
    let (lo, hi) = (n_bases / 10, n_bases / 2);
    let needed = spec.n_topics * THEME_SIZE;
    if hi - lo < needed {
        return Err(SynthError::InfeasibleSpec(format!(
            "vocab_size {} leaves {} mid-rank words for {} theme words",
            spec.vocab_size,
            hi - lo,
            needed
        )));
    }
    let picked = sample(&mut rng, hi - lo, needed).into_vec();
    let themes: Vec<Vec<usize>> = picked.chunks(THEME_SIZE).map(|c| c.iter().map(|&i| lo + i).collect()).collect();

    let zipf = Zipf::new(spec.vocab_size as f64, spec.zipf_s).expect("validated Zipf parameters");
    let lengths = LogNormal::new(spec.doc_len_mu, spec.doc_len_sigma).expect("validated length parameters");

    let mut bodies: Vec<Vec<usize>> = (0..spec.n_docs)
        .map(|_| {
            let len = (lengths.sample(&mut rng).round() as usize).max(MIN_DOC_LEN);
            (0..len).map(|_| zipf.sample(&mut rng) as usize - 1).collect()
        })
        .collect();

    // Per topic: on-topic documents get a density that clears a grade
    // threshold, near misses a density that does not.
    let near_misses = spec.relevant_per_topic.min(spec.n_docs - spec.relevant_per_topic);
    let mut injections: Vec<Vec<(usize, f64)>> = vec![Vec::new(); spec.n_docs];
    for t in 0..spec.n_topics {
        let chosen = sample(&mut rng, spec.n_docs, spec.relevant_per_topic + near_misses).into_vec();
        for (j, &doc) in chosen.iter().enumerate() {
            let density = if j < spec.relevant_per_topic {
                rng.random_range(0.035..0.12)
            } else {
                rng.random_range(0.005..0.02)
            };
            injections[doc].push((t, density));
        }
    }
    let rank_of: BTreeMap<&str, usize> = vocab.words.iter().enumerate().map(|(r, w)| (w.as_str(), r)).collect();
    for (doc, plan) in injections.iter().enumerate() {
        let base_len = bodies[doc].len();
        for &(t, density) in plan {
            let count = (density * base_len as f64 / (1.0 - density)).ceil() as usize;
            for _ in 0..count {
                let base = themes[t][rng.random_range(0..THEME_SIZE)];
                let form = match rng.random_range(0..10) {
                    0..=5 => 0,
                    6 | 7 => 1,
                    _ => 2,
                };
                let word = &vocab.forms[base][form];
                // Forms cut off by vocab_size fall back to the base form.
                let rank = rank_of.get(word.as_str()).copied().unwrap_or_else(|| rank_of[vocab.forms[base][0].as_str()]);
                let pos = rng.random_range(0..=bodies[doc].len());
                bodies[doc].insert(pos, rank);
            }
        }
    }

    let documents: Vec<Document> = bodies
        .iter()
        .enumerate()
        .map(|(i, body)| {
            let text = body
                .chunks(12)
                .map(|line| line.iter().map(|&r| vocab.words[r].as_str()).collect::<Vec<_>>().join(" "))
                .collect::<Vec<_>>()
                .join("\n");
            Document::new(format!("SYN-{:06}", i + 1), text)
        })
        .collect();

    let topics: Vec<Topic> = themes
        .iter()
        .enumerate()
        .map(|(t, theme)| {
            let words: Vec<&str> = theme.iter().map(|&b| vocab.forms[b][0].as_str()).collect();
            Topic {
                topic_id: (FIRST_TOPIC_ID + t).to_string(),
                title: words.join(" "),
                description: Some(format!("Documents about {} with {}.", words[0], words[1..].join(" or "))),
                narrative: Some(format!(
                    "A relevant document mentions {} repeatedly. Passing mentions are not relevant.",
                    words.join(", ")
                )),
            }
        })
        .collect();

    // Judge every document containing a theme word, graded by density.
    let mut qrels = Qrels::new();
    for (t, theme) in themes.iter().enumerate() {
        let theme: BTreeSet<usize> = theme.iter().copied().collect();
        let topic_id = topics[t].topic_id.as_str();
        let mut relevant = 0;
        for (body, doc) in bodies.iter().zip(&documents) {
            let hits = body
                .iter()
                .filter(|&&r| vocab.base_of[r].is_some_and(|b| theme.contains(&b)))
                .count();
            if hits == 0 {
                continue;
            }
            let density = hits as f64 / body.len() as f64;
            let grade = if density >= GRADE_2_DENSITY {
                2
            } else if density >= GRADE_1_DENSITY {
                1
            } else {
                0
            };
            relevant += usize::from(grade > 0);
            qrels.insert(topic_id, &doc.doc_id, grade).expect("each document judged once per topic");
        }
        if relevant == 0 {
            return Err(SynthError::InfeasibleSpec(format!("topic {topic_id} has no relevant document")));
        }
    }

    Ok(SynthCorpus { documents, topics, qrels })
}
