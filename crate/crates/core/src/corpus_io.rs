//! Readers and writers for the TREC collection formats: the SGML-like
//! document container, topic files, 4-column qrels and 6-column runs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("<DOC> block {block} has no <DOCNO>")]
    MissingDocno { block: usize },
    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),
    #[error("document id {0:?} contains whitespace")]
    InvalidDocId(String),
    #[error("unterminated <{tag}> block starting at byte {offset}")]
    UnterminatedBlock { tag: &'static str, offset: usize },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: negative relevance grade")]
    NegativeGrade { line: usize },
    #[error("duplicate judgment for topic {topic}, document {doc_id}")]
    DuplicateJudgment { topic: String, doc_id: String },
    #[error("<top> block {block} has no <title>")]
    MissingTitle { block: usize },
    #[error("<top> block {block} has no <num>")]
    MissingNum { block: usize },
    #[error("duplicate topic id {0:?}")]
    DuplicateTopicId(String),
    #[error("invalid run: {0}")]
    InvalidRun(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    /// Number of terms left after preprocessing; zero until a pipeline has run.
    pub token_count: usize,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
            token_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: String,
    pub title: String,
    pub description: Option<String>,
    pub narrative: Option<String>,
}

/// Relevance judgments keyed by topic, then document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, topic: &str, doc_id: &str, grade: u32) -> Result<()> {
        let per_topic = self.judgments.entry(topic.to_string()).or_default();
        if per_topic.contains_key(doc_id) {
            return Err(CorpusError::DuplicateJudgment {
                topic: topic.to_string(),
                doc_id: doc_id.to_string(),
            });
        }
        per_topic.insert(doc_id.to_string(), grade);
        Ok(())
    }

    pub fn grade(&self, topic: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(topic)?.get(doc_id).copied()
    }

    pub fn topic(&self, topic: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(topic)
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn num_relevant(&self, topic: &str) -> usize {
        self.topic(topic)
            .map(|j| j.values().filter(|&&g| g > 0).count())
            .unwrap_or(0)
    }

    /// Total number of judgments.
    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `topic 0 doc grade` lines, topics in numeric-aware order.
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut topics: Vec<&String> = self.judgments.keys().collect();
        topics.sort_by(|a, b| compare_topic_ids(a, b));
        for topic in topics {
            for (doc_id, grade) in &self.judgments[topic] {
                writeln!(out, "{topic} 0 {doc_id} {grade}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
    pub rank: u32,
}

/// Ranked document lists per topic for one system over one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub tag: String,
    pub snapshot_version: u32,
    pub entries: BTreeMap<String, Vec<RankedDoc>>,
}

pub const DEFAULT_RUN_DEPTH: usize = 1000;

impl Run {
    pub fn new(tag: impl Into<String>, snapshot_version: u32) -> Self {
        Self {
            tag: tag.into(),
            snapshot_version,
            entries: BTreeMap::new(),
        }
    }

    /// Adds a topic from an already ordered list of scored documents,
    /// assigning ranks 1..m.
    pub fn push_topic(&mut self, topic_id: impl Into<String>, ranked: Vec<(String, f64)>) {
        let docs = ranked
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| RankedDoc {
                doc_id,
                score,
                rank: i as u32 + 1,
            })
            .collect();
        self.entries.insert(topic_id.into(), docs);
    }

    pub fn topic(&self, topic_id: &str) -> Option<&[RankedDoc]> {
        self.entries.get(topic_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        if self.tag.is_empty() || self.tag.contains(char::is_whitespace) {
            return Err(CorpusError::InvalidRun(format!("bad tag {:?}", self.tag)));
        }
        for (topic, docs) in &self.entries {
            if docs.len() > depth {
                return Err(CorpusError::InvalidRun(format!(
                    "topic {topic} has {} entries, depth is {depth}",
                    docs.len()
                )));
            }
            let mut seen = HashSet::new();
            for (i, d) in docs.iter().enumerate() {
                if d.rank as usize != i + 1 {
                    return Err(CorpusError::InvalidRun(format!(
                        "topic {topic}: rank {} at position {}",
                        d.rank,
                        i + 1
                    )));
                }
                if !seen.insert(d.doc_id.as_str()) {
                    return Err(CorpusError::InvalidRun(format!(
                        "topic {topic}: document {} listed twice",
                        d.doc_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Orders topic ids numerically when both are integers, lexicographically
/// otherwise; integer ids sort before non-integer ones.
pub fn compare_topic_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

fn read_lossy<R: Read>(mut stream: R) -> Result<String> {
    let mut bytes = Vec::new();
    stream.read_to_end(&mut bytes)?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// Finds `<tag>` / `</tag>` positions, ASCII case-insensitively. `lower` must be
/// the ASCII-lowercased haystack so byte offsets line up with the original.
fn find_from(lower: &str, needle: &str, from: usize) -> Option<usize> {
    lower.get(from..)?.find(needle).map(|i| i + from)
}

/// Strips markup from `s`, returning trimmed text pieces joined by single spaces.
fn strip_tags(s: &str) -> String {
    let mut pieces: Vec<&str> = Vec::new();
    let bytes = s.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            let mut j = i + 1;
            if j < bytes.len() && bytes[j] == b'/' {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_alphabetic() {
                if let Some(end) = s[j..].find('>') {
                    pieces.push(&s[start..i]);
                    i = j + end + 1;
                    start = i;
                    continue;
                }
            }
        }
        i += 1;
    }
    pieces.push(&s[start..]);
    let mut out = String::new();
    for piece in pieces.iter().map(|p| p.trim()).filter(|p| !p.is_empty()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(piece);
    }
    out
}

/// Parses a TREC document container. Invalid UTF-8 is replaced, never fatal.
pub fn parse_trec_documents<R: Read>(stream: R) -> Result<Vec<Document>> {
    let text = read_lossy(stream)?;
    let lower = text.to_ascii_lowercase();
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    let mut pos = 0;
    let mut block = 0;
    while let Some(open) = find_from(&lower, "<doc>", pos) {
        let body_start = open + "<doc>".len();
        let close = find_from(&lower, "</doc>", body_start).ok_or(CorpusError::UnterminatedBlock {
            tag: "DOC",
            offset: open,
        })?;
        let body = &text[body_start..close];
        let body_lower = &lower[body_start..close];

        let docno_open = body_lower
            .find("<docno>")
            .ok_or(CorpusError::MissingDocno { block })?;
        let id_start = docno_open + "<docno>".len();
        let id_end = find_from(body_lower, "</docno>", id_start)
            .ok_or(CorpusError::MissingDocno { block })?;
        let doc_id = strip_tags(&body[id_start..id_end]);
        if doc_id.is_empty() {
            return Err(CorpusError::MissingDocno { block });
        }
        if doc_id.contains(char::is_whitespace) {
            return Err(CorpusError::InvalidDocId(doc_id));
        }
        if !seen.insert(doc_id.clone()) {
            return Err(CorpusError::DuplicateDocId(doc_id));
        }

        let rest = format!(
            "{} {}",
            &body[..docno_open],
            &body[id_end + "</docno>".len()..]
        );
        docs.push(Document::new(doc_id, strip_tags(&rest)));
        pos = close + "</doc>".len();
        block += 1;
    }
    Ok(docs)
}

pub fn write_trec_documents<W: Write>(docs: &[Document], mut out: W) -> io::Result<()> {
    for doc in docs {
        writeln!(out, "<DOC>\n<DOCNO> {} </DOCNO>\n<TEXT>\n{}\n</TEXT>\n</DOC>", doc.doc_id, doc.text)?;
    }
    Ok(())
}

/// Parses `topic iteration doc_id grade` lines; the iteration column is ignored.
pub fn parse_qrels<R: Read>(stream: R) -> Result<Qrels> {
    let text = read_lossy(stream)?;
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(CorpusError::MalformedLine {
                line: line_no,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let grade: i64 = fields[3].parse().map_err(|_| CorpusError::MalformedLine {
            line: line_no,
            reason: format!("grade {:?} is not an integer", fields[3]),
        })?;
        if grade < 0 {
            return Err(CorpusError::NegativeGrade { line: line_no });
        }
        let grade = u32::try_from(grade).map_err(|_| CorpusError::MalformedLine {
            line: line_no,
            reason: "grade out of range".into(),
        })?;
        qrels.insert(fields[0], fields[2], grade)?;
    }
    Ok(qrels)
}

/// Content of a field that runs until the next tag (topic files rarely close
/// their fields), with an optional leading label such as `Description:` removed.
fn topic_field(block: &str, block_lower: &str, tag: &str, label: &str) -> Option<String> {
    let open = block_lower.find(tag)?;
    let start = open + tag.len();
    let end = block[start..]
        .find('<')
        .map(|i| i + start)
        .unwrap_or(block.len());
    let raw = block[start..end].trim();
    let raw = match raw.get(..label.len()) {
        Some(head) if head.eq_ignore_ascii_case(label) => raw[label.len()..].trim(),
        _ => raw,
    };
    Some(raw.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// Parses `<top>` blocks with `<num>`, `<title>`, `<desc>` and `<narr>` fields.
pub fn parse_topics<R: Read>(stream: R) -> Result<Vec<Topic>> {
    let text = read_lossy(stream)?;
    let lower = text.to_ascii_lowercase();
    let mut topics = Vec::new();
    let mut seen = HashSet::new();
    let mut pos = 0;
    let mut block = 0;
    while let Some(open) = find_from(&lower, "<top>", pos) {
        let body_start = open + "<top>".len();
        let close = find_from(&lower, "</top>", body_start).ok_or(CorpusError::UnterminatedBlock {
            tag: "top",
            offset: open,
        })?;
        let body = &text[body_start..close];
        let body_lower = &lower[body_start..close];

        let num = topic_field(body, body_lower, "<num>", "Number:")
            .filter(|n| !n.is_empty())
            .ok_or(CorpusError::MissingNum { block })?;
        let topic_id = num.split_whitespace().next().unwrap_or_default().to_string();
        let title = topic_field(body, body_lower, "<title>", "Topic:")
            .filter(|t| !t.is_empty())
            .ok_or(CorpusError::MissingTitle { block })?;
        let description =
            topic_field(body, body_lower, "<desc>", "Description:").filter(|d| !d.is_empty());
        let narrative =
            topic_field(body, body_lower, "<narr>", "Narrative:").filter(|n| !n.is_empty());

        if !seen.insert(topic_id.clone()) {
            return Err(CorpusError::DuplicateTopicId(topic_id));
        }
        topics.push(Topic {
            topic_id,
            title,
            description,
            narrative,
        });
        pos = close + "</top>".len();
        block += 1;
    }
    Ok(topics)
}

pub fn write_topics<W: Write>(topics: &[Topic], mut out: W) -> io::Result<()> {
    for t in topics {
        writeln!(out, "<top>\n<num> Number: {}\n<title> {}\n", t.topic_id, t.title)?;
        if let Some(desc) = &t.description {
            writeln!(out, "<desc> Description:\n{desc}\n")?;
        }
        if let Some(narr) = &t.narrative {
            writeln!(out, "<narr> Narrative:\n{narr}\n")?;
        }
        writeln!(out, "</top>\n")?;
    }
    Ok(())
}

/// Writes the six-column run format: `topic Q0 doc rank score tag`.
pub fn write_run<W: Write>(run: &Run, mut out: W) -> io::Result<()> {
    let mut topics: Vec<&String> = run.entries.keys().collect();
    topics.sort_by(|a, b| compare_topic_ids(a, b));
    for topic in topics {
        for d in &run.entries[topic] {
            writeln!(out, "{} Q0 {} {} {:.6} {}", topic, d.doc_id, d.rank, d.score, run.tag)?;
        }
    }
    Ok(())
}

/// Snapshot version encoded as a trailing `.vK` in a run tag, if any.
pub fn version_from_tag(tag: &str) -> Option<u32> {
    let (_, suffix) = tag.rsplit_once(".v")?;
    suffix.parse().ok()
}

/// Parses a six-column run. Topics with no lines are not representable in the
/// format and therefore never appear in the result.
pub fn parse_run<R: Read>(stream: R) -> Result<Run> {
    let text = read_lossy(stream)?;
    let mut tag: Option<String> = None;
    let mut entries: BTreeMap<String, Vec<RankedDoc>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let malformed = |reason: String| CorpusError::MalformedLine {
            line: line_no,
            reason,
        };
        if fields.len() != 6 {
            return Err(malformed(format!("expected 6 fields, found {}", fields.len())));
        }
        let rank: u32 = fields[3]
            .parse()
            .map_err(|_| malformed(format!("rank {:?} is not a positive integer", fields[3])))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| malformed(format!("score {:?} is not a number", fields[4])))?;
        match &tag {
            None => tag = Some(fields[5].to_string()),
            Some(t) if t != fields[5] => {
                return Err(malformed(format!("tag {:?} differs from {t:?}", fields[5])))
            }
            _ => {}
        }
        entries.entry(fields[0].to_string()).or_default().push(RankedDoc {
            doc_id: fields[2].to_string(),
            score,
            rank,
        });
    }
    for docs in entries.values_mut() {
        docs.sort_by_key(|d| d.rank);
    }
    let tag = tag.unwrap_or_default();
    let run = Run {
        snapshot_version: version_from_tag(&tag).unwrap_or(0),
        tag,
        entries,
    };
    if !run.entries.is_empty() {
        run.validate(usize::MAX)?;
    }
    Ok(run)
}
