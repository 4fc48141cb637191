//! Per-bundle index segments and the immutable snapshots they are merged into.
//!
//! A snapshot of version `v` covers bundles `1..=v`. Merging copies the term
//! dictionary but shares every posting list the new segment does not touch,
//! so older snapshots stay valid and cheap to keep around.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::{self, Read, Write};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus_io::Document;
use crate::textproc::Preprocessor;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("bundle {0} has no documents")]
    EmptyBundle(u32),
    #[error("document {0:?} appears twice")]
    DuplicateDoc(String),
    #[error("segment for bundle {found} cannot extend snapshot version {snapshot}")]
    VersionMismatch { snapshot: u32, found: u32 },
    #[error("document {0:?} is already in the snapshot")]
    OverlappingDocs(String),
    #[error("invalid segment file: {0}")]
    BadSegmentFile(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Posting {
    pub doc_id: Arc<str>,
    pub tf: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TermStats {
    pub df: u64,
    pub cf: u64,
}

/// Postings and document lengths for one bundle.
#[derive(Debug, Clone)]
pub struct IndexSegment {
    pub bundle_index: u32,
    /// Posting lists sorted by doc id.
    pub postings: BTreeMap<String, Vec<Posting>>,
    /// Post-pipeline term counts.
    pub doc_lengths: BTreeMap<Arc<str>, u32>,
    /// Wall-clock time spent building the segment, in microseconds.
    pub build_micros: u64,
}

impl IndexSegment {
    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    /// Equality of postings and lengths, ignoring build timing.
    pub fn same_content(&self, other: &IndexSegment) -> bool {
        self.bundle_index == other.bundle_index
            && self.postings == other.postings
            && self.doc_lengths == other.doc_lengths
    }
}

/// Indexes one bundle of documents with the given preprocessing.
pub fn index_bundle(
    docs: &[Document],
    bundle_index: u32,
    pre: &Preprocessor,
) -> Result<IndexSegment, IndexError> {
    let started = Instant::now();
    if docs.is_empty() {
        return Err(IndexError::EmptyBundle(bundle_index));
    }
    let mut sorted: Vec<&Document> = docs.iter().collect();
    sorted.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
        return Err(IndexError::DuplicateDoc(w[0].doc_id.clone()));
    }

    let analyzed: Vec<(Arc<str>, Vec<String>)> = sorted
        .par_iter()
        .map(|d| (Arc::from(d.doc_id.as_str()), pre.terms(&d.text)))
        .collect();

    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = BTreeMap::new();
    for (doc_id, terms) in analyzed {
        doc_lengths.insert(Arc::clone(&doc_id), terms.len() as u32);
        let mut counts: HashMap<String, u32> = HashMap::new();
        for t in terms {
            *counts.entry(t).or_default() += 1;
        }
        for (term, tf) in counts {
            postings.entry(term).or_default().push(Posting {
                doc_id: Arc::clone(&doc_id),
                tf,
            });
        }
    }
    Ok(IndexSegment {
        bundle_index,
        postings,
        doc_lengths,
        build_micros: started.elapsed().as_micros() as u64,
    })
}

#[derive(Debug, PartialEq, Eq, Hash)]
struct TermEntry {
    postings: Vec<Posting>,
    cf: u64,
}

impl TermEntry {
    fn new(postings: Vec<Posting>) -> Self {
        let cf = postings.iter().map(|p| p.tf as u64).sum();
        Self { postings, cf }
    }
}

/// Immutable inverted index over bundles `1..=version`.
#[derive(Debug, Clone)]
pub struct IndexSnapshot {
    version: u32,
    terms: BTreeMap<Arc<str>, Arc<TermEntry>>,
    doc_lengths: BTreeMap<Arc<str>, u32>,
    total_tokens: u64,
}

fn merge_sorted(a: &[Posting], b: &[Posting]) -> Vec<Posting> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i].doc_id <= b[j].doc_id {
            out.push(a[i].clone());
            i += 1;
        } else {
            out.push(b[j].clone());
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

impl IndexSnapshot {
    /// The version-0 snapshot that bundle 1 is merged into.
    pub fn empty() -> Self {
        Self {
            version: 0,
            terms: BTreeMap::new(),
            doc_lengths: BTreeMap::new(),
            total_tokens: 0,
        }
    }

    /// Builds snapshot `version + 1` from this one and the next bundle's
    /// segment. `self` is left untouched.
    pub fn merge(&self, segment: &IndexSegment) -> Result<IndexSnapshot, IndexError> {
        if segment.bundle_index != self.version + 1 {
            return Err(IndexError::VersionMismatch {
                snapshot: self.version,
                found: segment.bundle_index,
            });
        }
        if let Some(doc) = segment
            .doc_lengths
            .keys()
            .find(|d| self.doc_lengths.contains_key(d.as_ref()))
        {
            return Err(IndexError::OverlappingDocs(doc.to_string()));
        }

        let mut terms = self.terms.clone();
        for (term, added) in &segment.postings {
            match terms.get_mut(term.as_str()) {
                Some(entry) => {
                    *entry = Arc::new(TermEntry::new(merge_sorted(&entry.postings, added)));
                }
                None => {
                    terms.insert(Arc::from(term.as_str()), Arc::new(TermEntry::new(added.clone())));
                }
            }
        }
        let mut doc_lengths = self.doc_lengths.clone();
        doc_lengths.extend(segment.doc_lengths.iter().map(|(d, &l)| (Arc::clone(d), l)));
        let added_tokens: u64 = segment.doc_lengths.values().map(|&l| l as u64).sum();
        Ok(IndexSnapshot {
            version: segment.bundle_index,
            terms,
            doc_lengths,
            total_tokens: self.total_tokens + added_tokens,
        })
    }

    /// Folds segments `1..=k` into a chain of snapshots, returning versions `1..=k`.
    pub fn chain<'a, I>(segments: I) -> Result<Vec<Arc<IndexSnapshot>>, IndexError>
    where
        I: IntoIterator<Item = &'a IndexSegment>,
    {
        let mut out: Vec<Arc<IndexSnapshot>> = Vec::new();
        let mut current = IndexSnapshot::empty();
        for seg in segments {
            current = current.merge(seg)?;
            out.push(Arc::new(current.clone()));
        }
        Ok(out)
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn avg_doc_len(&self) -> f64 {
        if self.doc_lengths.is_empty() {
            0.0
        } else {
            self.total_tokens as f64 / self.doc_lengths.len() as f64
        }
    }

    pub fn stats(&self, term: &str) -> TermStats {
        self.terms
            .get(term)
            .map(|e| TermStats {
                df: e.postings.len() as u64,
                cf: e.cf,
            })
            .unwrap_or_default()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.terms
            .get(term)
            .map(|e| e.postings.as_slice())
            .unwrap_or(&[])
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<u32> {
        self.doc_lengths.get(doc_id).copied()
    }

    pub fn doc_lengths(&self) -> impl Iterator<Item = (&str, u32)> {
        self.doc_lengths.iter().map(|(d, &l)| (d.as_ref(), l))
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(|t| t.as_ref())
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    /// True when the two snapshots index the same documents identically,
    /// regardless of version number or merge history.
    pub fn same_content(&self, other: &IndexSnapshot) -> bool {
        self.total_tokens == other.total_tokens
            && self.doc_lengths == other.doc_lengths
            && self.terms.len() == other.terms.len()
            && self
                .terms
                .iter()
                .zip(&other.terms)
                .all(|((ta, ea), (tb, eb))| ta == tb && ea == eb)
    }

    /// Whether two snapshots share the storage of a term's posting list.
    pub fn shares_postings(&self, other: &IndexSnapshot, term: &str) -> bool {
        match (self.terms.get(term), other.terms.get(term)) {
            (Some(a), Some(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }

    /// Content hash over version, statistics, lengths and postings.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.version.hash(&mut h);
        self.total_tokens.hash(&mut h);
        self.doc_lengths.hash(&mut h);
        for (term, entry) in &self.terms {
            term.hash(&mut h);
            entry.hash(&mut h);
        }
        h.finish()
    }

    pub fn stats_summary(&self) -> SnapshotStats {
        SnapshotStats {
            version: self.version,
            doc_count: self.doc_count(),
            total_tokens: self.total_tokens,
            avg_doc_len: self.avg_doc_len(),
            vocabulary_size: self.terms.len(),
            fingerprint: format!("{:016x}", self.fingerprint()),
        }
    }
}

/// Debug dump of a snapshot's global statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotStats {
    pub version: u32,
    pub doc_count: usize,
    pub total_tokens: u64,
    pub avg_doc_len: f64,
    pub vocabulary_size: usize,
    pub fingerprint: String,
}

// Segment file layout, all integers little-endian or LEB128 varints:
//
//   magic    b"PEVSEG" + u16 format version
//   u32      bundle index
//   u64      build time in microseconds
//   varint   document count, then per document (sorted by id):
//            varint id length, id bytes, varint length
//   varint   term count, then per term (sorted):
//            varint term length, term bytes, varint df,
//            df × (varint doc ordinal delta, varint tf)
//
// Doc ordinals index the document table; the first delta is absolute.
const SEGMENT_MAGIC: &[u8; 6] = b"PEVSEG";
const SEGMENT_FORMAT: u16 = 1;

fn write_varint<W: Write>(out: &mut W, mut v: u64) -> io::Result<()> {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            return out.write_all(&[byte]);
        }
        out.write_all(&[byte | 0x80])?;
    }
}

fn read_varint<R: Read>(input: &mut R) -> Result<u64, IndexError> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let mut byte = [0u8];
        input.read_exact(&mut byte)?;
        v |= ((byte[0] & 0x7f) as u64) << shift;
        if byte[0] & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(IndexError::BadSegmentFile("varint too long".into()))
}

fn write_bytes<W: Write>(out: &mut W, bytes: &[u8]) -> io::Result<()> {
    write_varint(out, bytes.len() as u64)?;
    out.write_all(bytes)
}

fn read_string<R: Read>(input: &mut R) -> Result<String, IndexError> {
    let len = read_varint(input)? as usize;
    if len > 1 << 20 {
        return Err(IndexError::BadSegmentFile(format!("string length {len}")));
    }
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| IndexError::BadSegmentFile("invalid UTF-8".into()))
}

impl IndexSegment {
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(SEGMENT_MAGIC)?;
        out.write_all(&SEGMENT_FORMAT.to_le_bytes())?;
        out.write_all(&self.bundle_index.to_le_bytes())?;
        out.write_all(&self.build_micros.to_le_bytes())?;

        let mut ordinals: HashMap<&str, u64> = HashMap::with_capacity(self.doc_lengths.len());
        write_varint(&mut out, self.doc_lengths.len() as u64)?;
        for (i, (doc_id, &len)) in self.doc_lengths.iter().enumerate() {
            ordinals.insert(doc_id.as_ref(), i as u64);
            write_bytes(&mut out, doc_id.as_bytes())?;
            write_varint(&mut out, len as u64)?;
        }

        write_varint(&mut out, self.postings.len() as u64)?;
        for (term, list) in &self.postings {
            write_bytes(&mut out, term.as_bytes())?;
            write_varint(&mut out, list.len() as u64)?;
            let mut prev = 0u64;
            for p in list {
                let ord = ordinals[p.doc_id.as_ref()];
                write_varint(&mut out, ord - prev)?;
                write_varint(&mut out, p.tf as u64)?;
                prev = ord;
            }
        }
        out.flush()
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<IndexSegment, IndexError> {
        let mut header = [0u8; 8];
        input.read_exact(&mut header)?;
        if &header[..6] != SEGMENT_MAGIC {
            return Err(IndexError::BadSegmentFile("bad magic".into()));
        }
        let format = u16::from_le_bytes([header[6], header[7]]);
        if format != SEGMENT_FORMAT {
            return Err(IndexError::BadSegmentFile(format!("unsupported format {format}")));
        }
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf)?;
        let bundle_index = u32::from_le_bytes(u32buf);
        let mut u64buf = [0u8; 8];
        input.read_exact(&mut u64buf)?;
        let build_micros = u64::from_le_bytes(u64buf);

        let n_docs = read_varint(&mut input)? as usize;
        let mut docs: Vec<Arc<str>> = Vec::with_capacity(n_docs.min(1 << 20));
        let mut doc_lengths = BTreeMap::new();
        let mut seen = HashSet::new();
        for _ in 0..n_docs {
            let id: Arc<str> = Arc::from(read_string(&mut input)?);
            let len = read_varint(&mut input)? as u32;
            if !seen.insert(Arc::clone(&id)) {
                return Err(IndexError::DuplicateDoc(id.to_string()));
            }
            doc_lengths.insert(Arc::clone(&id), len);
            docs.push(id);
        }

        let n_terms = read_varint(&mut input)? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let term = read_string(&mut input)?;
            let df = read_varint(&mut input)? as usize;
            if df > docs.len() {
                return Err(IndexError::BadSegmentFile(format!("df {df} for {term:?}")));
            }
            let mut list = Vec::with_capacity(df);
            let mut ord = 0u64;
            for i in 0..df {
                let delta = read_varint(&mut input)?;
                if i > 0 && delta == 0 {
                    return Err(IndexError::BadSegmentFile("unsorted postings".into()));
                }
                ord += delta;
                let doc = docs
                    .get(ord as usize)
                    .ok_or_else(|| IndexError::BadSegmentFile("doc ordinal out of range".into()))?;
                let tf = read_varint(&mut input)? as u32;
                if tf == 0 {
                    return Err(IndexError::BadSegmentFile("zero term frequency".into()));
                }
                list.push(Posting {
                    doc_id: Arc::clone(doc),
                    tf,
                });
            }
            postings.insert(term, list);
        }
        Ok(IndexSegment {
            bundle_index,
            postings,
            doc_lengths,
            build_micros,
        })
    }
}
