//! Tokenization, stopword removal and stemming.
//!
//! A [`Preprocessor`] is the (stoplist, stemmer) half of a [`Pipeline`]; it
//! determines the index. The retrieval model is the other half.

pub mod porter;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::ModelSpec;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TextError {
    #[error("unknown stoplist {0:?}")]
    UnknownStoplist(String),
    #[error("unknown stemmer {0:?}")]
    UnknownStemmer(String),
}

/// Lowercases `text` and splits it on every character that is not a letter
/// or a digit.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoplistId {
    Indri,
    Lucene,
    Terrier,
    NoStop,
}

impl StoplistId {
    pub const ALL: [StoplistId; 4] = [Self::Indri, Self::Lucene, Self::Terrier, Self::NoStop];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Indri => "indri",
            Self::Lucene => "lucene",
            Self::Terrier => "terrier",
            Self::NoStop => "nostop",
        }
    }
}

impl fmt::Display for StoplistId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StoplistId {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| TextError::UnknownStoplist(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stoplist {
    id: String,
    terms: HashSet<String>,
}

impl Stoplist {
    /// Parses a stoplist file: one term per line, `#` starts a comment.
    /// Entries are run through [`tokenize`] so they match indexed terms.
    pub fn parse(id: impl Into<String>, text: &str) -> Self {
        let terms = text
            .lines()
            .map(|line| line.split('#').next().unwrap_or_default())
            .flat_map(tokenize)
            .collect();
        Self { id: id.into(), terms }
    }

    pub fn empty(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            terms: HashSet::new(),
        }
    }

    pub fn builtin(id: StoplistId) -> Arc<Stoplist> {
        static LISTS: OnceLock<[Arc<Stoplist>; 4]> = OnceLock::new();
        let lists = LISTS.get_or_init(|| {
            [
                Arc::new(Stoplist::parse("indri", include_str!("../../resources/stoplists/indri.txt"))),
                Arc::new(Stoplist::parse("lucene", include_str!("../../resources/stoplists/lucene.txt"))),
                Arc::new(Stoplist::parse("terrier", include_str!("../../resources/stoplists/terrier.txt"))),
                Arc::new(Stoplist::empty("nostop")),
            ]
        });
        Arc::clone(&lists[id as usize])
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains(term)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

pub fn apply_stoplist(tokens: Vec<String>, stoplist: &Stoplist) -> Vec<String> {
    if stoplist.is_empty() {
        return tokens;
    }
    tokens.into_iter().filter(|t| !stoplist.contains(t)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum StemmerId {
    Porter,
    NoStem,
    /// A stemmer registered at runtime in a [`StemmerRegistry`].
    Plugin(String),
}

impl StemmerId {
    pub fn as_str(&self) -> &str {
        match self {
            Self::Porter => "porter",
            Self::NoStem => "nostem",
            Self::Plugin(id) => id,
        }
    }
}

impl fmt::Display for StemmerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StemmerId {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "porter" => Ok(Self::Porter),
            "nostem" => Ok(Self::NoStem),
            "" => Err(TextError::UnknownStemmer(String::new())),
            other if other.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') => {
                Ok(Self::Plugin(other.to_string()))
            }
            other => Err(TextError::UnknownStemmer(other.to_string())),
        }
    }
}

impl From<StemmerId> for String {
    fn from(id: StemmerId) -> Self {
        id.as_str().to_string()
    }
}

impl TryFrom<String> for StemmerId {
    type Error = TextError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

pub type StemFn = Arc<dyn Fn(&str) -> String + Send + Sync>;

/// Term-to-term stemming functions registered by id (e.g. a Krovetz or
/// Hunspell binding).
#[derive(Clone, Default)]
pub struct StemmerRegistry {
    plugins: HashMap<String, StemFn>,
}

impl StemmerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, id: impl Into<String>, f: StemFn) {
        self.plugins.insert(id.into(), f);
    }

    pub fn resolve(&self, id: &StemmerId) -> Result<Stemmer, TextError> {
        match id {
            StemmerId::Porter => Ok(Stemmer::Porter),
            StemmerId::NoStem => Ok(Stemmer::NoStem),
            StemmerId::Plugin(name) => self
                .plugins
                .get(name)
                .map(|f| Stemmer::Plugin {
                    id: name.clone(),
                    f: Arc::clone(f),
                })
                .ok_or_else(|| TextError::UnknownStemmer(name.clone())),
        }
    }
}

impl fmt::Debug for StemmerRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.plugins.keys()).finish()
    }
}

#[derive(Clone)]
pub enum Stemmer {
    Porter,
    NoStem,
    Plugin { id: String, f: StemFn },
}

impl Stemmer {
    pub fn id(&self) -> StemmerId {
        match self {
            Self::Porter => StemmerId::Porter,
            Self::NoStem => StemmerId::NoStem,
            Self::Plugin { id, .. } => StemmerId::Plugin(id.clone()),
        }
    }

    pub fn stem(&self, token: &str) -> String {
        match self {
            Self::Porter => porter::stem(token),
            Self::NoStem => token.to_string(),
            Self::Plugin { f, .. } => f(token),
        }
    }
}

impl fmt::Debug for Stemmer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Stemmer({})", self.id())
    }
}

/// Stoplist plus stemmer: everything that shapes the index.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    stoplist_id: StoplistId,
    stoplist: Arc<Stoplist>,
    stemmer: Stemmer,
}

impl Preprocessor {
    pub fn new(stoplist_id: StoplistId, stemmer: Stemmer) -> Self {
        Self {
            stoplist_id,
            stoplist: Stoplist::builtin(stoplist_id),
            stemmer,
        }
    }

    /// Builds a preprocessor from the built-in stoplists and stemmers.
    pub fn builtin(stoplist_id: StoplistId, stemmer_id: &StemmerId) -> Result<Self, TextError> {
        Ok(Self::new(stoplist_id, StemmerRegistry::new().resolve(stemmer_id)?))
    }

    /// Replaces the built-in list for this id with a custom one.
    pub fn with_stoplist(mut self, stoplist: Arc<Stoplist>) -> Self {
        self.stoplist = stoplist;
        self
    }

    pub fn stoplist_id(&self) -> StoplistId {
        self.stoplist_id
    }

    pub fn stemmer_id(&self) -> StemmerId {
        self.stemmer.id()
    }

    /// `stoplist.stemmer`, the index half of a pipeline id.
    pub fn id(&self) -> String {
        format!("{}.{}", self.stoplist_id, self.stemmer.id())
    }

    /// tokenize → stoplist → stem.
    pub fn terms(&self, text: &str) -> Vec<String> {
        apply_stoplist(tokenize(text), &self.stoplist)
            .iter()
            .map(|t| self.stemmer.stem(t))
            .collect()
    }
}

/// One system of the experimental grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub stoplist: StoplistId,
    pub stemmer: StemmerId,
    pub model: ModelSpec,
}

impl Pipeline {
    pub fn new(stoplist: StoplistId, stemmer: StemmerId, model: ModelSpec) -> Self {
        Self {
            stoplist,
            stemmer,
            model,
        }
    }

    /// `stoplist.stemmer.model`.
    pub fn id(&self) -> String {
        format!("{}.{}.{}", self.stoplist, self.stemmer, self.model.id())
    }

    pub fn preprocessor(&self, registry: &StemmerRegistry) -> Result<Preprocessor, TextError> {
        Ok(Preprocessor::new(self.stoplist, registry.resolve(&self.stemmer)?))
    }

    /// Every combination of the given components, stoplist-major.
    pub fn grid(stoplists: &[StoplistId], stemmers: &[StemmerId], models: &[ModelSpec]) -> Vec<Pipeline> {
        let mut out = Vec::new();
        for &stoplist in stoplists {
            for stemmer in stemmers {
                for model in models {
                    out.push(Pipeline::new(stoplist, stemmer.clone(), model.clone()));
                }
            }
        }
        out
    }
}
