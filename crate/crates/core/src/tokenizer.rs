//! Word-level tokenization with a frequency-capped vocabulary.
//!
//! Id 0 is padding and id 1 is out-of-vocabulary; ranked tokens take ids
//! 2, 3, ... in order of corpus frequency.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ast::AstKind;
use crate::par::{self, Execution};
use crate::pipeline::PipelineRecord;
use crate::script::SourceScript;

pub const PAD_ID: u32 = 0;
pub const OOV_ID: u32 = 1;
pub const RESERVED_IDS: u32 = 2;
pub const DEFAULT_CAP: usize = 6000;
pub const DEFAULT_MAX_LEN: usize = 400;

const VOCAB_FORMAT: u32 = 1;
const DEFAULT_STOPLIST: &str = include_str!("../data/stoplist.txt");

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("invalid vocabulary: {0}")]
    Invalid(String),
}

/// Composite `asttype:word` tokens from the leaf pairs of a record. Interior
/// pairs are skipped since their text repeats their leaves.
pub fn record_tokens(record: &PipelineRecord) -> Vec<String> {
    let mut out = Vec::new();
    for pair in record.leaves() {
        let prefix = pair.ast_type.name().to_lowercase();
        for word in pair.text.split_whitespace() {
            out.push(format!("{prefix}:{}", word.to_lowercase()));
        }
    }
    out
}

/// Lowercased whitespace-separated words of the raw source.
pub fn raw_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Strips a leading `asttype:` prefix, if any.
fn word_part(token: &str) -> &str {
    if let Some((prefix, rest)) = token.split_once(':') {
        if AstKind::ALL.iter().any(|k| k.name().eq_ignore_ascii_case(prefix)) {
            return rest;
        }
    }
    token
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Stoplist {
    words: BTreeSet<String>,
}

impl Stoplist {
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Stoplist { words }
    }

    /// The shipped list of common administration cmdlets.
    pub fn administration_defaults() -> Self {
        Stoplist::parse(DEFAULT_STOPLIST)
    }

    pub fn empty() -> Self {
        Stoplist::default()
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let text = fs::read_to_string(path).map_err(|e| TokenizerError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Stoplist::parse(&text))
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stoplist {
            words: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Matches either the whole token or its word part after an AST prefix.
    pub fn excludes(&self, token: &str) -> bool {
        self.words.contains(token) || self.words.contains(word_part(token))
    }

    /// SHA-256 over the sorted words, newline-joined.
    pub fn digest(&self) -> String {
        let joined = self.words.iter().cloned().collect::<Vec<_>>().join("\n");
        crate::digest_hex(joined.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    cap: usize,
    stoplist_digest: String,
    ranked: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabFile {
    format: u32,
    cap: usize,
    stoplist_sha256: String,
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Ranks tokens by total frequency (ties lexicographic), drops stoplisted
    /// ones and keeps the top `cap`.
    pub fn build<'a, I>(token_lists: I, cap: usize, stoplist: &Stoplist) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<&'a str, u64> = HashMap::new();
        let mut documents = 0usize;
        for list in token_lists {
            documents += 1;
            for token in list {
                *counts.entry(token.as_str()).or_default() += 1;
            }
        }
        if documents == 0 {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut ranked: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|(token, _)| !stoplist.excludes(token))
            .collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(cap);
        Ok(Vocabulary::from_ranked(
            ranked.into_iter().map(|(t, _)| t.to_string()).collect(),
            cap,
            stoplist.digest(),
        ))
    }

    fn from_ranked(ranked: Vec<String>, cap: usize, stoplist_digest: String) -> Self {
        let index = ranked
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + RESERVED_IDS))
            .collect();
        Vocabulary {
            cap,
            stoplist_digest,
            ranked,
            index,
        }
    }

    /// Number of ranked tokens (excluding the two reserved ids).
    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    /// Exclusive upper bound of valid ids: ranked tokens plus reserved ids.
    pub fn id_bound(&self) -> usize {
        self.ranked.len() + RESERVED_IDS as usize
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn stoplist_digest(&self) -> &str {
        &self.stoplist_digest
    }

    pub fn tokens(&self) -> &[String] {
        &self.ranked
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(OOV_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        let slot = id.checked_sub(RESERVED_IDS)? as usize;
        self.ranked.get(slot).map(String::as_str)
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        let file = VocabFile {
            format: VOCAB_FORMAT,
            cap: self.cap,
            stoplist_sha256: self.stoplist_digest.clone(),
            tokens: self.ranked.clone(),
        };
        let json = serde_json::to_string_pretty(&file).expect("vocabulary serializes");
        fs::write(path, json + "\n").map_err(|e| TokenizerError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Loads and re-checks the invariants. When `stoplist` is given, its
    /// digest must match and none of its words may have an id.
    pub fn load(path: &Path, stoplist: Option<&Stoplist>) -> Result<Self, TokenizerError> {
        let file_err = |message: String| TokenizerError::File {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let file: VocabFile = serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
        if file.format != VOCAB_FORMAT {
            return Err(TokenizerError::Invalid(format!("unsupported format {}", file.format)));
        }
        if file.tokens.len() > file.cap {
            return Err(TokenizerError::Invalid(format!(
                "{} tokens exceed cap {}",
                file.tokens.len(),
                file.cap
            )));
        }
        let mut seen = BTreeSet::new();
        for token in &file.tokens {
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(TokenizerError::Invalid(format!("malformed token {token:?}")));
            }
            if !seen.insert(token.as_str()) {
                return Err(TokenizerError::Invalid(format!("duplicate token {token:?}")));
            }
        }
        if let Some(stoplist) = stoplist {
            if stoplist.digest() != file.stoplist_sha256 {
                return Err(TokenizerError::Invalid("stoplist digest mismatch".into()));
            }
            if let Some(token) = file.tokens.iter().find(|t| stoplist.excludes(t)) {
                return Err(TokenizerError::Invalid(format!("stoplisted token {token:?} has an id")));
            }
        }
        Ok(Vocabulary::from_ranked(file.tokens, file.cap, file.stoplist_sha256))
    }
}

/// Vocabulary over AST composite tokens.
pub fn build_vocab(
    records: &[PipelineRecord],
    cap: usize,
    stoplist: &Stoplist,
    exec: Execution,
) -> Result<Vocabulary, TokenizerError> {
    let lists = par::map(exec, records, record_tokens);
    Vocabulary::build(lists.iter().map(Vec::as_slice), cap, stoplist)
}

/// Vocabulary over raw source words, for the non-AST baselines.
pub fn build_raw_vocab(
    scripts: &[SourceScript],
    cap: usize,
    stoplist: &Stoplist,
    exec: Execution,
) -> Result<Vocabulary, TokenizerError> {
    let lists = par::map(exec, scripts, |s| raw_tokens(&s.text));
    Vocabulary::build(lists.iter().map(Vec::as_slice), cap, stoplist)
}

/// Fixed-length id sequence, right-padded with [`PAD_ID`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub true_len: usize,
}

impl TokenSequence {
    /// Ids before padding.
    pub fn content(&self) -> &[u32] {
        &self.ids[..self.true_len]
    }

    pub fn max_len(&self) -> usize {
        self.ids.len()
    }
}

/// Maps tokens to ids, keeping the head when longer than `max_len`.
pub fn encode_tokens<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let mut ids: Vec<u32> = tokens.iter().take(max_len).map(|t| vocab.id(t.as_ref())).collect();
    let true_len = ids.len();
    ids.resize(max_len, PAD_ID);
    TokenSequence { ids, true_len }
}

pub fn encode(record: &PipelineRecord, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    encode_tokens(&record_tokens(record), vocab, max_len)
}

pub fn encode_raw(script: &SourceScript, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    encode_tokens(&raw_tokens(&script.text), vocab, max_len)
}
