//! Canonical text representation, length prompts, and corpus loading.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;
use crate::scalar::round_half_up;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("text has no tokens")]
    EmptyText,
    #[error("corpus of {size} texts cannot hold a validation split of {requested}")]
    CorpusTooSmall { size: usize, requested: usize },
    #[error("invalid length spec `{0}`")]
    InvalidLength(String),
    #[error("malformed prompted input `{0}`")]
    MalformedPrompt(String),
    #[error("line {line} is not valid UTF-8")]
    Encoding { line: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Lowercased whitespace tokens plus their single-space join.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenizedText {
    tokens: Vec<String>,
    raw: String,
}

impl TokenizedText {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Builds a text from tokens that already satisfy the invariants
    /// (lowercase, no whitespace). Fails on an empty list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, CorpusError> {
        if tokens.is_empty() {
            return Err(CorpusError::EmptyText);
        }
        debug_assert!(tokens
            .iter()
            .all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace)));
        let raw = tokens.join(" ");
        Ok(TokenizedText { tokens, raw })
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }
}

impl fmt::Display for TokenizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// Splits on Unicode whitespace and lowercases.
pub fn tokenize(raw: &str) -> Result<TokenizedText, CorpusError> {
    let tokens: Vec<String> = raw.split_whitespace().map(str::to_lowercase).collect();
    TokenizedText::from_tokens(tokens)
}

/// Desired summary length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LengthSpec {
    /// Number of words, at least 1.
    Absolute(usize),
    /// Fraction of the input length in `(0, 1]`.
    Ratio(f64),
}

impl LengthSpec {
    pub fn absolute(words: usize) -> Result<Self, CorpusError> {
        if words == 0 {
            return Err(CorpusError::InvalidLength(words.to_string()));
        }
        Ok(LengthSpec::Absolute(words))
    }

    pub fn ratio(value: f64) -> Result<Self, CorpusError> {
        if !(value > 0.0 && value <= 1.0) {
            return Err(CorpusError::InvalidLength(value.to_string()));
        }
        Ok(LengthSpec::Ratio(value))
    }

    /// Word count for a text of `text_len` words: ratios round half up and
    /// never go below one word.
    pub fn resolve_for(&self, text_len: usize) -> usize {
        match *self {
            LengthSpec::Absolute(n) => n,
            LengthSpec::Ratio(r) => round_half_up(r * text_len as f64).max(1),
        }
    }
}

/// Parses `8` as an absolute length and `50%` or `0.5` as a ratio.
impl FromStr for LengthSpec {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || CorpusError::InvalidLength(s.to_string());
        if let Some(pct) = s.strip_suffix('%') {
            let v: f64 = pct.trim().parse().map_err(|_| bad())?;
            return LengthSpec::ratio(v / 100.0);
        }
        if let Ok(n) = s.parse::<usize>() {
            return LengthSpec::absolute(n);
        }
        let v: f64 = s.parse().map_err(|_| bad())?;
        LengthSpec::ratio(v)
    }
}

impl fmt::Display for LengthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LengthSpec::Absolute(n) => write!(f, "{n}"),
            LengthSpec::Ratio(r) => write!(f, "{}%", r * 100.0),
        }
    }
}

pub fn resolve_length(spec: LengthSpec, text: &TokenizedText) -> usize {
    spec.resolve_for(text.len())
}

/// Body text carrying a `"<n>: "` length prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptedInput {
    target_length: usize,
    body: TokenizedText,
    serialized: String,
}

impl PromptedInput {
    pub fn new(target_length: usize, body: TokenizedText) -> Self {
        let serialized = format!("{}: {}", target_length, body.raw());
        PromptedInput {
            target_length,
            body,
            serialized,
        }
    }

    pub fn target_length(&self) -> usize {
        self.target_length
    }

    pub fn body(&self) -> &TokenizedText {
        &self.body
    }

    pub fn serialized(&self) -> &str {
        &self.serialized
    }

    /// Inverse of the serialized form.
    pub fn parse(s: &str) -> Result<Self, CorpusError> {
        let bad = || CorpusError::MalformedPrompt(s.to_string());
        let (len, body) = s.split_once(": ").ok_or_else(bad)?;
        if len.is_empty() || !len.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let target_length: usize = len.parse().map_err(|_| bad())?;
        let body = tokenize(body)?;
        Ok(PromptedInput::new(target_length, body))
    }
}

pub fn make_prompted_input(text: &TokenizedText, spec: LengthSpec) -> PromptedInput {
    PromptedInput::new(resolve_length(spec, text), text.clone())
}

/// Streaming reader over a one-sentence-per-line file.
pub struct CorpusReader<R> {
    lines: io::Split<R>,
    line_no: usize,
    remaining: Option<usize>,
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<TokenizedText, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == Some(0) {
            return None;
        }
        loop {
            let bytes = match self.lines.next()? {
                Ok(b) => b,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            let line = match String::from_utf8(bytes) {
                Ok(s) => s,
                Err(_) => return Some(Err(CorpusError::Encoding { line: self.line_no })),
            };
            match tokenize(&line) {
                Ok(text) => {
                    if let Some(n) = self.remaining.as_mut() {
                        *n -= 1;
                    }
                    return Some(Ok(text));
                }
                Err(CorpusError::EmptyText) => continue,
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Wraps any reader; blank lines are skipped and at most `limit` texts are
/// produced.
pub fn read_corpus<R: BufRead>(reader: R, limit: Option<usize>) -> CorpusReader<R> {
    CorpusReader {
        lines: reader.split(b'\n'),
        line_no: 0,
        remaining: limit,
    }
}

pub fn load_corpus(
    path: impl AsRef<Path>,
    limit: Option<usize>,
) -> Result<CorpusReader<BufReader<File>>, CorpusError> {
    let file = File::open(path)?;
    Ok(read_corpus(BufReader::new(file), limit))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<TokenizedText>,
    pub validation: Vec<TokenizedText>,
}

/// Seeded uniform sample of `n` validation texts by index. Both halves keep
/// corpus order. Duplicated sentences are not merged, so disjointness is by
/// position.
pub fn split_validation(
    corpus: Vec<TokenizedText>,
    n: usize,
    seed: u64,
) -> Result<CorpusSplit, CorpusError> {
    if n >= corpus.len() {
        return Err(CorpusError::CorpusTooSmall {
            size: corpus.len(),
            requested: n,
        });
    }
    let mut rng = Rng::new(seed);
    let chosen = rng.choose_positions(corpus.len(), n);
    let mut is_val = vec![false; corpus.len()];
    for i in chosen {
        is_val[i] = true;
    }
    let mut split = CorpusSplit::default();
    for (text, val) in corpus.into_iter().zip(is_val) {
        if val {
            split.validation.push(text);
        } else {
            split.train.push(text);
        }
    }
    Ok(split)
}
