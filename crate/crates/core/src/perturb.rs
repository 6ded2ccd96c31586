//! Prompt-based text reconstruction data: shuffle, drop and add words, then
//! prepend the original length as a prompt.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{PromptedInput, TokenizedText};
use crate::rng::Rng;
use crate::scalar::round_half_up;

/// Texts handled by one RNG stream when generating a dataset. Fixed so the
/// output bytes do not depend on the worker count.
pub const SHARD_SIZE: usize = 4096;

const PAIRING_STREAM: u64 = 0x7061_6972; // "pair"

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("dropping {drop} of {len} words leaves nothing")]
    AllDropped { len: usize, drop: usize },
    #[error("donor text is empty")]
    EmptyDonor,
    #[error("ratio `{name}` = {value} is outside [0, 2]")]
    InvalidRatio { name: &'static str, value: f64 },
    #[error("dataset generation needs at least two texts, got {0}")]
    CorpusTooSmall(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub shuffle_ratio: f64,
    pub drop_ratio: f64,
    pub add_ratio: f64,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            shuffle_ratio: 0.10,
            drop_ratio: 0.10,
            add_ratio: 1.00,
            seed: 0,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<(), PerturbError> {
        for (name, value) in [
            ("shuffle_ratio", self.shuffle_ratio),
            ("drop_ratio", self.drop_ratio),
            ("add_ratio", self.add_ratio),
        ] {
            if !(0.0..=2.0).contains(&value) {
                return Err(PerturbError::InvalidRatio { name, value });
            }
        }
        Ok(())
    }

    /// Word counts `(shuffle, drop, add)` for an original of `len` words.
    /// All three are fractions of the original length.
    pub fn counts(&self, len: usize) -> (usize, usize, usize) {
        let n = len as f64;
        (
            round_half_up(self.shuffle_ratio * n),
            round_half_up(self.drop_ratio * n),
            round_half_up(self.add_ratio * n),
        )
    }
}

/// One perturbation stage, with enough detail to replay it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbOp {
    /// `tokens[positions[i]] = old[sources[i]]`.
    Shuffle {
        positions: Vec<usize>,
        sources: Vec<usize>,
    },
    /// Ascending indices removed from the stage input.
    Drop { positions: Vec<usize> },
    /// Sequential insertions; each slot indexes the sequence as it is at
    /// that moment.
    Add { inserts: Vec<(usize, String)> },
}

impl PerturbOp {
    pub fn apply(&self, tokens: &[String]) -> Vec<String> {
        match self {
            PerturbOp::Shuffle { positions, sources } => {
                let mut out = tokens.to_vec();
                for (&p, &s) in positions.iter().zip(sources) {
                    out[p] = tokens[s].clone();
                }
                out
            }
            PerturbOp::Drop { positions } => {
                let mut skip = positions.iter().peekable();
                let mut out = Vec::with_capacity(tokens.len() - positions.len());
                for (i, t) in tokens.iter().enumerate() {
                    if skip.peek() == Some(&&i) {
                        skip.next();
                    } else {
                        out.push(t.clone());
                    }
                }
                out
            }
            PerturbOp::Add { inserts } => {
                let mut out = tokens.to_vec();
                for (slot, word) in inserts {
                    out.insert(*slot, word.clone());
                }
                out
            }
        }
    }
}

/// Replays an operation log on the original tokens.
pub fn replay(original: &[String], oplog: &[PerturbOp]) -> Vec<String> {
    oplog
        .iter()
        .fold(original.to_vec(), |tokens, op| op.apply(&tokens))
}

/// Chooses `k` positions and permutes their tokens with a Fisher–Yates pass
/// over the chosen positions.
fn shuffle_k(tokens: &[String], k: usize, rng: &mut Rng) -> (Vec<String>, PerturbOp) {
    let positions = rng.choose_positions(tokens.len(), k);
    let mut sources = positions.clone();
    rng.shuffle(&mut sources);
    let op = PerturbOp::Shuffle { positions, sources };
    (op.apply(tokens), op)
}

fn drop_k(tokens: &[String], k: usize, rng: &mut Rng) -> Result<(Vec<String>, PerturbOp), PerturbError> {
    if k >= tokens.len() {
        return Err(PerturbError::AllDropped {
            len: tokens.len(),
            drop: k,
        });
    }
    let positions = rng.choose_positions(tokens.len(), k);
    let op = PerturbOp::Drop { positions };
    Ok((op.apply(tokens), op))
}

fn add_k(tokens: &[String], donor: &[String], k: usize, rng: &mut Rng) -> Result<(Vec<String>, PerturbOp), PerturbError> {
    if donor.is_empty() {
        return Err(PerturbError::EmptyDonor);
    }
    let mut out = tokens.to_vec();
    let mut inserts = Vec::with_capacity(k);
    for _ in 0..k {
        let word = donor[rng.below(donor.len())].clone();
        let slot = rng.below(out.len() + 1);
        out.insert(slot, word.clone());
        inserts.push((slot, word));
    }
    Ok((out, PerturbOp::Add { inserts }))
}

fn rebuild(tokens: Vec<String>) -> TokenizedText {
    TokenizedText::from_tokens(tokens).expect("perturbation never empties a text")
}

/// Permutes `round(ratio * |text|)` uniformly chosen positions among
/// themselves. The token multiset is unchanged.
pub fn shuffle_words(text: &TokenizedText, ratio: f64, rng: &mut Rng) -> TokenizedText {
    let k = round_half_up(ratio * text.len() as f64).min(text.len());
    rebuild(shuffle_k(text.tokens(), k, rng).0)
}

/// Removes `round(ratio * |text|)` uniformly chosen words, keeping order.
pub fn drop_words(text: &TokenizedText, ratio: f64, rng: &mut Rng) -> Result<TokenizedText, PerturbError> {
    let k = round_half_up(ratio * text.len() as f64);
    Ok(rebuild(drop_k(text.tokens(), k, rng)?.0))
}

/// Inserts `round(ratio * |target|)` words sampled with replacement from the
/// donor, each at a uniformly chosen slot.
pub fn add_words(
    target: &TokenizedText,
    donor: &TokenizedText,
    ratio: f64,
    rng: &mut Rng,
) -> Result<TokenizedText, PerturbError> {
    let k = round_half_up(ratio * target.len() as f64);
    Ok(rebuild(add_k(target.tokens(), donor.tokens(), k, rng)?.0))
}

/// A (perturbed + prompted, original) training pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub original: TokenizedText,
    pub perturbed: PromptedInput,
    pub oplog: Vec<PerturbOp>,
}

impl PerturbationRecord {
    pub fn to_tsv_line(&self) -> String {
        format!("{}\t{}", self.perturbed.serialized(), self.original.raw())
    }
}

/// Shuffle, then drop, then add. Every count is a fraction of the ORIGINAL
/// length; the prompt is the original length.
pub fn make_reconstruction_pair(
    text: &TokenizedText,
    donor: &TokenizedText,
    config: &PerturbConfig,
    rng: &mut Rng,
) -> Result<PerturbationRecord, PerturbError> {
    let (k_shuffle, k_drop, k_add) = config.counts(text.len());
    let (tokens, shuffle) = shuffle_k(text.tokens(), k_shuffle.min(text.len()), rng);
    let (tokens, dropped) = drop_k(&tokens, k_drop, rng)?;
    let (tokens, added) = add_k(&tokens, donor.tokens(), k_add, rng)?;
    Ok(PerturbationRecord {
        original: text.clone(),
        perturbed: PromptedInput::new(text.len(), rebuild(tokens)),
        oplog: vec![shuffle, dropped, added],
    })
}

/// Donor index for every text: a seeded random cycle, so no text is its own
/// donor.
pub fn donor_pairing(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::derive(seed, PAIRING_STREAM).shuffle(&mut order);
    let mut donor = vec![0; n];
    for i in 0..n {
        donor[order[i]] = order[(i + 1) % n];
    }
    donor
}

/// Builds one record per text. Shard `s` (texts `s*SHARD_SIZE..`) draws from
/// the stream seeded with `seed ^ s`; shards run in parallel.
pub fn generate_records(
    corpus: &[TokenizedText],
    config: &PerturbConfig,
) -> Result<Vec<PerturbationRecord>, PerturbError> {
    config.validate()?;
    if corpus.len() < 2 {
        return Err(PerturbError::CorpusTooSmall(corpus.len()));
    }
    let donors = donor_pairing(corpus.len(), config.seed);
    let shards: Vec<Result<Vec<PerturbationRecord>, PerturbError>> = (0..corpus.len())
        .collect::<Vec<_>>()
        .par_chunks(SHARD_SIZE)
        .enumerate()
        .map(|(shard, idx)| {
            let mut rng = Rng::new(config.seed ^ shard as u64);
            idx.iter()
                .map(|&i| make_reconstruction_pair(&corpus[i], &corpus[donors[i]], config, &mut rng))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(corpus.len());
    for shard in shards {
        out.extend(shard?);
    }
    Ok(out)
}

/// Writes the reconstruction dataset as TSV (`prompted perturbed \t original`)
/// and returns the number of records.
pub fn write_dataset<W: Write>(
    corpus: &[TokenizedText],
    config: &PerturbConfig,
    out: W,
) -> Result<usize, PerturbError> {
    let records = generate_records(corpus, config)?;
    let mut out = BufWriter::new(out);
    for r in &records {
        writeln!(out, "{}", r.to_tsv_line())?;
    }
    out.flush()?;
    Ok(records.len())
}

pub fn generate_dataset(
    corpus: &[TokenizedText],
    config: &PerturbConfig,
    out_path: impl AsRef<Path>,
) -> Result<usize, PerturbError> {
    write_dataset(corpus, config, File::create(out_path)?)
}

/// Reads a TSV dataset back into (prompted input, original) pairs.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<(PromptedInput, TokenizedText)>, crate::corpus::CorpusError> {
    let content = std::fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for line in content.lines().filter(|l| !l.trim().is_empty()) {
        let (input, original) = line
            .split_once('\t')
            .ok_or_else(|| crate::corpus::CorpusError::MalformedPrompt(line.to_string()))?;
        pairs.push((PromptedInput::parse(input)?, crate::corpus::tokenize(original)?));
    }
    Ok(pairs)
}
