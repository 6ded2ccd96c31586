//! ROUGE, fidelity, fluency, length and novelty metrics, plus the two
//! evaluation protocols and their reports.

mod rouge;

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use rouge::{
    lcs_length, ngram_counts, rouge_l, rouge_l_by, rouge_l_single, rouge_n, rouge_n_by, rouge_n_single, RougeScore,
    Selection,
};

use crate::corpus::{tokenize, CorpusError, TokenizedText};
use crate::rewards::{cosine, fluency_reward, LanguageModel, RewardError, TextEmbedder};
use crate::scalar::Scalar;

/// Character limit of the recall protocol.
pub const DUC_CHAR_LIMIT: usize = 75;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    EmptyDataset,
    #[error("line {line}: no reference summary")]
    MissingReferences { line: usize },
    #[error("{items} dataset items but {summaries} summaries")]
    LengthMismatch { items: usize, summaries: usize },
    #[error("unknown protocol {0:?} (expected gigaword_f1 or duc_recall)")]
    UnknownProtocol(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("report serialization: {0}")]
    Serialize(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Keeps the first `limit` characters of the space-joined summary. A word cut
/// in the middle stays as its prefix.
pub fn truncate_chars(summary: &str, limit: usize) -> String {
    summary.chars().take(limit).collect()
}

/// Token-level form of [`truncate_chars`].
pub fn truncate_tokens(summary: &[String], limit: usize) -> Vec<String> {
    truncate_chars(&summary.join(" "), limit)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Raw cosine between the evaluation-embedder vectors of summary and input.
pub fn fidelity<F: Scalar, E: TextEmbedder<F> + ?Sized>(
    summary: &[String],
    text: &[String],
    eval_embedder: &E,
) -> Result<F, RewardError> {
    let a = eval_embedder.embed(summary)?;
    let b = eval_embedder.embed(text)?;
    cosine(&a, &b)
}

/// Same value as the fluency reward.
pub fn fluency_metric<F: Scalar, L: LanguageModel<F> + ?Sized>(
    summary: &[String],
    lm: &L,
    sigma_f: F,
) -> Result<F, RewardError> {
    fluency_reward(summary, lm, sigma_f)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoveltyStats<F> {
    /// Fraction of summaries with at least one word absent from their input.
    pub ratio_with_new_words: F,
    /// Mean number of such tokens, over the summaries that have any.
    pub avg_new_words: F,
}

/// Summary tokens that do not occur in the input, in summary order.
pub fn new_words<'a>(text: &[String], summary: &'a [String]) -> Vec<&'a str> {
    let seen: HashSet<&str> = text.iter().map(String::as_str).collect();
    summary
        .iter()
        .map(String::as_str)
        .filter(|w| !seen.contains(w))
        .collect()
}

pub fn novelty_stats<F: Scalar, T: AsRef<[String]>, S: AsRef<[String]>>(pairs: &[(T, S)]) -> NoveltyStats<F> {
    let counts: Vec<usize> = pairs
        .iter()
        .map(|(t, y)| new_words(t.as_ref(), y.as_ref()).len())
        .collect();
    novelty_from_counts(&counts)
}

fn novelty_from_counts<F: Scalar>(counts: &[usize]) -> NoveltyStats<F> {
    if counts.is_empty() {
        return NoveltyStats::default();
    }
    let with: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    let ratio = F::of_usize(with.len()) / F::of_usize(counts.len());
    let avg = if with.is_empty() {
        F::zero()
    } else {
        F::of_usize(with.iter().sum()) / F::of_usize(with.len())
    };
    NoveltyStats {
        ratio_with_new_words: ratio,
        avg_new_words: avg,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// F1 triple, untruncated, best reference by F1.
    GigawordF1,
    /// Recall triple after truncation to [`DUC_CHAR_LIMIT`] characters, best
    /// reference by recall.
    DucRecall,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::GigawordF1 => "gigaword_f1",
            Protocol::DucRecall => "duc_recall",
        }
    }

    fn selection(self) -> Selection {
        match self {
            Protocol::GigawordF1 => Selection::F1,
            Protocol::DucRecall => Selection::Recall,
        }
    }

    /// Scores one summary against its references under this protocol.
    pub fn rouge_triple<F: Scalar, R: AsRef<[String]>>(
        self,
        summary: &[String],
        references: &[R],
    ) -> [RougeScore<F>; 3] {
        let cand = match self {
            Protocol::GigawordF1 => summary.to_vec(),
            Protocol::DucRecall => truncate_tokens(summary, DUC_CHAR_LIMIT),
        };
        let by = self.selection();
        [
            rouge_n_by(&cand, references, 1, by),
            rouge_n_by(&cand, references, 2, by),
            rouge_l_by(&cand, references, by),
        ]
    }
}

impl FromStr for Protocol {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "gigaword_f1" => Ok(Protocol::GigawordF1),
            "duc_recall" => Ok(Protocol::DucRecall),
            other => Err(EvalError::UnknownProtocol(other.to_string())),
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One evaluation item: input text and one or more references.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalItem {
    pub input: TokenizedText,
    pub references: Vec<TokenizedText>,
}

/// Reads `input\tref1\tref2...` lines. Blank lines are skipped; empty
/// reference columns are ignored, and a line left without any is an error.
pub fn read_eval_dataset<R: BufRead>(reader: R) -> Result<Vec<EvalItem>, EvalError> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| match e.kind() {
            io::ErrorKind::InvalidData => EvalError::Corpus(CorpusError::Encoding { line: i + 1 }),
            _ => EvalError::Io(e),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let input = tokenize(cols.next().unwrap_or_default())?;
        let references: Vec<TokenizedText> = cols.filter_map(|c| tokenize(c).ok()).collect();
        if references.is_empty() {
            return Err(EvalError::MissingReferences { line: i + 1 });
        }
        items.push(EvalItem { input, references });
    }
    Ok(items)
}

pub fn load_eval_dataset(path: impl AsRef<Path>) -> Result<Vec<EvalItem>, EvalError> {
    read_eval_dataset(BufReader::new(File::open(path)?))
}

/// Headline numbers of a protocol: the F1 or the recall of each ROUGE
/// variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Headline<F> {
    pub metric: HeadlineMetric,
    pub rouge1: F,
    pub rouge2: F,
    #[serde(rename = "rougeL")]
    pub rouge_l: F,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadlineMetric {
    #[default]
    F1,
    Recall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<F> {
    pub protocol: Protocol,
    pub items: usize,
    /// Free-form grouping label such as the target length of the model.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub group: Option<String>,
    pub fidelity: F,
    pub fluency: F,
    pub avg_length: F,
    pub headline: Headline<F>,
    pub rouge1: RougeScore<F>,
    pub rouge2: RougeScore<F>,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore<F>,
    pub novelty: NoveltyStats<F>,
}

impl<F: Scalar> EvalReport<F> {
    /// Key/value text with one block per metric group.
    pub fn to_text(&self) -> Result<String, EvalError> {
        toml::to_string(self).map_err(|e| EvalError::Serialize(e.to_string()))
    }

    pub fn from_text(s: &str) -> Result<Self, EvalError> {
        toml::from_str(s).map_err(|e| EvalError::Serialize(e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }
}

struct ItemScores<F> {
    rouge: [RougeScore<F>; 3],
    fidelity: F,
    fluency: F,
    len: usize,
    new_words: usize,
}

fn mean_score<F: Scalar>(scores: &[&RougeScore<F>]) -> RougeScore<F> {
    let n = F::of_usize(scores.len());
    RougeScore {
        precision: scores.iter().map(|s| s.precision).sum::<F>() / n,
        recall: scores.iter().map(|s| s.recall).sum::<F>() / n,
        f1: scores.iter().map(|s| s.f1).sum::<F>() / n,
    }
}

/// Scores `summaries[i]` against `items[i]` under `protocol`. Fidelity,
/// fluency, length and novelty use the untruncated summaries.
pub fn evaluate<F: Scalar>(
    items: &[EvalItem],
    summaries: &[Vec<String>],
    protocol: Protocol,
    eval_embedder: &dyn TextEmbedder<F>,
    lm: &dyn LanguageModel<F>,
    sigma_f: F,
) -> Result<EvalReport<F>, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if items.len() != summaries.len() {
        return Err(EvalError::LengthMismatch {
            items: items.len(),
            summaries: summaries.len(),
        });
    }
    let per_item: Vec<ItemScores<F>> = items
        .par_iter()
        .zip(summaries.par_iter())
        .map(|(item, y)| -> Result<ItemScores<F>, EvalError> {
            let refs: Vec<&[String]> = item.references.iter().map(|r| r.tokens()).collect();
            Ok(ItemScores {
                rouge: protocol.rouge_triple(y, &refs),
                fidelity: fidelity(y, item.input.tokens(), eval_embedder)?,
                fluency: fluency_metric(y, lm, sigma_f)?,
                len: y.len(),
                new_words: new_words(item.input.tokens(), y).len(),
            })
        })
        .collect::<Result<_, _>>()?;

    let n = F::of_usize(per_item.len());
    let column = |k: usize| mean_score(&per_item.iter().map(|s| &s.rouge[k]).collect::<Vec<_>>());
    let (rouge1, rouge2, rouge_l) = (column(0), column(1), column(2));
    let pick = |s: &RougeScore<F>| match protocol {
        Protocol::GigawordF1 => s.f1,
        Protocol::DucRecall => s.recall,
    };
    let headline = Headline {
        metric: match protocol {
            Protocol::GigawordF1 => HeadlineMetric::F1,
            Protocol::DucRecall => HeadlineMetric::Recall,
        },
        rouge1: pick(&rouge1),
        rouge2: pick(&rouge2),
        rouge_l: pick(&rouge_l),
    };
    let counts: Vec<usize> = per_item.iter().map(|s| s.new_words).collect();
    Ok(EvalReport {
        protocol,
        items: per_item.len(),
        group: None,
        fidelity: per_item.iter().map(|s| s.fidelity).sum::<F>() / n,
        fluency: per_item.iter().map(|s| s.fluency).sum::<F>() / n,
        avg_length: F::of_usize(per_item.iter().map(|s| s.len).sum()) / n,
        headline,
        rouge1,
        rouge2,
        rouge_l,
        novelty: novelty_from_counts(&counts),
    })
}
