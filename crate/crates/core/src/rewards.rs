//! Summary rewards: content preservation, fluency, length, the multi-summary
//! quality coupling, and the reconstruction-loss reward used for ablations.
//!
//! All functions are generic over [`Scalar`]. Texts are token slices; the
//! embedder and language model are pluggable through [`TextEmbedder`] and
//! [`LanguageModel`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("embedder failure: {0}")]
    EmbedderFailure(String),
    #[error("language model failure: {0}")]
    LanguageModelFailure(String),
    #[error("invalid reward input: {0}")]
    InvalidInput(String),
}

/// Maps a token sequence to a fixed-dimension real vector.
pub trait TextEmbedder<F: Scalar>: Send + Sync {
    fn embed(&self, tokens: &[String]) -> Result<Vec<F>, RewardError>;
}

/// Left-to-right language model: natural-log probability of every token
/// given the tokens before it.
pub trait LanguageModel<F: Scalar>: Send + Sync {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<F>, RewardError>;
}

impl<F: Scalar, T: TextEmbedder<F> + ?Sized> TextEmbedder<F> for &T {
    fn embed(&self, tokens: &[String]) -> Result<Vec<F>, RewardError> {
        (**self).embed(tokens)
    }
}

impl<F: Scalar, T: TextEmbedder<F> + ?Sized> TextEmbedder<F> for Box<T> {
    fn embed(&self, tokens: &[String]) -> Result<Vec<F>, RewardError> {
        (**self).embed(tokens)
    }
}

impl<F: Scalar, T: LanguageModel<F> + ?Sized> LanguageModel<F> for &T {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<F>, RewardError> {
        (**self).token_logprobs(tokens)
    }
}

impl<F: Scalar, T: LanguageModel<F> + ?Sized> LanguageModel<F> for Box<T> {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<F>, RewardError> {
        (**self).token_logprobs(tokens)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig<F> {
    /// Fluency steepness.
    pub sigma_f: F,
    /// Length steepness.
    pub sigma_l: F,
    /// Weight of the multi-summary quality reward, in `[0, 1]`.
    pub lambda: F,
    /// Exponent on the quality gap inside the usefulness gate.
    pub alpha: F,
    /// Episode cap; `None` means `ceil(1.5 * target)`.
    pub max_gen_len: Option<usize>,
    /// Scale of the reconstruction-loss reward (ablation only).
    pub sigma_ae: Option<F>,
}

impl<F: Scalar> Default for RewardConfig<F> {
    fn default() -> Self {
        RewardConfig {
            sigma_f: F::of(1000.0),
            sigma_l: F::of(10.0),
            lambda: F::of(0.01),
            alpha: F::of(0.3),
            max_gen_len: None,
            sigma_ae: None,
        }
    }
}

impl<F: Scalar> RewardConfig<F> {
    pub fn validate(&self) -> Result<(), RewardError> {
        let bad = |m: &str| Err(RewardError::InvalidInput(m.to_string()));
        if !(self.sigma_f > F::zero()) {
            return bad("sigma_f must be positive");
        }
        if !(self.sigma_l > F::zero()) {
            return bad("sigma_l must be positive");
        }
        if !(self.lambda >= F::zero() && self.lambda <= F::one()) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.alpha >= F::zero()) {
            return bad("alpha must be non-negative");
        }
        if self.max_gen_len == Some(0) {
            return bad("max_gen_len must be positive");
        }
        if let Some(s) = self.sigma_ae {
            if !(s > F::zero()) {
                return bad("sigma_ae must be positive");
            }
        }
        Ok(())
    }

    /// Episode length cap for a target length.
    pub fn max_len_for(&self, target_len: usize) -> usize {
        self.max_gen_len
            .unwrap_or_else(|| (3 * target_len).div_ceil(2))
            .max(1)
    }
}

/// Per-summary reward components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown<F> {
    pub content: F,
    pub fluency: F,
    pub length: F,
    pub quality: F,
    pub total: F,
}

impl<F: Scalar> RewardBreakdown<F> {
    pub fn new(content: F, fluency: F, length: F, quality: F) -> Self {
        RewardBreakdown {
            content,
            fluency,
            length,
            quality,
            total: content + fluency + length + quality,
        }
    }

    pub fn zero() -> Self {
        Self::new(F::zero(), F::zero(), F::zero(), F::zero())
    }
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine<F: Scalar>(a: &[F], b: &[F]) -> Result<F, RewardError> {
    if a.len() != b.len() {
        return Err(RewardError::EmbedderFailure(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut dot = F::zero();
    let mut na = F::zero();
    let mut nb = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == F::zero() || nb == F::zero() {
        return Ok(F::zero());
    }
    let c = dot / (na.sqrt() * nb.sqrt());
    Ok(c.max(-F::one()).min(F::one()))
}

/// `(cos + 1) / 2` of two embeddings.
pub fn similarity<F: Scalar>(a: &[F], b: &[F]) -> Result<F, RewardError> {
    Ok((cosine(a, b)? + F::one()) / F::of(2.0))
}

fn checked_embedding<F: Scalar, E: TextEmbedder<F> + ?Sized>(
    embedder: &E,
    tokens: &[String],
) -> Result<Vec<F>, RewardError> {
    let v = embedder.embed(tokens)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(RewardError::EmbedderFailure("non-finite embedding".into()));
    }
    Ok(v)
}

pub fn content_reward<F: Scalar, E: TextEmbedder<F> + ?Sized>(
    summary: &[String],
    text: &[String],
    embedder: &E,
) -> Result<F, RewardError> {
    similarity(
        &checked_embedding(embedder, summary)?,
        &checked_embedding(embedder, text)?,
    )
}

/// Perplexity from per-token log-probabilities; `+inf` for an empty list.
pub fn perplexity_from_logprobs<F: Scalar>(logprobs: &[F]) -> F {
    if logprobs.is_empty() {
        return F::infinity();
    }
    let mean = logprobs.iter().copied().sum::<F>() / F::of_usize(logprobs.len());
    (-mean).exp()
}

pub fn perplexity<F: Scalar, L: LanguageModel<F> + ?Sized>(
    summary: &[String],
    lm: &L,
) -> Result<F, RewardError> {
    if summary.is_empty() {
        return Ok(F::infinity());
    }
    let lp = lm.token_logprobs(summary)?;
    if lp.len() != summary.len() {
        return Err(RewardError::LanguageModelFailure(format!(
            "scored {} of {} tokens",
            lp.len(),
            summary.len()
        )));
    }
    if lp.iter().any(|x| x.is_nan() || *x > F::zero()) {
        return Err(RewardError::LanguageModelFailure(
            "log-probabilities must be <= 0".into(),
        ));
    }
    Ok(perplexity_from_logprobs(&lp))
}

pub fn fluency_from_perplexity<F: Scalar>(ppl: F, sigma_f: F) -> F {
    (-ppl / sigma_f).exp()
}

pub fn fluency_reward<F: Scalar, L: LanguageModel<F> + ?Sized>(
    summary: &[String],
    lm: &L,
    sigma_f: F,
) -> Result<F, RewardError> {
    Ok(fluency_from_perplexity(perplexity(summary, lm)?, sigma_f))
}

pub fn length_reward<F: Scalar>(actual_len: usize, target_len: usize, sigma_l: F) -> F {
    let diff = actual_len.abs_diff(target_len);
    (-F::of_usize(diff) / sigma_l).exp()
}

/// Reward of a single summary: content + fluency + length.
pub fn sequence_reward<F: Scalar, E, L>(
    summary: &[String],
    text: &[String],
    target_len: usize,
    config: &RewardConfig<F>,
    embedder: &E,
    lm: &L,
) -> Result<RewardBreakdown<F>, RewardError>
where
    E: TextEmbedder<F> + ?Sized,
    L: LanguageModel<F> + ?Sized,
{
    Ok(RewardBreakdown::new(
        content_reward(summary, text, embedder)?,
        fluency_reward(summary, lm, config.sigma_f)?,
        length_reward(summary.len(), target_len, config.sigma_l),
        F::zero(),
    ))
}

/// Per-transition reward: the full summary reward when the episode ends
/// (end-of-sequence action, or `step` reached the cap), zero otherwise.
#[allow(clippy::too_many_arguments)]
pub fn terminal_reward<F: Scalar, E, L>(
    summary: &[String],
    text: &[String],
    target_len: usize,
    step: usize,
    is_eos: bool,
    config: &RewardConfig<F>,
    embedder: &E,
    lm: &L,
) -> Result<F, RewardError>
where
    E: TextEmbedder<F> + ?Sized,
    L: LanguageModel<F> + ?Sized,
{
    if is_eos || step >= config.max_len_for(target_len) {
        Ok(sequence_reward(summary, text, target_len, config, embedder, lm)?.total)
    } else {
        Ok(F::zero())
    }
}

/// Quality of a summary: content times fluency.
pub fn summary_quality<F: Scalar, E, L>(
    summary: &[String],
    text: &[String],
    embedder: &E,
    lm: &L,
    config: &RewardConfig<F>,
) -> Result<F, RewardError>
where
    E: TextEmbedder<F> + ?Sized,
    L: LanguageModel<F> + ?Sized,
{
    Ok(content_reward(summary, text, embedder)? * fluency_reward(summary, lm, config.sigma_f)?)
}

/// Usefulness gate from precomputed qualities:
/// `[q_other - q_target]_+^alpha * R_L(|other|, target_len)`. Exactly zero
/// unless the other summary is strictly better.
pub fn usefulness_from_quality<F: Scalar>(
    q_target: F,
    q_other: F,
    other_len: usize,
    target_len: usize,
    config: &RewardConfig<F>,
) -> F {
    let gap = q_other - q_target;
    if !(gap > F::zero()) {
        return F::zero();
    }
    gap.powf(config.alpha) * length_reward(other_len, target_len, config.sigma_l)
}

pub fn usefulness<F: Scalar, E, L>(
    summary: &[String],
    other: &[String],
    text: &[String],
    target_len: usize,
    config: &RewardConfig<F>,
    embedder: &E,
    lm: &L,
) -> Result<F, RewardError>
where
    E: TextEmbedder<F> + ?Sized,
    L: LanguageModel<F> + ?Sized,
{
    let q = summary_quality(summary, text, embedder, lm, config)?;
    let q_other = summary_quality(other, text, embedder, lm, config)?;
    Ok(usefulness_from_quality(q, q_other, other.len(), target_len, config))
}

/// Cached per-summary quantities used by the coupling terms.
#[derive(Clone, Debug)]
struct SummaryStats<F> {
    embedding: Vec<F>,
    len: usize,
    target: usize,
    content: F,
    fluency: F,
    length: F,
}

impl<F: Scalar> SummaryStats<F> {
    fn quality(&self) -> F {
        self.content * self.fluency
    }
}

/// Rewards for a set of summaries of one text, one per target length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalReward<F> {
    pub breakdowns: Vec<RewardBreakdown<F>>,
    /// Sum of the per-summary totals.
    pub total: F,
}

/// Scores summaries against one text with fixed embedder and language
/// model handles.
pub struct RewardModel<'a, F: Scalar> {
    pub config: RewardConfig<F>,
    embedder: &'a dyn TextEmbedder<F>,
    lm: &'a dyn LanguageModel<F>,
}

impl<'a, F: Scalar> RewardModel<'a, F> {
    pub fn new(
        config: RewardConfig<F>,
        embedder: &'a dyn TextEmbedder<F>,
        lm: &'a dyn LanguageModel<F>,
    ) -> Self {
        RewardModel { config, embedder, lm }
    }

    pub fn embedder(&self) -> &'a dyn TextEmbedder<F> {
        self.embedder
    }

    pub fn lm(&self) -> &'a dyn LanguageModel<F> {
        self.lm
    }

    pub fn embed_text(&self, text: &[String]) -> Result<Vec<F>, RewardError> {
        checked_embedding(self.embedder, text)
    }

    fn stats(&self, summary: &[String], target: usize, text_embedding: &[F]) -> Result<SummaryStats<F>, RewardError> {
        let embedding = checked_embedding(self.embedder, summary)?;
        Ok(SummaryStats {
            content: similarity(&embedding, text_embedding)?,
            fluency: fluency_reward(summary, self.lm, self.config.sigma_f)?,
            length: length_reward(summary.len(), target, self.config.sigma_l),
            len: summary.len(),
            target,
            embedding,
        })
    }

    /// Single-summary reward (no coupling term).
    pub fn score(&self, summary: &[String], text_embedding: &[F], target: usize) -> Result<RewardBreakdown<F>, RewardError> {
        let s = self.stats(summary, target, text_embedding)?;
        Ok(RewardBreakdown::new(s.content, s.fluency, s.length, F::zero()))
    }

    /// Rewards of every summary in `summaries` (pairs of tokens and target
    /// length) including the quality coupling among them.
    pub fn score_set(&self, summaries: &[(&[String], usize)], text_embedding: &[F]) -> Result<TotalReward<F>, RewardError> {
        let stats = summaries
            .iter()
            .map(|(y, l)| self.stats(y, *l, text_embedding))
            .collect::<Result<Vec<_>, _>>()?;
        let mut breakdowns = Vec::with_capacity(stats.len());
        for i in 0..stats.len() {
            let quality = self.coupling(&stats, i)?;
            let s = &stats[i];
            breakdowns.push(RewardBreakdown::new(s.content, s.fluency, s.length, quality));
        }
        let total = breakdowns.iter().map(|b| b.total).sum();
        Ok(TotalReward { breakdowns, total })
    }

    fn coupling(&self, stats: &[SummaryStats<F>], i: usize) -> Result<F, RewardError> {
        let me = &stats[i];
        let mut sum = F::zero();
        for (j, other) in stats.iter().enumerate() {
            if j == i {
                continue;
            }
            let u = usefulness_from_quality(me.quality(), other.quality(), other.len, me.target, &self.config);
            if u > F::zero() {
                sum += u * similarity(&me.embedding, &other.embedding)?;
            }
        }
        Ok(self.config.lambda * sum)
    }
}

/// Multi-summary quality reward of `summaries[index]` against its peers.
pub fn quality_reward<F: Scalar>(
    index: usize,
    summaries: &[(&[String], usize)],
    text: &[String],
    model: &RewardModel<'_, F>,
) -> Result<F, RewardError> {
    if index >= summaries.len() {
        return Err(RewardError::InvalidInput(format!(
            "summary {index} not in a set of {}",
            summaries.len()
        )));
    }
    let te = model.embed_text(text)?;
    Ok(model.score_set(summaries, &te)?.breakdowns[index].quality)
}

/// Per-summary breakdowns and the summed total reward of a summary set.
pub fn total_reward<F: Scalar>(
    summaries: &[(&[String], usize)],
    text: &[String],
    model: &RewardModel<'_, F>,
) -> Result<TotalReward<F>, RewardError> {
    let te = model.embed_text(text)?;
    model.score_set(summaries, &te)
}

/// Reconstruction-loss reward `exp(-loss / sigma_ae)`.
pub fn ae_reward<F: Scalar>(reconstruction_loss: F, sigma_ae: F) -> F {
    (-reconstruction_loss / sigma_ae).exp()
}
