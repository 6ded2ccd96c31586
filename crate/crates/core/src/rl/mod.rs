//! Self-critical policy-gradient training: the multi-summary step, the
//! single-length step, supervised reconstruction pretraining and the
//! training loop.

mod optim;
mod trainer;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use optim::AdamW;
pub use trainer::{
    batch_indices, pretrain, train, validate, BatchPlan, LengthStats, PretrainReport, TrainOutcome, TrainState,
    ValidationReport,
};

use crate::checkpoint::CheckpointError;
use crate::corpus::{LengthSpec, PromptedInput, TokenizedText};
use crate::policy::{greedy_with, sample_with, ConditionalGenerator, PolicyError, SummaryCandidate};
use crate::rewards::{RewardBreakdown, RewardConfig, RewardModel};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

impl From<crate::rewards::RewardError> for TrainError {
    fn from(e: crate::rewards::RewardError) -> Self {
        TrainError::Policy(e.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// One rollout per length per text, coupled through the quality reward.
    Msl,
    /// One uniformly drawn length per text.
    Single,
}

impl FromStr for TrainMode {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "msl" => Ok(TrainMode::Msl),
            "single" => Ok(TrainMode::Single),
            other => Err(TrainError::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Msl => "msl",
            TrainMode::Single => "single",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<F> {
    pub learning_rate: F,
    pub batch_size: usize,
    pub weight_decay: F,
    pub lengths: Vec<LengthSpec>,
    pub mode: TrainMode,
    /// Total optimizer steps, counted from step 0 across resumes.
    pub max_steps: usize,
    pub seed: u64,
    /// Stop after this many validations without a new best total reward.
    pub patience: Option<usize>,
    /// Validate every this many steps; 0 disables validation.
    pub eval_every: usize,
    /// Checkpoint every this many steps; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl<F: Scalar> Default for TrainConfig<F> {
    fn default() -> Self {
        TrainConfig {
            learning_rate: F::of(5e-5),
            batch_size: 24,
            weight_decay: F::of(0.01),
            lengths: vec![LengthSpec::Absolute(8), LengthSpec::Absolute(10), LengthSpec::Absolute(13)],
            mode: TrainMode::Msl,
            max_steps: 10_000,
            seed: 0,
            patience: None,
            eval_every: 500,
            checkpoint_every: 0,
        }
    }
}

impl<F: Scalar> TrainConfig<F> {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > F::zero()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.weight_decay >= F::zero()) {
            return bad("weight_decay must be non-negative");
        }
        if self.lengths.is_empty() {
            return bad("at least one length is required");
        }
        Ok(())
    }

    pub fn optimizer(&self, n_params: usize) -> AdamW<F> {
        AdamW::new(n_params, self.learning_rate, self.weight_decay)
    }
}

/// Summary of one optimizer step. Reward means are over every rollout of
/// the batch; component means describe the sampled rollouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport<F> {
    pub step: usize,
    pub mean_sampled: F,
    pub mean_greedy: F,
    pub mean_advantage: F,
    pub content: F,
    pub fluency: F,
    pub length: F,
    pub quality: F,
    pub loss: F,
    /// Mean `| |y| - target |` of the sampled rollouts.
    pub mean_length_gap: F,
    /// False when the gradient was exactly zero and no update was applied.
    pub updated: bool,
}

/// `-(r_sampled - r_greedy) * sum_t log pi(y_t)` over the sampled actions.
/// The advantage is a constant: nothing flows through rewards or the greedy
/// rollout.
pub fn self_critical_loss<F: Scalar>(
    sampled: &SummaryCandidate<F>,
    _greedy: &SummaryCandidate<F>,
    r_sampled: F,
    r_greedy: F,
) -> F {
    let advantage = r_sampled - r_greedy;
    if advantage == F::zero() {
        return F::zero();
    }
    -advantage * sampled.total_logprob()
}

/// Adds the gradient of [`self_critical_loss`], scaled by `scale`, into
/// `grad`.
pub fn self_critical_gradient<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &G,
    ctx: &G::Context,
    sampled: &SummaryCandidate<F>,
    r_sampled: F,
    r_greedy: F,
    scale: F,
    grad: &mut [F],
) -> Result<(), PolicyError> {
    let advantage = r_sampled - r_greedy;
    if advantage == F::zero() {
        return Ok(());
    }
    gen.accumulate_logprob_gradient(ctx, &sampled.actions(), -advantage * scale, grad)
}

/// A (text, length) pair of a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RolloutSlot {
    /// Index into the batch.
    pub text: usize,
    /// Index into the configured lengths.
    pub length: usize,
    /// Resolved word count.
    pub target: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout<F> {
    pub slot: RolloutSlot,
    pub sampled: SummaryCandidate<F>,
    pub greedy: SummaryCandidate<F>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredRollout<F> {
    pub sampled: RewardBreakdown<F>,
    pub greedy: RewardBreakdown<F>,
    pub advantage: F,
}

/// Seed of step `step` of a run seeded with `seed`.
pub fn step_seed(seed: u64, step: usize) -> u64 {
    Rng::derive(seed, step as u64).next_u64()
}

const LENGTH_DRAW: u64 = 0x6c65_6e67_7468;

fn rollout_stream(step_seed: u64, slot: RolloutSlot) -> Rng {
    Rng::derive(step_seed, ((slot.text as u64) << 20) ^ slot.length as u64)
}

/// Every configured length for every text, text-major.
pub fn msl_slots(batch: &[TokenizedText], lengths: &[LengthSpec]) -> Vec<RolloutSlot> {
    let mut slots = Vec::with_capacity(batch.len() * lengths.len());
    for (i, t) in batch.iter().enumerate() {
        for (j, l) in lengths.iter().enumerate() {
            slots.push(RolloutSlot {
                text: i,
                length: j,
                target: l.resolve_for(t.len()),
            });
        }
    }
    slots
}

/// One uniformly drawn length per text; no draw happens for a single
/// length.
pub fn single_slots(batch: &[TokenizedText], lengths: &[LengthSpec], step_seed: u64) -> Vec<RolloutSlot> {
    let mut rng = Rng::derive(step_seed, LENGTH_DRAW);
    batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let j = if lengths.len() == 1 { 0 } else { rng.below(lengths.len()) };
            RolloutSlot {
                text: i,
                length: j,
                target: lengths[j].resolve_for(t.len()),
            }
        })
        .collect()
}

fn prompted(text: &TokenizedText, target: usize) -> PromptedInput {
    PromptedInput::new(target, text.clone())
}

/// Samples and greedily decodes every slot. Each slot draws from its own
/// stream, so results do not depend on scheduling.
pub fn collect_rollouts<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &G,
    batch: &[TokenizedText],
    slots: &[RolloutSlot],
    reward_cfg: &RewardConfig<F>,
    step_seed: u64,
) -> Result<Vec<Rollout<F>>, PolicyError> {
    slots
        .par_iter()
        .map(|&slot| {
            let ctx = gen.prepare(&prompted(&batch[slot.text], slot.target))?;
            let max_len = reward_cfg.max_len_for(slot.target);
            let mut rng = rollout_stream(step_seed, slot);
            Ok(Rollout {
                slot,
                sampled: sample_with(gen, &ctx, max_len, &mut rng)?,
                greedy: greedy_with(gen, &ctx, max_len)?,
            })
        })
        .collect()
}

/// Groups consecutive rollouts of the same text.
fn text_groups<F>(rollouts: &[Rollout<F>]) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=rollouts.len() {
        if i == rollouts.len() || rollouts[i].slot.text != rollouts[start].slot.text {
            if start < i {
                groups.push(start..i);
            }
            start = i;
        }
    }
    groups
}

/// Rewards with the quality coupling: the sampled rollouts of a text form
/// one set and its greedy rollouts another.
pub fn score_coupled<F: Scalar>(
    batch: &[TokenizedText],
    rollouts: &[Rollout<F>],
    model: &RewardModel<'_, F>,
) -> Result<Vec<ScoredRollout<F>>, PolicyError> {
    let groups = text_groups(rollouts);
    let scored: Vec<Vec<ScoredRollout<F>>> = groups
        .par_iter()
        .map(|range| {
            let group = &rollouts[range.clone()];
            let te = model.embed_text(batch[group[0].slot.text].tokens())?;
            let sampled: Vec<(&[String], usize)> =
                group.iter().map(|r| (r.sampled.tokens.as_slice(), r.slot.target)).collect();
            let greedy: Vec<(&[String], usize)> =
                group.iter().map(|r| (r.greedy.tokens.as_slice(), r.slot.target)).collect();
            let s = model.score_set(&sampled, &te)?;
            let g = model.score_set(&greedy, &te)?;
            Ok(s.breakdowns
                .into_iter()
                .zip(g.breakdowns)
                .map(|(s, g)| ScoredRollout {
                    sampled: s,
                    greedy: g,
                    advantage: s.total - g.total,
                })
                .collect())
        })
        .collect::<Result<_, PolicyError>>()?;
    Ok(scored.into_iter().flatten().collect())
}

/// Rewards without the coupling term.
pub fn score_independent<F: Scalar>(
    batch: &[TokenizedText],
    rollouts: &[Rollout<F>],
    model: &RewardModel<'_, F>,
) -> Result<Vec<ScoredRollout<F>>, PolicyError> {
    rollouts
        .par_iter()
        .map(|r| {
            let te = model.embed_text(batch[r.slot.text].tokens())?;
            let s = model.score(&r.sampled.tokens, &te, r.slot.target)?;
            let g = model.score(&r.greedy.tokens, &te, r.slot.target)?;
            Ok(ScoredRollout {
                sampled: s,
                greedy: g,
                advantage: s.total - g.total,
            })
        })
        .collect()
}

/// Gradient of the batch loss `(1 / batch_len) * sum self_critical_loss`,
/// accumulated per configured length and then summed over lengths in
/// ascending length index. Lengths with no rollout contribute nothing.
pub fn policy_gradient<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &G,
    batch: &[TokenizedText],
    rollouts: &[Rollout<F>],
    scored: &[ScoredRollout<F>],
) -> Result<Vec<F>, PolicyError> {
    let n = gen.parameters().len();
    let scale = F::one() / F::of_usize(batch.len().max(1));
    let per_rollout: Vec<Option<Vec<F>>> = rollouts
        .par_iter()
        .zip(scored.par_iter())
        .map(|(r, s)| {
            if s.advantage == F::zero() {
                return Ok(None);
            }
            let ctx = gen.prepare(&prompted(&batch[r.slot.text], r.slot.target))?;
            let mut g = vec![F::zero(); n];
            self_critical_gradient(gen, &ctx, &r.sampled, s.sampled.total, s.greedy.total, scale, &mut g)?;
            Ok(Some(g))
        })
        .collect::<Result<_, PolicyError>>()?;
    let n_lengths = rollouts.iter().map(|r| r.slot.length + 1).max().unwrap_or(0);
    let mut by_length: Vec<Option<Vec<F>>> = vec![None; n_lengths];
    for (r, g) in rollouts.iter().zip(per_rollout) {
        if let Some(g) = g {
            let acc = by_length[r.slot.length].get_or_insert_with(|| vec![F::zero(); n]);
            for (a, x) in acc.iter_mut().zip(&g) {
                *a += *x;
            }
        }
    }
    let mut total: Option<Vec<F>> = None;
    for g in by_length.into_iter().flatten() {
        match total.as_mut() {
            None => total = Some(g),
            Some(t) => {
                for (a, x) in t.iter_mut().zip(&g) {
                    *a += *x;
                }
            }
        }
    }
    Ok(total.unwrap_or_else(|| vec![F::zero(); n]))
}

/// Applies `grad` unless it is identically zero. Returns whether an update
/// happened.
pub fn apply_gradient<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &mut G,
    optimizer: &mut AdamW<F>,
    grad: &[F],
) -> bool {
    if grad.iter().all(|g| *g == F::zero()) {
        return false;
    }
    optimizer.step(gen.parameters_mut(), grad);
    true
}

fn mean<F: Scalar>(xs: impl Iterator<Item = F>, n: usize) -> F {
    if n == 0 {
        return F::zero();
    }
    xs.sum::<F>() / F::of_usize(n)
}

/// Builds the report of a step from its rollouts and scores.
pub fn step_report<F: Scalar>(
    step: usize,
    batch_len: usize,
    rollouts: &[Rollout<F>],
    scored: &[ScoredRollout<F>],
    updated: bool,
) -> StepReport<F> {
    let n = scored.len();
    let scale = F::one() / F::of_usize(batch_len.max(1));
    let loss = rollouts
        .iter()
        .zip(scored)
        .map(|(r, s)| self_critical_loss(&r.sampled, &r.greedy, s.sampled.total, s.greedy.total) * scale)
        .sum();
    let mean_sampled = mean(scored.iter().map(|s| s.sampled.total), n);
    let mean_greedy = mean(scored.iter().map(|s| s.greedy.total), n);
    StepReport {
        step,
        mean_sampled,
        mean_greedy,
        mean_advantage: mean(scored.iter().map(|s| s.advantage), n),
        content: mean(scored.iter().map(|s| s.sampled.content), n),
        fluency: mean(scored.iter().map(|s| s.sampled.fluency), n),
        length: mean(scored.iter().map(|s| s.sampled.length), n),
        quality: mean(scored.iter().map(|s| s.sampled.quality), n),
        loss,
        mean_length_gap: mean(
            rollouts.iter().map(|r| F::of_usize(r.sampled.len().abs_diff(r.slot.target))),
            n,
        ),
        updated,
    }
}

/// Multi-summary step: for each text one sampled and one greedy rollout per
/// configured length, per-length advantages from the coupled rewards, and a
/// single optimizer update. On error the parameters are untouched.
#[allow(clippy::too_many_arguments)]
pub fn msl_train_step<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &mut G,
    optimizer: &mut AdamW<F>,
    batch: &[TokenizedText],
    lengths: &[LengthSpec],
    model: &RewardModel<'_, F>,
    step: usize,
    seed: u64,
) -> Result<StepReport<F>, PolicyError> {
    if lengths.is_empty() {
        return Err(PolicyError::InvalidArgument("no lengths configured".into()));
    }
    let ss = step_seed(seed, step);
    let slots = msl_slots(batch, lengths);
    let rollouts = collect_rollouts(&*gen, batch, &slots, &model.config, ss)?;
    let scored = score_coupled(batch, &rollouts, model)?;
    let grad = policy_gradient(&*gen, batch, &rollouts, &scored)?;
    let updated = apply_gradient(gen, optimizer, &grad);
    Ok(step_report(step, batch.len(), &rollouts, &scored, updated))
}

/// Single-length step: one length drawn uniformly per text, rewards without
/// the coupling term, one optimizer update.
#[allow(clippy::too_many_arguments)]
pub fn single_train_step<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &mut G,
    optimizer: &mut AdamW<F>,
    batch: &[TokenizedText],
    lengths: &[LengthSpec],
    model: &RewardModel<'_, F>,
    step: usize,
    seed: u64,
) -> Result<StepReport<F>, PolicyError> {
    if lengths.is_empty() {
        return Err(PolicyError::InvalidArgument("no lengths configured".into()));
    }
    let ss = step_seed(seed, step);
    let slots = single_slots(batch, lengths, ss);
    let rollouts = collect_rollouts(&*gen, batch, &slots, &model.config, ss)?;
    let scored = score_independent(batch, &rollouts, model)?;
    let grad = policy_gradient(&*gen, batch, &rollouts, &scored)?;
    let updated = apply_gradient(gen, optimizer, &grad);
    Ok(step_report(step, batch.len(), &rollouts, &scored, updated))
}

/// Teacher-forced negative log-likelihood of each original text (end
/// marker included) given its prompted perturbed input, averaged per token,
/// and its gradient.
pub fn reconstruction_loss<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &G,
    pairs: &[(PromptedInput, TokenizedText)],
) -> Result<(F, Vec<F>), PolicyError> {
    let n = gen.parameters().len();
    let vocab = gen.vocabulary();
    let encoded: Vec<Vec<crate::policy::TokenId>> = pairs
        .iter()
        .map(|(_, target)| {
            let mut ids = target
                .tokens()
                .iter()
                .map(|w| {
                    vocab
                        .id(w)
                        .ok_or_else(|| PolicyError::GeneratorFailure(format!("word {w:?} not in vocabulary")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            ids.push(crate::policy::EOS);
            Ok(ids)
        })
        .collect::<Result<_, PolicyError>>()?;
    let tokens: usize = encoded.iter().map(Vec::len).sum();
    if tokens == 0 {
        return Ok((F::zero(), vec![F::zero(); n]));
    }
    let scale = F::one() / F::of_usize(tokens);
    let parts: Vec<(F, Vec<F>)> = pairs
        .par_iter()
        .zip(encoded.par_iter())
        .map(|((input, _), ids)| {
            let ctx = gen.prepare(input)?;
            let nll: F = gen.score_logprob(&ctx, ids)?.into_iter().map(|lp| -lp).sum();
            let mut g = vec![F::zero(); n];
            gen.accumulate_logprob_gradient(&ctx, ids, -scale, &mut g)?;
            Ok((nll, g))
        })
        .collect::<Result<_, PolicyError>>()?;
    let mut loss = F::zero();
    let mut grad = vec![F::zero(); n];
    for (nll, g) in parts {
        loss += nll;
        for (a, x) in grad.iter_mut().zip(&g) {
            *a += *x;
        }
    }
    Ok((loss * scale, grad))
}

/// One supervised update on reconstruction pairs. Returns the loss before
/// the update.
pub fn pretrain_step<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &mut G,
    optimizer: &mut AdamW<F>,
    pairs: &[(PromptedInput, TokenizedText)],
) -> Result<F, PolicyError> {
    let (loss, grad) = reconstruction_loss(&*gen, pairs)?;
    apply_gradient(gen, optimizer, &grad);
    Ok(loss)
}
