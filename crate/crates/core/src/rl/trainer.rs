use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{msl_train_step, pretrain_step, single_train_step, AdamW, StepReport, TrainConfig, TrainError, TrainMode};
use crate::checkpoint::{read_json, read_jsonl, write_json, write_jsonl, CheckpointDir, CheckpointError, Checkpointable};
use crate::corpus::{PromptedInput, TokenizedText};
use crate::policy::{greedy_with, ConditionalGenerator};
use crate::rewards::RewardModel;
use crate::rng::Rng;
use crate::scalar::Scalar;

pub const OPTIMIZER_FILE: &str = "optimizer.json";
pub const STATE_FILE: &str = "state.json";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const VALIDATION_FILE: &str = "validation.jsonl";
pub const PRETRAIN_FILE: &str = "loss.jsonl";

const EPOCH_LABEL: u64 = 0x0065_706f_6368;

/// Indices of the training texts used at `step`. Text positions run through
/// a fresh seeded permutation per epoch, so the batch of any step is a pure
/// function of `(n, batch_size, seed, step)`.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, step: usize) -> Vec<usize> {
    BatchPlan::new(n, batch_size, seed).indices(step)
}

/// Caches the permutation of the current epoch.
#[derive(Clone, Debug)]
pub struct BatchPlan {
    n: usize,
    batch_size: usize,
    seed: u64,
    cached: Option<(usize, Vec<usize>)>,
}

impl BatchPlan {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        BatchPlan {
            n,
            batch_size,
            seed,
            cached: None,
        }
    }

    fn epoch(&mut self, e: usize) -> &[usize] {
        if self.cached.as_ref().is_none_or(|(c, _)| *c != e) {
            let mut perm: Vec<usize> = (0..self.n).collect();
            Rng::derive(self.seed ^ EPOCH_LABEL, e as u64).shuffle(&mut perm);
            self.cached = Some((e, perm));
        }
        &self.cached.as_ref().expect("epoch cached").1
    }

    pub fn indices(&mut self, step: usize) -> Vec<usize> {
        let n = self.n;
        if n == 0 {
            return Vec::new();
        }
        (0..self.batch_size)
            .map(|k| {
                let g = step * self.batch_size + k;
                self.epoch(g / n)[g % n]
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthStats<F> {
    /// The configured length as written, e.g. `8` or `30%`.
    pub length: String,
    pub mean_target: F,
    pub mean_generated: F,
    pub mean_abs_gap: F,
    pub length_reward: F,
}

/// Greedy decoding of the validation texts at every configured length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport<F> {
    pub step: usize,
    /// Mean per-summary total reward, coupling included.
    pub mean_total: F,
    pub content: F,
    pub fluency: F,
    pub length: F,
    pub quality: F,
    pub per_length: Vec<LengthStats<F>>,
}

pub fn validate<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &G,
    texts: &[TokenizedText],
    lengths: &[crate::corpus::LengthSpec],
    model: &RewardModel<'_, F>,
    step: usize,
) -> Result<ValidationReport<F>, TrainError> {
    struct Item<F> {
        breakdowns: Vec<crate::rewards::RewardBreakdown<F>>,
        gens: Vec<(usize, usize)>,
    }
    let items: Vec<Item<F>> = texts
        .par_iter()
        .map(|t| -> Result<Item<F>, TrainError> {
            let mut summaries = Vec::with_capacity(lengths.len());
            for l in lengths {
                let target = l.resolve_for(t.len());
                let ctx = gen.prepare(&PromptedInput::new(target, t.clone()))?;
                let y = greedy_with(gen, &ctx, model.config.max_len_for(target))?;
                summaries.push((y.tokens, target));
            }
            let set: Vec<(&[String], usize)> = summaries.iter().map(|(y, l)| (y.as_slice(), *l)).collect();
            let te = model.embed_text(t.tokens())?;
            Ok(Item {
                breakdowns: model.score_set(&set, &te)?.breakdowns,
                gens: summaries.iter().map(|(y, l)| (y.len(), *l)).collect(),
            })
        })
        .collect::<Result<_, _>>()?;
    let n = items.len() * lengths.len();
    let avg = |f: &dyn Fn(&crate::rewards::RewardBreakdown<F>) -> F| -> F {
        if n == 0 {
            return F::zero();
        }
        items.iter().flat_map(|i| i.breakdowns.iter()).map(f).sum::<F>() / F::of_usize(n)
    };
    let nt = F::of_usize(items.len().max(1));
    let per_length = lengths
        .iter()
        .enumerate()
        .map(|(j, l)| LengthStats {
            length: l.to_string(),
            mean_target: items.iter().map(|i| F::of_usize(i.gens[j].1)).sum::<F>() / nt,
            mean_generated: items.iter().map(|i| F::of_usize(i.gens[j].0)).sum::<F>() / nt,
            mean_abs_gap: items.iter().map(|i| F::of_usize(i.gens[j].0.abs_diff(i.gens[j].1))).sum::<F>() / nt,
            length_reward: items.iter().map(|i| i.breakdowns[j].length).sum::<F>() / nt,
        })
        .collect();
    Ok(ValidationReport {
        step,
        mean_total: avg(&|b| b.total),
        content: avg(&|b| b.content),
        fluency: avg(&|b| b.fluency),
        length: avg(&|b| b.length),
        quality: avg(&|b| b.quality),
        per_length,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport<F> {
    pub step: usize,
    pub loss: F,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Bookkeeping<F> {
    step: usize,
    best_validation: Option<F>,
    evals_since_best: usize,
}

/// Everything beyond the generator weights needed to continue a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<F> {
    pub step: usize,
    pub optimizer: AdamW<F>,
    pub best_validation: Option<F>,
    pub evals_since_best: usize,
    pub reports: Vec<StepReport<F>>,
    pub validation: Vec<ValidationReport<F>>,
    pub pretrain: Vec<PretrainReport<F>>,
}

impl<F: Scalar> TrainState<F> {
    pub fn new(optimizer: AdamW<F>) -> Self {
        TrainState {
            step: 0,
            optimizer,
            best_validation: None,
            evals_since_best: 0,
            reports: Vec::new(),
            validation: Vec::new(),
            pretrain: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CheckpointError> {
        write_json(&dir.join(OPTIMIZER_FILE), &self.optimizer)?;
        write_json(
            &dir.join(STATE_FILE),
            &Bookkeeping {
                step: self.step,
                best_validation: self.best_validation,
                evals_since_best: self.evals_since_best,
            },
        )?;
        write_jsonl(&dir.join(REPORTS_FILE), &self.reports)?;
        write_jsonl(&dir.join(VALIDATION_FILE), &self.validation)?;
        write_jsonl(&dir.join(PRETRAIN_FILE), &self.pretrain)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CheckpointError> {
        let b: Bookkeeping<F> = read_json(&dir.join(STATE_FILE))?;
        Ok(TrainState {
            step: b.step,
            optimizer: read_json(&dir.join(OPTIMIZER_FILE))?,
            best_validation: b.best_validation,
            evals_since_best: b.evals_since_best,
            reports: read_jsonl(&dir.join(REPORTS_FILE))?,
            validation: read_jsonl(&dir.join(VALIDATION_FILE))?,
            pretrain: read_jsonl(&dir.join(PRETRAIN_FILE))?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub steps_run: usize,
    pub stopped_early: bool,
    pub final_checkpoint: Option<PathBuf>,
}

fn save<F: Scalar, G>(
    dir: Option<&CheckpointDir>,
    gen: &G,
    state: &TrainState<F>,
    config_text: &str,
) -> Result<Option<PathBuf>, TrainError>
where
    G: ConditionalGenerator<F> + Checkpointable,
{
    match dir {
        None => Ok(None),
        Some(d) => Ok(Some(d.save(state.step, gen, config_text, |p| state.write(p))?)),
    }
}

/// Runs policy-gradient steps until `config.max_steps` (counted from the
/// state's step) or early stopping. Validation happens at the starting step
/// of a fresh run, every `eval_every` steps and at the end.
#[allow(clippy::too_many_arguments)]
pub fn train<F: Scalar, G>(
    gen: &mut G,
    state: &mut TrainState<F>,
    config: &TrainConfig<F>,
    model: &RewardModel<'_, F>,
    train_texts: &[TokenizedText],
    validation: &[TokenizedText],
    checkpoints: Option<&CheckpointDir>,
    config_text: &str,
) -> Result<TrainOutcome, TrainError>
where
    G: ConditionalGenerator<F> + Checkpointable,
{
    config.validate()?;
    model.config.validate()?;
    if train_texts.is_empty() && state.step < config.max_steps {
        return Err(TrainError::InvalidConfig("empty training corpus".into()));
    }
    let start = state.step;
    let run_validation = config.eval_every > 0 && !validation.is_empty();
    let mut plan = BatchPlan::new(train_texts.len(), config.batch_size, config.seed);
    let mut stopped_early = false;
    let check = |gen: &G, state: &mut TrainState<F>| -> Result<bool, TrainError> {
        let v = validate(gen, validation, &config.lengths, model, state.step)?;
        let improved = state.best_validation.is_none_or(|b| v.mean_total > b);
        if improved {
            state.best_validation = Some(v.mean_total);
            state.evals_since_best = 0;
        } else {
            state.evals_since_best += 1;
        }
        state.validation.push(v);
        Ok(config.patience.is_some_and(|p| state.evals_since_best >= p))
    };
    if run_validation && state.validation.is_empty() {
        check(gen, state)?;
    }
    while state.step < config.max_steps {
        let batch: Vec<TokenizedText> = plan
            .indices(state.step)
            .into_iter()
            .map(|i| train_texts[i].clone())
            .collect();
        let report = match config.mode {
            TrainMode::Msl => msl_train_step(gen, &mut state.optimizer, &batch, &config.lengths, model, state.step, config.seed)?,
            TrainMode::Single => {
                single_train_step(gen, &mut state.optimizer, &batch, &config.lengths, model, state.step, config.seed)?
            }
        };
        state.reports.push(report);
        state.step += 1;
        if run_validation && state.step.is_multiple_of(config.eval_every) && check(gen, state)? {
            stopped_early = true;
            break;
        }
        if config.checkpoint_every > 0 && state.step.is_multiple_of(config.checkpoint_every) && state.step < config.max_steps {
            save(checkpoints, gen, state, config_text)?;
        }
    }
    if run_validation && state.validation.last().map(|v| v.step) != Some(state.step) {
        check(gen, state)?;
    }
    let final_checkpoint = save(checkpoints, gen, state, config_text)?;
    Ok(TrainOutcome {
        steps_run: state.step - start,
        stopped_early,
        final_checkpoint,
    })
}

/// Supervised reconstruction fit for `config.max_steps` steps in total.
/// Uses the batch size, seed and checkpoint interval of `config`.
pub fn pretrain<F: Scalar, G>(
    gen: &mut G,
    state: &mut TrainState<F>,
    config: &TrainConfig<F>,
    pairs: &[(PromptedInput, TokenizedText)],
    checkpoints: Option<&CheckpointDir>,
    config_text: &str,
) -> Result<TrainOutcome, TrainError>
where
    G: ConditionalGenerator<F> + Checkpointable,
{
    config.validate()?;
    if pairs.is_empty() && state.step < config.max_steps {
        return Err(TrainError::InvalidConfig("empty reconstruction dataset".into()));
    }
    let start = state.step;
    let mut plan = BatchPlan::new(pairs.len(), config.batch_size, config.seed);
    while state.step < config.max_steps {
        let batch: Vec<(PromptedInput, TokenizedText)> =
            plan.indices(state.step).into_iter().map(|i| pairs[i].clone()).collect();
        let loss = pretrain_step(gen, &mut state.optimizer, &batch)?;
        state.pretrain.push(PretrainReport { step: state.step, loss });
        state.step += 1;
        if config.checkpoint_every > 0 && state.step.is_multiple_of(config.checkpoint_every) && state.step < config.max_steps {
            save(checkpoints, gen, state, config_text)?;
        }
    }
    let final_checkpoint = save(checkpoints, gen, state, config_text)?;
    Ok(TrainOutcome {
        steps_run: state.step - start,
        stopped_early: false,
        final_checkpoint,
    })
}
