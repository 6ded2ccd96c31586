use std::cmp::Ordering;

use super::{
    filter_patterns, ConditionalGenerator, PatternConfig, PolicyError, SummaryCandidate, Termination, TokenId, EOS,
};
use crate::corpus::PromptedInput;
use crate::rewards::RewardModel;
use crate::rng::Rng;
use crate::scalar::Scalar;

fn finish<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &G,
    ids: Vec<TokenId>,
    token_logprobs: Vec<F>,
    terminated_by: Termination,
) -> SummaryCandidate<F> {
    let vocab = gen.vocabulary();
    let tokens = ids.iter().map(|&i| vocab.word(i).to_string()).collect();
    SummaryCandidate {
        ids,
        tokens,
        token_logprobs,
        terminated_by,
    }
}

fn check_distribution<F: Scalar>(dist: &[F], vocab_len: usize) -> Result<(), PolicyError> {
    if dist.len() != vocab_len {
        return Err(PolicyError::GeneratorFailure(format!(
            "distribution has {} entries for a vocabulary of {vocab_len}",
            dist.len()
        )));
    }
    Ok(())
}

/// Index of the largest probability; ties go to the lowest id.
fn argmax<F: Scalar>(dist: &[F]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate().skip(1) {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

/// Ancestral sampling from a prepared context.
pub fn sample_with<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &G,
    ctx: &G::Context,
    max_len: usize,
    rng: &mut Rng,
) -> Result<SummaryCandidate<F>, PolicyError> {
    let max_len = max_len.max(1);
    let vocab_len = gen.vocabulary().len();
    let mut ids = Vec::new();
    let mut lps = Vec::new();
    loop {
        let dist = gen.next_token_distribution(ctx, &ids)?;
        check_distribution(&dist, vocab_len)?;
        let u = rng.unit_f64();
        let mut acc = 0.0;
        let mut pick = None;
        for (i, p) in dist.iter().enumerate() {
            let p = p.as_f64();
            if p > 0.0 {
                acc += p;
                pick = Some(i);
                if u < acc {
                    break;
                }
            }
        }
        let a = pick.ok_or_else(|| PolicyError::GeneratorFailure("distribution has no mass".into()))?;
        lps.push(dist[a].ln());
        if a as TokenId == EOS {
            return Ok(finish(gen, ids, lps, Termination::Eos));
        }
        ids.push(a as TokenId);
        if ids.len() >= max_len {
            return Ok(finish(gen, ids, lps, Termination::MaxLen));
        }
    }
}

/// Draws each word from the policy until the end marker or `max_len` words.
pub fn sample_summary<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &G,
    input: &PromptedInput,
    max_len: usize,
    rng: &mut Rng,
) -> Result<SummaryCandidate<F>, PolicyError> {
    let ctx = gen.prepare(input)?;
    sample_with(gen, &ctx, max_len, rng)
}

pub fn greedy_with<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &G,
    ctx: &G::Context,
    max_len: usize,
) -> Result<SummaryCandidate<F>, PolicyError> {
    let max_len = max_len.max(1);
    let vocab_len = gen.vocabulary().len();
    let mut ids = Vec::new();
    let mut lps = Vec::new();
    loop {
        let dist = gen.next_token_distribution(ctx, &ids)?;
        check_distribution(&dist, vocab_len)?;
        let a = argmax(&dist);
        lps.push(dist[a].ln());
        if a as TokenId == EOS {
            return Ok(finish(gen, ids, lps, Termination::Eos));
        }
        ids.push(a as TokenId);
        if ids.len() >= max_len {
            return Ok(finish(gen, ids, lps, Termination::MaxLen));
        }
    }
}

/// Picks the most probable word at every step (lowest id on ties).
pub fn greedy_summary<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &G,
    input: &PromptedInput,
    max_len: usize,
) -> Result<SummaryCandidate<F>, PolicyError> {
    let ctx = gen.prepare(input)?;
    greedy_with(gen, &ctx, max_len)
}

struct Hyp<F> {
    ids: Vec<TokenId>,
    lps: Vec<F>,
    score: F,
}

/// Beam search on summed log-probability without length normalization.
///
/// Each round expands every live hypothesis by every id, keeps the
/// `beam_size` best expansions (ties: earlier parent, then lower id), moves
/// those that ended into the finished pool and continues with the rest.
/// Returns the best `beam_size` finished hypotheses, highest score first.
pub fn beam_search<F: Scalar, G: ConditionalGenerator<F> + ?Sized>(
    gen: &G,
    input: &PromptedInput,
    beam_size: usize,
    max_len: usize,
) -> Result<Vec<SummaryCandidate<F>>, PolicyError> {
    if beam_size == 0 {
        return Err(PolicyError::InvalidArgument("beam size must be at least 1".into()));
    }
    let max_len = max_len.max(1);
    let ctx = gen.prepare(input)?;
    let vocab_len = gen.vocabulary().len();
    let mut live = vec![Hyp {
        ids: Vec::new(),
        lps: Vec::new(),
        score: F::zero(),
    }];
    let mut finished: Vec<(Hyp<F>, Termination)> = Vec::new();
    while !live.is_empty() {
        let mut pool: Vec<(usize, TokenId, F, F)> = Vec::with_capacity(live.len() * vocab_len);
        for (b, h) in live.iter().enumerate() {
            let dist = gen.next_token_distribution(&ctx, &h.ids)?;
            check_distribution(&dist, vocab_len)?;
            for (tok, &p) in dist.iter().enumerate() {
                if p > F::zero() {
                    let lp = p.ln();
                    pool.push((b, tok as TokenId, lp, h.score + lp));
                }
            }
        }
        pool.sort_by(|x, y| {
            y.3.partial_cmp(&x.3)
                .unwrap_or(Ordering::Equal)
                .then(x.0.cmp(&y.0))
                .then(x.1.cmp(&y.1))
        });
        pool.truncate(beam_size);
        let mut next = Vec::with_capacity(beam_size);
        for (b, tok, lp, score) in pool {
            let parent = &live[b];
            let mut lps = parent.lps.clone();
            lps.push(lp);
            if tok == EOS {
                finished.push((Hyp { ids: parent.ids.clone(), lps, score }, Termination::Eos));
                continue;
            }
            let mut ids = parent.ids.clone();
            ids.push(tok);
            let h = Hyp { ids, lps, score };
            if h.ids.len() >= max_len {
                finished.push((h, Termination::MaxLen));
            } else {
                next.push(h);
            }
        }
        live = next;
    }
    finished.sort_by(|x, y| y.0.score.partial_cmp(&x.0.score).unwrap_or(Ordering::Equal));
    finished.truncate(beam_size);
    Ok(finished
        .into_iter()
        .map(|(h, t)| finish(gen, h.ids, h.lps, t))
        .collect())
}

/// Filters every candidate, discards those left empty, and returns the one
/// maximizing content + fluency + length reward. Ties go to the candidate
/// with the higher beam log-probability.
pub fn select_best<F: Scalar>(
    candidates: &[SummaryCandidate<F>],
    text: &[String],
    target_len: usize,
    model: &RewardModel<'_, F>,
    patterns: &PatternConfig,
) -> Result<SummaryCandidate<F>, PolicyError> {
    let text_embedding = model.embed_text(text)?;
    let mut best: Option<(F, F, SummaryCandidate<F>)> = None;
    for cand in candidates {
        let filtered = filter_patterns(cand, patterns);
        if filtered.is_empty() {
            continue;
        }
        let score = model.score(&filtered.tokens, &text_embedding, target_len)?.total;
        let lp = cand.total_logprob();
        let better = match &best {
            None => true,
            Some((s, l, _)) => score > *s || (score == *s && lp > *l),
        };
        if better {
            best = Some((score, lp, filtered));
        }
    }
    best.map(|(_, _, c)| c).ok_or(PolicyError::AllCandidatesEmpty)
}
