//! Decoding episodes over an abstract conditional generator: sampling,
//! greedy and beam-search rollouts, pattern filtering and reward-based
//! selection among beam candidates.

mod decode;
mod episode;
mod patterns;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PromptedInput;
use crate::rewards::RewardError;
use crate::scalar::Scalar;

pub use decode::{beam_search, greedy_summary, greedy_with, sample_summary, sample_with, select_best};
pub use episode::EpisodeState;
pub use patterns::{filter_patterns, PatternConfig};

pub type TokenId = u32;

/// Id of the end-of-sequence action in every [`Vocabulary`].
pub const EOS: TokenId = 0;
pub const EOS_TOKEN: &str = "</s>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("generator failure: {0}")]
    GeneratorFailure(String),
    #[error("every candidate is empty after pattern filtering")]
    AllCandidatesEmpty,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Word list with the end-of-sequence marker at id 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from words in first-seen order; duplicates and the
    /// end marker itself are ignored.
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            words: vec![EOS_TOKEN.to_string()],
            index: HashMap::new(),
        };
        v.index.insert(EOS_TOKEN.to_string(), EOS);
        for w in words {
            let w = w.into();
            if !v.index.contains_key(&w) {
                v.index.insert(w.clone(), v.words.len() as TokenId);
                v.words.push(w);
            }
        }
        v
    }

    /// Restores the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as TokenId))
            .collect();
    }

    /// Size including the end marker.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 1
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: TokenId) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Trainable policy producing a distribution over the vocabulary (end marker
/// included) given a prompted input and the tokens generated so far.
pub trait ConditionalGenerator<F: Scalar>: Send + Sync {
    /// Per-input state computed once per episode.
    type Context: Send + Sync;

    fn vocabulary(&self) -> &Vocabulary;

    fn prepare(&self, input: &PromptedInput) -> Result<Self::Context, PolicyError>;

    /// Probabilities over all ids; sums to one.
    fn next_token_distribution(&self, ctx: &Self::Context, prefix: &[TokenId]) -> Result<Vec<F>, PolicyError>;

    /// Log-probability of each action in `actions` (which may end with
    /// [`EOS`]) under teacher forcing.
    fn score_logprob(&self, ctx: &Self::Context, actions: &[TokenId]) -> Result<Vec<F>, PolicyError> {
        let mut out = Vec::with_capacity(actions.len());
        for (t, &a) in actions.iter().enumerate() {
            let dist = self.next_token_distribution(ctx, &actions[..t])?;
            let p = *dist
                .get(a as usize)
                .ok_or_else(|| PolicyError::GeneratorFailure(format!("token id {a} out of range")))?;
            out.push(p.ln());
        }
        Ok(out)
    }

    fn parameters(&self) -> &[F];

    fn parameters_mut(&mut self) -> &mut [F];

    /// Adds `weight * grad_theta sum_t log pi(actions[t] | actions[..t])`
    /// into `grad`, which has one slot per parameter.
    fn accumulate_logprob_gradient(
        &self,
        ctx: &Self::Context,
        actions: &[TokenId],
        weight: F,
        grad: &mut [F],
    ) -> Result<(), PolicyError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Eos,
    MaxLen,
}

/// A generated summary. `token_logprobs` carries one entry per word plus a
/// final entry for the end marker when the episode ended on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryCandidate<F> {
    pub ids: Vec<TokenId>,
    pub tokens: Vec<String>,
    pub token_logprobs: Vec<F>,
    pub terminated_by: Termination,
}

impl<F: Scalar> SummaryCandidate<F> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn total_logprob(&self) -> F {
        self.token_logprobs.iter().copied().sum()
    }

    /// The action sequence that produced this candidate.
    pub fn actions(&self) -> Vec<TokenId> {
        let mut a = self.ids.clone();
        if self.terminated_by == Termination::Eos {
            a.push(EOS);
        }
        a
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}
