use serde::{Deserialize, Serialize};

use super::{PolicyError, TokenId, EOS};
use crate::corpus::PromptedInput;

/// Decoding state: the prompted input, the words emitted so far and whether
/// the episode has ended. `step` counts emitted words, so `step ==
/// prefix.len()` always holds; ending on the end marker does not add a word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub input: PromptedInput,
    pub prefix: Vec<TokenId>,
    pub step: usize,
    pub max_len: usize,
    pub done: bool,
}

impl EpisodeState {
    pub fn new(input: PromptedInput, max_len: usize) -> Self {
        EpisodeState {
            input,
            prefix: Vec::new(),
            step: 0,
            max_len: max_len.max(1),
            done: false,
        }
    }

    /// Transition on one action.
    pub fn step(&self, action: TokenId) -> Result<EpisodeState, PolicyError> {
        if self.done {
            return Err(PolicyError::EpisodeFinished);
        }
        let mut next = self.clone();
        if action == EOS {
            next.done = true;
            return Ok(next);
        }
        next.prefix.push(action);
        next.step += 1;
        next.done = next.step >= next.max_len;
        Ok(next)
    }
}
