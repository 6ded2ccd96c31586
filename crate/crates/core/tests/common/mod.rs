#![allow(dead_code)]

use std::collections::HashMap;

use rlsum::corpus::PromptedInput;
use rlsum::policy::{ConditionalGenerator, PolicyError, TokenId, Vocabulary};
use rlsum::rewards::{LanguageModel, RewardError, TextEmbedder};
use rlsum::rng::Rng;

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// Embeds a text by table lookup on its space-joined form.
#[derive(Default)]
pub struct TableEmbedder {
    pub table: HashMap<String, Vec<f64>>,
}

impl TableEmbedder {
    pub fn insert(&mut self, text: &[String], v: Vec<f64>) {
        self.table.insert(text.join(" "), v);
    }
}

impl TextEmbedder<f64> for TableEmbedder {
    fn embed(&self, tokens: &[String]) -> Result<Vec<f64>, RewardError> {
        self.table
            .get(&tokens.join(" "))
            .cloned()
            .ok_or_else(|| RewardError::EmbedderFailure(format!("no vector for {:?}", tokens.join(" "))))
    }
}

/// Scores every token by a per-word table.
#[derive(Default)]
pub struct TableLm {
    pub table: HashMap<String, f64>,
}

impl LanguageModel<f64> for TableLm {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>, RewardError> {
        tokens
            .iter()
            .map(|w| {
                self.table
                    .get(w)
                    .copied()
                    .ok_or_else(|| RewardError::LanguageModelFailure(format!("unknown word {w:?}")))
            })
            .collect()
    }
}

/// Generator whose next-token distribution is a fixed pseudo-random
/// function of the prefix. No trainable parameters.
pub struct HashedGenerator {
    pub vocab: Vocabulary,
    pub seed: u64,
    /// Larger values make distributions peakier.
    pub temperature: f64,
}

impl HashedGenerator {
    pub fn new(n_words: usize, seed: u64, temperature: f64) -> Self {
        HashedGenerator {
            vocab: Vocabulary::new((1..n_words).map(|i| format!("w{i}"))),
            seed,
            temperature,
        }
    }
}

impl ConditionalGenerator<f64> for HashedGenerator {
    type Context = u64;

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn prepare(&self, input: &PromptedInput) -> Result<u64, PolicyError> {
        let mut h = self.seed;
        for b in input.serialized().bytes() {
            h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
        }
        Ok(h)
    }

    fn next_token_distribution(&self, ctx: &u64, prefix: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        let mut key = *ctx;
        for &t in prefix {
            key = key.wrapping_mul(31).wrapping_add(t as u64 + 1);
        }
        let mut rng = Rng::derive(self.seed, key);
        let z: Vec<f64> = (0..self.vocab.len())
            .map(|_| (rng.unit_f64() * 2.0 - 1.0) * self.temperature)
            .collect();
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        Ok(e.into_iter().map(|x| x / s).collect())
    }

    fn parameters(&self) -> &[f64] {
        &[]
    }

    fn parameters_mut(&mut self) -> &mut [f64] {
        &mut []
    }

    fn accumulate_logprob_gradient(
        &self,
        _ctx: &u64,
        _actions: &[TokenId],
        _weight: f64,
        _grad: &mut [f64],
    ) -> Result<(), PolicyError> {
        Ok(())
    }
}

pub fn random_words(rng: &mut Rng, vocab: &[&str], min: usize, max: usize) -> Vec<String> {
    let n = min + rng.below(max - min + 1);
    (0..n).map(|_| vocab[rng.below(vocab.len())].to_string()).collect()
}

pub fn random_vector(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.unit_f64() * 2.0 - 1.0).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        d
    } else {
        d / m
    }
}
