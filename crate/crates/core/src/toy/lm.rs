use std::collections::HashMap;
use std::marker::PhantomData;

use crate::corpus::TokenizedText;
use crate::rewards::{LanguageModel, RewardError};
use crate::scalar::Scalar;

/// Every token has probability `1 / vocab_size`.
#[derive(Clone, Debug)]
pub struct UniformLm<F> {
    vocab_size: usize,
    _f: PhantomData<F>,
}

impl<F: Scalar> UniformLm<F> {
    pub fn new(vocab_size: usize) -> Self {
        UniformLm {
            vocab_size: vocab_size.max(1),
            _f: PhantomData,
        }
    }
}

impl<F: Scalar> LanguageModel<F> for UniformLm<F> {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<F>, RewardError> {
        Ok(vec![-F::of_usize(self.vocab_size).ln(); tokens.len()])
    }
}

/// Add-k smoothed bigram model with a sentence-start context. Unseen words
/// share a single extra vocabulary slot.
#[derive(Clone, Debug)]
pub struct BigramLm<F> {
    unigram_index: HashMap<String, usize>,
    context_totals: Vec<f64>,
    pair_counts: HashMap<(usize, usize), f64>,
    k: f64,
    _f: PhantomData<F>,
}

const START: usize = 0;

impl<F: Scalar> BigramLm<F> {
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a TokenizedText>, k: f64) -> Self {
        let mut unigram_index: HashMap<String, usize> = HashMap::new();
        let mut pair_counts: HashMap<(usize, usize), f64> = HashMap::new();
        let mut context_totals = vec![0.0];
        for text in texts {
            let mut prev = START;
            for w in text.tokens() {
                let next_id = unigram_index.len() + 1;
                let id = *unigram_index.entry(w.clone()).or_insert(next_id);
                if id == context_totals.len() {
                    context_totals.push(0.0);
                }
                *pair_counts.entry((prev, id)).or_insert(0.0) += 1.0;
                context_totals[prev] += 1.0;
                prev = id;
            }
        }
        BigramLm {
            unigram_index,
            context_totals,
            pair_counts,
            k,
            _f: PhantomData,
        }
    }

    fn id(&self, w: &str) -> usize {
        // unseen words map to the slot past the last known id
        self.unigram_index
            .get(w)
            .copied()
            .unwrap_or(self.context_totals.len())
    }

    /// Known words plus the shared unseen slot.
    pub fn vocab_size(&self) -> usize {
        self.unigram_index.len() + 1
    }
}

impl<F: Scalar> LanguageModel<F> for BigramLm<F> {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<F>, RewardError> {
        let v = self.vocab_size() as f64;
        let mut prev = START;
        let mut out = Vec::with_capacity(tokens.len());
        for w in tokens {
            let id = self.id(w);
            let c = self.pair_counts.get(&(prev, id)).copied().unwrap_or(0.0);
            let total = self.context_totals.get(prev).copied().unwrap_or(0.0);
            let p = (c + self.k) / (total + self.k * v);
            out.push(F::of(p.ln()));
            prev = id;
        }
        Ok(out)
    }
}
