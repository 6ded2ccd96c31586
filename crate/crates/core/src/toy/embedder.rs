use std::collections::HashMap;
use std::marker::PhantomData;

use crate::corpus::TokenizedText;
use crate::rewards::{RewardError, TextEmbedder};
use crate::rng::splitmix64;
use crate::scalar::Scalar;

/// Sum of pseudo-random word vectors, optionally weighted by inverse
/// document frequency. Each word's vector is a pure function of the word and
/// the seed, so unseen words still embed.
#[derive(Clone, Debug)]
pub struct HashedEmbedder<F> {
    dim: usize,
    seed: u64,
    idf: HashMap<String, f64>,
    default_idf: f64,
    _f: PhantomData<F>,
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl<F: Scalar> HashedEmbedder<F> {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashedEmbedder {
            dim: dim.max(1),
            seed,
            idf: HashMap::new(),
            default_idf: 1.0,
            _f: PhantomData,
        }
    }

    /// Weights words by `ln((N + 1) / (df + 1)) + 1` over the given texts.
    pub fn with_idf<'a>(mut self, texts: impl IntoIterator<Item = &'a TokenizedText>) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n = 0usize;
        for t in texts {
            n += 1;
            let mut seen: Vec<&String> = t.tokens().iter().collect();
            seen.sort();
            seen.dedup();
            for w in seen {
                *df.entry(w.clone()).or_insert(0) += 1;
            }
        }
        let idf = |d: usize| ((n as f64 + 1.0) / (d as f64 + 1.0)).ln() + 1.0;
        self.default_idf = idf(0);
        self.idf = df.into_iter().map(|(w, d)| (w, idf(d))).collect();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn word_vector(&self, word: &str, out: &mut [f64], weight: f64) {
        let mut state = fnv1a(word) ^ self.seed;
        for o in out.iter_mut() {
            let u = (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64;
            *o += weight * (2.0 * u - 1.0);
        }
    }
}

impl<F: Scalar> TextEmbedder<F> for HashedEmbedder<F> {
    fn embed(&self, tokens: &[String]) -> Result<Vec<F>, RewardError> {
        let mut acc = vec![0.0f64; self.dim];
        for w in tokens {
            let weight = if self.idf.is_empty() {
                1.0
            } else {
                self.idf.get(w).copied().unwrap_or(self.default_idf)
            };
            self.word_vector(w, &mut acc, weight);
        }
        Ok(acc.into_iter().map(F::of).collect())
    }
}
