use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{PromptedInput, TokenizedText};
use crate::policy::{ConditionalGenerator, PolicyError, TokenId, Vocabulary, EOS};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyConfig {
    /// Learn a weight for every (previous token, next token) pair.
    pub bigram: bool,
    /// Remaining-length buckets for the end marker span `-R..=R`.
    pub max_remaining: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            bigram: true,
            max_remaining: 16,
        }
    }
}

/// Log-linear policy. The logit of a word sums a unigram weight, an
/// optional bigram weight on the previous token, and three shared weights
/// for "an unused copy is in the input", "already emitted" and "follows the
/// previous token somewhere in the input". The end marker additionally gets
/// a weight indexed by `target - emitted` (clamped).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyGenerator<F> {
    vocab: Vocabulary,
    config: ToyConfig,
    params: Vec<F>,
}

/// Encoded input for one episode.
#[derive(Clone, Debug)]
pub struct ToyContext {
    target: usize,
    body_counts: BTreeMap<TokenId, u32>,
    /// Successor sets keyed by bigram row (0 = start, id + 1 otherwise).
    successors: HashMap<usize, Vec<TokenId>>,
}

const N_SHARED: usize = 3;

struct Layout {
    v: usize,
    bigram: usize,
    shared: usize,
    eos: usize,
    total: usize,
}

struct StepFeatures<'a> {
    row: usize,
    copy: Vec<TokenId>,
    repeat: Vec<TokenId>,
    adjacent: &'a [TokenId],
    bucket: usize,
}

impl<F: Scalar> ToyGenerator<F> {
    /// All weights start at zero, i.e. a uniform policy.
    pub fn new(vocab: Vocabulary, config: ToyConfig) -> Self {
        let total = Self::layout_for(vocab.len(), &config).total;
        ToyGenerator {
            vocab,
            config,
            params: vec![F::zero(); total],
        }
    }

    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a TokenizedText>, config: ToyConfig) -> Self {
        let vocab = Vocabulary::new(texts.into_iter().flat_map(|t| t.tokens().iter().cloned()));
        Self::new(vocab, config)
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn parameters_len(&self) -> usize {
        self.params.len()
    }

    fn layout_for(v: usize, config: &ToyConfig) -> Layout {
        let bigram = v;
        let bigram_len = if config.bigram { (v + 1) * v } else { 0 };
        let shared = bigram + bigram_len;
        let eos = shared + N_SHARED;
        let total = eos + 2 * config.max_remaining + 1;
        Layout { v, bigram, shared, eos, total }
    }

    fn layout(&self) -> Layout {
        Self::layout_for(self.vocab.len(), &self.config)
    }

    fn features<'c>(&self, ctx: &'c ToyContext, prefix: &[TokenId]) -> StepFeatures<'c> {
        let row = prefix.last().map_or(0, |&p| p as usize + 1);
        let mut used: Vec<(TokenId, u32)> = Vec::with_capacity(prefix.len());
        for &t in prefix {
            match used.iter_mut().find(|(w, _)| *w == t) {
                Some((_, c)) => *c += 1,
                None => used.push((t, 1)),
            }
        }
        let copy = ctx
            .body_counts
            .iter()
            .filter(|(w, &c)| used.iter().find(|(u, _)| u == *w).map_or(0, |(_, k)| *k) < c)
            .map(|(&w, _)| w)
            .collect();
        let repeat = used.iter().map(|(w, _)| *w).collect();
        let adjacent = ctx.successors.get(&row).map_or(&[][..], Vec::as_slice);
        let r = self.config.max_remaining as i64;
        let remaining = (ctx.target as i64 - prefix.len() as i64).clamp(-r, r);
        StepFeatures {
            row,
            copy,
            repeat,
            adjacent,
            bucket: (remaining + r) as usize,
        }
    }

    fn distribution(&self, f: &StepFeatures<'_>) -> Vec<F> {
        let l = self.layout();
        let mut z: Vec<F> = self.params[..l.v].to_vec();
        if self.config.bigram {
            let start = l.bigram + f.row * l.v;
            for (zi, &b) in z.iter_mut().zip(&self.params[start..start + l.v]) {
                *zi += b;
            }
        }
        let (copy, rep, adj) = (
            self.params[l.shared],
            self.params[l.shared + 1],
            self.params[l.shared + 2],
        );
        for &w in &f.copy {
            z[w as usize] += copy;
        }
        for &w in &f.repeat {
            z[w as usize] += rep;
        }
        for &w in f.adjacent {
            z[w as usize] += adj;
        }
        z[EOS as usize] += self.params[l.eos + f.bucket];
        let m = z.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for zi in z.iter_mut() {
            *zi = (*zi - m).exp();
            sum += *zi;
        }
        for zi in z.iter_mut() {
            *zi /= sum;
        }
        z
    }

    /// Serialized weights and vocabulary.
    pub fn to_blob(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Blob<'a> {
            vocab: &'a [String],
            config: &'a ToyConfig,
            params: Vec<f64>,
        }
        let blob = Blob {
            vocab: &self.vocab.words()[1..],
            config: &self.config,
            params: self.params.iter().map(|p| p.as_f64()).collect(),
        };
        serde_json::to_vec(&blob).expect("generator serializes")
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self, PolicyError> {
        #[derive(Deserialize)]
        struct Blob {
            vocab: Vec<String>,
            config: ToyConfig,
            params: Vec<f64>,
        }
        let blob: Blob = serde_json::from_slice(bytes).map_err(|e| PolicyError::GeneratorFailure(e.to_string()))?;
        let mut g = Self::new(Vocabulary::new(blob.vocab), blob.config);
        if g.params.len() != blob.params.len() {
            return Err(PolicyError::GeneratorFailure(format!(
                "blob has {} weights, layout needs {}",
                blob.params.len(),
                g.params.len()
            )));
        }
        g.params = blob.params.into_iter().map(F::of).collect();
        Ok(g)
    }
}

impl<F: Scalar> ConditionalGenerator<F> for ToyGenerator<F> {
    type Context = ToyContext;

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Words outside the vocabulary are ignored.
    fn prepare(&self, input: &PromptedInput) -> Result<ToyContext, PolicyError> {
        let body: Vec<TokenId> = input
            .body()
            .tokens()
            .iter()
            .filter_map(|w| self.vocab.id(w))
            .filter(|&id| id != EOS)
            .collect();
        let mut body_counts = BTreeMap::new();
        for &w in &body {
            *body_counts.entry(w).or_insert(0) += 1;
        }
        let mut successors: HashMap<usize, Vec<TokenId>> = HashMap::new();
        let rows = std::iter::once(0).chain(body.iter().map(|&w| w as usize + 1));
        for (row, &next) in rows.zip(&body) {
            let s = successors.entry(row).or_default();
            if !s.contains(&next) {
                s.push(next);
            }
        }
        Ok(ToyContext {
            target: input.target_length(),
            body_counts,
            successors,
        })
    }

    fn next_token_distribution(&self, ctx: &ToyContext, prefix: &[TokenId]) -> Result<Vec<F>, PolicyError> {
        Ok(self.distribution(&self.features(ctx, prefix)))
    }

    fn parameters(&self) -> &[F] {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    fn accumulate_logprob_gradient(
        &self,
        ctx: &ToyContext,
        actions: &[TokenId],
        weight: F,
        grad: &mut [F],
    ) -> Result<(), PolicyError> {
        let l = self.layout();
        if grad.len() != l.total {
            return Err(PolicyError::GeneratorFailure("gradient buffer has the wrong size".into()));
        }
        for (t, &a) in actions.iter().enumerate() {
            if a as usize >= l.v {
                return Err(PolicyError::GeneratorFailure(format!("token id {a} out of range")));
            }
            let f = self.features(ctx, &actions[..t]);
            let p = self.distribution(&f);
            // d log p(a) / d z_w = [w == a] - p_w
            let mut dz: Vec<F> = p.iter().map(|&pw| -weight * pw).collect();
            dz[a as usize] += weight;
            for (g, &d) in grad[..l.v].iter_mut().zip(&dz) {
                *g += d;
            }
            if self.config.bigram {
                let start = l.bigram + f.row * l.v;
                for (g, &d) in grad[start..start + l.v].iter_mut().zip(&dz) {
                    *g += d;
                }
            }
            for (k, set) in [&f.copy[..], &f.repeat[..], f.adjacent].into_iter().enumerate() {
                let s: F = set.iter().map(|&w| dz[w as usize]).sum();
                grad[l.shared + k] += s;
            }
            grad[l.eos + f.bucket] += dz[EOS as usize];
        }
        Ok(())
    }
}
