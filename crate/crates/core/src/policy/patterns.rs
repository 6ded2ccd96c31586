use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{SummaryCandidate, Termination};
use crate::scalar::Scalar;

const ENDINGS: [&str; 18] = [
    "in", "at", "to", "on", "the", "'s", "of", "a", "for", "with", "is", "into", "by", "his", "her",
    "when", "and", "but",
];

const DAYS: [&str; 7] = [
    "sunday", "monday", "tuesday", "wednesday", "thursday", "friday", "saturday",
];

/// Words a selected summary may not end with, and words removed wherever
/// they occur.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternConfig {
    pub banned_endings: BTreeSet<String>,
    pub banned_anywhere: BTreeSet<String>,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            banned_endings: ENDINGS.iter().map(|s| s.to_string()).collect(),
            banned_anywhere: DAYS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl PatternConfig {
    pub fn none() -> Self {
        PatternConfig {
            banned_endings: BTreeSet::new(),
            banned_anywhere: BTreeSet::new(),
        }
    }
}

/// Drops every `banned_anywhere` word, then strips trailing
/// `banned_endings` words until none is left at the end. Log-probabilities
/// follow their tokens; the end-marker entry stays last.
pub fn filter_patterns<F: Scalar>(candidate: &SummaryCandidate<F>, patterns: &PatternConfig) -> SummaryCandidate<F> {
    let n = candidate.tokens.len();
    let eos_lp = (candidate.terminated_by == Termination::Eos)
        .then(|| candidate.token_logprobs.get(n).copied())
        .flatten();
    let mut ids = Vec::with_capacity(n);
    let mut tokens = Vec::with_capacity(n);
    let mut lps = Vec::with_capacity(n + 1);
    for i in 0..n {
        if patterns.banned_anywhere.contains(&candidate.tokens[i]) {
            continue;
        }
        ids.push(candidate.ids[i]);
        tokens.push(candidate.tokens[i].clone());
        lps.push(candidate.token_logprobs[i]);
    }
    while tokens.last().is_some_and(|t| patterns.banned_endings.contains(t)) {
        tokens.pop();
        ids.pop();
        lps.pop();
    }
    lps.extend(eos_lp);
    SummaryCandidate {
        ids,
        tokens,
        token_logprobs: lps,
        terminated_by: candidate.terminated_by,
    }
}
