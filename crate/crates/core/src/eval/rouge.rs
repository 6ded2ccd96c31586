use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Precision, recall and their harmonic mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore<F> {
    pub precision: F,
    pub recall: F,
    pub f1: F,
}

impl<F: Scalar> RougeScore<F> {
    /// Score from an overlap count and the two totals; any zero denominator
    /// yields zero.
    pub fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                F::zero()
            } else {
                F::of_usize(num) / F::of_usize(den)
            }
        };
        Self::from_pr(ratio(overlap, candidate_total), ratio(overlap, reference_total))
    }

    pub fn from_pr(precision: F, recall: F) -> Self {
        let sum = precision + recall;
        let f1 = if sum > F::zero() {
            F::of(2.0) * precision * recall / sum
        } else {
            F::zero()
        };
        RougeScore { precision, recall, f1 }
    }
}

/// Which component decides the best reference in multi-reference scoring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    F1,
    Recall,
}

fn pick_best<F: Scalar>(scores: impl IntoIterator<Item = RougeScore<F>>, by: Selection) -> RougeScore<F> {
    let key = |s: &RougeScore<F>| match by {
        Selection::F1 => s.f1,
        Selection::Recall => s.recall,
    };
    let mut best: Option<RougeScore<F>> = None;
    for s in scores {
        if best.as_ref().is_none_or(|b| key(&s) > key(b)) {
            best = Some(s);
        }
    }
    best.unwrap_or_default()
}

pub fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// ROUGE-N against one reference with clipped counts.
pub fn rouge_n_single<F: Scalar>(candidate: &[String], reference: &[String], n: usize) -> RougeScore<F> {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    let cand_total = candidate.len().saturating_sub(n - 1).min(candidate.len());
    let ref_total = reference.len().saturating_sub(n - 1).min(reference.len());
    RougeScore::from_counts(overlap, cand_total, ref_total)
}

pub fn rouge_n_by<F: Scalar, R: AsRef<[String]>>(
    candidate: &[String],
    references: &[R],
    n: usize,
    by: Selection,
) -> RougeScore<F> {
    pick_best(references.iter().map(|r| rouge_n_single(candidate, r.as_ref(), n)), by)
}

/// ROUGE-N, taking the reference with the highest F1 (first on ties).
/// No references score zero.
pub fn rouge_n<F: Scalar, R: AsRef<[String]>>(candidate: &[String], references: &[R], n: usize) -> RougeScore<F> {
    rouge_n_by(candidate, references, n, Selection::F1)
}

/// Longest common subsequence length, O(|a|·|b|) time and O(|b|) space.
pub fn lcs_length(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l_single<F: Scalar>(candidate: &[String], reference: &[String]) -> RougeScore<F> {
    RougeScore::from_counts(lcs_length(candidate, reference), candidate.len(), reference.len())
}

pub fn rouge_l_by<F: Scalar, R: AsRef<[String]>>(candidate: &[String], references: &[R], by: Selection) -> RougeScore<F> {
    pick_best(references.iter().map(|r| rouge_l_single(candidate, r.as_ref())), by)
}

pub fn rouge_l<F: Scalar, R: AsRef<[String]>>(candidate: &[String], references: &[R]) -> RougeScore<F> {
    rouge_l_by(candidate, references, Selection::F1)
}
