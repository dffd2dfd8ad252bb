//! Character n-gram F-score (chrF).
//!
//! Whitespace is removed before extracting n-grams of orders 1..=6. Precision
//! and recall are averaged over the orders at which both strings have at
//! least one n-gram, then combined as F-beta with beta = 2 (recall weighted
//! twice as much as precision). Result is on a 0-100 scale.

use std::collections::HashMap;

pub const CHRF_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

fn ngram_counts(chars: &[char], n: usize) -> HashMap<&[char], u32> {
    let mut counts = HashMap::new();
    if chars.len() >= n {
        for gram in chars.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// chrF with explicit order and beta.
pub fn chrf_with(hypothesis: &str, reference: &str, max_order: usize, beta: f64) -> f64 {
    let hyp: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    let refr: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();

    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut effective = 0usize;
    for n in 1..=max_order {
        let hyp_counts = ngram_counts(&hyp, n);
        let ref_counts = ngram_counts(&refr, n);
        let hyp_total: u32 = hyp_counts.values().sum();
        let ref_total: u32 = ref_counts.values().sum();
        if hyp_total == 0 || ref_total == 0 {
            continue;
        }
        let matched: u32 = hyp_counts
            .iter()
            .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        precision += f64::from(matched) / f64::from(hyp_total);
        recall += f64::from(matched) / f64::from(ref_total);
        effective += 1;
    }
    if effective == 0 {
        return 0.0;
    }
    let p = precision / effective as f64;
    let r = recall / effective as f64;
    let b2 = beta * beta;
    let denom = b2 * p + r;
    if denom <= 0.0 {
        return 0.0;
    }
    100.0 * (1.0 + b2) * p * r / denom
}

/// chrF2 over character 1..6-grams.
pub fn chrf(hypothesis: &str, reference: &str) -> f64 {
    chrf_with(hypothesis, reference, CHRF_ORDER, CHRF_BETA)
}
