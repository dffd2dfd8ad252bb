//! Source-side features for the learned decider.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::ngram::LanguageModel;

pub const FEATURE_NAMES: [&str; 8] = [
    "log_ppl",
    "token_count",
    "mean_token_len",
    "rare_fraction",
    "digit_fraction",
    "punct_fraction",
    "latin_fraction",
    "char_entropy",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .and_then(|i| self.values.get(i).copied())
    }
}

fn is_latin(c: char) -> bool {
    c.is_ascii_alphabetic() || matches!(c, '\u{00C0}'..='\u{024F}' | '\u{1E00}'..='\u{1EFF}')
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c,
            '\u{00A1}'..='\u{00BF}'
            | '\u{2010}'..='\u{205E}'
            | '\u{3000}'..='\u{303F}'
            | '\u{FE30}'..='\u{FE4F}'
            | '\u{FF01}'..='\u{FF0F}'
            | '\u{FF1A}'..='\u{FF20}'
            | '\u{FF3B}'..='\u{FF40}'
            | '\u{FF5B}'..='\u{FF65}')
}

fn fraction(chars: &[char], pred: impl Fn(char) -> bool) -> f64 {
    if chars.is_empty() {
        return 0.0;
    }
    chars.iter().filter(|&&c| pred(c)).count() as f64 / chars.len() as f64
}

/// Shannon entropy in bits of the non-whitespace character distribution.
fn char_entropy(chars: &[char]) -> f64 {
    if chars.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<char, usize> = BTreeMap::new();
    for &c in chars {
        *counts.entry(c).or_default() += 1;
    }
    let n = chars.len() as f64;
    let h: f64 = counts
        .values()
        .map(|&k| {
            let p = k as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Features in [`FEATURE_NAMES`] order. Character-level fractions are taken
/// over non-whitespace characters.
pub fn extract_features(text: &str, lm: &dyn LanguageModel) -> Result<FeatureVector> {
    let ppl = lm.perplexity(text)?;
    let tokens = lm.tokenize(text);
    let n_tokens = tokens.len().max(1) as f64;
    let token_chars: usize = tokens.iter().map(|t| t.chars().count()).sum();
    let rare = tokens.iter().filter(|t| lm.is_rare(t)).count();
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    Ok(FeatureVector {
        values: vec![
            ppl.ln(),
            tokens.len() as f64,
            token_chars as f64 / n_tokens,
            rare as f64 / n_tokens,
            fraction(&chars, |c| c.is_ascii_digit()),
            fraction(&chars, is_punct),
            fraction(&chars, is_latin),
            char_entropy(&chars),
        ],
    })
}
