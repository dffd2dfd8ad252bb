//! Smoothed n-gram language model over source-side text.
//!
//! Sentences are padded with `order - 1` BOS tokens and terminated with EOS;
//! EOS is predicted and counted in the perplexity denominator. Tokens seen
//! fewer than `min_count` times in training are mapped to UNK, so the
//! predicted vocabulary is every kept token plus UNK and EOS.
//!
//! Two smoothing schemes are supported: add-k over the full-order context,
//! and interpolated Kneser-Ney with one absolute discount per order,
//! bottoming out in the uniform distribution over the predicted vocabulary.

mod io;
mod tokenizer;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_lm, save_lm, FORMAT_VERSION, MAGIC};
pub use tokenizer::TokenizerSpec;

pub type TokenId = u32;

pub const UNK: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
const RESERVED: usize = 3;

pub const MAX_ORDER: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Smoothing {
    AddK { k: f64 },
    InterpolatedKneserNey,
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smoothing::AddK { k } => write!(f, "add-k(k={k})"),
            Smoothing::InterpolatedKneserNey => f.write_str("interpolated-kn"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub order: usize,
    pub tokenizer: TokenizerSpec,
    pub smoothing: Smoothing,
    pub min_count: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            order: 3,
            tokenizer: TokenizerSpec::Whitespace,
            smoothing: Smoothing::InterpolatedKneserNey,
            min_count: 2,
        }
    }
}

/// Sentence perplexity together with the number of predicted tokens (EOS included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerplexityScore {
    pub value: f64,
    pub token_count: usize,
}

impl PerplexityScore {
    pub fn ln(&self) -> f64 {
        self.value.ln()
    }
}

/// Anything that can score source sentences the way the PPL-based policies need.
pub trait LanguageModel: Send + Sync {
    fn perplexity(&self, sentence: &str) -> Result<PerplexityScore>;

    fn tokenize(&self, sentence: &str) -> Vec<String>;

    /// True if the token falls below the model's vocabulary cut-off.
    fn is_rare(&self, token: &str) -> bool;
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ContextStats {
    total: u64,
    distinct: u64,
}

/// Counts for one order k: each key is a k-gram (context of k-1 ids + predicted id).
#[derive(Debug, Clone, Default, PartialEq)]
struct Level {
    grams: HashMap<Vec<TokenId>, u32>,
    contexts: HashMap<Vec<TokenId>, ContextStats>,
    discount: f64,
}

impl Level {
    fn from_grams(grams: HashMap<Vec<TokenId>, u32>, discount: f64) -> Self {
        let mut contexts: HashMap<Vec<TokenId>, ContextStats> = HashMap::new();
        for (gram, &count) in &grams {
            let stats = contexts.entry(gram[..gram.len() - 1].to_vec()).or_default();
            stats.total += u64::from(count);
            stats.distinct += 1;
        }
        Self {
            grams,
            contexts,
            discount,
        }
    }
}

/// A trained, immutable n-gram model.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramLanguageModel {
    order: usize,
    tokenizer: TokenizerSpec,
    smoothing: Smoothing,
    min_count: u32,
    vocab: Vec<String>,
    index: HashMap<String, TokenId>,
    /// `levels[k - 1]` holds order-k counts. Add-k models only populate the top level.
    levels: Vec<Level>,
}

/// Absolute discount from count-of-counts, kept strictly inside (0, 1) so every
/// context reserves some mass for lower orders.
fn kn_discount(grams: &HashMap<Vec<TokenId>, u32>) -> f64 {
    let n1 = grams.values().filter(|&&c| c == 1).count() as f64;
    let n2 = grams.values().filter(|&&c| c == 2).count() as f64;
    let d = if n1 > 0.0 { n1 / (n1 + 2.0 * n2) } else { 0.5 };
    d.clamp(0.05, 0.95)
}

pub fn train_lm<S: AsRef<str>>(corpus: &[S], config: &TrainConfig) -> Result<NgramLanguageModel> {
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if !(1..=MAX_ORDER).contains(&config.order) {
        return Err(Error::invalid(format!(
            "order {} outside 1..={MAX_ORDER}",
            config.order
        )));
    }
    if config.min_count < 1 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    if let Smoothing::AddK { k } = config.smoothing {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::invalid(format!("add-k constant {k} must be positive")));
        }
    }

    let tokenized: Vec<Vec<String>> = corpus
        .iter()
        .map(|s| config.tokenizer.tokenize(s.as_ref()))
        .collect();
    let mut freq: HashMap<&str, u32> = HashMap::new();
    for tok in tokenized.iter().flatten() {
        *freq.entry(tok.as_str()).or_insert(0) += 1;
    }
    let mut kept: Vec<&str> = freq
        .iter()
        .filter(|(t, &c)| c >= config.min_count && !is_reserved(t))
        .map(|(&t, _)| t)
        .collect();
    kept.sort_unstable();

    let mut vocab: Vec<String> = vec![UNK_TOKEN.into(), BOS_TOKEN.into(), EOS_TOKEN.into()];
    vocab.extend(kept.into_iter().map(str::to_owned));
    let index = build_index(&vocab);

    let order = config.order;
    let mut top: HashMap<Vec<TokenId>, u32> = HashMap::new();
    let mut ids = Vec::new();
    for sentence in &tokenized {
        pad_ids(&index, order, sentence.iter().map(String::as_str), &mut ids);
        for end in order - 1..ids.len() {
            *top.entry(ids[end + 1 - order..=end].to_vec()).or_insert(0) += 1;
        }
    }

    let levels = match config.smoothing {
        Smoothing::AddK { .. } => {
            let mut levels = vec![Level::default(); order];
            levels[order - 1] = Level::from_grams(top, 0.0);
            levels
        }
        Smoothing::InterpolatedKneserNey => {
            let mut raw: Vec<HashMap<Vec<TokenId>, u32>> = vec![HashMap::new(); order];
            raw[order - 1] = top;
            for k in (1..order).rev() {
                let mut continuation: HashMap<Vec<TokenId>, u32> = HashMap::new();
                for gram in raw[k].keys() {
                    *continuation.entry(gram[1..].to_vec()).or_insert(0) += 1;
                }
                raw[k - 1] = continuation;
            }
            raw.into_iter()
                .map(|grams| {
                    let d = kn_discount(&grams);
                    Level::from_grams(grams, d)
                })
                .collect()
        }
    };

    Ok(NgramLanguageModel {
        order,
        tokenizer: config.tokenizer,
        smoothing: config.smoothing,
        min_count: config.min_count,
        vocab,
        index,
        levels,
    })
}

fn is_reserved(token: &str) -> bool {
    matches!(token, UNK_TOKEN | BOS_TOKEN | EOS_TOKEN)
}

fn build_index(vocab: &[String]) -> HashMap<String, TokenId> {
    vocab
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as TokenId))
        .collect()
}

/// Writes `BOS^(order-1) tokens EOS` as ids into `out`.
fn pad_ids<'a>(
    index: &HashMap<String, TokenId>,
    order: usize,
    tokens: impl Iterator<Item = &'a str>,
    out: &mut Vec<TokenId>,
) {
    out.clear();
    out.extend(std::iter::repeat_n(BOS, order - 1));
    out.extend(tokens.map(|t| index.get(t).copied().unwrap_or(UNK)));
    out.push(EOS);
}

impl NgramLanguageModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn tokenizer(&self) -> TokenizerSpec {
        self.tokenizer
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn min_count(&self) -> u32 {
        self.min_count
    }

    /// Full vocabulary including the three reserved tokens.
    pub fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    /// Number of outcomes the model predicts over: kept tokens, UNK and EOS.
    pub fn predicted_vocab_size(&self) -> usize {
        self.vocab.len() - 1
    }

    /// Tokens the model assigns probability to (everything except BOS).
    pub fn predicted_tokens(&self) -> impl Iterator<Item = &str> {
        self.vocab
            .iter()
            .enumerate()
            .filter(|&(i, _)| i as TokenId != BOS)
            .map(|(_, t)| t.as_str())
    }

    pub fn token_id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    /// `ngram` is the context (oldest first) followed by the predicted id.
    fn prob_ids(&self, ngram: &[TokenId]) -> f64 {
        let uniform = 1.0 / self.predicted_vocab_size() as f64;
        let n = ngram.len();
        match self.smoothing {
            Smoothing::AddK { k } => {
                let level = &self.levels[self.order - 1];
                match level.contexts.get(&ngram[..n - 1]) {
                    Some(stats) => {
                        let c = level.grams.get(ngram).copied().unwrap_or(0);
                        (f64::from(c) + k)
                            / (stats.total as f64 + k * self.predicted_vocab_size() as f64)
                    }
                    None => uniform,
                }
            }
            Smoothing::InterpolatedKneserNey => {
                let mut p = uniform;
                for k in 1..=self.order {
                    let level = &self.levels[k - 1];
                    let gram = &ngram[n - k..];
                    if let Some(stats) = level.contexts.get(&gram[..k - 1]) {
                        let c = f64::from(level.grams.get(gram).copied().unwrap_or(0));
                        let d = level.discount;
                        p = ((c - d).max(0.0) + d * stats.distinct as f64 * p)
                            / stats.total as f64;
                    }
                }
                p
            }
        }
    }

    /// Conditional probability of `token` after `context` (oldest first). Missing
    /// history is padded with BOS; unknown tokens are treated as UNK.
    pub fn probability(&self, context: &[&str], token: &str) -> f64 {
        let mut ngram = vec![BOS; self.order];
        let take = context.len().min(self.order - 1);
        for (slot, tok) in ngram[self.order - 1 - take..self.order - 1]
            .iter_mut()
            .zip(&context[context.len() - take..])
        {
            *slot = self.token_id(tok);
        }
        ngram[self.order - 1] = self.token_id(token);
        self.prob_ids(&ngram)
    }

    /// Sum of natural-log probabilities and number of predicted tokens.
    pub fn log_prob(&self, sentence: &str) -> (f64, usize) {
        let tokens = self.tokenizer.tokenize(sentence);
        let mut ids = Vec::with_capacity(tokens.len() + self.order);
        pad_ids(
            &self.index,
            self.order,
            tokens.iter().map(String::as_str),
            &mut ids,
        );
        let mut total = 0.0;
        for end in self.order - 1..ids.len() {
            total += self.prob_ids(&ids[end + 1 - self.order..=end]).ln();
        }
        (total, tokens.len() + 1)
    }

    pub fn perplexity(&self, sentence: &str) -> Result<PerplexityScore> {
        if self.tokenizer.tokenize(sentence).is_empty() {
            return Err(Error::invalid("sentence has no tokens"));
        }
        let (log_prob, token_count) = self.log_prob(sentence);
        let value = (-log_prob / token_count as f64).exp();
        if !value.is_finite() {
            return Err(Error::invalid(format!("perplexity overflowed ({value})")));
        }
        Ok(PerplexityScore { value, token_count })
    }

    /// Returns an equivalent model whose non-reserved ids are relabelled by
    /// `new_id_of[old_id]`. Reserved ids must map to themselves.
    pub fn renumbered(&self, new_id_of: &[TokenId]) -> Result<Self> {
        if new_id_of.len() != self.vocab.len() {
            return Err(Error::invalid("permutation length differs from vocabulary size"));
        }
        let mut seen = vec![false; new_id_of.len()];
        for (old, &new) in new_id_of.iter().enumerate() {
            let slot = seen
                .get_mut(new as usize)
                .ok_or_else(|| Error::invalid("permutation id out of range"))?;
            if *slot || (old < RESERVED && new as usize != old) {
                return Err(Error::invalid("not a permutation fixing reserved ids"));
            }
            *slot = true;
        }
        let mut vocab = vec![String::new(); self.vocab.len()];
        for (old, tok) in self.vocab.iter().enumerate() {
            vocab[new_id_of[old] as usize] = tok.clone();
        }
        let remap = |gram: &Vec<TokenId>| -> Vec<TokenId> {
            gram.iter().map(|&id| new_id_of[id as usize]).collect()
        };
        let levels = self
            .levels
            .iter()
            .map(|level| {
                let grams = level.grams.iter().map(|(g, &c)| (remap(g), c)).collect();
                Level::from_grams(grams, level.discount)
            })
            .collect();
        Ok(Self {
            index: build_index(&vocab),
            vocab,
            levels,
            ..self.clone()
        })
    }
}

impl LanguageModel for NgramLanguageModel {
    fn perplexity(&self, sentence: &str) -> Result<PerplexityScore> {
        NgramLanguageModel::perplexity(self, sentence)
    }

    fn tokenize(&self, sentence: &str) -> Vec<String> {
        self.tokenizer.tokenize(sentence)
    }

    fn is_rare(&self, token: &str) -> bool {
        self.token_id(token) == UNK
    }
}
