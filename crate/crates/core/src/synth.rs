//! Seeded synthetic corpora and evaluation records.
//!
//! Sources are pseudo-German word sequences. Hard sentences are longer and
//! draw on a large rare vocabulary, so they have higher perplexity. Each
//! "translation" maps source words through a fixed vowel rotation. NMT and
//! LLM outputs corrupt a share of the words, with the NMT corrupting far
//! more on hard sentences. Scores are computed with the builtin scorers,
//! so pre-scored and re-scored replays agree.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::scoring::{chrf::chrf, qe::qe_score};
use crate::types::{EvalRecord, LanguagePair, QualityScore, Segment};

pub const DOMAINS: [&str; 4] = ["news", "flores", "literary", "tech"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// Exact share of hard records, rounded to the nearest count.
    pub hard_fraction: f64,
    /// Attach q_nmt, q_llm and qe_nmt.
    pub scored: bool,
}

impl SynthConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            hard_fraction: 0.05,
            scored: true,
        }
    }
}

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "w", "sch", "st"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 6] = ["", "n", "r", "t", "ch", "ng"];

fn syllable(i: usize) -> String {
    let o = ONSETS[i % ONSETS.len()];
    let v = VOWELS[(i / ONSETS.len()) % VOWELS.len()];
    let c = CODAS[(i / (ONSETS.len() * VOWELS.len())) % CODAS.len()];
    format!("{o}{v}{c}")
}

/// The i-th word of a vocabulary; `syllables` syllables long.
fn word(i: usize, syllables: usize) -> String {
    let base = ONSETS.len() * VOWELS.len() * CODAS.len();
    let mut rest = i;
    let mut out = String::new();
    for _ in 0..syllables {
        out.push_str(&syllable(rest % base));
        rest = rest / base + 7;
    }
    out
}

struct Vocab {
    common: Vec<String>,
    rare: Vec<String>,
    zipf: Zipf<f64>,
}

impl Vocab {
    fn new() -> Self {
        let common: Vec<String> = (0..400).map(|i| word(i, 1 + i % 2)).collect();
        let rare: Vec<String> = (0..4000).map(|i| word(i * 13 + 5, 3)).collect();
        let zipf = Zipf::new(common.len() as f64, 1.1).expect("valid zipf parameters");
        Self { common, rare, zipf }
    }

    fn common_word(&self, rng: &mut ChaCha8Rng) -> &str {
        let rank = self.zipf.sample(rng) as usize;
        &self.common[rank.clamp(1, self.common.len()) - 1]
    }

    fn sentence(&self, rng: &mut ChaCha8Rng, hard: bool) -> String {
        let (len, rare_share) = if hard {
            (rng.random_range(12..30), 0.35)
        } else {
            (rng.random_range(4..14), 0.02)
        };
        let words: Vec<&str> = (0..len)
            .map(|_| {
                if rng.random::<f64>() < rare_share {
                    self.rare[rng.random_range(0..self.rare.len())].as_str()
                } else {
                    self.common_word(rng)
                }
            })
            .collect();
        words.join(" ")
    }
}

fn rotate_vowels(w: &str) -> String {
    w.chars()
        .map(|c| match c {
            'a' => 'e',
            'e' => 'i',
            'i' => 'o',
            'o' => 'u',
            'u' => 'a',
            other => other,
        })
        .collect()
}

/// Word-by-word output with substitution rate `sub` and deletion rate `del`.
fn corrupt(rng: &mut ChaCha8Rng, vocab: &Vocab, reference: &[String], sub: f64, del: f64) -> String {
    let mut out: Vec<String> = Vec::with_capacity(reference.len());
    for w in reference {
        let r = rng.random::<f64>();
        if r < del {
            continue;
        } else if r < del + sub {
            out.push(rotate_vowels(vocab.common_word(rng)));
        } else {
            out.push(w.clone());
        }
    }
    if out.is_empty() {
        out.push(reference[0].clone());
    }
    out.join(" ")
}

fn hard_flags(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let hard = ((n as f64 * fraction).round() as usize).min(n);
    let mut flags = vec![false; n];
    for i in sample(rng, n, hard) {
        flags[i] = true;
    }
    flags
}

/// Monolingual source sentences, one per element.
pub fn synth_corpus(n: usize, seed: u64, hard_fraction: f64) -> Vec<String> {
    let vocab = Vocab::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flags = hard_flags(n, hard_fraction, &mut rng);
    flags.iter().map(|&h| vocab.sentence(&mut rng, h)).collect()
}

pub fn synth_pair() -> LanguagePair {
    LanguagePair::new("de", "en").expect("valid pair")
}

/// Records with references, both hypotheses and (optionally) scores, and
/// `difficulty` and `domain` annotations.
pub fn synth_records(cfg: &SynthConfig) -> Vec<EvalRecord> {
    let vocab = Vocab::new();
    let pair = synth_pair();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let flags = hard_flags(cfg.n, cfg.hard_fraction, &mut rng);
    let width = cfg.n.max(1).to_string().len();
    flags
        .iter()
        .enumerate()
        .map(|(i, &hard)| {
            let src = vocab.sentence(&mut rng, hard);
            let reference: Vec<String> = src.split(' ').map(rotate_vowels).collect();
            let quality = rng.random::<f64>();
            let (nmt_sub, nmt_del, llm_sub, llm_del) = if hard {
                (0.15 + 0.35 * quality, 0.05 + 0.10 * quality, 0.10 + 0.15 * quality, 0.02)
            } else {
                (0.03 + 0.12 * quality, 0.01, 0.03 + 0.12 * quality, 0.01)
            };
            let nmt = corrupt(&mut rng, &vocab, &reference, nmt_sub, nmt_del);
            let llm = corrupt(&mut rng, &vocab, &reference, llm_sub, llm_del);
            let domain = DOMAINS[rng.random_range(0..DOMAINS.len())];
            let segment = Segment::new(format!("syn-{i:0width$}"), src, pair.clone())
                .expect("non-empty sentence")
                .with_annotation("difficulty", if hard { "hard" } else { "simple" })
                .with_annotation("domain", domain);
            let reference = reference.join(" ");
            let mut r = EvalRecord::new(segment);
            if cfg.scored {
                r.q_nmt = QualityScore::reference_based(chrf(&nmt, &reference)).ok();
                r.q_llm = QualityScore::reference_based(chrf(&llm, &reference)).ok();
                r.qe_nmt = QualityScore::reference_free(qe_score(&r.segment.text, &nmt, Some(&pair))).ok();
            }
            r.reference = Some(reference);
            r.nmt_hyp = Some(nmt);
            r.llm_hyp = Some(llm);
            r
        })
        .collect()
}
