//! Reference-free surrogate quality estimate.
//!
//! Half of the score rewards a hypothesis length close to the length expected
//! for the source (`1 - |len(hyp)/E[len] - 1|`, clamped to [0, 1]); the other
//! half is the fraction of the hypothesis' letters written in the script of
//! the target language, which penalizes untranslated or wrong-language output.
//! It is only a stand-in so QE-driven routing runs without a neural model.

use crate::types::LanguagePair;

/// Rough non-whitespace characters needed per unit of content, per language.
fn char_density(lang: &str) -> f64 {
    match lang {
        "zh" => 1.0,
        "ja" => 1.4,
        "ko" => 1.5,
        "en" => 3.0,
        "de" => 3.3,
        "fr" | "es" | "it" | "pt" => 3.2,
        "ru" => 3.1,
        _ => 3.0,
    }
}

/// Expected hypothesis/source length ratio in non-whitespace characters.
pub fn expected_length_ratio(pair: Option<&LanguagePair>) -> f64 {
    match pair {
        Some(p) => char_density(p.target()) / char_density(p.source()),
        None => 1.0,
    }
}

fn is_latin(c: char) -> bool {
    c.is_ascii_alphabetic() || matches!(c, '\u{00C0}'..='\u{024F}' | '\u{1E00}'..='\u{1EFF}')
}

fn is_han(c: char) -> bool {
    matches!(c, '\u{4E00}'..='\u{9FFF}' | '\u{3400}'..='\u{4DBF}' | '\u{F900}'..='\u{FAFF}' | '\u{20000}'..='\u{2A6DF}')
}

fn is_kana(c: char) -> bool {
    matches!(c, '\u{3040}'..='\u{30FF}' | '\u{31F0}'..='\u{31FF}' | '\u{FF66}'..='\u{FF9F}')
}

/// Whether a letter belongs to the script normally used for `lang`.
pub fn in_script(lang: &str, c: char) -> bool {
    match lang {
        "zh" => is_han(c),
        "ja" => is_han(c) || is_kana(c),
        "ko" => matches!(c, '\u{AC00}'..='\u{D7AF}' | '\u{1100}'..='\u{11FF}' | '\u{3130}'..='\u{318F}'),
        "ru" | "uk" | "bg" => matches!(c, '\u{0400}'..='\u{04FF}'),
        "ar" => matches!(c, '\u{0600}'..='\u{06FF}'),
        "en" | "de" | "fr" | "es" | "it" | "pt" | "nl" | "cs" | "pl" => is_latin(c),
        _ => c.is_alphabetic(),
    }
}

/// Surrogate QE score in [0, 100].
pub fn qe_score(src: &str, hyp: &str, pair: Option<&LanguagePair>) -> f64 {
    let src_len = src.chars().filter(|c| !c.is_whitespace()).count() as f64;
    let hyp_len = hyp.chars().filter(|c| !c.is_whitespace()).count() as f64;
    let expected = (src_len * expected_length_ratio(pair)).max(1.0);
    let length_term = 1.0 - ((hyp_len / expected) - 1.0).abs().clamp(0.0, 1.0);

    let letters: Vec<char> = hyp.chars().filter(|c| c.is_alphabetic()).collect();
    let script_term = if letters.is_empty() {
        0.0
    } else {
        let target = pair.map(LanguagePair::target).unwrap_or("");
        letters.iter().filter(|&&c| in_script(target, c)).count() as f64 / letters.len() as f64
    };
    (100.0 * (0.5 * length_term + 0.5 * script_term)).clamp(0.0, 100.0)
}
