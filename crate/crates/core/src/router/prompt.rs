use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::LanguagePair;

pub const DEFAULT_PROMPT_TEMPLATE: &str =
    "Translate this from {source_language} to {target_language}.\n{source_language}: {source_sentence}\n{target_language}:";

pub const PLACEHOLDERS: [&str; 3] = ["source_language", "target_language", "source_sentence"];

/// Code to full language name. Ships zh, en, de and ja; `extra` entries win.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageNames {
    names: BTreeMap<String, String>,
}

impl Default for LanguageNames {
    fn default() -> Self {
        Self::with_extra(&BTreeMap::new())
    }
}

impl LanguageNames {
    pub fn with_extra(extra: &BTreeMap<String, String>) -> Self {
        let mut names: BTreeMap<String, String> = [
            ("zh", "Chinese"),
            ("en", "English"),
            ("de", "German"),
            ("ja", "Japanese"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
        names.extend(extra.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self { names }
    }

    pub fn name(&self, code: &str) -> Result<&str> {
        self.names
            .get(code)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("no language name for code {code:?}")))
    }
}

pub fn check_template(template: &str) -> Result<()> {
    for p in PLACEHOLDERS {
        if !template.contains(&format!("{{{p}}}")) {
            return Err(Error::Config(format!("prompt template lacks {{{p}}}")));
        }
    }
    Ok(())
}

/// Substitutes the three placeholders in one left-to-right pass, so text
/// inside the source sentence is never itself expanded.
pub fn render_prompt(
    template: &str,
    pair: &LanguagePair,
    text: &str,
    names: &LanguageNames,
) -> Result<String> {
    check_template(template)?;
    let source = names.name(pair.source())?;
    let target = names.name(pair.target())?;
    let mut out = String::with_capacity(template.len() + text.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let value = after.find('}').and_then(|close| {
            let key = &after[..close];
            let v = match key {
                "source_language" => source,
                "target_language" => target,
                "source_sentence" => text,
                _ => return None,
            };
            Some((v, close))
        });
        match value {
            Some((v, close)) => {
                out.push_str(v);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}
