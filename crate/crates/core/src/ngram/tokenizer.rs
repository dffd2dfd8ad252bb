use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// How sentences are split into LM tokens. `Character` suits unsegmented
/// scripts (Chinese, Japanese); `Whitespace` suits German and English.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerSpec {
    #[default]
    Whitespace,
    Character,
}

impl TokenizerSpec {
    pub fn tokenize(self, text: &str) -> Vec<String> {
        match self {
            TokenizerSpec::Whitespace => text.split_whitespace().map(str::to_owned).collect(),
            TokenizerSpec::Character => text
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(String::from)
                .collect(),
        }
    }

    /// Reasonable default for a source language code.
    pub fn for_language(code: &str) -> Self {
        match code {
            "zh" | "ja" | "th" | "ko" => TokenizerSpec::Character,
            _ => TokenizerSpec::Whitespace,
        }
    }
}

impl fmt::Display for TokenizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenizerSpec::Whitespace => "whitespace",
            TokenizerSpec::Character => "character",
        })
    }
}

impl FromStr for TokenizerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "whitespace" => Ok(TokenizerSpec::Whitespace),
            "character" | "char" => Ok(TokenizerSpec::Character),
            other => Err(Error::invalid(format!("unknown tokenizer {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_and_character() {
        assert_eq!(
            TokenizerSpec::Whitespace.tokenize("  a bb\tc "),
            vec!["a", "bb", "c"]
        );
        assert_eq!(
            TokenizerSpec::Character.tokenize("你 好a"),
            vec!["你", "好", "a"]
        );
    }
}
