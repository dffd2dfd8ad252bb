//! Model file: 8-byte magic, little-endian u32 format version, then a JSON
//! body with the configuration, vocabulary (index = id) and per-order count
//! tables sorted by n-gram so identical models serialize identically.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_index, Level, NgramLanguageModel, Smoothing, TokenId, TokenizerSpec, RESERVED};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MAGIC: &[u8; 8] = b"MTCNGRAM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LevelBody {
    discount: f64,
    /// Each entry is the n-gram ids followed by its count.
    grams: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct ModelBody {
    order: usize,
    tokenizer: TokenizerSpec,
    smoothing: Smoothing,
    min_count: u32,
    vocabulary: Vec<String>,
    levels: Vec<LevelBody>,
}

pub(super) fn encode(model: &NgramLanguageModel) -> Result<Vec<u8>> {
    let levels = model
        .levels
        .iter()
        .map(|level| {
            let mut grams: Vec<Vec<u32>> = level
                .grams
                .iter()
                .map(|(g, &c)| {
                    let mut row = g.clone();
                    row.push(c);
                    row
                })
                .collect();
            grams.sort_unstable();
            LevelBody {
                discount: level.discount,
                grams,
            }
        })
        .collect();
    let body = ModelBody {
        order: model.order,
        tokenizer: model.tokenizer,
        smoothing: model.smoothing,
        min_count: model.min_count,
        vocabulary: model.vocab.clone(),
        levels,
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    serde_json::to_writer(&mut out, &body)?;
    Ok(out)
}

pub(super) fn decode(bytes: &[u8]) -> Result<NgramLanguageModel> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::Truncated("missing header".into()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::ModelFormat("not an n-gram model file (bad magic)".into()));
    }
    let version_bytes: [u8; 4] = bytes
        .get(MAGIC.len()..MAGIC.len() + 4)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::Truncated("missing format version".into()))?;
    let version = u32::from_le_bytes(version_bytes);
    if version != FORMAT_VERSION {
        return Err(Error::ModelVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let body: ModelBody = serde_json::from_slice(&bytes[MAGIC.len() + 4..]).map_err(|e| {
        if e.is_eof() {
            Error::Truncated(e.to_string())
        } else {
            Error::ModelFormat(e.to_string())
        }
    })?;

    if !(1..=super::MAX_ORDER).contains(&body.order) || body.levels.len() != body.order {
        return Err(Error::ModelFormat("inconsistent order".into()));
    }
    if body.vocabulary.len() < RESERVED
        || body.vocabulary[..RESERVED] != [super::UNK_TOKEN, super::BOS_TOKEN, super::EOS_TOKEN]
    {
        return Err(Error::ModelFormat("reserved tokens missing".into()));
    }
    let vocab_len = body.vocabulary.len() as u32;
    let mut levels = Vec::with_capacity(body.order);
    for (k, level) in body.levels.into_iter().enumerate() {
        let mut grams: HashMap<Vec<TokenId>, u32> = HashMap::with_capacity(level.grams.len());
        for mut row in level.grams {
            let count = row.pop();
            if row.len() != k + 1 || row.iter().any(|&id| id >= vocab_len) {
                return Err(Error::ModelFormat(format!("bad order-{} entry", k + 1)));
            }
            match count {
                Some(c) if c > 0 => {
                    grams.insert(row, c);
                }
                _ => return Err(Error::ModelFormat("non-positive count".into())),
            }
        }
        levels.push(Level::from_grams(grams, level.discount));
    }
    Ok(NgramLanguageModel {
        order: body.order,
        tokenizer: body.tokenizer,
        smoothing: body.smoothing,
        min_count: body.min_count,
        index: build_index(&body.vocabulary),
        vocab: body.vocabulary,
        levels,
    })
}

pub fn save_lm(model: &NgramLanguageModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode(model)?)
}

pub fn load_lm(path: impl AsRef<Path>) -> Result<NgramLanguageModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::{train_lm, TrainConfig};

    fn model() -> NgramLanguageModel {
        train_lm(
            &["a b c", "a b d", "c b a", "a b"],
            &TrainConfig {
                min_count: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.bin");
        let lm = model();
        save_lm(&lm, &path).unwrap();
        let back = load_lm(&path).unwrap();
        assert_eq!(back, lm);
        let a = lm.perplexity("a b").unwrap();
        let b = back.perplexity("a b").unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.token_count, b.token_count);
    }

    #[test]
    fn encoding_is_deterministic() {
        assert_eq!(encode(&model()).unwrap(), encode(&model()).unwrap());
    }

    #[test]
    fn wrong_magic_rejected() {
        let mut bytes = encode(&model()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut bytes = encode(&model()).unwrap();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            decode(&bytes),
            Err(Error::ModelVersion { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn truncated_file_rejected() {
        let bytes = encode(&model()).unwrap();
        for cut in [4, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(decode(&bytes[..cut]), Err(Error::Truncated(_))),
                "cut at {cut}"
            );
        }
    }
}
