//! Cost-aware routing between a cheap NMT backend and an expensive LLM backend.

pub mod calibration;
pub mod dataset;
pub mod decider;
pub mod error;
pub mod evalharness;
pub mod fsutil;
pub mod ngram;
pub mod router;
pub mod scoring;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    mean_quality, Backend, BackendCalls, EvalRecord, LanguagePair, QualityScore, RoutingDecision,
    ScoreKind, Segment,
};
