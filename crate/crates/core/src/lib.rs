//! Core library for domain-divergence measurement, training-schedule
//! compilation, and a compact trainable translation model.
//!
//! The crate is organized around the experiment lifecycle: load or
//! synthesize multi-domain parallel corpora ([`corpus`], [`synth`]), measure
//! inter-domain divergence ([`divergence`]), mix and schedule training data
//! ([`mixing`], [`strategy`]), train and decode a small encoder–decoder
//! ([`model`]), score translations ([`eval`]), and correlate scores with
//! divergence ([`analysis`]).

pub mod analysis;
pub mod corpus;
pub mod divergence;
pub mod eval;
pub mod mixing;
pub mod model;
pub mod seeding;
pub mod strategy;
pub mod synth;

pub use analysis::{ModeKind, Recommendation, RunResult};
pub use corpus::{DomainId, LangPair, ParallelCorpus, SentencePair, Split};
pub use divergence::{DivergenceMatrix, FreqDist, SidePolicy, Stopwords, TokenStream};
pub use eval::{bleu, evaluate, BleuTokenizer, EvalResult};
pub use mixing::{DatasetSpec, MixComponent, MixedDataset};
pub use model::{ModelConfig, ModelParams, NoiseConfig, SubwordModel, TrainConfig};
pub use strategy::{DomainBudget, GridSpec, Mode, Objective, Schedule, Stage, Strategy};
pub use synth::{calibrate_overlap, SynthDomain, SynthError, SynthSpec};
