//! Zero-shot cross-lingual opinion target extraction.
//!
//! The crate bundles everything needed to train a convolutional IOB sequence
//! tagger on one or more source languages and evaluate it on unseen target
//! languages: a small deterministic tensor kernel with hand-written gradients,
//! fastText embedding ingestion, orthogonal Procrustes alignment of embedding
//! spaces, SemEval-style corpus parsing, and exact-character-span F1 scoring.
//!
//! Everything is driven by a single 64-bit seed (see [`rng`]) so that runs are
//! bit-reproducible.
//!
//! # Example
//!
//! Train a small tagger on a synthetic corpus and score it:
//!
//! ```
//! use xote::embeddings::EmbeddingSet;
//! use xote::model::ModelConfig;
//! use xote::trainer::{evaluate, train, TrainConfig};
//! use xote::{synth, tensor::AdamConfig};
//!
//! # fn main() -> xote::Result<()> {
//! let latent = synth::latent_vectors(16, 7);
//! let mut embeddings = EmbeddingSet::new();
//! embeddings.insert(synth::make_table("aa", "aa", &latent, None))?;
//!
//! let model_cfg = ModelConfig {
//!     layers: 2,
//!     conv_dim: 24,
//!     dense_dim: 24,
//!     dropout_embed: 0.0,
//!     dropout_hidden: 0.0,
//!     ..ModelConfig::default()
//! };
//! let train_cfg = TrainConfig {
//!     max_epochs: 20,
//!     seeds: vec![1],
//!     adam: AdamConfig { alpha: 0.01, ..AdamConfig::default() },
//!     ..TrainConfig::default()
//! };
//!
//! let sources = vec![("aa".to_string(), synth::make_corpus("aa", "aa", 40, 1))];
//! let outcome = train(&model_cfg, &train_cfg, 1, &sources, &embeddings)?;
//!
//! let test = synth::make_corpus("aa", "aa", 20, 2);
//! let report = evaluate(&outcome.params, &model_cfg, &embeddings, "aa", &test)?;
//! assert!(report.f1 > 0.8);
//! # Ok(())
//! # }
//! ```

pub mod align;
pub mod container;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod iob;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
