//! Evaluation toolkit for audio anti-spoofing under benign transformations.
//!
//! The crate covers the full analysis pipeline: four-way source/processing
//! labelling of a corpus, embedding drift analysis, binary and four-way MLP
//! classifiers with axis-collapsed EER metrics, glottal-source acoustic
//! measures (H1-H2, H1-A3), and two-way ANOVA with Tukey HSD.

pub mod acoustics;
pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod drift;
pub mod embeddings;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod stats;

pub use corpus::{FourWayLabel, ProcessingLabel, SourceLabel, Split, UtteranceRecord};
pub use embeddings::EmbeddingSet;
