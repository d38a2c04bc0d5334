//! Document classification with sentence-level attention, trained either
//! unsupervised (AT-CNN) or against human rationale labels (RA-CNN), plus
//! the tooling to extract per-sentence explanations from trained models and
//! to collect and aggregate paired human judgments of those explanations.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`] ingests the annotated review corpus, builds the vocabulary
//!   and the train/dev/test split.
//! * [`tensor`] is a small dense-tensor engine with reverse-mode gradients
//!   for exactly the operations the models need.
//! * [`models`] defines Doc-CNN, AT-CNN and RA-CNN, their training loop,
//!   prediction and checkpoints.
//! * [`explain`] ranks sentences into explanations and compares them.
//! * [`harness`] builds paired-comparison tasks, filters workers with gold
//!   questions and resolves judgments by majority vote.

pub mod corpus;
pub mod error;
pub mod explain;
pub mod harness;
pub mod jsonl;
pub mod models;
pub mod tensor;

pub use error::{Error, Result};
