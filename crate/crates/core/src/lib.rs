//! Token-type ablation toolkit for in-context learning experiments.
//!
//! Builds few-shot classification prompts with per-token class bookkeeping,
//! restricts what the test example may attend to (or deletes tokens outright),
//! runs a small decoder-only transformer and aggregates accuracies.

pub mod ablation;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod perturbation;
pub mod prompt;
pub mod report;
pub mod runtime;
pub mod synthetic;
pub mod tokenizer;

pub use error::{Error, Result};
