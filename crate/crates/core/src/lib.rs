//! Bug-inducing commit identification.
//!
//! The crate provides the classic SZZ family ([`szz`]) and an LLM-assisted
//! pipeline ([`pipeline`]). The pipeline reasons about the root cause of a
//! fix. When the model can tell the buggy and fixed versions apart it
//! adjudicates candidate commits directly, otherwise it ranks buggy
//! statements. [`eval`] scores predictions against annotated datasets.

pub mod config;
pub mod context;
pub mod diff;
pub mod eval;
pub mod error;
pub mod fixture;
pub mod llm;
pub mod pipeline;
pub mod repo;
pub mod szz;

pub use error::{RepoError, MalformedDiff};
pub use repo::{CommitId, CommitMeta, FileVersion, LineOrigin, Repo};
