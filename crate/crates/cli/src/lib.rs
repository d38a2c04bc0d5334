//! Pipeline verbs and the judgment service behind the `ratattn` binary.

pub mod manifest;
pub mod pipeline;
pub mod service;
