//! Config parsing and report encodings behind the `symposc` binary.

pub mod config;
pub mod output;
