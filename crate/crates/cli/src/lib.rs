//! Library side of the `switchq` command: experiment configuration and
//! aggregation, plus the CSV/metadata writers. The binary in `main.rs` is a
//! thin argument-parsing layer over these.

pub mod experiment;
pub mod output;
