//! Reproducible LLM-assisted thematic analysis of interview transcripts,
//! with traceability checks and inter-coder agreement measures.

pub mod corpus;
pub mod gateway;
pub mod prompt;
pub mod parse;
pub mod codebook;
pub mod trace;
pub mod agreement;
pub mod pipeline;
pub mod config;
pub mod report;
pub mod cli;
