//! Dataset files, prompt templates, output parsers and providers.

pub mod dataset;
pub mod parse;
pub mod prompts;
pub mod provider;
