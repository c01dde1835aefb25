//! Protocol-prompted LLM data extraction for evidence reviews, and
//! evaluation of LLM extraction and second review against a human baseline.

pub mod corpus;
pub mod evaluation;
pub mod gateway;
pub mod parser;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod review;
