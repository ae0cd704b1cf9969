//! Human-AI deliberation engine.
//!
//! Both parties externalize per-dimension opinions (weight of evidence) on a
//! tabular decision case. Conflicting dimensions are discussed through an
//! LLM-mediated dialogue whose claims are grounded in statistics extracted
//! from the model's training data, and the AI's opinions move toward the
//! human's in proportion to argument strength and model uncertainty.

pub mod dataset;
pub mod fixtures;
pub mod model;
pub mod woe;
pub mod knowledge;
pub mod dialogue;
pub mod metrics;
pub mod session;
pub mod simulate;
pub mod llm;
