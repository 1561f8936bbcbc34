//! Turns natural-language requirements into architecture choices.
//!
//! The pipeline classifies requirements with an LLM, groups the resulting
//! architecturally significant requirements (ASRs) by the conditions under
//! which they hold, and for every set of conditions that can hold together
//! picks one choice per decision group to maximize the weighted
//! quality-attribute score.

pub mod config;
pub mod domain;
pub mod error;
pub mod extraction;
pub mod gateway;
pub mod grouping;
pub mod io;
pub mod optimizer;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod sensitivity;

pub use error::Error;
