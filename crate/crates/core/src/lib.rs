//! Measures whether persona prompts have their intended effect on language
//! model task accuracy: expert-persona advantage over a no-persona baseline,
//! worst-case sensitivity to irrelevant persona attributes, and rank
//! fidelity of performance to ordinal persona attributes, each with exact or
//! resampling-based significance gates, plus the mixed-effects regressions
//! that summarize effects across models and tasks.

pub mod catalog;
pub mod cli;
pub mod endpoint;
pub mod error;
pub mod grader;
pub mod lmm;
pub mod metrics;
pub mod prompt;
pub mod report;
pub mod run;
pub mod synth;

pub use error::{Error, Result};
