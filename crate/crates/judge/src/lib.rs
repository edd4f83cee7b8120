//! Re-label the labelling pool with a chat-completion model and measure its
//! agreement with the human labels.

pub mod agreement;
pub mod client;
pub mod parse;
pub mod prompt;

pub use agreement::{inter_judge_agreement, judge_agreement, JudgeAgreement};
pub use client::{judge_pool, query_judge, JudgeConfig, JudgeError};
pub use parse::{parse_verdict, JudgeVerdict};
pub use prompt::{build_prompt, DEFAULT_RUBRIC};
