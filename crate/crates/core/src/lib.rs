//! Shannon-style guessing experiments: corpus preparation, the guessing
//! state machine, entropy bounds, robustness analysis and language-model
//! bits-per-character scoring.

pub mod alphabet;
pub mod analysis;
pub mod corpus;
pub mod dataset;
pub mod estimator;
pub mod llm_eval;
pub mod robustness;
pub mod session;

pub use alphabet::Alphabet;
