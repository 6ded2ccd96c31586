//! Reward-driven unsupervised abstractive sentence summarization.
//!
//! The crate provides the reward functions that score a summary against its
//! input (content preservation, fluency, length, and a quality coupling
//! between summaries of different lengths), self-critical policy-gradient
//! training over an abstract conditional generator, the shuffle/drop/add
//! reconstruction pretraining data, beam-search decoding with pattern
//! filtering and reward-based selection, and ROUGE-based evaluation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common types to `f64`.

// Validation uses `!(x > 0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod corpus;
pub mod eval;
pub mod perturb;
pub mod policy;
pub mod rewards;
pub mod rl;
pub mod rng;
pub mod scalar;
pub mod toy;

pub use scalar::Scalar;

pub type RewardConfig = rewards::RewardConfig<f64>;
pub type RewardBreakdown = rewards::RewardBreakdown<f64>;
pub type TotalReward = rewards::TotalReward<f64>;
pub type SummaryCandidate = policy::SummaryCandidate<f64>;
pub type ToyGenerator = toy::ToyGenerator<f64>;
pub type HashedEmbedder = toy::HashedEmbedder<f64>;
pub type BigramLm = toy::BigramLm<f64>;
pub type RougeScore = eval::RougeScore<f64>;
pub type EvalReport = eval::EvalReport<f64>;
pub type StepReport = rl::StepReport<f64>;
pub type TrainConfig = rl::TrainConfig<f64>;

pub type RewardConfigF32 = rewards::RewardConfig<f32>;
pub type RewardBreakdownF32 = rewards::RewardBreakdown<f32>;
pub type ToyGeneratorF32 = toy::ToyGenerator<f32>;
