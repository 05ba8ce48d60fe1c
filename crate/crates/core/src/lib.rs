//! Training signals for calibrated verbalized uncertainty.
//!
//! Three stages turn sampled generations into a reward a policy can be
//! optimized against:
//!
//! 1. [`entropy`]: von Neumann entropy of a kernel over the embeddings of
//!    several sampled answers, a continuous dispersion score.
//! 2. [`calibration`]: Platt scaling maps that score to a probability that
//!    the answer is wrong.
//! 3. [`rewards`] and [`grpo`]: a verifiable reward aligns a predicted
//!    uncertainty with the calibrated target; a desk-scale GRPO loop optimizes
//!    a toy policy against it.
//!
//! [`metrics`] evaluates predictions (ECE, AUROC, Spearman), [`data`] holds
//! file formats, prompts, parsers and providers, and [`pipeline`] chains the
//! stages with a reproducible run manifest.

pub mod calibration;
pub mod data;
pub mod eigen;
pub mod entropy;
pub mod error;
pub mod grpo;
pub mod metrics;
pub mod pipeline;
pub mod rewards;
pub mod seed;

pub use error::{Error, Result};
