//! Verifiable rewards for uncertainty predictions.
//!
//! * entropy alignment: `1 - max(0.05, |u - u_cal|)`, range `[0, 0.95]`
//! * Brier baseline: `1 - (u - 1[incorrect])^2`, range `[0, 1]`
//!
//! A prediction that could not be parsed earns 0 under both.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of the flat band around the target where the entropy reward saturates.
pub const ENTROPY_REWARD_FLOOR: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("invalid reward input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    #[default]
    Entropy,
    Brier,
}

impl RewardKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardKind::Entropy => "entropy",
            RewardKind::Brier => "brier",
        }
    }
}

impl std::str::FromStr for RewardKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entropy" => Ok(RewardKind::Entropy),
            "brier" => Ok(RewardKind::Brier),
            other => Err(format!("unknown reward kind {other:?} (entropy|brier)")),
        }
    }
}

/// A scalar uncertainty extracted from model output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyPrediction {
    pub value: f64,
    pub parse_ok: bool,
    /// Set when the parsed number fell outside `[0, 1]` and was clamped.
    #[serde(default)]
    pub clamped: bool,
}

impl UncertaintyPrediction {
    pub fn new(value: f64) -> Self {
        let clamped = !(0.0..=1.0).contains(&value);
        Self {
            value: value.clamp(0.0, 1.0),
            parse_ok: true,
            clamped,
        }
    }

    pub fn parse_failure() -> Self {
        Self {
            value: 0.0,
            parse_ok: false,
            clamped: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardValue {
    pub value: f64,
    /// True when the reward is the format-failure penalty.
    pub format_failure: bool,
}

impl RewardValue {
    fn scored(value: f64) -> Self {
        Self {
            value,
            format_failure: false,
        }
    }

    fn penalty() -> Self {
        Self {
            value: 0.0,
            format_failure: true,
        }
    }
}

pub fn entropy_reward_value(u_theta: f64, u_cal: f64) -> f64 {
    1.0 - f64::max(ENTROPY_REWARD_FLOOR, (u_theta - u_cal).abs())
}

pub fn brier_reward_value(u_theta: f64, incorrect: bool) -> f64 {
    let z = if incorrect { 1.0 } else { 0.0 };
    1.0 - (u_theta - z) * (u_theta - z)
}

pub fn entropy_reward(u_theta: &UncertaintyPrediction, u_cal: f64) -> RewardValue {
    if !u_theta.parse_ok {
        return RewardValue::penalty();
    }
    RewardValue::scored(entropy_reward_value(u_theta.value, u_cal))
}

pub fn brier_reward(u_theta: &UncertaintyPrediction, incorrect: bool) -> RewardValue {
    if !u_theta.parse_ok {
        return RewardValue::penalty();
    }
    RewardValue::scored(brier_reward_value(u_theta.value, incorrect))
}

/// Reward for one prediction against a per-question target. For Brier the
/// target is the correctness label encoded as 0.0 or 1.0.
pub fn reward(kind: RewardKind, u_theta: &UncertaintyPrediction, target: f64) -> RewardValue {
    match kind {
        RewardKind::Entropy => entropy_reward(u_theta, target),
        RewardKind::Brier => brier_reward(u_theta, target >= 0.5),
    }
}

pub fn batch_rewards(
    kind: RewardKind,
    predictions: &[UncertaintyPrediction],
    targets: &[f64],
) -> Result<Vec<RewardValue>, RewardError> {
    if predictions.len() != targets.len() {
        return Err(RewardError::InvalidInput(format!(
            "{} predictions but {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if let Some(t) = targets
        .iter()
        .find(|t| !t.is_finite() || !(0.0..=1.0).contains(*t))
    {
        return Err(RewardError::InvalidInput(format!(
            "target {t} outside [0, 1]"
        )));
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, &t)| reward(kind, p, t))
        .collect())
}
