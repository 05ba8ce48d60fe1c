//! Desk-scale Group Relative Policy Optimization.
//!
//! The policy is a per-question categorical distribution over a grid of
//! uncertainty levels, sampled at temperature `T` as `softmax(logits / T)`.
//! Each step draws a batch of questions, samples a group of `G` predictions
//! per question, scores them with a verifiable reward, normalizes rewards
//! within the group and takes a policy-gradient ascent step on the logits.
//!
//! Gradient of the surrogate for one sample at grid index `m` with advantage
//! `a` is `a * (onehot(m) - p) / T`; it is summed over the group and averaged
//! over the batch.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rewards::{reward, RewardKind, RewardValue, UncertaintyPrediction};
use crate::seed::{mix, rng_for};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainingError {
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),

    #[error("no policy row for question {0:?}")]
    UnknownQuestion(String),

    #[error("training diverged at step {step}: non-finite gradient")]
    Divergence { step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub group_size: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub sampling_temperature: f64,
    pub learning_rate: f64,
    pub std_guard_eps: f64,
    pub kl_coeff: f64,
    /// PPO-style ratio clip, active only when `update_epochs > 1`.
    pub clip_eps: f64,
    /// Gradient steps taken per batch of rollouts (1 = plain on-policy).
    pub update_epochs: usize,
    pub grid_levels: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            group_size: 16,
            batch_size: 32,
            steps: 1000,
            sampling_temperature: 1.5,
            learning_rate: 0.5,
            std_guard_eps: 1e-8,
            kl_coeff: 0.0,
            clip_eps: 0.2,
            update_epochs: 1,
            grid_levels: 21,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: &str| Err(TrainingError::InvalidConfig(m.to_string()));
        if self.group_size < 2 {
            return bad("group_size must be >= 2");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        if !(self.sampling_temperature > 0.0 && self.sampling_temperature.is_finite()) {
            return bad("sampling_temperature must be > 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.kl_coeff < 0.0 || self.clip_eps < 0.0 || self.std_guard_eps < 0.0 {
            return bad("kl_coeff, clip_eps and std_guard_eps must be non-negative");
        }
        if self.update_epochs < 1 {
            return bad("update_epochs must be >= 1");
        }
        if self.grid_levels < 2 {
            return bad("grid_levels must be >= 2");
        }
        Ok(())
    }
}

/// Evenly spaced levels `0, 1/(m-1), ..., 1`.
pub fn uniform_grid(levels: usize) -> Vec<f64> {
    (0..levels)
        .map(|i| i as f64 / (levels - 1) as f64)
        .collect()
}

/// Numerically stable `softmax(logits / temperature)`.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .map(|l| ((l - max) / temperature).exp())
        .collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    grid: Vec<f64>,
    question_ids: Vec<String>,
    logits: Vec<Vec<f64>>,
    reference_logits: Vec<Vec<f64>>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ToyPolicy {
    /// Uniform policy over `grid` for every question.
    pub fn new(question_ids: Vec<String>, grid: Vec<f64>) -> Result<Self, TrainingError> {
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(TrainingError::InvalidConfig(
                "grid must be strictly increasing with at least two levels".into(),
            ));
        }
        if grid.first().is_some_and(|&g| g < 0.0) || grid.last().is_some_and(|&g| g > 1.0) {
            return Err(TrainingError::InvalidConfig("grid must lie in [0, 1]".into()));
        }
        let mut index = HashMap::with_capacity(question_ids.len());
        for (i, id) in question_ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(TrainingError::InvalidConfig(format!(
                    "duplicate question id {id:?}"
                )));
            }
        }
        let zeros = vec![vec![0.0; grid.len()]; question_ids.len()];
        Ok(Self {
            grid,
            question_ids,
            logits: zeros.clone(),
            reference_logits: zeros,
            index,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn question_ids(&self) -> &[String] {
        &self.question_ids
    }

    pub fn num_questions(&self) -> usize {
        self.question_ids.len()
    }

    pub fn row(&self, question_id: &str) -> Result<usize, TrainingError> {
        self.index
            .get(question_id)
            .copied()
            .ok_or_else(|| TrainingError::UnknownQuestion(question_id.to_string()))
    }

    pub fn logits(&self, row: usize) -> &[f64] {
        &self.logits[row]
    }

    pub fn set_logits(&mut self, row: usize, logits: Vec<f64>) {
        assert_eq!(logits.len(), self.grid.len());
        self.logits[row] = logits;
    }

    pub fn reference_logits(&self, row: usize) -> &[f64] {
        &self.reference_logits[row]
    }

    pub fn probabilities(&self, row: usize, temperature: f64) -> Vec<f64> {
        softmax(&self.logits[row], temperature)
    }

    pub fn expected_uncertainty(&self, row: usize, temperature: f64) -> f64 {
        self.probabilities(row, temperature)
            .iter()
            .zip(&self.grid)
            .map(|(p, u)| p * u)
            .sum()
    }

    /// Exact expected reward of one question under the current policy.
    pub fn expected_reward(&self, row: usize, temperature: f64, kind: RewardKind, target: f64) -> f64 {
        self.probabilities(row, temperature)
            .iter()
            .zip(&self.grid)
            .map(|(p, &u)| p * reward(kind, &UncertaintyPrediction::new(u), target).value)
            .sum()
    }

    pub fn kl_to_reference(&self, row: usize, temperature: f64) -> f64 {
        let p = softmax(&self.logits[row], temperature);
        let r = softmax(&self.reference_logits[row], temperature);
        p.iter()
            .zip(&r)
            .filter(|(pi, _)| **pi > 0.0)
            .map(|(pi, ri)| pi * (pi.ln() - ri.ln()))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRollout {
    pub question_id: String,
    /// Grid index of each sample.
    pub sample_indices: Vec<usize>,
    pub samples: Vec<UncertaintyPrediction>,
    /// Log-probability of each sample under the policy that drew it.
    pub behavior_logprobs: Vec<f64>,
    pub rewards: Vec<RewardValue>,
    pub advantages: Vec<f64>,
    pub group_mean: f64,
    pub group_std: f64,
    /// True when the std guard fired and all advantages are zero.
    pub guarded: bool,
}

pub fn sample_group<R: Rng + ?Sized>(
    policy: &ToyPolicy,
    question_id: &str,
    group_size: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<GroupRollout, TrainingError> {
    if group_size < 2 {
        return Err(TrainingError::InvalidConfig("group_size must be >= 2".into()));
    }
    let row = policy.row(question_id)?;
    let probs = policy.probabilities(row, temperature);
    let mut sample_indices = Vec::with_capacity(group_size);
    for _ in 0..group_size {
        let x: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if x < acc {
                pick = i;
                break;
            }
        }
        // never land on a zero-probability tail through rounding in acc
        while probs[pick] == 0.0 && pick > 0 {
            pick -= 1;
        }
        sample_indices.push(pick);
    }
    Ok(GroupRollout {
        question_id: question_id.to_string(),
        samples: sample_indices
            .iter()
            .map(|&i| UncertaintyPrediction::new(policy.grid[i]))
            .collect(),
        behavior_logprobs: sample_indices.iter().map(|&i| probs[i].ln()).collect(),
        sample_indices,
        rewards: Vec::new(),
        advantages: Vec::new(),
        group_mean: 0.0,
        group_std: 0.0,
        guarded: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub guarded: bool,
}

/// `(r - mean) / std_pop`, or all zeros when `std_pop < std_guard_eps`.
pub fn compute_advantages(rewards: &[f64], std_guard_eps: f64) -> Advantages {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std >= std_guard_eps) || std == 0.0 {
        return Advantages {
            values: vec![0.0; rewards.len()],
            mean,
            std,
            guarded: true,
        };
    }
    let centered: Vec<f64> = rewards.iter().map(|r| (r - mean) / std).collect();
    // remove the residual rounding offset so the group mean is 0 to ~1 ulp
    let offset = centered.iter().sum::<f64>() / n;
    Advantages {
        values: centered.into_iter().map(|a| a - offset).collect(),
        mean,
        std,
        guarded: false,
    }
}

/// Scores a sampled group and fills in rewards and advantages.
pub fn score_group(
    rollout: &mut GroupRollout,
    kind: RewardKind,
    target: f64,
    std_guard_eps: f64,
) {
    rollout.rewards = rollout
        .samples
        .iter()
        .map(|s| reward(kind, s, target))
        .collect();
    let raw: Vec<f64> = rollout.rewards.iter().map(|r| r.value).collect();
    let adv = compute_advantages(&raw, std_guard_eps);
    rollout.advantages = adv.values;
    rollout.group_mean = adv.mean;
    rollout.group_std = adv.std;
    rollout.guarded = adv.guarded;
}

/// Surrogate `J = (1/B) sum_groups [ sum_i a_i log pi(m_i) - beta KL(pi || pi_ref) ]`.
pub fn surrogate_objective(
    policy: &ToyPolicy,
    rollouts: &[GroupRollout],
    config: &TrainerConfig,
) -> Result<f64, TrainingError> {
    let t = config.sampling_temperature;
    let mut total = 0.0;
    for r in rollouts {
        let row = policy.row(&r.question_id)?;
        let p = policy.probabilities(row, t);
        for (&m, &a) in r.sample_indices.iter().zip(&r.advantages) {
            total += a * p[m].ln();
        }
        if config.kl_coeff > 0.0 {
            total -= config.kl_coeff * policy.kl_to_reference(row, t);
        }
    }
    Ok(total / rollouts.len().max(1) as f64)
}

/// Gradient of the surrogate with respect to every logit row, keyed by row.
///
/// Samples whose probability ratio against the behavior policy has left
/// `[1 - clip_eps, 1 + clip_eps]` in the advantage direction contribute
/// nothing; on-policy the ratio is 1 and this reduces to the plain
/// `a * grad log pi` estimator.
pub fn surrogate_gradient(
    policy: &ToyPolicy,
    rollouts: &[GroupRollout],
    config: &TrainerConfig,
) -> Result<Vec<(usize, Vec<f64>)>, TrainingError> {
    let t = config.sampling_temperature;
    let m_levels = policy.grid.len();
    let mut grads: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let clip = config.update_epochs > 1;

    for r in rollouts {
        let row = policy.row(&r.question_id)?;
        let p = policy.probabilities(row, t);
        let k = *slot.entry(row).or_insert_with(|| {
            grads.push((row, vec![0.0; m_levels]));
            grads.len() - 1
        });
        let g = &mut grads[k].1;

        for ((&m, &a), &old_lp) in r
            .sample_indices
            .iter()
            .zip(&r.advantages)
            .zip(&r.behavior_logprobs)
        {
            if a == 0.0 {
                continue;
            }
            let mut weight = a;
            if clip {
                let ratio = (p[m].ln() - old_lp).exp();
                let outside = (a > 0.0 && ratio > 1.0 + config.clip_eps)
                    || (a < 0.0 && ratio < 1.0 - config.clip_eps);
                if outside {
                    continue;
                }
                weight *= ratio;
            }
            for (j, gj) in g.iter_mut().enumerate() {
                let onehot = if j == m { 1.0 } else { 0.0 };
                *gj += weight * (onehot - p[j]) / t;
            }
        }

        if config.kl_coeff > 0.0 {
            let refp = softmax(&policy.reference_logits[row], t);
            let kl = policy.kl_to_reference(row, t);
            for (j, gj) in g.iter_mut().enumerate() {
                let lp = if p[j] > 0.0 { p[j].ln() } else { 0.0 };
                *gj -= config.kl_coeff * p[j] * (lp - refp[j].ln() - kl) / t;
            }
        }
    }

    let b = rollouts.len().max(1) as f64;
    for (_, g) in grads.iter_mut() {
        for v in g.iter_mut() {
            *v /= b;
        }
    }
    Ok(grads)
}

/// One gradient-ascent step on the surrogate. Grid and reference logits are untouched.
pub fn policy_update(
    policy: &mut ToyPolicy,
    rollouts: &[GroupRollout],
    config: &TrainerConfig,
    step: usize,
) -> Result<(), TrainingError> {
    let grads = surrogate_gradient(policy, rollouts, config)?;
    if grads
        .iter()
        .any(|(_, g)| g.iter().any(|v| !v.is_finite()))
    {
        return Err(TrainingError::Divergence { step });
    }
    for (row, g) in grads {
        for (l, d) in policy.logits[row].iter_mut().zip(&g) {
            *l += config.learning_rate * d;
        }
    }
    Ok(())
}

/// Per-question optimization target: `u_cal` for the entropy reward, the
/// correctness label as 0.0/1.0 for Brier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTarget {
    pub id: String,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub id: String,
    pub target: f64,
    pub expected_u: f64,
    pub abs_gap: f64,
    pub expected_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub reward_kind: RewardKind,
    pub config: TrainerConfig,
    pub advantage_std: String,
    /// Mean sampled reward per step.
    pub mean_reward_curve: Vec<f64>,
    /// Mean `|E_pi[u] - target|` over all questions after each step.
    pub mean_abs_gap_curve: Vec<f64>,
    pub final_mean_abs_gap: f64,
    /// Exact expected reward under the final policy, averaged over questions.
    pub final_expected_reward: f64,
    pub questions: Vec<QuestionOutcome>,
    pub guarded_groups: usize,
    pub format_failures: usize,
    /// Excluded from the JSON so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl TrainingReport {
    /// Columns: step, mean_reward, mean_abs_gap (steps are 1-based).
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("step,mean_reward,mean_abs_gap\n");
        for (i, (r, g)) in self
            .mean_reward_curve
            .iter()
            .zip(&self.mean_abs_gap_curve)
            .enumerate()
        {
            out.push_str(&format!("{},{},{}\n", i + 1, r, g));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub step: usize,
    pub rollouts: Vec<GroupRollout>,
    pub mean_reward: f64,
    pub mean_abs_gap: f64,
}

/// Stateful GRPO loop; [`train`] drives it to completion.
#[derive(Debug, Clone)]
pub struct Trainer {
    policy: ToyPolicy,
    targets: Vec<f64>,
    kind: RewardKind,
    config: TrainerConfig,
    step: usize,
}

impl Trainer {
    pub fn new(
        targets: &[QuestionTarget],
        kind: RewardKind,
        config: TrainerConfig,
    ) -> Result<Self, TrainingError> {
        config.validate()?;
        if targets.is_empty() {
            return Err(TrainingError::InvalidConfig("no questions to train on".into()));
        }
        if let Some(t) = targets
            .iter()
            .find(|t| !t.target.is_finite() || !(0.0..=1.0).contains(&t.target))
        {
            return Err(TrainingError::InvalidConfig(format!(
                "target for {:?} is outside [0, 1]",
                t.id
            )));
        }
        let policy = ToyPolicy::new(
            targets.iter().map(|t| t.id.clone()).collect(),
            uniform_grid(config.grid_levels),
        )?;
        Ok(Self {
            policy,
            targets: targets.iter().map(|t| t.target).collect(),
            kind,
            config,
            step: 0,
        })
    }

    pub fn policy(&self) -> &ToyPolicy {
        &self.policy
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn mean_abs_gap(&self) -> f64 {
        let t = self.config.sampling_temperature;
        let n = self.targets.len();
        (0..n)
            .map(|q| (self.policy.expected_uncertainty(q, t) - self.targets[q]).abs())
            .sum::<f64>()
            / n as f64
    }

    fn draw_batch(&self) -> Vec<usize> {
        let n = self.targets.len();
        let b = self.config.batch_size;
        let mut rng = rng_for(mix(mix(self.config.seed, self.step as u64), u64::MAX));
        if n >= b {
            let mut idx = sample_indices(&mut rng, n, b).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..b).map(|_| rng.random_range(0..n)).collect()
        }
    }

    pub fn step(&mut self) -> Result<StepOutcome, TrainingError> {
        let cfg = self.config;
        let batch = self.draw_batch();
        let step_seed = mix(cfg.seed, self.step as u64);

        let mut rollouts = Vec::with_capacity(batch.len());
        for (slot, &q) in batch.iter().enumerate() {
            // independent stream per (step, slot)
            let mut rng = rng_for(mix(step_seed, slot as u64));
            let id = &self.policy.question_ids[q];
            let mut r = sample_group(
                &self.policy,
                id,
                cfg.group_size,
                cfg.sampling_temperature,
                &mut rng,
            )?;
            score_group(&mut r, self.kind, self.targets[q], cfg.std_guard_eps);
            rollouts.push(r);
        }

        let total: f64 = rollouts
            .iter()
            .flat_map(|r| r.rewards.iter().map(|v| v.value))
            .sum();
        let mean_reward = total / (rollouts.len() * cfg.group_size) as f64;

        for _ in 0..cfg.update_epochs {
            policy_update(&mut self.policy, &rollouts, &cfg, self.step)?;
        }
        self.step += 1;

        Ok(StepOutcome {
            step: self.step,
            rollouts,
            mean_reward,
            mean_abs_gap: self.mean_abs_gap(),
        })
    }

    pub fn outcomes(&self) -> Vec<QuestionOutcome> {
        let t = self.config.sampling_temperature;
        (0..self.targets.len())
            .map(|q| {
                let expected_u = self.policy.expected_uncertainty(q, t);
                QuestionOutcome {
                    id: self.policy.question_ids[q].clone(),
                    target: self.targets[q],
                    expected_u,
                    abs_gap: (expected_u - self.targets[q]).abs(),
                    expected_reward: self.policy.expected_reward(q, t, self.kind, self.targets[q]),
                }
            })
            .collect()
    }

    pub fn into_policy(self) -> ToyPolicy {
        self.policy
    }
}

/// Runs the full GRPO loop; deterministic given `config.seed`.
pub fn train(
    targets: &[QuestionTarget],
    kind: RewardKind,
    config: &TrainerConfig,
) -> Result<(ToyPolicy, TrainingReport), TrainingError> {
    let started = Instant::now();
    let mut trainer = Trainer::new(targets, kind, *config)?;
    let mut rewards = Vec::with_capacity(config.steps);
    let mut gaps = Vec::with_capacity(config.steps);
    let mut guarded = 0;
    let mut failures = 0;
    for _ in 0..config.steps {
        let out = trainer.step()?;
        rewards.push(out.mean_reward);
        gaps.push(out.mean_abs_gap);
        guarded += out.rollouts.iter().filter(|r| r.guarded).count();
        failures += out
            .rollouts
            .iter()
            .flat_map(|r| &r.rewards)
            .filter(|r| r.format_failure)
            .count();
    }
    let questions = trainer.outcomes();
    let n = questions.len() as f64;
    let report = TrainingReport {
        reward_kind: kind,
        config: *config,
        advantage_std: "population".into(),
        mean_reward_curve: rewards,
        mean_abs_gap_curve: gaps,
        final_mean_abs_gap: questions.iter().map(|q| q.abs_gap).sum::<f64>() / n,
        final_expected_reward: questions.iter().map(|q| q.expected_reward).sum::<f64>() / n,
        questions,
        guarded_groups: guarded,
        format_failures: failures,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((trainer.into_policy(), report))
}
