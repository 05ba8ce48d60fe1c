//! Platt scaling: `u_cal = sigmoid(A * s + B)` fitted by damped Newton on the
//! binary negative log-likelihood, where `z = 1` marks an incorrect answer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_FIT_POINTS: usize = 10;
const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("inseparable data: calibration labels contain a single class")]
    InseparableData,

    #[error("need at least {required} calibration points, got {got}")]
    TooFewPoints { got: usize, required: usize },

    #[error("invalid calibration input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub score: f64,
    /// 1 when the answer was incorrect.
    pub incorrect: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationDataset {
    points: Vec<CalibrationPoint>,
}

impl CalibrationDataset {
    pub fn new(points: Vec<CalibrationPoint>) -> Result<Self, CalibrationError> {
        if let Some(p) = points
            .iter()
            .find(|p| !p.score.is_finite() || p.score < 0.0)
        {
            return Err(CalibrationError::InvalidInput(format!(
                "scores must be finite and non-negative, got {}",
                p.score
            )));
        }
        Ok(Self { points })
    }

    pub fn from_pairs(scores: &[f64], incorrect: &[bool]) -> Result<Self, CalibrationError> {
        if scores.len() != incorrect.len() {
            return Err(CalibrationError::InvalidInput(format!(
                "{} scores but {} labels",
                scores.len(),
                incorrect.len()
            )));
        }
        Self::new(
            scores
                .iter()
                .zip(incorrect)
                .map(|(&score, &incorrect)| CalibrationPoint { score, incorrect })
                .collect(),
        )
    }

    pub fn points(&self) -> &[CalibrationPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let n1 = self.points.iter().filter(|p| p.incorrect).count();
        (self.points.len() - n1, n1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Platt's smoothed targets `(N+ + 1) / (N+ + 2)` and `1 / (N- + 2)`.
    pub label_smoothing: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            label_smoothing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub iterations: usize,
    pub final_nll: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    #[serde(rename = "A")]
    pub slope_a: f64,
    #[serde(rename = "B")]
    pub intercept_b: f64,
    pub fit_meta: Option<FitMeta>,
}

impl CalibrationModel {
    pub fn new(slope_a: f64, intercept_b: f64) -> Self {
        Self {
            slope_a,
            intercept_b,
            fit_meta: None,
        }
    }

    pub fn apply(&self, score: f64) -> CalibratedTarget {
        apply(self, score)
    }
}

/// Calibrated probability of an incorrect answer, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CalibratedTarget(f64);

impl CalibratedTarget {
    pub fn new(value: f64) -> Option<Self> {
        (value > 0.0 && value < 1.0).then_some(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Logistic function without overflow for any finite argument.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const JUST_BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

pub fn apply(model: &CalibrationModel, score: f64) -> CalibratedTarget {
    let p = sigmoid(model.slope_a * score + model.intercept_b);
    CalibratedTarget(p.clamp(f64::MIN_POSITIVE, JUST_BELOW_ONE))
}

fn clamped_logs(x: f64) -> (f64, f64) {
    let p = sigmoid(x).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let q = sigmoid(-x).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    (p.ln(), q.ln())
}

// NLL against soft targets t in [0, 1].
fn objective(a: f64, b: f64, scores: &[f64], targets: &[f64]) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(&s, &t)| {
            let (lp, lq) = clamped_logs(a * s + b);
            -(t * lp + (1.0 - t) * lq)
        })
        .sum()
}

// Gradient and Hessian (dA, dB), [[hAA, hAB], [hAB, hBB]].
fn derivatives(a: f64, b: f64, scores: &[f64], targets: &[f64]) -> ([f64; 2], [f64; 3]) {
    let mut g = [0.0; 2];
    let mut h = [0.0; 3];
    for (&s, &t) in scores.iter().zip(targets) {
        let p = sigmoid(a * s + b);
        let r = p - t;
        g[0] += r * s;
        g[1] += r;
        let w = p * (1.0 - p);
        h[0] += w * s * s;
        h[1] += w * s;
        h[2] += w;
    }
    (g, h)
}

/// Summed binary NLL with probabilities clamped to `[1e-12, 1 - 1e-12]`.
pub fn nll(model: &CalibrationModel, data: &CalibrationDataset) -> f64 {
    data.points
        .iter()
        .map(|p| {
            let (lp, lq) = clamped_logs(model.slope_a * p.score + model.intercept_b);
            if p.incorrect {
                -lp
            } else {
                -lq
            }
        })
        .sum()
}

/// Analytic gradient `(dNLL/dA, dNLL/dB)` of [`nll`] (ignoring the clamp).
pub fn nll_gradient(model: &CalibrationModel, data: &CalibrationDataset) -> [f64; 2] {
    let (scores, targets) = split(data, false);
    derivatives(model.slope_a, model.intercept_b, &scores, &targets).0
}

fn split(data: &CalibrationDataset, smoothing: bool) -> (Vec<f64>, Vec<f64>) {
    let (n0, n1) = data.class_counts();
    let (hi, lo) = if smoothing {
        ((n1 as f64 + 1.0) / (n1 as f64 + 2.0), 1.0 / (n0 as f64 + 2.0))
    } else {
        (1.0, 0.0)
    };
    data.points
        .iter()
        .map(|p| (p.score, if p.incorrect { hi } else { lo }))
        .unzip()
}

pub fn fit_platt(
    data: &CalibrationDataset,
    config: &FitConfig,
) -> Result<CalibrationModel, CalibrationError> {
    if data.len() < MIN_FIT_POINTS {
        return Err(CalibrationError::TooFewPoints {
            got: data.len(),
            required: MIN_FIT_POINTS,
        });
    }
    let (n0, n1) = data.class_counts();
    if n0 == 0 || n1 == 0 {
        return Err(CalibrationError::InseparableData);
    }
    let (scores, targets) = split(data, config.label_smoothing);

    // best constant model
    let mut a = 0.0;
    let mut b = (n1 as f64 / n0 as f64).ln();
    let mut f = objective(a, b, &scores, &targets);
    let mut iterations = 0;
    let mut grad_norm;

    loop {
        let (g, h) = derivatives(a, b, &scores, &targets);
        grad_norm = g[0].hypot(g[1]);
        if grad_norm <= config.gradient_tolerance || iterations >= config.max_iterations {
            break;
        }
        iterations += 1;

        let det = h[0] * h[2] - h[1] * h[1];
        let scale = (h[0] * h[2]).max(f64::MIN_POSITIVE);
        let direction = if det > 1e-12 * scale {
            [-(h[2] * g[0] - h[1] * g[1]) / det, -(h[0] * g[1] - h[1] * g[0]) / det]
        } else {
            // singular Hessian: steepest descent scaled by the curvature trace
            let step = 1.0 / (h[0] + h[2]).max(1e-12);
            [-step * g[0], -step * g[1]]
        };

        let mut t = 1.0;
        let mut accepted = false;
        while t >= 1e-12 {
            let (na, nb) = (a + t * direction[0], b + t * direction[1]);
            let nf = objective(na, nb, &scores, &targets);
            if nf <= f {
                a = na;
                b = nb;
                f = nf;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let (g, _) = derivatives(a, b, &scores, &targets);
    grad_norm = grad_norm.min(g[0].hypot(g[1]));
    Ok(CalibrationModel {
        slope_a: a,
        intercept_b: b,
        fit_meta: Some(FitMeta {
            iterations,
            final_nll: f,
            gradient_norm: grad_norm,
            converged: grad_norm <= config.gradient_tolerance,
        }),
    })
}

/// Draws `s ~ U[0, 1]` and `z ~ Bernoulli(sigmoid(a s + b))`.
pub fn synthetic_logistic(n: usize, a: f64, b: f64, seed: u64) -> CalibrationDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let score: f64 = rng.random();
            let p = sigmoid(a * score + b);
            CalibrationPoint {
                score,
                incorrect: rng.random::<f64>() < p,
            }
        })
        .collect();
    CalibrationDataset { points }
}
