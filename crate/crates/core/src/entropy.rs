//! Semantic dispersion scoring: kernel von Neumann entropy over the
//! embeddings of several sampled generations for one question.
//!
//! The pipeline is `build_kernel -> normalize_to_density -> spectrum ->
//! von_neumann_entropy`; [`score_sample_set`] chains all four.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::{symmetric_eigenvalues, JacobiConfig, SquareMatrix};

/// Eigenvalues below this are a broken kernel rather than rounding noise.
pub const NEGATIVE_EIGEN_ERROR: f64 = -1e-6;
/// Eigenvalues in `[NEGATIVE_EIGEN_WARN, 0)` are treated as rounding noise.
pub const NEGATIVE_EIGEN_WARN: f64 = -1e-8;

const SYMMETRY_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate embedding: row {row} has zero norm")]
    DegenerateEmbedding { row: usize },

    #[error("degenerate kernel: trace {trace} is not positive")]
    DegenerateKernel { trace: f64 },

    #[error("kernel is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("kernel is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),
}

/// N embedding vectors of a common dimension d, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    rows: Vec<Vec<f64>>,
}

impl EmbeddingSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, EntropyError> {
        let Some(first) = rows.first() else {
            return Err(EntropyError::InvalidInput("embedding set is empty".into()));
        };
        let d = first.len();
        if d == 0 {
            return Err(EntropyError::InvalidInput("embedding dimension is zero".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(EntropyError::InvalidInput(format!(
                    "row {i} has dimension {} but row 0 has {d}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(EntropyError::InvalidInput(format!(
                    "row {i} component {j} is not finite"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// Median pairwise Euclidean distance, falling back to 1.0 when that median is 0.
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelConfig {
    /// Shifted cosine similarity `(1 + cos) / 2` on unit-normalized rows.
    Linear,
    /// Gaussian kernel `exp(-|ei - ej|^2 / (2 b^2))`.
    Rbf { bandwidth: BandwidthRule },
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig::Rbf {
            bandwidth: BandwidthRule::MedianHeuristic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub entries: SquareMatrix,
    pub kind: KernelKind,
    /// Resolved bandwidth, rbf only.
    pub bandwidth: Option<f64>,
}

impl KernelMatrix {
    pub fn dim(&self) -> usize {
        self.entries.dim()
    }

    /// Wraps an arbitrary symmetric matrix, e.g. one computed elsewhere.
    pub fn from_matrix(entries: SquareMatrix, kind: KernelKind) -> Result<Self, EntropyError> {
        let asym = entries.max_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(EntropyError::NotSymmetric(asym));
        }
        Ok(Self {
            entries,
            kind,
            bandwidth: None,
        })
    }
}

/// Descending eigenvalues of a unit-trace kernel; non-negative and summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    /// Validates a probability vector sorted descending.
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Result<Self, EntropyError> {
        if eigenvalues.is_empty() {
            return Err(EntropyError::InvalidInput("spectrum is empty".into()));
        }
        if eigenvalues.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(EntropyError::InvalidInput(
                "spectrum values must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = eigenvalues.iter().sum();
        if (sum - 1.0).abs() > TRACE_TOL {
            return Err(EntropyError::InvalidInput(format!(
                "spectrum sums to {sum}, expected 1"
            )));
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { eigenvalues })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Von Neumann entropy in nats; bounded by `ln(dim)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EntropyScore {
    pub value: f64,
    pub dim: usize,
}

/// One question's sampled generations, already embedded.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub id: String,
    pub embeddings: EmbeddingSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOutcome {
    pub score: EntropyScore,
    /// Set when only one sample was available and the score is trivially 0.
    pub degenerate_sample: bool,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of all pairwise Euclidean distances (0 when there are no pairs).
pub fn median_pairwise_distance(embeddings: &EmbeddingSet) -> f64 {
    let rows = embeddings.rows();
    let mut dists = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            dists.push(squared_distance(&rows[i], &rows[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    }
}

pub fn build_kernel(
    embeddings: &EmbeddingSet,
    config: &KernelConfig,
) -> Result<KernelMatrix, EntropyError> {
    let rows = embeddings.rows();
    let n = rows.len();
    match *config {
        KernelConfig::Linear => {
            let mut unit = Vec::with_capacity(n);
            for (i, row) in rows.iter().enumerate() {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(EntropyError::DegenerateEmbedding { row: i });
                }
                unit.push(row.iter().map(|v| v / norm).collect::<Vec<_>>());
            }
            let mut entries = SquareMatrix::identity(n);
            for i in 0..n {
                for j in (i + 1)..n {
                    let cos: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
                    let v = 0.5 * (1.0 + cos.clamp(-1.0, 1.0));
                    entries.set(i, j, v);
                    entries.set(j, i, v);
                }
            }
            Ok(KernelMatrix {
                entries,
                kind: KernelKind::Linear,
                bandwidth: None,
            })
        }
        KernelConfig::Rbf { bandwidth } => {
            let b = match bandwidth {
                BandwidthRule::Fixed(b) => {
                    if !(b.is_finite() && b > 0.0) {
                        return Err(EntropyError::InvalidInput(format!(
                            "rbf bandwidth must be positive, got {b}"
                        )));
                    }
                    b
                }
                BandwidthRule::MedianHeuristic => {
                    let m = median_pairwise_distance(embeddings);
                    if m > 0.0 {
                        m
                    } else {
                        1.0
                    }
                }
            };
            let denom = 2.0 * b * b;
            let mut entries = SquareMatrix::identity(n);
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = (-squared_distance(&rows[i], &rows[j]) / denom).exp();
                    entries.set(i, j, v);
                    entries.set(j, i, v);
                }
            }
            Ok(KernelMatrix {
                entries,
                kind: KernelKind::Rbf,
                bandwidth: Some(b),
            })
        }
    }
}

/// Divides every entry by the trace.
pub fn normalize_to_density(kernel: &KernelMatrix) -> Result<KernelMatrix, EntropyError> {
    let trace = kernel.entries.trace();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(EntropyError::DegenerateKernel { trace });
    }
    Ok(KernelMatrix {
        entries: kernel.entries.scaled(1.0 / trace),
        kind: kernel.kind,
        bandwidth: kernel.bandwidth,
    })
}

pub fn spectrum(density: &KernelMatrix) -> Result<Spectrum, EntropyError> {
    let m = &density.entries;
    if m.dim() == 0 {
        return Err(EntropyError::InvalidInput("empty kernel".into()));
    }
    let asym = m.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(EntropyError::NotSymmetric(asym));
    }
    let trace = m.trace();
    if (trace - 1.0).abs() > TRACE_TOL {
        return Err(EntropyError::InvalidInput(format!(
            "density trace is {trace}, expected 1"
        )));
    }

    let eig = symmetric_eigenvalues(m, JacobiConfig::default());
    if !eig.converged {
        log::warn!("jacobi did not converge after {} sweeps", eig.sweeps);
    }
    let mut values = eig.values;
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < NEGATIVE_EIGEN_ERROR {
                return Err(EntropyError::NotPsd(*v));
            }
            if *v < NEGATIVE_EIGEN_WARN {
                log::warn!("clamping eigenvalue {v:e} to zero");
            }
            *v = 0.0;
        }
    }
    let sum: f64 = values.iter().sum();
    for v in values.iter_mut() {
        *v = (*v / sum).min(1.0);
    }
    Ok(Spectrum { eigenvalues: values })
}

/// `-sum(l * ln l)` with `0 ln 0 = 0`.
pub fn von_neumann_entropy(sp: &Spectrum) -> EntropyScore {
    let h: f64 = sp
        .eigenvalues
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.ln())
        .sum();
    EntropyScore {
        value: h.max(0.0),
        dim: sp.len(),
    }
}

pub fn score_embeddings(
    embeddings: &EmbeddingSet,
    config: &KernelConfig,
) -> Result<ScoreOutcome, EntropyError> {
    if embeddings.len() == 1 {
        return Ok(ScoreOutcome {
            score: EntropyScore { value: 0.0, dim: 1 },
            degenerate_sample: true,
        });
    }
    let kernel = build_kernel(embeddings, config)?;
    let density = normalize_to_density(&kernel)?;
    let sp = spectrum(&density)?;
    Ok(ScoreOutcome {
        score: von_neumann_entropy(&sp),
        degenerate_sample: false,
    })
}

pub fn score_sample_set(
    samples: &SampleSet,
    config: &KernelConfig,
) -> Result<ScoreOutcome, EntropyError> {
    let outcome = score_embeddings(&samples.embeddings, config)?;
    if outcome.degenerate_sample {
        log::warn!("record {}: single sample, entropy set to 0", samples.id);
    }
    Ok(outcome)
}
