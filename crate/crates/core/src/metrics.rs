//! Uncertainty-quality metrics: ECE with a reliability table, AUROC and
//! Spearman rank correlation. Ties use midranks throughout.
//!
//! Predictions `u` are probabilities of being wrong; labels are `true` for
//! incorrect answers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("auroc undefined: labels contain a single class")]
    UndefinedAuroc,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationBatch {
    predictions: Vec<f64>,
    labels: Vec<bool>,
    targets: Option<Vec<f64>>,
}

fn check_unit_interval(name: &str, values: &[f64]) -> Result<(), MetricsError> {
    match values
        .iter()
        .position(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
    {
        Some(i) => Err(MetricsError::InvalidInput(format!(
            "{name}[{i}] = {} is outside [0, 1]",
            values[i]
        ))),
        None => Ok(()),
    }
}

impl EvaluationBatch {
    pub fn new(
        predictions: Vec<f64>,
        labels: Vec<bool>,
        targets: Option<Vec<f64>>,
    ) -> Result<Self, MetricsError> {
        if predictions.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        if labels.len() != predictions.len() {
            return Err(MetricsError::InvalidInput(format!(
                "{} predictions but {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        check_unit_interval("predictions", &predictions)?;
        if let Some(t) = &targets {
            if t.len() != predictions.len() {
                return Err(MetricsError::InvalidInput(format!(
                    "{} predictions but {} targets",
                    predictions.len(),
                    t.len()
                )));
            }
            check_unit_interval("targets", t)?;
        }
        Ok(Self {
            predictions,
            labels,
            targets,
        })
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn targets(&self) -> Option<&[f64]> {
        self.targets.as_deref()
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub mean_u: Option<f64>,
    pub error_rate: Option<f64>,
}

/// Equal-width bin index on `[0, 1]`; the last bin is closed at 1.0.
pub fn bin_index(u: f64, num_bins: usize) -> usize {
    ((u * num_bins as f64).floor() as usize).min(num_bins - 1)
}

pub fn ece(
    batch: &EvaluationBatch,
    num_bins: usize,
) -> Result<(f64, Vec<ReliabilityBin>), MetricsError> {
    if num_bins == 0 {
        return Err(MetricsError::InvalidInput("num_bins must be >= 1".into()));
    }
    if batch.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sum_u = vec![0.0; num_bins];
    let mut sum_z = vec![0.0; num_bins];
    let mut count = vec![0usize; num_bins];
    for (&u, &z) in batch.predictions.iter().zip(&batch.labels) {
        let b = bin_index(u, num_bins);
        sum_u[b] += u;
        sum_z[b] += if z { 1.0 } else { 0.0 };
        count[b] += 1;
    }

    let n = batch.len() as f64;
    let mut total = 0.0;
    let mut table = Vec::with_capacity(num_bins);
    for b in 0..num_bins {
        let lo = b as f64 / num_bins as f64;
        let hi = (b + 1) as f64 / num_bins as f64;
        if count[b] == 0 {
            table.push(ReliabilityBin {
                bin_lo: lo,
                bin_hi: hi,
                count: 0,
                mean_u: None,
                error_rate: None,
            });
            continue;
        }
        let c = count[b] as f64;
        let mean_u = sum_u[b] / c;
        let rate = sum_z[b] / c;
        total += (c / n) * (mean_u - rate).abs();
        table.push(ReliabilityBin {
            bin_lo: lo,
            bin_hi: hi,
            count: count[b],
            mean_u: Some(mean_u),
            error_rate: Some(rate),
        });
    }
    Ok((total.clamp(0.0, 1.0), table))
}

/// Midranks (1-based), ties share the mean of the ranks they span.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Probability that a random incorrect example gets a higher `u` than a
/// random correct one, ties counted one half (Mann-Whitney form).
pub fn auroc(batch: &EvaluationBatch) -> Result<f64, MetricsError> {
    auroc_scores(&batch.predictions, &batch.labels)
}

pub fn auroc_scores(scores: &[f64], positive: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != positive.len() {
        return Err(MetricsError::InvalidInput("length mismatch".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::UndefinedAuroc);
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(positive)
        .filter(|(_, &p)| p)
        .map(|(r, _)| r)
        .sum();
    let u_stat = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u_stat / (n_pos as f64 * n_neg as f64))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::InvalidInput(format!(
            "lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(MetricsError::UndefinedCorrelation(
            "need at least two points".into(),
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MetricsError::InvalidInput("non-finite value".into()));
    }
    let constant = |s: &[f64]| s.iter().all(|v| *v == s[0]);
    if constant(a) || constant(b) {
        return Err(MetricsError::UndefinedCorrelation(
            "constant sequence".into(),
        ));
    }
    Ok(pearson(&midranks(a), &midranks(b)))
}

/// A metric that could be undefined for this batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl From<Result<f64, MetricsError>> for MetricValue {
    fn from(r: Result<f64, MetricsError>) -> Self {
        match r {
            Ok(v) => Self {
                value: Some(v),
                error: None,
            },
            Err(e) => Self {
                value: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub num_bins: usize,
    pub ece: f64,
    pub auroc: MetricValue,
    /// Present only when calibrated targets were supplied.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spearman: Option<MetricValue>,
    pub bins: Vec<ReliabilityBin>,
}

pub fn evaluate(batch: &EvaluationBatch, num_bins: usize) -> Result<MetricsReport, MetricsError> {
    let (ece_value, bins) = ece(batch, num_bins)?;
    Ok(MetricsReport {
        n: batch.len(),
        num_bins,
        ece: ece_value,
        auroc: {
            let mut m: MetricValue = auroc(batch).into();
            let p = batch.predictions();
            if m.value.is_some() && p.iter().all(|u| *u == p[0]) {
                m.error = Some("all predictions tie; AUROC carries no ranking information".into());
            }
            m
        },
        spearman: batch
            .targets()
            .map(|t| spearman(batch.predictions(), t).into()),
        bins,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

impl MetricsReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let metric = |m: &MetricValue| match (&m.value, &m.error) {
            (Some(v), _) => format!("{v:.4}"),
            (None, Some(e)) => format!("undefined ({e})"),
            (None, None) => "undefined".into(),
        };
        out.push_str(&format!("n         {}\n", self.n));
        out.push_str(&format!("ece       {:.4}\n", self.ece));
        out.push_str(&format!("auroc     {}\n", metric(&self.auroc)));
        if let Some(s) = &self.spearman {
            out.push_str(&format!("spearman  {}\n", metric(s)));
        }
        out.push_str("\nbin            count  mean_u  error_rate\n");
        for b in &self.bins {
            out.push_str(&format!(
                "[{:.2}, {:.2}{}  {:>5}  {:>6}  {:>10}\n",
                b.bin_lo,
                b.bin_hi,
                if b.bin_hi >= 1.0 { "]" } else { ")" },
                b.count,
                fmt_opt(b.mean_u),
                fmt_opt(b.error_rate),
            ));
        }
        out
    }

    /// Columns: bin_lo, bin_hi, count, mean_u, error_rate (empty cells for empty bins).
    pub fn reliability_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count,mean_u,error_rate\n");
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.bin_lo,
                b.bin_hi,
                b.count,
                cell(b.mean_u),
                cell(b.error_rate)
            ));
        }
        out
    }
}
