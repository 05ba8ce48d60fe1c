//! Reference implementations used as test oracles. Each one is written
//! independently of the library code it checks.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;

/// Eigenvalues of a symmetric matrix via nalgebra, sorted descending.
pub fn eigenvalues_oracle(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let mut v: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// Random symmetric PSD matrix `B B^T` with `B` of shape n x rank.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, rank: usize) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..rank).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..rank).map(|k| b[i][k] * b[j][k]).sum())
                .collect()
        })
        .collect()
}

/// AUROC by comparing every (positive, negative) pair; ties count 1/2.
pub fn auroc_pairwise(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, &pi) in positive.iter().enumerate() {
        if !pi {
            continue;
        }
        for (j, &pj) in positive.iter().enumerate() {
            if pj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Rank of each value by counting: 1 + #smaller + (#equal others) / 2.
pub fn explicit_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let smaller = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64 - 1.0;
            1.0 + smaller + equal / 2.0
        })
        .collect()
}

pub fn pearson_textbook(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va.sqrt() * vb.sqrt()))
}

pub fn spearman_oracle(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson_textbook(&explicit_ranks(a), &explicit_ranks(b))
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn entropy_of(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Random quantized values in [0, 1]; `levels` small forces ties.
pub fn random_unit_values<R: Rng>(rng: &mut R, n: usize, levels: u32) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(0..=levels) as f64 / levels as f64)
        .collect()
}
