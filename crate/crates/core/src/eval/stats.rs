//! Friedman test with the Iman–Davenport refinement and the Nemenyi posthoc.
//!
//! Blocks are rows (noise settings), treatments are columns (schemes). Rank 1
//! goes to the highest score in a block; ties share the average rank.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, FisherSnedecor, Normal};

use crate::{Error, Result};

/// Pairs with a Nemenyi p-value below this level are flagged.
pub const SIGNIFICANCE_LEVEL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    /// Tie-corrected chi-square statistic with `k − 1` degrees of freedom.
    pub statistic: f64,
    pub p_value: f64,
    pub iman_davenport_f: f64,
    pub iman_davenport_p: f64,
    pub mean_ranks: Vec<f64>,
    pub n_blocks: usize,
    pub k_treatments: usize,
}

/// Within-block ranks, 1 = best (largest), average ranks on ties.
pub fn rank_blocks(scores: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = scores.first().map_or(0, Vec::len);
    scores
        .iter()
        .enumerate()
        .map(|(b, row)| {
            if row.len() != k {
                return Err(Error::Contract(format!("block {b} has {} scores, expected {k}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite score in block {b}")));
            }
            let mut idx: Vec<usize> = (0..k).collect();
            idx.sort_by(|&i, &j| row[j].total_cmp(&row[i]));
            let mut ranks = vec![0.0; k];
            let mut start = 0;
            while start < k {
                let mut end = start + 1;
                while end < k && row[idx[end]] == row[idx[start]] {
                    end += 1;
                }
                let avg = (start + 1 + end) as f64 / 2.0;
                for &i in &idx[start..end] {
                    ranks[i] = avg;
                }
                start = end;
            }
            Ok(ranks)
        })
        .collect()
}

/// Friedman chi-square test over a `blocks × treatments` score matrix.
pub fn friedman_test(scores: &[Vec<f64>]) -> Result<FriedmanResult> {
    let n = scores.len();
    let k = scores.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(Error::Config(format!(
            "Friedman test needs >= 2 blocks and >= 2 treatments, got {n}x{k}"
        )));
    }
    let ranks = rank_blocks(scores)?;
    let (nf, kf) = (n as f64, k as f64);
    let mean_ranks: Vec<f64> = (0..k)
        .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();

    let mut tie_sum = 0.0;
    for row in scores {
        let mut sorted = row.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < k {
            let mut j = i + 1;
            while j < k && sorted[j] == sorted[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            tie_sum += t * t * t - t;
            i = j;
        }
    }
    let correction = 1.0 - tie_sum / (nf * kf * (kf * kf - 1.0));
    let chi_sq = ChiSquared::new(kf - 1.0).map_err(|e| Error::Numeric(e.to_string()))?;
    if correction <= 1e-12 {
        return Ok(FriedmanResult {
            statistic: 0.0,
            p_value: 1.0,
            iman_davenport_f: 0.0,
            iman_davenport_p: 1.0,
            mean_ranks,
            n_blocks: n,
            k_treatments: k,
        });
    }
    let ssr: f64 = mean_ranks.iter().map(|r| r * r).sum();
    let raw = 12.0 * nf / (kf * (kf + 1.0)) * ssr - 3.0 * nf * (kf + 1.0);
    let statistic = (raw / correction).max(0.0);
    let p_value = chi_sq.sf(statistic).clamp(0.0, 1.0);

    let (d1, d2) = (kf - 1.0, (kf - 1.0) * (nf - 1.0));
    let denom = nf * (kf - 1.0) - statistic;
    let (iman_davenport_f, iman_davenport_p) = if denom <= 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = (nf - 1.0) * statistic / denom;
        let dist = FisherSnedecor::new(d1, d2).map_err(|e| Error::Numeric(e.to_string()))?;
        (f, dist.sf(f).clamp(0.0, 1.0))
    };
    Ok(FriedmanResult {
        statistic,
        p_value,
        iman_davenport_f,
        iman_davenport_p,
        mean_ranks,
        n_blocks: n,
        k_treatments: k,
    })
}

/// CDF of the studentized range for `k` groups and infinite degrees of freedom:
/// `k ∫ φ(z) [Φ(z) − Φ(z−q)]^(k−1) dz`, by composite Simpson on `[−10, 10+q]`.
pub fn studentized_range_cdf(q: f64, k: usize) -> f64 {
    if q <= 0.0 || k < 2 {
        return 0.0;
    }
    let normal = Normal::standard();
    let (a, b) = (-10.0, 10.0 + q);
    let steps = 4000usize;
    let h = (b - a) / steps as f64;
    let f = |z: f64| {
        let inner = normal.cdf(z) - normal.cdf(z - q);
        normal.pdf(z) * inner.max(0.0).powi(k as i32 - 1)
    };
    let mut sum = f(a) + f(b);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    (k as f64 * sum * h / 3.0).clamp(0.0, 1.0)
}

/// Pairwise Nemenyi p-values from Friedman mean ranks.
///
/// `q = |R̄ᵢ − R̄ⱼ| / √(k(k+1)/(6N))` and `p = 1 − F_SR(q·√2; k, ∞)`.
/// The result is symmetric with a unit diagonal.
pub fn nemenyi_posthoc(mean_ranks: &[f64], n_blocks: usize) -> Result<Vec<Vec<f64>>> {
    let k = mean_ranks.len();
    if k < 2 || n_blocks < 1 {
        return Err(Error::Config("Nemenyi test needs >= 2 treatments and >= 1 block".into()));
    }
    let se = (k as f64 * (k as f64 + 1.0) / (6.0 * n_blocks as f64)).sqrt();
    let mut p = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let q = (mean_ranks[i] - mean_ranks[j]).abs() / se;
            let v = (1.0 - studentized_range_cdf(q * std::f64::consts::SQRT_2, k)).clamp(0.0, 1.0);
            p[i][j] = v;
            p[j][i] = v;
        }
    }
    Ok(p)
}

/// Friedman plus Nemenyi for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestReport {
    pub dataset: String,
    pub metric: String,
    pub schemes: Vec<String>,
    pub n_blocks: usize,
    pub k_treatments: usize,
    pub friedman_statistic: f64,
    pub friedman_p: f64,
    pub iman_davenport_f: f64,
    pub iman_davenport_p: f64,
    pub mean_ranks: Vec<f64>,
    pub pairwise: Vec<Vec<f64>>,
    /// Scheme pairs with `p < SIGNIFICANCE_LEVEL`.
    pub significant_pairs: Vec<(String, String, f64)>,
}

impl StatTestReport {
    pub fn compute(dataset: &str, metric: &str, schemes: &[String], scores: &[Vec<f64>]) -> Result<Self> {
        if schemes.len() < 2 {
            return Err(Error::Config(format!(
                "need >= 2 treatments for dataset {dataset}, found {}",
                schemes.len()
            )));
        }
        let fr = friedman_test(scores)?;
        if fr.k_treatments != schemes.len() {
            return Err(Error::Contract("scheme names do not match score columns".into()));
        }
        let pairwise = nemenyi_posthoc(&fr.mean_ranks, fr.n_blocks)?;
        let mut significant_pairs = Vec::new();
        for i in 0..schemes.len() {
            for j in i + 1..schemes.len() {
                if pairwise[i][j] < SIGNIFICANCE_LEVEL {
                    significant_pairs.push((schemes[i].clone(), schemes[j].clone(), pairwise[i][j]));
                }
            }
        }
        Ok(Self {
            dataset: dataset.to_owned(),
            metric: metric.to_owned(),
            schemes: schemes.to_vec(),
            n_blocks: fr.n_blocks,
            k_treatments: fr.k_treatments,
            friedman_statistic: fr.statistic,
            friedman_p: fr.p_value,
            iman_davenport_f: fr.iman_davenport_f,
            iman_davenport_p: fr.iman_davenport_p,
            mean_ranks: fr.mean_ranks,
            pairwise,
            significant_pairs,
        })
    }

    pub fn p_value(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.schemes.iter().position(|s| s == a)?;
        let j = self.schemes.iter().position(|s| s == b)?;
        Some(self.pairwise[i][j])
    }
}
