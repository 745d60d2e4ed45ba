//! Two-Gaussian synthetic binary data (SD100 / SD300 style).

use ndarray::Array2;
use rand_distr::{Bernoulli, Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{Label, LabeledDataset};
use crate::rng::{rng_from_seed, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m_train: usize,
    pub m_test: usize,
    /// P(Y = +1).
    pub bern_p_label: f64,
    /// Probability that a coordinate of μ₋ copies μ₊ instead of negating it.
    pub bern_p_sign: f64,
    /// μ₊ coordinates are drawn from Unif(−mu_range, mu_range).
    pub mu_range: f64,
    /// Shared diagonal variance of both class-conditional Gaussians.
    pub variance: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 6000 train / 750 test points in `n` dimensions with the standard parameters.
    pub fn standard(n: usize, seed: u64) -> Self {
        Self {
            n,
            m_train: 6000,
            m_test: 750,
            bern_p_label: 0.5,
            bern_p_sign: 0.4,
            mu_range: 2.0,
            variance: 8.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m_train == 0 || self.m_test == 0 {
            return Err(Error::Config("synthetic n and counts must be > 0".into()));
        }
        if !(self.variance > 0.0) {
            return Err(Error::Config("synthetic variance must be > 0".into()));
        }
        for (name, p) in [("bern_p_label", self.bern_p_label), ("bern_p_sign", self.bern_p_sign)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0,1], got {p}")));
            }
        }
        if !(self.mu_range > 0.0) {
            return Err(Error::Config("mu_range must be > 0".into()));
        }
        Ok(())
    }
}

/// Class means of a synthetic problem.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPair {
    pub mu_pos: Vec<f64>,
    pub mu_neg: Vec<f64>,
    pub variance: f64,
}

impl GaussianPair {
    /// Exact P(Y=+1 | x) for equal-variance isotropic Gaussians with prior `p_pos`.
    pub fn eta(&self, x: &[f64], p_pos: f64) -> f64 {
        let mut log_odds = (p_pos / (1.0 - p_pos)).ln();
        for ((&xi, &mp), &mn) in x.iter().zip(&self.mu_pos).zip(&self.mu_neg) {
            log_odds += ((xi - mn).powi(2) - (xi - mp).powi(2)) / (2.0 * self.variance);
        }
        crate::nn::sigmoid(log_odds)
    }
}

fn draw_means(spec: &SyntheticSpec, rng: &mut Rng) -> Result<GaussianPair> {
    let unif = Uniform::new(-spec.mu_range, spec.mu_range)
        .map_err(|e| Error::Config(format!("mu_range: {e}")))?;
    let keep = Bernoulli::new(spec.bern_p_sign).map_err(|e| Error::Config(e.to_string()))?;
    let mut mu_pos = Vec::with_capacity(spec.n);
    let mut mu_neg = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let m = unif.sample(rng);
        mu_pos.push(m);
        mu_neg.push(if keep.sample(rng) { m } else { -m });
    }
    Ok(GaussianPair {
        mu_pos,
        mu_neg,
        variance: spec.variance,
    })
}

fn draw_split(
    spec: &SyntheticSpec,
    means: &GaussianPair,
    m: usize,
    name: &str,
    rng: &mut Rng,
) -> Result<LabeledDataset> {
    let label_dist = Bernoulli::new(spec.bern_p_label).map_err(|e| Error::Config(e.to_string()))?;
    let sd = spec.variance.sqrt();
    let mut labels = Vec::with_capacity(m);
    let mut features = Array2::zeros((m, spec.n));
    for mut row in features.rows_mut() {
        let label = if label_dist.sample(rng) {
            Label::Positive
        } else {
            Label::Negative
        };
        let mu = if label.is_positive() {
            &means.mu_pos
        } else {
            &means.mu_neg
        };
        for (v, &c) in row.iter_mut().zip(mu) {
            let z: f64 = StandardNormal.sample(rng);
            *v = c + sd * z;
        }
        labels.push(label);
    }
    LabeledDataset::new(name, features, labels)
}

/// The class means `generate_synthetic` would draw for `spec`.
pub fn synthetic_means(spec: &SyntheticSpec) -> Result<GaussianPair> {
    spec.validate()?;
    draw_means(spec, &mut rng_from_seed(spec.seed))
}

/// Draws one pair of class means, then the train and test sets from them.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test, _) = generate_synthetic_with_means(spec)?;
    Ok((train, test))
}

/// Like [`generate_synthetic`] but also returns the class means, which give
/// the exact in-class probability η(x).
pub fn generate_synthetic_with_means(
    spec: &SyntheticSpec,
) -> Result<(LabeledDataset, LabeledDataset, GaussianPair)> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let means = draw_means(spec, &mut rng)?;
    let name = format!("SD{}", spec.n);
    let train = draw_split(spec, &means, spec.m_train, &name, &mut rng)?;
    let test = draw_split(spec, &means, spec.m_test, &name, &mut rng)?;
    Ok((train, test, means))
}
