//! Class-conditional label noise and the appended scaled-label representation.

use ndarray::{s, Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Label, LabeledDataset};
use crate::nn::sigmoid;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Flip probabilities of the CCN model.
///
/// `rho_plus = P(ỹ=−1 | y=+1)`, `rho_minus = P(ỹ=+1 | y=−1)`. Equal rates give
/// symmetric label noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRates {
    pub rho_plus: f64,
    pub rho_minus: f64,
}

impl NoiseRates {
    pub fn new(rho_plus: f64, rho_minus: f64) -> Result<Self> {
        let r = Self { rho_plus, rho_minus };
        r.validate()?;
        Ok(r)
    }

    pub fn symmetric(rho: f64) -> Result<Self> {
        Self::new(rho, rho)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rho_plus == self.rho_minus
    }

    /// Rates must lie in `[0,1)`. Rates above 0.5 are accepted with a warning.
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("rho_plus", self.rho_plus), ("rho_minus", self.rho_minus)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must lie in [0,1), got {r}")));
            }
            if r > 0.5 {
                log::warn!("{name} = {r} exceeds 0.5; the noisy class semantics invert");
            }
        }
        Ok(())
    }
}

/// Flips each `+1` label with probability `rho_plus` and each `−1` label with
/// probability `rho_minus`. Features are untouched.
pub fn inject_ccn(ds: &LabeledDataset, rates: NoiseRates, seed: u64) -> Result<LabeledDataset> {
    rates.validate()?;
    let mut rng = rng_from_seed(seed);
    let labels = ds
        .labels()
        .iter()
        .map(|&l| {
            let p = if l.is_positive() { rates.rho_plus } else { rates.rho_minus };
            // one uniform per row, so the flip pattern depends only on (seed, row)
            let u: f64 = rng.random();
            if u < p {
                l.flipped()
            } else {
                l
            }
        })
        .collect();
    ds.with_labels(labels)
}

/// `η̃ = (1 − ρ₊ − ρ₋)·η + ρ₋`.
pub fn corrupted_eta(eta: f64, rates: NoiseRates) -> f64 {
    (1.0 - rates.rho_plus - rates.rho_minus) * eta + rates.rho_minus
}

/// Number of appended label coordinates `k` and their scale step `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppendConfig {
    pub k: usize,
    pub l: f64,
}

impl Default for AppendConfig {
    fn default() -> Self {
        Self { k: 5, l: 5.0 }
    }
}

impl AppendConfig {
    pub fn new(k: usize, l: f64) -> Result<Self> {
        let c = Self { k, l };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 3 || self.k % 2 == 0 {
            return Err(Error::Config(format!("k must be odd and >= 3, got {}", self.k)));
        }
        if !(self.l > 1.0) || !self.l.is_finite() {
            return Err(Error::Config(format!("l must be > 1, got {}", self.l)));
        }
        Ok(())
    }

    /// Coefficients `1, l, 2l, …, (k−1)l` of the appended block.
    pub fn coefficients(&self) -> Vec<f64> {
        std::iter::once(1.0)
            .chain((1..self.k).map(|j| j as f64 * self.l))
            .collect()
    }
}

/// `x` followed by `y, l·y, 2l·y, …, (k−1)l·y`.
pub fn append_representation(x: &[f64], y: f64, cfg: &AppendConfig) -> Result<Vec<f64>> {
    let label = Label::from_sign(sign_as_int(y)?)?;
    let mut out = Vec::with_capacity(x.len() + cfg.k);
    out.extend_from_slice(x);
    out.extend(cfg.coefficients().into_iter().map(|c| c * label.sign()));
    Ok(out)
}

fn sign_as_int(y: f64) -> Result<i64> {
    if y == 1.0 {
        Ok(1)
    } else if y == -1.0 {
        Ok(-1)
    } else {
        Err(Error::Contract(format!("label must be ±1, got {y}")))
    }
}

/// Appends the label block to every row of `ds`.
///
/// With `k = 1` semantics (a single appended `y`) pass `cfg = None`.
pub fn append_dataset(ds: &LabeledDataset, cfg: Option<&AppendConfig>) -> Array2<f64> {
    let coeffs = cfg.map_or_else(|| vec![1.0], AppendConfig::coefficients);
    let n = ds.n_features();
    let mut out = Array2::zeros((ds.len(), n + coeffs.len()));
    out.slice_mut(s![.., ..n]).assign(ds.features());
    for (mut row, l) in out.rows_mut().into_iter().zip(ds.labels()) {
        for (j, c) in coeffs.iter().enumerate() {
            row[n + j] = c * l.sign();
        }
    }
    out
}

/// Majority vote over the pre-sigmoid tail.
///
/// Returns `+1` iff at least `(k+1)/2` coordinates have sigmoid strictly above
/// 0.5, together with `p_pos`, the sigmoid of the last coordinate.
pub fn decode_label_majority(tail: &[f64], cfg: &AppendConfig) -> Result<(Label, f64)> {
    if tail.len() != cfg.k {
        return Err(Error::Contract(format!(
            "tail has {} values, expected k = {}",
            tail.len(),
            cfg.k
        )));
    }
    let votes = tail.iter().filter(|&&v| sigmoid(v) > 0.5).count();
    let label = if votes >= cfg.k.div_ceil(2) {
        Label::Positive
    } else {
        Label::Negative
    };
    Ok((label, sigmoid(tail[cfg.k - 1])))
}

/// `+1` iff `sigmoid(last) > 0.5`.
pub fn decode_label_single(last: f64) -> Label {
    if sigmoid(last) > 0.5 {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// Splits generator output rows into features and decoded labels.
///
/// `cfg = None` decodes a single appended coordinate.
pub fn decode_dataset(
    name: &str,
    rows: ArrayView2<'_, f64>,
    cfg: Option<&AppendConfig>,
) -> Result<LabeledDataset> {
    let tail = cfg.map_or(1, |c| c.k);
    if rows.ncols() <= tail {
        return Err(Error::Contract(format!(
            "rows have {} columns, need more than the {tail} label columns",
            rows.ncols()
        )));
    }
    let n = rows.ncols() - tail;
    let labels = rows
        .rows()
        .into_iter()
        .map(|r| {
            let t = r.slice(s![n..]);
            match cfg {
                Some(c) => decode_label_majority(t.as_slice().unwrap_or(&t.to_vec()), c).map(|d| d.0),
                None => Ok(decode_label_single(t[0])),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(name, rows.slice(s![.., ..n]).to_owned(), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn balanced(m: usize) -> LabeledDataset {
        let labels = (0..m)
            .map(|i| if i % 2 == 0 { Label::Positive } else { Label::Negative })
            .collect();
        LabeledDataset::new("b", Array2::from_shape_fn((m, 2), |(i, j)| (i + j) as f64), labels).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let ds = balanced(100);
        assert_eq!(inject_ccn(&ds, NoiseRates::new(0.0, 0.0).unwrap(), 1).unwrap(), ds);
    }

    #[test]
    fn near_one_noise_flips_nearly_all() {
        let ds = balanced(1000);
        let out = inject_ccn(&ds, NoiseRates::new(0.999, 0.999).unwrap(), 2).unwrap();
        let flipped = ds.labels().iter().zip(out.labels()).filter(|(a, b)| a != b).count();
        assert!(flipped >= 990, "{flipped}");
        assert_eq!(out.features(), ds.features());
    }

    #[test]
    fn flip_frequencies_within_three_sigma() {
        let ds = balanced(10_000);
        let rates = NoiseRates::new(0.4, 0.49).unwrap();
        let out = inject_ccn(&ds, rates, 3).unwrap();
        for (class, rho) in [(Label::Positive, 0.4), (Label::Negative, 0.49)] {
            let (n, f) = ds.labels().iter().zip(out.labels()).fold((0, 0), |(n, f), (a, b)| {
                if *a == class {
                    (n + 1, f + usize::from(a != b))
                } else {
                    (n, f)
                }
            });
            let sd = (n as f64 * rho * (1.0 - rho)).sqrt();
            assert!((f as f64 - n as f64 * rho).abs() < 3.0 * sd, "{class}: {f}/{n}");
        }
    }

    #[test]
    fn different_seeds_give_different_masks() {
        let ds = balanced(200);
        let r = NoiseRates::symmetric(0.3).unwrap();
        assert_ne!(inject_ccn(&ds, r, 1).unwrap(), inject_ccn(&ds, r, 2).unwrap());
        assert_eq!(inject_ccn(&ds, r, 1).unwrap(), inject_ccn(&ds, r, 1).unwrap());
    }

    #[test]
    fn rate_validation() {
        assert!(NoiseRates::new(1.0, 0.0).is_err());
        assert!(NoiseRates::new(-0.1, 0.0).is_err());
        assert!(NoiseRates::new(0.51, 0.2).is_ok());
    }

    #[test]
    fn corrupted_eta_examples() {
        let r = NoiseRates::new(0.4, 0.2).unwrap();
        assert!((corrupted_eta(0.3, r) - 0.32).abs() < 1e-15);
        assert_eq!(corrupted_eta(0.37, NoiseRates::new(0.0, 0.0).unwrap()), 0.37);
        assert!((corrupted_eta(0.5, NoiseRates::symmetric(0.3).unwrap()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn append_examples() {
        let cfg = AppendConfig::new(3, 5.0).unwrap();
        assert_eq!(append_representation(&[0.5, 0.25], -1.0, &cfg).unwrap(), vec![0.5, 0.25, -1.0, -5.0, -10.0]);
        assert_eq!(append_representation(&[], 1.0, &cfg).unwrap(), vec![1.0, 5.0, 10.0]);
        assert!(append_representation(&[1.0], 0.0, &cfg).is_err());
    }

    #[test]
    fn append_config_validation() {
        assert!(AppendConfig::new(4, 5.0).is_err());
        assert!(AppendConfig::new(1, 5.0).is_err());
        assert!(AppendConfig::new(3, 1.0).is_err());
        assert_eq!(AppendConfig::default().coefficients(), vec![1.0, 5.0, 10.0, 15.0, 20.0]);
    }

    #[test]
    fn append_dataset_matches_rowwise() {
        let ds = balanced(4);
        let cfg = AppendConfig::default();
        let m = append_dataset(&ds, Some(&cfg));
        for (i, row) in m.rows().into_iter().enumerate() {
            let x: Vec<f64> = ds.features().row(i).to_vec();
            let want = append_representation(&x, ds.labels()[i].sign(), &cfg).unwrap();
            assert_eq!(row.to_vec(), want);
        }
        assert_eq!(append_dataset(&ds, None).ncols(), 3);
    }

    #[test]
    fn majority_examples() {
        let cfg = AppendConfig::default();
        let (y, _) = decode_label_majority(&[1.2, 2.0, -0.5, 0.9, 0.3], &cfg).unwrap();
        assert_eq!(y, Label::Positive);
        let (y, p) = decode_label_majority(&[-1.0; 5], &cfg).unwrap();
        assert_eq!(y, Label::Negative);
        assert!(p < 0.5);
        assert_eq!(decode_label_majority(&[0.0; 5], &cfg).unwrap().0, Label::Negative);
        assert!(decode_label_majority(&[0.0; 3], &cfg).is_err());
    }

    #[test]
    fn single_examples() {
        assert_eq!(decode_label_single(3.0), Label::Positive);
        assert_eq!(decode_label_single(-3.0), Label::Negative);
        assert_eq!(decode_label_single(0.0), Label::Negative);
    }

    #[test]
    fn decode_dataset_roundtrip() {
        let ds = balanced(6);
        let cfg = AppendConfig::default();
        let back = decode_dataset("b", append_dataset(&ds, Some(&cfg)).view(), Some(&cfg)).unwrap();
        assert_eq!(back, ds);
        let back = decode_dataset("b", append_dataset(&ds, None).view(), None).unwrap();
        assert_eq!(back, ds);
    }

    proptest! {
        #[test]
        fn append_decode_roundtrip(k_half in 1usize..6, l in 1.01f64..20.0, pos in any::<bool>()) {
            let cfg = AppendConfig::new(2 * k_half + 1, l).unwrap();
            let y = if pos { 1.0 } else { -1.0 };
            let v = append_representation(&[0.3], y, &cfg).unwrap();
            prop_assert!(v[1..].iter().all(|c| c.signum() == y));
            let (got, _) = decode_label_majority(&v[1..], &cfg).unwrap();
            prop_assert_eq!(got.sign(), y);
        }

        #[test]
        fn majority_is_permutation_invariant(
            tail in proptest::collection::vec(-5.0f64..5.0, 5),
            perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
        ) {
            let cfg = AppendConfig::default();
            let permuted: Vec<f64> = perm.iter().map(|&i| tail[i]).collect();
            prop_assert_eq!(
                decode_label_majority(&tail, &cfg).unwrap().0,
                decode_label_majority(&permuted, &cfg).unwrap().0
            );
        }

        #[test]
        fn corrupted_eta_stays_in_unit_interval(eta in 0.0f64..=1.0, a in 0.0f64..0.999, b in 0.0f64..0.999) {
            let r = NoiseRates { rho_plus: a, rho_minus: b };
            let e = corrupted_eta(eta, r);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&e));
            if a == b {
                prop_assert!((e - ((1.0 - 2.0 * a) * eta + a)).abs() < 1e-12);
            }
        }
    }
}
