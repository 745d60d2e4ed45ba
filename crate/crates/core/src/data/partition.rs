//! Binary-pair construction, imbalanced subsampling and the four-way split.

use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{Label, LabeledDataset, RawDataset};
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result};

/// A digit pair with the positive/negative roles already resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryPair {
    pub positive: u8,
    pub negative: u8,
}

impl BinaryPair {
    /// `a` is positive and `b` negative, except that digit 0 is always negative.
    pub fn new(a: u8, b: u8) -> Result<Self> {
        if a == b {
            return Err(Error::Config(format!("binary pair needs two distinct classes, got {a}-{b}")));
        }
        Ok(if a == 0 {
            BinaryPair {
                positive: b,
                negative: a,
            }
        } else {
            BinaryPair {
                positive: a,
                negative: b,
            }
        })
    }
}

/// Keeps classes `a` and `b` of `raw` (original row order) and relabels them ±1.
pub fn make_binary_pair(raw: &RawDataset, a: u8, b: u8) -> Result<LabeledDataset> {
    let pair = BinaryPair::new(a, b)?;
    let n = raw.n_features();
    let rows: Vec<usize> = (0..raw.len())
        .filter(|&i| raw.labels()[i] == pair.positive || raw.labels()[i] == pair.negative)
        .collect();
    let mut features = Array2::zeros((rows.len(), n));
    let mut labels = Vec::with_capacity(rows.len());
    for (dst, &i) in rows.iter().enumerate() {
        for (v, &p) in features.row_mut(dst).iter_mut().zip(raw.pixels(i)) {
            *v = f64::from(p) / 255.0;
        }
        labels.push(if raw.labels()[i] == pair.positive {
            Label::Positive
        } else {
            Label::Negative
        });
    }
    let ds = LabeledDataset::new(format!("{a}-{b}"), features, labels)?;
    if ds.count_positive() == 0 {
        return Err(Error::Data(format!("class {} has no examples", pair.positive)));
    }
    if ds.count_negative() == 0 {
        return Err(Error::Data(format!("class {} has no examples", pair.negative)));
    }
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceSpec {
    /// Fraction of the positive class to keep; `1 − imb_r` of the negative class is kept.
    pub imb_r: f64,
    pub seed: u64,
}

/// Keeps `⌊imb_r·n₊⌋` random positives and `⌊(1−imb_r)·n₋⌋` random negatives.
///
/// Since the digit-0 swap already made the non-zero digit positive,
/// `imb_r` always applies to the positive class. Kept rows retain their
/// original relative order.
pub fn sample_imbalanced(ds: &LabeledDataset, spec: &ImbalanceSpec) -> Result<LabeledDataset> {
    if !(spec.imb_r > 0.0 && spec.imb_r < 1.0) {
        return Err(Error::Config(format!("imb_r must lie in (0,1), got {}", spec.imb_r)));
    }
    if !ds.has_both_classes() {
        return Err(Error::Data("imbalanced sampling needs both classes".into()));
    }
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..ds.len()).partition(|&i| ds.labels()[i].is_positive());
    let keep_pos = (spec.imb_r * pos.len() as f64).floor() as usize;
    let keep_neg = ((1.0 - spec.imb_r) * neg.len() as f64).floor() as usize;
    if keep_pos == 0 || keep_neg == 0 {
        return Err(Error::Data(format!(
            "imbalanced sample would leave an empty class ({keep_pos} positive, {keep_neg} negative)"
        )));
    }
    let mut rng = rng_from_seed(spec.seed);
    let mut chosen: Vec<usize> = index::sample(&mut rng, pos.len(), keep_pos)
        .into_iter()
        .map(|i| pos[i])
        .chain(index::sample(&mut rng, neg.len(), keep_neg).into_iter().map(|i| neg[i]))
        .collect();
    chosen.sort_unstable();
    let name = format!("{} (imb_r={})", ds.name(), spec.imb_r);
    Ok(ds.select(&chosen).with_name(name))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Size of the clean gold set as a fraction of the training set.
    pub gold_fraction: f64,
    pub gan_fraction: f64,
    pub model_m_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(gold_fraction: f64, seed: u64) -> Self {
        Self {
            gold_fraction,
            gan_fraction: 0.84,
            model_m_fraction: 0.15,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("gold_fraction", self.gold_fraction),
            ("gan_fraction", self.gan_fraction),
            ("model_m_fraction", self.model_m_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1), got {f}")));
            }
        }
        Ok(())
    }
}

/// Row indices (into the input dataset) of each part of a split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub clean: Vec<usize>,
    pub gan: Vec<usize>,
    pub model_m: Vec<usize>,
    pub discarded: Vec<usize>,
}

/// The clean gold set, the WGAN training part and the model-M part.
///
/// All three keep their true labels; noise is injected by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSplit {
    pub clean: LabeledDataset,
    pub gan: LabeledDataset,
    pub model_m: LabeledDataset,
    pub indices: SplitIndices,
    /// Number of shuffles drawn before the gold set contained both classes.
    pub attempts: usize,
}

const MAX_SPLIT_ATTEMPTS: usize = 1000;

/// Shuffles and cuts `train` into gold / GAN / model-M parts.
///
/// Sizes are `round(gold·m)`, `round(gan·m)` and
/// `min(round(model_m·m), remainder)`; rows left over are discarded. The
/// shuffle is re-drawn until the gold set holds at least one example of each
/// class.
pub fn split_pipeline(train: &LabeledDataset, spec: &SplitSpec) -> Result<PipelineSplit> {
    spec.validate()?;
    let m = train.len();
    let gold = (spec.gold_fraction * m as f64).round() as usize;
    if gold < 2 {
        return Err(Error::Config(format!(
            "gold fraction {} of {m} rows gives {gold} clean examples; need at least 2",
            spec.gold_fraction
        )));
    }
    if !train.has_both_classes() {
        return Err(Error::Data("training data needs both classes".into()));
    }
    let gan = (spec.gan_fraction * m as f64).round() as usize;
    if gold + gan >= m {
        return Err(Error::Config("split leaves no rows for model M".into()));
    }
    let model_m = ((spec.model_m_fraction * m as f64).round() as usize).min(m - gold - gan);

    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let mut rng = rng_from_seed(derive_seed(spec.seed, attempt as u64));
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let clean_idx = &order[..gold];
        let has_pos = clean_idx.iter().any(|&i| train.labels()[i].is_positive());
        let has_neg = clean_idx.iter().any(|&i| !train.labels()[i].is_positive());
        if !(has_pos && has_neg) {
            continue;
        }
        let indices = SplitIndices {
            clean: clean_idx.to_vec(),
            gan: order[gold..gold + gan].to_vec(),
            model_m: order[gold + gan..gold + gan + model_m].to_vec(),
            discarded: order[gold + gan + model_m..].to_vec(),
        };
        return Ok(PipelineSplit {
            clean: train.select(&indices.clean),
            gan: train.select(&indices.gan),
            model_m: train.select(&indices.model_m),
            indices,
            attempts: attempt + 1,
        });
    }
    Err(Error::Data(format!(
        "no gold set with both classes after {MAX_SPLIT_ATTEMPTS} shuffles"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_fixture() -> RawDataset {
        // 4 images of 2x2: labels 0,5,6,5
        let labels = vec![0u8, 5, 6, 5];
        let mut pixels = Vec::new();
        for (i, _) in labels.iter().enumerate() {
            pixels.extend_from_slice(&[i as u8 * 10, 255, 0, 1]);
        }
        RawDataset::new(2, 2, pixels, labels).unwrap()
    }

    fn balanced(m_pos: usize, m_neg: usize) -> LabeledDataset {
        let m = m_pos + m_neg;
        let features = Array2::from_shape_fn((m, 2), |(i, j)| (i * 2 + j) as f64);
        let labels = (0..m)
            .map(|i| if i < m_pos { Label::Positive } else { Label::Negative })
            .collect();
        LabeledDataset::new("b", features, labels).unwrap()
    }

    #[test]
    fn pair_roles_and_zero_swap() {
        assert_eq!(BinaryPair::new(5, 6).unwrap(), BinaryPair { positive: 5, negative: 6 });
        assert_eq!(BinaryPair::new(0, 8).unwrap(), BinaryPair { positive: 8, negative: 0 });
        assert_eq!(BinaryPair::new(8, 0).unwrap(), BinaryPair { positive: 8, negative: 0 });
        assert!(BinaryPair::new(3, 3).is_err());
    }

    #[test]
    fn make_pair_filters_and_labels() {
        let raw = raw_fixture();
        let ds = make_binary_pair(&raw, 5, 6).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels(), &[Label::Positive, Label::Negative, Label::Positive]);
        assert_eq!(ds.features()[[0, 1]], 1.0);
        let zero = make_binary_pair(&raw, 0, 6).unwrap();
        assert_eq!(zero.labels(), &[Label::Negative, Label::Positive]);
    }

    #[test]
    fn make_pair_is_idempotent_after_filtering() {
        let raw = raw_fixture();
        let direct = make_binary_pair(&raw, 5, 6).unwrap();
        let again = make_binary_pair(&raw.filter_classes(&[5, 6]), 5, 6).unwrap();
        assert_eq!(direct, again);
    }

    #[test]
    fn make_pair_missing_class_is_data_error() {
        assert!(matches!(make_binary_pair(&raw_fixture(), 5, 7), Err(Error::Data(_))));
    }

    #[test]
    fn imbalance_counts_use_floor() {
        let ds = balanced(1000, 1000);
        let out = sample_imbalanced(&ds, &ImbalanceSpec { imb_r: 0.5, seed: 1 }).unwrap();
        assert_eq!((out.count_positive(), out.count_negative()), (500, 500));
        let ds = balanced(5385, 5444);
        let out = sample_imbalanced(&ds, &ImbalanceSpec { imb_r: 0.1, seed: 1 }).unwrap();
        assert_eq!((out.count_positive(), out.count_negative()), (538, 4899));
    }

    #[test]
    fn imbalance_empty_class_errors() {
        let ds = balanced(3, 100);
        assert!(matches!(
            sample_imbalanced(&ds, &ImbalanceSpec { imb_r: 0.2, seed: 1 }),
            Err(Error::Data(_))
        ));
        assert!(sample_imbalanced(&ds, &ImbalanceSpec { imb_r: 1.0, seed: 1 }).is_err());
    }

    #[test]
    fn split_sizes_for_mnist_5_6() {
        let ds = balanced(4987, 5417);
        let split = split_pipeline(&ds, &SplitSpec::new(0.001, 3)).unwrap();
        assert_eq!(split.clean.len(), 10);
        assert_eq!(split.gan.len(), 8739);
        assert_eq!(split.model_m.len(), 1561);
        assert!(split.clean.has_both_classes());
        let split = split_pipeline(&ds, &SplitSpec::new(0.01, 3)).unwrap();
        assert_eq!(split.clean.len(), 104);
    }

    #[test]
    fn split_is_a_partition() {
        let ds = balanced(300, 700);
        let split = split_pipeline(&ds, &SplitSpec::new(0.01, 42)).unwrap();
        let SplitIndices { clean, gan, model_m, discarded } = &split.indices;
        let mut all: Vec<usize> = clean.iter().chain(gan).chain(model_m).chain(discarded).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        for (i, &row) in clean.iter().enumerate() {
            assert_eq!(split.clean.labels()[i], ds.labels()[row]);
        }
    }

    #[test]
    fn split_too_small_is_config_error() {
        let ds = balanced(200, 300);
        assert!(matches!(split_pipeline(&ds, &SplitSpec::new(0.001, 0)), Err(Error::Config(_))));
    }

    #[test]
    fn split_redraws_until_gold_has_both_classes() {
        // 2 gold rows out of 1000 with 1% positives: most shuffles miss the positive class
        let ds = balanced(10, 990);
        let split = split_pipeline(&ds, &SplitSpec::new(0.002, 5)).unwrap();
        assert!(split.clean.has_both_classes());
        assert!(split.attempts >= 1);
    }
}
