//! Datasets: the ±1-labelled carrier type plus every way the pipeline builds one.

mod idx;
mod partition;
mod synthetic;

pub use idx::{
    load_idx, load_idx_dir, write_idx_images, write_idx_labels, RawDataset, IDX_FILE_NAMES, IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
};
pub use partition::{
    make_binary_pair, sample_imbalanced, split_pipeline, BinaryPair, ImbalanceSpec, PipelineSplit,
    SplitIndices, SplitSpec,
};
pub use synthetic::{
    generate_synthetic, generate_synthetic_with_means, synthetic_means, GaussianPair, SyntheticSpec,
};

use std::fmt;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_sign(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(Error::Contract(format!("label must be ±1, got {other}"))),
        }
    }

    /// `+1.0` or `-1.0`.
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

/// Feature matrix (rows are examples) with one ±1 label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    name: String,
    features: Array2<f64>,
    labels: Vec<Label>,
}

impl LabeledDataset {
    /// Checked constructor: label count must match rows and features must be finite.
    pub fn new(name: impl Into<String>, features: Array2<f64>, labels: Vec<Label>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Contract(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite feature at row {}",
                pos / features.ncols().max(1)
            )));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn count_positive(&self) -> usize {
        self.labels.iter().filter(|l| l.is_positive()).count()
    }

    pub fn count_negative(&self) -> usize {
        self.len() - self.count_positive()
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.count_positive() as f64 / self.len() as f64
        }
    }

    pub fn has_both_classes(&self) -> bool {
        let p = self.count_positive();
        p > 0 && p < self.len()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            name: self.name.clone(),
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Same features, new labels.
    pub fn with_labels(&self, labels: Vec<Label>) -> Result<LabeledDataset> {
        LabeledDataset::new(self.name.clone(), self.features.clone(), labels)
    }

    /// Writes `f0,…,f{n−1},label` CSV with a header row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.n_features()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.n_features() + 1);
        for (row, label) in self.features.rows().into_iter().zip(&self.labels) {
            record.clear();
            record.extend(row.iter().map(|v| v.to_string()));
            record.push(label.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV layout produced by [`LabeledDataset::write_csv`].
    pub fn read_csv(path: impl AsRef<Path>, name: impl Into<String>) -> Result<LabeledDataset> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let n = header.len();
        if n < 2 || &header[n - 1] != "label" {
            return Err(Error::format("csv header", "last column must be `label`"));
        }
        for (j, h) in header.iter().take(n - 1).enumerate() {
            if h != format!("f{j}") {
                return Err(Error::format("csv header", format!("column {j} should be f{j}, got {h}")));
            }
        }
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != n {
                return Err(Error::format(format!("csv row {}", line + 1), "wrong column count"));
            }
            for field in rec.iter().take(n - 1) {
                values.push(field.trim().parse::<f64>().map_err(|e| {
                    Error::format(format!("csv row {}", line + 1), e.to_string())
                })?);
            }
            let raw = rec[n - 1].trim();
            let label = raw
                .parse::<i64>()
                .map_err(|e| Error::format(format!("csv row {} label", line + 1), e.to_string()))
                .and_then(Label::from_sign)?;
            labels.push(label);
        }
        let features = Array2::from_shape_vec((labels.len(), n - 1), values)
            .map_err(|e| Error::format("csv", e.to_string()))?;
        LabeledDataset::new(name, features, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constructor_checks_shapes_and_finiteness() {
        let f = array![[1.0, 2.0], [3.0, 4.0]];
        assert!(LabeledDataset::new("a", f.clone(), vec![Label::Positive]).is_err());
        let bad = array![[1.0, f64::INFINITY]];
        assert!(matches!(
            LabeledDataset::new("b", bad, vec![Label::Negative]),
            Err(Error::Numeric(_))
        ));
        let ok = LabeledDataset::new("c", f, vec![Label::Positive, Label::Negative]).unwrap();
        assert_eq!(ok.count_positive(), 1);
        assert!(ok.has_both_classes());
    }

    #[test]
    fn label_signs() {
        assert_eq!(Label::from_sign(1).unwrap(), Label::Positive);
        assert_eq!(Label::from_sign(-1).unwrap(), Label::Negative);
        assert!(Label::from_sign(0).is_err());
        assert_eq!(Label::Positive.flipped(), Label::Negative);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = LabeledDataset::new(
            "x",
            array![[0.1, -2.5e-7, 3.0], [1.0 / 3.0, 0.0, -4.25]],
            vec![Label::Negative, Label::Positive],
        )
        .unwrap();
        ds.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("f0,f1,f2,label\n"));
        let back = LabeledDataset::read_csv(&path, "x").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_rejects_bad_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "f0,label\n0.5,2\n").unwrap();
        assert!(LabeledDataset::read_csv(&path, "x").is_err());
    }
}
