//! Deterministic inputs shared by the benchmarks in `benches/`.

use labelgan_core::{Label, LabeledDataset};
use ndarray::Array2;

/// A cheap deterministic value in `[-1, 1)` for position `i`.
fn hash_unit(i: u64) -> f64 {
    let mut z = i.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

pub fn matrix(rows: usize, cols: usize, salt: u64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(r, c)| hash_unit(salt ^ ((r * cols + c) as u64) << 1))
}

/// Two shifted clouds in `n` dimensions, alternating labels.
pub fn blobs(m: usize, n: usize, salt: u64) -> LabeledDataset {
    let labels: Vec<Label> = (0..m)
        .map(|i| if i % 2 == 0 { Label::Positive } else { Label::Negative })
        .collect();
    let mut x = matrix(m, n, salt);
    for (mut row, l) in x.rows_mut().into_iter().zip(&labels) {
        row += l.sign();
    }
    LabeledDataset::new("bench", x, labels).expect("shapes agree")
}

/// A `blocks × k` score matrix with mild structure.
pub fn scores(blocks: usize, k: usize, salt: u64) -> Vec<Vec<f64>> {
    (0..blocks)
        .map(|b| (0..k).map(|j| 0.8 - 0.02 * j as f64 + 0.05 * hash_unit(salt ^ (b * k + j) as u64)).collect())
        .collect()
}
