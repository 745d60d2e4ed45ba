//! Checks against the real MNIST files; skipped when they are not present.

use std::path::PathBuf;

use labelgan_core::data::{load_idx_dir, make_binary_pair, sample_imbalanced, ImbalanceSpec};

fn mnist_dir() -> Option<PathBuf> {
    let workspace = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .into_iter()
        .chain([workspace, PathBuf::from("/root/data/mnist")])
        .find(|d| d.join("train-images-idx3-ubyte").is_file())
}

#[test]
fn standard_counts() {
    let Some(dir) = mnist_dir() else {
        eprintln!("MNIST not found, skipping");
        return;
    };
    let (train, test) = load_idx_dir(dir).unwrap();
    assert_eq!((train.len(), test.len()), (60_000, 10_000));
    assert_eq!(train.n_features(), 784);
    let train_counts = [5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949];
    let test_counts = [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009];
    for d in 0..10u8 {
        assert_eq!(train.class_count(d), train_counts[d as usize], "train digit {d}");
        assert_eq!(test.class_count(d), test_counts[d as usize], "test digit {d}");
    }
}

#[test]
fn binary_pairs_and_imbalance() {
    let Some(dir) = mnist_dir() else {
        eprintln!("MNIST not found, skipping");
        return;
    };
    let (train, test) = load_idx_dir(dir).unwrap();
    let zero_one = make_binary_pair(&test, 0, 1).unwrap();
    assert_eq!(zero_one.len(), 2115);
    // 0 is never the positive class
    assert_eq!(zero_one.count_positive(), 1135);
    assert!(zero_one.features().iter().all(|v| (0.0..=1.0).contains(v)));

    let test_pair = make_binary_pair(&test, 1, 7).unwrap();
    assert_eq!((test_pair.count_positive(), test_pair.count_negative()), (1135, 1028));

    let one_seven = make_binary_pair(&train, 1, 7).unwrap();
    assert_eq!((one_seven.count_positive(), one_seven.count_negative()), (6742, 6265));
    let imb = sample_imbalanced(&one_seven, &ImbalanceSpec { imb_r: 0.2, seed: 3 }).unwrap();
    assert_eq!(imb.count_positive(), 1348);
    assert_eq!(imb.count_negative(), 5012);
}
