use labelgan_core::eval::{friedman_test, nemenyi_posthoc};
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    scores: Vec<Vec<f64>>,
    statistic: f64,
    p_value: f64,
    mean_ranks: Vec<f64>,
    nemenyi: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct Fixture {
    cases: Vec<Case>,
}

fn fixture() -> Fixture {
    serde_json::from_str(include_str!("fixtures/stats_reference.json")).unwrap()
}

#[test]
fn friedman_matches_reference() {
    for (i, c) in fixture().cases.iter().enumerate() {
        let r = friedman_test(&c.scores).unwrap();
        assert!((r.statistic - c.statistic).abs() < 1e-6, "case {i}: {} vs {}", r.statistic, c.statistic);
        assert!((r.p_value - c.p_value).abs() < 1e-6, "case {i}: {} vs {}", r.p_value, c.p_value);
        for (a, b) in r.mean_ranks.iter().zip(&c.mean_ranks) {
            assert!((a - b).abs() < 1e-12, "case {i}");
        }
    }
}

#[test]
fn nemenyi_matches_reference() {
    for (i, c) in fixture().cases.iter().enumerate() {
        let p = nemenyi_posthoc(&c.mean_ranks, c.scores.len()).unwrap();
        for (row, want) in p.iter().zip(&c.nemenyi) {
            for (a, b) in row.iter().zip(want) {
                assert!((a - b).abs() < 1e-6, "case {i}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn studentized_range_reference_points() {
    let points = [
        (1.0, 3, 0.24071264122933875),
        (3.0, 3, 0.9144574283450421),
        (4.5, 5, 0.9872746393733908),
        (5.5, 6, 0.9985908561441228),
        (2.0, 4, 0.5096305900194505),
        (3.3, 10, 0.6329234898850384),
    ];
    for (q, k, want) in points {
        let got = labelgan_core::eval::studentized_range_cdf(q, k);
        assert!((got - want).abs() < 1e-8, "q={q} k={k}: {got} vs {want}");
    }
}
