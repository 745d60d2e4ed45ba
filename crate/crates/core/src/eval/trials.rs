//! Multi-trial experiments, the trial ledger and score matrices for the tests.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, train_model_m, Metrics, ModelMConfig};
use crate::data::{split_pipeline, LabeledDataset, SplitSpec};
use crate::noise::{inject_ccn, NoiseRates};
use crate::rng::{derive_seed, stream};
use crate::wgan::{generate_clean, train_with_observer, Checkpointer, Scheme, TrainLog, WganConfig};
use crate::{Error, Result};

/// A pipeline evaluated per trial: a WGAN scheme or the plain classifier
/// trained on noisy labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TrialScheme {
    SimpleNn,
    Wgan(Scheme),
}

impl TrialScheme {
    pub fn name(self) -> &'static str {
        match self {
            TrialScheme::SimpleNn => "simple_nn",
            TrialScheme::Wgan(s) => s.name(),
        }
    }
}

impl std::str::FromStr for TrialScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "simple_nn" {
            Ok(TrialScheme::SimpleNn)
        } else {
            s.parse().map(TrialScheme::Wgan)
        }
    }
}

impl TryFrom<String> for TrialScheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TrialScheme> for String {
    fn from(s: TrialScheme) -> String {
        s.name().to_owned()
    }
}

impl std::fmt::Display for TrialScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub dataset: String,
    pub schemes: Vec<TrialScheme>,
    pub rates: Vec<NoiseRates>,
    pub trials: usize,
    /// Template; `seed` is replaced per cell.
    pub split: SplitSpec,
    /// Template; `scheme`, `seed` and `n_it` are set per job.
    pub wgan: WganConfig,
    /// Outer WGAN iterations; `None` uses each scheme's default.
    pub iterations: Option<usize>,
    pub model_m: ModelMConfig,
    pub master_seed: u64,
    /// When set, each WGAN job checkpoints into its own subdirectory.
    pub checkpoints: Option<Checkpointer>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.schemes.is_empty() {
            problems.push("no schemes selected".to_owned());
        }
        if self.rates.is_empty() {
            problems.push("no noise rates selected".to_owned());
        }
        if self.trials == 0 {
            problems.push("trial count must be > 0".to_owned());
        }
        for r in &self.rates {
            if let Err(e) = r.validate() {
                problems.push(e.to_string());
            }
        }
        for e in [
            self.split.validate().err(),
            self.wgan.validate().err(),
            self.model_m.validate().err(),
        ]
        .into_iter()
        .flatten()
        {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Seed shared by every scheme of one `(rates, trial)` cell, so all
    /// schemes see the same split and the same corruption.
    pub fn cell_seed(&self, rates_index: usize, trial: usize) -> u64 {
        derive_seed(
            derive_seed(self.master_seed, stream::TRIAL_BASE + trial as u64),
            rates_index as u64,
        )
    }
}

/// One `(scheme, rates, trial)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub dataset: String,
    pub scheme: TrialScheme,
    pub rates: NoiseRates,
    pub trial: usize,
    /// `None` when the trial failed.
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
    /// Positive fraction of the noisy model-M partition.
    pub noisy_pos_frac: Option<f64>,
    /// Positive fraction of the classifier's training data after generation.
    pub train_pos_frac: Option<f64>,
    pub runtime_seconds: f64,
    /// WGAN training curve of this job.
    #[serde(skip)]
    pub train_log: Option<TrainLog>,
}

impl TrialResult {
    pub fn accuracy(&self) -> Option<f64> {
        self.metrics.map(|m| m.accuracy)
    }

    pub fn succeeded(&self) -> bool {
        self.metrics.is_some()
    }
}

struct TrialOutput {
    metrics: Metrics,
    noisy_pos_frac: f64,
    train_pos_frac: f64,
    train_log: Option<TrainLog>,
}

/// Checkpoint subdirectory name of one job.
pub fn job_tag(scheme: TrialScheme, rates_index: usize, trial: usize) -> String {
    format!("{scheme}_rates{rates_index}_trial{trial}")
}

fn run_one(
    spec: &ExperimentSpec,
    train_set: &LabeledDataset,
    test: &LabeledDataset,
    scheme: TrialScheme,
    rates_index: usize,
    trial: usize,
) -> Result<TrialOutput> {
    let seed = spec.cell_seed(rates_index, trial);
    let rates = spec.rates[rates_index];
    let split = split_pipeline(
        train_set,
        &SplitSpec {
            seed: derive_seed(seed, stream::SPLIT),
            ..spec.split
        },
    )?;
    let noisy_m = inject_ccn(&split.model_m, rates, derive_seed(seed, stream::NOISE_MODEL_M))?;
    let mut train_log = None;
    let m_train = match scheme {
        TrialScheme::SimpleNn => noisy_m.clone(),
        TrialScheme::Wgan(s) => {
            let noisy_gan = inject_ccn(&split.gan, rates, derive_seed(seed, stream::NOISE_GAN))?;
            let cfg = WganConfig {
                scheme: s,
                seed: derive_seed(seed, stream::WGAN),
                n_it: spec.iterations.unwrap_or(s.default_iterations()),
                ..spec.wgan.clone()
            };
            let ck = spec.checkpoints.as_ref().map(|c| Checkpointer {
                dir: c.dir.join(job_tag(scheme, rates_index, trial)),
                every: c.every,
            });
            let (pair, log) = train_with_observer(&cfg, &split.clean, &noisy_gan, |rec, pair| match &ck {
                Some(ck) => ck.observe(rec, pair, cfg.n_it),
                None => Ok(()),
            })?;
            train_log = Some(log);
            generate_clean(&pair, &noisy_m, cfg.label_block())?
        }
    };
    let model_seed = match scheme {
        TrialScheme::SimpleNn => derive_seed(seed, stream::SIMPLE_NN),
        TrialScheme::Wgan(_) => derive_seed(seed, stream::MODEL_M),
    };
    let model = train_model_m(&m_train, &spec.model_m, model_seed)?;
    Ok(TrialOutput {
        metrics: evaluate(&model.network, test)?,
        noisy_pos_frac: noisy_m.positive_fraction(),
        train_pos_frac: m_train.positive_fraction(),
        train_log,
    })
}

/// Runs every `(rates, trial, scheme)` job on up to `jobs` threads.
///
/// Results come back in `(rates, trial, scheme)` order regardless of thread
/// count. A failing job is recorded with its error and the run continues.
pub fn run_trials(
    spec: &ExperimentSpec,
    train_set: &LabeledDataset,
    test: &LabeledDataset,
    jobs: usize,
) -> Result<Vec<TrialResult>> {
    spec.validate()?;
    let mut work = Vec::new();
    for ri in 0..spec.rates.len() {
        for t in 0..spec.trials {
            for &s in &spec.schemes {
                work.push((ri, t, s));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results = pool.install(|| {
        work.par_iter()
            .map(|&(ri, t, s)| {
                let start = Instant::now();
                let out = run_one(spec, train_set, test, s, ri, t);
                if let Err(e) = &out {
                    log::error!("{} {s} rates {:?} trial {t} failed: {e}", spec.dataset, spec.rates[ri]);
                } else {
                    log::info!("{} {s} rates {:?} trial {t} done", spec.dataset, spec.rates[ri]);
                }
                let (metrics, error, noisy, train_frac, train_log) = match out {
                    Ok(o) => (
                        Some(o.metrics),
                        None,
                        Some(o.noisy_pos_frac),
                        Some(o.train_pos_frac),
                        o.train_log,
                    ),
                    Err(e) => (None, Some(e.to_string()), None, None, None),
                };
                TrialResult {
                    dataset: spec.dataset.clone(),
                    scheme: s,
                    rates: spec.rates[ri],
                    trial: t,
                    metrics,
                    error,
                    noisy_pos_frac: noisy,
                    train_pos_frac: train_frac,
                    runtime_seconds: start.elapsed().as_secs_f64(),
                    train_log,
                }
            })
            .collect()
    });
    Ok(results)
}

pub const LEDGER_HEADER: [&str; 13] = [
    "dataset",
    "scheme",
    "rho_plus",
    "rho_minus",
    "trial",
    "status",
    "accuracy",
    "tpr",
    "tnr",
    "am",
    "noisy_pos_frac",
    "train_pos_frac",
    "error",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per trial. Runtime is kept out so reruns are byte-identical.
pub fn write_ledger(results: &[TrialResult], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEDGER_HEADER)?;
    for r in results {
        let m = r.metrics;
        w.write_record([
            r.dataset.clone(),
            r.scheme.to_string(),
            r.rates.rho_plus.to_string(),
            r.rates.rho_minus.to_string(),
            r.trial.to_string(),
            if r.succeeded() { "ok" } else { "failed" }.to_owned(),
            opt(m.map(|m| m.accuracy)),
            opt(m.and_then(|m| m.tpr)),
            opt(m.and_then(|m| m.tnr)),
            opt(m.and_then(|m| m.am)),
            opt(r.noisy_pos_frac),
            opt(r.train_pos_frac),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock sidecar: `dataset, scheme, rho_plus, rho_minus, trial, runtime_seconds`.
pub fn write_timing(results: &[TrialResult], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "scheme", "rho_plus", "rho_minus", "trial", "runtime_seconds"])?;
    for r in results {
        w.write_record([
            r.dataset.clone(),
            r.scheme.to_string(),
            r.rates.rho_plus.to_string(),
            r.rates.rho_minus.to_string(),
            r.trial.to_string(),
            format!("{:.3}", r.runtime_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A score row read from a ledger or an imported baseline file.
///
/// Only the columns `dataset, scheme, rho_plus, rho_minus, trial, accuracy, am`
/// are read; extra columns are ignored and rows with no accuracy are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub dataset: String,
    pub scheme: String,
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub trial: usize,
    pub accuracy: Option<f64>,
    pub am: Option<f64>,
}

pub fn read_scores(input: impl Read) -> Result<Vec<ScoreRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    for col in ["dataset", "scheme", "rho_plus", "rho_minus", "trial", "accuracy", "am"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::format("score csv header", format!("missing column {col}")));
        }
    }
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<ScoreRecord>().enumerate() {
        let rec = rec.map_err(|e| Error::format(format!("score csv row {}", i + 1), e.to_string()))?;
        if rec.accuracy.is_some() {
            out.push(rec);
        }
    }
    Ok(out)
}

impl From<&TrialResult> for ScoreRecord {
    fn from(r: &TrialResult) -> Self {
        ScoreRecord {
            dataset: r.dataset.clone(),
            scheme: r.scheme.to_string(),
            rho_plus: r.rates.rho_plus,
            rho_minus: r.rates.rho_minus,
            trial: r.trial,
            accuracy: r.accuracy(),
            am: r.metrics.and_then(|m| m.am),
        }
    }
}

/// Blocks (noise settings) × treatments (schemes) of trial-averaged scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub schemes: Vec<String>,
    pub blocks: Vec<(f64, f64)>,
    pub scores: Vec<Vec<f64>>,
}

fn rate_key(v: f64) -> u64 {
    v.to_bits()
}

/// Averages `metric` (`"accuracy"` or `"am"`) over trials for one dataset.
///
/// Schemes keep first-seen order; only noise settings where every scheme has
/// a value are kept.
pub fn build_score_matrix(records: &[ScoreRecord], dataset: &str, metric: &str) -> Result<ScoreMatrix> {
    let pick = |r: &ScoreRecord| match metric {
        "accuracy" => Ok(r.accuracy),
        "am" => Ok(r.am),
        other => Err(Error::Config(format!("unknown metric {other:?}"))),
    };
    let mut schemes: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(u64, u64), BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.dataset == dataset) {
        if !schemes.contains(&r.scheme) {
            schemes.push(r.scheme.clone());
        }
        if let Some(v) = pick(r)? {
            let e = cells
                .entry((rate_key(r.rho_plus), rate_key(r.rho_minus)))
                .or_default()
                .entry(r.scheme.clone())
                .or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let mut blocks = Vec::new();
    let mut scores = Vec::new();
    for ((p, m), row) in &cells {
        if schemes.iter().all(|s| row.contains_key(s)) {
            blocks.push((f64::from_bits(*p), f64::from_bits(*m)));
            scores.push(schemes.iter().map(|s| row[s].0 / row[s].1 as f64).collect());
        }
    }
    Ok(ScoreMatrix { schemes, blocks, scores })
}

/// Mean and sample standard deviation over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub dataset: String,
    pub scheme: String,
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub trials: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub am_mean: Option<f64>,
    pub am_std: Option<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Groups successful trials by `(dataset, scheme, rates)`.
pub fn summarize(records: &[ScoreRecord]) -> Vec<MetricSummary> {
    let mut groups: BTreeMap<(String, String, u64, u64), Vec<&ScoreRecord>> = BTreeMap::new();
    let mut order = Vec::new();
    let mut seen = BTreeSet::new();
    for r in records.iter().filter(|r| r.accuracy.is_some()) {
        let key = (r.dataset.clone(), r.scheme.clone(), rate_key(r.rho_plus), rate_key(r.rho_minus));
        if seen.insert(key.clone()) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rows = &groups[&key];
            let acc: Vec<f64> = rows.iter().filter_map(|r| r.accuracy).collect();
            let am: Vec<f64> = rows.iter().filter_map(|r| r.am).collect();
            let (accuracy_mean, accuracy_std) = mean_std(&acc);
            let am_stats = (am.len() == rows.len()).then(|| mean_std(&am));
            MetricSummary {
                dataset: key.0,
                scheme: key.1,
                rho_plus: f64::from_bits(key.2),
                rho_minus: f64::from_bits(key.3),
                trials: rows.len(),
                accuracy_mean,
                accuracy_std,
                am_mean: am_stats.map(|s| s.0),
                am_std: am_stats.map(|s| s.1),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;
    use ndarray::Array2;
    use rand::Rng as _;

    fn blobs(m: usize, seed: u64) -> LabeledDataset {
        let mut rng = crate::rng::rng_from_seed(seed);
        let labels: Vec<Label> = (0..m)
            .map(|i| if i % 2 == 0 { Label::Positive } else { Label::Negative })
            .collect();
        let f = Array2::from_shape_fn((m, 3), |(i, _)| labels[i].sign() + rng.random_range(-0.8..0.8));
        LabeledDataset::new("blobs", f, labels).unwrap()
    }

    fn tiny_spec() -> ExperimentSpec {
        let mut wgan = WganConfig::new(Scheme::WganXtraY, 0);
        wgan.n_it = 3;
        wgan.m_b = 8;
        wgan.generator_hidden = vec![6];
        wgan.critic_hidden = vec![6];
        ExperimentSpec {
            dataset: "blobs".into(),
            schemes: vec![TrialScheme::Wgan(Scheme::WganXtraY), TrialScheme::SimpleNn],
            rates: vec![
                NoiseRates::new(0.1, 0.2).unwrap(),
                NoiseRates::new(0.3, 0.3).unwrap(),
                NoiseRates::new(0.0, 0.4).unwrap(),
            ],
            trials: 2,
            split: SplitSpec::new(0.05, 0),
            wgan,
            model_m: ModelMConfig {
                hidden: vec![4],
                epochs: 2,
                batch_size: 16,
                alpha: 1e-3,
            },
            master_seed: 11,
            checkpoints: None,
            iterations: Some(3),
        }
    }

    #[test]
    fn scheme_names() {
        for s in ["simple_nn", "wgan_y", "wgan_xtra_y", "wgan_xtra_y_entr"] {
            assert_eq!(s.parse::<TrialScheme>().unwrap().to_string(), s);
        }
        assert!("glc".parse::<TrialScheme>().is_err());
    }

    #[test]
    fn counts_order_and_determinism() {
        let (train_set, test) = (blobs(120, 1), blobs(40, 2));
        let spec = tiny_spec();
        let a = run_trials(&spec, &train_set, &test, 1).unwrap();
        assert_eq!(a.len(), 2 * 3 * 2);
        assert!(a.iter().all(TrialResult::succeeded));
        let b = run_trials(&spec, &train_set, &test, 3).unwrap();
        let strip = |v: &[TrialResult]| {
            let mut buf = Vec::new();
            write_ledger(v, &mut buf).unwrap();
            buf
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn cells_get_distinct_seeds() {
        let spec = tiny_spec();
        let seeds: BTreeSet<u64> = (0..3)
            .flat_map(|r| (0..5).map(move |t| (r, t)))
            .map(|(r, t)| spec.cell_seed(r, t))
            .collect();
        assert_eq!(seeds.len(), 15);
    }

    #[test]
    fn failing_trial_is_recorded() {
        let (train_set, test) = (blobs(120, 1), blobs(40, 2));
        let mut spec = tiny_spec();
        spec.schemes = vec![TrialScheme::SimpleNn];
        spec.trials = 1;
        spec.rates.truncate(1);
        let wrong_test = LabeledDataset::new("t", Array2::zeros((4, 2)), vec![Label::Positive; 4]).unwrap();
        let out = run_trials(&spec, &train_set, &wrong_test, 1).unwrap();
        assert!(!out[0].succeeded());
        assert!(out[0].error.as_deref().unwrap().contains("features"));
        let ok = run_trials(&spec, &train_set, &test, 1).unwrap();
        assert!(ok[0].succeeded());
    }

    #[test]
    fn validation_lists_all_problems() {
        let mut spec = tiny_spec();
        spec.trials = 0;
        spec.schemes.clear();
        spec.split.gold_fraction = 2.0;
        let msg = spec.validate().unwrap_err().to_string();
        assert!(msg.contains("trial count") && msg.contains("no schemes") && msg.contains("gold_fraction"));
    }

    #[test]
    fn ledger_roundtrip_to_scores_and_matrix() {
        let (train_set, test) = (blobs(120, 1), blobs(40, 2));
        let res = run_trials(&tiny_spec(), &train_set, &test, 1).unwrap();
        let mut buf = Vec::new();
        write_ledger(&res, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&LEDGER_HEADER.join(",")));
        let scores = read_scores(buf.as_slice()).unwrap();
        assert_eq!(scores.len(), res.len());
        let direct: Vec<ScoreRecord> = res.iter().map(ScoreRecord::from).collect();
        assert_eq!(scores, direct);
        let m = build_score_matrix(&scores, "blobs", "accuracy").unwrap();
        assert_eq!(m.schemes, vec!["wgan_xtra_y", "simple_nn"]);
        assert_eq!(m.scores.len(), 3);
        let summary = summarize(&scores);
        assert_eq!(summary.len(), 6);
        assert!(summary.iter().all(|s| s.trials == 2 && s.accuracy_std >= 0.0));
    }

    #[test]
    fn baseline_import_ignores_failed_rows() {
        let csv = "dataset,scheme,rho_plus,rho_minus,trial,accuracy,am\n\
                   d,glc,0.1,0.2,0,0.9,0.88\n\
                   d,glc,0.1,0.2,1,,\n";
        let rows = read_scores(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(read_scores("dataset,scheme\n".as_bytes()).is_err());
    }

    #[test]
    fn summary_statistics() {
        let mk = |t, acc| ScoreRecord {
            dataset: "d".into(),
            scheme: "s".into(),
            rho_plus: 0.1,
            rho_minus: 0.1,
            trial: t,
            accuracy: Some(acc),
            am: None,
        };
        let s = summarize(&[mk(0, 0.8), mk(1, 0.9), mk(2, 1.0)]);
        assert!((s[0].accuracy_mean - 0.9).abs() < 1e-12);
        assert!((s[0].accuracy_std - 0.1).abs() < 1e-12);
        assert_eq!(s[0].am_mean, None);
    }
}
