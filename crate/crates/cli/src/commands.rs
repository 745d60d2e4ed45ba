//! The four subcommands. Each validates its whole input before creating any
//! output file.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use labelgan_core::analysis::{
    ccn_sweep, check_sln_monotonicity, find_ccn_counterexample, find_mixed_sign_rates, kl_ccn_partials,
    write_sweep_csv, MonotonicityVerdict, SearchDirection,
};
use labelgan_core::data::{
    generate_synthetic, load_idx_dir, make_binary_pair, sample_imbalanced, ImbalanceSpec,
};
use labelgan_core::eval::{
    build_score_matrix, job_tag, read_scores, run_trials, summarize, write_ledger, write_timing, ScoreRecord,
    StatTestReport, TrialResult,
};
use labelgan_core::rng::{derive_seed, stream};
use labelgan_core::wgan::Checkpointer;
use labelgan_core::{LabeledDataset, NoiseRates};
use serde::Serialize;

use crate::config::{DatasetConfig, ExperimentConfig, KlConfig, SynthConfig};
use crate::ConfigError;

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// The run finished but this many trials failed.
    TrialFailures(usize),
}

/// Fixed subdirectories of an output directory.
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub const SUBDIRS: [&'static str; 5] = ["configs", "ledgers", "logs", "reports", "checkpoints"];

    pub fn create(root: &Path) -> anyhow::Result<Self> {
        for d in Self::SUBDIRS {
            fs::create_dir_all(root.join(d)).with_context(|| format!("creating {}", root.join(d).display()))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn configs(&self) -> PathBuf {
        self.root.join("configs")
    }
    pub fn ledgers(&self) -> PathBuf {
        self.root.join("ledgers")
    }
    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Lower-case ASCII with runs of other characters collapsed to `_`.
pub fn file_stem(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_owned()
}

/// Writes `<out>/data/<name>_train.csv` and `_test.csv`.
pub fn cmd_synth(cfg: &SynthConfig) -> anyhow::Result<Outcome> {
    cfg.validate()?;
    let out = cfg
        .out
        .as_deref()
        .ok_or_else(|| ConfigError::new("no output directory (set `out` or pass --out)"))?;
    let (train, test) = generate_synthetic(&cfg.synthetic.spec())?;
    let layout = OutputLayout::create(out)?;
    write_text(&layout.configs().join("synth.toml"), &crate::config::to_toml(cfg))?;
    let stem = file_stem(train.name());
    for (part, ds) in [("train", &train), ("test", &test)] {
        let path = out.join("data").join(format!("{stem}_{part}.csv"));
        fs::create_dir_all(out.join("data"))?;
        ds.write_csv(&path).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {} ({} rows, {} features)", path.display(), ds.len(), ds.n_features());
    }
    Ok(Outcome::Success)
}

/// Builds the train and test sets an experiment config names.
pub fn load_datasets(cfg: &ExperimentConfig) -> anyhow::Result<(LabeledDataset, LabeledDataset)> {
    match &cfg.dataset {
        DatasetConfig::Synthetic(s) => Ok(generate_synthetic(&s.spec())?),
        DatasetConfig::Idx(idx) => {
            let (raw_train, raw_test) =
                load_idx_dir(&idx.dir).with_context(|| format!("loading IDX files from {}", idx.dir.display()))?;
            let [a, b] = idx.pair;
            let train = make_binary_pair(&raw_train, a, b)?;
            let test = make_binary_pair(&raw_test, a, b)?;
            match idx.imb_r {
                None => Ok((train, test)),
                Some(imb_r) => {
                    let base = derive_seed(cfg.seed, stream::IMBALANCE);
                    let train = sample_imbalanced(
                        &train,
                        &ImbalanceSpec {
                            imb_r,
                            seed: derive_seed(base, 0),
                        },
                    )?;
                    let test = sample_imbalanced(
                        &test,
                        &ImbalanceSpec {
                            imb_r,
                            seed: derive_seed(base, 1),
                        },
                    )?;
                    Ok((train, test))
                }
            }
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{:.2}", 100.0 * v))
}

/// Runs every trial, then writes the ledger, logs and summary.
pub fn cmd_run(cfg: &ExperimentConfig, jobs: usize) -> anyhow::Result<Outcome> {
    cfg.validate()?;
    let out = cfg.out.clone().expect("validated");
    let (train, test) = load_datasets(cfg)?;
    log::info!(
        "{}: {} train rows ({} positive), {} test rows",
        train.name(),
        train.len(),
        train.count_positive(),
        test.len()
    );
    let layout = OutputLayout::create(&out)?;
    write_text(&layout.configs().join("experiment.toml"), &crate::config::to_toml(cfg))?;

    let mut spec = cfg.spec(train.name());
    if cfg.wgan.checkpoint_every > 0 {
        spec.checkpoints = Some(Checkpointer {
            dir: layout.checkpoints(),
            every: cfg.wgan.checkpoint_every,
        });
    }
    let results = run_trials(&spec, &train, &test, jobs)?;
    write_run_outputs(&layout, &spec.rates, &results)?;

    let records: Vec<ScoreRecord> = results.iter().map(ScoreRecord::from).collect();
    println!("{:<18} {:>6} {:>6} {:>7} {:>16} {:>16}", "scheme", "rho+", "rho-", "trials", "accuracy %", "AM %");
    for s in summarize(&records) {
        println!(
            "{:<18} {:>6} {:>6} {:>7} {:>8.2} ± {:<5.2} {:>8} ± {:<5}",
            s.scheme,
            s.rho_plus,
            s.rho_minus,
            s.trials,
            100.0 * s.accuracy_mean,
            100.0 * s.accuracy_std,
            fmt_opt(s.am_mean),
            fmt_opt(s.am_std),
        );
    }
    let failed = results.iter().filter(|r| !r.succeeded()).count();
    if failed > 0 {
        eprintln!("{failed} of {} trials failed; see the ledger error column", results.len());
        Ok(Outcome::TrialFailures(failed))
    } else {
        Ok(Outcome::Success)
    }
}

fn write_run_outputs(layout: &OutputLayout, rates: &[NoiseRates], results: &[TrialResult]) -> anyhow::Result<()> {
    let mut f = create(&layout.ledgers().join("trials.csv"))?;
    write_ledger(results, &mut f)?;
    f.flush()?;
    let mut f = create(&layout.logs().join("timing.csv"))?;
    write_timing(results, &mut f)?;
    f.flush()?;
    for r in results {
        if let Some(log) = &r.train_log {
            let ri = rates.iter().position(|x| *x == r.rates).expect("rates come from the spec");
            let path = layout
                .logs()
                .join("train")
                .join(format!("{}.csv", job_tag(r.scheme, ri, r.trial)));
            let mut f = create(&path)?;
            log.write_csv(&mut f)?;
            f.flush()?;
        }
    }
    let records: Vec<ScoreRecord> = results.iter().map(ScoreRecord::from).collect();
    write_json(&layout.reports().join("summary.json"), &summarize(&records))
}

#[derive(Serialize)]
struct KlReport {
    monotonicity: Vec<(String, labelgan_core::analysis::MonotonicityReport)>,
    counterexamples: Vec<labelgan_core::analysis::Counterexample>,
    mixed_sign: Option<labelgan_core::analysis::MixedSignWitness>,
}

/// Monotonicity verdicts, counterexample search and the noise-rate sweep.
pub fn cmd_kl(cfg: &KlConfig) -> anyhow::Result<Outcome> {
    cfg.validate()?;
    let out = cfg.out.clone().expect("validated");
    let models = cfg
        .eta_models
        .iter()
        .map(|m| Ok((m.id().to_owned(), m.build()?)))
        .collect::<labelgan_core::Result<Vec<_>>>()?;

    let mut text = String::new();
    let mut report = KlReport {
        monotonicity: Vec::new(),
        counterexamples: Vec::new(),
        mixed_sign: None,
    };
    writeln!(text, "== symmetric noise: expected KL along the rho grid ==")?;
    for (id, model) in &models {
        let r = check_sln_monotonicity(model, &cfg.rho_grid)?;
        let verdict = match r.verdict {
            MonotonicityVerdict::Vacuous => "vacuous (fewer than two grid points): PASS",
            MonotonicityVerdict::ConstantDegenerate => "constant (eta = 0.5 everywhere): PASS",
            MonotonicityVerdict::StrictlyIncreasing => "strictly increasing: PASS",
            MonotonicityVerdict::NotMonotone => "not monotone: FAIL",
        };
        writeln!(text, "{id}: {verdict}")?;
        for (rho, v) in r.rho_grid.iter().zip(&r.values) {
            writeln!(text, "  rho={rho:.4} KL={:.10} (se {:.2e})", v.value, v.std_error)?;
        }
        report.monotonicity.push((id.clone(), r));
    }

    writeln!(text, "\n== class-conditional noise: decreasing directions ==")?;
    for dir in [SearchDirection::RhoPlus, SearchDirection::RhoMinus, SearchDirection::Diagonal] {
        match find_ccn_counterexample(&cfg.search.search(dir)) {
            Ok(c) => {
                writeln!(
                    text,
                    "{dir:?}: derivative {:.6} < 0 at eta={:.4}, rho+={:.4}, rho-={:.4}",
                    c.derivative, c.eta, c.rates.rho_plus, c.rates.rho_minus
                )?;
                report.counterexamples.push(c);
            }
            Err(labelgan_core::Error::SearchExhausted(msg)) => writeln!(text, "{dir:?}: none found ({msg})")?,
            Err(e) => return Err(e.into()),
        }
    }
    match find_mixed_sign_rates(&cfg.search.search(SearchDirection::Diagonal)) {
        Ok(w) => {
            writeln!(
                text,
                "diagonal derivative changes sign at rho+={:.4}, rho-={:.4}: {:.6} at eta={:.4}, {:.6} at eta={:.4}",
                w.rates.rho_plus,
                w.rates.rho_minus,
                w.total_negative,
                w.eta_negative,
                w.total_positive,
                w.eta_positive
            )?;
            report.mixed_sign = Some(w);
        }
        Err(labelgan_core::Error::SearchExhausted(msg)) => writeln!(text, "no diagonal sign change ({msg})")?,
        Err(e) => return Err(e.into()),
    }
    if let Some(c) = report.counterexamples.first() {
        let p = kl_ccn_partials(c.eta, c.rates)?;
        writeln!(
            text,
            "partials at the first witness: d/drho+ = {:.6}, d/drho- = {:.6}",
            p.d_rho_plus, p.d_rho_minus
        )?;
    }

    let rates = cfg.sweep_rates();
    let mut rows = Vec::new();
    for (id, model) in &models {
        rows.extend(ccn_sweep(id, model, &rates)?);
    }

    let layout = OutputLayout::create(&out)?;
    write_text(&layout.configs().join("kl.toml"), &crate::config::to_toml(cfg))?;
    let mut f = create(&layout.reports().join("kl_sweep.csv"))?;
    write_sweep_csv(&rows, &mut f)?;
    f.flush()?;
    write_text(&layout.reports().join("kl_verdicts.txt"), &text)?;
    write_json(&layout.reports().join("kl.json"), &report)?;
    print!("{text}");
    Ok(Outcome::Success)
}

/// Reads score files and writes one Friedman/Nemenyi report per dataset.
pub fn cmd_stats(inputs: &[PathBuf], baselines: &[PathBuf], metric: &str, out: &Path) -> anyhow::Result<Outcome> {
    if metric != "accuracy" && metric != "am" {
        return Err(ConfigError::new(format!("metric must be accuracy or am, got {metric:?}")).into());
    }
    let mut missing: Vec<String> = inputs
        .iter()
        .chain(baselines)
        .filter(|p| !p.is_file())
        .map(|p| format!("missing score file {}", p.display()))
        .collect();
    if inputs.is_empty() {
        missing.push("no ledger given".to_owned());
    }
    if !missing.is_empty() {
        return Err(ConfigError::list(missing).into());
    }
    let mut records = Vec::new();
    for p in inputs.iter().chain(baselines) {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        records.extend(read_scores(f).with_context(|| format!("reading {}", p.display()))?);
    }
    let datasets: BTreeSet<String> = records.iter().map(|r| r.dataset.clone()).collect();
    if datasets.is_empty() {
        return Err(ConfigError::new("no successful trial rows in the inputs").into());
    }
    let mut reports = Vec::new();
    for d in &datasets {
        let m = build_score_matrix(&records, d, metric)?;
        if m.schemes.len() < 2 {
            return Err(ConfigError::new(format!(
                "dataset {d}: need >= 2 treatments, found {}",
                m.schemes.len()
            ))
            .into());
        }
        let r = StatTestReport::compute(d, metric, &m.schemes, &m.scores)
            .map_err(|e| ConfigError::new(format!("dataset {d}: {e}")))?;
        reports.push(r);
    }
    let layout = OutputLayout::create(out)?;
    for r in &reports {
        let path = layout
            .reports()
            .join(format!("stats_{}_{}.json", file_stem(&r.dataset), metric));
        write_json(&path, r)?;
        println!(
            "{} ({metric}, {} settings): Friedman chi2={:.4} p={:.6}; Iman-Davenport F={:.4} p={:.6}",
            r.dataset, r.n_blocks, r.friedman_statistic, r.friedman_p, r.iman_davenport_f, r.iman_davenport_p
        );
        for (s, rank) in r.schemes.iter().zip(&r.mean_ranks) {
            println!("  {s:<18} mean rank {rank:.3}");
        }
        for (a, b, p) in &r.significant_pairs {
            println!("  {a} vs {b}: p={p:.6} (significant)");
        }
    }
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_stems() {
        assert_eq!(file_stem("1-7 (imb_r=0.2)"), "1-7_imb_r_0.2");
        assert_eq!(file_stem("SD100"), "sd100");
    }
}
