//! WGAN training on appended label representations and clean-sample generation.
//!
//! The generator maps an appended noisy point `d̃ = (x, ỹ, l·ỹ, …)` to a point of
//! the same width; the critic scores appended points. After training, pushing
//! the noisy set through the generator and decoding the label tail yields the
//! clean training set for the final classifier.

mod objectives;

pub use objectives::{
    binary_entropy_logit, critic_entropy_term, critic_objective, generator_entropy_term,
    generator_objective, ObjectiveGrad,
};

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::nn::{chain_specs, init_network, rmsprop_step, Activation, Direction, MlpNetwork, OptimizerState};
use crate::noise::{append_dataset, decode_dataset, AppendConfig};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// One appended label coordinate, decoded by thresholding.
    WganY,
    /// `k` appended scaled label coordinates, decoded by majority vote.
    WganXtraY,
    /// As `WganXtraY` plus the generator and critic entropy terms.
    WganXtraYEntr,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::WganY, Scheme::WganXtraY, Scheme::WganXtraYEntr];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::WganY => "wgan_y",
            Scheme::WganXtraY => "wgan_xtra_y",
            Scheme::WganXtraYEntr => "wgan_xtra_y_entr",
        }
    }

    /// Default outer iteration count.
    pub fn default_iterations(self) -> usize {
        match self {
            Scheme::WganXtraYEntr => 1000,
            _ => 500,
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WganConfig {
    pub scheme: Scheme,
    pub alpha: f64,
    /// Critic clip bound.
    pub c: f64,
    /// Critic steps per generator step.
    pub n_c: usize,
    pub m_b: usize,
    pub n_it: usize,
    pub append: AppendConfig,
    /// Multiplier on both entropy gradients (only read by `WganXtraYEntr`).
    pub entropy_weight: f64,
    pub generator_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub seed: u64,
}

impl WganConfig {
    pub fn new(scheme: Scheme, seed: u64) -> Self {
        Self {
            scheme,
            alpha: 1e-3,
            c: 0.01,
            n_c: 5,
            m_b: 64,
            n_it: scheme.default_iterations(),
            append: AppendConfig::default(),
            entropy_weight: 1.0,
            generator_hidden: vec![64, 128, 128],
            critic_hidden: vec![128, 128],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("clip bound c must be > 0, got {}", self.c)));
        }
        if self.n_c == 0 || self.m_b == 0 {
            return Err(Error::Config("n_c and m_b must be positive".into()));
        }
        if !(self.entropy_weight >= 0.0 && self.entropy_weight.is_finite()) {
            return Err(Error::Config(format!(
                "entropy_weight must be finite and >= 0, got {}",
                self.entropy_weight
            )));
        }
        if self.generator_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be > 0".into()));
        }
        self.append.validate()
    }

    /// The appended block used by this scheme; `None` means a single `y`.
    pub fn label_block(&self) -> Option<&AppendConfig> {
        match self.scheme {
            Scheme::WganY => None,
            _ => Some(&self.append),
        }
    }

    pub fn label_width(&self) -> usize {
        self.label_block().map_or(1, |c| c.k)
    }

    fn entropy(&self) -> Option<f64> {
        match self.scheme {
            Scheme::WganXtraYEntr if self.entropy_weight > 0.0 => Some(self.entropy_weight),
            _ => None,
        }
    }
}

/// Generator and critic.
#[derive(Debug, Clone, PartialEq)]
pub struct GanPair {
    pub generator: MlpNetwork,
    pub critic: MlpNetwork,
}

impl GanPair {
    /// Fresh Glorot-initialised pair for `n` features.
    pub fn init(n_features: usize, cfg: &WganConfig) -> Result<Self> {
        let width = n_features + cfg.label_width();
        let mut g_widths = vec![width];
        g_widths.extend(&cfg.generator_hidden);
        g_widths.push(width);
        let mut d_widths = vec![width];
        d_widths.extend(&cfg.critic_hidden);
        d_widths.push(1);
        Ok(Self {
            generator: init_network(
                &chain_specs(&g_widths, Activation::Relu, Activation::Linear),
                derive_seed(cfg.seed, 1),
            )?,
            critic: init_network(
                &chain_specs(&d_widths, Activation::Relu, Activation::Linear),
                derive_seed(cfg.seed, 2),
            )?,
        })
    }

    /// Appended width `n + k`.
    pub fn width(&self) -> usize {
        self.generator.input_width()
    }

    pub fn save(&self, dir: impl AsRef<Path>, tag: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.generator.save(dir.join(format!("generator_{tag}.json")))?;
        self.critic.save(dir.join(format!("critic_{tag}.json")))
    }

    pub fn load(dir: impl AsRef<Path>, tag: &str) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(Self {
            generator: MlpNetwork::load(dir.join(format!("generator_{tag}.json")))?,
            critic: MlpNetwork::load(dir.join(format!("critic_{tag}.json")))?,
        })
    }
}

/// One outer iteration of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// WGAN objective of the last critic step.
    pub critic_obj: f64,
    /// `−mean D(G(d̃))` at the generator step.
    pub gen_obj: f64,
    /// Generator entropy term (always computed, only applied by the entropy scheme).
    pub entr_g: f64,
    /// Critic entropy term of the last critic step.
    pub entr_d: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<IterationRecord>,
    pub elapsed_secs: f64,
}

impl TrainLog {
    pub const CSV_HEADER: [&'static str; 5] = ["iteration", "critic_obj", "gen_obj", "entr_g", "entr_d"];

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Trailing moving average of the critic objective with the given window.
    pub fn critic_moving_average(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        let vals: Vec<f64> = self.records.iter().map(|r| r.critic_obj).collect();
        vals.windows(w.min(vals.len().max(1)))
            .map(|s| s.iter().sum::<f64>() / s.len() as f64)
            .collect()
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl std::io::Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        if header != Self::CSV_HEADER {
            return Err(Error::format("train log header", header.join(",")));
        }
        let records = r.deserialize().collect::<std::result::Result<Vec<IterationRecord>, _>>()?;
        Ok(Self {
            records,
            elapsed_secs: 0.0,
        })
    }
}

/// Saves the pair every `every` iterations (and after the last one) into `dir`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpointer {
    pub dir: PathBuf,
    pub every: usize,
}

impl Checkpointer {
    pub fn observe(&self, record: &IterationRecord, pair: &GanPair, n_it: usize) -> Result<()> {
        let it = record.iteration + 1;
        if self.every > 0 && (it % self.every == 0 || it == n_it) {
            pair.save(&self.dir, &format!("{it:06}"))?;
        }
        Ok(())
    }
}

fn sample_rows(src: &Array2<f64>, m: usize, rng: &mut Rng) -> Array2<f64> {
    let mut out = Array2::zeros((m, src.ncols()));
    for mut row in out.rows_mut() {
        row.assign(&src.row(rng.random_range(0..src.nrows())));
    }
    out
}

/// Trains a fresh pair on the clean gold set and the noisy GAN set.
pub fn train(cfg: &WganConfig, clean: &LabeledDataset, noisy: &LabeledDataset) -> Result<(GanPair, TrainLog)> {
    train_with_observer(cfg, clean, noisy, |_, _| Ok(()))
}

/// Like [`train`], calling `observer` after every outer iteration.
pub fn train_with_observer(
    cfg: &WganConfig,
    clean: &LabeledDataset,
    noisy: &LabeledDataset,
    mut observer: impl FnMut(&IterationRecord, &GanPair) -> Result<()>,
) -> Result<(GanPair, TrainLog)> {
    cfg.validate()?;
    if clean.is_empty() || noisy.is_empty() {
        return Err(Error::Data("clean and noisy sets must be non-empty".into()));
    }
    if clean.n_features() != noisy.n_features() {
        return Err(Error::Contract(format!(
            "clean set has {} features, noisy set {}",
            clean.n_features(),
            noisy.n_features()
        )));
    }
    let start = Instant::now();
    let mut pair = GanPair::init(clean.n_features(), cfg)?;
    let block = cfg.label_block();
    let clean_app = append_dataset(clean, block);
    let noisy_app = append_dataset(noisy, block);
    let mut opt_d = OptimizerState::new(&pair.critic, cfg.alpha)?;
    let mut opt_g = OptimizerState::new(&pair.generator, cfg.alpha)?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 3));
    let entropy = cfg.entropy();
    let mut log = TrainLog::default();

    for it in 0..cfg.n_it {
        let mut critic_obj = 0.0;
        let mut entr_d = 0.0;
        for _ in 0..cfg.n_c {
            let real = sample_rows(&clean_app, cfg.m_b, &mut rng);
            let src = sample_rows(&noisy_app, cfg.m_b, &mut rng);
            let fake = pair.generator.predict(src.view())?;
            let (obj, e) = objectives::critic_gradients(&pair.critic, real.view(), fake.view(), entropy)?;
            guard(it, "critic objective", obj.value)?;
            rmsprop_step(&mut pair.critic, &obj.grads, &mut opt_d, Direction::Ascend)?;
            pair.critic.clip_weights(cfg.c)?;
            critic_obj = obj.value;
            entr_d = e;
        }
        let src = sample_rows(&noisy_app, cfg.m_b, &mut rng);
        let (obj, entr_g) = objectives::generator_gradients(&pair.critic, &pair.generator, src.view(), entropy)?;
        guard(it, "generator objective", obj.value)?;
        rmsprop_step(&mut pair.generator, &obj.grads, &mut opt_g, Direction::Descend)?;
        if !pair.generator.is_finite() {
            return Err(abort(it, "generator parameters"));
        }
        let record = IterationRecord {
            iteration: it,
            critic_obj,
            gen_obj: obj.value,
            entr_g,
            entr_d,
        };
        if it % 100 == 0 {
            log::debug!(
                "{} it {it}: critic {critic_obj:.6} gen {:.6} entr_g {entr_g:.4}",
                cfg.scheme,
                obj.value
            );
        }
        observer(&record, &pair)?;
        log.records.push(record);
    }
    log.elapsed_secs = start.elapsed().as_secs_f64();
    Ok((pair, log))
}

fn abort(it: usize, what: &str) -> Error {
    log::error!("training aborted at iteration {it}: non-finite {what}");
    Error::Numeric(format!("non-finite {what} at iteration {it}"))
}

fn guard(it: usize, what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(abort(it, what))
    }
}

/// Pushes every noisy example through the generator and decodes the label tail.
///
/// `block = None` decodes a single appended coordinate.
pub fn generate_clean(
    pair: &GanPair,
    noisy: &LabeledDataset,
    block: Option<&AppendConfig>,
) -> Result<LabeledDataset> {
    let input = append_dataset(noisy, block);
    if input.ncols() != pair.width() {
        return Err(Error::Contract(format!(
            "appended width {} does not match generator width {}",
            input.ncols(),
            pair.width()
        )));
    }
    const CHUNK: usize = 1024;
    let mut out = Array2::zeros(input.raw_dim());
    for start in (0..input.nrows()).step_by(CHUNK) {
        let end = (start + CHUNK).min(input.nrows());
        let g = pair.generator.predict(input.slice(s![start..end, ..]))?;
        out.slice_mut(s![start..end, ..]).assign(&g);
    }
    decode_dataset(&format!("{} (generated)", noisy.name()), out.view(), block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;
    use crate::noise::{inject_ccn, NoiseRates};

    fn toy(m: usize, seed: u64) -> LabeledDataset {
        let mut rng = rng_from_seed(seed);
        let mut labels = Vec::with_capacity(m);
        let f = Array2::from_shape_fn((m, 3), |(i, _)| {
            let pos = i % 2 == 0;
            (if pos { 1.0 } else { -1.0 }) + rng.random_range(-0.3..0.3)
        });
        for i in 0..m {
            labels.push(if i % 2 == 0 { Label::Positive } else { Label::Negative });
        }
        LabeledDataset::new("toy", f, labels).unwrap()
    }

    fn small_cfg(scheme: Scheme, n_it: usize) -> WganConfig {
        let mut c = WganConfig::new(scheme, 9);
        c.n_it = n_it;
        c.m_b = 16;
        c.generator_hidden = vec![8, 8];
        c.critic_hidden = vec![8];
        c
    }

    #[test]
    fn scheme_names_roundtrip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("wgan".parse::<Scheme>().is_err());
        assert_eq!(WganConfig::new(Scheme::WganXtraYEntr, 0).n_it, 1000);
    }

    #[test]
    fn architecture_widths_for_mnist() {
        let cfg = WganConfig::new(Scheme::WganXtraY, 0);
        let pair = GanPair::init(784, &cfg).unwrap();
        let gw: Vec<usize> = pair.generator.layers().iter().map(|l| l.output_width).collect();
        assert_eq!(pair.generator.input_width(), 789);
        assert_eq!(gw, vec![64, 128, 128, 789]);
        assert_eq!(pair.critic.input_width(), 789);
        assert_eq!(pair.critic.output_width(), 1);
        assert_eq!(pair.critic.layers().last().unwrap().activation, Activation::Linear);
        let y = GanPair::init(784, &WganConfig::new(Scheme::WganY, 0)).unwrap();
        assert_eq!(y.width(), 785);
    }

    #[test]
    fn config_validation() {
        let mut c = WganConfig::new(Scheme::WganXtraY, 0);
        c.c = 0.0;
        assert!(c.validate().is_err());
        let mut c = WganConfig::new(Scheme::WganXtraY, 0);
        c.m_b = 0;
        assert!(c.validate().is_err());
        let mut c = WganConfig::new(Scheme::WganXtraY, 0);
        c.append.k = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_iterations_returns_initialization() {
        let ds = toy(20, 1);
        let cfg = small_cfg(Scheme::WganXtraY, 0);
        let (pair, log) = train(&cfg, &ds, &ds).unwrap();
        assert_eq!(pair, GanPair::init(3, &cfg).unwrap());
        assert!(log.is_empty());
    }

    #[test]
    fn critic_stays_clipped_every_iteration() {
        let ds = toy(30, 2);
        let cfg = small_cfg(Scheme::WganXtraYEntr, 15);
        let mut seen = 0;
        train_with_observer(&cfg, &ds, &ds, |_, p| {
            assert!(p.critic.max_abs_param() <= cfg.c);
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 15);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let ds = toy(30, 3);
        let cfg = small_cfg(Scheme::WganXtraYEntr, 10);
        let (a, la) = train(&cfg, &ds, &ds).unwrap();
        let (b, lb) = train(&cfg, &ds, &ds).unwrap();
        assert_eq!(a, b);
        assert_eq!(la.records, lb.records);
    }

    #[test]
    fn zero_entropy_weight_reproduces_xtra_y() {
        let clean = toy(10, 4);
        let noisy = inject_ccn(&toy(40, 5), NoiseRates::new(0.2, 0.3).unwrap(), 6).unwrap();
        let plain = small_cfg(Scheme::WganXtraY, 12);
        let mut entr = small_cfg(Scheme::WganXtraYEntr, 12);
        entr.entropy_weight = 0.0;
        let (a, _) = train(&plain, &clean, &noisy).unwrap();
        let (b, _) = train(&entr, &clean, &noisy).unwrap();
        assert_eq!(a, b);
        entr.entropy_weight = 1.0;
        let (c, _) = train(&entr, &clean, &noisy).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn one_record_per_iteration_and_csv_roundtrip() {
        let ds = toy(20, 7);
        let (_, log) = train(&small_cfg(Scheme::WganY, 7), &ds, &ds).unwrap();
        assert_eq!(log.len(), 7);
        assert!(log.records.iter().enumerate().all(|(i, r)| r.iteration == i));
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("iteration,critic_obj,gen_obj,entr_g,entr_d\n"));
        assert_eq!(TrainLog::read_csv(buf.as_slice()).unwrap().records, log.records);
    }

    #[test]
    fn moving_average_window() {
        let mut log = TrainLog::default();
        for i in 0..5 {
            log.records.push(IterationRecord {
                iteration: i,
                critic_obj: i as f64,
                gen_obj: 0.0,
                entr_g: 0.0,
                entr_d: 0.0,
            });
        }
        assert_eq!(log.critic_moving_average(2), vec![0.5, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn generate_clean_size_and_codomain() {
        let noisy = toy(37, 8);
        for scheme in Scheme::ALL {
            let cfg = small_cfg(scheme, 3);
            let (pair, _) = train(&cfg, &noisy, &noisy).unwrap();
            let out = generate_clean(&pair, &noisy, cfg.label_block()).unwrap();
            assert_eq!(out.len(), 37);
            assert_eq!(out.n_features(), 3);
        }
    }

    #[test]
    fn mismatched_features_rejected() {
        let a = toy(10, 1);
        let b = LabeledDataset::new("b", Array2::zeros((4, 2)), vec![Label::Positive; 4]).unwrap();
        assert!(matches!(
            train(&small_cfg(Scheme::WganXtraY, 1), &a, &b),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn checkpoints_are_written_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy(20, 1);
        let cfg = small_cfg(Scheme::WganXtraY, 5);
        let ck = Checkpointer {
            dir: dir.path().to_path_buf(),
            every: 2,
        };
        let (pair, _) = train_with_observer(&cfg, &ds, &ds, |r, p| ck.observe(r, p, cfg.n_it)).unwrap();
        for tag in ["000002", "000004", "000005"] {
            assert!(dir.path().join(format!("generator_{tag}.json")).exists());
        }
        assert_eq!(GanPair::load(dir.path(), "000005").unwrap(), pair);
    }
}
