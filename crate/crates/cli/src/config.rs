//! TOML configuration files for every subcommand.
//!
//! Relative paths inside a config are resolved against the directory that
//! holds the config file.

use std::fs;
use std::path::{Path, PathBuf};

use labelgan_core::analysis::{CounterexampleSearch, EtaModel, SearchDirection};
use labelgan_core::data::{SplitSpec, SyntheticSpec, IDX_FILE_NAMES};
use labelgan_core::eval::{ExperimentSpec, ModelMConfig, TrialScheme};
use labelgan_core::wgan::{Scheme, WganConfig};
use labelgan_core::{AppendConfig, NoiseRates};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ConfigError;

/// Overrides the IDX directory of an experiment config.
pub const DATA_DIR_ENV: &str = "LABELGAN_DATA_DIR";

pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::new(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| ConfigError::new(format!("invalid config {}: {e}", path.display())))
}

pub fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string_pretty(value).expect("config types always serialize")
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parameters of a two-Gaussian synthetic problem. Omitted fields take the
/// standard values (6000 train, 750 test, variance 8).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    #[serde(default = "default_m_train")]
    pub m_train: usize,
    #[serde(default = "default_m_test")]
    pub m_test: usize,
    #[serde(default = "default_half")]
    pub bern_p_label: f64,
    #[serde(default = "default_p_sign")]
    pub bern_p_sign: f64,
    #[serde(default = "default_mu_range")]
    pub mu_range: f64,
    #[serde(default = "default_variance")]
    pub variance: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_m_train() -> usize {
    6000
}
fn default_m_test() -> usize {
    750
}
fn default_half() -> f64 {
    0.5
}
fn default_p_sign() -> f64 {
    0.4
}
fn default_mu_range() -> f64 {
    2.0
}
fn default_variance() -> f64 {
    8.0
}

impl SyntheticConfig {
    pub fn standard(n: usize) -> Self {
        let s = SyntheticSpec::standard(n, 0);
        Self {
            n,
            m_train: s.m_train,
            m_test: s.m_test,
            bern_p_label: s.bern_p_label,
            bern_p_sign: s.bern_p_sign,
            mu_range: s.mu_range,
            variance: s.variance,
            seed: 0,
        }
    }

    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n: self.n,
            m_train: self.m_train,
            m_test: self.m_test,
            bern_p_label: self.bern_p_label,
            bern_p_sign: self.bern_p_sign,
            mu_range: self.mu_range,
            variance: self.variance,
            seed: self.seed,
        }
    }
}

/// `labelgan synth`: one synthetic problem written as train/test CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.synthetic.spec().validate().map_err(ConfigError::from)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxConfig {
    /// Directory with the four standard IDX files.
    pub dir: PathBuf,
    /// Digit pair `[a, b]`; `a` is positive unless it is 0.
    pub pair: [u8; 2],
    /// Positive-class fraction of an imbalanced version.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imb_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic(SyntheticConfig),
    Idx(IdxConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub gold_fraction: f64,
    #[serde(default = "default_gan_fraction")]
    pub gan_fraction: f64,
    #[serde(default = "default_model_m_fraction")]
    pub model_m_fraction: f64,
}

fn default_gan_fraction() -> f64 {
    0.84
}
fn default_model_m_fraction() -> f64 {
    0.15
}

impl SplitConfig {
    pub fn spec(&self) -> SplitSpec {
        SplitSpec {
            gold_fraction: self.gold_fraction,
            gan_fraction: self.gan_fraction,
            model_m_fraction: self.model_m_fraction,
            seed: 0,
        }
    }
}

/// WGAN hyperparameters shared by every scheme of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WganSettings {
    pub alpha: f64,
    pub c: f64,
    pub n_c: usize,
    pub m_b: usize,
    /// Outer iterations; omitted means each scheme's default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_it: Option<usize>,
    pub append: AppendConfig,
    pub entropy_weight: f64,
    pub generator_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Save the generator and critic every this many iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for WganSettings {
    fn default() -> Self {
        let c = WganConfig::new(Scheme::WganXtraY, 0);
        Self {
            alpha: c.alpha,
            c: c.c,
            n_c: c.n_c,
            m_b: c.m_b,
            n_it: None,
            append: c.append,
            entropy_weight: c.entropy_weight,
            generator_hidden: c.generator_hidden,
            critic_hidden: c.critic_hidden,
            checkpoint_every: 0,
        }
    }
}

impl WganSettings {
    pub fn template(&self) -> WganConfig {
        WganConfig {
            alpha: self.alpha,
            c: self.c,
            n_c: self.n_c,
            m_b: self.m_b,
            n_it: self.n_it.unwrap_or(0),
            append: self.append,
            entropy_weight: self.entropy_weight,
            generator_hidden: self.generator_hidden.clone(),
            critic_hidden: self.critic_hidden.clone(),
            ..WganConfig::new(Scheme::WganXtraY, 0)
        }
    }
}

/// `labelgan run`: one dataset, several schemes, several noise settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub schemes: Vec<TrialScheme>,
    pub rates: Vec<NoiseRates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    #[serde(default)]
    pub wgan: WganSettings,
    #[serde(default)]
    pub model_m: ModelMConfig,
}

impl ExperimentConfig {
    pub fn example() -> Self {
        Self {
            seed: 1,
            trials: 3,
            schemes: vec![TrialScheme::SimpleNn, TrialScheme::Wgan(Scheme::WganXtraY)],
            rates: vec![NoiseRates {
                rho_plus: 0.45,
                rho_minus: 0.46,
            }],
            out: Some("runs/sd100".into()),
            dataset: DatasetConfig::Synthetic(SyntheticConfig::standard(100)),
            split: SplitConfig {
                gold_fraction: 0.001,
                gan_fraction: default_gan_fraction(),
                model_m_fraction: default_model_m_fraction(),
            },
            wgan: WganSettings::default(),
            model_m: ModelMConfig::default(),
        }
    }

    /// Makes every path absolute (relative to `base`) and applies the
    /// data-directory override.
    pub fn resolve_paths(&mut self, base: &Path, data_dir_override: Option<&Path>) {
        if let DatasetConfig::Idx(idx) = &mut self.dataset {
            idx.dir = match data_dir_override {
                Some(d) => d.to_path_buf(),
                None => resolve(base, &idx.dir),
            };
        }
        if let Some(out) = &mut self.out {
            *out = resolve(base, out);
        }
    }

    /// Lists every problem with the config; empty means valid.
    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        match &self.dataset {
            DatasetConfig::Synthetic(s) => {
                if let Err(e) = s.spec().validate() {
                    problems.push(e.to_string());
                }
            }
            DatasetConfig::Idx(idx) => {
                if idx.pair[0] == idx.pair[1] {
                    problems.push(format!("digit pair needs two distinct classes, got {:?}", idx.pair));
                }
                if let Some(r) = idx.imb_r {
                    if !(r > 0.0 && r < 1.0) {
                        problems.push(format!("imb_r must lie in (0,1), got {r}"));
                    }
                }
                for name in IDX_FILE_NAMES {
                    let p = idx.dir.join(name);
                    if !p.is_file() {
                        problems.push(format!("missing IDX file {}", p.display()));
                    }
                }
            }
        }
        let mut seen = Vec::new();
        for s in &self.schemes {
            if seen.contains(s) {
                problems.push(format!("scheme {s} listed twice"));
            }
            seen.push(*s);
        }
        if let Err(e) = self.spec("check").validate() {
            problems.push(e.to_string());
        }
        if self.out.is_none() {
            problems.push("no output directory (set `out` or pass --out)".to_owned());
        }
        problems
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::list(problems))
        }
    }

    pub fn spec(&self, dataset_name: &str) -> ExperimentSpec {
        ExperimentSpec {
            dataset: dataset_name.to_owned(),
            schemes: self.schemes.clone(),
            rates: self.rates.clone(),
            trials: self.trials,
            split: self.split.spec(),
            wgan: self.wgan.template(),
            iterations: self.wgan.n_it,
            model_m: self.model_m.clone(),
            master_seed: self.seed,
            checkpoints: None,
        }
    }
}

/// A distribution of `η(X)` for the KL analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaModelConfig {
    /// Equal-weight atoms.
    Uniform { id: String, etas: Vec<f64> },
    Empirical {
        id: String,
        etas: Vec<f64>,
        weights: Vec<f64>,
    },
    /// The exact posterior of a synthetic problem, by Monte Carlo.
    Synthetic {
        id: String,
        n: usize,
        #[serde(default)]
        problem_seed: u64,
        samples: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl EtaModelConfig {
    pub fn id(&self) -> &str {
        match self {
            EtaModelConfig::Uniform { id, .. }
            | EtaModelConfig::Empirical { id, .. }
            | EtaModelConfig::Synthetic { id, .. } => id,
        }
    }

    pub fn build(&self) -> labelgan_core::Result<EtaModel> {
        match self {
            EtaModelConfig::Uniform { etas, .. } => EtaModel::uniform(etas.clone()),
            EtaModelConfig::Empirical { etas, weights, .. } => EtaModel::empirical(etas.clone(), weights.clone()),
            EtaModelConfig::Synthetic {
                n,
                problem_seed,
                samples,
                seed,
                ..
            } => {
                let mut spec = SyntheticSpec::standard(*n, *problem_seed);
                spec.validate()?;
                spec.m_train = 1;
                spec.m_test = 1;
                EtaModel::synthetic(&spec, *samples, *seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub eta_range: (f64, f64),
    pub rho_range: (f64, f64),
    pub grid: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let s = CounterexampleSearch::new(SearchDirection::RhoPlus);
        Self {
            eta_range: s.eta_range,
            rho_range: s.rho_range,
            grid: s.grid,
        }
    }
}

impl SearchConfig {
    pub fn search(&self, direction: SearchDirection) -> CounterexampleSearch {
        CounterexampleSearch {
            eta_range: self.eta_range,
            rho_range: self.rho_range,
            grid: self.grid,
            ..CounterexampleSearch::new(direction)
        }
    }
}

/// `labelgan kl`: monotonicity checks, counterexample search and a rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Symmetric rates for the monotonicity check, strictly increasing in (0, 0.5).
    pub rho_grid: Vec<f64>,
    /// Step of the `(ρ₊, ρ₋)` sweep grid over `[0, sweep_max]²`; 0 disables.
    pub sweep_step: f64,
    pub sweep_max: f64,
    pub eta_models: Vec<EtaModelConfig>,
    pub search: SearchConfig,
}

impl Default for KlConfig {
    fn default() -> Self {
        Self {
            out: None,
            rho_grid: (1..10).map(|i| i as f64 / 20.0).collect(),
            sweep_step: 0.05,
            sweep_max: 0.45,
            eta_models: vec![EtaModelConfig::Uniform {
                id: "uniform9".into(),
                etas: (1..10).map(|i| i as f64 / 10.0).collect(),
            }],
            search: SearchConfig::default(),
        }
    }
}

impl KlConfig {
    pub fn sweep_rates(&self) -> Vec<NoiseRates> {
        if self.sweep_step <= 0.0 {
            return Vec::new();
        }
        let n = (self.sweep_max / self.sweep_step + 1e-9).floor() as usize;
        let axis: Vec<f64> = (0..=n)
            .map(|i| (i as f64 * self.sweep_step * 1e9).round() / 1e9)
            .collect();
        axis.iter()
            .flat_map(|&p| {
                axis.iter().map(move |&m| NoiseRates {
                    rho_plus: p,
                    rho_minus: m,
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.rho_grid.iter().any(|r| !(*r > 0.0 && *r < 0.5)) {
            problems.push("rho_grid values must lie inside (0, 0.5)".to_owned());
        }
        if self.rho_grid.windows(2).any(|w| w[0] >= w[1]) {
            problems.push("rho_grid must be strictly increasing".to_owned());
        }
        if !(self.sweep_step >= 0.0) || !(0.0..1.0).contains(&self.sweep_max) {
            problems.push("sweep_step must be >= 0 and sweep_max in [0, 1)".to_owned());
        }
        if self.eta_models.is_empty() {
            problems.push("no eta models given".to_owned());
        }
        let mut ids = Vec::new();
        for m in &self.eta_models {
            if ids.contains(&m.id()) {
                problems.push(format!("eta model id {:?} used twice", m.id()));
            }
            ids.push(m.id());
            if let Err(e) = m.build() {
                problems.push(format!("eta model {:?}: {e}", m.id()));
            }
        }
        let (e0, e1) = self.search.eta_range;
        let (r0, r1) = self.search.rho_range;
        if !(0.0 < e0 && e0 <= e1 && e1 < 1.0) || !(0.0 <= r0 && r0 <= r1 && r1 < 1.0) || self.search.grid == 0 {
            problems.push("search ranges must lie inside (0,1) / [0,1) with a positive grid".to_owned());
        }
        if self.out.is_none() {
            problems.push("no output directory (set `out` or pass --out)".to_owned());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::list(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_config_round_trips() {
        let mut cfg = ExperimentConfig::example();
        cfg.wgan.n_it = Some(7);
        cfg.dataset = DatasetConfig::Idx(IdxConfig {
            dir: "data/mnist".into(),
            pair: [1, 7],
            imb_r: Some(0.2),
        });
        let text = to_toml(&cfg);
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn kl_and_synth_configs_round_trip() {
        let mut kl = KlConfig::default();
        kl.eta_models.push(EtaModelConfig::Synthetic {
            id: "sd10".into(),
            n: 10,
            problem_seed: 2,
            samples: 100,
            seed: 3,
        });
        assert_eq!(toml::from_str::<KlConfig>(&to_toml(&kl)).unwrap(), kl);
        let synth = SynthConfig {
            out: Some("x".into()),
            synthetic: SyntheticConfig::standard(300),
        };
        assert_eq!(toml::from_str::<SynthConfig>(&to_toml(&synth)).unwrap(), synth);
    }

    #[test]
    fn minimal_experiment_uses_defaults() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            seed = 3
            trials = 1
            schemes = ["wgan_xtra_y_entr"]
            rates = [{ rho_plus = 0.1, rho_minus = 0.2 }]
            out = "o"
            [dataset]
            kind = "synthetic"
            n = 100
            [split]
            gold_fraction = 0.01
            "#,
        )
        .unwrap();
        assert_eq!(cfg.model_m, ModelMConfig::default());
        assert_eq!(cfg.wgan, WganSettings::default());
        assert_eq!(cfg.split.gan_fraction, 0.84);
        assert!(cfg.problems().is_empty(), "{:?}", cfg.problems());
    }

    #[test]
    fn problems_are_listed_together() {
        let mut cfg = ExperimentConfig::example();
        cfg.trials = 0;
        cfg.schemes.push(TrialScheme::SimpleNn);
        cfg.split.gold_fraction = 0.0;
        cfg.dataset = DatasetConfig::Idx(IdxConfig {
            dir: "/nonexistent".into(),
            pair: [3, 3],
            imb_r: Some(1.5),
        });
        let p = cfg.problems();
        assert!(p.len() >= 8, "{p:?}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = to_toml(&ExperimentConfig::example()).replace("trials = 3", "trials = 3\ntrails = 4");
        assert!(toml::from_str::<ExperimentConfig>(&text).is_err());
    }

    #[test]
    fn default_kl_sweep_grid() {
        let kl = KlConfig::default();
        assert_eq!(kl.sweep_rates().len(), 100);
        assert!(kl.validate().is_err());
    }
}
