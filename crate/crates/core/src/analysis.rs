//! KL divergence between clean and noisy class posteriors.
//!
//! For a point with in-class probability `η` and corrupted probability
//! `η̃ = (1−ρ₊−ρ₋)η + ρ₋`, the conditional divergence is the Bernoulli KL
//! `η ln(η/η̃) + (1−η) ln((1−η)/(1−η̃))` in nats, with `0·ln 0 = 0`.
//! Under symmetric noise it grows with `ρ`; under asymmetric noise it need not.

use std::io::Write;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{synthetic_means, SyntheticSpec};
use crate::noise::{corrupted_eta, NoiseRates};
use crate::rng::{rng_from_seed, Rng};
use crate::{Error, Result};

/// Distribution of `η(X)`.
#[derive(Clone)]
pub enum EtaModel {
    /// Finite atoms with nonnegative weights summing to one.
    Empirical { etas: Vec<f64>, weights: Vec<f64> },
    /// `η` evaluated on features drawn by `sampler`, averaged by Monte Carlo.
    Sampled {
        eta: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        sampler: Arc<dyn Fn(&mut Rng) -> Vec<f64> + Send + Sync>,
        n_samples: usize,
        seed: u64,
    },
}

impl std::fmt::Debug for EtaModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EtaModel::Empirical { etas, .. } => write!(f, "EtaModel::Empirical({} atoms)", etas.len()),
            EtaModel::Sampled { n_samples, seed, .. } => {
                write!(f, "EtaModel::Sampled(n={n_samples}, seed={seed})")
            }
        }
    }
}

impl EtaModel {
    pub const DEFAULT_SAMPLES: usize = 100_000;

    /// Equal-weight atoms.
    pub fn uniform(etas: Vec<f64>) -> Result<Self> {
        let w = 1.0 / etas.len().max(1) as f64;
        let weights = vec![w; etas.len()];
        Self::empirical(etas, weights)
    }

    pub fn empirical(etas: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if etas.is_empty() || etas.len() != weights.len() {
            return Err(Error::Config("eta model needs matching, non-empty atoms and weights".into()));
        }
        if let Some(e) = etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::Domain(format!("eta value {e} outside [0,1]")));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("eta weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("eta weights sum to {total}, not 1")));
        }
        Ok(EtaModel::Empirical { etas, weights })
    }

    pub fn sampled(
        eta: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        sampler: impl Fn(&mut Rng) -> Vec<f64> + Send + Sync + 'static,
        n_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_samples < 2 {
            return Err(Error::Config("Monte Carlo needs at least 2 samples".into()));
        }
        Ok(EtaModel::Sampled {
            eta: Arc::new(eta),
            sampler: Arc::new(sampler),
            n_samples,
            seed,
        })
    }

    /// The exact `η(x)` of a synthetic Gaussian problem, sampled from its
    /// feature distribution.
    pub fn synthetic(spec: &SyntheticSpec, n_samples: usize, seed: u64) -> Result<Self> {
        let means = Arc::new(synthetic_means(spec)?);
        let p_pos = spec.bern_p_label;
        let sd = spec.variance.sqrt();
        let m = Arc::clone(&means);
        Self::sampled(
            move |x| means.eta(x, p_pos),
            move |rng| {
                let mu = if rng.random::<f64>() < p_pos { &m.mu_pos } else { &m.mu_neg };
                mu.iter()
                    .map(|&c| {
                        let z: f64 = StandardNormal.sample(rng);
                        c + sd * z
                    })
                    .collect()
            },
            n_samples,
            seed,
        )
    }

    /// Weighted mean of `f(η)`, with its Monte Carlo standard error.
    ///
    /// Sampled models redraw the same features for every call (common random
    /// numbers), so estimates at different noise rates are directly comparable.
    fn expect(&self, f: impl Fn(f64) -> Result<f64>) -> Result<KlEstimate> {
        match self {
            EtaModel::Empirical { etas, weights } => {
                let mut value = 0.0;
                for (&e, &w) in etas.iter().zip(weights) {
                    if w > 0.0 {
                        value += w * f(e)?;
                    }
                }
                Ok(KlEstimate {
                    value,
                    std_error: 0.0,
                    n_samples: etas.len(),
                })
            }
            EtaModel::Sampled {
                eta,
                sampler,
                n_samples,
                seed,
            } => {
                let mut rng = rng_from_seed(*seed);
                let (mut sum, mut sq) = (0.0, 0.0);
                for _ in 0..*n_samples {
                    let e = eta(&sampler(&mut rng));
                    if !(0.0..=1.0).contains(&e) {
                        return Err(Error::Domain(format!("sampled eta {e} outside [0,1]")));
                    }
                    let v = f(e)?;
                    sum += v;
                    sq += v * v;
                }
                let n = *n_samples as f64;
                let mean = sum / n;
                let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
                Ok(KlEstimate {
                    value: mean,
                    std_error: (var / n).sqrt(),
                    n_samples: *n_samples,
                })
            }
        }
    }
}

/// An expected KL divergence in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub value: f64,
    /// Zero for empirical models.
    pub std_error: f64,
    pub n_samples: usize,
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::Domain(format!("eta must lie in [0,1], got {eta}")))
    }
}

fn check_sln_rho(rho: f64) -> Result<()> {
    if (0.0..0.5).contains(&rho) {
        Ok(())
    } else {
        Err(Error::Domain(format!("symmetric noise rate must lie in [0,0.5), got {rho}")))
    }
}

/// `p ln(p/q)` with `0·ln(0/q) = 0`.
fn xlogx_ratio(p: f64, q: f64) -> Result<f64> {
    if p == 0.0 {
        Ok(0.0)
    } else if q <= 0.0 {
        Err(Error::Domain(format!("log argument {p}/{q} is not finite")))
    } else {
        Ok(p * (p / q).ln())
    }
}

/// Bernoulli KL `KL(Bern(p) ‖ Bern(q))` in nats.
pub fn bernoulli_kl(p: f64, q: f64) -> Result<f64> {
    Ok(xlogx_ratio(p, q)? + xlogx_ratio(1.0 - p, 1.0 - q)?)
}

/// Conditional KL under symmetric noise rate `rho`.
///
/// `η ∈ {0,1}` is accepted: with `ρ > 0` the corrupted posterior stays in
/// `[ρ, 1−ρ]`, so the divergence is finite.
pub fn kl_sln_pointwise(eta: f64, rho: f64) -> Result<f64> {
    check_eta(eta)?;
    check_sln_rho(rho)?;
    bernoulli_kl(eta, (1.0 - 2.0 * rho) * eta + rho)
}

/// `d/dρ` of [`kl_sln_pointwise`]: `ρ(1−2η)² / ((η+ρ(1−2η))(1−η−ρ(1−2η)))`.
pub fn kl_sln_derivative(eta: f64, rho: f64) -> Result<f64> {
    check_eta(eta)?;
    check_sln_rho(rho)?;
    let a = 1.0 - 2.0 * eta;
    let den = (eta + rho * a) * (1.0 - eta - rho * a);
    if den <= 0.0 {
        return Err(Error::Domain(format!("derivative denominator {den} at eta={eta}, rho={rho}")));
    }
    Ok(rho * a * a / den)
}

/// `E_X[KL]` under symmetric noise.
pub fn kl_sln_expectation(model: &EtaModel, rho: f64) -> Result<KlEstimate> {
    check_sln_rho(rho)?;
    model.expect(|e| kl_sln_pointwise(e, rho))
}

/// Conditional KL under class-conditional rates.
pub fn kl_ccn_pointwise(eta: f64, rates: NoiseRates) -> Result<f64> {
    check_eta(eta)?;
    rates.validate()?;
    bernoulli_kl(eta, corrupted_eta(eta, rates))
}

/// `E_X[KL]` under class-conditional rates.
pub fn kl_ccn_expectation(model: &EtaModel, rates: NoiseRates) -> Result<KlEstimate> {
    rates.validate()?;
    model.expect(|e| kl_ccn_pointwise(e, rates))
}

/// Partial derivatives of [`kl_ccn_pointwise`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcnPartials {
    pub d_rho_plus: f64,
    pub d_rho_minus: f64,
    /// Directional derivative along `(1, 1)`.
    pub total_diag: f64,
}

/// Closed-form partials.
///
/// With `A = η̃/η` and `B = (1−η̃)/(1−η)`:
/// `∂/∂ρ₊ = η(1/A − 1/B)`, `∂/∂ρ₋ = (1−η)(1/B − 1/A)` and
/// `∂/∂ρ₊ + ∂/∂ρ₋ = (2η−1)(ηρ₊ − (1−η)ρ₋) / (η(1−η)AB)`.
/// Requires `η ∈ (0,1)`.
pub fn kl_ccn_partials(eta: f64, rates: NoiseRates) -> Result<CcnPartials> {
    rates.validate()?;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Domain(format!("partials need eta in (0,1), got {eta}")));
    }
    let et = corrupted_eta(eta, rates);
    let a = et / eta;
    let b = (1.0 - et) / (1.0 - eta);
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!("log argument non-positive at eta={eta}")));
    }
    let (rp, rm) = (rates.rho_plus, rates.rho_minus);
    Ok(CcnPartials {
        d_rho_plus: eta * (1.0 / a - 1.0 / b),
        d_rho_minus: (1.0 - eta) * (1.0 / b - 1.0 / a),
        total_diag: (2.0 * eta - 1.0) * (eta * rp - (1.0 - eta) * rm) / (eta * (1.0 - eta) * a * b),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotonicityVerdict {
    /// Fewer than two grid points.
    Vacuous,
    /// Every value is zero (η ≡ 0.5).
    ConstantDegenerate,
    StrictlyIncreasing,
    NotMonotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub rho_grid: Vec<f64>,
    pub values: Vec<KlEstimate>,
    pub verdict: MonotonicityVerdict,
    /// Smallest successive difference; `None` for a vacuous grid.
    pub min_gap: Option<f64>,
}

/// Evaluates the expected symmetric-noise KL along a sorted grid in `(0, 0.5)`.
pub fn check_sln_monotonicity(model: &EtaModel, rho_grid: &[f64]) -> Result<MonotonicityReport> {
    if rho_grid.iter().any(|r| !(*r > 0.0 && *r < 0.5)) {
        return Err(Error::Config("rho grid must lie inside (0, 0.5)".into()));
    }
    if rho_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("rho grid must be strictly increasing".into()));
    }
    let values = rho_grid
        .iter()
        .map(|&r| kl_sln_expectation(model, r))
        .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = values.windows(2).map(|w| w[1].value - w[0].value).collect();
    let min_gap = gaps.iter().copied().reduce(f64::min);
    let verdict = if values.len() < 2 {
        MonotonicityVerdict::Vacuous
    } else if values.iter().all(|v| v.value.abs() < 1e-15) {
        MonotonicityVerdict::ConstantDegenerate
    } else if gaps.iter().all(|&g| g > 0.0) {
        MonotonicityVerdict::StrictlyIncreasing
    } else {
        MonotonicityVerdict::NotMonotone
    };
    Ok(MonotonicityReport {
        rho_grid: rho_grid.to_vec(),
        values,
        verdict,
        min_gap,
    })
}

/// Which derivative a counterexample search looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchDirection {
    RhoPlus,
    RhoMinus,
    /// Along `(1, 1)`.
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSearch {
    pub direction: SearchDirection,
    pub eta_range: (f64, f64),
    pub rho_range: (f64, f64),
    /// Points per axis of the `η × ρ₊ × ρ₋` grid (endpoints included).
    pub grid: usize,
    /// Only search the diagonal `ρ₊ = ρ₋`.
    pub symmetric_only: bool,
    pub max_evals: usize,
}

impl CounterexampleSearch {
    pub fn new(direction: SearchDirection) -> Self {
        Self {
            direction,
            eta_range: (0.01, 0.99),
            rho_range: (0.01, 0.49),
            grid: 25,
            symmetric_only: false,
            max_evals: 1_000_000,
        }
    }

    fn validate(&self) -> Result<()> {
        let (e0, e1) = self.eta_range;
        let (r0, r1) = self.rho_range;
        if !(0.0 < e0 && e0 <= e1 && e1 < 1.0) {
            return Err(Error::Config(format!("eta range {e0}..{e1} must lie inside (0,1)")));
        }
        if !(0.0 <= r0 && r0 <= r1 && r1 < 1.0) {
            return Err(Error::Config(format!("rho range {r0}..{r1} must lie inside [0,1)")));
        }
        if self.grid == 0 {
            return Err(Error::Config("search grid must be positive".into()));
        }
        Ok(())
    }
}

fn axis(range: (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![range.0];
    }
    (0..n)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
        .collect()
}

/// A point where the KL decreases in the searched direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub eta: f64,
    pub rates: NoiseRates,
    pub direction: SearchDirection,
    pub derivative: f64,
}

/// Grid search for the most negative derivative in the requested direction.
pub fn find_ccn_counterexample(spec: &CounterexampleSearch) -> Result<Counterexample> {
    spec.validate()?;
    let etas = axis(spec.eta_range, spec.grid);
    let rhos = axis(spec.rho_range, spec.grid);
    let mut best: Option<Counterexample> = None;
    let mut evals = 0usize;
    'outer: for &rp in &rhos {
        let minus: &[f64] = if spec.symmetric_only { std::slice::from_ref(&rp) } else { &rhos };
        for &rm in minus {
            let rates = NoiseRates {
                rho_plus: rp,
                rho_minus: rm,
            };
            for &eta in &etas {
                if evals == spec.max_evals {
                    break 'outer;
                }
                evals += 1;
                let Ok(p) = kl_ccn_partials(eta, rates) else { continue };
                let d = match spec.direction {
                    SearchDirection::RhoPlus => p.d_rho_plus,
                    SearchDirection::RhoMinus => p.d_rho_minus,
                    SearchDirection::Diagonal => p.total_diag,
                };
                if d < 0.0 && best.is_none_or(|b| d < b.derivative) {
                    best = Some(Counterexample {
                        eta,
                        rates,
                        direction: spec.direction,
                        derivative: d,
                    });
                }
            }
        }
    }
    best.ok_or_else(|| {
        Error::SearchExhausted(format!(
            "no negative {:?} derivative in {evals} evaluations",
            spec.direction
        ))
    })
}

/// Fixed rates at which the `(1,1)` derivative is negative for one `η` and
/// positive for another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedSignWitness {
    pub rates: NoiseRates,
    pub eta_negative: f64,
    pub total_negative: f64,
    pub eta_positive: f64,
    pub total_positive: f64,
}

/// Searches for rates where the per-point diagonal derivative takes both signs.
pub fn find_mixed_sign_rates(spec: &CounterexampleSearch) -> Result<MixedSignWitness> {
    spec.validate()?;
    let etas = axis(spec.eta_range, spec.grid);
    let rhos = axis(spec.rho_range, spec.grid);
    for &rp in &rhos {
        let minus: &[f64] = if spec.symmetric_only { std::slice::from_ref(&rp) } else { &rhos };
        for &rm in minus {
            let rates = NoiseRates {
                rho_plus: rp,
                rho_minus: rm,
            };
            let mut neg: Option<(f64, f64)> = None;
            let mut pos: Option<(f64, f64)> = None;
            for &eta in &etas {
                let Ok(p) = kl_ccn_partials(eta, rates) else { continue };
                if p.total_diag < 0.0 && neg.is_none_or(|n| p.total_diag < n.1) {
                    neg = Some((eta, p.total_diag));
                }
                if p.total_diag > 0.0 && pos.is_none_or(|n| p.total_diag > n.1) {
                    pos = Some((eta, p.total_diag));
                }
            }
            if let (Some(n), Some(p)) = (neg, pos) {
                return Ok(MixedSignWitness {
                    rates,
                    eta_negative: n.0,
                    total_negative: n.1,
                    eta_positive: p.0,
                    total_positive: p.1,
                });
            }
        }
    }
    Err(Error::SearchExhausted(
        "no rates with a sign change of the diagonal derivative".into(),
    ))
}

/// One row of a noise-rate sweep: expected KL and expected partials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta_model_id: String,
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub kl: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    pub total_diag: f64,
}

/// Evaluates an empirical model on every rate pair. Atoms at exactly 0 or 1
/// are skipped for the partials (their derivative is not defined there).
pub fn ccn_sweep(model_id: &str, model: &EtaModel, rates: &[NoiseRates]) -> Result<Vec<SweepRow>> {
    rates
        .iter()
        .map(|&r| {
            let kl = kl_ccn_expectation(model, r)?.value;
            let interior = |f: fn(&CcnPartials) -> f64| {
                model.expect(|e| {
                    if e > 0.0 && e < 1.0 {
                        kl_ccn_partials(e, r).map(|p| f(&p))
                    } else {
                        Ok(0.0)
                    }
                })
            };
            Ok(SweepRow {
                eta_model_id: model_id.to_owned(),
                rho_plus: r.rho_plus,
                rho_minus: r.rho_minus,
                kl,
                d_plus: interior(|p| p.d_rho_plus)?.value,
                d_minus: interior(|p| p.d_rho_minus)?.value,
                total_diag: interior(|p| p.total_diag)?.value,
            })
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
