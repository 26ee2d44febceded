//! Simulated survival data: a discrete time-varying hazard study with
//! exponential censoring and optional left truncation, and a discrete
//! proportional-hazards generator.
//!
//! Randomness: every subject `i` draws from its own ChaCha8 stream
//! (`seed_from_u64(seed)` with `set_stream(i)`), in the order covariates,
//! censoring time, per-bin events, entry fraction. Truncated subjects are
//! chosen from stream `u64::MAX`. Output is therefore identical for any
//! thread count.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SubjectRecord, SurvivalDataset};
use crate::error::{Error, Result};

const SELECTION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TvHazardConfig {
    /// Total subjects; the first `n_train` form the training set.
    pub n: usize,
    pub n_train: usize,
    pub p: usize,
    /// Bin times are `1..=bins`.
    pub bins: usize,
    pub beta: Vec<f64>,
    /// `eta(t)_k = eta_scale[k] * (5 (t / bins - 0.25)^2 - 1)`.
    pub eta_scale: Vec<f64>,
    /// Constant in `1 / (1 + exp(offset - beta'x - t eta(t)'x))`.
    pub offset: f64,
    /// Exponential censoring rate; zero disables censoring.
    pub censor_rate: f64,
    /// Fraction of training subjects given a delayed entry.
    pub truncate_fraction: f64,
    pub seed: u64,
}

impl Default for TvHazardConfig {
    fn default() -> Self {
        Self {
            n: 3000,
            n_train: 2000,
            p: 5,
            bins: 10,
            beta: vec![-0.08, -0.06, 0.02, 0.0, 0.0],
            eta_scale: vec![1.0, 0.0, 0.0, 0.0, 0.0],
            offset: 5.0,
            censor_rate: 0.2,
            truncate_fraction: 0.0,
            seed: 0,
        }
    }
}

impl TvHazardConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.beta.len() != self.p || self.eta_scale.len() != self.p {
            return bad(format!("beta and eta_scale must have length p = {}", self.p));
        }
        if self.n_train > self.n {
            return bad(format!("n_train {} exceeds n {}", self.n_train, self.n));
        }
        if self.bins == 0 {
            return bad("bins must be positive".into());
        }
        if !(self.censor_rate >= 0.0 && self.censor_rate.is_finite()) {
            return bad(format!("censor rate {} must be finite and non-negative", self.censor_rate));
        }
        if !(0.0..=1.0).contains(&self.truncate_fraction) {
            return bad(format!("truncate fraction {} is outside [0, 1]", self.truncate_fraction));
        }
        Ok(())
    }

    /// Time-varying coefficient vector `eta(t)`.
    pub fn eta(&self, t: f64) -> Vec<f64> {
        let u = t / self.bins as f64 - 0.25;
        let shape = 5.0 * u * u - 1.0;
        self.eta_scale.iter().map(|s| s * shape).collect()
    }
}

/// Discrete hazard of the time-varying study at bin time `t`.
pub fn hazard_tv(cfg: &TvHazardConfig, t: f64, x: &[f64]) -> f64 {
    let eta = cfg.eta(t);
    let lin: f64 = x.iter().zip(&cfg.beta).map(|(a, b)| a * b).sum::<f64>()
        + t * x.iter().zip(&eta).map(|(a, b)| a * b).sum::<f64>();
    1.0 / (1.0 + (cfg.offset - lin).exp())
}

struct Draw {
    x: Vec<f64>,
    exit: f64,
    event: bool,
    entry_fraction: f64,
}

fn subject_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws one subject: covariates, censoring time, the first event bin and a
/// uniform entry fraction in `(0, 1)`.
fn draw_subject(
    seed: u64,
    index: usize,
    p: usize,
    bins: usize,
    censor: Option<&Exp<f64>>,
    hazard: impl Fn(f64, &[f64]) -> f64,
) -> Draw {
    let mut rng = subject_rng(seed, index as u64);
    let x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let censor_time = censor.map_or(f64::INFINITY, |d| d.sample(&mut rng));
    let mut event_time = None;
    for j in 1..=bins {
        let t = j as f64;
        if rng.random::<f64>() < hazard(t, &x) {
            event_time = Some(t);
            break;
        }
    }
    let last = bins as f64;
    let (exit, event) = match event_time {
        Some(t) if t <= censor_time => (t, true),
        _ => (censor_time.min(last), false),
    };
    let entry_fraction = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    Draw { x, exit, event, entry_fraction }
}

fn censoring(rate: f64) -> Option<Exp<f64>> {
    (rate > 0.0).then(|| Exp::new(rate).expect("validated rate"))
}

fn covariate_names(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("x{k}")).collect()
}

fn record(id: usize, d: Draw, delayed: bool) -> SubjectRecord<f64> {
    let entry = if delayed { d.entry_fraction * d.exit } else { 0.0 };
    SubjectRecord { id: id.to_string(), entry, exit: d.exit, event: d.event, covariates: d.x }
}

/// Training and test sets of the time-varying study. Subject ids run from 1
/// through `n`; the test set holds ids above `n_train`.
pub fn simulate_tv(cfg: &TvHazardConfig) -> Result<(SurvivalDataset<f64>, SurvivalDataset<f64>)> {
    cfg.validate()?;
    let censor = censoring(cfg.censor_rate);
    let draws: Vec<Draw> = (0..cfg.n)
        .into_par_iter()
        .map(|i| draw_subject(cfg.seed, i, cfg.p, cfg.bins, censor.as_ref(), |t, x| hazard_tv(cfg, t, x)))
        .collect();

    let n_delayed = (cfg.truncate_fraction * cfg.n_train as f64).floor() as usize;
    let mut delayed = vec![false; cfg.n_train];
    let mut rng = subject_rng(cfg.seed, SELECTION_STREAM);
    for i in sample(&mut rng, cfg.n_train, n_delayed) {
        delayed[i] = true;
    }

    let mut train = Vec::with_capacity(cfg.n_train);
    let mut test = Vec::with_capacity(cfg.n - cfg.n_train);
    for (i, d) in draws.into_iter().enumerate() {
        if i < cfg.n_train {
            train.push(record(i + 1, d, delayed[i]));
        } else {
            test.push(record(i + 1, d, false));
        }
    }
    let names = covariate_names(cfg.p);
    Ok((SurvivalDataset::from_subjects(train, names.clone())?, SurvivalDataset::from_subjects(test, names)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhConfig {
    pub n: usize,
    pub beta: Vec<f64>,
    /// Baseline hazard of each bin; bin times are `1..=len`.
    pub baseline: Vec<f64>,
    pub censor_rate: f64,
    pub seed: u64,
}

impl PhConfig {
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.baseline.is_empty() {
            return Err(Error::Argument("at least one baseline hazard is required".into()));
        }
        if let Some(h) = self.baseline.iter().find(|h| !(**h > 0.0 && **h < 1.0)) {
            return Err(Error::Argument(format!("baseline hazard {h} is outside (0, 1)")));
        }
        if !(self.censor_rate >= 0.0 && self.censor_rate.is_finite()) {
            return Err(Error::Argument(format!("censor rate {} must be finite and non-negative", self.censor_rate)));
        }
        Ok(())
    }
}

/// Discrete proportional-hazards data with per-bin hazard
/// `min(1, baseline[k] exp(beta'x))`.
pub fn simulate_ph(cfg: &PhConfig) -> Result<SurvivalDataset<f64>> {
    cfg.validate()?;
    let censor = censoring(cfg.censor_rate);
    let p = cfg.p();
    let bins = cfg.baseline.len();
    let records: Vec<SubjectRecord<f64>> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let d = draw_subject(cfg.seed, i, p, bins, censor.as_ref(), |t, x| {
                let rr = x.iter().zip(&cfg.beta).map(|(a, b)| a * b).sum::<f64>().exp();
                (cfg.baseline[t as usize - 1] * rr).min(1.0)
            });
            record(i + 1, d, false)
        })
        .collect();
    SurvivalDataset::from_subjects(records, covariate_names(p))
}
