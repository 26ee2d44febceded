//! Discrimination and calibration metrics for survival predictions.
//!
//! Time-dependent metrics use inverse probability of censoring weights from
//! the Kaplan-Meier estimate `G` of the censoring survival function (events
//! and censorings swapped). Cases `{i : t_i <= t, d_i = 1}` are weighted by
//! `1 / G(t_i-)`, controls `{j : t_j > t}` by `1 / G(t)`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::cox::product_limit;
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::predict::SurvivalCurve;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    AucT,
    BrierT,
    CIndex,
    IAuc,
    IBrier,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::AucT, Metric::BrierT, Metric::CIndex, Metric::IAuc, Metric::IBrier];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::AucT => "auc_t",
            Metric::BrierT => "brier_t",
            Metric::CIndex => "cindex",
            Metric::IAuc => "iauc",
            Metric::IBrier => "ibrier",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::Argument(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport<T> {
    pub metric: Metric,
    /// Evaluation horizon; for the c-index, the largest observed time.
    pub horizon: T,
    pub value: T,
    /// Usable subjects (or comparable pairs for the c-index).
    pub n_effective: usize,
    /// Subjects dropped because their censoring weight was zero, or grid
    /// points skipped for integrated metrics.
    pub dropped: usize,
}

/// Horizon given as a quantile of the distinct observed event times or as an
/// absolute time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HorizonSpec<T> {
    Quantile(f64),
    Absolute(T),
}

impl<T: Scalar> FromStr for HorizonSpec<T> {
    type Err = Error;

    /// `q0.75` is a quantile, a bare number is an absolute time.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("invalid horizon `{s}` (expected e.g. `q0.75` or `2.5`)"));
        match s.strip_prefix('q') {
            Some(q) => Ok(HorizonSpec::Quantile(q.parse().map_err(|_| bad())?)),
            None => Ok(HorizonSpec::Absolute(s.parse().map_err(|_| bad())?)),
        }
    }
}

/// Lower empirical quantile of the distinct event times: element
/// `floor((m - 1) q)` (0-based) of the `m` sorted distinct times.
pub fn resolve_horizon<T: Scalar>(ds: &SurvivalDataset<T>, spec: HorizonSpec<T>) -> Result<T> {
    match spec {
        HorizonSpec::Absolute(t) => Ok(t),
        HorizonSpec::Quantile(q) => {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::Argument(format!("quantile {q} is outside (0, 1)")));
            }
            let times = ds.event_times();
            if times.is_empty() {
                return Err(Error::NoEvents);
            }
            let idx = ((times.len() - 1) as f64 * q).floor() as usize;
            Ok(times[idx])
        }
    }
}

/// Kaplan-Meier estimate of the censoring survival function.
#[derive(Debug, Clone)]
pub struct CensoringSurvival<T> {
    curve: SurvivalCurve<T>,
}

impl<T: Scalar> CensoringSurvival<T> {
    pub fn estimate(ds: &SurvivalDataset<T>) -> Self {
        let triples: Vec<(T, T, bool)> = ds.subjects().iter().map(|s| (s.entry, s.exit, !s.event)).collect();
        Self { curve: product_limit(&triples) }
    }

    /// `G(t)`.
    pub fn at(&self, t: T) -> T {
        self.curve.at(t)
    }

    /// Left limit `G(t-)`.
    pub fn before(&self, t: T) -> T {
        let times = self.curve.times();
        match times.partition_point(|&x| x < t) {
            0 => T::one(),
            i => self.curve.survival()[i - 1],
        }
    }
}

fn check_len<T: Scalar>(n: usize, ds: &SurvivalDataset<T>) -> Result<()> {
    if n != ds.n_subjects() {
        return Err(Error::Dimension { expected: ds.n_subjects(), got: n });
    }
    Ok(())
}

/// Harrell's concordance index. A pair `(i, j)` is comparable when
/// `d_i = 1`, `t_i < t_j` and `j` had entered before `t_i`; it scores 1 when
/// `risk_i > risk_j` and 1/2 on tied risks.
pub fn cindex<T: Scalar>(risks: &[T], ds: &SurvivalDataset<T>) -> Result<MetricReport<T>> {
    check_len(risks.len(), ds)?;
    let subj = ds.subjects();
    let half = T::of(0.5);
    let mut score = T::zero();
    let mut comparable = 0usize;
    for (i, si) in subj.iter().enumerate() {
        if !si.event {
            continue;
        }
        for (j, sj) in subj.iter().enumerate() {
            if si.exit < sj.exit && sj.entry < si.exit {
                comparable += 1;
                if risks[i] > risks[j] {
                    score += T::one();
                } else if risks[i] == risks[j] {
                    score += half;
                }
            }
        }
    }
    if comparable == 0 {
        return Err(Error::UndefinedMetric("no comparable pairs for the c-index".into()));
    }
    let horizon = subj.iter().fold(T::zero(), |m, s| m.max(s.exit));
    Ok(MetricReport {
        metric: Metric::CIndex,
        horizon,
        value: score / T::of_usize(comparable),
        n_effective: comparable,
        dropped: 0,
    })
}

/// Cumulative/dynamic IPCW AUC at horizon `t`.
pub fn auc_at<T: Scalar>(risks: &[T], ds: &SurvivalDataset<T>, t: T) -> Result<MetricReport<T>> {
    check_len(risks.len(), ds)?;
    auc_with(risks, ds, t, &CensoringSurvival::estimate(ds))
}

fn auc_with<T: Scalar>(
    risks: &[T],
    ds: &SurvivalDataset<T>,
    t: T,
    g: &CensoringSurvival<T>,
) -> Result<MetricReport<T>> {
    let mut dropped = 0;
    let mut cases: Vec<(T, T)> = Vec::new();
    let mut controls: Vec<(T, T)> = Vec::new();
    let g_t = g.at(t);
    for (s, &r) in ds.subjects().iter().zip(risks) {
        if s.exit <= t && s.event {
            let gi = g.before(s.exit);
            if gi > T::zero() {
                cases.push((r, T::one() / gi));
            } else {
                dropped += 1;
            }
        } else if s.exit > t {
            if g_t > T::zero() {
                controls.push((r, T::one() / g_t));
            } else {
                dropped += 1;
            }
        }
    }
    if cases.is_empty() || controls.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "AUC at {t} needs both cases and controls (have {} and {})",
            cases.len(),
            controls.len()
        )));
    }
    let half = T::of(0.5);
    let mut num = T::zero();
    for &(ri, wi) in &cases {
        let mut inner = T::zero();
        for &(rj, wj) in &controls {
            if ri > rj {
                inner += wj;
            } else if ri == rj {
                inner += half * wj;
            }
        }
        num += wi * inner;
    }
    let wc: T = cases.iter().map(|c| c.1).sum();
    let wk: T = controls.iter().map(|c| c.1).sum();
    Ok(MetricReport {
        metric: Metric::AucT,
        horizon: t,
        value: num / (wc * wk),
        n_effective: cases.len() + controls.len(),
        dropped,
    })
}

/// IPCW Brier score at horizon `t`.
pub fn brier_at<T: Scalar>(curves: &[SurvivalCurve<T>], ds: &SurvivalDataset<T>, t: T) -> Result<MetricReport<T>> {
    check_len(curves.len(), ds)?;
    brier_with(curves, ds, t, &CensoringSurvival::estimate(ds))
}

fn brier_with<T: Scalar>(
    curves: &[SurvivalCurve<T>],
    ds: &SurvivalDataset<T>,
    t: T,
    g: &CensoringSurvival<T>,
) -> Result<MetricReport<T>> {
    let g_t = g.at(t);
    let mut sum = T::zero();
    let mut used = 0usize;
    let mut dropped = 0usize;
    for (s, c) in ds.subjects().iter().zip(curves) {
        let surv = c.at(t);
        if s.exit <= t && s.event {
            let gi = g.before(s.exit);
            if gi > T::zero() {
                sum += surv * surv / gi;
            } else {
                dropped += 1;
                continue;
            }
        } else if s.exit > t {
            if g_t > T::zero() {
                let r = T::one() - surv;
                sum += r * r / g_t;
            } else {
                dropped += 1;
                continue;
            }
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::UndefinedMetric(format!("Brier score at {t} has no usable subjects")));
    }
    Ok(MetricReport { metric: Metric::BrierT, horizon: t, value: sum / T::of_usize(used), n_effective: used, dropped })
}

/// Distinct event times up to and including `horizon`.
pub fn event_grid<T: Scalar>(ds: &SurvivalDataset<T>, horizon: T) -> Vec<T> {
    ds.event_times().into_iter().filter(|&t| t <= horizon).collect()
}

/// Trapezoidal average of pointwise values over the grid points where they
/// are defined. Returns the value and the number of skipped points.
pub fn trapezoid_average<T: Scalar>(grid: &[T], values: &[Option<T>]) -> Result<(T, usize)> {
    let pts: Vec<(T, T)> = grid.iter().zip(values).filter_map(|(&t, v)| v.map(|v| (t, v))).collect();
    let skipped = grid.len() - pts.len();
    if pts.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "integrated metric needs at least two defined grid points (have {})",
            pts.len()
        )));
    }
    let span = pts[pts.len() - 1].0 - pts[0].0;
    if !(span > T::zero()) {
        return Err(Error::UndefinedMetric("integration grid has zero span".into()));
    }
    let half = T::of(0.5);
    let area: T = pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * half).sum();
    Ok((area / span, skipped))
}

fn integrated<T: Scalar>(
    metric: Metric,
    grid: &[T],
    mut pointwise: impl FnMut(T) -> Result<MetricReport<T>>,
) -> Result<MetricReport<T>> {
    let mut values = Vec::with_capacity(grid.len());
    for &t in grid {
        values.push(match pointwise(t) {
            Ok(r) => Some(r.value),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        });
    }
    let (value, skipped) = trapezoid_average(grid, &values)?;
    Ok(MetricReport {
        metric,
        horizon: grid.last().copied().unwrap_or_else(T::zero),
        value,
        n_effective: grid.len() - skipped,
        dropped: skipped,
    })
}

/// Integrated AUC over `grid`, with risks `1 - S_i(t)` read from each curve.
pub fn integrated_auc<T: Scalar>(
    curves: &[SurvivalCurve<T>],
    ds: &SurvivalDataset<T>,
    grid: &[T],
) -> Result<MetricReport<T>> {
    check_len(curves.len(), ds)?;
    let g = CensoringSurvival::estimate(ds);
    integrated(Metric::IAuc, grid, |t| {
        let risks: Vec<T> = curves.iter().map(|c| c.risk(t)).collect();
        auc_with(&risks, ds, t, &g)
    })
}

pub fn integrated_brier<T: Scalar>(
    curves: &[SurvivalCurve<T>],
    ds: &SurvivalDataset<T>,
    grid: &[T],
) -> Result<MetricReport<T>> {
    check_len(curves.len(), ds)?;
    let g = CensoringSurvival::estimate(ds);
    integrated(Metric::IBrier, grid, |t| brier_with(curves, ds, t, &g))
}

/// Computes the requested metrics for per-subject curves at `horizon`. The
/// c-index ranks subjects by their risk at the horizon.
pub fn evaluate<T: Scalar>(
    metrics: &[Metric],
    curves: &[SurvivalCurve<T>],
    ds: &SurvivalDataset<T>,
    horizon: T,
) -> Result<Vec<MetricReport<T>>> {
    check_len(curves.len(), ds)?;
    let risks: Vec<T> = curves.iter().map(|c| c.risk(horizon)).collect();
    let grid = event_grid(ds, horizon);
    metrics
        .iter()
        .map(|m| match m {
            Metric::AucT => auc_at(&risks, ds, horizon),
            Metric::BrierT => brier_at(curves, ds, horizon),
            Metric::CIndex => cindex(&risks, ds),
            Metric::IAuc => integrated_auc(curves, ds, &grid),
            Metric::IBrier => integrated_brier(curves, ds, &grid),
        })
        .collect()
}

/// Report CSV: `metric,horizon,value,n_effective`.
pub fn export_reports<T: Scalar, W: Write>(writer: W, reports: &[MetricReport<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e| Error::csv("<output>", e);
    w.write_record(["metric", "horizon", "value", "n_effective"]).map_err(wrap)?;
    for r in reports {
        w.write_record([r.metric.to_string(), r.horizon.to_string(), r.value.to_string(), r.n_effective.to_string()])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

pub fn write_reports<T: Scalar>(path: impl AsRef<Path>, reports: &[MetricReport<T>]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    export_reports(file, reports).map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        other => other,
    })
}
