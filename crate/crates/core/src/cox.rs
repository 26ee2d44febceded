//! Reference estimators: Cox partial likelihood with Breslow ties, the
//! Breslow baseline hazard, the profile and full likelihoods, and the
//! Kaplan-Meier product-limit estimator.

use crate::data::{RiskSet, SurvivalDataset};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SquareMatrix};
use crate::predict::SurvivalCurve;
use crate::scalar::{line_search, max_abs, newton_converged, Scalar};

#[derive(Debug, Clone, Copy)]
pub struct CoxOptions<T> {
    pub max_iter: usize,
    pub tol: T,
    /// Magnitude above which a non-converged coefficient is reported as
    /// diverging (monotone likelihood).
    pub coef_bound: T,
}

impl<T: Scalar> Default for CoxOptions<T> {
    fn default() -> Self {
        Self { max_iter: 100, tol: T::of(1e-8), coef_bound: T::of(30.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit<T> {
    pub beta: Vec<T>,
    pub names: Vec<String>,
    /// Breslow hazard at each distinct event time.
    pub baseline: Vec<(T, T)>,
    pub partial_loglik: T,
    pub std_errors: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: T,
    pub loglik_trace: Vec<T>,
    /// Coefficients past the bound when iteration stopped.
    pub diverging: Vec<usize>,
}

impl<T: Scalar> CoxFit<T> {
    pub fn time_index(&self) -> Vec<T> {
        self.baseline.iter().map(|&(t, _)| t).collect()
    }

    pub fn relative_risk(&self, x: &[T]) -> Result<T> {
        if x.len() != self.beta.len() {
            return Err(Error::Dimension { expected: self.beta.len(), got: x.len() });
        }
        Ok(dot(x, &self.beta).exp())
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Log partial likelihood (Breslow ties) over precomputed risk sets.
pub struct PartialLikelihood<'a, T> {
    ds: &'a SurvivalDataset<T>,
    sets: Vec<RiskSet<T>>,
    /// Span indices of the events in each risk set.
    events: Vec<Vec<usize>>,
}

struct SetSums<T> {
    /// log of the sum of exp(eta) over the risk set
    log_s0: T,
    /// weighted covariate mean over the risk set
    mean: Vec<T>,
    /// weighted second moment, row-major p x p
    second: Vec<T>,
}

impl<'a, T: Scalar> PartialLikelihood<'a, T> {
    pub fn new(ds: &'a SurvivalDataset<T>) -> Self {
        let sets = ds.risk_sets();
        let events = sets
            .iter()
            .map(|set| {
                set.spans
                    .iter()
                    .copied()
                    .filter(|&s| {
                        let sp = ds.span(s);
                        sp.event && sp.stop == set.time
                    })
                    .collect()
            })
            .collect();
        Self { ds, sets, events }
    }

    pub fn risk_sets(&self) -> &[RiskSet<T>] {
        &self.sets
    }

    fn check(&self, beta: &[T]) -> Result<()> {
        if beta.len() != self.ds.p() {
            return Err(Error::Dimension { expected: self.ds.p(), got: beta.len() });
        }
        Ok(())
    }

    fn sums(&self, set: &RiskSet<T>, beta: &[T], moments: usize) -> SetSums<T> {
        let p = beta.len();
        let etas: Vec<T> = set.spans.iter().map(|&s| dot(self.ds.span(s).covariates, beta)).collect();
        let shift = etas.iter().fold(T::neg_infinity(), |m, &e| m.max(e));
        let mut s0 = T::zero();
        let mut s1 = vec![T::zero(); if moments >= 1 { p } else { 0 }];
        let mut s2 = vec![T::zero(); if moments >= 2 { p * p } else { 0 }];
        for (&s, &eta) in set.spans.iter().zip(&etas) {
            let w = (eta - shift).exp();
            s0 += w;
            if moments >= 1 {
                let x = self.ds.span(s).covariates;
                for i in 0..p {
                    s1[i] += w * x[i];
                }
                if moments >= 2 {
                    for i in 0..p {
                        for j in 0..p {
                            s2[i * p + j] += w * x[i] * x[j];
                        }
                    }
                }
            }
        }
        s1.iter_mut().for_each(|v| *v /= s0);
        s2.iter_mut().for_each(|v| *v /= s0);
        SetSums { log_s0: s0.ln() + shift, mean: s1, second: s2 }
    }

    fn event_eta_sum(&self, k: usize, beta: &[T]) -> T {
        self.events[k].iter().map(|&s| dot(self.ds.span(s).covariates, beta)).sum()
    }

    pub fn value(&self, beta: &[T]) -> Result<T> {
        self.check(beta)?;
        Ok(self
            .sets
            .iter()
            .enumerate()
            .map(|(k, set)| self.event_eta_sum(k, beta) - T::of_usize(set.events) * self.sums(set, beta, 0).log_s0)
            .sum())
    }

    pub fn gradient(&self, beta: &[T]) -> Result<Vec<T>> {
        self.check(beta)?;
        let p = beta.len();
        let mut g = vec![T::zero(); p];
        for (k, set) in self.sets.iter().enumerate() {
            let sums = self.sums(set, beta, 1);
            let d = T::of_usize(set.events);
            for &s in &self.events[k] {
                let x = self.ds.span(s).covariates;
                for i in 0..p {
                    g[i] += x[i];
                }
            }
            for i in 0..p {
                g[i] -= d * sums.mean[i];
            }
        }
        Ok(g)
    }

    /// Observed information (negative Hessian).
    pub fn information(&self, beta: &[T]) -> Result<SquareMatrix<T>> {
        self.check(beta)?;
        let p = beta.len();
        let mut info = SquareMatrix::zeros(p);
        for set in &self.sets {
            let sums = self.sums(set, beta, 2);
            let d = T::of_usize(set.events);
            for i in 0..p {
                for j in 0..p {
                    info.add(i, j, d * (sums.second[i * p + j] - sums.mean[i] * sums.mean[j]));
                }
            }
        }
        Ok(info)
    }

    /// `sum_{j in R(t_k)} exp(x_j' beta)` for every event time.
    pub fn risk_sums(&self, beta: &[T]) -> Result<Vec<T>> {
        self.check(beta)?;
        Ok(self.sets.iter().map(|set| self.sums(set, beta, 0).log_s0.exp()).collect())
    }
}

/// Log partial likelihood at `beta`.
pub fn partial_loglik<T: Scalar>(ds: &SurvivalDataset<T>, beta: &[T]) -> Result<T> {
    PartialLikelihood::new(ds).value(beta)
}

/// Breslow hazards `d_k / sum_{R(t_k)} exp(x' beta)` at each distinct event time.
pub fn breslow_baseline<T: Scalar>(ds: &SurvivalDataset<T>, beta: &[T]) -> Result<Vec<(T, T)>> {
    let pl = PartialLikelihood::new(ds);
    let sums = pl.risk_sums(beta)?;
    Ok(pl.sets.iter().zip(sums).map(|(set, s)| (set.time, T::of_usize(set.events) / s)).collect())
}

/// Profile log-likelihood: the sum over events of
/// `x_i' beta - log sum_{R(t_i)} exp(x_j' beta) - 1`, i.e. the partial
/// log-likelihood minus the number of events.
pub fn profile_loglik<T: Scalar>(ds: &SurvivalDataset<T>, beta: &[T]) -> Result<T> {
    let pl = PartialLikelihood::new(ds);
    let n_events: usize = pl.sets.iter().map(|s| s.events).sum();
    Ok(pl.value(beta)? - T::of_usize(n_events))
}

/// Full log-likelihood with a discrete baseline hazard taking value
/// `hazards[k]` at the k-th distinct event time:
/// `sum_k [d_k log h_k + sum_{i in D_k} x_i' beta - h_k sum_{R(t_k)} exp(x_j' beta)]`.
pub fn full_loglik<T: Scalar>(ds: &SurvivalDataset<T>, beta: &[T], hazards: &[T]) -> Result<T> {
    let pl = PartialLikelihood::new(ds);
    if hazards.len() != pl.sets.len() {
        return Err(Error::Dimension { expected: pl.sets.len(), got: hazards.len() });
    }
    let sums = pl.risk_sums(beta)?;
    Ok(pl
        .sets
        .iter()
        .enumerate()
        .map(|(k, set)| {
            T::of_usize(set.events) * hazards[k].ln() + pl.event_eta_sum(k, beta) - hazards[k] * sums[k]
        })
        .sum())
}

/// Maximizes the partial likelihood by damped Newton iterations.
pub fn fit_cox<T: Scalar>(ds: &SurvivalDataset<T>, opts: &CoxOptions<T>) -> Result<CoxFit<T>> {
    let pl = PartialLikelihood::new(ds);
    if pl.sets.is_empty() {
        return Err(Error::NoEvents);
    }
    let p = ds.p();
    let names = ds.covariate_names().to_vec();
    let singular = |pivot: usize| Error::Numerical {
        column: names[pivot].clone(),
        msg: "partial-likelihood information is singular (constant or collinear covariate)".into(),
    };

    let over_bound = |b: &[T]| -> Vec<usize> { (0..p).filter(|&j| b[j].abs() > opts.coef_bound).collect() };

    let mut beta = vec![T::zero(); p];
    let mut value = pl.value(&beta)?;
    let mut trace = vec![value];
    let mut grad = pl.gradient(&beta)?;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let chol = match Cholesky::new(&pl.information(&beta)?) {
            Ok(c) => c,
            Err(_) if !over_bound(&beta).is_empty() => break,
            Err(pivot) => return Err(singular(pivot)),
        };
        let step = chol.solve(&grad);
        if newton_converged(max_abs(&grad), &step, &beta, opts.tol) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        // the partial likelihood only fails on dimension errors, checked above
        let Some((trial, v)) = line_search(&beta, &step, value, |b| pl.value(b).unwrap_or_else(|_| T::nan())) else {
            break;
        };
        iterations += 1;
        beta = trial;
        value = v;
        trace.push(v);
        grad = pl.gradient(&beta)?;
    }
    let gradient_norm = max_abs(&grad);
    let diverging = if converged { Vec::new() } else { over_bound(&beta) };
    let std_errors = match Cholesky::new(&pl.information(&beta)?) {
        Ok(chol) => {
            let inv = chol.inverse();
            (0..p).map(|i| inv.get(i, i).sqrt()).collect()
        }
        Err(pivot) if p > 0 && iterations == 0 => return Err(singular(pivot)),
        Err(_) => vec![T::nan(); p],
    };
    let baseline = breslow_baseline(ds, &beta)?;
    Ok(CoxFit {
        beta,
        names,
        baseline,
        partial_loglik: value,
        std_errors,
        converged,
        iterations,
        gradient_norm,
        loglik_trace: trace,
        diverging,
    })
}

/// Kaplan-Meier estimator over the dataset's distinct event times, with
/// delayed-entry risk sets.
pub fn kaplan_meier<T: Scalar>(ds: &SurvivalDataset<T>) -> SurvivalCurve<T> {
    let mut s = T::one();
    let (times, survival) = ds
        .risk_sets()
        .iter()
        .map(|set| {
            s *= T::one() - T::of_usize(set.events) / T::of_usize(set.spans.len());
            (set.time, s)
        })
        .unzip();
    SurvivalCurve::from_parts(times, survival)
}

/// Product-limit estimator on subject-level `(entry, exit, flag)` triples,
/// treating `flag == true` as the event. A subject is at risk at `t` iff
/// `entry < t <= exit`.
pub fn product_limit<T: Scalar>(subjects: &[(T, T, bool)]) -> SurvivalCurve<T> {
    let mut times: Vec<T> = subjects.iter().filter(|s| s.2).map(|s| s.1).collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup();
    let mut s = T::one();
    let survival = times
        .iter()
        .map(|&t| {
            let at_risk = subjects.iter().filter(|&&(a, b, _)| a < t && t <= b).count();
            let d = subjects.iter().filter(|&&(_, b, f)| f && b == t).count();
            s *= T::one() - T::of_usize(d) / T::of_usize(at_risk);
            s
        })
        .collect();
    SurvivalCurve::from_parts(times, survival)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnMap, Format};

    fn read(s: &str) -> SurvivalDataset<f64> {
        SurvivalDataset::read_csv_from(s.as_bytes(), Format::Single, &ColumnMap::default()).unwrap()
    }

    fn worked_example() -> SurvivalDataset<f64> {
        read("time,event,x\n1,1,0.2\n2,0,-0.4\n3,1,1.1\n")
    }

    #[test]
    fn partial_loglik_at_zero_is_minus_log_set_sizes() {
        let ds = worked_example();
        assert!((partial_loglik(&ds, &[0.0]).unwrap() + 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn breslow_at_zero() {
        let bl = breslow_baseline(&worked_example(), &[0.0]).unwrap();
        assert_eq!(bl.len(), 2);
        assert!((bl[0].1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((bl[1].1 - 1.0).abs() < 1e-15);
        let ds = read("time,event\n1,1\n2,0\n3,0\n4,0\n5,0\n");
        assert!((breslow_baseline(&ds, &[]).unwrap()[0].1 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn profile_at_zero() {
        let v = profile_loglik(&worked_example(), &[0.0]).unwrap();
        assert!((v - (-(3f64.ln()) - 2.0)).abs() < 1e-14);
    }

    #[test]
    fn kaplan_meier_small_cases() {
        let km = kaplan_meier(&read("time,event\n1,1\n2,1\n"));
        assert_eq!(km.survival(), &[0.5, 0.0]);
        let km = kaplan_meier(&worked_example());
        assert!((km.survival()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(km.survival()[1], 0.0);
        let km = kaplan_meier(&read("time,event\n1,0\n2,0\n"));
        assert!(km.times().is_empty());
        assert_eq!(km.at(5.0), 1.0);
    }

    #[test]
    fn product_limit_matches_kaplan_meier() {
        let ds = read("entry,time,event\n0,1,1\n0.5,2,0\n0,3,1\n1.5,4,1\n0,4,0\n");
        let triples: Vec<_> = ds.subjects().iter().map(|s| (s.entry, s.exit, s.event)).collect();
        assert_eq!(product_limit(&triples), kaplan_meier(&ds));
    }

    #[test]
    fn no_events_rejected() {
        assert!(matches!(fit_cox(&read("time,event,x\n1,0,1\n2,0,2\n"), &CoxOptions::default()), Err(Error::NoEvents)));
    }

    #[test]
    fn constant_covariate_is_singular() {
        let ds = read("time,event,x,c\n1,1,0.5,1\n2,0,0.1,1\n3,1,-0.3,1\n4,1,0.9,1\n");
        match fit_cox(&ds, &CoxOptions::default()) {
            Err(Error::Numerical { column, .. }) => assert_eq!(column, "c"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn monotone_likelihood_reports_divergence() {
        // higher x always fails first
        let ds = read("time,event,x\n1,1,3\n2,1,2\n3,1,1\n4,1,0\n");
        let fit = fit_cox(&ds, &CoxOptions::default()).unwrap();
        assert!(!fit.converged || fit.beta[0] > 15.0, "{fit:?}");
    }

    #[test]
    fn dimension_checked() {
        assert!(matches!(partial_loglik(&worked_example(), &[0.0, 1.0]), Err(Error::Dimension { .. })));
    }
}
