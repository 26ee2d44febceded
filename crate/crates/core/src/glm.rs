//! Logistic and Poisson regression on a stacked dataset.
//!
//! The linear predictor of stacked row `r` in block `k` is
//! `eta_r = alpha_k + z_r' beta` under indicator encoding (one `alpha` per
//! event time, no separate intercept) and `eta_r = c + z_r' beta` otherwise.
//! Parameters are fitted by damped Newton iterations. The indicator
//! columns are mutually exclusive, so their block of the information matrix
//! is diagonal; each step eliminates it through a Schur complement and only
//! the dense block is factorized.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SquareMatrix};
use crate::scalar::{line_search, max_abs, newton_converged, Scalar};
use crate::stacking::{EncodingKind, StackLayout, StackedDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Logistic,
    Poisson,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Logistic => "logistic",
            Family::Poisson => "poisson",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Family::Logistic),
            "poisson" => Ok(Family::Poisson),
            other => Err(Error::Argument(format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GlmOptions<T> {
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the gradient.
    pub tol: T,
    /// Ridge penalty `ridge/2 * |beta|^2` on covariate, time and interaction
    /// columns. Indicator and intercept coefficients are never penalized.
    pub ridge: T,
    /// Coefficient magnitude above which a non-converged fit is declared
    /// separated. Also the value pinned for blocks where every member has the
    /// event.
    pub coef_bound: T,
}

impl<T: Scalar> Default for GlmOptions<T> {
    fn default() -> Self {
        Self { max_iter: 100, tol: T::of(1e-8), ridge: T::zero(), coef_bound: T::of(30.0) }
    }
}

/// A fitted stacked GLM.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit<T> {
    pub family: Family,
    pub layout: StackLayout<T>,
    /// Design-column coefficients followed by the intercept when the encoding
    /// has one.
    pub coefficients: Vec<T>,
    pub names: Vec<String>,
    pub std_errors: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: T,
    pub loglik: T,
    /// Penalized log-likelihood after each accepted step, starting at the
    /// initial point.
    pub loglik_trace: Vec<T>,
    /// Coefficients that ran past the bound before convergence.
    pub separated: Vec<usize>,
    /// Blocks in which every member has the event; their indicator
    /// coefficient is pinned at the bound.
    pub saturated_blocks: Vec<usize>,
}

/// Conditional hazard prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hazard<T> {
    pub value: T,
    /// Poisson rate exceeded one and was truncated.
    pub clipped: bool,
}

impl<T: Scalar> GlmFit<T> {
    pub fn has_intercept(&self) -> bool {
        self.layout.encoding.needs_intercept()
    }

    fn linear_predictor(&self, x: &[T], k: usize) -> Result<T> {
        if x.len() != self.layout.p() {
            return Err(Error::Dimension { expected: self.layout.p(), got: x.len() });
        }
        if k >= self.layout.time_index.len() {
            return Err(Error::Argument(format!(
                "event-time index {k} out of range ({} event times)",
                self.layout.time_index.len()
            )));
        }
        let mut row = vec![T::zero(); self.layout.width()];
        self.layout.fill_row(x, k, &mut row);
        let mut eta: T = row.iter().zip(&self.coefficients).map(|(&z, &c)| z * c).sum();
        if self.has_intercept() {
            eta += self.coefficients[self.layout.width()];
        }
        Ok(eta)
    }

    /// Conditional hazard at event time `time_index[k]` for covariates `x`.
    pub fn predict_hazard(&self, x: &[T], k: usize) -> Result<Hazard<T>> {
        let eta = self.linear_predictor(x, k)?;
        Ok(match self.family {
            Family::Logistic => Hazard { value: eta.sigmoid(), clipped: false },
            Family::Poisson => {
                let rate = eta.exp();
                if rate > T::one() {
                    Hazard { value: T::one(), clipped: true }
                } else {
                    Hazard { value: rate, clipped: false }
                }
            }
        })
    }

    /// Exact (unpenalized) log-likelihood of `sd` at the fitted coefficients.
    pub fn log_likelihood(&self, sd: &StackedDataset<T>) -> Result<T> {
        if sd.layout != self.layout {
            return Err(Error::Validation("stacked dataset layout differs from the fitted model".into()));
        }
        Ok(GlmObjective::new(sd, self.family, T::zero()).value(&self.coefficients))
    }

    /// Indicator coefficients, one per event time (indicator encoding only).
    pub fn time_coefficients(&self) -> Option<&[T]> {
        (self.layout.encoding.kind == EncodingKind::Indicators)
            .then(|| &self.coefficients[self.layout.time_columns()])
    }

    /// Covariate coefficients (the first `p` entries).
    pub fn beta(&self) -> &[T] {
        &self.coefficients[..self.layout.p()]
    }
}

/// Penalized log-likelihood of a stacked dataset as a function of the
/// coefficient vector, with its gradient and negative Hessian.
pub struct GlmObjective<'a, T> {
    sd: &'a StackedDataset<T>,
    family: Family,
    ridge: T,
    indicators: bool,
    intercept: bool,
    /// Design columns handled densely (everything except indicators).
    dense_cols: Vec<usize>,
    penalized: Vec<bool>,
}

impl<'a, T: Scalar> GlmObjective<'a, T> {
    pub fn new(sd: &'a StackedDataset<T>, family: Family, ridge: T) -> Self {
        let layout = &sd.layout;
        let indicators = layout.encoding.kind == EncodingKind::Indicators;
        let intercept = !indicators;
        let time = layout.time_columns();
        let dense_cols: Vec<usize> =
            (0..layout.width()).filter(|c| !(indicators && time.contains(c))).collect();
        let n_params = layout.width() + usize::from(intercept);
        let penalized = (0..n_params).map(|c| c < layout.width() && !(indicators && time.contains(&c))).collect();
        Self { sd, family, ridge, indicators, intercept, dense_cols, penalized }
    }

    pub fn n_params(&self) -> usize {
        self.sd.width() + usize::from(self.intercept)
    }

    #[inline]
    fn eta(&self, r: usize, coef: &[T]) -> T {
        let row = self.sd.row(r);
        let mut eta = T::zero();
        for &c in &self.dense_cols {
            eta += row[c] * coef[c];
        }
        if self.indicators {
            eta += coef[self.sd.layout.p() + self.sd.row_blocks()[r]];
        }
        if self.intercept {
            eta += coef[self.sd.width()];
        }
        eta
    }

    #[inline]
    fn row_loglik(&self, y: bool, eta: T) -> T {
        let y = if y { eta } else { T::zero() };
        match self.family {
            Family::Logistic => y - eta.softplus(),
            Family::Poisson => y - eta.exp(),
        }
    }

    /// Mean and working weight at `eta`.
    #[inline]
    fn mean_weight(&self, eta: T) -> (T, T) {
        match self.family {
            Family::Logistic => {
                let mu = eta.sigmoid();
                (mu, mu * (T::one() - mu))
            }
            Family::Poisson => {
                let mu = eta.exp();
                (mu, mu)
            }
        }
    }

    fn penalty(&self, coef: &[T]) -> T {
        let half = T::of(0.5);
        coef.iter().zip(&self.penalized).filter(|(_, &p)| p).map(|(&c, _)| half * self.ridge * c * c).sum()
    }

    pub fn value(&self, coef: &[T]) -> T {
        let ll: T = (0..self.sd.n_rows()).map(|r| self.row_loglik(self.sd.outcome()[r], self.eta(r, coef))).sum();
        ll - self.penalty(coef)
    }

    pub fn gradient(&self, coef: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.n_params()];
        let width = self.sd.width();
        let p = self.sd.layout.p();
        for r in 0..self.sd.n_rows() {
            let (mu, _) = self.mean_weight(self.eta(r, coef));
            let resid = if self.sd.outcome()[r] { T::one() - mu } else { -mu };
            let row = self.sd.row(r);
            for &c in &self.dense_cols {
                g[c] += resid * row[c];
            }
            if self.indicators {
                g[p + self.sd.row_blocks()[r]] += resid;
            }
            if self.intercept {
                g[width] += resid;
            }
        }
        for (j, gj) in g.iter_mut().enumerate() {
            if self.penalized[j] {
                *gj -= self.ridge * coef[j];
            }
        }
        g
    }

    fn name(&self, j: usize) -> String {
        if j < self.sd.width() {
            self.sd.layout.column_names()[j].clone()
        } else {
            "intercept".into()
        }
    }

    /// Dense parameter indices: dense design columns plus the intercept.
    fn dense_params(&self) -> Vec<usize> {
        let mut d = self.dense_cols.clone();
        if self.intercept {
            d.push(self.sd.width());
        }
        d
    }

    /// Accumulates the information matrix in block form.
    fn information(&self, coef: &[T]) -> Information<T> {
        let dense = self.dense_params();
        let nd = dense.len();
        let n_blocks = if self.indicators { self.sd.time_index().len() } else { 0 };
        let mut cc = SquareMatrix::zeros(nd);
        let mut a = vec![T::zero(); n_blocks];
        let mut b = vec![T::zero(); n_blocks * nd];
        let mut z = vec![T::zero(); nd];
        let width = self.sd.width();
        for r in 0..self.sd.n_rows() {
            let (_, w) = self.mean_weight(self.eta(r, coef));
            let row = self.sd.row(r);
            for (i, &c) in dense.iter().enumerate() {
                z[i] = if c == width { T::one() } else { row[c] };
            }
            for i in 0..nd {
                let wz = w * z[i];
                for j in i..nd {
                    cc.add(i, j, wz * z[j]);
                }
            }
            if self.indicators {
                let k = self.sd.row_blocks()[r];
                a[k] += w;
                for i in 0..nd {
                    b[k * nd + i] += w * z[i];
                }
            }
        }
        for (i, &c) in dense.iter().enumerate() {
            if self.penalized[c] {
                cc.add(i, i, self.ridge);
            }
        }
        cc.symmetrize_from_upper();
        Information { dense, cc, a, b }
    }
}

struct Information<T> {
    dense: Vec<usize>,
    cc: SquareMatrix<T>,
    a: Vec<T>,
    b: Vec<T>,
}

struct Solved<T> {
    chol: Cholesky<T>,
    /// B_k / a_k for every free block.
    scaled_b: Vec<T>,
}

impl<T: Scalar> Information<T> {
    /// Schur complement over the free blocks, factorized.
    fn factor(&self, free: &[bool], obj: &GlmObjective<'_, T>) -> Result<Solved<T>> {
        let nd = self.dense.len();
        let p = obj.sd.layout.p();
        let mut s = self.cc.clone();
        let mut scaled_b = vec![T::zero(); self.b.len()];
        let tiny = T::min_positive_value().sqrt();
        for (k, &ak) in self.a.iter().enumerate() {
            if !free[k] {
                continue;
            }
            if !(ak > tiny) {
                return Err(Error::Numerical {
                    column: obj.name(p + k),
                    msg: "zero information in risk-set block".into(),
                });
            }
            let bk = &self.b[k * nd..(k + 1) * nd];
            for i in 0..nd {
                scaled_b[k * nd + i] = bk[i] / ak;
            }
            for i in 0..nd {
                for j in 0..nd {
                    s.add(i, j, -bk[i] * bk[j] / ak);
                }
            }
        }
        let chol = Cholesky::new(&s).map_err(|pivot| Error::Numerical {
            column: obj.name(self.dense[pivot]),
            msg: "information matrix is singular (column is collinear with earlier columns)".into(),
        })?;
        Ok(Solved { chol, scaled_b })
    }
}

/// Fits a logistic or Poisson model to the stacked data.
pub fn fit_glm<T: Scalar>(sd: &StackedDataset<T>, family: Family, opts: &GlmOptions<T>) -> Result<GlmFit<T>> {
    if sd.n_rows() == 0 {
        return Err(Error::NoEvents);
    }
    if opts.ridge < T::zero() {
        return Err(Error::Argument("ridge must be non-negative".into()));
    }
    let obj = GlmObjective::new(sd, family, opts.ridge);
    let p = sd.layout.p();
    let n_params = obj.n_params();
    let n_blocks = if obj.indicators { sd.time_index().len() } else { 0 };

    // block event fractions seed the indicator coefficients
    let mut block_rows = vec![0usize; n_blocks];
    let mut block_events = vec![0usize; n_blocks];
    for (r, &k) in sd.row_blocks().iter().enumerate() {
        if obj.indicators {
            block_rows[k] += 1;
            block_events[k] += usize::from(sd.outcome()[r]);
        }
    }
    let link = |frac: T| match family {
        Family::Logistic => (frac / (T::one() - frac)).ln(),
        Family::Poisson => frac.ln(),
    };
    let mut coef = vec![T::zero(); n_params];
    let mut free = vec![true; n_blocks];
    let mut saturated_blocks = Vec::new();
    for k in 0..n_blocks {
        let frac = T::of_usize(block_events[k]) / T::of_usize(block_rows[k]);
        if family == Family::Logistic && block_events[k] == block_rows[k] {
            free[k] = false;
            saturated_blocks.push(k);
            coef[p + k] = opts.coef_bound;
        } else {
            coef[p + k] = link(frac);
        }
    }
    if obj.intercept {
        let frac = T::of_usize(sd.n_events()) / T::of_usize(sd.n_rows());
        coef[sd.width()] = if family == Family::Logistic && frac == T::one() { opts.coef_bound } else { link(frac) };
    }
    let is_free = |j: usize| !(obj.indicators && j >= p && j < p + n_blocks && !free[j - p]);
    let free_grad_norm = |g: &[T]| {
        g.iter().enumerate().filter(|&(j, _)| is_free(j)).fold(T::zero(), |m, (_, v)| m.max(v.abs()))
    };

    let over_bound = |c: &[T]| -> Vec<usize> {
        (0..n_params).filter(|&j| is_free(j) && c[j].abs() > opts.coef_bound).collect()
    };

    let mut value = obj.value(&coef);
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut converged = false;
    let mut grad = obj.gradient(&coef);
    let mut gnorm = free_grad_norm(&grad);
    loop {
        let info = obj.information(&coef);
        let solved = match info.factor(&free, &obj) {
            Ok(s) => s,
            // weights underflow once a separated coefficient has run away
            Err(_) if !over_bound(&coef).is_empty() => break,
            Err(e) => return Err(e),
        };
        let step = newton_step(&info, &solved, &grad, &free, p);
        if newton_converged(gnorm, &step, &coef, opts.tol) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        let Some((trial, v)) = line_search(&coef, &step, value, |c| obj.value(c)) else { break };
        iterations += 1;
        coef = trial;
        value = v;
        trace.push(value);
        grad = obj.gradient(&coef);
        gnorm = free_grad_norm(&grad);
    }
    let separated = if converged { Vec::new() } else { over_bound(&coef) };

    let std_errors = match obj.information(&coef).factor(&free, &obj) {
        Ok(solved) => standard_errors(&obj.information(&coef), &solved, &free, p, n_params),
        Err(_) => vec![T::nan(); n_params],
    };
    let names = (0..n_params).map(|j| obj.name(j)).collect();
    let loglik = obj.value(&coef) + obj.penalty(&coef);
    Ok(GlmFit {
        family,
        layout: sd.layout.clone(),
        coefficients: coef,
        names,
        std_errors,
        converged,
        iterations,
        gradient_norm: gnorm,
        loglik,
        loglik_trace: trace,
        separated,
        saturated_blocks,
    })
}

fn newton_step<T: Scalar>(info: &Information<T>, solved: &Solved<T>, grad: &[T], free: &[bool], p: usize) -> Vec<T> {
    let nd = info.dense.len();
    let mut rhs: Vec<T> = info.dense.iter().map(|&c| grad[c]).collect();
    for (k, &f) in free.iter().enumerate() {
        if f {
            let gk = grad[p + k];
            for i in 0..nd {
                rhs[i] -= info.b[k * nd + i] * gk / info.a[k];
            }
        }
    }
    let delta_dense = solved.chol.solve(&rhs);
    let mut step = vec![T::zero(); grad.len()];
    for (i, &c) in info.dense.iter().enumerate() {
        step[c] = delta_dense[i];
    }
    for (k, &f) in free.iter().enumerate() {
        if f {
            let bk = &info.b[k * nd..(k + 1) * nd];
            let dot: T = bk.iter().zip(&delta_dense).map(|(&b, &d)| b * d).sum();
            step[p + k] = (grad[p + k] - dot) / info.a[k];
        }
    }
    step
}

/// Square roots of the diagonal of the inverse information matrix.
fn standard_errors<T: Scalar>(
    info: &Information<T>,
    solved: &Solved<T>,
    free: &[bool],
    p: usize,
    n_params: usize,
) -> Vec<T> {
    let nd = info.dense.len();
    let inv = solved.chol.inverse();
    let mut se = vec![T::nan(); n_params];
    for (i, &c) in info.dense.iter().enumerate() {
        se[c] = inv.get(i, i).sqrt();
    }
    for (k, &f) in free.iter().enumerate() {
        if !f {
            continue;
        }
        let u = &solved.scaled_b[k * nd..(k + 1) * nd];
        let mut quad = T::zero();
        for i in 0..nd {
            for j in 0..nd {
                quad += u[i] * inv.get(i, j) * u[j];
            }
        }
        se[p + k] = (T::one() / info.a[k] + quad).sqrt();
    }
    se
}

/// Largest absolute difference between two coefficient vectors.
pub fn max_norm_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    let d: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    max_abs(&d)
}
