//! Survival curves composed from per-event-time conditional hazards.

use std::io::{Read, Write};
use std::path::Path;

use crate::cox::CoxFit;
use crate::error::{Error, Result};
use crate::glm::{GlmFit, Hazard};
use crate::scalar::Scalar;

/// Right-continuous step function over the training event times.
///
/// `S(t) = 1` before the first time, then the value at the largest time
/// `<= t`; the last value is held beyond the last time.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve<T> {
    times: Vec<T>,
    survival: Vec<T>,
    clipped: usize,
}

impl<T: Scalar> SurvivalCurve<T> {
    pub fn new(times: Vec<T>, survival: Vec<T>) -> Result<Self> {
        if times.len() != survival.len() {
            return Err(Error::Dimension { expected: times.len(), got: survival.len() });
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Argument("curve times must be strictly increasing".into()));
        }
        let mut prev = T::one();
        for &s in &survival {
            if !(s >= T::zero() && s <= prev) {
                return Err(Error::Argument("survival must be non-increasing within [0, 1]".into()));
            }
            prev = s;
        }
        Ok(Self::from_parts(times, survival))
    }

    pub(crate) fn from_parts(times: Vec<T>, survival: Vec<T>) -> Self {
        Self { times, survival, clipped: 0 }
    }

    /// Product of `1 - h_k` over the given hazards.
    pub fn from_hazards(times: Vec<T>, hazards: &[T]) -> Self {
        let mut s = T::one();
        let survival = hazards
            .iter()
            .map(|&h| {
                s *= T::one() - h;
                s
            })
            .collect();
        Self::from_parts(times, survival)
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn survival(&self) -> &[T] {
        &self.survival
    }

    /// Number of hazards that had to be clipped to 1.
    pub fn clipped(&self) -> usize {
        self.clipped
    }

    pub fn at(&self, t: T) -> T {
        match self.times.partition_point(|&x| x <= t) {
            0 => T::one(),
            i => self.survival[i - 1],
        }
    }

    /// Predicted risk `1 - S(t)`.
    pub fn risk(&self, t: T) -> T {
        T::one() - self.at(t)
    }
}

/// A fitted model that yields a discrete conditional hazard at each of its
/// training event times.
pub trait HazardModel<T: Scalar> {
    fn time_index(&self) -> Vec<T>;
    fn n_covariates(&self) -> usize;
    fn hazard(&self, x: &[T], k: usize) -> Result<Hazard<T>>;
}

impl<T: Scalar> HazardModel<T> for GlmFit<T> {
    fn time_index(&self) -> Vec<T> {
        self.layout.time_index.clone()
    }

    fn n_covariates(&self) -> usize {
        self.layout.p()
    }

    fn hazard(&self, x: &[T], k: usize) -> Result<Hazard<T>> {
        self.predict_hazard(x, k)
    }
}

impl<T: Scalar> HazardModel<T> for CoxFit<T> {
    fn time_index(&self) -> Vec<T> {
        CoxFit::time_index(self)
    }

    fn n_covariates(&self) -> usize {
        self.beta.len()
    }

    /// `min(1, lambda_k exp(x' beta))`.
    fn hazard(&self, x: &[T], k: usize) -> Result<Hazard<T>> {
        let (_, base) = *self
            .baseline
            .get(k)
            .ok_or_else(|| Error::Argument(format!("event-time index {k} out of range")))?;
        let h = base * self.relative_risk(x)?;
        Ok(if h > T::one() { Hazard { value: T::one(), clipped: true } } else { Hazard { value: h, clipped: false } })
    }
}

/// Survival curve for fixed covariates `x`.
pub fn survival_curve<T: Scalar, M: HazardModel<T> + ?Sized>(model: &M, x: &[T]) -> Result<SurvivalCurve<T>> {
    if x.len() != model.n_covariates() {
        return Err(Error::Dimension { expected: model.n_covariates(), got: x.len() });
    }
    survival_curve_path(model, |_, _| x)
}

/// Survival curve for covariates that change over time; `covariates(k, t)`
/// returns the vector valid at event time `t = time_index[k]`.
pub fn survival_curve_path<'x, T, M, F>(model: &M, covariates: F) -> Result<SurvivalCurve<T>>
where
    T: Scalar,
    M: HazardModel<T> + ?Sized,
    F: Fn(usize, T) -> &'x [T],
{
    let times = model.time_index();
    let mut s = T::one();
    let mut clipped = 0;
    let mut survival = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let h = model.hazard(covariates(k, t), k)?;
        clipped += usize::from(h.clipped);
        s *= T::one() - h.value;
        survival.push(s);
    }
    Ok(SurvivalCurve { times, survival, clipped })
}

/// Predicted risk `1 - S(t | x)` by horizon `t`.
pub fn horizon_risk<T: Scalar, M: HazardModel<T> + ?Sized>(model: &M, x: &[T], t: T) -> Result<T> {
    Ok(survival_curve(model, x)?.risk(t))
}

/// Long-format curve CSV: `subject_id,time,survival`, plus `horizon_risk`
/// (`1 - S(horizon)`, repeated on each of the subject's rows) when a horizon
/// is given.
pub fn export_curves<T: Scalar, W: Write>(
    writer: W,
    ids: &[&str],
    curves: &[SurvivalCurve<T>],
    horizon: Option<T>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e| Error::csv("<output>", e);
    let mut header = vec!["subject_id", "time", "survival"];
    if horizon.is_some() {
        header.push("horizon_risk");
    }
    w.write_record(&header).map_err(wrap)?;
    for (id, curve) in ids.iter().zip(curves) {
        let risk = horizon.map(|h| curve.risk(h).to_string());
        for (t, s) in curve.times.iter().zip(&curve.survival) {
            let mut rec = vec![id.to_string(), t.to_string(), s.to_string()];
            rec.extend(risk.clone());
            w.write_record(&rec).map_err(wrap)?;
        }
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

pub fn write_curves<T: Scalar>(
    path: impl AsRef<Path>,
    ids: &[&str],
    curves: &[SurvivalCurve<T>],
    horizon: Option<T>,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    export_curves(std::io::BufWriter::new(file), ids, curves, horizon).map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        other => other,
    })
}

/// Reads a long-format curve CSV back into `(subject_id, curve)` pairs in
/// file order. A `horizon_risk` column, if present, is ignored.
pub fn import_curves<T: Scalar, R: Read>(reader: R) -> Result<Vec<(String, SurvivalCurve<T>)>> {
    let mut r = csv::Reader::from_reader(reader);
    let wrap = |e| Error::csv("<input>", e);
    let headers = r.headers().map_err(wrap)?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.into()))
    };
    let (id_col, time_col, surv_col) = (col("subject_id")?, col("time")?, col("survival")?);
    let mut out: Vec<(String, Vec<T>, Vec<T>)> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(wrap)?;
        let row = i + 1;
        let num = |c: usize| -> Result<T> {
            rec[c].parse().map_err(|_| Error::row(row, format!("`{}` is not a number", &rec[c])))
        };
        let (t, s) = (num(time_col)?, num(surv_col)?);
        match out.last_mut() {
            Some((id, times, surv)) if id == &rec[id_col] => {
                times.push(t);
                surv.push(s);
            }
            _ => {
                if out.iter().any(|(id, _, _)| id == &rec[id_col]) {
                    return Err(Error::row(row, format!("rows of subject `{}` are not contiguous", &rec[id_col])));
                }
                out.push((rec[id_col].to_string(), vec![t], vec![s]));
            }
        }
    }
    out.into_iter().map(|(id, t, s)| Ok((id, SurvivalCurve::new(t, s)?))).collect()
}

pub fn read_curves<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<(String, SurvivalCurve<T>)>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    import_curves(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>);

    impl HazardModel<f64> for Fixed {
        fn time_index(&self) -> Vec<f64> {
            (1..=self.0.len()).map(|k| k as f64).collect()
        }
        fn n_covariates(&self) -> usize {
            0
        }
        fn hazard(&self, _: &[f64], k: usize) -> Result<Hazard<f64>> {
            Ok(Hazard { value: self.0[k], clipped: false })
        }
    }

    #[test]
    fn product_of_conditional_survivals() {
        let c = survival_curve(&Fixed(vec![0.1, 0.2]), &[]).unwrap();
        assert!((c.survival()[0] - 0.9).abs() < 1e-15);
        assert!((c.survival()[1] - 0.72).abs() < 1e-15);
        assert!((horizon_risk(&Fixed(vec![0.1, 0.2]), &[], 7.0).unwrap() - 0.28).abs() < 1e-15);
        assert_eq!(horizon_risk(&Fixed(vec![0.1, 0.2]), &[], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn half_hazards_halve() {
        let c = survival_curve(&Fixed(vec![0.5; 3]), &[]).unwrap();
        assert_eq!(c.survival(), &[0.5, 0.25, 0.125]);
    }

    #[test]
    fn step_semantics() {
        let c = SurvivalCurve::new(vec![1.0, 2.0], vec![0.8, 0.5]).unwrap();
        assert_eq!(c.at(0.99), 1.0);
        assert_eq!(c.at(1.0), 0.8);
        assert_eq!(c.at(1.5), 0.8);
        assert_eq!(c.at(100.0), 0.5);
        assert!(SurvivalCurve::new(vec![1.0, 2.0], vec![0.5, 0.8]).is_err());
        assert!(SurvivalCurve::new(vec![2.0, 1.0], vec![0.8, 0.5]).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(survival_curve(&Fixed(vec![0.1]), &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn export_long_format() {
        let c = SurvivalCurve::new(vec![1.0, 2.0], vec![0.75, 0.5]).unwrap();
        let mut buf = Vec::new();
        export_curves(&mut buf, &["a"], &[c], Some(1.5)).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "subject_id,time,survival,horizon_risk\na,1,0.75,0.25\na,2,0.5,0.25\n"
        );
    }

    #[test]
    fn curves_roundtrip() {
        let a = SurvivalCurve::new(vec![1.0, 2.5], vec![0.7, 0.1 + 0.2]).unwrap();
        let b = SurvivalCurve::new(vec![1.0, 2.5], vec![0.9, 0.9]).unwrap();
        let mut buf = Vec::new();
        export_curves(&mut buf, &["s1", "s2"], &[a.clone(), b.clone()], Some(2.0)).unwrap();
        let back: Vec<(String, SurvivalCurve<f64>)> = import_curves(buf.as_slice()).unwrap();
        assert_eq!(back, vec![("s1".to_string(), a), ("s2".to_string(), b)]);
        let split = "subject_id,time,survival\na,1,0.5\nb,1,0.5\na,2,0.4\n";
        assert!(matches!(import_curves::<f64, _>(split.as_bytes()), Err(Error::Row { row: 3, .. })));
    }
}
