//! Fitted-model documents (JSON, `format: 1`) and coefficient tables.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::cox::CoxFit;
use crate::error::{Error, Result};
use crate::glm::{Family, GlmFit, Hazard};
use crate::predict::HazardModel;
use crate::scalar::Scalar;
use crate::stacking::{StackLayout, TimeEncoding};

pub const FORMAT_VERSION: u32 = 1;

/// Any fitted model the pipeline can persist and predict from.
#[derive(Debug, Clone, PartialEq)]
pub enum Model<T> {
    Glm(GlmFit<T>),
    Cox(CoxFit<T>),
}

impl<T: Scalar> Model<T> {
    /// `logistic`, `poisson` or `cox`.
    pub fn kind(&self) -> String {
        match self {
            Model::Glm(f) => f.family.to_string(),
            Model::Cox(_) => "cox".into(),
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            Model::Glm(f) => f.converged,
            Model::Cox(f) => f.converged,
        }
    }

    pub fn covariate_names(&self) -> &[String] {
        match self {
            Model::Glm(f) => &f.layout.covariate_names,
            Model::Cox(f) => &f.names,
        }
    }

    /// Covariate coefficients.
    pub fn beta(&self) -> &[T] {
        match self {
            Model::Glm(f) => f.beta(),
            Model::Cox(f) => &f.beta,
        }
    }

    /// All coefficients with standard errors, Wald statistics and two-sided
    /// p-values.
    pub fn coefficient_table(&self) -> Vec<CoefficientRow<T>> {
        let (names, values, ses) = match self {
            Model::Glm(f) => (&f.names, &f.coefficients, &f.std_errors),
            Model::Cox(f) => (&f.names, &f.beta, &f.std_errors),
        };
        names
            .iter()
            .zip(values)
            .zip(ses)
            .map(|((name, &estimate), &std_error)| {
                let z = estimate / std_error;
                CoefficientRow { name: name.clone(), estimate, std_error, z, p_value: wald_p_value(z) }
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Document::from_model(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<Document>(s)?.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

impl<T: Scalar> HazardModel<T> for Model<T> {
    fn time_index(&self) -> Vec<T> {
        match self {
            Model::Glm(f) => f.time_index(),
            Model::Cox(f) => HazardModel::time_index(f),
        }
    }

    fn n_covariates(&self) -> usize {
        self.covariate_names().len()
    }

    fn hazard(&self, x: &[T], k: usize) -> Result<Hazard<T>> {
        match self {
            Model::Glm(f) => f.hazard(x, k),
            Model::Cox(f) => f.hazard(x, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow<T> {
    pub name: String,
    pub estimate: T,
    pub std_error: T,
    pub z: T,
    pub p_value: T,
}

/// Two-sided normal p-value `2 (1 - Phi(|z|))`; NaN when `z` is not finite.
pub fn wald_p_value<T: Scalar>(z: T) -> T {
    if !z.is_finite() {
        return T::nan();
    }
    T::of(erfc(z.f64().abs() / std::f64::consts::SQRT_2))
}

#[derive(Debug, Serialize, Deserialize)]
struct Coefficient {
    name: String,
    value: Option<f64>,
    std_error: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    format: u32,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    encoding: Option<String>,
    /// Covariates interacted with the first time column.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    interactions: Vec<String>,
    covariates: Vec<String>,
    time_index: Vec<f64>,
    coefficients: Vec<Coefficient>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    baseline_hazard: Vec<Option<f64>>,
    converged: bool,
    iterations: usize,
    gradient_norm: Option<f64>,
    loglik: Option<f64>,
    /// Separated (GLM) or diverging (Cox) coefficient indices.
    #[serde(default)]
    unbounded: Vec<usize>,
    #[serde(default)]
    saturated_blocks: Vec<usize>,
}

fn finite<T: Scalar>(v: T) -> Option<f64> {
    v.is_finite().then(|| v.f64())
}

fn restore<T: Scalar>(v: Option<f64>) -> T {
    v.map_or_else(T::nan, T::of)
}

fn coefficients<T: Scalar>(names: &[String], values: &[T], ses: &[T]) -> Vec<Coefficient> {
    names
        .iter()
        .zip(values)
        .zip(ses)
        .map(|((n, &v), &s)| Coefficient { name: n.clone(), value: finite(v), std_error: finite(s) })
        .collect()
}

impl Document {
    fn from_model<T: Scalar>(model: &Model<T>) -> Self {
        match model {
            Model::Glm(f) => Document {
                format: FORMAT_VERSION,
                kind: model.kind(),
                encoding: Some(f.layout.encoding.to_string()),
                interactions: f.layout.encoding.interactions.iter().map(|&j| f.layout.covariate_names[j].clone()).collect(),
                covariates: f.layout.covariate_names.clone(),
                time_index: f.layout.time_index.iter().map(|t| t.f64()).collect(),
                coefficients: coefficients(&f.names, &f.coefficients, &f.std_errors),
                baseline_hazard: Vec::new(),
                converged: f.converged,
                iterations: f.iterations,
                gradient_norm: finite(f.gradient_norm),
                loglik: finite(f.loglik),
                unbounded: f.separated.clone(),
                saturated_blocks: f.saturated_blocks.clone(),
            },
            Model::Cox(f) => Document {
                format: FORMAT_VERSION,
                kind: model.kind(),
                encoding: None,
                interactions: Vec::new(),
                covariates: f.names.clone(),
                time_index: f.baseline.iter().map(|b| b.0.f64()).collect(),
                coefficients: coefficients(&f.names, &f.beta, &f.std_errors),
                baseline_hazard: f.baseline.iter().map(|b| finite(b.1)).collect(),
                converged: f.converged,
                iterations: f.iterations,
                gradient_norm: finite(f.gradient_norm),
                loglik: finite(f.partial_loglik),
                unbounded: f.diverging.clone(),
                saturated_blocks: Vec::new(),
            },
        }
    }

    fn into_model<T: Scalar>(self) -> Result<Model<T>> {
        if self.format != FORMAT_VERSION {
            return Err(Error::Validation(format!("unsupported model format {}", self.format)));
        }
        let values: Vec<T> = self.coefficients.iter().map(|c| restore(c.value)).collect();
        let ses: Vec<T> = self.coefficients.iter().map(|c| restore(c.std_error)).collect();
        let names: Vec<String> = self.coefficients.into_iter().map(|c| c.name).collect();
        let time_index: Vec<T> = self.time_index.iter().map(|&t| T::of(t)).collect();
        if self.kind == "cox" {
            if self.baseline_hazard.len() != time_index.len() {
                return Err(Error::Validation("baseline hazard and time index lengths differ".into()));
            }
            if names != self.covariates {
                return Err(Error::Validation("cox coefficients must match the covariates".into()));
            }
            return Ok(Model::Cox(CoxFit {
                beta: values,
                names,
                baseline: time_index.into_iter().zip(self.baseline_hazard.into_iter().map(restore)).collect(),
                partial_loglik: restore(self.loglik),
                std_errors: ses,
                converged: self.converged,
                iterations: self.iterations,
                gradient_norm: restore(self.gradient_norm),
                loglik_trace: Vec::new(),
                diverging: self.unbounded,
            }));
        }
        let family: Family = self.kind.parse()?;
        let encoding: TimeEncoding =
            self.encoding.as_deref().ok_or_else(|| Error::Validation("model document lacks an encoding".into()))?.parse()?;
        let interactions = self
            .interactions
            .iter()
            .map(|n| {
                self.covariates
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::Validation(format!("interaction `{n}` is not a covariate")))
            })
            .collect::<Result<Vec<_>>>()?;
        let layout = StackLayout::new(encoding.with_interactions(interactions), self.covariates, time_index)?;
        let expected = layout.width() + usize::from(layout.encoding.needs_intercept());
        if values.len() != expected {
            return Err(Error::Dimension { expected, got: values.len() });
        }
        Ok(Model::Glm(GlmFit {
            family,
            layout,
            coefficients: values,
            names,
            std_errors: ses,
            converged: self.converged,
            iterations: self.iterations,
            gradient_norm: restore(self.gradient_norm),
            loglik: restore(self.loglik),
            loglik_trace: Vec::new(),
            separated: self.unbounded,
            saturated_blocks: self.saturated_blocks,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cox::{fit_cox, CoxOptions};
    use crate::data::{ColumnMap, Format, SurvivalDataset};
    use crate::glm::{fit_glm, GlmOptions};
    use crate::predict::survival_curve;
    use crate::stacking::stack;

    fn data() -> SurvivalDataset<f64> {
        SurvivalDataset::read_csv_from(
            "time,event,x,z\n1,1,0.5,1\n2,0,-0.3,0\n2,1,1.2,1\n3,1,-1,0\n4,0,0.1,1\n5,1,0.7,0\n6,0,-0.2,1\n".as_bytes(),
            Format::Single,
            &ColumnMap::default(),
        )
        .unwrap()
    }

    #[test]
    fn p_values() {
        let p = wald_p_value(1.959963984540054f64);
        assert!((p - 0.05).abs() < 1e-10, "{p}");
        assert_eq!(wald_p_value(0.0f64), 1.0);
        assert!(wald_p_value(f64::NAN).is_nan());
    }

    #[test]
    fn glm_roundtrip_preserves_predictions() {
        let ds = data();
        let enc = TimeEncoding::continuous().with_interactions(vec![1]);
        let sd = stack(&ds, &enc).unwrap();
        let fit = fit_glm(&sd, Family::Logistic, &GlmOptions { ridge: 0.1, ..Default::default() }).unwrap();
        let model = Model::Glm(fit.clone());
        let back: Model<f64> = Model::from_json(&model.to_json().unwrap()).unwrap();
        let Model::Glm(g) = &back else { panic!("expected a GLM") };
        assert_eq!(g.coefficients, fit.coefficients);
        assert_eq!(g.layout, fit.layout);
        let x = [0.3, 1.0];
        assert_eq!(survival_curve(&back, &x).unwrap(), survival_curve(&fit, &x).unwrap());
    }

    #[test]
    fn cox_roundtrip() {
        let fit = fit_cox(&data(), &CoxOptions::default()).unwrap();
        let model = Model::Cox(fit.clone());
        let back: Model<f64> = Model::from_json(&model.to_json().unwrap()).unwrap();
        let Model::Cox(c) = back else { panic!("expected a Cox fit") };
        assert_eq!(c.beta, fit.beta);
        assert_eq!(c.baseline, fit.baseline);
        assert_eq!(c.std_errors, fit.std_errors);
    }

    #[test]
    fn nan_serialized_as_null() {
        let ds = data();
        let sd = stack(&ds, &TimeEncoding::indicators()).unwrap();
        let mut fit = fit_glm(&sd, Family::Poisson, &GlmOptions::default()).unwrap();
        fit.std_errors[0] = f64::NAN;
        let json = Model::Glm(fit).to_json().unwrap();
        assert!(json.contains("\"std_error\": null"));
        assert!(json.contains("\"format\": 1"));
        let back: Model<f64> = Model::from_json(&json).unwrap();
        assert!(back.coefficient_table()[0].std_error.is_nan());
    }

    #[test]
    fn rejects_other_versions() {
        let json = Model::Cox(fit_cox(&data(), &CoxOptions::default()).unwrap()).to_json().unwrap();
        let bumped = json.replace("\"format\": 1", "\"format\": 2");
        assert!(Model::<f64>::from_json(&bumped).is_err());
    }
}
