//! Regression estimators: MAP logistic regression with a Gaussian prior and
//! Laplace covariance, and weighted least squares.

mod design;
mod logit;
mod wls;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub use design::{CovariateRow, CovariateValue, DesignMatrix, EncodeOptions, Encoder, Term, INTERCEPT_LABEL};
pub use logit::{fit_logit_map, predict_propensity, predict_propensity_rows, sigmoid, LogitObjective};
pub use wls::{fit_linear_wls, predict_linear, LinearPrediction};

pub(crate) use design::mean_sd;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("design is rank deficient: column '{column}' is a linear combination of {depends_on:?}")]
    RankDeficient { column: String, depends_on: Vec<String> },
    #[error("zero residual degrees of freedom ({n} positive-weight rows, {p} parameters)")]
    ZeroDegreesOfFreedom { n: usize, p: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("confidence level {0} must lie strictly between 0 and 1")]
    InvalidLevel(f64),
    #[error("column '{column}' has level {level} not seen at fit time")]
    UnseenLevel { column: String, level: String },
    #[error("missing value in column '{column}' at row {row}")]
    MissingValue { column: String, row: usize },
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("operation needs a {expected:?} fit")]
    WrongLink { expected: Link },
    #[error("prior scale must be positive, got {0}")]
    InvalidPrior(f64),
    #[error("no observations")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Identity,
}

/// Independent zero-mean Gaussian prior on the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub sd: f64,
    pub intercept_sd: f64,
}

impl Default for Prior {
    fn default() -> Self {
        Prior {
            sd: 2.5,
            intercept_sd: 10.0,
        }
    }
}

impl Prior {
    /// `f64::INFINITY` gives a flat prior (maximum likelihood).
    pub fn new(sd: f64, intercept_sd: f64) -> Result<Self, FitError> {
        for s in [sd, intercept_sd] {
            if s.is_nan() || s <= 0.0 {
                return Err(FitError::InvalidPrior(s));
            }
        }
        Ok(Prior { sd, intercept_sd })
    }

    pub fn flat() -> Self {
        Prior {
            sd: f64::INFINITY,
            intercept_sd: f64::INFINITY,
        }
    }

    pub(crate) fn precisions(&self, p: usize, intercept: bool) -> Vec<f64> {
        (0..p)
            .map(|j| {
                let s = if intercept && j == 0 { self.intercept_sd } else { self.sd };
                1.0 / (s * s)
            })
            .collect()
    }
}

/// Fitted coefficients with their covariance and the encoder needed to
/// predict on new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub link: Link,
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub n_obs: usize,
    /// Residual variance of a linear fit.
    pub sigma2: Option<f64>,
    pub prior: Option<Prior>,
    pub encoder: Encoder,
}

/// One coefficient row of a forest plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRecord {
    pub label: String,
    pub point: f64,
    pub low: f64,
    pub high: f64,
}

pub(crate) fn normal_quantile(level: f64) -> Result<f64, FitError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(FitError::InvalidLevel(level));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 + level / 2.0))
}

impl FitResult {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len())
            .map(|j| self.covariance[(j, j)].max(0.0).sqrt())
            .collect()
    }

    /// Symmetric Wald interval for every coefficient.
    pub fn intervals(&self, level: f64) -> Result<Vec<(f64, f64)>, FitError> {
        let z = normal_quantile(level)?;
        Ok(self
            .coefficients
            .iter()
            .zip(self.std_errors())
            .map(|(b, se)| (b - z * se, b + z * se))
            .collect())
    }

    /// Point estimate and standard error for a labelled coefficient.
    pub fn coefficient(&self, label: &str) -> Option<(f64, f64)> {
        let j = self.labels.iter().position(|l| l == label)?;
        Some((self.coefficients[j], self.covariance[(j, j)].max(0.0).sqrt()))
    }

    pub fn has_intercept(&self) -> bool {
        self.encoder.intercept
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }

    /// Plain-text coefficient table.
    pub fn summary_table(&self) -> String {
        let ci = self.intervals(0.95).unwrap_or_default();
        let width = self.labels.iter().map(String::len).max().unwrap_or(0).max(4);
        let mut out = match self.prior {
            Some(p) => format!(
                "{:?} fit, n = {}, prior normal(0, {}) on coefficients and normal(0, {}) on the intercept\n",
                self.link, self.n_obs, p.sd, p.intercept_sd
            ),
            None => format!("{:?} fit, n = {}\n", self.link, self.n_obs),
        };
        out += &format!(
            "{:<width$}  {:>10}  {:>10}  {:>10}  {:>10}\n",
            "term", "estimate", "std.err", "2.5%", "97.5%"
        );
        for (j, label) in self.labels.iter().enumerate() {
            let se = self.covariance[(j, j)].max(0.0).sqrt();
            let _ = writeln!(
                out,
                "{label:<width$}  {:>10.4}  {:>10.4}  {:>10.4}  {:>10.4}",
                self.coefficients[j], se, ci[j].0, ci[j].1
            );
        }
        out
    }
}

/// Forest-plot records for every non-intercept coefficient.
pub fn forest_export(fit: &FitResult, level: f64) -> Result<Vec<ForestRecord>, FitError> {
    let ci = fit.intervals(level)?;
    Ok(fit
        .labels
        .iter()
        .enumerate()
        .filter(|(j, _)| !(fit.has_intercept() && *j == 0))
        .map(|(j, label)| ForestRecord {
            label: label.clone(),
            point: fit.coefficients[j],
            low: ci[j].0,
            high: ci[j].1,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        assert!((normal_quantile(0.95).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn prior_validation() {
        assert!(Prior::new(0.0, 1.0).is_err());
        assert!(Prior::new(1.0, -1.0).is_err());
        assert!(Prior::new(f64::INFINITY, 1.0).is_ok());
        assert_eq!(Prior::flat().precisions(2, true), vec![0.0, 0.0]);
        assert_eq!(Prior::default().precisions(2, true), vec![0.01, 0.16]);
    }
}
