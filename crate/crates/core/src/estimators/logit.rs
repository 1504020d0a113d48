use nalgebra::{DMatrix, DVector};

use super::{CovariateRow, DesignMatrix, FitError, FitResult, Link, Prior};
use crate::study::PatientTable;

const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;
const GRAD_TOL: f64 = 1e-8;

/// Numerically stable logistic function.
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

/// Log posterior of a logistic model under an independent Gaussian prior
/// (up to an additive constant).
pub struct LogitObjective<'a> {
    x: &'a DMatrix<f64>,
    y: DVector<f64>,
    precisions: Vec<f64>,
}

impl<'a> LogitObjective<'a> {
    pub fn new(design: &'a DesignMatrix, y: &[bool], prior: &Prior) -> Result<Self, FitError> {
        let x = design.matrix();
        if x.nrows() != y.len() {
            return Err(FitError::DimensionMismatch(format!(
                "{} design rows for {} outcomes",
                x.nrows(),
                y.len()
            )));
        }
        Ok(LogitObjective {
            x,
            y: DVector::from_iterator(y.len(), y.iter().map(|&b| f64::from(u8::from(b)))),
            precisions: prior.precisions(x.ncols(), design.has_intercept()),
        })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn value(&self, beta: &DVector<f64>) -> f64 {
        let eta = self.x * beta;
        let ll: f64 = eta.iter().zip(self.y.iter()).map(|(e, y)| y * e - softplus(*e)).sum();
        let penalty: f64 = beta
            .iter()
            .zip(&self.precisions)
            .map(|(b, p)| if *p == 0.0 { 0.0 } else { 0.5 * p * b * b })
            .sum();
        ll - penalty
    }

    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let eta = self.x * beta;
        let resid = DVector::from_iterator(eta.len(), eta.iter().zip(self.y.iter()).map(|(e, y)| y - sigmoid(*e)));
        let mut g = self.x.transpose() * resid;
        for (j, p) in self.precisions.iter().enumerate() {
            g[j] -= p * beta[j];
        }
        g
    }

    /// Negative Hessian (positive definite when the prior is proper).
    pub fn information(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let eta = self.x * beta;
        let w: Vec<f64> = eta
            .iter()
            .map(|e| {
                let p = sigmoid(*e);
                p * (1.0 - p)
            })
            .collect();
        let xw = DMatrix::from_fn(self.x.nrows(), self.x.ncols(), |r, c| self.x[(r, c)] * w[r]);
        let mut h = self.x.transpose() * xw;
        for (j, p) in self.precisions.iter().enumerate() {
            h[(j, j)] += p;
        }
        h
    }
}

/// MAP logistic regression by damped Newton iterations; the covariance is the
/// inverse negative Hessian at the mode.
pub fn fit_logit_map(design: &DesignMatrix, y: &[bool], prior: &Prior) -> Result<FitResult, FitError> {
    if design.nrows() == 0 {
        return Err(FitError::Empty);
    }
    let obj = LogitObjective::new(design, y, prior)?;
    let p = obj.dim();
    let mut beta = DVector::zeros(p);
    let mut f = obj.value(&beta);
    let mut iterations = 0;
    let mut grad = obj.gradient(&beta);
    while grad.norm() >= GRAD_TOL {
        if iterations == MAX_ITER {
            return Err(FitError::NonConvergence {
                iterations,
                gradient_norm: grad.norm(),
            });
        }
        iterations += 1;
        let info = obj.information(&beta);
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => info
                .svd(true, true)
                .solve(&grad, 1e-12)
                .map_err(|e| FitError::NonFinite(e.to_string()))?,
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = &beta + &step * t;
            let fc = obj.value(&cand);
            if fc.is_finite() && fc >= f - 1e-12 * (1.0 + f.abs()) {
                beta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        grad = obj.gradient(&beta);
        if !accepted {
            return Err(FitError::NonConvergence {
                iterations,
                gradient_norm: grad.norm(),
            });
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(FitError::NonFinite("coefficients".into()));
    }
    let info = obj.information(&beta);
    let covariance = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| info.try_inverse())
        .ok_or_else(|| FitError::NonFinite("covariance (singular information matrix)".into()))?;
    Ok(FitResult {
        link: Link::Logit,
        labels: design.labels().to_vec(),
        coefficients: beta.iter().copied().collect(),
        covariance,
        iterations,
        gradient_norm: grad.norm(),
        n_obs: design.nrows(),
        sigma2: None,
        prior: Some(*prior),
        encoder: design.encoder().clone(),
    })
}

fn clamp_open(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Propensity scores for every row of `table`, strictly inside (0, 1).
pub fn predict_propensity(fit: &FitResult, table: &PatientTable) -> Result<Vec<f64>, FitError> {
    if fit.link != Link::Logit {
        return Err(FitError::WrongLink { expected: Link::Logit });
    }
    let x = fit.encoder.encode_table(table)?;
    Ok((0..x.nrows())
        .map(|r| {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            clamp_open(sigmoid(fit.linear_predictor(&row)))
        })
        .collect())
}

/// Propensity scores for new rows given as raw covariate values.
pub fn predict_propensity_rows(fit: &FitResult, rows: &[CovariateRow]) -> Result<Vec<f64>, FitError> {
    if fit.link != Link::Logit {
        return Err(FitError::WrongLink { expected: Link::Logit });
    }
    rows.iter()
        .map(|r| {
            let x = fit.encoder.encode_row(r)?;
            Ok(clamp_open(sigmoid(fit.linear_predictor(&x))))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0).is_finite());
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((softplus(-800.0)).abs() < 1e-300);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(clamp_open(sigmoid(800.0)) < 1.0);
        assert!(clamp_open(sigmoid(-800.0)) > 0.0);
    }

    #[test]
    fn intercept_only_matches_log_odds() {
        let rows: Vec<Vec<f64>> = vec![vec![]; 10];
        let d = DesignMatrix::from_rows(&rows, &[], true).unwrap();
        let y: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let fit = fit_logit_map(&d, &y, &Prior::flat()).unwrap();
        assert!((fit.coefficients[0] - (3.0f64 / 7.0).ln()).abs() < 1e-9);
        // Var = 1 / (n p (1-p))
        assert!((fit.covariance[(0, 0)] - 1.0 / (10.0 * 0.3 * 0.7)).abs() < 1e-9);
    }

    #[test]
    fn separated_data_stays_finite_under_prior() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let d = DesignMatrix::from_rows(&rows, &["x"], true).unwrap();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let fit = fit_logit_map(&d, &y, &Prior::default()).unwrap();
        assert!(fit.coefficients.iter().all(|b| b.is_finite()));
        assert!(fit.covariance.iter().all(|b| b.is_finite()));
        assert!(fit.coefficients[1] > 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let d = DesignMatrix::from_rows(&[vec![1.0]], &["x"], true).unwrap();
        assert!(matches!(
            fit_logit_map(&d, &[true, false], &Prior::default()),
            Err(FitError::DimensionMismatch(_))
        ));
    }
}
