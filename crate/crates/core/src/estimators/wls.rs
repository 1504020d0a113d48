use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DesignMatrix, FitError, FitResult, Link};

const RANK_TOL: f64 = 1e-10;

/// Weighted least squares via a QR factorization of `sqrt(W) X`.
/// Rows with zero weight do not count toward the residual degrees of freedom.
pub fn fit_linear_wls(design: &DesignMatrix, y: &[f64], w: &[f64]) -> Result<FitResult, FitError> {
    let x = design.matrix();
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n || w.len() != n {
        return Err(FitError::DimensionMismatch(format!(
            "{n} design rows, {} responses, {} weights",
            y.len(),
            w.len()
        )));
    }
    if n == 0 {
        return Err(FitError::Empty);
    }
    if let Some(bad) = w.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(FitError::InvalidWeights(format!("weight {bad} is not a finite non-negative number")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite("response".into()));
    }
    let n_pos = w.iter().filter(|v| **v > 0.0).count();
    if n_pos == 0 {
        return Err(FitError::InvalidWeights("all weights are zero".into()));
    }

    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let xw = DMatrix::from_fn(n, p, |r, c| x[(r, c)] * sw[r]);
    let yw = DVector::from_fn(n, |r, _| y[r] * sw[r]);

    check_rank(&xw, design.labels())?;
    if n_pos <= p {
        return Err(FitError::ZeroDegreesOfFreedom { n: n_pos, p });
    }

    let qr = xw.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &yw;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| FitError::NonFinite("triangular solve".into()))?;
    let resid = &yw - &xw * &beta;
    let sigma2 = resid.norm_squared() / (n_pos - p) as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| FitError::NonFinite("triangular inverse".into()))?;
    let covariance = (&r_inv * r_inv.transpose()) * sigma2;

    Ok(FitResult {
        link: Link::Identity,
        labels: design.labels().to_vec(),
        coefficients: beta.iter().copied().collect(),
        covariance,
        iterations: 0,
        gradient_norm: 0.0,
        n_obs: n_pos,
        sigma2: Some(sigma2),
        prior: None,
        encoder: design.encoder().clone(),
    })
}

/// Modified Gram-Schmidt; the first column that adds no new direction is
/// reported with the earlier columns that reproduce it.
fn check_rank(xw: &DMatrix<f64>, labels: &[String]) -> Result<(), FitError> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..xw.ncols() {
        let col = xw.column(j).into_owned();
        let scale = col.norm();
        let mut v = col.clone();
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        let rn = v.norm();
        if scale == 0.0 || rn <= RANK_TOL * scale {
            let depends_on = if kept.is_empty() || scale == 0.0 {
                Vec::new()
            } else {
                let sub = DMatrix::from_fn(xw.nrows(), kept.len(), |r, c| xw[(r, kept[c])]);
                let coef = sub
                    .svd(true, true)
                    .solve(&col, 1e-12)
                    .unwrap_or_else(|_| DVector::zeros(kept.len()));
                let cmax = coef.amax().max(1e-300);
                kept.iter()
                    .zip(coef.iter())
                    .filter(|(_, c)| c.abs() > 1e-8 * cmax)
                    .map(|(k, _)| labels[*k].clone())
                    .collect()
            };
            return Err(FitError::RankDeficient {
                column: labels[j].clone(),
                depends_on,
            });
        }
        basis.push(v / rn);
        kept.push(j);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPrediction {
    pub values: Vec<f64>,
    /// Rows whose prediction falls outside [0, 1]; expected for a linear
    /// probability model.
    pub out_of_range: Vec<usize>,
}

/// Predictions of a linear fit on already-encoded rows.
pub fn predict_linear(fit: &FitResult, x: &DMatrix<f64>) -> Result<LinearPrediction, FitError> {
    if fit.link != Link::Identity {
        return Err(FitError::WrongLink { expected: Link::Identity });
    }
    if x.ncols() != fit.coefficients.len() {
        return Err(FitError::DimensionMismatch(format!(
            "{} columns for {} coefficients",
            x.ncols(),
            fit.coefficients.len()
        )));
    }
    let values: Vec<f64> = (0..x.nrows())
        .map(|r| (0..x.ncols()).map(|c| x[(r, c)] * fit.coefficients[c]).sum())
        .collect();
    let out_of_range = values
        .iter()
        .enumerate()
        .filter(|(_, v)| !(0.0..=1.0).contains(*v))
        .map(|(i, _)| i)
        .collect();
    Ok(LinearPrediction { values, out_of_range })
}
