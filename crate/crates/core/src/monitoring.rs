//! Multicentre monitoring: centre fixed effects on treatment propensity and
//! outcome under a linear link, and the Egger IV regression across centres.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::estimators::{fit_linear_wls, DesignMatrix, EncodeOptions, Encoder, FitError, FitResult, Term};
use crate::study::{ColumnType, ExclusionReport, IngestError, PatientTable};

pub const DEFAULT_MIN_PER_CENTRE: usize = 10;
pub const DILUTION_CAVEAT: &str =
    "centre propensity effects are estimated with error; the slope is not corrected for regression dilution";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("{0}")]
    Table(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("column '{0}' must be categorical")]
    NotCategorical(String),
    #[error("column '{0}' cannot be read as binary")]
    NotBinary(String),
    #[error("need at least 3 centres with data, found {0}")]
    TooFewCentres(usize),
    #[error("reference centre '{0}' has no data")]
    UnknownReference(String),
    #[error("need at least 3 centre effect pairs, found {0}")]
    InsufficientPoints(usize),
    #[error("no instrument variation: every centre propensity effect is identical")]
    NoInstrumentVariation,
    #[error("no detectable instrument variation: Wald statistic {statistic:.3} on {df} df, p = {p_value:.3}")]
    WeakInstrument { statistic: f64, df: usize, p_value: f64 },
    #[error("centre '{0}' has a non-positive outcome standard error")]
    NonPositiveSe(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CentreConfig {
    /// Reference centre; default is the first declared level with data.
    pub reference: Option<String>,
    /// Centres with fewer complete rows are listed in the warnings.
    pub min_per_centre: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentreEffect {
    pub centre: String,
    pub n: usize,
    pub alpha: f64,
    pub se_alpha: f64,
    pub beta: f64,
    pub se_beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentreEffects {
    pub centre_column: String,
    pub reference: String,
    pub effects: Vec<CentreEffect>,
    pub small_centres: Vec<(String, usize)>,
    pub warnings: Vec<String>,
    pub exclusions: ExclusionReport,
    pub treatment_fit: FitResult,
    pub outcome_fit: FitResult,
}

/// Linear-link fits of treatment and outcome on the covariates plus one-hot
/// centre indicators; centre coefficients are read off as effect pairs.
pub fn fit_centre_effects(
    t: &PatientTable,
    covariates: &[&str],
    centre: &str,
    treatment: &str,
    outcome: &str,
    cfg: &CentreConfig,
) -> Result<CentreEffects, MonitorError> {
    let schema = t.schema();
    for name in covariates.iter().chain([&centre, &treatment, &outcome]) {
        schema.column(name).ok_or_else(|| MonitorError::UnknownColumn(name.to_string()))?;
    }
    let cspec = schema.column(centre).expect("checked");
    if cspec.kind != ColumnType::Categorical {
        return Err(MonitorError::NotCategorical(centre.to_string()));
    }
    let mut needed: Vec<&str> = covariates.to_vec();
    needed.extend([centre, treatment, outcome]);
    let (cc, exclusions) = t.complete_case(&needed).map_err(|e: IngestError| MonitorError::Table(e.to_string()))?;

    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for r in 0..cc.n_rows() {
        *counts.entry(cc.level(centre, r).expect("complete")).or_default() += 1;
    }
    let present: Vec<String> = counts.keys().map(|&l| cspec.levels[l as usize].clone()).collect();
    if present.len() < 3 {
        return Err(MonitorError::TooFewCentres(present.len()));
    }
    let reference = match &cfg.reference {
        Some(r) => present
            .iter()
            .position(|p| p == r)
            .ok_or_else(|| MonitorError::UnknownReference(r.clone()))?,
        None => 0,
    };

    let mut encoder = Encoder::fit(&cc, covariates, &EncodeOptions::default())?;
    encoder.terms.push(Term::OneHot {
        name: centre.to_string(),
        levels: present.clone(),
        reference,
    });
    let design = DesignMatrix::from_encoded(encoder.encode_table(&cc)?, encoder)?;
    let read = |col: &str| -> Result<Vec<f64>, MonitorError> {
        (0..cc.n_rows())
            .map(|r| {
                cc.binary(col, r)
                    .map(|b| f64::from(u8::from(b)))
                    .ok_or_else(|| MonitorError::NotBinary(col.to_string()))
            })
            .collect()
    };
    let ones = vec![1.0; cc.n_rows()];
    let treatment_fit = fit_linear_wls(&design, &read(treatment)?, &ones)?;
    let outcome_fit = fit_linear_wls(&design, &read(outcome)?, &ones)?;

    let floor = cfg.min_per_centre.unwrap_or(DEFAULT_MIN_PER_CENTRE);
    let mut effects = Vec::new();
    let mut small_centres = Vec::new();
    for (i, (&level, &n)) in counts.iter().enumerate() {
        let label = &cspec.levels[level as usize];
        if n < floor {
            small_centres.push((label.clone(), n));
        }
        if i == reference {
            continue;
        }
        let key = format!("{centre}={label}");
        let (alpha, se_alpha) = treatment_fit.coefficient(&key).expect("centre column");
        let (beta, se_beta) = outcome_fit.coefficient(&key).expect("centre column");
        effects.push(CentreEffect {
            centre: label.clone(),
            n,
            alpha,
            se_alpha,
            beta,
            se_beta,
        });
    }
    let warnings = small_centres
        .iter()
        .map(|(c, n)| format!("centre {c} has {n} complete rows (floor {floor})"))
        .collect();
    Ok(CentreEffects {
        centre_column: centre.to_string(),
        reference: present[reference].clone(),
        effects,
        small_centres,
        warnings,
        exclusions,
        treatment_fit,
        outcome_fit,
    })
}

impl CentreEffects {
    /// `centre,n,alpha,se_alpha,beta,se_beta` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("centre,n,alpha,se_alpha,beta,se_beta\n");
        for e in &self.effects {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                e.centre, e.n, e.alpha, e.se_alpha, e.beta, e.se_beta
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EggerWeighting {
    /// `1 / se_beta²`.
    #[default]
    OutcomePrecision,
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EggerConfig {
    pub weighting: EggerWeighting,
    /// Significance level of the joint test that all centre propensity
    /// effects are zero; the fit is refused when that is not rejected.
    /// `None` skips the test.
    pub instrument_level: Option<f64>,
}

impl Default for EggerConfig {
    fn default() -> Self {
        EggerConfig {
            weighting: EggerWeighting::OutcomePrecision,
            instrument_level: Some(0.05),
        }
    }
}

/// Joint Wald test that every centre propensity effect is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heterogeneity {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// `αᵀ Σ⁻¹ α` over the centre coefficients of the treatment fit, referred to
/// a chi-squared distribution with one degree of freedom per effect.
pub fn alpha_heterogeneity(effects: &CentreEffects) -> Option<Heterogeneity> {
    let fit = &effects.treatment_fit;
    let idx: Vec<usize> = effects
        .effects
        .iter()
        .map(|e| {
            let key = format!("{}={}", effects.centre_column, e.centre);
            fit.labels.iter().position(|l| *l == key)
        })
        .collect::<Option<_>>()?;
    if idx.is_empty() {
        return None;
    }
    let k = idx.len();
    let sigma = DMatrix::from_fn(k, k, |i, j| fit.covariance[(idx[i], idx[j])]);
    let a = DVector::from_iterator(k, effects.effects.iter().map(|e| e.alpha));
    let solved = sigma.cholesky()?.solve(&a);
    let statistic = a.dot(&solved);
    let chi = ChiSquared::new(k as f64).ok()?;
    Some(Heterogeneity {
        statistic,
        df: k,
        p_value: 1.0 - chi.cdf(statistic),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EggerPoint {
    pub centre: String,
    pub alpha: f64,
    pub beta: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EggerFit {
    pub slope: f64,
    pub intercept: f64,
    pub se_slope: f64,
    pub se_intercept: f64,
    pub n_centres: usize,
    pub weighting: EggerWeighting,
    pub points: Vec<EggerPoint>,
    pub instrument_heterogeneity: Option<Heterogeneity>,
    pub caveat: String,
}

/// Weighted regression of `beta` on `alpha` with an intercept.
pub fn egger_from_points(points: Vec<EggerPoint>, weighting: EggerWeighting) -> Result<EggerFit, MonitorError> {
    if points.len() < 3 {
        return Err(MonitorError::InsufficientPoints(points.len()));
    }
    let a0 = points[0].alpha;
    if points.iter().all(|p| p.alpha == a0) {
        return Err(MonitorError::NoInstrumentVariation);
    }
    let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.alpha]).collect();
    let design = DesignMatrix::from_rows(&rows, &["alpha"], true)?;
    let y: Vec<f64> = points.iter().map(|p| p.beta).collect();
    let w: Vec<f64> = points.iter().map(|p| p.weight).collect();
    let fit = fit_linear_wls(&design, &y, &w)?;
    let se = fit.std_errors();
    Ok(EggerFit {
        slope: fit.coefficients[1],
        intercept: fit.coefficients[0],
        se_slope: se[1],
        se_intercept: se[0],
        n_centres: points.len(),
        weighting,
        points,
        instrument_heterogeneity: None,
        caveat: DILUTION_CAVEAT.to_string(),
    })
}

/// Egger regression over the centre effect pairs, after checking that the
/// centres differ detectably in their propensity effects.
pub fn egger_iv(effects: &CentreEffects, cfg: &EggerConfig) -> Result<EggerFit, MonitorError> {
    let weighting = cfg.weighting;
    let heterogeneity = alpha_heterogeneity(effects);
    if let (Some(level), Some(h)) = (cfg.instrument_level, heterogeneity) {
        if effects.effects.len() >= 3 && h.p_value >= level {
            return Err(MonitorError::WeakInstrument {
                statistic: h.statistic,
                df: h.df,
                p_value: h.p_value,
            });
        }
    }
    let points = effects
        .effects
        .iter()
        .map(|e| {
            let weight = match weighting {
                EggerWeighting::Unit => 1.0,
                EggerWeighting::OutcomePrecision => {
                    if !(e.se_beta > 0.0 && e.se_beta.is_finite()) {
                        return Err(MonitorError::NonPositiveSe(e.centre.clone()));
                    }
                    1.0 / (e.se_beta * e.se_beta)
                }
            };
            Ok(EggerPoint {
                centre: e.centre.clone(),
                alpha: e.alpha,
                beta: e.beta,
                weight,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut fit = egger_from_points(points, weighting)?;
    fit.instrument_heterogeneity = heterogeneity;
    Ok(fit)
}

/// Stable anonymous code for a centre label.
pub fn anonymize_label(label: &str) -> String {
    let digest = Sha256::digest(label.as_bytes());
    let hex: String = digest.iter().take(4).map(|b| format!("{b:02x}")).collect();
    format!("C-{hex}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub se_x: f64,
    pub se_y: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterLine {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPlot {
    pub points: Vec<ScatterPoint>,
    pub line: ScatterLine,
    pub transform: String,
    pub anonymized: bool,
    pub weighting: EggerWeighting,
}

/// Reluctance scatter: `x = -alpha`, `y = beta`; the line is drawn in the
/// same coordinates, so its slope is the negated Egger slope.
pub fn scatter_export(effects: &CentreEffects, fit: &EggerFit, anonymize: bool) -> ScatterPlot {
    let points = effects
        .effects
        .iter()
        .zip(&fit.points)
        .map(|(e, p)| ScatterPoint {
            label: if anonymize { anonymize_label(&e.centre) } else { e.centre.clone() },
            x: -e.alpha,
            y: e.beta,
            se_x: e.se_alpha,
            se_y: e.se_beta,
            weight: p.weight,
        })
        .collect();
    ScatterPlot {
        points,
        line: ScatterLine {
            slope: -fit.slope,
            intercept: fit.intercept,
        },
        transform: "x = -alpha (reluctance); y = beta; line slope = -(Egger slope on alpha)".into(),
        anonymized: anonymize,
        weighting: fit.weighting,
    }
}

/// Recomputes the Egger fit from scatter data alone.
pub fn refit_from_scatter(plot: &ScatterPlot) -> Result<EggerFit, MonitorError> {
    let points = plot
        .points
        .iter()
        .map(|p| EggerPoint {
            centre: p.label.clone(),
            alpha: -p.x,
            beta: p.y,
            weight: p.weight,
        })
        .collect();
    egger_from_points(points, plot.weighting)
}

impl ScatterPlot {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("centre,x,y,se_x,se_y,weight\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{},{},{}", p.label, p.x, p.y, p.se_x, p.se_y, p.weight);
        }
        out
    }
}
