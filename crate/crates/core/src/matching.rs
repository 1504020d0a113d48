//! Seeded stochastic caliper matching on the balancing score, post-match
//! balance, and translation of an RCT sample size into the stratum.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::mean_sd;
use crate::positivity::{overlap_report, Group, OverlapReport, OverlapThresholds};
use crate::study::{ColumnType, PatientTable};

pub const DEFAULT_SEED: u64 = 20_240_101;
pub const DEFAULT_CALIPER_SD: f64 = 0.2;
/// Used when every logit score is identical and the default caliper would be 0.
pub const MIN_CALIPER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("{0} arm is empty")]
    EmptyArm(Group),
    #[error("score {score} of '{id}' is not strictly inside (0, 1)")]
    InvalidScore { id: String, score: f64 },
    #[error("caliper must be positive and finite, got {0}")]
    InvalidCaliper(f64),
    #[error("ratio must be at least 1")]
    InvalidRatio,
    #[error("sampling ratio {0} outside (0, 1]; the effect cannot be probed in this stratum")]
    InvalidSamplingRatio(f64),
    #[error("RCT sample size must be at least 1")]
    InvalidRctSize,
    #[error("unknown patient id '{0}'")]
    UnknownId(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Caliper on the logit scale; `None` means 0.2 sd of the pooled logits.
    pub caliper: Option<f64>,
    pub ratio: usize,
    pub seed: u64,
    pub with_replacement: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            caliper: None,
            ratio: 1,
            seed: DEFAULT_SEED,
            with_replacement: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredUnit {
    pub id: String,
    pub score: f64,
    pub treated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub treated: String,
    pub control: String,
    /// Absolute difference of logit scores.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_treated: Vec<String>,
    pub unmatched_control: Vec<String>,
    pub stratum_size: usize,
    pub matched_patients: usize,
    pub sampling_ratio: f64,
    pub caliper: f64,
    pub ratio: usize,
    pub with_replacement: bool,
    pub seed: u64,
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Ratio as displayed: two decimals.
pub fn format_ratio(r: f64) -> String {
    format!("{r:.2}")
}

/// Treated units are visited in a seeded random order; each takes up to
/// `ratio` controls, every one drawn uniformly among the available controls
/// whose logit score lies within the caliper.
pub fn stochastic_match(units: &[ScoredUnit], cfg: &MatchConfig) -> Result<MatchResult, MatchError> {
    if cfg.ratio < 1 {
        return Err(MatchError::InvalidRatio);
    }
    if let Some(u) = units.iter().find(|u| !(u.score > 0.0 && u.score < 1.0)) {
        return Err(MatchError::InvalidScore {
            id: u.id.clone(),
            score: u.score,
        });
    }
    let logits: Vec<f64> = units.iter().map(|u| logit(u.score)).collect();
    let mut treated: Vec<usize> = (0..units.len()).filter(|&i| units[i].treated).collect();
    let mut controls: Vec<usize> = (0..units.len()).filter(|&i| !units[i].treated).collect();
    if treated.is_empty() {
        return Err(MatchError::EmptyArm(Group::Treated));
    }
    if controls.is_empty() {
        return Err(MatchError::EmptyArm(Group::Control));
    }
    let caliper = match cfg.caliper {
        Some(c) if c > 0.0 && c.is_finite() => c,
        Some(c) => return Err(MatchError::InvalidCaliper(c)),
        None => (DEFAULT_CALIPER_SD * mean_sd(&logits).1).max(MIN_CALIPER),
    };

    controls.sort_by(|&a, &b| logits[a].total_cmp(&logits[b]).then(a.cmp(&b)));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    treated.shuffle(&mut rng);

    let mut pairs = Vec::new();
    let mut matched_treated = BTreeSet::new();
    let mut matched_controls = BTreeSet::new();
    for &t in &treated {
        let lt = logits[t];
        for _ in 0..cfg.ratio {
            let lo = controls.partition_point(|&c| logits[c] < lt - caliper);
            let hi = controls.partition_point(|&c| logits[c] <= lt + caliper);
            if lo >= hi {
                break;
            }
            let k = lo + rng.random_range(0..hi - lo);
            let c = if cfg.with_replacement { controls[k] } else { controls.remove(k) };
            pairs.push(MatchPair {
                treated: units[t].id.clone(),
                control: units[c].id.clone(),
                distance: (lt - logits[c]).abs(),
            });
            matched_treated.insert(t);
            matched_controls.insert(c);
        }
    }
    let unmatched = |arm: bool, used: &BTreeSet<usize>| {
        (0..units.len())
            .filter(|i| units[*i].treated == arm && !used.contains(i))
            .map(|i| units[i].id.clone())
            .collect::<Vec<_>>()
    };
    let matched_patients = matched_treated.len() + matched_controls.len();
    Ok(MatchResult {
        pairs,
        unmatched_treated: unmatched(true, &matched_treated),
        unmatched_control: unmatched(false, &matched_controls),
        stratum_size: units.len(),
        matched_patients,
        sampling_ratio: matched_patients as f64 / units.len() as f64,
        caliper,
        ratio: cfg.ratio,
        with_replacement: cfg.with_replacement,
        seed: cfg.seed,
    })
}

impl MatchResult {
    /// `treated,control,distance` rows.
    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("treated,control,distance\n");
        for p in &self.pairs {
            let _ = writeln!(out, "{},{},{}", p.treated, p.control, p.distance);
        }
        out
    }
}

/// `ceil(rct_n / sampling_ratio)`, taking the ratio exactly as given. Quotients
/// within floating-point noise of an integer are not rounded up.
pub fn rct_equivalent_sample_size(rct_n: u64, sampling_ratio: f64) -> Result<u64, MatchError> {
    if rct_n == 0 {
        return Err(MatchError::InvalidRctSize);
    }
    if !(sampling_ratio > 0.0 && sampling_ratio <= 1.0) {
        return Err(MatchError::InvalidSamplingRatio(sampling_ratio));
    }
    let q = rct_n as f64 / sampling_ratio;
    let r = q.round();
    Ok(if (q - r).abs() <= 1e-9 * q { r as u64 } else { q.ceil() as u64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub smd_before: Option<f64>,
    pub smd_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PostMatch {
    NotApplicable { reason: String },
    Computed {
        overlap: Option<Box<OverlapReport>>,
        overlap_error: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceTable {
    pub rows: Vec<BalanceRow>,
    pub post_match: PostMatch,
}

/// `(mean_t - mean_c) / sqrt((var_t + var_c) / 2)`; `None` when undefined.
pub fn standardized_mean_difference(treated: &[f64], control: &[f64]) -> Option<f64> {
    if treated.is_empty() || control.is_empty() {
        return None;
    }
    let (mt, st) = mean_sd(treated);
    let (mc, sc) = mean_sd(control);
    let pooled = ((st * st + sc * sc) / 2.0).sqrt();
    let diff = mt - mc;
    if pooled > 0.0 {
        Some(diff / pooled)
    } else if diff == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Reads one numeric feature from a table row.
type Feature<'a> = Box<dyn Fn(usize) -> Option<f64> + 'a>;

/// Covariate balance before and after matching, plus the overlap of the
/// matched sample's scores.
pub fn post_match_balance(
    t: &PatientTable,
    units: &[ScoredUnit],
    result: &MatchResult,
    covariates: &[&str],
    thresholds: &OverlapThresholds,
) -> Result<BalanceTable, MatchError> {
    let row_of = |id: &str| t.row_of_id(id).ok_or_else(|| MatchError::UnknownId(id.to_string()));
    let before_t: Vec<usize> = units.iter().filter(|u| u.treated).map(|u| row_of(&u.id)).collect::<Result<_, _>>()?;
    let before_c: Vec<usize> = units.iter().filter(|u| !u.treated).map(|u| row_of(&u.id)).collect::<Result<_, _>>()?;
    let mut seen = BTreeSet::new();
    let mut after_t = Vec::new();
    let mut after_c = Vec::new();
    for p in &result.pairs {
        if seen.insert(p.treated.clone()) {
            after_t.push(row_of(&p.treated)?);
        }
        after_c.push(row_of(&p.control)?);
    }
    let matched = !result.pairs.is_empty();

    let mut rows = Vec::new();
    for &name in covariates {
        let spec = t.schema().column(name).ok_or_else(|| MatchError::UnknownColumn(name.to_string()))?;
        let mut features: Vec<(String, Feature<'_>)> = Vec::new();
        if spec.kind == ColumnType::Categorical {
            for (i, level) in spec.levels.iter().enumerate() {
                let i = i as u32;
                features.push((
                    format!("{name}={level}"),
                    Box::new(move |r| t.level(name, r).map(|l| f64::from(u8::from(l == i)))),
                ));
            }
        } else {
            features.push((name.to_string(), Box::new(move |r| t.numeric(name, r))));
        }
        for (label, f) in features {
            let vals = |rows: &[usize]| rows.iter().filter_map(|&r| f(r)).collect::<Vec<f64>>();
            rows.push(BalanceRow {
                covariate: label,
                smd_before: standardized_mean_difference(&vals(&before_t), &vals(&before_c)),
                smd_after: if matched {
                    standardized_mean_difference(&vals(&after_t), &vals(&after_c))
                } else {
                    None
                },
            });
        }
    }

    let post_match = if matched {
        let score = |id: &str| units.iter().find(|u| u.id == id).map(|u| u.score);
        let st: Vec<f64> = result
            .pairs
            .iter()
            .map(|p| p.treated.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter_map(score)
            .collect();
        let sc: Vec<f64> = result.pairs.iter().filter_map(|p| score(&p.control)).collect();
        match overlap_report(&st, &sc, thresholds) {
            Ok(r) => PostMatch::Computed {
                overlap: Some(Box::new(r)),
                overlap_error: None,
            },
            Err(e) => PostMatch::Computed {
                overlap: None,
                overlap_error: Some(e.to_string()),
            },
        }
    } else {
        PostMatch::NotApplicable {
            reason: "no matched pairs".into(),
        }
    };
    Ok(BalanceTable { rows, post_match })
}
