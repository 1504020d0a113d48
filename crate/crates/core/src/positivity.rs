//! Positivity diagnostics: per-arm density profiles of the balancing score,
//! their overlap, and arm counts per parent configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::study::{ColumnType, PatientTable};

pub const DEFAULT_GRID: usize = 512;
pub const BANDWIDTH_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PositivityError {
    #[error("{group} group has {n} observations, need at least 2")]
    TooFewObservations { group: Group, n: usize },
    #[error("{group} score {value} outside (0, 1)")]
    OutOfRange { group: Group, value: f64 },
    #[error("grid needs at least 2 points, got {0}")]
    InvalidGrid(usize),
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("treatment column '{0}' is not binary")]
    NotBinaryTreatment(String),
    #[error("continuous parent '{0}' needs a binning spec")]
    UnbinnedContinuous(String),
    #[error("bin edges for '{0}' must be finite and strictly increasing")]
    InvalidBins(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Treated,
    Control,
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Group::Treated => "treated",
            Group::Control => "control",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub group: Group,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub n: usize,
    pub bandwidth: f64,
}

impl DensityProfile {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

pub fn uniform_grid(points: usize) -> Vec<f64> {
    let step = 1.0 / (points - 1) as f64;
    (0..points).map(|i| if i + 1 == points { 1.0 } else { i as f64 * step }).collect()
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Sample quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `0.9 · min(sd, IQR/1.34) · n^(-1/5)`. When one spread
/// measure is zero the other is used; the result never drops below
/// [`BANDWIDTH_FLOOR`].
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return BANDWIDTH_FLOOR;
    }
    let (_, sd) = crate::estimators::mean_sd(values);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => 0.0,
    };
    (0.9 * spread * (n as f64).powf(-0.2)).max(BANDWIDTH_FLOOR)
}

fn check_scores(scores: &[f64], group: Group) -> Result<(), PositivityError> {
    if scores.len() < 2 {
        return Err(PositivityError::TooFewObservations { group, n: scores.len() });
    }
    if let Some(&value) = scores.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
        return Err(PositivityError::OutOfRange { group, value });
    }
    Ok(())
}

/// Gaussian KDE on a uniform grid over [0, 1] with reflection at both
/// boundaries, renormalized to unit trapezoid mass.
pub fn kde_profile(scores: &[f64], group: Group, grid_size: usize) -> Result<DensityProfile, PositivityError> {
    check_scores(scores, group)?;
    if grid_size < 2 {
        return Err(PositivityError::InvalidGrid(grid_size));
    }
    let h = silverman_bandwidth(scores);
    let grid = uniform_grid(grid_size);
    let norm = 1.0 / (scores.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let kernel = |u: f64| (-0.5 * u * u).exp();
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            scores
                .iter()
                .map(|&s| kernel((x - s) / h) + kernel((x + s) / h) + kernel((x - (2.0 - s)) / h))
                .sum::<f64>()
                * norm
        })
        .collect();
    let mass = trapezoid(&grid, &density);
    if mass > 0.0 {
        density.iter_mut().for_each(|d| *d /= mass);
    }
    Ok(DensityProfile {
        group,
        grid,
        density,
        n: scores.len(),
        bandwidth: h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapThresholds {
    /// Density floor defining common support.
    pub epsilon: f64,
    /// Overlap coefficient needed for an adequate verdict.
    pub adequate: f64,
    /// Below this the verdict is inadequate.
    pub inadequate: f64,
    /// Largest per-arm mass outside common support for an adequate verdict.
    pub max_outside_mass: f64,
    pub grid_size: usize,
}

impl Default for OverlapThresholds {
    fn default() -> Self {
        OverlapThresholds {
            epsilon: 0.01,
            adequate: 0.5,
            inadequate: 0.2,
            max_outside_mass: 0.1,
            grid_size: DEFAULT_GRID,
        }
    }
}

impl OverlapThresholds {
    pub fn validate(&self) -> Result<(), PositivityError> {
        let bad = |m: &str| Err(PositivityError::InvalidThreshold(m.to_string()));
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be a finite non-negative number");
        }
        if !(0.0..=1.0).contains(&self.inadequate) || !(0.0..=1.0).contains(&self.adequate) {
            return bad("coefficient thresholds must lie in [0, 1]");
        }
        if self.inadequate > self.adequate {
            return bad("inadequate threshold exceeds adequate threshold");
        }
        if !(0.0..=1.0).contains(&self.max_outside_mass) {
            return bad("outside-mass threshold must lie in [0, 1]");
        }
        if self.grid_size < 2 {
            return Err(PositivityError::InvalidGrid(self.grid_size));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Adequate,
    Partial,
    Inadequate,
}

/// Interval where only `group` has density above the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFlag {
    pub group: Group,
    pub low: f64,
    pub high: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub treated: DensityProfile,
    pub control: DensityProfile,
    pub overlap_coefficient: f64,
    pub common_support: Vec<(f64, f64)>,
    pub outside_mass_treated: f64,
    pub outside_mass_control: f64,
    pub tail_flags: Vec<TailFlag>,
    pub thresholds: OverlapThresholds,
    pub verdict: Verdict,
}

/// Verdict from the overlap coefficient and per-arm mass outside support.
pub fn verdict(coefficient: f64, outside_treated: f64, outside_control: f64, th: &OverlapThresholds) -> Verdict {
    if coefficient < th.inadequate {
        Verdict::Inadequate
    } else if coefficient >= th.adequate
        && outside_treated <= th.max_outside_mass
        && outside_control <= th.max_outside_mass
    {
        Verdict::Adequate
    } else {
        Verdict::Partial
    }
}

/// Maximal runs of grid indices where `keep` holds, as inclusive index pairs.
fn runs(n: usize, keep: impl Fn(usize) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for i in 0..n {
        match (keep(i), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, n - 1));
    }
    out
}

/// Trapezoid mass of `density` over segments whose both endpoints satisfy `keep`.
fn mass_where(grid: &[f64], density: &[f64], keep: impl Fn(usize) -> bool) -> f64 {
    (0..grid.len() - 1)
        .filter(|&i| keep(i) && keep(i + 1))
        .map(|i| 0.5 * (grid[i + 1] - grid[i]) * (density[i] + density[i + 1]))
        .sum()
}

impl OverlapReport {
    pub fn recompute_verdict(&self) -> Verdict {
        verdict(
            self.overlap_coefficient,
            self.outside_mass_treated,
            self.outside_mass_control,
            &self.thresholds,
        )
    }

    /// Plot data: `grid,density_treated,density_control`.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("grid,density_treated,density_control\n");
        for i in 0..self.treated.grid.len() {
            let _ = writeln!(
                out,
                "{},{},{}",
                self.treated.grid[i], self.treated.density[i], self.control.density[i]
            );
        }
        out
    }
}

pub fn overlap_report(
    treated: &[f64],
    control: &[f64],
    thresholds: &OverlapThresholds,
) -> Result<OverlapReport, PositivityError> {
    thresholds.validate()?;
    let t = kde_profile(treated, Group::Treated, thresholds.grid_size)?;
    let c = kde_profile(control, Group::Control, thresholds.grid_size)?;
    let grid = &t.grid;
    let min: Vec<f64> = t.density.iter().zip(&c.density).map(|(a, b)| a.min(*b)).collect();
    let overlap_coefficient = trapezoid(grid, &min).clamp(0.0, 1.0);
    let eps = thresholds.epsilon;
    let both = |i: usize| t.density[i] > eps && c.density[i] > eps;
    let common_support = runs(grid.len(), both)
        .into_iter()
        .map(|(a, b)| (grid[a], grid[b]))
        .collect();
    let outside = |p: &DensityProfile| (1.0 - mass_where(grid, &p.density, both)).clamp(0.0, 1.0);
    let outside_mass_treated = outside(&t);
    let outside_mass_control = outside(&c);

    let mut tail_flags = Vec::new();
    for (p, q) in [(&t, &c), (&c, &t)] {
        let only = |i: usize| p.density[i] > eps && q.density[i] <= eps;
        for (a, b) in runs(grid.len(), only) {
            tail_flags.push(TailFlag {
                group: p.group,
                low: grid[a],
                high: grid[b],
                mass: mass_where(grid, &p.density, |i| (a..=b).contains(&i)),
            });
        }
    }
    tail_flags.sort_by(|a, b| a.low.total_cmp(&b.low).then(a.group.cmp(&b.group)));

    let v = verdict(overlap_coefficient, outside_mass_treated, outside_mass_control, thresholds);
    Ok(OverlapReport {
        treated: t,
        control: c,
        overlap_coefficient,
        common_support,
        outside_mass_treated,
        outside_mass_control,
        tail_flags,
        thresholds: *thresholds,
        verdict: v,
    })
}

/// One observed parent configuration and its arm counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityCell {
    pub configuration: Vec<String>,
    pub treated: usize,
    pub control: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub parents: Vec<String>,
    pub min_count: usize,
    pub cells: Vec<PositivityCell>,
    pub n_flagged: usize,
    /// Rows skipped for a missing treatment or parent value.
    pub skipped_missing: usize,
}

fn bin_label(edges: &[f64], v: f64) -> String {
    let k = edges.partition_point(|e| *e <= v);
    match k {
        0 => format!("<{}", edges[0]),
        k if k == edges.len() => format!(">={}", edges[k - 1]),
        k => format!("[{},{})", edges[k - 1], edges[k]),
    }
}

/// Arm counts for every observed configuration of `parents`. Real-valued
/// parents are discretized with the given bin edges. Configurations where an
/// arm has fewer than `min_count` patients are flagged.
pub fn positivity_cells(
    t: &PatientTable,
    treatment: &str,
    parents: &[&str],
    bins: &BTreeMap<String, Vec<f64>>,
    min_count: usize,
) -> Result<CellReport, PositivityError> {
    let tspec = t
        .schema()
        .column(treatment)
        .ok_or_else(|| PositivityError::UnknownColumn(treatment.to_string()))?;
    if tspec.kind != ColumnType::Binary {
        return Err(PositivityError::NotBinaryTreatment(treatment.to_string()));
    }
    for &p in parents {
        let spec = t
            .schema()
            .column(p)
            .ok_or_else(|| PositivityError::UnknownColumn(p.to_string()))?;
        if spec.kind == ColumnType::Real {
            let edges = bins.get(p).ok_or_else(|| PositivityError::UnbinnedContinuous(p.to_string()))?;
            if edges.is_empty() || edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(PositivityError::InvalidBins(p.to_string()));
            }
        }
    }
    let mut counts: BTreeMap<Vec<String>, (usize, usize)> = BTreeMap::new();
    let mut skipped_missing = 0;
    'rows: for r in 0..t.n_rows() {
        let Some(arm) = t.binary(treatment, r) else {
            skipped_missing += 1;
            continue;
        };
        let mut config = Vec::with_capacity(parents.len());
        for &p in parents {
            let col = t.schema().position(p).expect("checked above");
            if t.is_missing(p, r) {
                skipped_missing += 1;
                continue 'rows;
            }
            let label = match bins.get(p) {
                Some(edges) if t.schema().columns()[col].kind == ColumnType::Real => {
                    bin_label(edges, t.numeric(p, r).expect("not missing"))
                }
                _ => t.cell_text(col, r),
            };
            config.push(label);
        }
        let e = counts.entry(config).or_default();
        if arm {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    let cells: Vec<PositivityCell> = counts
        .into_iter()
        .map(|(configuration, (treated, control))| PositivityCell {
            configuration,
            treated,
            control,
            flagged: treated < min_count.max(1) || control < min_count.max(1),
        })
        .collect();
    Ok(CellReport {
        parents: parents.iter().map(|s| s.to_string()).collect(),
        min_count,
        n_flagged: cells.iter().filter(|c| c.flagged).count(),
        cells,
        skipped_missing,
    })
}
