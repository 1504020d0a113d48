use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use midway::dag::{
    find_adjustment_sets_with_limit, parse_dag, Dag, DagError, IdentifyResult, IdentifyStatus, NodeId,
    DEFAULT_MAX_CANDIDATES,
};
use midway::estimators::{fit_logit_map, forest_export, predict_propensity, DesignMatrix, EncodeOptions, FitError, ForestRecord, Prior};
use midway::matching::{
    format_ratio, post_match_balance, rct_equivalent_sample_size, stochastic_match, BalanceTable, MatchConfig,
    MatchError, MatchResult, PostMatch, ScoredUnit, DEFAULT_SEED,
};
use midway::monitoring::{
    alpha_heterogeneity, egger_iv, fit_centre_effects, scatter_export, CentreConfig, CentreEffects, EggerConfig,
    EggerFit, Heterogeneity, MonitorError, ScatterPlot,
};
use midway::positivity::{overlap_report, OverlapReport, OverlapThresholds, PositivityError};
use midway::scm::{generate_multicentre, MulticentreConfig, Scm, ScmError};
use midway::study::{
    apply_stratum, ingest_csv, parse_filter, parse_filter_expr, ExclusionReport, FilterError, IngestError, PatientTable,
    Role, Schema, SchemaError, StratumFilter, StratumReport,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::sha256_hex;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema: {0}")]
    Schema(#[from] SchemaError),
    #[error("data: {0}")]
    Ingest(#[from] IngestError),
    #[error("graph: {0}")]
    Dag(#[from] DagError),
    #[error("filter: {0}")]
    Filter(#[from] FilterError),
    #[error("{}", empty_stratum(.0))]
    EmptyStratum(Box<StratumReport>),
    #[error("fit: {0}")]
    Fit(#[from] FitError),
    #[error("positivity: {0}")]
    Positivity(#[from] PositivityError),
    #[error("matching: {0}")]
    Match(#[from] MatchError),
    #[error("monitoring: {0}")]
    Monitor(#[from] MonitorError),
    #[error("simulation: {0}")]
    Scm(#[from] ScmError),
}

fn empty_stratum(r: &StratumReport) -> String {
    let ex = &r.exclusions;
    let mut s = format!(
        "stratum `{}` is empty: {} input rows, {} not matching, {} excluded for missing values",
        r.filter, ex.input_rows, r.non_matching, ex.excluded_missing
    );
    for (col, n) in &ex.missing_by_column {
        let _ = write!(s, "; {col}: {n} missing");
    }
    s
}

fn usage(msg: impl Into<String>) -> RunError {
    RunError::Usage(msg.into())
}

/// A file that fed a run, recorded in its manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

pub fn read_input(role: &str, path: &Path) -> Result<(String, InputFile), RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file = InputFile {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: sha256_hex(text.as_bytes()),
    };
    Ok((text, file))
}

/// Patient table loaded once from a CSV and its schema.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub table: PatientTable,
    pub inputs: Vec<InputFile>,
}

impl Dataset {
    pub fn load(data: &Path, schema: &Path) -> Result<Dataset, RunError> {
        let (schema_text, schema_file) = read_input("schema", schema)?;
        let (data_text, data_file) = read_input("data", data)?;
        let schema = Schema::from_json(&schema_text)?;
        let table = ingest_csv(data_text.as_bytes(), &schema)?;
        Ok(Dataset {
            table,
            inputs: vec![data_file, schema_file],
        })
    }

    pub fn schema(&self) -> &Schema {
        self.table.schema()
    }
}

/// A parsed causal graph with its source text.
#[derive(Debug, Clone)]
pub struct LoadedDag {
    pub dag: Dag,
    pub input: InputFile,
}

impl LoadedDag {
    pub fn load(path: &Path) -> Result<LoadedDag, RunError> {
        let (text, input) = read_input("dag", path)?;
        Ok(LoadedDag {
            dag: parse_dag(&text)?,
            input,
        })
    }

    pub fn to_json(&self) -> String {
        let edges = self.dag.edges();
        let edges: Vec<[&str; 2]> = edges.iter().map(|(a, b)| [a.as_str(), b.as_str()]).collect();
        let nodes: Vec<&str> = self.dag.nodes().iter().map(|n| n.as_str()).collect();
        let v = serde_json::json!({ "nodes": nodes, "edges": edges, "dsl": self.dag.to_dsl() });
        serde_json::to_string_pretty(&v).expect("graph serializes")
    }
}

/// Output of one command: machine JSON, aligned text and extra files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub command: &'static str,
    pub json: String,
    pub text: String,
    /// Extra outputs such as CSV plot data, by file name.
    pub files: Vec<(String, String)>,
    /// Set by `identify`; drives the 0/2 exit code.
    pub identified: Option<bool>,
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn join<I: IntoIterator<Item = S>, S: AsRef<str>>(items: I) -> String {
    items.into_iter().map(|s| s.as_ref().to_string()).collect::<Vec<_>>().join(", ")
}

// ---------------------------------------------------------------------------
// identify

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifyRequest {
    pub x: String,
    pub y: String,
    /// Nodes conditioned on by design.
    pub forced: Vec<String>,
    /// Unobserved nodes; every other node counts as observed.
    pub latent: Vec<String>,
    /// Stratum filter; the columns it references are conditioned on.
    pub filter: Option<String>,
    pub max_candidates: Option<usize>,
}

fn node(g: &Dag, name: &str) -> Result<NodeId, RunError> {
    let id = NodeId::new(name)?;
    if !g.contains(id.as_str()) {
        return Err(DagError::UnknownNode(name.to_string()).into());
    }
    Ok(id)
}

pub fn run_identify(g: &Dag, req: &IdentifyRequest) -> Result<Report, RunError> {
    let x = node(g, &req.x)?;
    let y = node(g, &req.y)?;
    let mut forced = BTreeSet::new();
    for f in &req.forced {
        forced.insert(node(g, f)?);
    }
    if let Some(text) = &req.filter {
        for col in parse_filter_expr(text)?.columns() {
            forced.insert(node(g, &col)?);
        }
    }
    let mut observed: BTreeSet<NodeId> = g.nodes().iter().cloned().collect();
    for l in &req.latent {
        observed.remove(&node(g, l)?);
    }
    let limit = req.max_candidates.unwrap_or(DEFAULT_MAX_CANDIDATES);
    let result = find_adjustment_sets_with_limit(g, &x, &y, &observed, &forced, limit)?;
    let identified = result.status == IdentifyStatus::Identified;
    Ok(Report {
        command: "identify",
        json: pretty(&result),
        text: identify_text(&result),
        files: Vec::new(),
        identified: Some(identified),
    })
}

fn identify_text(r: &IdentifyResult) -> String {
    let mut s = String::new();
    let status = match r.status {
        IdentifyStatus::Identified => "identified",
        IdentifyStatus::NotIdentified => "not identified",
    };
    let _ = writeln!(s, "effect of {} on {}: {status}", r.x, r.y);
    let _ = writeln!(s, "conditioned by design: {{{}}}", join(r.forced.iter().map(NodeId::as_str)));
    if r.status == IdentifyStatus::Identified {
        s.push_str("minimal adjustment sets:\n");
        for z in &r.admissible_sets {
            let _ = writeln!(s, "  {{{}}}", join(z.iter().map(NodeId::as_str)));
        }
    } else {
        s.push_str("unblocked back-door paths:\n");
        for p in &r.witness_paths {
            let _ = writeln!(s, "  {p}");
        }
    }
    s
}

// ---------------------------------------------------------------------------
// shared propensity stage

/// Stratum selection and logit propensity fit common to positivity and
/// matching.
struct Propensity {
    stratum: StratumReport,
    complete_case: ExclusionReport,
    table: PatientTable,
    treatment: String,
    covariates: Vec<String>,
    prior: Prior,
    units: Vec<ScoredUnit>,
}

fn select_stratum(table: &PatientTable, filter: Option<&str>) -> Result<(PatientTable, StratumReport), RunError> {
    let f = match filter {
        Some(text) => parse_filter(text, table.schema())?,
        None => StratumFilter::all(),
    };
    let (sub, report) = apply_stratum(table, &f)?;
    if sub.n_rows() == 0 {
        return Err(RunError::EmptyStratum(Box::new(report)));
    }
    Ok((sub, report))
}

fn role_or(schema: &Schema, given: Option<&str>, role: Role) -> Result<String, RunError> {
    match given {
        Some(name) => {
            schema.column(name).ok_or_else(|| usage(format!("unknown column `{name}`")))?;
            Ok(name.to_string())
        }
        None => schema
            .role_column(role)
            .map(|c| c.name.clone())
            .ok_or_else(|| usage(format!("no {role} column given and none has the {role} role in the schema"))),
    }
}

/// Covariates as given, or every covariate-role column not already fixed by
/// the filter or used as treatment/outcome.
fn covariates_or(schema: &Schema, given: Option<&[String]>, exclude: &BTreeSet<String>) -> Result<Vec<String>, RunError> {
    let covs: Vec<String> = match given {
        Some(list) => list.to_vec(),
        None => schema
            .columns()
            .iter()
            .filter(|c| c.role == Some(Role::Covariate) && !exclude.contains(&c.name))
            .map(|c| c.name.clone())
            .collect(),
    };
    for c in &covs {
        schema.column(c).ok_or_else(|| usage(format!("unknown covariate column `{c}`")))?;
    }
    if covs.is_empty() {
        return Err(usage("no covariates given and none has the covariate role in the schema"));
    }
    Ok(covs)
}

fn propensity(
    data: &Dataset,
    filter: Option<&str>,
    treatment: Option<&str>,
    covariates: Option<&[String]>,
    prior: Prior,
) -> Result<Propensity, RunError> {
    let schema = data.schema();
    let (stratum_table, stratum) = select_stratum(&data.table, filter)?;
    let treatment = role_or(schema, treatment, Role::Treatment)?;
    let mut exclude: BTreeSet<String> = match filter {
        Some(text) => parse_filter_expr(text)?.columns(),
        None => BTreeSet::new(),
    };
    exclude.insert(treatment.clone());
    let covariates = covariates_or(schema, covariates, &exclude)?;

    let mut needed: Vec<&str> = covariates.iter().map(String::as_str).collect();
    needed.push(&treatment);
    let (table, complete_case) = stratum_table.complete_case(&needed)?;
    if table.n_rows() == 0 {
        let mut report = stratum;
        report.exclusions = complete_case;
        return Err(RunError::EmptyStratum(Box::new(report)));
    }
    let y: Vec<bool> = (0..table.n_rows())
        .map(|r| table.binary(&treatment, r))
        .collect::<Option<_>>()
        .ok_or_else(|| usage(format!("treatment column `{treatment}` is not binary")))?;
    let cov_refs: Vec<&str> = covariates.iter().map(String::as_str).collect();
    let design = DesignMatrix::from_table(&table, &cov_refs, &EncodeOptions::default())?;
    let fit = fit_logit_map(&design, &y, &prior)?;
    let scores = predict_propensity(&fit, &table)?;
    let units = (0..table.n_rows())
        .map(|r| ScoredUnit {
            id: table.ids()[r].clone(),
            score: scores[r],
            treated: y[r],
        })
        .collect();
    Ok(Propensity {
        stratum,
        complete_case,
        table,
        treatment,
        covariates,
        prior,
        units,
    })
}

fn arms(units: &[ScoredUnit]) -> (Vec<f64>, Vec<f64>) {
    let t = units.iter().filter(|u| u.treated).map(|u| u.score).collect();
    let c = units.iter().filter(|u| !u.treated).map(|u| u.score).collect();
    (t, c)
}

fn stratum_text(s: &mut String, p: &Propensity) {
    let _ = writeln!(
        s,
        "stratum `{}`: {} of {} rows ({} complete cases)",
        p.stratum.filter,
        p.stratum.matched,
        p.stratum.exclusions.input_rows,
        p.table.n_rows()
    );
    let _ = writeln!(s, "treatment: {}", p.treatment);
    let _ = writeln!(s, "covariates: {}", join(&p.covariates));
}

// ---------------------------------------------------------------------------
// positivity

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PositivityRequest {
    pub filter: Option<String>,
    pub treatment: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub prior: Prior,
    pub thresholds: OverlapThresholds,
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityOutput {
    pub stratum: StratumReport,
    pub complete_case: ExclusionReport,
    pub treatment: String,
    pub covariates: Vec<String>,
    pub prior: Prior,
    pub n_treated: usize,
    pub n_control: usize,
    pub overlap: OverlapReport,
}

pub fn run_positivity(data: &Dataset, req: &PositivityRequest) -> Result<Report, RunError> {
    let p = propensity(data, req.filter.as_deref(), req.treatment.as_deref(), req.covariates.as_deref(), req.prior)?;
    let (t, c) = arms(&p.units);
    let overlap = overlap_report(&t, &c, &req.thresholds)?;

    let mut text = String::new();
    stratum_text(&mut text, &p);
    let _ = writeln!(text, "arms: {} treated, {} control", t.len(), c.len());
    let _ = writeln!(text, "{:<28}{:.4}", "overlap coefficient", overlap.overlap_coefficient);
    let _ = writeln!(text, "{:<28}{:.4}", "treated mass off support", overlap.outside_mass_treated);
    let _ = writeln!(text, "{:<28}{:.4}", "control mass off support", overlap.outside_mass_control);
    let support: Vec<String> = overlap.common_support.iter().map(|(a, b)| format!("[{a:.3}, {b:.3}]")).collect();
    let _ = writeln!(text, "{:<28}{}", "common support", join(&support));
    for f in &overlap.tail_flags {
        let _ = writeln!(text, "  only {} in [{:.3}, {:.3}], mass {:.4}", f.group, f.low, f.high, f.mass);
    }
    let _ = writeln!(text, "{:<28}{:?}", "verdict", overlap.verdict);

    let files = vec![("overlap.csv".to_string(), overlap.plot_csv())];
    let out = PositivityOutput {
        n_treated: t.len(),
        n_control: c.len(),
        stratum: p.stratum,
        complete_case: p.complete_case,
        treatment: p.treatment,
        covariates: p.covariates,
        prior: p.prior,
        overlap,
    };
    Ok(Report {
        command: "positivity",
        json: pretty(&out),
        text,
        files,
        identified: None,
    })
}

// ---------------------------------------------------------------------------
// match

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchRequest {
    pub filter: Option<String>,
    pub treatment: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub prior: Prior,
    pub seed: u64,
    /// Logit-scale caliper; `None` means 0.2 sd of the pooled logits.
    pub caliper: Option<f64>,
    pub ratio: usize,
    pub with_replacement: bool,
    /// Size of a hypothetical trial to translate into an observational one.
    pub rct_n: Option<u64>,
    pub thresholds: OverlapThresholds,
}

impl Default for MatchRequest {
    fn default() -> Self {
        MatchRequest {
            filter: None,
            treatment: None,
            covariates: None,
            prior: Prior::default(),
            seed: DEFAULT_SEED,
            caliper: None,
            ratio: 1,
            with_replacement: false,
            rct_n: None,
            thresholds: OverlapThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RctTranslation {
    pub rct_n: u64,
    /// The sampling ratio as displayed (two decimals), which the translation uses.
    pub sampling_ratio: String,
    pub observational_n: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchOutput {
    pub stratum: StratumReport,
    pub complete_case: ExclusionReport,
    pub treatment: String,
    pub covariates: Vec<String>,
    pub prior: Prior,
    pub result: MatchResult,
    pub balance: BalanceTable,
    pub rct: Option<RctTranslation>,
}

pub fn run_match(data: &Dataset, req: &MatchRequest) -> Result<Report, RunError> {
    if req.rct_n == Some(0) {
        return Err(usage("rct_n must be a positive number of patients"));
    }
    let p = propensity(data, req.filter.as_deref(), req.treatment.as_deref(), req.covariates.as_deref(), req.prior)?;
    let cfg = MatchConfig {
        caliper: req.caliper,
        ratio: req.ratio,
        seed: req.seed,
        with_replacement: req.with_replacement,
    };
    let result = stochastic_match(&p.units, &cfg)?;
    let cov_refs: Vec<&str> = p.covariates.iter().map(String::as_str).collect();
    let balance = post_match_balance(&p.table, &p.units, &result, &cov_refs, &req.thresholds)?;
    let shown = format_ratio(result.sampling_ratio);
    let rct = match req.rct_n {
        Some(n) => {
            let ratio: f64 = shown.parse().expect("formatted ratio parses");
            Some(RctTranslation {
                rct_n: n,
                observational_n: rct_equivalent_sample_size(n, ratio)?,
                sampling_ratio: shown.clone(),
            })
        }
        None => None,
    };

    let mut text = String::new();
    stratum_text(&mut text, &p);
    let treated = result.pairs.iter().map(|x| &x.treated).collect::<BTreeSet<_>>().len();
    let _ = writeln!(text, "{:<22}{:.4} (logit scale), 1:{}, seed {}", "caliper", result.caliper, result.ratio, result.seed);
    let _ = writeln!(text, "{:<22}{}", "pairs", result.pairs.len());
    let _ = writeln!(text, "{:<22}{} treated, {} control", "unmatched", result.unmatched_treated.len(), result.unmatched_control.len());
    let _ = writeln!(text, "{:<22}{} of {} ({treated} treated)", "matched patients", result.matched_patients, result.stratum_size);
    let _ = writeln!(text, "{:<22}{shown}", "sampling ratio");
    if let Some(r) = &rct {
        let _ = writeln!(text, "{:<22}{} / {} = {}", "rct equivalent", r.rct_n, r.sampling_ratio, r.observational_n);
    }
    let _ = writeln!(text, "\n{:<24}{:>12}{:>12}", "covariate", "smd before", "smd after");
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    for row in &balance.rows {
        let _ = writeln!(text, "{:<24}{:>12}{:>12}", row.covariate, fmt(row.smd_before), fmt(row.smd_after));
    }
    match &balance.post_match {
        PostMatch::NotApplicable { reason } => {
            let _ = writeln!(text, "post-match overlap: not applicable ({reason})");
        }
        PostMatch::Computed { overlap: Some(o), .. } => {
            let _ = writeln!(text, "post-match overlap: {:.4} ({:?})", o.overlap_coefficient, o.verdict);
        }
        PostMatch::Computed { overlap_error, .. } => {
            let _ = writeln!(text, "post-match overlap: {}", overlap_error.as_deref().unwrap_or("unavailable"));
        }
    }

    let files = vec![("pairs.csv".to_string(), result.pairs_csv())];
    let out = MatchOutput {
        stratum: p.stratum,
        complete_case: p.complete_case,
        treatment: p.treatment,
        covariates: p.covariates,
        prior: p.prior,
        result,
        balance,
        rct,
    };
    Ok(Report {
        command: "match",
        json: pretty(&out),
        text,
        files,
        identified: None,
    })
}

// ---------------------------------------------------------------------------
// monitor

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorRequest {
    pub filter: Option<String>,
    pub centre: Option<String>,
    pub treatment: Option<String>,
    pub outcome: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub centres: CentreConfig,
    pub egger: EggerConfig,
    pub anonymize: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonitorOutput {
    pub stratum: StratumReport,
    pub effects: CentreEffects,
    pub heterogeneity: Option<Heterogeneity>,
    pub fit: EggerFit,
    pub scatter: ScatterPlot,
    pub forest_treatment: Vec<ForestRecord>,
    pub forest_outcome: Vec<ForestRecord>,
}

pub fn run_monitor(data: &Dataset, req: &MonitorRequest) -> Result<Report, RunError> {
    let schema = data.schema();
    let (table, stratum) = select_stratum(&data.table, req.filter.as_deref())?;
    let centre = role_or(schema, req.centre.as_deref(), Role::Centre)?;
    let treatment = role_or(schema, req.treatment.as_deref(), Role::Treatment)?;
    let outcome = role_or(schema, req.outcome.as_deref(), Role::Outcome)?;
    let mut exclude: BTreeSet<String> = match &req.filter {
        Some(text) => parse_filter_expr(text)?.columns(),
        None => BTreeSet::new(),
    };
    exclude.extend([centre.clone(), treatment.clone(), outcome.clone()]);
    let covariates = covariates_or(schema, req.covariates.as_deref(), &exclude)?;
    let cov_refs: Vec<&str> = covariates.iter().map(String::as_str).collect();

    let effects = fit_centre_effects(&table, &cov_refs, &centre, &treatment, &outcome, &req.centres)?;
    let fit = egger_iv(&effects, &req.egger)?;
    let scatter = scatter_export(&effects, &fit, req.anonymize);
    let heterogeneity = alpha_heterogeneity(&effects);

    let mut text = String::new();
    let _ = writeln!(text, "stratum `{}`: {} rows", stratum.filter, stratum.matched);
    let _ = writeln!(text, "centre {centre}, treatment {treatment}, outcome {outcome}, reference {}", effects.reference);
    let _ = writeln!(text, "covariates: {}", join(&covariates));
    let _ = writeln!(text, "\n{:<12}{:>8}{:>10}{:>10}{:>10}{:>10}", "centre", "n", "alpha", "se", "beta", "se");
    for (e, pt) in effects.effects.iter().zip(&scatter.points) {
        let label = if req.anonymize { &pt.label } else { &e.centre };
        let _ = writeln!(
            text,
            "{:<12}{:>8}{:>10.4}{:>10.4}{:>10.4}{:>10.4}",
            label, e.n, e.alpha, e.se_alpha, e.beta, e.se_beta
        );
    }
    for w in &effects.warnings {
        let _ = writeln!(text, "warning: {w}");
    }
    if let Some(h) = &heterogeneity {
        let _ = writeln!(text, "\ninstrument test: chi2 {:.3} on {} df, p = {:.4}", h.statistic, h.df, h.p_value);
    }
    let _ = writeln!(text, "egger slope {:.4} (se {:.4}), intercept {:.4} (se {:.4}), {} centres", fit.slope, fit.se_slope, fit.intercept, fit.se_intercept, fit.n_centres);
    let _ = writeln!(text, "{}", fit.caveat);

    let files = vec![
        ("effects.csv".to_string(), effects.to_csv()),
        ("scatter.csv".to_string(), scatter.to_csv()),
    ];
    let out = MonitorOutput {
        forest_treatment: forest_export(&effects.treatment_fit, 0.95)?,
        forest_outcome: forest_export(&effects.outcome_fit, 0.95)?,
        stratum,
        effects,
        heterogeneity,
        fit,
        scatter,
    };
    Ok(Report {
        command: "monitor",
        json: pretty(&out),
        text,
        files,
        identified: None,
    })
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateRequest {
    /// A discrete model in its JSON form.
    pub scm: Option<serde_json::Value>,
    /// The built-in multicentre generator; its own seed is replaced by `seed`.
    pub multicentre: Option<MulticentreConfig>,
    /// Rows to draw from `scm`.
    pub n: usize,
    pub seed: u64,
    /// Node to level, applied to `scm` before sampling.
    pub intervention: BTreeMap<String, String>,
}

impl Default for SimulateRequest {
    fn default() -> Self {
        SimulateRequest {
            scm: None,
            multicentre: None,
            n: 1000,
            seed: DEFAULT_SEED,
            intervention: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SimulateOutput<'a> {
    rows: usize,
    seed: u64,
    intervention: &'a BTreeMap<String, String>,
    schema: &'a Schema,
}

pub fn run_simulate(req: &SimulateRequest) -> Result<Report, RunError> {
    let table = match (&req.scm, &req.multicentre) {
        (Some(model), None) => {
            let scm = Scm::from_json(&model.to_string())?;
            let doit = (!req.intervention.is_empty()).then_some(&req.intervention);
            scm.sample(req.n, req.seed, doit)?
        }
        (None, Some(cfg)) => {
            if !req.intervention.is_empty() {
                return Err(usage("interventions apply to a model, not the multicentre generator"));
            }
            generate_multicentre(&MulticentreConfig { seed: req.seed, ..cfg.clone() })?
        }
        _ => return Err(usage("give exactly one of a model or a multicentre configuration")),
    };
    let out = SimulateOutput {
        rows: table.n_rows(),
        seed: req.seed,
        intervention: &req.intervention,
        schema: table.schema(),
    };
    let mut text = format!("{} rows, seed {}", table.n_rows(), req.seed);
    if !req.intervention.is_empty() {
        let pairs: Vec<String> = req.intervention.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = write!(text, ", do({})", join(&pairs));
    }
    text.push('\n');
    let files = vec![
        ("data.csv".to_string(), table.to_csv_string()),
        ("schema.json".to_string(), table.schema().to_json()),
    ];
    Ok(Report {
        command: "simulate",
        json: pretty(&out),
        text,
        files,
        identified: None,
    })
}
