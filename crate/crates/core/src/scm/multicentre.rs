use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Intervention, NodeSpec, Scm, ScmError};
use crate::dag::{Dag, NodeId};
use crate::study::{ColumnData, ColumnSpec, ColumnType, PatientTable, Role, Schema};

/// Binary covariate driven by the latent node, acting linearly on the
/// treatment and outcome probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateEffect {
    pub name: String,
    /// p(covariate = 1 | latent = 0) and p(covariate = 1 | latent = 1).
    pub prevalence: [f64; 2],
    pub on_treatment: f64,
    pub on_outcome: f64,
}

/// Linear-probability multicentre generator. Treatment probability is
/// `treatment_baseline + propensity_shifts[c] + Σ on_treatment·x`; outcome
/// probability is `outcome_baseline + outcome_shifts[c] + tau·treatment +
/// Σ on_outcome·x + latent_outcome_effect·u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MulticentreConfig {
    pub centres: usize,
    pub per_centre: usize,
    pub treatment_baseline: f64,
    pub propensity_shifts: Vec<f64>,
    pub outcome_baseline: f64,
    /// Direct centre effects on the outcome; empty means none.
    pub outcome_shifts: Vec<f64>,
    pub tau: f64,
    pub latent_prevalence: f64,
    pub latent_outcome_effect: f64,
    pub covariates: Vec<CovariateEffect>,
    pub seed: u64,
    pub centre: String,
    pub treatment: String,
    pub outcome: String,
    pub latent: String,
}

impl Default for MulticentreConfig {
    fn default() -> Self {
        let centres = 18;
        MulticentreConfig {
            centres,
            per_centre: 2000,
            treatment_baseline: 0.35,
            propensity_shifts: (0..centres)
                .map(|i| -0.15 + 0.3 * i as f64 / (centres - 1) as f64)
                .collect(),
            outcome_baseline: 0.3,
            outcome_shifts: Vec::new(),
            tau: -0.1,
            latent_prevalence: 0.3,
            latent_outcome_effect: 0.15,
            covariates: vec![
                CovariateEffect {
                    name: "poor_grade".into(),
                    prevalence: [0.2, 0.5],
                    on_treatment: 0.2,
                    on_outcome: 0.2,
                },
                CovariateEffect {
                    name: "older".into(),
                    prevalence: [0.3, 0.4],
                    on_treatment: -0.05,
                    on_outcome: 0.1,
                },
            ],
            seed: 1,
            centre: "centre".into(),
            treatment: "evd".into(),
            outcome: "outcome".into(),
            latent: "u".into(),
        }
    }
}

pub fn centre_label(i: usize) -> String {
    format!("C{:02}", i + 1)
}

fn check_prob(what: &str, p: f64) -> Result<f64, ScmError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(ScmError::InvalidConfig(format!("{what} probability {p} outside [0, 1]")))
    }
}

/// Enumerates parent configurations in CPT row order (last parent fastest).
fn cpt_rows(
    parents: &[String],
    cards: &BTreeMap<String, usize>,
    mut p1: impl FnMut(&BTreeMap<&str, usize>) -> Result<f64, ScmError>,
) -> Result<Vec<Vec<f64>>, ScmError> {
    let sizes: Vec<usize> = parents.iter().map(|p| cards[p]).collect();
    let total: usize = sizes.iter().product();
    let mut rows = Vec::with_capacity(total);
    for mut r in 0..total {
        let mut config = BTreeMap::new();
        for (name, size) in parents.iter().zip(&sizes).rev() {
            config.insert(name.as_str(), r % size);
            r /= size;
        }
        let p = p1(&config)?;
        rows.push(vec![1.0 - p, p]);
    }
    Ok(rows)
}

impl MulticentreConfig {
    fn validate(&self) -> Result<(), ScmError> {
        let bad = |m: String| Err(ScmError::InvalidConfig(m));
        if self.centres < 1 || self.per_centre < 1 {
            return bad("need at least one centre and one patient per centre".into());
        }
        if self.propensity_shifts.len() != self.centres {
            return bad(format!("{} propensity shifts for {} centres", self.propensity_shifts.len(), self.centres));
        }
        if !self.outcome_shifts.is_empty() && self.outcome_shifts.len() != self.centres {
            return bad(format!("{} outcome shifts for {} centres", self.outcome_shifts.len(), self.centres));
        }
        let mut names = vec![&self.centre, &self.treatment, &self.outcome, &self.latent];
        names.extend(self.covariates.iter().map(|c| &c.name));
        let mut seen = std::collections::BTreeSet::new();
        for n in names {
            if n == super::ID_COLUMN || !seen.insert(n) {
                return bad(format!("column name '{n}' is reserved or repeated"));
            }
        }
        check_prob("latent", self.latent_prevalence)?;
        for c in &self.covariates {
            check_prob(&c.name, c.prevalence[0])?;
            check_prob(&c.name, c.prevalence[1])?;
        }
        Ok(())
    }

    /// The generating model; node names are the output column names.
    pub fn build_scm(&self) -> Result<Scm, ScmError> {
        self.validate()?;
        let id = |s: &str| NodeId::new(s);
        let mut nodes = vec![id(&self.centre)?, id(&self.treatment)?, id(&self.outcome)?, id(&self.latent)?];
        let mut edges = vec![
            (id(&self.centre)?, id(&self.treatment)?),
            (id(&self.treatment)?, id(&self.outcome)?),
            (id(&self.latent)?, id(&self.outcome)?),
        ];
        if !self.outcome_shifts.is_empty() {
            edges.push((id(&self.centre)?, id(&self.outcome)?));
        }
        for c in &self.covariates {
            nodes.push(id(&c.name)?);
            edges.push((id(&self.latent)?, id(&c.name)?));
            edges.push((id(&c.name)?, id(&self.treatment)?));
            edges.push((id(&c.name)?, id(&self.outcome)?));
        }
        let graph = Dag::new(nodes, edges)?;

        let mut cards: BTreeMap<String, usize> = graph.nodes().iter().map(|n| (n.to_string(), 2)).collect();
        cards.insert(self.centre.clone(), self.centres);
        let parents = |n: &str| -> Result<Vec<String>, ScmError> {
            Ok(graph.parents(&NodeId::new(n)?)?.into_iter().map(|p| p.to_string()).collect())
        };
        let effects: BTreeMap<&str, &CovariateEffect> = self.covariates.iter().map(|c| (c.name.as_str(), c)).collect();

        let mut specs = BTreeMap::new();
        let binary = |cpt| NodeSpec {
            levels: vec!["0".into(), "1".into()],
            cpt,
        };
        specs.insert(
            self.centre.clone(),
            NodeSpec {
                levels: (0..self.centres).map(centre_label).collect(),
                cpt: vec![vec![1.0 / self.centres as f64; self.centres]],
            },
        );
        specs.insert(
            self.latent.clone(),
            binary(vec![vec![1.0 - self.latent_prevalence, self.latent_prevalence]]),
        );
        for c in &self.covariates {
            specs.insert(
                c.name.clone(),
                binary(vec![
                    vec![1.0 - c.prevalence[0], c.prevalence[0]],
                    vec![1.0 - c.prevalence[1], c.prevalence[1]],
                ]),
            );
        }
        let treatment_rows = cpt_rows(&parents(&self.treatment)?, &cards, |cfg| {
            let mut p = self.treatment_baseline + self.propensity_shifts[cfg[self.centre.as_str()]];
            for (name, e) in &effects {
                p += e.on_treatment * cfg[name] as f64;
            }
            check_prob("treatment", p)
        })?;
        specs.insert(self.treatment.clone(), binary(treatment_rows));
        let outcome_rows = cpt_rows(&parents(&self.outcome)?, &cards, |cfg| {
            let mut p = self.outcome_baseline
                + self.tau * cfg[self.treatment.as_str()] as f64
                + self.latent_outcome_effect * cfg[self.latent.as_str()] as f64;
            if let Some(&c) = cfg.get(self.centre.as_str()) {
                p += self.outcome_shifts[c];
            }
            for (name, e) in &effects {
                p += e.on_outcome * cfg[name] as f64;
            }
            check_prob("outcome", p)
        })?;
        specs.insert(self.outcome.clone(), binary(outcome_rows));
        Scm::new(graph, specs)
    }
}

/// Samples every centre under `do(centre = c)` on its own random stream and
/// stacks the results. The latent node is dropped; remaining columns carry
/// their roles.
pub fn generate_multicentre(cfg: &MulticentreConfig) -> Result<PatientTable, ScmError> {
    let scm = cfg.build_scm()?;
    let mut states = Vec::with_capacity(cfg.centres * cfg.per_centre);
    let mut names = Vec::new();
    for c in 0..cfg.centres {
        let doit = Intervention::from([(cfg.centre.clone(), centre_label(c))]);
        let s = scm.sample_stream(cfg.per_centre, cfg.seed, c as u64, Some(&doit))?;
        names = s.names;
        states.extend(s.states);
    }
    let col = |n: &str| names.iter().position(|x| x == n).expect("node present");
    let ids: Vec<String> = (1..=states.len()).map(|i| format!("P{i:06}")).collect();
    let mut specs = vec![
        ColumnSpec::new(super::ID_COLUMN, ColumnType::Id),
        ColumnSpec::new(&cfg.centre, ColumnType::Categorical)
            .with_levels((0..cfg.centres).map(centre_label))
            .with_role(Role::Centre),
        ColumnSpec::new(&cfg.treatment, ColumnType::Binary).with_role(Role::Treatment),
        ColumnSpec::new(&cfg.outcome, ColumnType::Binary).with_role(Role::Outcome),
    ];
    let ci = col(&cfg.centre);
    let mut columns = vec![
        ColumnData::Id(ids),
        ColumnData::Level(states.iter().map(|s| Some(s[ci])).collect()),
    ];
    let push_binary = |name: &str, columns: &mut Vec<ColumnData>| {
        let j = col(name);
        columns.push(ColumnData::Binary(states.iter().map(|s| Some(s[j] == 1)).collect()));
    };
    push_binary(&cfg.treatment, &mut columns);
    push_binary(&cfg.outcome, &mut columns);
    for c in &cfg.covariates {
        specs.push(ColumnSpec::new(&c.name, ColumnType::Binary).with_role(Role::Covariate));
        push_binary(&c.name, &mut columns);
    }
    let schema = Schema::new(specs).map_err(|e| ScmError::Table(e.to_string()))?;
    PatientTable::from_columns(schema, columns).map_err(|e| ScmError::Table(e.to_string()))
}
