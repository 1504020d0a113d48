//! Discrete structural causal models: ancestral sampling, interventions and
//! exact interventional distributions by enumeration.

mod multicentre;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{parse_dag, Dag, DagError, NodeId};
use crate::study::{ColumnData, ColumnSpec, ColumnType, PatientTable, Schema};

pub use multicentre::{centre_label, generate_multicentre, CovariateEffect, MulticentreConfig};

/// Largest enumerated state space.
pub const STATE_SPACE_LIMIT: u64 = 10_000_000;
pub const ID_COLUMN: &str = "patient_id";
const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScmError {
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error("node '{0}' has no distribution")]
    MissingNode(String),
    #[error("distribution given for '{0}', which is not in the graph")]
    ExtraNode(String),
    #[error("node '{node}': {message}")]
    Domain { node: String, message: String },
    #[error("node '{node}' needs {expected} CPT rows, found {found}")]
    CptShape { node: String, expected: usize, found: usize },
    #[error("node '{node}' row {row}: {message}")]
    CptRow { node: String, row: usize, message: String },
    #[error("node '{node}' has no level '{level}'")]
    UnknownLevel { node: String, level: String },
    #[error("state space of {size} configurations exceeds the limit of {limit}")]
    StateSpace { size: u64, limit: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model document: {0}")]
    Json(String),
    #[error("table construction failed: {0}")]
    Table(String),
    #[error("no sampled rows with {x} = {level} for adjustment configuration {configuration:?}")]
    EmptyStratum { x: String, level: String, configuration: Vec<String> },
}

/// Levels and conditional probability table of one node. Rows enumerate
/// parent configurations with parents in name order and the last parent
/// varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub levels: Vec<String>,
    pub cpt: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scm {
    graph: Dag,
    specs: Vec<NodeSpec>,
}

#[derive(Serialize, Deserialize)]
struct ScmDocument {
    graph: String,
    nodes: BTreeMap<String, NodeSpec>,
}

/// `do(node = level)` assignments.
pub type Intervention = BTreeMap<String, String>;

impl Scm {
    pub fn new(graph: Dag, mut nodes: BTreeMap<String, NodeSpec>) -> Result<Scm, ScmError> {
        let mut specs = Vec::with_capacity(graph.node_count());
        for n in graph.nodes() {
            specs.push(nodes.remove(n.as_str()).ok_or_else(|| ScmError::MissingNode(n.to_string()))?);
        }
        if let Some(extra) = nodes.into_keys().next() {
            return Err(ScmError::ExtraNode(extra));
        }
        let scm = Scm { graph, specs };
        for i in 0..scm.specs.len() {
            scm.validate_node(i)?;
        }
        Ok(scm)
    }

    fn validate_node(&self, i: usize) -> Result<(), ScmError> {
        let node = self.graph.name(i).to_string();
        let spec = &self.specs[i];
        if spec.levels.is_empty() {
            return Err(ScmError::Domain { node, message: "empty domain".into() });
        }
        if spec.levels.iter().collect::<BTreeSet<_>>().len() != spec.levels.len() {
            return Err(ScmError::Domain { node, message: "duplicate level".into() });
        }
        let expected = self.row_count(i);
        if spec.cpt.len() != expected {
            return Err(ScmError::CptShape { node, expected, found: spec.cpt.len() });
        }
        for (r, row) in spec.cpt.iter().enumerate() {
            let err = |message: String| ScmError::CptRow { node: node.clone(), row: r, message };
            if row.len() != spec.levels.len() {
                return Err(err(format!("{} entries for {} levels", row.len(), spec.levels.len())));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(err("probabilities must be finite and non-negative".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(err(format!("row sums to {sum}")));
            }
        }
        Ok(())
    }

    fn row_count(&self, i: usize) -> usize {
        self.graph
            .parent_indices(i)
            .iter()
            .map(|&p| self.specs[p].levels.len())
            .product()
    }

    fn row_index(&self, i: usize, state: &[u32]) -> usize {
        self.graph
            .parent_indices(i)
            .iter()
            .fold(0, |acc, &p| acc * self.specs[p].levels.len() + state[p] as usize)
    }

    pub fn from_json(text: &str) -> Result<Scm, ScmError> {
        let doc: ScmDocument = serde_json::from_str(text).map_err(|e| ScmError::Json(e.to_string()))?;
        Scm::new(parse_dag(&doc.graph)?, doc.nodes)
    }

    pub fn to_json(&self) -> String {
        let doc = ScmDocument {
            graph: self.graph.to_dsl(),
            nodes: self
                .graph
                .nodes()
                .iter()
                .zip(&self.specs)
                .map(|(n, s)| (n.to_string(), s.clone()))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("serializable")
    }

    pub fn graph(&self) -> &Dag {
        &self.graph
    }

    pub fn spec(&self, node: &str) -> Option<&NodeSpec> {
        let id = NodeId::new(node).ok()?;
        Some(&self.specs[self.graph.idx(&id).ok()?])
    }

    fn node_index(&self, node: &str) -> Result<usize, ScmError> {
        Ok(self.graph.idx(&NodeId::new(node)?)?)
    }

    fn level_index(&self, i: usize, level: &str) -> Result<u32, ScmError> {
        self.specs[i]
            .levels
            .iter()
            .position(|l| l == level)
            .map(|p| p as u32)
            .ok_or_else(|| ScmError::UnknownLevel {
                node: self.graph.name(i).to_string(),
                level: level.to_string(),
            })
    }

    /// The intervened model: edges into intervened nodes removed and their
    /// tables replaced by point masses. Other tables are copied unchanged.
    pub fn mutilate(&self, intervention: &Intervention) -> Result<Scm, ScmError> {
        let mut targets = BTreeSet::new();
        let mut specs = self.specs.clone();
        for (node, level) in intervention {
            let i = self.node_index(node)?;
            let l = self.level_index(i, level)? as usize;
            targets.insert(self.graph.name(i).clone());
            let mut row = vec![0.0; specs[i].levels.len()];
            row[l] = 1.0;
            specs[i].cpt = vec![row];
        }
        Ok(Scm {
            graph: self.graph.without_edges_into(&targets),
            specs,
        })
    }

    /// Ancestral sampling of `n` rows from a seeded ChaCha8 stream.
    pub fn sample_states(&self, n: usize, seed: u64, intervention: Option<&Intervention>) -> Result<Sample, ScmError> {
        self.sample_stream(n, seed, 0, intervention)
    }

    /// Like [`Scm::sample_states`] on stream `stream` of the seeded generator,
    /// so shards with distinct stream numbers compose reproducibly.
    pub fn sample_stream(
        &self,
        n: usize,
        seed: u64,
        stream: u64,
        intervention: Option<&Intervention>,
    ) -> Result<Sample, ScmError> {
        let model = match intervention {
            Some(i) if !i.is_empty() => self.mutilate(i)?,
            _ => self.clone(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let order = model.graph.topological_indices();
        let k = model.specs.len();
        let mut states = Vec::with_capacity(n);
        for _ in 0..n {
            let mut s = vec![0u32; k];
            for &i in &order {
                let row = &model.specs[i].cpt[model.row_index(i, &s)];
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = row.len() - 1;
                for (l, p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = l;
                        break;
                    }
                }
                // never land on a zero-probability level through rounding
                while row[pick] == 0.0 && pick > 0 {
                    pick -= 1;
                }
                s[i] = pick as u32;
            }
            states.push(s);
        }
        Ok(Sample {
            names: model.graph.nodes().iter().map(|n| n.to_string()).collect(),
            levels: model.specs.iter().map(|s| s.levels.clone()).collect(),
            states,
        })
    }

    /// Samples a patient table; see [`Sample::to_table`].
    pub fn sample(&self, n: usize, seed: u64, intervention: Option<&Intervention>) -> Result<PatientTable, ScmError> {
        self.sample_states(n, seed, intervention)?.to_table()
    }

    /// Exact distribution of `target` under the intervention, by enumerating
    /// the target's ancestors in the intervened model.
    pub fn exact_interventional(&self, intervention: &Intervention, target: &str) -> Result<Vec<f64>, ScmError> {
        let model = self.mutilate(intervention)?;
        let t = model.node_index(target)?;
        let mut relevant = vec![false; model.specs.len()];
        relevant[t] = true;
        for (i, r) in relevant.iter_mut().enumerate() {
            if model.graph.is_descendant(model.graph.name(i), model.graph.name(t))? {
                *r = true;
            }
        }
        let order: Vec<usize> = model
            .graph
            .topological_indices()
            .into_iter()
            .filter(|&i| relevant[i])
            .collect();
        let size = order
            .iter()
            .try_fold(1u64, |acc, &i| acc.checked_mul(model.specs[i].levels.len() as u64))
            .unwrap_or(u64::MAX);
        if size > STATE_SPACE_LIMIT {
            return Err(ScmError::StateSpace { size, limit: STATE_SPACE_LIMIT });
        }
        let mut out = vec![0.0; model.specs[t].levels.len()];
        let mut state = vec![0u32; model.specs.len()];
        model.enumerate(&order, 0, 1.0, &mut state, t, &mut out);
        Ok(out)
    }

    fn enumerate(&self, order: &[usize], depth: usize, prob: f64, state: &mut [u32], target: usize, out: &mut [f64]) {
        if depth == order.len() {
            out[state[target] as usize] += prob;
            return;
        }
        let i = order[depth];
        let row = &self.specs[i].cpt[self.row_index(i, state)];
        for (l, p) in row.iter().enumerate() {
            if *p > 0.0 {
                state[i] = l as u32;
                self.enumerate(order, depth + 1, prob * p, state, target, out);
            }
        }
    }
}

/// Raw sampled states, one row per draw and one column per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub names: Vec<String>,
    pub levels: Vec<Vec<String>>,
    pub states: Vec<Vec<u32>>,
}

impl Sample {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Table with a `patient_id` column and one column per node: levels
    /// `["0", "1"]` become binary columns, anything else ordered.
    pub fn to_table(&self) -> Result<PatientTable, ScmError> {
        let mut specs = vec![ColumnSpec::new(ID_COLUMN, ColumnType::Id)];
        let mut columns = vec![ColumnData::Id((1..=self.states.len()).map(|i| format!("P{i:06}")).collect())];
        for (j, name) in self.names.iter().enumerate() {
            let levels = &self.levels[j];
            if levels == &["0", "1"] {
                specs.push(ColumnSpec::new(name, ColumnType::Binary));
                columns.push(ColumnData::Binary(self.states.iter().map(|s| Some(s[j] == 1)).collect()));
            } else {
                specs.push(ColumnSpec::new(name, ColumnType::Ordered).with_levels(levels.clone()));
                columns.push(ColumnData::Level(self.states.iter().map(|s| Some(s[j])).collect()));
            }
        }
        let schema = Schema::new(specs).map_err(|e| ScmError::Table(e.to_string()))?;
        PatientTable::from_columns(schema, columns).map_err(|e| ScmError::Table(e.to_string()))
    }

    /// Back-door adjusted estimate `Σ_z p̂(z) p̂(y | x, z)` for `do(x = level)`.
    pub fn adjusted_distribution(&self, x: &str, level: u32, y: &str, z: &[&str]) -> Result<Vec<f64>, ScmError> {
        let col = |n: &str| {
            self.column(n)
                .ok_or_else(|| ScmError::Dag(DagError::UnknownNode(n.to_string())))
        };
        let (xi, yi) = (col(x)?, col(y)?);
        let zi: Vec<usize> = z.iter().map(|n| col(n)).collect::<Result<_, _>>()?;
        let mut cells: BTreeMap<Vec<u32>, (usize, usize, Vec<usize>)> = BTreeMap::new();
        let ny = self.levels[yi].len();
        for s in &self.states {
            let key: Vec<u32> = zi.iter().map(|&j| s[j]).collect();
            let e = cells.entry(key).or_insert_with(|| (0, 0, vec![0; ny]));
            e.0 += 1;
            if s[xi] == level {
                e.1 += 1;
                e.2[s[yi] as usize] += 1;
            }
        }
        let n = self.states.len() as f64;
        let mut out = vec![0.0; ny];
        for (key, (count, with_x, ys)) in cells {
            if with_x == 0 {
                return Err(ScmError::EmptyStratum {
                    x: x.to_string(),
                    level: self.levels[xi][level as usize].clone(),
                    configuration: key
                        .iter()
                        .zip(&zi)
                        .map(|(l, &j)| format!("{}={}", self.names[j], self.levels[j][*l as usize]))
                        .collect(),
                });
            }
            let pz = count as f64 / n;
            for (o, c) in out.iter_mut().zip(ys) {
                *o += pz * c as f64 / with_x as f64;
            }
        }
        Ok(out)
    }
}

/// Random binary SCM over nodes `V0..` where each forward pair `Vi -> Vj`
/// (i < j) is an edge with probability `edge_prob` and every CPT entry
/// p(1 | parents) is uniform on [0.1, 0.9].
pub fn random_binary_scm<R: Rng>(n_nodes: usize, edge_prob: f64, rng: &mut R) -> Result<Scm, ScmError> {
    let width = n_nodes.saturating_sub(1).to_string().len();
    let names: Vec<NodeId> = (0..n_nodes)
        .map(|i| NodeId::new(format!("V{i:0width$}")))
        .collect::<Result<_, _>>()?;
    let mut edges = Vec::new();
    for i in 0..n_nodes {
        for j in i + 1..n_nodes {
            if rng.random::<f64>() < edge_prob {
                edges.push((names[i].clone(), names[j].clone()));
            }
        }
    }
    let graph = Dag::new(names.clone(), edges)?;
    let mut nodes = BTreeMap::new();
    for n in &names {
        let rows = 1usize << graph.parents(n)?.len();
        let cpt = (0..rows)
            .map(|_| {
                let p = rng.random_range(0.1..=0.9);
                vec![1.0 - p, p]
            })
            .collect();
        nodes.insert(
            n.to_string(),
            NodeSpec {
                levels: vec!["0".into(), "1".into()],
                cpt,
            },
        );
    }
    Scm::new(graph, nodes)
}
