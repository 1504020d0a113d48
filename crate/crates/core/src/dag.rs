//! Causal DAGs: construction, a small text DSL, d-separation and back-door
//! identification.
//!
//! Nodes are stored in lexicographic order of their names, so every index-based
//! ordering used internally is also the lexicographic ordering of names. All
//! outputs (paths, adjustment sets) are therefore deterministic.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the number of non-forced candidates considered by the
/// exhaustive adjustment-set search.
pub const DEFAULT_MAX_CANDIDATES: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid node name `{0}`")]
    InvalidName(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("duplicate edge `{0} -> {1}`")]
    DuplicateEdge(String, String),
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("edge endpoint `{0}` is not a declared node")]
    UnknownEndpoint(String),
    #[error("cycle detected: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("{0} is not in the observed set")]
    NotObserved(String),
    #[error("too many adjustment candidates ({found}, limit {limit})")]
    TooManyCandidates { found: usize, limit: usize },
}

/// Name of a node. Letters, digits, `_` and `-`; must not start with a digit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Result<Self, DagError> {
        let name = name.into();
        if is_identifier(&name) {
            Ok(NodeId(name))
        } else {
            Err(DagError::InvalidName(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for NodeId {
    type Error = DagError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        NodeId::new(s)
    }
}

impl From<NodeId> for String {
    fn from(n: NodeId) -> String {
        n.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if is_ident_start(c) => chars.all(is_ident_char) && !s.contains("->"),
        _ => false,
    }
}

/// Builds a node set from string names, validating each.
pub fn node_set<I, S>(names: I) -> Result<BTreeSet<NodeId>, DagError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    names.into_iter().map(NodeId::new).collect()
}

/// A directed acyclic graph over named nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    names: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    /// `descendants[i][j]`: j is a proper descendant of i.
    descendants: Vec<Vec<bool>>,
}

impl Dag {
    /// Builds a DAG, checking endpoints, duplicates, self-loops and acyclicity.
    pub fn new<N, E>(nodes: N, edges: E) -> Result<Dag, DagError>
    where
        N: IntoIterator<Item = NodeId>,
        E: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut names = BTreeSet::new();
        for n in nodes {
            let label = n.0.clone();
            if !names.insert(n) {
                return Err(DagError::DuplicateNode(label));
            }
        }
        let names: Vec<NodeId> = names.into_iter().collect();
        let index: BTreeMap<NodeId, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        let n = names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for (from, to) in edges {
            let f = *index
                .get(&from)
                .ok_or_else(|| DagError::UnknownEndpoint(from.0.clone()))?;
            let t = *index
                .get(&to)
                .ok_or_else(|| DagError::UnknownEndpoint(to.0.clone()))?;
            if f == t {
                return Err(DagError::SelfLoop(from.0));
            }
            if !seen.insert((f, t)) {
                return Err(DagError::DuplicateEdge(from.0, to.0));
            }
            children[f].push(t);
            parents[t].push(f);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        if let Some(cycle) = find_cycle(&children) {
            return Err(DagError::Cycle(
                cycle.into_iter().map(|i| names[i].0.clone()).collect(),
            ));
        }
        let descendants = (0..n)
            .map(|i| {
                let mut seen = vec![false; n];
                let mut stack = children[i].clone();
                while let Some(v) = stack.pop() {
                    if !seen[v] {
                        seen[v] = true;
                        stack.extend(children[v].iter().copied());
                    }
                }
                seen
            })
            .collect();
        Ok(Dag {
            names,
            index,
            parents,
            children,
            descendants,
        })
    }

    /// Node names in lexicographic order.
    pub fn nodes(&self) -> &[NodeId] {
        &self.names
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    /// Edges sorted by (parent, child).
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (p, cs) in self.children.iter().enumerate() {
            for &c in cs {
                out.push((self.names[p].clone(), self.names[c].clone()));
            }
        }
        out
    }

    pub fn contains(&self, name: &str) -> bool {
        NodeId::new(name)
            .map(|n| self.index.contains_key(&n))
            .unwrap_or(false)
    }

    pub fn has_edge(&self, from: &NodeId, to: &NodeId) -> bool {
        match (self.index.get(from), self.index.get(to)) {
            (Some(&f), Some(&t)) => self.children[f].binary_search(&t).is_ok(),
            _ => false,
        }
    }

    pub(crate) fn idx(&self, n: &NodeId) -> Result<usize, DagError> {
        self.index
            .get(n)
            .copied()
            .ok_or_else(|| DagError::UnknownNode(n.0.clone()))
    }

    pub(crate) fn name(&self, i: usize) -> &NodeId {
        &self.names[i]
    }

    pub(crate) fn parent_indices(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn parents(&self, n: &NodeId) -> Result<Vec<NodeId>, DagError> {
        let i = self.idx(n)?;
        Ok(self.parents[i].iter().map(|&p| self.names[p].clone()).collect())
    }

    pub fn children(&self, n: &NodeId) -> Result<Vec<NodeId>, DagError> {
        let i = self.idx(n)?;
        Ok(self.children[i].iter().map(|&c| self.names[c].clone()).collect())
    }

    /// Proper descendants of `n`.
    pub fn descendants(&self, n: &NodeId) -> Result<BTreeSet<NodeId>, DagError> {
        let i = self.idx(n)?;
        Ok(self.descendants[i]
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .map(|(j, _)| self.names[j].clone())
            .collect())
    }

    pub fn is_descendant(&self, of: &NodeId, n: &NodeId) -> Result<bool, DagError> {
        Ok(self.descendants[self.idx(of)?][self.idx(n)?])
    }

    /// Kahn ordering, ties broken lexicographically.
    pub(crate) fn topological_indices(&self) -> Vec<usize> {
        let n = self.names.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }

    pub fn topological_order(&self) -> Vec<NodeId> {
        self.topological_indices()
            .into_iter()
            .map(|i| self.names[i].clone())
            .collect()
    }

    /// Serializes to the DSL: every node declared (sorted), then every edge (sorted).
    pub fn to_dsl(&self) -> String {
        let mut out = String::new();
        for n in &self.names {
            out.push_str("node ");
            out.push_str(n.as_str());
            out.push_str(";\n");
        }
        for (p, c) in self.edges() {
            out.push_str(&format!("{p} -> {c};\n"));
        }
        out
    }

    /// Copy of the graph with every edge into `targets` removed.
    pub fn without_edges_into(&self, targets: &BTreeSet<NodeId>) -> Dag {
        let edges = self
            .edges()
            .into_iter()
            .filter(|(_, c)| !targets.contains(c));
        Dag::new(self.names.iter().cloned(), edges).expect("subgraph of a DAG is a DAG")
    }

    fn self_or_descendant_in(&self, v: usize, set: &[bool]) -> bool {
        set[v] || self.descendants[v].iter().zip(set).any(|(&d, &s)| d && s)
    }

    fn mask(&self, set: &BTreeSet<NodeId>) -> Result<Vec<bool>, DagError> {
        let mut m = vec![false; self.names.len()];
        for n in set {
            m[self.idx(n)?] = true;
        }
        Ok(m)
    }
}

impl Serialize for Dag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            nodes: &'a [NodeId],
            edges: Vec<(NodeId, NodeId)>,
            dsl: String,
        }
        View {
            nodes: &self.names,
            edges: self.edges(),
            dsl: self.to_dsl(),
        }
        .serialize(s)
    }
}

fn find_cycle(children: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = children.len();
    let mut mark = vec![Mark::New; n];
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        // (node, next child position)
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Active;
        while let Some(&mut (v, ref mut pos)) = stack.last_mut() {
            if let Some(&c) = children[v].get(*pos) {
                *pos += 1;
                match mark[c] {
                    Mark::New => {
                        mark[c] = Mark::Active;
                        stack.push((c, 0));
                    }
                    Mark::Active => {
                        let start = stack.iter().position(|&(u, _)| u == c).unwrap();
                        let mut cycle: Vec<usize> = stack[start..].iter().map(|&(u, _)| u).collect();
                        cycle.push(c);
                        return Some(cycle);
                    }
                    Mark::Done => {}
                }
            } else {
                mark[v] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// DSL

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Arrow,
    Semi,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize, usize)>, DagError> {
    let mut toks = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c == '#' {
                break;
            } else if c.is_whitespace() {
                i += 1;
            } else if c == ';' {
                toks.push((Tok::Semi, line_no, col));
                i += 1;
            } else if c == '-' && chars.get(i + 1) == Some(&'>') {
                toks.push((Tok::Arrow, line_no, col));
                i += 2;
            } else if is_ident_start(c) {
                let start = i;
                while i < chars.len()
                    && is_ident_char(chars[i])
                    && !(chars[i] == '-' && chars.get(i + 1) == Some(&'>'))
                {
                    i += 1;
                }
                toks.push((Tok::Ident(chars[start..i].iter().collect()), line_no, col));
            } else {
                return Err(DagError::Syntax {
                    line: line_no,
                    column: col,
                    message: format!("unexpected character `{c}`"),
                });
            }
        }
    }
    Ok(toks)
}

/// Parses the DAG DSL: `A -> B;` edges, `node A;` declarations and `#`
/// comments. Nodes referenced by edges are declared implicitly.
pub fn parse_dag(text: &str) -> Result<Dag, DagError> {
    let toks = lex(text)?;
    let end = toks
        .last()
        .map(|&(_, l, c)| (l, c + 1))
        .unwrap_or((1, 1));
    let mut declared: BTreeSet<NodeId> = BTreeSet::new();
    let mut nodes: BTreeSet<NodeId> = BTreeSet::new();
    let mut edges = Vec::new();
    let mut i = 0;
    let syntax = |pos: Option<&(Tok, usize, usize)>, msg: &str| {
        let (line, column) = pos.map(|&(_, l, c)| (l, c)).unwrap_or(end);
        DagError::Syntax {
            line,
            column,
            message: msg.to_string(),
        }
    };
    while i < toks.len() {
        match &toks[i].0 {
            Tok::Semi => {
                i += 1;
            }
            Tok::Ident(kw) if kw == "node" && matches!(toks.get(i + 1), Some((Tok::Ident(_), _, _))) => {
                let Tok::Ident(name) = &toks[i + 1].0 else { unreachable!() };
                let id = NodeId::new(name.clone())?;
                if !declared.insert(id.clone()) {
                    return Err(DagError::DuplicateNode(name.clone()));
                }
                nodes.insert(id);
                i += 2;
                if !matches!(toks.get(i), Some((Tok::Semi, _, _)) | None) {
                    return Err(syntax(toks.get(i), "expected `;` after node declaration"));
                }
            }
            Tok::Ident(from) => {
                if !matches!(toks.get(i + 1), Some((Tok::Arrow, _, _))) {
                    return Err(syntax(toks.get(i + 1), "expected `->`"));
                }
                let to = match toks.get(i + 2) {
                    Some((Tok::Ident(to), _, _)) => to,
                    other => return Err(syntax(other, "expected node name after `->`")),
                };
                let (f, t) = (NodeId::new(from.clone())?, NodeId::new(to.clone())?);
                nodes.insert(f.clone());
                nodes.insert(t.clone());
                edges.push((f, t));
                i += 3;
                if !matches!(toks.get(i), Some((Tok::Semi, _, _)) | None) {
                    return Err(syntax(toks.get(i), "expected `;` after edge"));
                }
            }
            Tok::Arrow => return Err(syntax(toks.get(i), "unexpected `->`")),
        }
    }
    Dag::new(nodes, edges)
}

// ---------------------------------------------------------------------------
// Paths and d-separation

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Step {
    /// `nodes[i] -> nodes[i + 1]`
    #[serde(rename = "->")]
    Forward,
    /// `nodes[i] <- nodes[i + 1]`
    #[serde(rename = "<-")]
    Backward,
}

/// A simple path in the skeleton of a DAG.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub steps: Vec<Step>,
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                let arrow = match self.steps[i - 1] {
                    Step::Forward => " -> ",
                    Step::Backward => " <- ",
                };
                f.write_str(arrow)?;
            }
            f.write_str(n.as_str())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct IdxPath {
    nodes: Vec<usize>,
    forward: Vec<bool>,
}

impl IdxPath {
    fn is_directed(&self) -> bool {
        self.forward.iter().all(|&f| f)
    }

    fn is_blocked(&self, dag: &Dag, given: &[bool]) -> bool {
        (1..self.nodes.len() - 1).any(|i| {
            let m = self.nodes[i];
            let collider = self.forward[i - 1] && !self.forward[i];
            if collider {
                !dag.self_or_descendant_in(m, given)
            } else {
                given[m]
            }
        })
    }

    fn to_path(&self, dag: &Dag) -> Path {
        Path {
            nodes: self.nodes.iter().map(|&i| dag.name(i).clone()).collect(),
            steps: self
                .forward
                .iter()
                .map(|&f| if f { Step::Forward } else { Step::Backward })
                .collect(),
        }
    }
}

impl Dag {
    /// All simple paths between `from` and `to`, sorted lexicographically.
    fn simple_paths(&self, from: usize, to: usize) -> Vec<IdxPath> {
        let mut out = Vec::new();
        let mut on_path = vec![false; self.names.len()];
        let mut nodes = vec![from];
        let mut forward = Vec::new();
        on_path[from] = true;
        self.extend_paths(to, &mut on_path, &mut nodes, &mut forward, &mut out);
        out.sort();
        out
    }

    fn extend_paths(
        &self,
        to: usize,
        on_path: &mut [bool],
        nodes: &mut Vec<usize>,
        forward: &mut Vec<bool>,
        out: &mut Vec<IdxPath>,
    ) {
        let v = *nodes.last().unwrap();
        if v == to {
            out.push(IdxPath {
                nodes: nodes.clone(),
                forward: forward.clone(),
            });
            return;
        }
        let next = self.children[v]
            .iter()
            .map(|&c| (c, true))
            .chain(self.parents[v].iter().map(|&p| (p, false)));
        for (w, fwd) in next {
            if on_path[w] {
                continue;
            }
            on_path[w] = true;
            nodes.push(w);
            forward.push(fwd);
            self.extend_paths(to, on_path, nodes, forward, out);
            forward.pop();
            nodes.pop();
            on_path[w] = false;
        }
    }

    /// All simple paths between two nodes, lexicographically ordered.
    pub fn paths_between(&self, a: &NodeId, b: &NodeId) -> Result<Vec<Path>, DagError> {
        let (a, b) = (self.idx(a)?, self.idx(b)?);
        Ok(self
            .simple_paths(a, b)
            .iter()
            .map(|p| p.to_path(self))
            .collect())
    }
}

/// A d-separation question: is `set_a` independent of `set_b` given `given`?
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparationQuery {
    pub set_a: BTreeSet<NodeId>,
    pub set_b: BTreeSet<NodeId>,
    pub given: BTreeSet<NodeId>,
}

impl SeparationQuery {
    pub fn new(
        set_a: BTreeSet<NodeId>,
        set_b: BTreeSet<NodeId>,
        given: BTreeSet<NodeId>,
    ) -> Self {
        SeparationQuery {
            set_a,
            set_b,
            given,
        }
    }

    pub fn validate(&self, g: &Dag) -> Result<(), DagError> {
        if self.set_a.is_empty() || self.set_b.is_empty() {
            return Err(DagError::InvalidQuery("node sets must be non-empty".into()));
        }
        for n in self.set_a.iter().chain(&self.set_b).chain(&self.given) {
            g.idx(n)?;
        }
        let overlap = |x: &BTreeSet<NodeId>, y: &BTreeSet<NodeId>| x.intersection(y).next().cloned();
        if let Some(n) = overlap(&self.set_a, &self.set_b)
            .or_else(|| overlap(&self.set_a, &self.given))
            .or_else(|| overlap(&self.set_b, &self.given))
        {
            return Err(DagError::InvalidQuery(format!("`{n}` appears in more than one set")));
        }
        Ok(())
    }
}

/// Decides d-separation by reachability ("Bayes ball"): a node is reachable
/// from `set_a` iff some path to it is active given `given`.
pub fn d_separated(g: &Dag, q: &SeparationQuery) -> Result<bool, DagError> {
    q.validate(g)?;
    let given = g.mask(&q.given)?;
    let n = g.node_count();
    // Nodes that are in `given` or have a descendant in it.
    let opens_collider: Vec<bool> = (0..n).map(|v| g.self_or_descendant_in(v, &given)).collect();

    // State: (node, arrived_from_child). Arriving from a child means the
    // traversal moves "up" against the edge direction.
    let mut visited = vec![[false; 2]; n];
    let mut queue = VecDeque::new();
    for a in &q.set_a {
        queue.push_back((g.idx(a)?, true));
    }
    let targets = g.mask(&q.set_b)?;
    while let Some((v, from_child)) = queue.pop_front() {
        let slot = usize::from(from_child);
        if visited[v][slot] {
            continue;
        }
        visited[v][slot] = true;
        if targets[v] {
            return Ok(false);
        }
        if from_child {
            if !given[v] {
                queue.extend(g.parents[v].iter().map(|&p| (p, true)));
                queue.extend(g.children[v].iter().map(|&c| (c, false)));
            }
        } else {
            if !given[v] {
                queue.extend(g.children[v].iter().map(|&c| (c, false)));
            }
            if opens_collider[v] {
                queue.extend(g.parents[v].iter().map(|&p| (p, true)));
            }
        }
    }
    Ok(true)
}

/// All simple paths from `x` to `y` whose first step is an edge into `x`.
pub fn backdoor_paths(g: &Dag, x: &NodeId, y: &NodeId) -> Result<Vec<Path>, DagError> {
    let (xi, yi) = (g.idx(x)?, g.idx(y)?);
    if xi == yi {
        return Err(DagError::InvalidQuery("treatment and outcome must differ".into()));
    }
    Ok(g.simple_paths(xi, yi)
        .iter()
        .filter(|p| !p.forward[0])
        .map(|p| p.to_path(g))
        .collect())
}

// ---------------------------------------------------------------------------
// Adjustment

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdentifyStatus {
    Identified,
    NotIdentified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifyResult {
    pub x: NodeId,
    pub y: NodeId,
    pub forced: BTreeSet<NodeId>,
    pub status: IdentifyStatus,
    /// Minimal admissible sets, forced members included.
    pub admissible_sets: Vec<BTreeSet<NodeId>>,
    /// Unblocked non-causal paths from the maximal failing candidate sets
    /// (deduplicated).
    pub witness_paths: Vec<Path>,
}

/// Outcome of checking one candidate conditioning set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjustmentCheck {
    /// Non-forced members that are descendants of the treatment.
    pub descendant_violations: Vec<NodeId>,
    /// Lexicographically first non-causal path left open, if any.
    pub first_unblocked: Option<Path>,
}

impl AdjustmentCheck {
    pub fn is_admissible(&self) -> bool {
        self.descendant_violations.is_empty() && self.first_unblocked.is_none()
    }
}

/// Precomputed non-causal paths between a treatment and an outcome.
///
/// When no member of the conditioning set descends from the treatment, the
/// non-causal paths left open are exactly the open back-door paths, so the
/// check coincides with the back-door criterion. Forced members (conditioned
/// by design, such as a selection indicator) are exempt from the descendant
/// rule; the colliders they open are caught on the non-causal paths that run
/// out of the treatment.
struct AdjustmentProblem<'g> {
    dag: &'g Dag,
    x: usize,
    noncausal: Vec<IdxPath>,
}

impl<'g> AdjustmentProblem<'g> {
    fn new(dag: &'g Dag, x: usize, y: usize) -> Self {
        let noncausal = dag
            .simple_paths(x, y)
            .into_iter()
            .filter(|p| !p.is_directed())
            .collect();
        AdjustmentProblem { dag, x, noncausal }
    }

    fn descendant_violations(&self, z: &[bool], forced: &[bool]) -> Vec<usize> {
        (0..z.len())
            .filter(|&v| z[v] && !forced[v] && self.dag.descendants[self.x][v])
            .collect()
    }

    fn first_unblocked(&self, z: &[bool]) -> Option<&IdxPath> {
        self.noncausal.iter().find(|p| !p.is_blocked(self.dag, z))
    }
}

fn check_endpoints(g: &Dag, x: &NodeId, y: &NodeId) -> Result<(usize, usize), DagError> {
    let (xi, yi) = (g.idx(x)?, g.idx(y)?);
    if xi == yi {
        return Err(DagError::InvalidQuery("treatment and outcome must differ".into()));
    }
    Ok((xi, yi))
}

/// Checks `z` against the back-door criterion for the effect of `x` on `y`.
/// Members of `forced` are conditioned by design and may descend from `x`.
pub fn check_adjustment(
    g: &Dag,
    x: &NodeId,
    y: &NodeId,
    z: &BTreeSet<NodeId>,
    forced: &BTreeSet<NodeId>,
) -> Result<AdjustmentCheck, DagError> {
    let (xi, yi) = check_endpoints(g, x, y)?;
    if z.contains(x) || z.contains(y) || forced.contains(x) || forced.contains(y) {
        return Err(DagError::InvalidQuery(
            "conditioning set must exclude treatment and outcome".into(),
        ));
    }
    let mut zm = g.mask(z)?;
    let fm = g.mask(forced)?;
    for (v, &f) in fm.iter().enumerate() {
        zm[v] |= f;
    }
    let problem = AdjustmentProblem::new(g, xi, yi);
    Ok(AdjustmentCheck {
        descendant_violations: problem
            .descendant_violations(&zm, &fm)
            .into_iter()
            .map(|v| g.name(v).clone())
            .collect(),
        first_unblocked: problem.first_unblocked(&zm).map(|p| p.to_path(g)),
    })
}

/// True iff no non-forced member of `z` descends from `x` and `z ∪ forced`
/// blocks every back-door path from `x` to `y`.
pub fn is_backdoor_admissible(
    g: &Dag,
    x: &NodeId,
    y: &NodeId,
    z: &BTreeSet<NodeId>,
    forced: &BTreeSet<NodeId>,
) -> Result<bool, DagError> {
    Ok(check_adjustment(g, x, y, z, forced)?.is_admissible())
}

/// Exhaustive search for minimal admissible sets with
/// [`DEFAULT_MAX_CANDIDATES`] as the candidate limit.
pub fn find_adjustment_sets(
    g: &Dag,
    x: &NodeId,
    y: &NodeId,
    observed: &BTreeSet<NodeId>,
    forced: &BTreeSet<NodeId>,
) -> Result<IdentifyResult, DagError> {
    find_adjustment_sets_with_limit(g, x, y, observed, forced, DEFAULT_MAX_CANDIDATES)
}

/// Searches every `z` with `forced ⊆ z ⊆ observed \ {x, y}` and returns the
/// minimal admissible ones, ordered by size and then lexicographically.
/// When none exist, the witnesses are the first unblocked back-door path for
/// the full candidate set and for each set missing one candidate.
pub fn find_adjustment_sets_with_limit(
    g: &Dag,
    x: &NodeId,
    y: &NodeId,
    observed: &BTreeSet<NodeId>,
    forced: &BTreeSet<NodeId>,
    max_candidates: usize,
) -> Result<IdentifyResult, DagError> {
    let (xi, yi) = check_endpoints(g, x, y)?;
    for n in observed.iter().chain(forced) {
        g.idx(n)?;
    }
    for n in [x, y] {
        if !observed.contains(n) {
            return Err(DagError::NotObserved(n.to_string()));
        }
    }
    if let Some(n) = forced.iter().find(|n| !observed.contains(*n)) {
        return Err(DagError::NotObserved(n.to_string()));
    }
    if forced.contains(x) || forced.contains(y) {
        return Err(DagError::InvalidQuery(
            "forced set must exclude treatment and outcome".into(),
        ));
    }
    let pool: Vec<usize> = observed
        .iter()
        .filter(|n| *n != x && *n != y && !forced.contains(*n))
        .map(|n| g.idx(n))
        .collect::<Result<_, _>>()?;
    if pool.len() > max_candidates || pool.len() >= 64 {
        return Err(DagError::TooManyCandidates {
            found: pool.len(),
            limit: max_candidates.min(63),
        });
    }

    let problem = AdjustmentProblem::new(g, xi, yi);
    let fm = g.mask(forced)?;
    let mut minimal: Vec<u64> = Vec::new();
    let mut witnesses: BTreeSet<IdxPath> = BTreeSet::new();
    let mut z = fm.clone();
    for size in 0..=pool.len() {
        for combo in Combinations::new(pool.len(), size) {
            let bits = combo.iter().fold(0u64, |b, &i| b | (1 << i));
            z.copy_from_slice(&fm);
            for &i in &combo {
                z[pool[i]] = true;
            }
            let open = problem.first_unblocked(&z);
            // witnesses come from the maximal tried sets: all candidates, or
            // all but one
            if size + 1 >= pool.len() {
                if let Some(p) = open {
                    witnesses.insert(p.clone());
                }
            }
            if minimal.iter().any(|&m| m & !bits == 0) {
                continue;
            }
            if open.is_none() && problem.descendant_violations(&z, &fm).is_empty() {
                minimal.push(bits);
            }
        }
    }

    let to_set = |bits: u64| -> BTreeSet<NodeId> {
        let mut s = forced.clone();
        for (i, &v) in pool.iter().enumerate() {
            if bits & (1 << i) != 0 {
                s.insert(g.name(v).clone());
            }
        }
        s
    };
    if minimal.is_empty() {
        Ok(IdentifyResult {
            x: x.clone(),
            y: y.clone(),
            forced: forced.clone(),
            status: IdentifyStatus::NotIdentified,
            admissible_sets: Vec::new(),
            witness_paths: witnesses.iter().map(|p| p.to_path(g)).collect(),
        })
    } else {
        Ok(IdentifyResult {
            x: x.clone(),
            y: y.clone(),
            forced: forced.clone(),
            status: IdentifyStatus::Identified,
            admissible_sets: minimal.into_iter().map(to_set).collect(),
            witness_paths: Vec::new(),
        })
    }
}

/// k-combinations of `0..n` in lexicographic order.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE_DAG: &str = "A -> D; B -> D; D -> O; B -> O; U -> A; U -> O; B -> C; A -> C";

    fn n(s: &str) -> NodeId {
        NodeId::new(s).unwrap()
    }

    fn set(names: &[&str]) -> BTreeSet<NodeId> {
        node_set(names.iter().copied()).unwrap()
    }

    #[test]
    fn parses_example_graph() {
        let g = parse_dag(EXAMPLE_DAG).unwrap();
        assert_eq!(g.node_count(), 6);
        assert_eq!(g.edge_count(), 8);
        assert!(g.has_edge(&n("U"), &n("A")));
    }

    #[test]
    fn parses_minimal_graph() {
        let g = parse_dag("X -> Y").unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
    }

    #[test]
    fn rejects_cycle() {
        match parse_dag("X -> Y; Y -> X") {
            Err(DagError::Cycle(c)) => assert_eq!(c, vec!["X", "Y", "X"]),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn dsl_errors() {
        assert!(matches!(
            parse_dag("node A; node A;"),
            Err(DagError::DuplicateNode(_))
        ));
        assert!(matches!(parse_dag("A -> A"), Err(DagError::SelfLoop(_))));
        assert!(matches!(
            parse_dag("A -> B; A -> B"),
            Err(DagError::DuplicateEdge(..))
        ));
        match parse_dag("A -> B;\nB -> ;") {
            Err(DagError::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 6)),
            other => panic!("{other:?}"),
        }
        match parse_dag("A -> B;\n  C $ D") {
            Err(DagError::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 5)),
            other => panic!("{other:?}"),
        }
        let err = Dag::new(vec![n("A")], vec![(n("A"), n("B"))]).unwrap_err();
        assert_eq!(err, DagError::UnknownEndpoint("B".into()));
    }

    #[test]
    fn dsl_comments_hyphens_and_isolated_nodes() {
        let g = parse_dag("# header\nnode lone_1;\npre-decision->EVD; # trailing\nEVD -> out-come;").unwrap();
        assert_eq!(g.node_count(), 4);
        assert!(g.has_edge(&n("pre-decision"), &n("EVD")));
        assert!(g.parents(&n("lone_1")).unwrap().is_empty());
        assert!(NodeId::new("1abc").is_err());
        assert!(NodeId::new("").is_err());
    }

    #[test]
    fn dsl_round_trip() {
        let g = parse_dag(EXAMPLE_DAG).unwrap();
        assert_eq!(parse_dag(&g.to_dsl()).unwrap(), g);
    }

    #[test]
    fn collider_opened_by_conditioning() {
        let g = parse_dag(EXAMPLE_DAG).unwrap();
        let q = SeparationQuery::new(set(&["B"]), set(&["A"]), set(&["D"]));
        assert!(!d_separated(&g, &q).unwrap());
        let q = SeparationQuery::new(set(&["B"]), set(&["A"]), set(&[]));
        assert!(d_separated(&g, &q).unwrap());
    }

    #[test]
    fn chain_blocked_by_mediator() {
        let g = parse_dag("X -> M; M -> Y").unwrap();
        let q = SeparationQuery::new(set(&["X"]), set(&["Y"]), set(&["M"]));
        assert!(d_separated(&g, &q).unwrap());
        let q = SeparationQuery::new(set(&["X"]), set(&["Y"]), set(&[]));
        assert!(!d_separated(&g, &q).unwrap());
    }

    #[test]
    fn invalid_queries() {
        let g = parse_dag(EXAMPLE_DAG).unwrap();
        let q = SeparationQuery::new(set(&["B"]), set(&["B"]), set(&[]));
        assert!(matches!(d_separated(&g, &q), Err(DagError::InvalidQuery(_))));
        let q = SeparationQuery::new(set(&["B"]), set(&["Z"]), set(&[]));
        assert!(matches!(d_separated(&g, &q), Err(DagError::UnknownNode(_))));
        let q = SeparationQuery::new(set(&[]), set(&["A"]), set(&[]));
        assert!(d_separated(&g, &q).is_err());
    }

    #[test]
    fn backdoor_paths_of_parentless_node_are_empty() {
        let g = parse_dag("X -> Y").unwrap();
        assert!(backdoor_paths(&g, &n("X"), &n("Y")).unwrap().is_empty());
        assert!(backdoor_paths(&g, &n("X"), &n("Q")).is_err());
    }

    #[test]
    fn unconfounded_pair_is_identified_by_empty_set() {
        let g = parse_dag("X -> Y").unwrap();
        assert!(is_backdoor_admissible(&g, &n("X"), &n("Y"), &set(&[]), &set(&[])).unwrap());
        let r = find_adjustment_sets(&g, &n("X"), &n("Y"), &set(&["X", "Y"]), &set(&[])).unwrap();
        assert_eq!(r.status, IdentifyStatus::Identified);
        assert_eq!(r.admissible_sets, vec![set(&[])]);
    }

    #[test]
    fn confounder_must_be_adjusted() {
        let g = parse_dag("Z -> X; Z -> Y; X -> Y; X -> M; M -> Y").unwrap();
        let all = set(&["X", "Y", "Z", "M"]);
        let r = find_adjustment_sets(&g, &n("X"), &n("Y"), &all, &set(&[])).unwrap();
        assert_eq!(r.admissible_sets, vec![set(&["Z"])]);
        // a mediator may not be used
        assert!(!is_backdoor_admissible(&g, &n("X"), &n("Y"), &set(&["Z", "M"]), &set(&[])).unwrap());
        let hidden = set(&["X", "Y", "M"]);
        let r = find_adjustment_sets(&g, &n("X"), &n("Y"), &hidden, &set(&[])).unwrap();
        assert_eq!(r.status, IdentifyStatus::NotIdentified);
        assert_eq!(r.witness_paths.len(), 1);
        assert_eq!(r.witness_paths[0].to_string(), "X <- Z -> Y");
    }

    #[test]
    fn search_errors() {
        let g = parse_dag("Z -> X; Z -> Y; X -> Y").unwrap();
        assert!(matches!(
            find_adjustment_sets(&g, &n("X"), &n("Y"), &set(&["X", "Z"]), &set(&[])),
            Err(DagError::NotObserved(_))
        ));
        assert!(matches!(
            find_adjustment_sets_with_limit(&g, &n("X"), &n("Y"), &set(&["X", "Y", "Z"]), &set(&[]), 0),
            Err(DagError::TooManyCandidates { .. })
        ));
        assert!(check_adjustment(&g, &n("X"), &n("Y"), &set(&["X"]), &set(&[])).is_err());
    }

    #[test]
    fn combinations_are_lexicographic() {
        let c: Vec<Vec<usize>> = Combinations::new(4, 2).collect();
        assert_eq!(
            c,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(Combinations::new(3, 0).count(), 1);
        assert_eq!(Combinations::new(2, 3).count(), 0);
    }

    #[test]
    fn topological_order_respects_edges() {
        let g = parse_dag(EXAMPLE_DAG).unwrap();
        let order = g.topological_order();
        let pos = |s: &str| order.iter().position(|x| x.as_str() == s).unwrap();
        for (p, c) in g.edges() {
            assert!(pos(p.as_str()) < pos(c.as_str()));
        }
    }
}
