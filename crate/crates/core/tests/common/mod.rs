//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use midway::dag::{parse_dag, Dag, NodeId};
use midway::study::{ingest_csv, PatientTable, Schema};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_dag(name: &str) -> Dag {
    parse_dag(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

pub fn planted_stratum() -> PatientTable {
    let schema = Schema::from_json(&std::fs::read_to_string(fixture("planted_stratum.schema.json")).unwrap()).unwrap();
    ingest_csv(std::fs::File::open(fixture("planted_stratum.csv")).unwrap(), &schema).unwrap()
}

pub fn ids<I: IntoIterator<Item = &'static str>>(names: I) -> BTreeSet<NodeId> {
    names.into_iter().map(|n| NodeId::new(n).unwrap()).collect()
}

// ---------------------------------------------------------------------------
// d-separation by explicit path enumeration

/// Graph as plain adjacency built only from the public edge list.
pub struct Plain {
    pub n: usize,
    pub names: Vec<String>,
    pub edge: Vec<Vec<bool>>,
}

impl Plain {
    pub fn from_dag(g: &Dag) -> Plain {
        let names: Vec<String> = g.nodes().iter().map(|n| n.to_string()).collect();
        let pos: BTreeMap<String, usize> = names.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
        let n = names.len();
        let mut edge = vec![vec![false; n]; n];
        for (a, b) in g.edges() {
            edge[pos[a.as_str()]][pos[b.as_str()]] = true;
        }
        Plain { n, names, edge }
    }

    pub fn index(&self, name: &str) -> usize {
        self.names.iter().position(|n| n == name).unwrap()
    }

    fn descendants_or_self(&self, v: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            if !seen[u] {
                seen[u] = true;
                stack.extend((0..self.n).filter(|&w| self.edge[u][w]));
            }
        }
        seen
    }

    /// Every simple path a ... b in the skeleton.
    pub fn simple_paths(&self, a: usize, b: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut path = vec![a];
        let mut used = vec![false; self.n];
        used[a] = true;
        self.walk(b, &mut path, &mut used, &mut out);
        out
    }

    fn walk(&self, b: usize, path: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        let v = *path.last().unwrap();
        if v == b {
            out.push(path.clone());
            return;
        }
        for w in 0..self.n {
            if !used[w] && (self.edge[v][w] || self.edge[w][v]) {
                used[w] = true;
                path.push(w);
                self.walk(b, path, used, out);
                path.pop();
                used[w] = false;
            }
        }
    }

    /// A path is open given `z` when every collider has itself or a
    /// descendant in `z` and no other interior node is in `z`.
    pub fn path_open(&self, path: &[usize], z: &[bool]) -> bool {
        for i in 1..path.len() - 1 {
            let (p, v, q) = (path[i - 1], path[i], path[i + 1]);
            let collider = self.edge[p][v] && self.edge[q][v];
            if collider {
                let d = self.descendants_or_self(v);
                if !(0..self.n).any(|u| d[u] && z[u]) {
                    return false;
                }
            } else if z[v] {
                return false;
            }
        }
        true
    }

    pub fn d_separated(&self, a: &[usize], b: &[usize], given: &[usize]) -> bool {
        let mut z = vec![false; self.n];
        for &g in given {
            z[g] = true;
        }
        for &x in a {
            for &y in b {
                if self.simple_paths(x, y).iter().any(|p| self.path_open(p, &z)) {
                    return false;
                }
            }
        }
        true
    }
}

/// Random DAG: nodes `N0..` in a shuffled causal order, each forward pair an
/// edge with probability `p`.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p: f64) -> Dag {
    let names: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("N{i}")).unwrap()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((names[order[i]].clone(), names[order[j]].clone()));
            }
        }
    }
    Dag::new(names, edges).unwrap()
}

/// Random disjoint (A, B, Z) with A and B non-empty.
pub fn random_query<R: Rng>(rng: &mut R, n: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    loop {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut z = Vec::new();
        for v in 0..n {
            match rng.random_range(0..6) {
                0 => a.push(v),
                1 => b.push(v),
                2 | 3 => z.push(v),
                _ => {}
            }
        }
        if !a.is_empty() && !b.is_empty() {
            return (a, b, z);
        }
    }
}

// ---------------------------------------------------------------------------
// Logistic regression

/// Log posterior written directly from the Bernoulli likelihood.
pub fn naive_log_posterior(x: &[Vec<f64>], y: &[bool], sds: &[f64], beta: &[f64]) -> f64 {
    let mut lp = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let p = 1.0 / (1.0 + (-eta).exp());
        lp += if yi { p.ln() } else { (1.0 - p).ln() };
    }
    for (b, s) in beta.iter().zip(sds) {
        lp -= b * b / (2.0 * s * s);
    }
    lp
}

/// Two-parameter grid search: a step-0.01 sweep of [-5, 5]², then local
/// refinement at steps 1e-3, 1e-4 and 1e-5.
pub fn grid_search_2d(f: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    let steps = 1000;
    for i in 0..=steps {
        for j in 0..=steps {
            let (a, b) = (-5.0 + 0.01 * i as f64, -5.0 + 0.01 * j as f64);
            let v = f(a, b);
            if v > best.2 {
                best = (a, b, v);
            }
        }
    }
    for h in [1e-3, 1e-4, 1e-5] {
        let (ca, cb) = (best.0, best.1);
        for i in -20..=20 {
            for j in -20..=20 {
                let (a, b) = (ca + h * i as f64, cb + h * j as f64);
                let v = f(a, b);
                if v > best.2 {
                    best = (a, b, v);
                }
            }
        }
    }
    (best.0, best.1)
}

// ---------------------------------------------------------------------------
// Linear algebra

/// Solves `a x = b` by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// `(XᵀWX)⁻¹ XᵀWy` via explicit normal equations.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for ((row, yi), wi) in x.iter().zip(y).zip(w) {
        for i in 0..p {
            b[i] += wi * row[i] * yi;
            for j in 0..p {
                a[i][j] += wi * row[i] * row[j];
            }
        }
    }
    gauss_solve(a, b)
}

// ---------------------------------------------------------------------------
// Densities

pub fn beta_2_5_pdf(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        30.0 * x * (1.0 - x).powi(4)
    } else {
        0.0
    }
}

pub fn std_normal_cdf(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

/// Normal(mu, sd) density truncated to [0, 1].
pub fn truncated_normal_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    let mass = std_normal_cdf((1.0 - mu) / sd) - std_normal_cdf(-mu / sd);
    let z = (x - mu) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt()) / mass
}

/// `∫ min(f, g)` over [0, 1] by the midpoint rule on `n` cells.
pub fn integrate_min(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            f(x).min(g(x)) * h
        })
        .sum()
}

/// Rejection sampler for Normal(mu, sd) restricted to (0, 1).
pub fn sample_truncated_normal<R: Rng>(rng: &mut R, mu: f64, sd: f64, n: usize) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    let d = Normal::new(mu, sd).unwrap();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v: f64 = d.sample(rng);
        if v > 0.0 && v < 1.0 {
            out.push(v);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Clinical grading

/// Grade from the published definition, written as explicit ranges.
pub fn wfns_reference(total: u8, focal_deficit: bool, pupils_reactive: bool) -> u8 {
    if total == 15 {
        1
    } else if (13..=14).contains(&total) {
        if focal_deficit {
            2
        } else {
            3
        }
    } else if (7..=12).contains(&total) {
        4
    } else if (3..=6).contains(&total) {
        if pupils_reactive {
            5
        } else {
            6
        }
    } else {
        panic!("GCS total {total} out of range")
    }
}
