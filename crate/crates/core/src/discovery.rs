//! Heuristic-miner style discovery: directly-follows counts, the dependency
//! measure, thresholded dependency graphs, and fuzzy-miner edge metrics.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::eventlog::{ColumnMapping, EventLog};

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Square<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Square<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::default(); n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.n + j] = value;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectlyFollowsMatrix {
    pub alphabet: Vec<String>,
    /// `counts[i][j]`: how often activity j directly follows activity i.
    pub counts: Square<u64>,
    /// Number of events per activity.
    pub activity_counts: Vec<u64>,
}

impl DirectlyFollowsMatrix {
    pub fn empty() -> Self {
        Self {
            alphabet: Vec::new(),
            counts: Square::zeros(0),
            activity_counts: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.as_slice().iter().sum()
    }
}

pub fn directly_follows_counts(log: &EventLog) -> DirectlyFollowsMatrix {
    let n = log.alphabet.len();
    let index: HashMap<&str, usize> = log
        .alphabet
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();
    let mut counts = Square::zeros(n);
    let mut activity_counts = vec![0u64; n];
    for trace in &log.traces {
        let mut prev: Option<usize> = None;
        for activity in trace.activities() {
            let cur = index[activity];
            activity_counts[cur] += 1;
            if let Some(p) = prev {
                let c = counts.get(p, cur);
                counts.set(p, cur, c + 1);
            }
            prev = Some(cur);
        }
    }
    DirectlyFollowsMatrix {
        alphabet: log.alphabet.clone(),
        counts,
        activity_counts,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependencyMatrix {
    pub alphabet: Vec<String>,
    pub values: Square<f64>,
}

impl DependencyMatrix {
    pub fn zeros(alphabet: Vec<String>) -> Self {
        let n = alphabet.len();
        Self {
            alphabet,
            values: Square::zeros(n),
        }
    }

    pub fn size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    /// Population mean and standard deviation over every cell.
    pub fn mean_std(&self) -> (f64, f64) {
        let cells = self.values.as_slice();
        if cells.is_empty() {
            return (0.0, 0.0);
        }
        let n = cells.len() as f64;
        let mean = cells.iter().sum::<f64>() / n;
        let var = cells.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

/// `dep[i][j] = (|i>j| - |j>i|) / (|i>j| + |j>i| + 1)`, diagonal included.
pub fn dependency_matrix(df: &DirectlyFollowsMatrix) -> DependencyMatrix {
    let c = &df.counts;
    let values = Square::from_fn(df.size(), |i, j| {
        let forward = c.get(i, j) as f64;
        let backward = c.get(j, i) as f64;
        (forward - backward) / (forward + backward + 1.0)
    });
    DependencyMatrix {
        alphabet: df.alphabet.clone(),
        values,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub dependency: f64,
}

/// A thresholded dependency graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel {
    pub alphabet: Vec<String>,
    /// Sorted by (source, target) alphabet position.
    pub edges: Vec<Edge>,
    pub threshold: f64,
    pub mapping: Option<ColumnMapping>,
    index: HashMap<String, usize>,
    edge_set: HashSet<(usize, usize)>,
}

impl ProcessModel {
    pub fn new(
        alphabet: Vec<String>,
        mut edges: Vec<Edge>,
        threshold: f64,
        mapping: Option<ColumnMapping>,
    ) -> Self {
        edges.sort_by_key(|e| (e.source, e.target));
        let index = alphabet
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        let edge_set = edges.iter().map(|e| (e.source, e.target)).collect();
        Self {
            alphabet,
            edges,
            threshold,
            mapping,
            index,
            edge_set,
        }
    }

    pub fn index_of(&self, activity: &str) -> Option<usize> {
        self.index.get(activity).copied()
    }

    pub fn has_edge(&self, source: usize, target: usize) -> bool {
        self.edge_set.contains(&(source, target))
    }

    /// Edge lookup by activity label; unknown labels have no edges.
    pub fn connects(&self, source: &str, target: &str) -> bool {
        match (self.index_of(source), self.index_of(target)) {
            (Some(s), Some(t)) => self.has_edge(s, t),
            _ => false,
        }
    }

    pub fn edge_labels(&self) -> Vec<(&str, &str)> {
        self.edges
            .iter()
            .map(|e| (self.alphabet[e.source].as_str(), self.alphabet[e.target].as_str()))
            .collect()
    }
}

/// Keeps every cell with `dep >= threshold` as an edge.
pub fn discover_model(
    depmat: &DependencyMatrix,
    threshold: f64,
    mapping: Option<ColumnMapping>,
) -> Result<ProcessModel> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Threshold(threshold));
    }
    let n = depmat.size();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let d = depmat.get(i, j);
            if d >= threshold {
                edges.push(Edge {
                    source: i,
                    target: j,
                    dependency: d,
                });
            }
        }
    }
    Ok(ProcessModel::new(depmat.alphabet.clone(), edges, threshold, mapping))
}

/// Fuzzy-miner relative significance with directly-follows counts as the
/// significance. Terms with a zero denominator contribute 0.
pub fn fuzzy_relative_significance(df: &DirectlyFollowsMatrix) -> Square<f64> {
    let n = df.size();
    let sig = |i: usize, j: usize| df.counts.get(i, j) as f64;
    let row_sums: Vec<f64> = (0..n).map(|i| (0..n).map(|x| sig(i, x)).sum()).collect();
    let col_sums: Vec<f64> = (0..n).map(|j| (0..n).map(|x| sig(x, j)).sum()).collect();
    Square::from_fn(n, |i, j| {
        let s = sig(i, j);
        let out = if row_sums[i] > 0.0 { s / row_sums[i] } else { 0.0 };
        let inc = if col_sums[j] > 0.0 { s / col_sums[j] } else { 0.0 };
        0.5 * out + 0.5 * inc
    })
}

/// `ur * sig + (1 - ur) * cor`.
pub fn fuzzy_utility(sig: f64, cor: f64, ur: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&ur) {
        return Err(Error::UtilityRatio(ur));
    }
    Ok(ur * sig + (1.0 - ur) * cor)
}

/// Pluggable edge correlation for [`fuzzy_utility_matrix`].
pub type CorrelationFn = fn(&DirectlyFollowsMatrix) -> Square<f64>;

/// Directly-follows counts divided by the largest count in the matrix.
///
/// This is a stand-in correlation, not the fuzzy miner's own definition.
pub fn max_normalized_correlation(df: &DirectlyFollowsMatrix) -> Square<f64> {
    let max = df.counts.as_slice().iter().copied().max().unwrap_or(0);
    Square::from_fn(df.size(), |i, j| {
        if max == 0 {
            0.0
        } else {
            df.counts.get(i, j) as f64 / max as f64
        }
    })
}

/// Edge utility using relative significance and the given correlation.
pub fn fuzzy_utility_matrix(
    df: &DirectlyFollowsMatrix,
    ur: f64,
    correlation: CorrelationFn,
) -> Result<Square<f64>> {
    let rel = fuzzy_relative_significance(df);
    let cor = correlation(df);
    let mut out = Square::zeros(df.size());
    for i in 0..df.size() {
        for j in 0..df.size() {
            out.set(i, j, fuzzy_utility(rel.get(i, j), cor.get(i, j), ur)?);
        }
    }
    Ok(out)
}
