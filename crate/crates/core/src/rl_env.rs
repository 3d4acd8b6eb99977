//! The discovery environment: action enumeration, state encoding, the step
//! function and its reward.
//!
//! An action fixes a dependency threshold and which columns act as case,
//! activity and resource. Stepping builds the log under that mapping, mines a
//! dependency graph and scores it by replay fitness. The next state depends on
//! the action alone.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::conformance::log_fitness;
use crate::discovery::{
    dependency_matrix, directly_follows_counts, discover_model, DependencyMatrix,
    DirectlyFollowsMatrix, ProcessModel,
};
use crate::error::{Error, Result};
use crate::eventlog::{build_log, ColumnMapping, EventTable};

/// Side length of the full-size state encoding.
pub const STATE_SIDE: usize = 128;
pub const STATE_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub index: usize,
    pub grid_index: usize,
    pub threshold: f64,
    pub mapping: ColumnMapping,
}

impl fmt::Display for Action {
    /// Renders with 1-based column numbers.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "<{:.2}, {}, {}, {}>",
            self.threshold,
            self.mapping.case_col + 1,
            self.mapping.activity_col + 1,
            self.mapping.resource_col + 1
        )
    }
}

/// How the case/activity/resource roles range over a column triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoleAssignment {
    /// Only `case < activity < resource` for each triple.
    #[default]
    Canonical,
    /// All 6 role orderings of each triple.
    Permutations,
}

impl FromStr for RoleAssignment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Self::Canonical),
            "permutations" => Ok(Self::Permutations),
            _ => Err(Error::UnknownMode {
                kind: "role assignment",
                value: s.into(),
            }),
        }
    }
}

impl fmt::Display for RoleAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Canonical => "canonical",
            Self::Permutations => "permutations",
        })
    }
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

#[derive(Debug, Clone)]
pub struct ActionSpace {
    actions: Vec<Action>,
    param_grid: Vec<f64>,
    n_columns: usize,
    roles: RoleAssignment,
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Evenly spaced thresholds `start, start + step, ..., stop`, rounded to 12
/// decimals so that e.g. `0.01 * 7` lands on `0.07`.
pub fn param_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) {
        return Err(Error::ActionSpace(format!(
            "grid needs step > 0 and stop >= start, got {start}..{stop} step {step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

impl ActionSpace {
    pub fn new(n_columns: usize, param_grid: Vec<f64>, roles: RoleAssignment) -> Result<Self> {
        if n_columns < 3 {
            return Err(Error::ActionSpace(format!(
                "need at least 3 columns, got {n_columns}"
            )));
        }
        if param_grid.is_empty() {
            return Err(Error::ActionSpace("empty parameter grid".into()));
        }
        if param_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ActionSpace("grid must be strictly ascending".into()));
        }
        if param_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::ActionSpace("grid values must lie in [0, 1]".into()));
        }

        let mut actions = Vec::new();
        for (grid_index, &threshold) in param_grid.iter().enumerate() {
            for i in 0..n_columns {
                for j in i + 1..n_columns {
                    for k in j + 1..n_columns {
                        let triple = [i, j, k];
                        let orders: &[[usize; 3]] = match roles {
                            RoleAssignment::Canonical => &PERMUTATIONS[..1],
                            RoleAssignment::Permutations => &PERMUTATIONS,
                        };
                        for p in orders {
                            actions.push(Action {
                                index: actions.len(),
                                grid_index,
                                threshold,
                                mapping: ColumnMapping::new(
                                    triple[p[0]],
                                    triple[p[1]],
                                    triple[p[2]],
                                ),
                            });
                        }
                    }
                }
            }
        }
        Ok(Self {
            actions,
            param_grid,
            n_columns,
            roles,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Action> {
        self.actions.get(index)
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn param_grid(&self) -> &[f64] {
        &self.param_grid
    }

    pub fn n_columns(&self) -> usize {
        self.n_columns
    }

    pub fn roles(&self) -> RoleAssignment {
        self.roles
    }

    /// Position of `(grid_index, mapping)` in the enumeration, computed from
    /// the combinatorial rank of the column triple.
    pub fn index_of(&self, grid_index: usize, mapping: &ColumnMapping) -> Option<usize> {
        if grid_index >= self.param_grid.len() || mapping.validate(self.n_columns).is_err() {
            return None;
        }
        let roles = [mapping.case_col, mapping.activity_col, mapping.resource_col];
        let mut sorted = roles;
        sorted.sort_unstable();
        let perm_rank = PERMUTATIONS
            .iter()
            .position(|p| [sorted[p[0]], sorted[p[1]], sorted[p[2]]] == roles)?;
        if self.roles == RoleAssignment::Canonical && perm_rank != 0 {
            return None;
        }

        let n = self.n_columns;
        let [i, j, k] = sorted;
        let mut triple_rank = 0;
        for a in 0..i {
            triple_rank += binomial(n - 1 - a, 2);
        }
        for b in i + 1..j {
            triple_rank += n - 1 - b;
        }
        triple_rank += k - j - 1;

        let per_triple = match self.roles {
            RoleAssignment::Canonical => 1,
            RoleAssignment::Permutations => 6,
        };
        let per_grid = binomial(n, 3) * per_triple;
        Some(grid_index * per_grid + triple_rank * per_triple + perm_rank)
    }
}

/// Action space with canonical role assignment.
pub fn build_action_space(n_columns: usize, param_grid: &[f64]) -> Result<ActionSpace> {
    ActionSpace::new(n_columns, param_grid.to_vec(), RoleAssignment::Canonical)
}

/// The agent's observation: the dependency matrix of the last discovered model
/// together with the directly-follows counts it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub depmat: DependencyMatrix,
    pub follows: DirectlyFollowsMatrix,
    pub side: usize,
}

impl EnvState {
    pub fn tensor(&self) -> StateTensor {
        encode_state(&self.depmat, &self.follows, self.side)
    }
}

/// `side x side x 3` grid stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTensor {
    pub side: usize,
    pub data: Vec<f64>,
}

impl StateTensor {
    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            data: vec![0.0; STATE_CHANNELS * side * side],
        }
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(channel * self.side + row) * self.side + col]
    }

    fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        self.data[(channel * self.side + row) * self.side + col] = value;
    }
}

pub fn initial_state(side: usize) -> EnvState {
    EnvState {
        depmat: DependencyMatrix::zeros(Vec::new()),
        follows: DirectlyFollowsMatrix::empty(),
        side,
    }
}

/// Places the dependency matrix (channel 0), row-normalized counts (channel 1)
/// and column-normalized counts (channel 2) in the top-left block.
///
/// Alphabets larger than `side` keep the `side` most frequent activities,
/// ties broken by alphabet order.
pub fn encode_state(depmat: &DependencyMatrix, follows: &DirectlyFollowsMatrix, side: usize) -> StateTensor {
    let mut out = StateTensor::zeros(side);
    let n = depmat.size();
    let kept: Vec<usize> = if n <= side {
        (0..n).collect()
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        let freq = |i: usize| follows.activity_counts.get(i).copied().unwrap_or(0);
        order.sort_by(|&a, &b| freq(b).cmp(&freq(a)).then(a.cmp(&b)));
        order.truncate(side);
        order.sort_unstable();
        order
    };

    let have_counts = follows.size() == n;
    let count = |i: usize, j: usize| {
        if have_counts {
            follows.counts.get(i, j) as f64
        } else {
            0.0
        }
    };
    let row_sums: Vec<f64> = kept
        .iter()
        .map(|&i| kept.iter().map(|&j| count(i, j)).sum())
        .collect();
    let col_sums: Vec<f64> = kept
        .iter()
        .map(|&j| kept.iter().map(|&i| count(i, j)).sum())
        .collect();

    for (r, &i) in kept.iter().enumerate() {
        for (c, &j) in kept.iter().enumerate() {
            out.set(r, c, 0, depmat.get(i, j));
            let x = count(i, j);
            if row_sums[r] > 0.0 {
                out.set(r, c, 1, x / row_sums[r]);
            }
            if col_sums[c] > 0.0 {
                out.set(r, c, 2, x / col_sums[c]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardMode {
    FitnessOnly,
    /// Fitness plus the population standard deviation of the matrix.
    #[default]
    FitnessPlusStd,
    /// Mean plus population standard deviation of the matrix.
    MatrixMeanPlusStd,
}

impl FromStr for RewardMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fitness_only" => Ok(Self::FitnessOnly),
            "fitness_plus_std" => Ok(Self::FitnessPlusStd),
            "matrix_mean_plus_std" => Ok(Self::MatrixMeanPlusStd),
            _ => Err(Error::UnknownMode {
                kind: "reward mode",
                value: s.into(),
            }),
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FitnessOnly => "fitness_only",
            Self::FitnessPlusStd => "fitness_plus_std",
            Self::MatrixMeanPlusStd => "matrix_mean_plus_std",
        })
    }
}

pub fn compute_reward(fitness: f64, depmat: &DependencyMatrix, mode: RewardMode) -> f64 {
    match mode {
        RewardMode::FitnessOnly => fitness,
        RewardMode::FitnessPlusStd => fitness + depmat.mean_std().1,
        RewardMode::MatrixMeanPlusStd => {
            let (mean, std) = depmat.mean_std();
            mean + std
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub min_fitness: f64,
    pub reward_mode: RewardMode,
    /// Side of the encoded state; larger alphabets are truncated.
    pub max_alphabet: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            min_fitness: 0.7,
            reward_mode: RewardMode::FitnessPlusStd,
            max_alphabet: STATE_SIDE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_state: Arc<EnvState>,
    pub fitness: f64,
    pub reward: f64,
    /// `fitness > min_fitness`, strictly.
    pub success: bool,
    pub model: ProcessModel,
}

/// Discovers and scores the model selected by `action`. Pure in its inputs.
pub fn env_step(table: &EventTable, action: &Action, config: &EnvConfig) -> Result<StepOutcome> {
    let log = build_log(table, &action.mapping)?;
    let follows = directly_follows_counts(&log);
    let depmat = dependency_matrix(&follows);
    let model = discover_model(&depmat, action.threshold, Some(action.mapping))?;
    let fitness = log_fitness(&log, &model).log_fitness;
    let reward = compute_reward(fitness, &depmat, config.reward_mode);
    Ok(StepOutcome {
        next_state: Arc::new(EnvState {
            depmat,
            follows,
            side: config.max_alphabet,
        }),
        fitness,
        reward,
        success: fitness > config.min_fitness,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::Square;
    use crate::eventlog::{generate_synthetic_table, EventLog, SynthSpec};

    fn grid_100() -> Vec<f64> {
        param_grid(0.01, 1.0, 0.01).unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = grid_100();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[6], 0.07);
        assert_eq!(g[99], 1.0);
        assert_eq!(param_grid(0.1, 1.0, 0.1).unwrap().len(), 10);
    }

    #[test]
    fn first_action_matches_figure() {
        let space = build_action_space(9, &grid_100()).unwrap();
        let a = space.get(0).unwrap();
        assert_eq!(a.threshold, 0.01);
        assert_eq!(a.mapping, ColumnMapping::new(0, 1, 2));
        assert_eq!(a.to_string(), "<0.01, 1, 2, 3>");
        assert_eq!(space.len(), 8400);
    }

    #[test]
    fn small_space_is_exhaustive() {
        let space = build_action_space(4, &[0.2, 0.8]).unwrap();
        assert_eq!(space.len(), 8);
        let mut seen = std::collections::HashSet::new();
        for (i, a) in space.actions().iter().enumerate() {
            assert_eq!(a.index, i);
            let m = a.mapping;
            assert!(m.case_col < m.activity_col && m.activity_col < m.resource_col);
            assert!(seen.insert((a.grid_index, m.case_col, m.activity_col, m.resource_col)));
        }
    }

    #[test]
    fn permutation_space() {
        let space = ActionSpace::new(5, vec![0.5], RoleAssignment::Permutations).unwrap();
        assert_eq!(space.len(), 5 * 4 * 3);
        for a in space.actions() {
            assert_eq!(space.index_of(a.grid_index, &a.mapping), Some(a.index));
        }
    }

    #[test]
    fn space_errors() {
        assert!(build_action_space(2, &[0.5]).is_err());
        assert!(build_action_space(4, &[]).is_err());
        assert!(build_action_space(4, &[0.5, 0.2]).is_err());
        assert!(build_action_space(4, &[0.5, 1.5]).is_err());
    }

    #[test]
    fn initial_state_is_zero() {
        let s = initial_state(16);
        assert!(s.tensor().data.iter().all(|&v| v == 0.0));
        assert_eq!(s, initial_state(16));
        let m = discover_model(&s.depmat, 0.01, None).unwrap();
        assert!(m.edges.is_empty());
    }

    #[test]
    fn encode_places_values() {
        let mut values = Square::zeros(5);
        values.set(2, 3, 0.571);
        let dep = DependencyMatrix {
            alphabet: (0..5).map(|i| i.to_string()).collect(),
            values,
        };
        let t = encode_state(&dep, &DirectlyFollowsMatrix::empty(), 128);
        assert_eq!(t.get(2, 3, 0), 0.571);
        assert_eq!(t.get(100, 100, 0), 0.0);
        assert_eq!(t.data.len(), 128 * 128 * 3);
    }

    #[test]
    fn encode_normalizes_counts() {
        let log = EventLog::from_sequences(&[vec!["A", "B", "C", "A"], vec!["A", "C"]]);
        let df = directly_follows_counts(&log);
        let t = encode_state(&dependency_matrix(&df), &df, 8);
        for r in 0..3 {
            let s: f64 = (0..8).map(|c| t.get(r, c, 1)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_truncates_to_most_frequent() {
        let log = EventLog::from_sequences(&[vec!["A", "B", "B", "C", "C", "C"]]);
        let df = directly_follows_counts(&log);
        let dep = dependency_matrix(&df);
        let t = encode_state(&dep, &df, 2);
        // keeps B and C in alphabet order
        assert_eq!(t.get(0, 1, 0), dep.get(1, 2));
    }

    #[test]
    fn reward_modes() {
        let mut values = Square::zeros(2);
        values.set(0, 1, 0.5);
        values.set(1, 0, -0.5);
        let dep = DependencyMatrix {
            alphabet: vec!["a".into(), "b".into()],
            values,
        };
        let std = 0.125f64.sqrt();
        assert!((compute_reward(0.8, &dep, RewardMode::FitnessPlusStd) - (0.8 + std)).abs() < 1e-15);
        assert!((compute_reward(0.8, &dep, RewardMode::MatrixMeanPlusStd) - std).abs() < 1e-15);
        assert_eq!(compute_reward(0.8, &dep, RewardMode::FitnessOnly), 0.8);
        let zero = DependencyMatrix::zeros(vec!["a".into()]);
        for mode in [RewardMode::FitnessOnly, RewardMode::FitnessPlusStd, RewardMode::MatrixMeanPlusStd] {
            assert_eq!(compute_reward(0.0, &zero, mode), 0.0);
        }
        assert!("bogus".parse::<RewardMode>().is_err());
    }

    #[test]
    fn step_on_planted_mapping() {
        let synth = generate_synthetic_table(&SynthSpec::sequence(20, &["A", "B", "C", "D"]), 5).unwrap();
        let space = build_action_space(synth.table.n_columns(), &[0.5, 1.0]).unwrap();
        let cfg = EnvConfig::default();

        let a = &space.actions()[space.index_of(0, &synth.planted).unwrap()];
        let out = env_step(&synth.table, a, &cfg).unwrap();
        assert_eq!(out.fitness, 1.0);
        assert!(out.success);

        let a = &space.actions()[space.index_of(1, &synth.planted).unwrap()];
        let out = env_step(&synth.table, a, &cfg).unwrap();
        assert_eq!(out.fitness, 0.0);
        assert!(!out.success);
    }

    #[test]
    fn step_rejects_bad_mapping() {
        let synth = generate_synthetic_table(&SynthSpec::sequence(3, &["A", "B"]), 5).unwrap();
        let action = Action {
            index: 0,
            grid_index: 0,
            threshold: 0.5,
            mapping: ColumnMapping::new(1, 1, 2),
        };
        assert!(matches!(
            env_step(&synth.table, &action, &EnvConfig::default()),
            Err(Error::Mapping(_))
        ));
    }

    #[test]
    fn success_is_strict() {
        // 7 of 10 pairs covered: fitness exactly 0.7 is a failure.
        let mut seqs = vec![vec!["A", "B"]; 7];
        seqs.extend(vec![vec!["B", "A"]; 3]);
        let rows: Vec<Vec<String>> = seqs
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                s.iter()
                    .map(move |a| vec![format!("c{i}"), a.to_string(), "r".to_string()])
            })
            .collect();
        let table = EventTable::new(vec!["c".into(), "a".into(), "r".into()], rows).unwrap();
        let space = build_action_space(3, &[0.3]).unwrap();
        let out = env_step(&table, &space.actions()[0], &EnvConfig::default()).unwrap();
        assert!((out.fitness - 0.7).abs() < 1e-15);
        assert_eq!(out.fitness, 0.7);
        assert!(!out.success);
    }
}
