//! Experience replay: a uniform ring buffer, a prioritized buffer, and the
//! dual success/failure buffer with balanced sampling and action distortion.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rl_env::EnvState;

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Arc<EnvState>,
    pub action_index: usize,
    pub reward: f64,
    pub next_state: Arc<EnvState>,
    pub fitness: f64,
    pub success: bool,
}

/// Bounded FIFO; pushing into a full buffer evicts the oldest element.
#[derive(Debug, Clone)]
pub struct RingBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T> RingBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring buffer capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

/// `n` draws with replacement.
pub fn sample_uniform<T: Clone, R: Rng>(buffer: &RingBuffer<T>, n: usize, rng: &mut R) -> Result<Vec<T>> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    Ok((0..n)
        .map(|_| buffer.items[rng.random_range(0..buffer.len())].clone())
        .collect())
}

/// Successes and failures stored apart.
#[derive(Debug, Clone)]
pub struct DualReplayBuffer {
    pub success: RingBuffer<Experience>,
    pub failure: RingBuffer<Experience>,
    pub min_fitness: f64,
}

impl DualReplayBuffer {
    pub fn new(capacity: usize, min_fitness: f64) -> Self {
        Self {
            success: RingBuffer::new(capacity),
            failure: RingBuffer::new(capacity),
            min_fitness,
        }
    }

    /// Routes by `fitness > min_fitness`; the stored flag is set to match.
    pub fn store(&mut self, mut exp: Experience) {
        exp.success = exp.fitness > self.min_fitness;
        if exp.success {
            self.success.push(exp);
        } else {
            self.failure.push(exp);
        }
    }

    pub fn len(&self) -> usize {
        self.success.len() + self.failure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Balanced sample: `ceil(balance * n)` successes drawn with replacement, the
/// rest failures drawn without replacement when enough exist. An empty side
/// hands its share to the other. Output order is shuffled.
pub fn sample_dered<R: Rng>(
    buffer: &DualReplayBuffer,
    n: usize,
    balance: f64,
    rng: &mut R,
) -> Result<Vec<Experience>> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let (n_success, n_failure) = if buffer.success.is_empty() {
        (0, n)
    } else if buffer.failure.is_empty() {
        (n, 0)
    } else {
        let s = ((balance.clamp(0.0, 1.0) * n as f64).ceil() as usize).min(n);
        (s, n - s)
    };

    let mut out = Vec::with_capacity(n);
    if n_success > 0 {
        out.extend(sample_uniform(&buffer.success, n_success, rng)?);
    }
    if n_failure > 0 {
        if buffer.failure.len() >= n_failure {
            let picks = rand::seq::index::sample(rng, buffer.failure.len(), n_failure);
            out.extend(picks.iter().map(|i| buffer.failure.items[i].clone()));
        } else {
            out.extend(sample_uniform(&buffer.failure, n_failure, rng)?);
        }
    }
    out.shuffle(rng);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistortionMode {
    /// One ratio `r ~ U(0, lambda)` per batch; `floor(r * len)` distinct
    /// experiences are distorted.
    #[default]
    RatioDraw,
    /// Each experience is distorted independently with probability `lambda`.
    PerExperience,
}

impl FromStr for DistortionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio_draw" => Ok(Self::RatioDraw),
            "per_experience" => Ok(Self::PerExperience),
            _ => Err(Error::UnknownMode {
                kind: "distortion mode",
                value: s.into(),
            }),
        }
    }
}

impl fmt::Display for DistortionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RatioDraw => "ratio_draw",
            Self::PerExperience => "per_experience",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionConfig {
    pub lambda: f64,
    pub mode: DistortionMode,
}

impl DistortionConfig {
    pub fn new(lambda: f64, mode: DistortionMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::config(
                "replay.distortion_lambda",
                format!("{lambda} outside [0, 1]"),
            ));
        }
        Ok(Self { lambda, mode })
    }
}

/// Replaces the action of selected experiences with a uniform draw from
/// `0..n_actions`. Returns the distorted positions in ascending order.
pub fn distort_batch<R: Rng>(
    batch: &mut [Experience],
    cfg: &DistortionConfig,
    n_actions: usize,
    rng: &mut R,
) -> Vec<usize> {
    if batch.is_empty() || cfg.lambda == 0.0 || n_actions == 0 {
        return Vec::new();
    }
    match cfg.mode {
        DistortionMode::RatioDraw => {
            let ratio = rng.random::<f64>() * cfg.lambda;
            distort_with_ratio(batch, ratio, n_actions, rng)
        }
        DistortionMode::PerExperience => {
            let mut positions = Vec::new();
            for (i, exp) in batch.iter_mut().enumerate() {
                if rng.random::<f64>() < cfg.lambda {
                    exp.action_index = rng.random_range(0..n_actions);
                    positions.push(i);
                }
            }
            positions
        }
    }
}

/// Distorts exactly `floor(ratio * len)` distinct experiences.
pub fn distort_with_ratio<R: Rng>(
    batch: &mut [Experience],
    ratio: f64,
    n_actions: usize,
    rng: &mut R,
) -> Vec<usize> {
    let count = ((ratio * batch.len() as f64).floor() as usize).min(batch.len());
    let mut positions = rand::seq::index::sample(rng, batch.len(), count).into_vec();
    positions.sort_unstable();
    for &i in &positions {
        batch[i].action_index = rng.random_range(0..n_actions);
    }
    positions
}

/// Binary sum tree over `capacity` leaves.
#[derive(Debug, Clone)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        let leaves = capacity.next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn leaf(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut node = self.leaves + i;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Leaf whose cumulative range contains `mass`.
    fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = self.nodes[2 * node];
            if mass < left || self.nodes[2 * node + 1] <= 0.0 {
                node *= 2;
            } else {
                mass -= left;
                node = 2 * node + 1;
            }
        }
        node - self.leaves
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerConfig {
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub epsilon: f64,
}

impl Default for PerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta_start: 0.4,
            beta_end: 1.0,
            epsilon: 1e-6,
        }
    }
}

/// Proportional prioritized replay.
#[derive(Debug, Clone)]
pub struct PrioritizedBuffer {
    items: Vec<Experience>,
    capacity: usize,
    next: usize,
    tree: SumTree,
    max_priority: f64,
    config: PerConfig,
}

#[derive(Debug, Clone)]
pub struct PrioritizedSample {
    pub experiences: Vec<Experience>,
    pub indices: Vec<usize>,
    /// Importance weights scaled so the largest in the batch is 1.
    pub weights: Vec<f64>,
}

impl PrioritizedBuffer {
    pub fn new(capacity: usize, config: PerConfig) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            items: Vec::new(),
            capacity,
            next: 0,
            tree: SumTree::new(capacity),
            max_priority: 1.0,
            config,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn config(&self) -> &PerConfig {
        &self.config
    }

    /// New experiences get the largest priority seen so far.
    pub fn push(&mut self, exp: Experience) {
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(exp);
        } else {
            self.items[slot] = exp;
        }
        self.next = (self.next + 1) % self.capacity;
        self.tree.set(slot, self.max_priority.powf(self.config.alpha));
    }

    pub fn push_with_priority(&mut self, exp: Experience, td_error: f64) {
        let slot = self.next;
        self.push(exp);
        self.update_priority(slot, td_error);
    }

    pub fn update_priority(&mut self, index: usize, td_error: f64) {
        let p = td_error.abs() + self.config.epsilon;
        self.max_priority = self.max_priority.max(p);
        self.tree.set(index, p.powf(self.config.alpha));
    }

    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) {
        for (&i, &e) in indices.iter().zip(td_errors) {
            self.update_priority(i, e);
        }
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.tree.leaf(index) / self.tree.total()
    }

    pub fn sample<R: Rng>(&self, n: usize, beta: f64, rng: &mut R) -> Result<PrioritizedSample> {
        sample_prioritized(self, n, beta, rng)
    }
}

/// Draws with probability proportional to `(|td| + eps)^alpha`.
pub fn sample_prioritized<R: Rng>(
    buffer: &PrioritizedBuffer,
    n: usize,
    beta: f64,
    rng: &mut R,
) -> Result<PrioritizedSample> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let total = buffer.tree.total();
    let len = buffer.len();
    let mut indices = Vec::with_capacity(n);
    for _ in 0..n {
        let mass = rng.random::<f64>() * total;
        indices.push(buffer.tree.find(mass).min(len - 1));
    }
    let mut weights: Vec<f64> = indices
        .iter()
        .map(|&i| (len as f64 * buffer.probability(i)).powf(-beta))
        .collect();
    let max = weights.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for w in &mut weights {
            *w /= max;
        }
    }
    Ok(PrioritizedSample {
        experiences: indices.iter().map(|&i| buffer.items[i].clone()).collect(),
        indices,
        weights,
    })
}
