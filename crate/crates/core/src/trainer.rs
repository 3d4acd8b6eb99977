//! Deep Q-learning over the action space of an event table.
//!
//! One episode is `trials` consecutive environment steps starting from the
//! all-zero state. Experiences go to the configured replay store and, once a
//! full batch can be drawn, every step performs `updates_per_step` Adam
//! updates of the policy network against targets from the target network.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discovery::ProcessModel;
use crate::dot::export_dot;
use crate::error::{Error, Result};
use crate::eventlog::EventTable;
use crate::qnet::{
    adam_step, backward, forward, forward_train, save_checkpoint, sync_target, td_loss_and_grad, td_targets,
    Architecture, NetworkParams, OptimizerState, Tensor, TrainBatch,
};
use crate::replay::{
    distort_batch, sample_dered, sample_prioritized, sample_uniform, DistortionConfig, DistortionMode,
    DualReplayBuffer, Experience, PerConfig, PrioritizedBuffer, RingBuffer,
};
use crate::rl_env::{
    env_step, initial_state, param_grid, Action, ActionSpace, EnvConfig, EnvState, RewardMode, RoleAssignment,
    StepOutcome, STATE_SIDE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplayStrategy {
    Uniform,
    Prioritized,
    #[default]
    Dered,
}

impl FromStr for ReplayStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "prioritized" => Ok(Self::Prioritized),
            "dered" => Ok(Self::Dered),
            _ => Err(Error::UnknownMode {
                kind: "replay strategy",
                value: s.to_owned(),
            }),
        }
    }
}

impl fmt::Display for ReplayStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Prioritized => "prioritized",
            Self::Dered => "dered",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NetProfile {
    #[default]
    Full,
    Reduced,
}

impl NetProfile {
    pub fn default_side(self) -> usize {
        match self {
            Self::Full => STATE_SIDE,
            Self::Reduced => Architecture::reduced(1).input_side,
        }
    }

    pub fn architecture(self, side: usize, n_actions: usize) -> Architecture {
        let mut arch = match self {
            Self::Full => Architecture::full(n_actions),
            Self::Reduced => Architecture::reduced(n_actions),
        };
        arch.input_side = side;
        arch
    }
}

impl FromStr for NetProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "reduced" => Ok(Self::Reduced),
            _ => Err(Error::UnknownMode {
                kind: "network profile",
                value: s.to_owned(),
            }),
        }
    }
}

impl fmt::Display for NetProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Reduced => "reduced",
        })
    }
}

/// When the target network is overwritten with the policy network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SyncCadence {
    #[default]
    PerEpisode,
    EverySteps(u64),
}

impl FromStr for SyncCadence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "episode" {
            return Ok(Self::PerEpisode);
        }
        match s.parse::<u64>() {
            Ok(n) if n > 0 => Ok(Self::EverySteps(n)),
            _ => Err(Error::UnknownMode {
                kind: "sync cadence",
                value: s.to_owned(),
            }),
        }
    }
}

impl fmt::Display for SyncCadence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PerEpisode => f.write_str("episode"),
            Self::EverySteps(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub seed: u64,
    pub epochs: usize,
    pub trials: usize,

    pub grid_start: f64,
    pub grid_stop: f64,
    pub grid_step: f64,
    pub roles: RoleAssignment,
    pub min_fitness: f64,
    pub reward_mode: RewardMode,
    /// State side; `None` follows the network profile.
    pub max_alphabet: Option<usize>,

    pub strategy: ReplayStrategy,
    pub buffer_capacity: usize,
    pub balance: f64,
    pub distortion_lambda: f64,
    pub distortion_mode: DistortionMode,
    pub per: PerConfig,

    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of all environment steps over which epsilon decays.
    pub epsilon_decay_fraction: f64,
    pub batch_size: usize,
    pub updates_per_step: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub sync: SyncCadence,
    /// Treat every step as terminal when computing targets.
    pub terminal: bool,
    /// Recorded with the run; has no effect on training.
    pub pi_tradeoff: f64,
    pub profile: NetProfile,
    /// Number of distinct best models kept in the report.
    pub keep_best: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let per = PerConfig::default();
        Self {
            seed: 0,
            epochs: 100,
            trials: 50,
            grid_start: 0.01,
            grid_stop: 1.0,
            grid_step: 0.01,
            roles: RoleAssignment::Canonical,
            min_fitness: 0.7,
            reward_mode: RewardMode::FitnessPlusStd,
            max_alphabet: None,
            strategy: ReplayStrategy::Dered,
            buffer_capacity: 10_000,
            balance: 0.5,
            distortion_lambda: 0.2,
            distortion_mode: DistortionMode::RatioDraw,
            per,
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.7,
            batch_size: 32,
            updates_per_step: 1,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            sync: SyncCadence::PerEpisode,
            terminal: true,
            pi_tradeoff: 0.5,
            profile: NetProfile::Full,
            keep_best: 5,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |key: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(key, format!("{v} outside [0, 1]")))
            }
        };
        let positive = |key: &str, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(Error::config(key, "must be at least 1"))
            }
        };
        positive("train.epochs", self.epochs)?;
        positive("train.trials", self.trials)?;
        positive("train.batch_size", self.batch_size)?;
        positive("train.updates_per_step", self.updates_per_step)?;
        positive("replay.buffer_capacity", self.buffer_capacity)?;
        unit("env.min_fitness", self.min_fitness)?;
        unit("train.gamma", self.gamma)?;
        unit("train.epsilon_start", self.epsilon_start)?;
        unit("train.epsilon_end", self.epsilon_end)?;
        unit("train.epsilon_decay_fraction", self.epsilon_decay_fraction)?;
        unit("replay.balance", self.balance)?;
        unit("replay.distortion_lambda", self.distortion_lambda)?;
        unit("replay.per_beta_start", self.per.beta_start)?;
        unit("replay.per_beta_end", self.per.beta_end)?;
        if self.per.alpha < 0.0 || !self.per.alpha.is_finite() {
            return Err(Error::config("replay.per_alpha", "must be non-negative"));
        }
        if self.per.epsilon <= 0.0 || !self.per.epsilon.is_finite() {
            return Err(Error::config("replay.per_epsilon", "must be positive"));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        for (key, b) in [("train.beta1", self.beta1), ("train.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(key, format!("{b} outside [0, 1)")));
            }
        }
        if let Some(side) = self.max_alphabet {
            positive("env.max_alphabet", side)?;
        }
        self.grid()?;
        self.architecture(1)
            .shape_chain()
            .map_err(|e| Error::config("env.max_alphabet", e.to_string()))?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        param_grid(self.grid_start, self.grid_stop, self.grid_step)
    }

    pub fn state_side(&self) -> usize {
        self.max_alphabet.unwrap_or_else(|| self.profile.default_side())
    }

    pub fn architecture(&self, n_actions: usize) -> Architecture {
        self.profile.architecture(self.state_side(), n_actions)
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            min_fitness: self.min_fitness,
            reward_mode: self.reward_mode,
            max_alphabet: self.state_side(),
        }
    }

    pub fn distortion(&self) -> Result<DistortionConfig> {
        DistortionConfig::new(self.distortion_lambda, self.distortion_mode)
    }

    pub fn total_steps(&self) -> u64 {
        (self.epochs * self.trials) as u64
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over the first
    /// `epsilon_decay_fraction` of all steps, constant afterwards.
    pub fn epsilon_at(&self, step: u64) -> f64 {
        let decay_steps = self.epsilon_decay_fraction * self.total_steps() as f64;
        if step as f64 >= decay_steps {
            return self.epsilon_end;
        }
        let t = step as f64 / decay_steps;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }

    fn per_beta_at(&self, step: u64) -> f64 {
        let total = self.total_steps().saturating_sub(1).max(1) as f64;
        let t = (step as f64 / total).min(1.0);
        self.per.beta_start + (self.per.beta_end - self.per.beta_start) * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub total_score: f64,
    pub avg_fitness: f64,
    pub count_ge_threshold: usize,
    /// Epsilon at the first trial of the episode.
    pub epsilon: f64,
    /// Mean loss over the episode's updates, 0 when none ran.
    pub mean_loss: f64,
}

pub const METRICS_HEADER: &str = "epoch,total_score,avg_fitness,count_ge_threshold,epsilon,mean_loss";

impl EpochMetrics {
    pub fn from_trials(epoch: usize, rewards: &[f64], fitness: &[f64], min_fitness: f64) -> Self {
        let n = fitness.len().max(1) as f64;
        Self {
            epoch,
            total_score: rewards.iter().sum(),
            avg_fitness: fitness.iter().sum::<f64>() / n,
            count_ge_threshold: fitness.iter().filter(|&&f| f >= min_fitness).count(),
            epsilon: 0.0,
            mean_loss: 0.0,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{},{:.6},{:.6}",
            self.epoch, self.total_score, self.avg_fitness, self.count_ge_threshold, self.epsilon, self.mean_loss
        )
    }
}

#[derive(Debug, Clone)]
pub struct BestModel {
    pub action: Action,
    pub fitness: f64,
    pub reward: f64,
    pub epoch: usize,
    pub trial: usize,
    pub model: ProcessModel,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: TrainingConfig,
    /// Written verbatim as `config.snapshot`.
    pub config_snapshot: String,
    pub metrics: Vec<EpochMetrics>,
    /// Fitness of every trial, one row per epoch.
    pub trial_fitness: Vec<Vec<f64>>,
    /// Action index chosen at every trial, one row per epoch.
    pub trial_actions: Vec<Vec<usize>>,
    /// Distinct actions by fitness descending, ties by earlier discovery.
    pub best: Vec<BestModel>,
    pub wall_clock: Duration,
    pub seed: u64,
    pub policy: NetworkParams,
    pub optimizer: OptimizerState,
}

impl RunReport {
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for m in &self.metrics {
            out.push_str(&m.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Epsilon-greedy choice; ties in the greedy branch go to the lowest index.
pub fn select_action<R: Rng>(q_values: &[f64], epsilon: f64, space: &ActionSpace, rng: &mut R) -> Result<usize> {
    if q_values.len() != space.len() {
        return Err(Error::Shape(format!(
            "{} Q-values for {} actions",
            q_values.len(),
            space.len()
        )));
    }
    select_action_with(epsilon, space.len(), rng, || Ok(q_values.to_vec()))
}

/// As [`select_action`], evaluating `q_values` only on the greedy branch.
pub fn select_action_with<R: Rng>(
    epsilon: f64,
    n_actions: usize,
    rng: &mut R,
    q_values: impl FnOnce() -> Result<Vec<f64>>,
) -> Result<usize> {
    if n_actions == 0 {
        return Err(Error::ActionSpace("no actions".into()));
    }
    if rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..n_actions));
    }
    Ok(argmax(&q_values()?))
}

fn q_values(policy: &NetworkParams, state: &EnvState) -> Result<Vec<f64>> {
    let x = Tensor::stack_states([&state.tensor()])?;
    Ok(forward(policy, &x)?.data)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub enum ReplayStore {
    Uniform(RingBuffer<Experience>),
    Prioritized(PrioritizedBuffer),
    Dered(DualReplayBuffer),
}

impl ReplayStore {
    pub fn new(config: &TrainingConfig) -> Self {
        match config.strategy {
            ReplayStrategy::Uniform => Self::Uniform(RingBuffer::new(config.buffer_capacity)),
            ReplayStrategy::Prioritized => {
                Self::Prioritized(PrioritizedBuffer::new(config.buffer_capacity, config.per))
            }
            ReplayStrategy::Dered => Self::Dered(DualReplayBuffer::new(config.buffer_capacity, config.min_fitness)),
        }
    }

    pub fn store(&mut self, exp: Experience) {
        match self {
            Self::Uniform(b) => b.push(exp),
            Self::Prioritized(b) => b.push(exp),
            Self::Dered(b) => b.store(exp),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Uniform(b) => b.len(),
            Self::Prioritized(b) => b.len(),
            Self::Dered(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Mutable state of one training run.
pub struct Agent {
    pub config: TrainingConfig,
    pub space: ActionSpace,
    pub env: EnvConfig,
    pub policy: NetworkParams,
    pub target: NetworkParams,
    pub optimizer: OptimizerState,
    pub replay: ReplayStore,
    pub rng: ChaCha8Rng,
    pub step: u64,
    distortion: DistortionConfig,
    outcomes: HashMap<usize, StepOutcome>,
}

/// Result of one episode.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub metrics: EpochMetrics,
    pub actions: Vec<usize>,
    pub fitness: Vec<f64>,
    pub rewards: Vec<f64>,
    pub models: Vec<ProcessModel>,
}

impl Agent {
    pub fn new(n_columns: usize, config: &TrainingConfig) -> Result<Self> {
        config.validate()?;
        let space = ActionSpace::new(n_columns, config.grid()?, config.roles)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let arch = config.architecture(space.len());
        let policy = NetworkParams::init(&arch, &mut rng)?;
        let mut target = NetworkParams::zeros(&arch)?;
        sync_target(&policy, &mut target)?;
        let optimizer = OptimizerState::for_params(&policy, config.learning_rate, config.beta1, config.beta2);
        Ok(Self {
            config: config.clone(),
            env: config.env_config(),
            space,
            policy,
            target,
            optimizer,
            replay: ReplayStore::new(config),
            rng,
            step: 0,
            distortion: config.distortion()?,
            outcomes: HashMap::new(),
        })
    }

    fn outcome(&mut self, table: &EventTable, index: usize) -> Result<&StepOutcome> {
        if !self.outcomes.contains_key(&index) {
            let action = self.space.get(index).ok_or(Error::ActionIndex {
                index,
                len: self.space.len(),
            })?;
            let outcome = env_step(table, action, &self.env)?;
            self.outcomes.insert(index, outcome);
        }
        Ok(&self.outcomes[&index])
    }

    fn can_update(&self) -> bool {
        let n = self.config.batch_size;
        match &self.replay {
            ReplayStore::Dered(b) => b.len() >= n,
            other => other.len() >= n,
        }
    }

    /// One optimization step; returns the loss.
    fn update(&mut self) -> Result<f64> {
        let n = self.config.batch_size;
        let (batch, weights, indices) = match &self.replay {
            ReplayStore::Uniform(b) => (sample_uniform(b, n, &mut self.rng)?, None, None),
            ReplayStore::Prioritized(b) => {
                let beta = self.config.per_beta_at(self.step);
                let s = sample_prioritized(b, n, beta, &mut self.rng)?;
                (s.experiences, Some(s.weights), Some(s.indices))
            }
            ReplayStore::Dered(b) => {
                let mut batch = sample_dered(b, n, self.config.balance, &mut self.rng)?;
                distort_batch(&mut batch, &self.distortion, self.space.len(), &mut self.rng);
                (batch, None, None)
            }
        };

        let states: Vec<_> = batch.iter().map(|e| e.state.tensor()).collect();
        let next: Vec<_> = batch.iter().map(|e| e.next_state.tensor()).collect();
        let train = TrainBatch {
            states: Tensor::stack_states(&states)?,
            action_indices: batch.iter().map(|e| e.action_index).collect(),
            rewards: batch.iter().map(|e| e.reward).collect(),
            next_states: Tensor::stack_states(&next)?,
            terminal: vec![self.config.terminal; batch.len()],
        };
        let targets = td_targets(&train, &self.target, self.config.gamma)?;
        let (q, cache) = forward_train(&self.policy, &train.states)?;
        let (loss, dq, errors) = td_loss_and_grad(&q, &train.action_indices, &targets, weights.as_deref())?;
        let grads = backward(&self.policy, &cache, &dq)?;
        adam_step(&mut self.policy, &grads, &mut self.optimizer)?;
        self.policy.update_running_stats(&cache);
        if let (ReplayStore::Prioritized(b), Some(idx)) = (&mut self.replay, indices) {
            b.update_priorities(&idx, &errors);
        }
        Ok(loss)
    }

    /// Runs one episode of `config.trials` steps from the all-zero state.
    pub fn run_episode(&mut self, table: &EventTable, epoch: usize) -> Result<EpisodeResult> {
        let trials = self.config.trials;
        let mut state = Arc::new(initial_state(self.env.max_alphabet));
        let mut actions = Vec::with_capacity(trials);
        let mut fitness = Vec::with_capacity(trials);
        let mut rewards = Vec::with_capacity(trials);
        let mut models = Vec::with_capacity(trials);
        let mut losses = Vec::new();
        let first_epsilon = self.config.epsilon_at(self.step);

        for _ in 0..trials {
            let epsilon = self.config.epsilon_at(self.step);
            let n_actions = self.space.len();
            let policy = &self.policy;
            let index = select_action_with(epsilon, n_actions, &mut self.rng, || q_values(policy, &state))?;

            let outcome = self.outcome(table, index)?.clone();
            self.replay.store(Experience {
                state: Arc::clone(&state),
                action_index: index,
                reward: outcome.reward,
                next_state: Arc::clone(&outcome.next_state),
                fitness: outcome.fitness,
                success: outcome.success,
            });
            actions.push(index);
            fitness.push(outcome.fitness);
            rewards.push(outcome.reward);
            models.push(outcome.model);
            state = outcome.next_state;

            if self.can_update() {
                for _ in 0..self.config.updates_per_step {
                    losses.push(self.update()?);
                }
            }
            self.step += 1;
            if let SyncCadence::EverySteps(n) = self.config.sync {
                if self.step.is_multiple_of(n) {
                    sync_target(&self.policy, &mut self.target)?;
                }
            }
        }
        if self.config.sync == SyncCadence::PerEpisode {
            sync_target(&self.policy, &mut self.target)?;
        }

        let mut metrics = EpochMetrics::from_trials(epoch, &rewards, &fitness, self.config.min_fitness);
        metrics.epsilon = first_epsilon;
        if !losses.is_empty() {
            metrics.mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        }
        Ok(EpisodeResult {
            metrics,
            actions,
            fitness,
            rewards,
            models,
        })
    }
}

/// Trains an agent on `table` for `config.epochs` episodes.
pub fn train(table: &EventTable, config: &TrainingConfig) -> Result<RunReport> {
    let started = Instant::now();
    let mut agent = Agent::new(table.n_columns(), config)?;
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut trial_fitness = Vec::with_capacity(config.epochs);
    let mut trial_actions = Vec::with_capacity(config.epochs);
    let mut best: Vec<BestModel> = Vec::new();

    for epoch in 1..=config.epochs {
        let ep = agent.run_episode(table, epoch)?;
        for (trial, (&index, model)) in ep.actions.iter().zip(&ep.models).enumerate() {
            if best.iter().any(|b| b.action.index == index) {
                continue;
            }
            best.push(BestModel {
                action: agent.space.actions()[index],
                fitness: ep.fitness[trial],
                reward: ep.rewards[trial],
                epoch,
                trial: trial + 1,
                model: model.clone(),
            });
        }
        metrics.push(ep.metrics);
        trial_fitness.push(ep.fitness);
        trial_actions.push(ep.actions);
    }
    // stable sort keeps discovery order among equal fitness
    best.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
    best.truncate(config.keep_best);

    Ok(RunReport {
        config_snapshot: crate::config::render_training(config),
        config: config.clone(),
        metrics,
        trial_fitness,
        trial_actions,
        best,
        wall_clock: started.elapsed(),
        seed: config.seed,
        policy: agent.policy,
        optimizer: agent.optimizer,
    })
}

/// Writes `config.snapshot`, `metrics.csv`, `checkpoint.bin` and
/// `models/best_<rank>.dot` under `out_dir`.
pub fn write_report(report: &RunReport, out_dir: impl AsRef<Path>) -> Result<()> {
    let out_dir = out_dir.as_ref();
    let models = out_dir.join("models");
    fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;

    let write = |path: &Path, text: &str| -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    };
    write(&out_dir.join("config.snapshot"), &report.config_snapshot)?;
    write(&out_dir.join("metrics.csv"), &report.metrics_csv())?;
    save_checkpoint(&report.policy, &report.optimizer, out_dir.join("checkpoint.bin"))?;
    for (rank, b) in report.best.iter().enumerate() {
        write(&models.join(format!("best_{}.dot", rank + 1)), &export_dot(&b.model))?;
    }
    Ok(())
}
