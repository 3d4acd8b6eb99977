//! Multi-perspective process discovery driven by deep Q-learning.
//!
//! An agent picks a dependency threshold and a (case, activity, resource)
//! column assignment over a raw event table, discovers a dependency graph
//! from the resulting log and is rewarded by how well the graph replays it.

pub mod config;
pub mod conformance;
pub mod discovery;
pub mod dot;
pub mod error;
pub mod eventlog;
pub mod qnet;
pub mod replay;
pub mod rl_env;
pub mod trainer;

pub use config::RunConfig;
pub use conformance::{log_fitness, trace_fitness, FitnessReport, TraceFitness};
pub use discovery::{
    dependency_matrix, directly_follows_counts, discover_model, fuzzy_relative_significance, fuzzy_utility,
    fuzzy_utility_matrix, DependencyMatrix, DirectlyFollowsMatrix, Edge, ProcessModel, Square,
};
pub use dot::{export_dot, parse_dot, parse_mapping};
pub use error::{Error, Result};
pub use eventlog::{
    build_log, generate_synthetic_table, load_table, read_table, ColumnMapping, Event, EventLog, EventTable,
    SynthSpec, SynthStep, SyntheticTable, Trace,
};
pub use qnet::{Architecture, NetworkParams, OptimizerState, Tensor};
pub use replay::{DistortionConfig, DistortionMode, DualReplayBuffer, Experience, PerConfig, PrioritizedBuffer};
pub use rl_env::{
    build_action_space, compute_reward, encode_state, env_step, initial_state, Action, ActionSpace, EnvConfig,
    EnvState, RewardMode, RoleAssignment, StepOutcome,
};
pub use trainer::{train, write_report, EpochMetrics, NetProfile, ReplayStrategy, RunReport, TrainingConfig};
