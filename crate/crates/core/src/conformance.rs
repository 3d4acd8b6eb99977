//! Replay fitness of an event log against a dependency graph.
//!
//! Fitness is directly-follows coverage: the share of adjacent event pairs in
//! the log that the model has an edge for. It is not token-based Petri-net
//! replay.

use std::io::Write;
use std::path::Path;

use crate::discovery::ProcessModel;
use crate::error::{Error, Result};
use crate::eventlog::{EventLog, Trace};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFitness {
    pub case_id: String,
    pub fitness: f64,
    pub matched: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessReport {
    pub log_fitness: f64,
    pub per_trace: Vec<TraceFitness>,
    /// Set when the log has no traces and fitness is 1 by convention.
    pub empty_log: bool,
}

impl FitnessReport {
    pub fn matched_pairs(&self) -> usize {
        self.per_trace.iter().map(|t| t.matched).sum()
    }

    pub fn total_pairs(&self) -> usize {
        self.per_trace.iter().map(|t| t.total).sum()
    }

    /// Writes `case_id,trace_fitness,matched,total` rows.
    pub fn write_delimited<W: Write>(&self, out: &mut W, delimiter: char) -> std::io::Result<()> {
        writeln!(out, "case_id{d}trace_fitness{d}matched{d}total", d = delimiter)?;
        for t in &self.per_trace {
            writeln!(
                out,
                "{}{d}{:.6}{d}{}{d}{}",
                t.case_id,
                t.fitness,
                t.matched,
                t.total,
                d = delimiter
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_delimited(&mut buf, ',').map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

fn replay_pairs(trace: &Trace, model: &ProcessModel) -> (usize, usize) {
    let mut matched = 0;
    let mut prev: Option<Option<usize>> = None;
    for activity in trace.activities() {
        let cur = model.index_of(activity);
        if let Some(p) = prev {
            if let (Some(s), Some(t)) = (p, cur) {
                if model.has_edge(s, t) {
                    matched += 1;
                }
            }
        }
        prev = Some(cur);
    }
    (matched, trace.len().saturating_sub(1))
}

pub fn trace_fitness(trace: &Trace, model: &ProcessModel) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let (matched, total) = replay_pairs(trace, model);
    Ok(if total == 0 {
        1.0
    } else {
        matched as f64 / total as f64
    })
}

/// Pair-weighted fitness over all traces. Logs without any adjacent pair
/// score 1.
pub fn log_fitness(log: &EventLog, model: &ProcessModel) -> FitnessReport {
    let per_trace: Vec<TraceFitness> = log
        .traces
        .iter()
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (matched, total) = replay_pairs(t, model);
            TraceFitness {
                case_id: t.case_id.clone(),
                fitness: if total == 0 {
                    1.0
                } else {
                    matched as f64 / total as f64
                },
                matched,
                total,
            }
        })
        .collect();
    let matched: usize = per_trace.iter().map(|t| t.matched).sum();
    let total: usize = per_trace.iter().map(|t| t.total).sum();
    FitnessReport {
        log_fitness: if total == 0 {
            1.0
        } else {
            matched as f64 / total as f64
        },
        empty_log: per_trace.is_empty(),
        per_trace,
    }
}
