//! Multiagent optimistic policy iteration and its asynchronous,
//! state-partitioned variant.
//!
//! Improvement iterations (`k ∈ K`) run an agent-by-agent sweep; all other
//! iterations apply `T_mu` with the current policy. In the asynchronous
//! variant each improvement touches only the block of states owned by the
//! active logical processor, and every other state keeps its value and
//! control bit for bit. Processors interleave on one deterministic timeline.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abstract_dp::DpModel;
use crate::control::Policy;
use crate::error::{DpError, Result};
use crate::multiagent_vi::{prepare_start, InitialConditionMode};
use crate::run::{drive, Plan, RunOptions, RunReport};
use crate::value::ValueFunction;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `K = {0, q, 2q, ...}`
    EveryQ { q: usize },
    /// Explicit sorted iteration set.
    Explicit { iterations: Vec<usize> },
}

/// The improvement set `K`, truncated at `horizon` iterations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub horizon: usize,
}

impl Schedule {
    pub fn every_q(q: usize, horizon: usize) -> Result<Self> {
        if q == 0 {
            return Err(DpError::Schedule("q must be at least 1".into()));
        }
        if horizon == 0 {
            return Err(DpError::Schedule("empty horizon leaves K empty".into()));
        }
        Ok(Schedule {
            kind: ScheduleKind::EveryQ { q },
            horizon,
        })
    }

    pub fn explicit(mut iterations: Vec<usize>, horizon: usize) -> Result<Self> {
        iterations.sort_unstable();
        iterations.dedup();
        iterations.retain(|&k| k < horizon);
        if iterations.is_empty() {
            return Err(DpError::Schedule("K has no element within the horizon".into()));
        }
        Ok(Schedule {
            kind: ScheduleKind::Explicit { iterations },
            horizon,
        })
    }

    pub fn contains(&self, k: usize) -> bool {
        match &self.kind {
            ScheduleKind::EveryQ { q } => k.is_multiple_of(*q),
            ScheduleKind::Explicit { iterations } => iterations.binary_search(&k).is_ok(),
        }
    }

    /// Largest number of iterations from one improvement to the next (counting
    /// from iteration 0 for the first).
    pub fn spacing(&self) -> usize {
        match &self.kind {
            ScheduleKind::EveryQ { q } => *q,
            ScheduleKind::Explicit { iterations } => {
                let mut gap = iterations[0] + 1;
                for w in iterations.windows(2) {
                    gap = gap.max(w[1] - w[0]);
                }
                gap
            }
        }
    }

    pub fn improvements_within_horizon(&self) -> usize {
        (0..self.horizon).filter(|&k| self.contains(k)).count()
    }
}

/// Order in which blocks take improvement turns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    RoundRobin,
    /// Repeating sequence of block indices.
    Sequence(Vec<usize>),
    /// Each cycle of `blocks` turns is a seeded random permutation.
    Shuffled { seed: u64 },
}

/// Partition of the states over logical processors plus the activation rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatePartitionSchedule {
    blocks: Vec<Vec<usize>>,
    activation: Activation,
}

impl StatePartitionSchedule {
    pub fn new(blocks: Vec<Vec<usize>>, num_states: usize, activation: Activation) -> Result<Self> {
        if blocks.is_empty() {
            return Err(DpError::Schedule("partition has no blocks".into()));
        }
        let mut owner = vec![None; num_states];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(DpError::Schedule(format!("block {b} is empty")));
            }
            for &x in block {
                if x >= num_states {
                    return Err(DpError::Schedule(format!("block {b} names unknown state {x}")));
                }
                if let Some(other) = owner[x].replace(b) {
                    return Err(DpError::Schedule(format!("state {x} is in blocks {other} and {b}")));
                }
            }
        }
        if let Some(x) = owner.iter().position(Option::is_none) {
            return Err(DpError::Schedule(format!("state {x} belongs to no block and would never be improved")));
        }
        if let Activation::Sequence(seq) = &activation {
            if let Some(&b) = seq.iter().find(|&&b| b >= blocks.len()) {
                return Err(DpError::Schedule(format!("activation names unknown block {b}")));
            }
            if let Some(b) = (0..blocks.len()).find(|b| !seq.contains(b)) {
                return Err(DpError::Schedule(format!("block {b} is never activated")));
            }
        }
        Ok(StatePartitionSchedule { blocks, activation })
    }

    /// `num_blocks` contiguous blocks of near-equal size, round-robin.
    pub fn contiguous(num_states: usize, num_blocks: usize) -> Result<Self> {
        if num_blocks == 0 || num_blocks > num_states {
            return Err(DpError::Schedule(format!(
                "cannot split {num_states} states into {num_blocks} nonempty blocks"
            )));
        }
        let blocks = (0..num_blocks)
            .map(|b| (b * num_states / num_blocks..(b + 1) * num_states / num_blocks).collect())
            .collect();
        Self::new(blocks, num_states, Activation::RoundRobin)
    }

    /// The whole state space as one block.
    pub fn single(num_states: usize) -> Result<Self> {
        Self::contiguous(num_states, 1)
    }

    pub fn with_activation(self, activation: Activation) -> Result<Self> {
        let n = self.blocks.iter().map(Vec::len).sum();
        Self::new(self.blocks, n, activation)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, b: usize) -> &[usize] {
        &self.blocks[b]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn mask(&self, b: usize, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &x in &self.blocks[b] {
            m[x] = true;
        }
        m
    }

    /// Block that performs the `i`-th improvement step (`i` counts elements of `K`).
    pub fn block_for_improvement(&self, i: usize) -> usize {
        let b = self.blocks.len();
        match &self.activation {
            Activation::RoundRobin => i % b,
            Activation::Sequence(seq) => seq[i % seq.len()],
            Activation::Shuffled { seed } => {
                let cycle = (i / b) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(cycle.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
                let mut perm: Vec<usize> = (0..b).collect();
                perm.shuffle(&mut rng);
                perm[i % b]
            }
        }
    }

    /// Number of consecutive improvement steps guaranteed to visit every block.
    pub fn fairness_window(&self) -> usize {
        let b = self.blocks.len();
        match &self.activation {
            Activation::RoundRobin => b,
            Activation::Shuffled { .. } => 2 * b - 1,
            Activation::Sequence(seq) => {
                let len = seq.len();
                (0..b)
                    .map(|blk| {
                        let pos: Vec<usize> = (0..len).filter(|&i| seq[i] == blk).collect();
                        let mut gap = pos[0] + len - pos[pos.len() - 1];
                        for w in pos.windows(2) {
                            gap = gap.max(w[1] - w[0]);
                        }
                        gap
                    })
                    .max()
                    .unwrap_or(1)
            }
        }
    }

    /// Iteration window in which every state is improved at least once.
    pub fn fairness_window_iterations(&self, schedule: &Schedule) -> usize {
        self.fairness_window() * schedule.spacing()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventAction {
    Improve,
    Evaluate,
    /// Evaluation limited to the processor's block (`restrict_eval` runs).
    EvaluateRestricted,
}

/// One logical-processor action in an asynchronous run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessorEvent {
    pub time: usize,
    pub processor: usize,
    pub action: EventAction,
    pub states: Vec<usize>,
}

/// Writes events as JSON lines.
pub fn write_event_log<W: Write>(events: &[ProcessorEvent], mut out: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Optimistic PI: sweeps at `k ∈ K`, `J <- T_mu J` elsewhere.
pub fn optimistic_pi_run<M: DpModel + ?Sized>(
    model: &M,
    j0: &ValueFunction,
    mu0: &Policy,
    schedule: &Schedule,
    opts: &RunOptions,
) -> Result<RunReport> {
    let (start, shift) = prepare_start(model, j0, mu0, opts.initial_condition_mode)?;
    let improve = |k: usize| schedule.contains(k);
    let plan = Plan {
        algorithm: "opi",
        improve: &improve,
        partition: None,
        restrict_eval: false,
        horizon: schedule.horizon,
    };
    drive(model, start, shift, mu0, &plan, opts)
}

/// Asynchronous optimistic PI over a state partition.
pub fn async_opi_run<M: DpModel + ?Sized>(
    model: &M,
    j0: &ValueFunction,
    mu0: &Policy,
    schedule: &Schedule,
    partition: &StatePartitionSchedule,
    opts: &RunOptions,
) -> Result<RunReport> {
    if opts.initial_condition_mode == InitialConditionMode::Unchecked && !opts.force {
        return Err(DpError::UncheckedAsyncStart);
    }
    let covered: usize = partition.blocks().iter().map(Vec::len).sum();
    if covered != model.num_states() {
        return Err(DpError::Schedule(format!(
            "partition covers {covered} states, model has {}",
            model.num_states()
        )));
    }
    let (start, shift) = prepare_start(model, j0, mu0, opts.initial_condition_mode)?;
    let improve = |k: usize| schedule.contains(k);
    let plan = Plan {
        algorithm: if opts.restrict_eval { "async_opi_restricted_eval" } else { "async_opi" },
        improve: &improve,
        partition: Some(partition),
        restrict_eval: opts.restrict_eval,
        horizon: schedule.horizon,
    };
    drive(model, start, shift, mu0, &plan, opts)
}
