//! Algorithm dispatch and cross-algorithm comparison.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::abstract_dp::{policy_indices, DpModel};
use crate::control::Policy;
use crate::error::{DpError, Result};
use crate::multiagent_vi::{multiagent_vi_run, value_iteration_run};
use crate::optimistic_pi::{async_opi_run, optimistic_pi_run, Schedule, StatePartitionSchedule};
use crate::oracle::{is_agent_by_agent_optimal, OracleReport};
use crate::run::{RunOptions, RunReport};
use crate::value::ValueFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Vi,
    Mavi,
    Opi,
    AsyncOpi,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Vi, Algorithm::Mavi, Algorithm::Opi, Algorithm::AsyncOpi];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Vi => "vi",
            Algorithm::Mavi => "mavi",
            Algorithm::Opi => "opi",
            Algorithm::AsyncOpi => "async_opi",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = DpError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| DpError::InvalidArgument(format!("unknown algorithm {s:?} (expected vi, mavi, opi or async_opi)")))
    }
}

/// Everything a run needs besides the model.
#[derive(Clone, Debug)]
pub struct SolveSettings {
    pub opts: RunOptions,
    /// Improvement period for the optimistic variants.
    pub q: usize,
    /// Explicit improvement iterations; overrides `q`.
    pub schedule: Option<Vec<usize>>,
    /// State partition for `async_opi`.
    pub partition: Option<StatePartitionSchedule>,
}

impl SolveSettings {
    pub fn new(opts: RunOptions) -> Self {
        SolveSettings {
            opts,
            q: 1,
            schedule: None,
            partition: None,
        }
    }

    pub fn improvement_schedule(&self) -> Result<Schedule> {
        match &self.schedule {
            Some(k) => Schedule::explicit(k.clone(), self.opts.max_iters),
            None => Schedule::every_q(self.q, self.opts.max_iters),
        }
    }
}

pub fn run_algorithm<M: DpModel + ?Sized>(
    model: &M,
    algorithm: Algorithm,
    j0: &ValueFunction,
    mu0: &Policy,
    settings: &SolveSettings,
) -> Result<RunReport> {
    let opts = &settings.opts;
    match algorithm {
        Algorithm::Vi => value_iteration_run(model, j0, opts),
        Algorithm::Mavi => multiagent_vi_run(model, j0, mu0, opts),
        Algorithm::Opi => optimistic_pi_run(model, j0, mu0, &settings.improvement_schedule()?, opts),
        Algorithm::AsyncOpi => {
            let single;
            let partition = match &settings.partition {
                Some(p) => p,
                None => {
                    single = StatePartitionSchedule::single(model.num_states())?;
                    &single
                }
            };
            async_opi_run(model, j0, mu0, &settings.improvement_schedule()?, partition, opts)
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub algorithm: String,
    pub iterations: usize,
    pub h_evals: u64,
    pub converged: bool,
    pub aba_optimal: bool,
    pub globally_optimal: Option<bool>,
    /// `‖J_final - J*‖_∞`
    pub gap_to_optimal: Option<f64>,
    pub wall_ms: f64,
    /// Final policy as per-state control indices.
    #[serde(skip)]
    pub policy: Vec<usize>,
}

/// Runs each algorithm from the same start and scores the results.
pub fn compare<M: DpModel + ?Sized>(
    model: &M,
    algorithms: &[Algorithm],
    j0: &ValueFunction,
    mu0: &Policy,
    settings: &SolveSettings,
    oracle: Option<&OracleReport>,
) -> Result<Vec<(ComparisonRow, RunReport)>> {
    algorithms
        .iter()
        .map(|&algo| {
            let start = Instant::now();
            let report = run_algorithm(model, algo, j0, mu0, settings)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let (aba_optimal, _) = is_agent_by_agent_optimal(model, &report.final_policy)?;
            let row = ComparisonRow {
                algorithm: algo.name().to_string(),
                iterations: report.iterations.len(),
                h_evals: report.h_evals,
                converged: report.converged(),
                aba_optimal,
                globally_optimal: oracle.map(|o| o.is_optimal(&report.final_policy)),
                gap_to_optimal: oracle.map(|o| report.final_value.max_abs_diff(&o.optimal_value)),
                wall_ms,
                policy: policy_indices(model, &report.final_policy)?,
            };
            Ok((row, report))
        })
        .collect()
}
