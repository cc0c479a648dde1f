//! Shared iteration driver and run reporting for the sweep-based solvers.

use serde::Serialize;

use crate::abstract_dp::{policy_from_indices, policy_indices, t_mu_indexed, DpModel, Metered, DEFAULT_EPSILON};
use crate::control::Policy;
use crate::error::{DpError, Result};
use crate::multiagent_vi::{resolve_order, sweep_indexed, InitialConditionMode, SweepTrace};
use crate::optimistic_pi::{EventAction, ProcessorEvent, StatePartitionSchedule};
use crate::value::ValueFunction;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub max_iters: usize,
    /// Target accuracy `‖J - J_mu‖_v <= ε` at termination.
    pub epsilon: f64,
    /// Permutation of `0..m`; `None` is the identity.
    pub agent_order: Option<Vec<usize>>,
    pub initial_condition_mode: InitialConditionMode,
    /// Keep every `(J^k, mu^k)` in the report.
    pub record_history: bool,
    /// Keep every sweep trace in the report.
    pub record_traces: bool,
    /// Allow unchecked starts in asynchronous runs.
    pub force: bool,
    /// Asynchronous variant: evaluation steps only touch the active block.
    pub restrict_eval: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_iters: 10_000,
            epsilon: DEFAULT_EPSILON,
            agent_order: None,
            initial_condition_mode: InitialConditionMode::Validate,
            record_history: false,
            record_traces: false,
            force: false,
            restrict_eval: false,
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(DpError::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    PolicyStableAndConverged,
    MaxIters,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Full Bellman step `J <- T J`.
    Bellman,
    /// Agent-by-agent sweep.
    Improve,
    /// Policy evaluation step `J <- T_mu J`.
    Evaluate,
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationLog {
    pub k: usize,
    /// `‖J^{k+1} - J^k‖_v`
    pub residual: f64,
    pub policy_changed: bool,
    /// Cumulative `H` evaluations after this iteration.
    pub h_evals: u64,
    pub step: StepKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Iterate {
    pub value: ValueFunction,
    pub policy: Option<Policy>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub algorithm: String,
    pub agent_order: Vec<usize>,
    pub initial_shift: f64,
    pub iterations: Vec<IterationLog>,
    pub final_policy: Policy,
    pub final_value: ValueFunction,
    pub stabilization_index: Option<usize>,
    pub termination: Termination,
    pub h_evals: u64,
    /// Evaluations spent on asynchronous termination certificates (not in `h_evals`).
    pub certificate_evals: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniqueness_holds: Option<bool>,
    /// `history[k] = (J^k, mu^k)`, present when requested.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<Iterate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<SweepTrace>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<ProcessorEvent>,
}

impl RunReport {
    pub(crate) fn new(algorithm: &str, agent_order: Vec<usize>, initial_shift: f64) -> Self {
        RunReport {
            algorithm: algorithm.to_string(),
            agent_order,
            initial_shift,
            iterations: Vec::new(),
            final_policy: Policy::new(Vec::new()),
            final_value: ValueFunction::new(Vec::new()),
            stabilization_index: None,
            termination: Termination::MaxIters,
            h_evals: 0,
            certificate_evals: 0,
            uniqueness_holds: None,
            history: Vec::new(),
            traces: Vec::new(),
            events: Vec::new(),
        }
    }

    pub(crate) fn finish(&mut self, value: ValueFunction, policy: Policy, termination: Termination, h_evals: u64) {
        self.final_value = value;
        self.final_policy = policy;
        self.termination = termination;
        self.h_evals = h_evals;
        self.stabilization_index = match termination {
            Termination::PolicyStableAndConverged => Some(
                self.iterations
                    .iter()
                    .rev()
                    .find(|it| it.policy_changed)
                    .map_or(0, |it| it.k + 1),
            ),
            Termination::MaxIters => None,
        };
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::PolicyStableAndConverged
    }

    /// `H` evaluations spent in iteration `k` alone.
    pub fn step_evals(&self, k: usize) -> u64 {
        let prev = if k == 0 { 0 } else { self.iterations[k - 1].h_evals };
        self.iterations[k].h_evals - prev
    }
}

/// Residual threshold that certifies `ε`-accuracy for a modulus-`α` map.
pub fn residual_bound(alpha: f64, epsilon: f64) -> f64 {
    if alpha <= 0.0 {
        f64::INFINITY
    } else {
        epsilon * (1.0 - alpha) / alpha
    }
}

pub(crate) struct Plan<'a> {
    pub algorithm: &'static str,
    /// Membership test for the improvement set `K`.
    pub improve: &'a dyn Fn(usize) -> bool,
    pub partition: Option<&'a StatePartitionSchedule>,
    pub restrict_eval: bool,
    pub horizon: usize,
}

/// Runs improvement/evaluation iterations per `plan`.
///
/// Termination is checked after improvement steps only: every block's most
/// recent improvement must have left the policy unchanged, the largest
/// residual since the oldest of those improvements must be below
/// [`residual_bound`], and with several blocks `‖T_mu J - J‖_v <= ε(1-α)`
/// must hold as well.
pub(crate) fn drive<M: DpModel + ?Sized>(
    model: &M,
    start: ValueFunction,
    shift: f64,
    mu0: &Policy,
    plan: &Plan<'_>,
    opts: &RunOptions,
) -> Result<RunReport> {
    opts.validate()?;
    let n = model.num_states();
    let order = resolve_order(opts.agent_order.as_deref(), model.num_agents())?;
    let meter = Metered::new(model);
    let mut idx = policy_indices(model, mu0)?;
    let mut j = start.into_inner();
    let alpha = model.modulus();
    let bound = residual_bound(alpha, opts.epsilon);
    let w = model.weights();
    let blocks = plan.partition.map_or(1, |p| p.num_blocks());
    let masks: Option<Vec<Vec<bool>>> = plan
        .partition
        .map(|p| (0..blocks).map(|b| p.mask(b, n)).collect());
    let mut last_visit: Vec<Option<(usize, bool)>> = vec![None; blocks];
    let mut improvements = 0usize;
    let mut report = RunReport::new(plan.algorithm, order.clone(), shift);
    let mut termination = Termination::MaxIters;

    if opts.record_history {
        report.history.push(Iterate {
            value: ValueFunction::new(j.clone()),
            policy: Some(policy_from_indices(model, &idx)),
        });
    }

    for k in 0..opts.max_iters.min(plan.horizon) {
        let improving = (plan.improve)(k);
        let (next, changed, step, block) = if improving {
            let block = plan.partition.map_or(0, |p| p.block_for_improvement(improvements));
            improvements += 1;
            let mask = masks.as_ref().map(|m| m[block].as_slice());
            let (next, new_idx, chain, h_evals) = sweep_indexed(&meter, &j, &idx, &order, mask);
            let changed = new_idx != idx;
            if opts.record_traces {
                report.traces.push(SweepTrace {
                    input_value: ValueFunction::new(j.clone()),
                    input_policy: policy_from_indices(model, &idx),
                    chain,
                    output_value: ValueFunction::new(next.clone()),
                    output_policy: policy_from_indices(model, &new_idx),
                    h_evals,
                    states: plan.partition.map(|p| p.block(block).to_vec()),
                });
            }
            if let Some(p) = plan.partition {
                report.events.push(ProcessorEvent {
                    time: k,
                    processor: block,
                    action: EventAction::Improve,
                    states: p.block(block).to_vec(),
                });
            }
            last_visit[block] = Some((k, changed));
            idx = new_idx;
            (next, changed, StepKind::Improve, plan.partition.map(|_| block))
        } else if let (true, Some(p)) = (plan.restrict_eval, plan.partition) {
            let block = k % blocks;
            let mut next = j.clone();
            for &x in p.block(block) {
                next[x] = meter.h(x, idx[x], &j);
            }
            report.events.push(ProcessorEvent {
                time: k,
                processor: block,
                action: EventAction::EvaluateRestricted,
                states: p.block(block).to_vec(),
            });
            (next, false, StepKind::Evaluate, Some(block))
        } else {
            let next = t_mu_indexed(&meter, &idx, &j);
            if let Some(p) = plan.partition {
                for b in 0..blocks {
                    report.events.push(ProcessorEvent {
                        time: k,
                        processor: b,
                        action: EventAction::Evaluate,
                        states: p.block(b).to_vec(),
                    });
                }
            }
            (next, false, StepKind::Evaluate, None)
        };

        let residual = w.dist(&next, &j);
        report.iterations.push(IterationLog {
            k,
            residual,
            policy_changed: changed,
            h_evals: meter.evals(),
            step,
            block,
        });
        j = next;
        if opts.record_history {
            report.history.push(Iterate {
                value: ValueFunction::new(j.clone()),
                policy: Some(policy_from_indices(model, &idx)),
            });
        }

        if improving && last_visit.iter().all(|v| matches!(v, Some((_, false)))) {
            let window_start = last_visit.iter().flatten().map(|&(k0, _)| k0).min().unwrap_or(k);
            let worst = report.iterations[window_start..=k]
                .iter()
                .map(|it| it.residual)
                .fold(0.0, f64::max);
            if worst <= bound {
                let certified = blocks == 1 || {
                    let t = t_mu_indexed(model, &idx, &j);
                    report.certificate_evals += n as u64;
                    w.dist(&t, &j) <= opts.epsilon * (1.0 - alpha)
                };
                if certified {
                    termination = Termination::PolicyStableAndConverged;
                    break;
                }
            }
        }
    }

    let policy = policy_from_indices(model, &idx);
    report.finish(ValueFunction::new(j), policy, termination, meter.evals());
    Ok(report)
}
