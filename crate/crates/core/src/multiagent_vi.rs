//! Agent-by-agent value iteration.
//!
//! One iteration is a sweep over the agents. At sub-step `ℓ` every state
//! minimizes `H(x, ·, Ĵ_{ℓ-1})` over the values of component `ℓ` that keep
//! the tuple feasible, with components already visited in this sweep taken
//! from their new values and the rest from the incumbent policy. All states
//! read the same snapshot `Ĵ_{ℓ-1}` within a sub-step.

use serde::{Deserialize, Serialize};

use crate::abstract_dp::{
    apply_t, check_len, policy_from_indices, policy_indices, select_min, t_mu_indexed, DpModel,
    TIE_TOL,
};
use crate::control::Policy;
use crate::error::{DpError, Result};
use crate::models::component_candidates;
use crate::properties::PropertyReport;
use crate::run::{drive, residual_bound, Plan, RunOptions, RunReport, Termination};
use crate::value::ValueFunction;

/// How a run treats the condition `T_{mu0} J0 <= J0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialConditionMode {
    /// Reject a start that violates the condition.
    Validate,
    /// Add the smallest constant that enforces it (discounted models only).
    AutoShift,
    /// Run anyway.
    Unchecked,
}

/// Intermediate result of one sub-step of a sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepStep {
    pub agent: usize,
    /// `Ĵ_ℓ`
    pub value: ValueFunction,
    /// `μ̂_ℓ(x)` for every state.
    pub components: Vec<u32>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTrace {
    pub input_value: ValueFunction,
    pub input_policy: Policy,
    /// One entry per agent, in processing order.
    pub chain: Vec<SweepStep>,
    pub output_value: ValueFunction,
    pub output_policy: Policy,
    pub h_evals: u64,
    /// States that were updated; `None` means all of them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<usize>>,
}

pub(crate) fn resolve_order(order: Option<&[usize]>, m: usize) -> Result<Vec<usize>> {
    match order {
        None => Ok((0..m).collect()),
        Some(o) => {
            let mut seen = vec![false; m];
            if o.len() != m {
                return Err(DpError::InvalidArgument(format!(
                    "agent order has {} entries, expected {m}",
                    o.len()
                )));
            }
            for &a in o {
                if a >= m || seen[a] {
                    return Err(DpError::InvalidArgument(format!(
                        "agent order {o:?} is not a permutation of 0..{m}"
                    )));
                }
                seen[a] = true;
            }
            Ok(o.to_vec())
        }
    }
}

/// Sweep over control indices. Only states with `active[x]` are updated.
pub(crate) fn sweep_indexed<M: DpModel + ?Sized>(
    model: &M,
    j: &[f64],
    idx: &[usize],
    order: &[usize],
    active: Option<&[bool]>,
) -> (Vec<f64>, Vec<usize>, Vec<SweepStep>, u64) {
    let n = model.num_states();
    let mut cur = idx.to_vec();
    let mut prev = j.to_vec();
    let mut chain = Vec::with_capacity(order.len());
    let mut evals = 0u64;
    for &agent in order {
        let mut next = prev.clone();
        for x in 0..n {
            if active.is_some_and(|a| !a[x]) {
                continue;
            }
            let reference = &model.controls(x)[cur[x]];
            let q: Vec<(usize, f64)> = component_candidates(model, x, agent, reference)
                .into_iter()
                .map(|i| (i, model.h(x, i, &prev)))
                .collect();
            evals += q.len() as u64;
            let pos = select_min(&q, Some(cur[x]));
            cur[x] = q[pos].0;
            next[x] = q[pos].1;
        }
        chain.push(SweepStep {
            agent,
            value: ValueFunction::new(next.clone()),
            components: (0..n)
                .map(|x| model.controls(x)[cur[x]].component(agent))
                .collect(),
        });
        prev = next;
    }
    (prev, cur, chain, evals)
}

/// One full agent-by-agent sweep from `(J, mu)`.
pub fn agent_sweep<M: DpModel + ?Sized>(
    model: &M,
    j: &ValueFunction,
    mu: &Policy,
    order: Option<&[usize]>,
) -> Result<SweepTrace> {
    check_len(model, j)?;
    let idx = policy_indices(model, mu)?;
    let order = resolve_order(order, model.num_agents())?;
    let (out, cur, chain, h_evals) = sweep_indexed(model, j, &idx, &order, None);
    Ok(SweepTrace {
        input_value: j.clone(),
        input_policy: mu.clone(),
        chain,
        output_value: ValueFunction::new(out),
        output_policy: policy_from_indices(model, &cur),
        h_evals,
        states: None,
    })
}

/// Smallest `c >= 0` with `T_{mu0}(J0 + c·1) <= J0 + c·1`, for models where
/// a constant shift passes through `H` with factor `a < 1`.
pub fn initial_shift<M: DpModel + ?Sized>(model: &M, j0: &ValueFunction, mu0: &Policy) -> Result<f64> {
    let a = match model.shift_factor() {
        Some(a) if a < 1.0 => a,
        _ => {
            return Err(DpError::UnsupportedMode(
                "auto-shift needs a discounted model (constant shifts pass through H with factor < 1)"
                    .into(),
            ))
        }
    };
    check_len(model, j0)?;
    let idx = policy_indices(model, mu0)?;
    let t = t_mu_indexed(model, &idx, j0);
    let worst = t
        .iter()
        .zip(j0.iter())
        .map(|(tv, jv)| tv - jv)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((worst / (1.0 - a)).max(0.0))
}

/// Applies the initial-condition policy and returns the start value plus the
/// constant that was added to it.
pub fn prepare_start<M: DpModel + ?Sized>(
    model: &M,
    j0: &ValueFunction,
    mu0: &Policy,
    mode: InitialConditionMode,
) -> Result<(ValueFunction, f64)> {
    check_len(model, j0)?;
    let idx = policy_indices(model, mu0)?;
    match mode {
        InitialConditionMode::Validate => {
            let t = t_mu_indexed(model, &idx, j0);
            if let Some((state, excess)) = t
                .iter()
                .zip(j0.iter())
                .map(|(tv, jv)| tv - jv)
                .enumerate()
                .find(|&(_, d)| d > TIE_TOL)
            {
                return Err(DpError::InitialCondition { state, excess });
            }
            Ok((j0.clone(), 0.0))
        }
        InitialConditionMode::AutoShift => {
            let c = initial_shift(model, j0, mu0)?;
            Ok((j0.shifted(c), c))
        }
        InitialConditionMode::Unchecked => {
            log::warn!(
                "running without checking T_mu0 J0 <= J0; convergence of asynchronous \
                 policy iteration is not guaranteed without it"
            );
            Ok((j0.clone(), 0.0))
        }
    }
}

pub fn ensure_initial_condition<M: DpModel + ?Sized>(
    model: &M,
    j0: &ValueFunction,
    mu0: &Policy,
    mode: InitialConditionMode,
) -> Result<ValueFunction> {
    prepare_start(model, j0, mu0, mode).map(|(j, _)| j)
}

/// Iterates agent-by-agent sweeps until the policy is stable and the value
/// residual certifies `ε`-accuracy, or `max_iters` is reached.
pub fn multiagent_vi_run<M: DpModel + ?Sized>(
    model: &M,
    j0: &ValueFunction,
    mu0: &Policy,
    opts: &RunOptions,
) -> Result<RunReport> {
    let (start, shift) = prepare_start(model, j0, mu0, opts.initial_condition_mode)?;
    let always = |_k: usize| true;
    let plan = Plan {
        algorithm: "mavi",
        improve: &always,
        partition: None,
        restrict_eval: false,
        horizon: opts.max_iters,
    };
    drive(model, start, shift, mu0, &plan, opts)
}

/// Standard value iteration `J^{k+1} = T J^k` with the greedy policy tracked.
pub fn value_iteration_run<M: DpModel + ?Sized>(
    model: &M,
    j0: &ValueFunction,
    opts: &RunOptions,
) -> Result<RunReport> {
    use crate::abstract_dp::Metered;
    use crate::run::{IterationLog, Iterate, StepKind};

    check_len(model, j0)?;
    let meter = Metered::new(model);
    let bound = residual_bound(model.modulus(), opts.epsilon);
    let w = model.weights();
    let mut j = j0.clone();
    let mut policy: Option<Policy> = None;
    let mut report = RunReport::new("vi", (0..model.num_agents()).collect(), 0.0);
    let mut termination = Termination::MaxIters;
    if opts.record_history {
        report.history.push(Iterate {
            value: j.clone(),
            policy: None,
        });
    }
    for k in 0..opts.max_iters {
        let (next, greedy) = apply_t(&meter, &j)?;
        let changed = policy.as_ref() != Some(&greedy);
        let residual = w.dist(&next, &j);
        report.iterations.push(IterationLog {
            k,
            residual,
            policy_changed: changed,
            h_evals: meter.evals(),
            step: StepKind::Bellman,
            block: None,
        });
        j = next;
        policy = Some(greedy);
        if opts.record_history {
            report.history.push(Iterate {
                value: j.clone(),
                policy: policy.clone(),
            });
        }
        if !changed && residual <= bound {
            termination = Termination::PolicyStableAndConverged;
            break;
        }
    }
    let final_policy = match policy {
        Some(p) => p,
        None => apply_t(model, &j)?.1,
    };
    report.finish(j, final_policy, termination, meter.evals());
    Ok(report)
}

/// Verifies `T_μ̃ J̃ <= J̃ = Ĵ_m <= ... <= Ĵ_1 <= T_μ J <= J` on a sweep trace.
///
/// The link `Ĵ_1 <= T_μ J` is checked on the updated states only; the others
/// on every state. When the trace's input violates `T_μ J <= J` the chain
/// check is skipped and a note is recorded.
pub fn monotone_chain_check<M: DpModel + ?Sized>(trace: &SweepTrace, model: &M) -> Result<PropertyReport> {
    let mut report = PropertyReport::default();
    let j = &trace.input_value;
    check_len(model, j)?;
    let idx_in = policy_indices(model, &trace.input_policy)?;
    let idx_out = policy_indices(model, &trace.output_policy)?;
    let t_in = t_mu_indexed(model, &idx_in, j);
    if let Some(x) = (0..j.len()).find(|&x| t_in[x] > j[x] + TIE_TOL) {
        report.note(format!(
            "precondition T_mu J <= J fails at state {x}; chain check skipped"
        ));
        return Ok(report);
    }
    let n = j.len();
    let active: Vec<bool> = match &trace.states {
        None => vec![true; n],
        Some(s) => {
            let mut a = vec![false; n];
            for &x in s {
                a[x] = true;
            }
            a
        }
    };
    let mut link = |label: &str, lhs: &[f64], rhs: &[f64], mask: Option<&[bool]>| {
        for x in 0..n {
            if mask.is_some_and(|m| !m[x]) {
                continue;
            }
            report.samples_checked += 1;
            if lhs[x] > rhs[x] + TIE_TOL {
                report.violate(Some(x), label.to_string(), lhs[x] - rhs[x]);
            }
        }
    };
    link("T_mu J <= J", &t_in, j, None);
    let mut upper: &[f64] = &t_in;
    for (pos, step) in trace.chain.iter().enumerate() {
        let label = if pos == 0 {
            "J_1 <= T_mu J".to_string()
        } else {
            format!("J_{} <= J_{}", pos + 1, pos)
        };
        let mask = if pos == 0 { Some(active.as_slice()) } else { None };
        link(&label, &step.value, upper, mask);
        upper = &step.value;
    }
    let out = &trace.output_value;
    let t_out = t_mu_indexed(model, &idx_out, out);
    link("T_mu~ J~ <= J~", &t_out, out, None);
    Ok(report)
}
