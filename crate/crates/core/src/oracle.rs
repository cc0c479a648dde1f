//! Ground truth by enumeration: exact policy costs, the optimal cost `J*`,
//! and checkers for agent-by-agent optimality and component-wise minima.

use rayon::prelude::*;
use serde::Serialize;

use crate::abstract_dp::{
    apply_t, check_len, check_state, policy_from_indices, policy_indices, select_min, t_mu_indexed, DpModel,
};
use crate::control::{ControlTuple, Policy};
use crate::enumerate::PolicySpace;
use crate::error::{DpError, Result};
use crate::models::component_candidates;
use crate::value::ValueFunction;

/// Tolerance for optimality comparisons and cost-distinctness.
pub const ORACLE_TOL: f64 = 1e-9;

/// Largest accepted fixed-point residual of a computed policy cost.
pub const POLICY_COST_RESIDUAL: f64 = 1e-10;

/// Bound on value-iteration steps for models without a linear system.
const MAX_EVAL_STEPS: usize = 1_000_000;

/// A profitable single-agent deviation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimalityWitness {
    pub state: usize,
    pub agent: usize,
    pub deviating_component: u32,
    /// `H(x, mu(x), J_mu) - H(x, deviated, J_mu)`
    pub improvement: f64,
}

#[derive(Clone, Debug)]
pub struct OracleReport {
    pub optimal_value: ValueFunction,
    /// Sorted by control-index encoding.
    pub optimal_policies: Vec<Policy>,
    /// Sorted by control-index encoding.
    pub aba_optimal_policies: Vec<Policy>,
    /// No two policies have costs within [`ORACLE_TOL`] of each other.
    pub uniqueness_holds: bool,
    pub policy_count: u128,
    /// `‖T J* - J*‖_v`
    pub bellman_residual: f64,
}

#[derive(Serialize)]
struct OracleExport<'a> {
    optimal_value: &'a ValueFunction,
    optimal_policies: Vec<Vec<usize>>,
    aba_optimal_policies: Vec<Vec<usize>>,
    uniqueness_holds: bool,
    policy_count: u128,
    bellman_residual: f64,
}

impl OracleReport {
    /// JSON with each policy written as its per-state control-index list.
    pub fn to_json<M: DpModel + ?Sized>(&self, model: &M) -> Result<String> {
        let encode = |ps: &[Policy]| -> Result<Vec<Vec<usize>>> { ps.iter().map(|p| policy_indices(model, p)).collect() };
        let export = OracleExport {
            optimal_value: &self.optimal_value,
            optimal_policies: encode(&self.optimal_policies)?,
            aba_optimal_policies: encode(&self.aba_optimal_policies)?,
            uniqueness_holds: self.uniqueness_holds,
            policy_count: self.policy_count,
            bellman_residual: self.bellman_residual,
        };
        Ok(serde_json::to_string_pretty(&export).expect("oracle report serializes"))
    }

    pub fn is_optimal(&self, mu: &Policy) -> bool {
        self.optimal_policies.contains(mu)
    }
}

pub(crate) fn policy_cost_indexed<M: DpModel + ?Sized>(model: &M, idx: &[usize]) -> Result<Vec<f64>> {
    let w = model.weights();
    let j = match model.policy_system(idx) {
        Some(sys) => {
            let sol = sys.matrix.lu().solve(&sys.rhs).ok_or(DpError::Singular)?;
            sol.iter().copied().collect()
        }
        None => {
            let alpha = model.modulus();
            let bound = if alpha > 0.0 {
                1e-12 * (1.0 - alpha) / alpha
            } else {
                f64::INFINITY
            };
            let mut j = vec![0.0; model.num_states()];
            let mut steps = 0;
            loop {
                let next = t_mu_indexed(model, idx, &j);
                let r = w.dist(&next, &j);
                j = next;
                steps += 1;
                if r <= bound || steps >= MAX_EVAL_STEPS {
                    break;
                }
            }
            j
        }
    };
    let residual = w.dist(&t_mu_indexed(model, idx, &j), &j);
    if !(residual <= POLICY_COST_RESIDUAL) {
        return Err(DpError::Internal(format!(
            "policy cost fixed-point residual {residual:e} exceeds {POLICY_COST_RESIDUAL:e}"
        )));
    }
    Ok(j)
}

/// `J_mu`, the fixed point of `T_mu`.
pub fn policy_cost<M: DpModel + ?Sized>(model: &M, mu: &Policy) -> Result<ValueFunction> {
    let idx = policy_indices(model, mu)?;
    policy_cost_indexed(model, &idx).map(ValueFunction::new)
}

/// Best single-slot deviation at `(x, agent)` from control `current`, as
/// `(control index, improvement)` when the improvement exceeds the tolerance.
fn best_deviation<M: DpModel + ?Sized>(
    model: &M,
    x: usize,
    agent: usize,
    current: usize,
    j: &[f64],
) -> Option<(usize, f64)> {
    let reference = &model.controls(x)[current];
    let q: Vec<(usize, f64)> = component_candidates(model, x, agent, reference)
        .into_iter()
        .map(|i| (i, model.h(x, i, j)))
        .collect();
    let (best, value) = q[select_min(&q, None)];
    let improvement = model.h(x, current, j) - value;
    (improvement > ORACLE_TOL).then_some((best, improvement))
}

fn witnesses_indexed<M: DpModel + ?Sized>(model: &M, idx: &[usize], j: &[f64]) -> Vec<OptimalityWitness> {
    let mut out = Vec::new();
    for (x, &i) in idx.iter().enumerate() {
        for agent in 0..model.num_agents() {
            if let Some((best, improvement)) = best_deviation(model, x, agent, i, j) {
                out.push(OptimalityWitness {
                    state: x,
                    agent,
                    deviating_component: model.controls(x)[best].component(agent),
                    improvement,
                });
            }
        }
    }
    out
}

/// Checks that no single agent can lower `H(x, ·, J_mu)` at any state by
/// changing only its own component. Returns the best deviation for every
/// violating `(state, agent)` pair.
pub fn is_agent_by_agent_optimal<M: DpModel + ?Sized>(model: &M, mu: &Policy) -> Result<(bool, Vec<OptimalityWitness>)> {
    let idx = policy_indices(model, mu)?;
    let j = policy_cost_indexed(model, &idx)?;
    let w = witnesses_indexed(model, &idx, &j);
    Ok((w.is_empty(), w))
}

/// True iff no single-slot substitution within `U(x)` lowers `H(x, u, J)`.
pub fn is_component_wise_minimum<M: DpModel + ?Sized>(
    model: &M,
    x: usize,
    u: &ControlTuple,
    j: &ValueFunction,
) -> Result<bool> {
    check_state(model, x)?;
    check_len(model, j)?;
    let i = model.control_index(x, u).ok_or_else(|| DpError::Infeasible {
        state: x,
        control: u.clone(),
    })?;
    Ok((0..model.num_agents()).all(|agent| best_deviation(model, x, agent, i, j).is_none()))
}

struct Enumerated {
    idx: Vec<usize>,
    cost: Vec<f64>,
    aba: bool,
}

fn enumerate_all<M: DpModel + Sync + ?Sized>(model: &M, cap: u128) -> Result<(PolicySpace, Vec<Enumerated>)> {
    let space = PolicySpace::of(model);
    space.ensure_within(cap)?;
    let rows = (0..space.count())
        .into_par_iter()
        .map(|rank| {
            let idx = space.indices_of(rank);
            let cost = policy_cost_indexed(model, &idx)?;
            let aba = witnesses_indexed(model, &idx, &cost).is_empty();
            Ok(Enumerated { idx, cost, aba })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((space, rows))
}

fn costs_distinct(rows: &[Enumerated]) -> bool {
    let mut order: Vec<&Enumerated> = rows.iter().collect();
    order.sort_by(|a, b| a.cost[0].total_cmp(&b.cost[0]));
    for (a_pos, a) in order.iter().enumerate() {
        for b in &order[a_pos + 1..] {
            if b.cost[0] - a.cost[0] > ORACLE_TOL {
                break;
            }
            let close = a.cost.iter().zip(&b.cost).all(|(p, q)| (p - q).abs() <= ORACLE_TOL);
            if close {
                return false;
            }
        }
    }
    true
}

/// Enumerates every policy, evaluates it exactly and derives `J*`, the
/// optimal and agent-by-agent optimal sets, and the uniqueness flag.
///
/// Fails if the policy count exceeds `cap` or if `J*` is not a fixed point of
/// `T` within [`ORACLE_TOL`].
pub fn brute_force_optimal<M: DpModel + Sync + ?Sized>(model: &M, cap: u128) -> Result<OracleReport> {
    let (space, rows) = enumerate_all(model, cap)?;
    let n = model.num_states();
    let mut star = vec![f64::INFINITY; n];
    for r in &rows {
        for (s, c) in star.iter_mut().zip(&r.cost) {
            *s = s.min(*c);
        }
    }
    let optimal_policies = rows
        .iter()
        .filter(|r| r.cost.iter().zip(&star).all(|(c, s)| c - s <= ORACLE_TOL))
        .map(|r| policy_from_indices(model, &r.idx))
        .collect();
    let aba_optimal_policies = rows
        .iter()
        .filter(|r| r.aba)
        .map(|r| policy_from_indices(model, &r.idx))
        .collect();
    let optimal_value = ValueFunction::new(star);
    let (t_star, _) = apply_t(model, &optimal_value)?;
    let bellman_residual = model.weights().dist(&t_star, &optimal_value);
    if !(bellman_residual <= ORACLE_TOL) {
        return Err(DpError::Internal(format!(
            "J* fails the Bellman equation: residual {bellman_residual:e}"
        )));
    }
    Ok(OracleReport {
        optimal_value,
        optimal_policies,
        aba_optimal_policies,
        uniqueness_holds: costs_distinct(&rows),
        policy_count: space.count(),
        bellman_residual,
    })
}

/// All agent-by-agent optimal policies, in control-index order.
pub fn enumerate_aba_optimal_policies<M: DpModel + Sync + ?Sized>(model: &M, cap: u128) -> Result<Vec<Policy>> {
    let (_, rows) = enumerate_all(model, cap)?;
    Ok(rows
        .iter()
        .filter(|r| r.aba)
        .map(|r| policy_from_indices(model, &r.idx))
        .collect())
}

/// Exhaustive test of the hypothesis "at every `(x, J_mu)`, each
/// component-wise minimum of `H` is also a minimum over all of `U(x)`".
/// When it holds, agent-by-agent optimal and optimal policies coincide.
pub fn component_minima_are_global<M: DpModel + Sync + ?Sized>(model: &M, cap: u128) -> Result<bool> {
    let (_, rows) = enumerate_all(model, cap)?;
    Ok(rows.par_iter().all(|r| {
        (0..model.num_states()).all(|x| {
            let hs: Vec<f64> = (0..model.controls(x).len()).map(|i| model.h(x, i, &r.cost)).collect();
            let min = hs.iter().copied().fold(f64::INFINITY, f64::min);
            (0..hs.len()).all(|i| {
                let cw_min = (0..model.num_agents()).all(|a| best_deviation(model, x, a, i, &r.cost).is_none());
                !cw_min || hs[i] - min <= ORACLE_TOL
            })
        })
    }))
}
