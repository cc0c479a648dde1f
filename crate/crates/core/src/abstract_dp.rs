//! The abstract DP interface consumed by every solver.
//!
//! A model supplies a finite state set, a finite list of feasible control
//! tuples per state and the one-stage mapping `H(x, u, J)`. The operators
//! `T_mu` and `T` are built on top of `H` and nothing else, so any monotone
//! contraction model plugs in. Controls are addressed internally by their
//! position in [`DpModel::controls`].

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};

use crate::control::{ControlTuple, Policy};
use crate::error::{DpError, Result};
use crate::value::{ValueFunction, WeightVector};

/// Absolute tolerance for minimum and equality comparisons.
pub const TIE_TOL: f64 = 1e-12;

/// Default convergence tolerance for solver runs.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Linear form of a policy's fixed-point equation: `matrix · J = rhs`.
pub struct PolicySystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

pub trait DpModel {
    fn num_states(&self) -> usize;

    fn num_agents(&self) -> usize;

    /// Feasible control tuples `U(x)`, in canonical order.
    fn controls(&self, x: usize) -> &[ControlTuple];

    /// `H(x, u, J)` where `u = controls(x)[control]`.
    fn h(&self, x: usize, control: usize, j: &[f64]) -> f64;

    /// Contraction modulus with respect to [`DpModel::weights`].
    fn modulus(&self) -> f64;

    fn weights(&self) -> &WeightVector;

    fn control_index(&self, x: usize, u: &ControlTuple) -> Option<usize> {
        self.controls(x).iter().position(|c| c == u)
    }

    /// `Some(a)` when `H(x, u, J + c·1) = H(x, u, J) + a·c` for every input.
    fn shift_factor(&self) -> Option<f64> {
        None
    }

    /// Direct linear system for `J_mu`, when the model is affine in `J`.
    fn policy_system(&self, _controls: &[usize]) -> Option<PolicySystem> {
        None
    }

    fn eval_h(&self, x: usize, u: &ControlTuple, j: &[f64]) -> Result<f64> {
        let idx = self
            .control_index(x, u)
            .ok_or_else(|| DpError::Infeasible {
                state: x,
                control: u.clone(),
            })?;
        Ok(self.h(x, idx, j))
    }
}

/// Wraps a model and counts every `H` evaluation.
pub struct Metered<'a, M: ?Sized> {
    inner: &'a M,
    evals: Cell<u64>,
}

impl<'a, M: DpModel + ?Sized> Metered<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        Metered {
            inner,
            evals: Cell::new(0),
        }
    }

    pub fn evals(&self) -> u64 {
        self.evals.get()
    }

    pub fn inner(&self) -> &'a M {
        self.inner
    }
}

impl<M: DpModel + ?Sized> DpModel for Metered<'_, M> {
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    fn num_agents(&self) -> usize {
        self.inner.num_agents()
    }

    fn controls(&self, x: usize) -> &[ControlTuple] {
        self.inner.controls(x)
    }

    fn h(&self, x: usize, control: usize, j: &[f64]) -> f64 {
        self.evals.set(self.evals.get() + 1);
        self.inner.h(x, control, j)
    }

    fn modulus(&self) -> f64 {
        self.inner.modulus()
    }

    fn weights(&self) -> &WeightVector {
        self.inner.weights()
    }

    fn control_index(&self, x: usize, u: &ControlTuple) -> Option<usize> {
        self.inner.control_index(x, u)
    }

    fn shift_factor(&self) -> Option<f64> {
        self.inner.shift_factor()
    }

    fn policy_system(&self, controls: &[usize]) -> Option<PolicySystem> {
        self.inner.policy_system(controls)
    }
}

pub(crate) fn check_len<M: DpModel + ?Sized>(model: &M, j: &[f64]) -> Result<()> {
    if j.len() != model.num_states() {
        return Err(DpError::LengthMismatch {
            expected: model.num_states(),
            found: j.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_state<M: DpModel + ?Sized>(model: &M, x: usize) -> Result<()> {
    if x >= model.num_states() {
        return Err(DpError::InvalidArgument(format!(
            "state {x} out of range 0..{}",
            model.num_states()
        )));
    }
    Ok(())
}

/// Resolves a policy to per-state control indices, rejecting infeasible entries.
pub fn policy_indices<M: DpModel + ?Sized>(model: &M, mu: &Policy) -> Result<Vec<usize>> {
    if mu.num_states() != model.num_states() {
        return Err(DpError::LengthMismatch {
            expected: model.num_states(),
            found: mu.num_states(),
        });
    }
    mu.controls()
        .iter()
        .enumerate()
        .map(|(x, u)| {
            model.control_index(x, u).ok_or_else(|| DpError::Infeasible {
                state: x,
                control: u.clone(),
            })
        })
        .collect()
}

pub fn policy_from_indices<M: DpModel + ?Sized>(model: &M, idx: &[usize]) -> Policy {
    Policy::new(
        idx.iter()
            .enumerate()
            .map(|(x, &i)| model.controls(x)[i].clone())
            .collect(),
    )
}

/// The policy applying the first feasible tuple at every state.
pub fn first_feasible_policy<M: DpModel + ?Sized>(model: &M) -> Policy {
    policy_from_indices(model, &vec![0; model.num_states()])
}

/// Picks a minimizer among `(control index, value)` candidates.
///
/// Candidates within [`TIE_TOL`] of the minimum tie. The incumbent wins a
/// tie when it is among the candidates, otherwise the candidate listed first
/// (smallest control index) wins. Returns the chosen candidate's position.
pub(crate) fn select_min(candidates: &[(usize, f64)], incumbent: Option<usize>) -> usize {
    debug_assert!(!candidates.is_empty());
    let best = candidates
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::INFINITY, f64::min);
    if let Some(inc) = incumbent {
        if let Some(pos) = candidates
            .iter()
            .position(|&(i, v)| i == inc && v <= best + TIE_TOL)
        {
            return pos;
        }
    }
    candidates
        .iter()
        .position(|&(_, v)| v <= best + TIE_TOL)
        .expect("nonempty candidate list has a minimizer")
}

pub(crate) fn t_mu_indexed<M: DpModel + ?Sized>(model: &M, idx: &[usize], j: &[f64]) -> Vec<f64> {
    idx.iter()
        .enumerate()
        .map(|(x, &i)| model.h(x, i, j))
        .collect()
}

/// `(T_mu J)(x) = H(x, mu(x), J)`; exactly `n` evaluations of `H`.
pub fn apply_t_mu<M: DpModel + ?Sized>(
    model: &M,
    mu: &Policy,
    j: &ValueFunction,
) -> Result<ValueFunction> {
    check_len(model, j)?;
    let idx = policy_indices(model, mu)?;
    Ok(ValueFunction::new(t_mu_indexed(model, &idx, j)))
}

pub(crate) fn greedy_at<M: DpModel + ?Sized>(model: &M, x: usize, j: &[f64]) -> (usize, f64) {
    let q: Vec<(usize, f64)> = (0..model.controls(x).len())
        .map(|i| (i, model.h(x, i, j)))
        .collect();
    let best = q.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
    let pos = select_min(&q, None);
    (q[pos].0, best)
}

/// Bellman operator: returns `TJ` and the greedy policy.
///
/// The value at each state is the exact minimum over `U(x)`; the policy picks
/// the first control within [`TIE_TOL`] of it. Evaluates `H` exactly
/// `Σ_x |U(x)|` times.
pub fn apply_t<M: DpModel + ?Sized>(model: &M, j: &ValueFunction) -> Result<(ValueFunction, Policy)> {
    check_len(model, j)?;
    let (idx, vals): (Vec<usize>, Vec<f64>) = (0..model.num_states())
        .map(|x| greedy_at(model, x, j))
        .unzip();
    Ok((ValueFunction::new(vals), policy_from_indices(model, &idx)))
}

/// All Q-factors `H(x, u, J)` at `x`, in `controls(x)` order.
pub fn compute_q_factors<M: DpModel + ?Sized>(
    model: &M,
    x: usize,
    j: &ValueFunction,
) -> Result<Vec<(ControlTuple, f64)>> {
    check_state(model, x)?;
    check_len(model, j)?;
    Ok(model
        .controls(x)
        .iter()
        .enumerate()
        .map(|(i, u)| (u.clone(), model.h(x, i, j)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_min_prefers_incumbent_then_first() {
        let c = [(0, 1.0), (1, 0.5), (2, 0.5 + 1e-13), (3, 0.7)];
        assert_eq!(select_min(&c, None), 1);
        assert_eq!(select_min(&c, Some(2)), 2);
        assert_eq!(select_min(&c, Some(3)), 1);
        assert_eq!(select_min(&c, Some(9)), 1);
    }
}
