use serde::Serialize;

use crate::abstract_dp::{check_state, DpModel};
use crate::control::ControlTuple;
use crate::error::{DpError, Result};

/// Values agent `agent` may take at `state` with every other slot held at
/// the reference tuple.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComponentConstraintSet {
    pub agent: usize,
    pub state: usize,
    pub admissible: Vec<u32>,
}

/// Control indices at `x` whose tuples differ from `reference` in slot
/// `agent` only, in `controls(x)` order. Includes the reference itself.
pub(crate) fn component_candidates<M: DpModel + ?Sized>(
    model: &M,
    x: usize,
    agent: usize,
    reference: &ControlTuple,
) -> Vec<usize> {
    model
        .controls(x)
        .iter()
        .enumerate()
        .filter(|(_, u)| u.agrees_except(reference, agent))
        .map(|(i, _)| i)
        .collect()
}

/// The admissible set for slot `agent` (zero-based) at `x`, keyed by a
/// feasible reference tuple.
pub fn component_constraint_set<M: DpModel + ?Sized>(
    model: &M,
    x: usize,
    agent: usize,
    reference: &ControlTuple,
) -> Result<ComponentConstraintSet> {
    check_state(model, x)?;
    if agent >= model.num_agents() {
        return Err(DpError::InvalidArgument(format!(
            "agent {agent} out of range 0..{}",
            model.num_agents()
        )));
    }
    if model.control_index(x, reference).is_none() {
        return Err(DpError::Infeasible {
            state: x,
            control: reference.clone(),
        });
    }
    let admissible = component_candidates(model, x, agent, reference)
        .into_iter()
        .map(|i| model.controls(x)[i].component(agent))
        .collect();
    Ok(ComponentConstraintSet {
        agent,
        state: x,
        admissible,
    })
}
