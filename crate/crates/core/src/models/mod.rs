//! Concrete tabular models: the discounted MDP and the stochastic shortest
//! path problem, plus validation and the problem-file format.

mod constraint;
mod file;
mod ssp;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::abstract_dp::{DpModel, PolicySystem};
use crate::control::ControlTuple;
use crate::error::{DpError, Result};
use crate::properties::PropertyReport;
use crate::value::{ValueFunction, WeightVector};

pub use constraint::{component_constraint_set, ComponentConstraintSet};
pub(crate) use constraint::component_candidates;
pub use file::{load_problem, parse_problem, LoadOptions, ProblemFile};
pub use ssp::{ssp_weights, validate_ssp};

/// Probability-row tolerance used by validation.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// One outcome of applying a control: next state, probability, stage cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub to: usize,
    pub prob: f64,
    pub cost: f64,
}

impl Branch {
    pub fn new(to: usize, prob: f64, cost: f64) -> Self {
        Branch { to, prob, cost }
    }
}

/// Transition and cost tables shared by both model kinds.
///
/// Construction only checks shape (list lengths, successor range); the
/// stochastic and feasibility checks live in [`validate_model`].
#[derive(Clone, Debug)]
pub struct MdpData {
    num_agents: usize,
    controls: Vec<Vec<ControlTuple>>,
    branches: Vec<Vec<Vec<Branch>>>,
    lookup: Vec<HashMap<ControlTuple, usize>>,
}

impl MdpData {
    pub fn new(
        num_agents: usize,
        controls: Vec<Vec<ControlTuple>>,
        branches: Vec<Vec<Vec<Branch>>>,
    ) -> Result<Self> {
        let n = controls.len();
        if n == 0 {
            return Err(DpError::InvalidArgument("model needs at least one state".into()));
        }
        if num_agents == 0 {
            return Err(DpError::InvalidArgument("model needs at least one agent".into()));
        }
        if branches.len() != n {
            return Err(DpError::InvalidArgument(format!(
                "transitions: expected {n} states, found {}",
                branches.len()
            )));
        }
        for (x, (us, rows)) in controls.iter().zip(&branches).enumerate() {
            if us.len() != rows.len() {
                return Err(DpError::InvalidArgument(format!(
                    "transitions[{x}]: expected {} control rows, found {}",
                    us.len(),
                    rows.len()
                )));
            }
            for (i, row) in rows.iter().enumerate() {
                if let Some(b) = row.iter().find(|b| b.to >= n) {
                    return Err(DpError::InvalidArgument(format!(
                        "transitions[{x}][{i}]: successor {} out of range 0..{n}",
                        b.to
                    )));
                }
            }
        }
        let lookup = controls
            .iter()
            .map(|us| {
                let mut m = HashMap::with_capacity(us.len());
                for (i, u) in us.iter().enumerate() {
                    m.entry(u.clone()).or_insert(i);
                }
                m
            })
            .collect();
        Ok(MdpData {
            num_agents,
            controls,
            branches,
            lookup,
        })
    }

    pub fn num_states(&self) -> usize {
        self.controls.len()
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn controls(&self, x: usize) -> &[ControlTuple] {
        &self.controls[x]
    }

    pub fn branches(&self, x: usize, control: usize) -> &[Branch] {
        &self.branches[x][control]
    }

    pub fn control_index(&self, x: usize, u: &ControlTuple) -> Option<usize> {
        self.lookup[x].get(u).copied()
    }

    /// Expected one-stage cost `Σ_y p_xy(u) g(x,u,y)`.
    pub fn expected_cost(&self, x: usize, control: usize) -> f64 {
        self.branches[x][control]
            .iter()
            .map(|b| b.prob * b.cost)
            .sum()
    }

    /// Largest expected one-stage cost over all state-control pairs.
    pub fn max_expected_cost(&self) -> f64 {
        (0..self.num_states())
            .flat_map(|x| (0..self.controls[x].len()).map(move |i| (x, i)))
            .map(|(x, i)| self.expected_cost(x, i))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn renormalize(&mut self) {
        for rows in &mut self.branches {
            for row in rows {
                let total: f64 = row.iter().map(|b| b.prob).sum();
                if total > 0.0 {
                    for b in row.iter_mut() {
                        b.prob /= total;
                    }
                }
            }
        }
    }

    fn validate_into(&self, report: &mut PropertyReport) {
        for x in 0..self.num_states() {
            let us = &self.controls[x];
            if us.is_empty() {
                report.violate(Some(x), "empty feasible control set U(x)", 0.0);
            }
            if self.lookup[x].len() != us.len() {
                report.violate(Some(x), "duplicate control tuple in U(x)", us.len() as f64);
            }
            for (i, u) in us.iter().enumerate() {
                report.samples_checked += 1;
                if u.len() != self.num_agents {
                    report.violate(
                        Some(x),
                        format!(
                            "control {i} {u} has {} components, expected {}",
                            u.len(),
                            self.num_agents
                        ),
                        u.len() as f64,
                    );
                }
                let row = &self.branches[x][i];
                if let Some(b) = row.iter().find(|b| b.prob < 0.0 || !b.prob.is_finite()) {
                    report.violate(
                        Some(x),
                        format!("control {i}: invalid probability toward state {}", b.to),
                        b.prob,
                    );
                }
                if let Some(b) = row.iter().find(|b| !b.cost.is_finite()) {
                    report.violate(
                        Some(x),
                        format!("control {i}: non-finite cost toward state {}", b.to),
                        b.cost,
                    );
                }
                let total: f64 = row.iter().map(|b| b.prob).sum();
                if (total - 1.0).abs() > ROW_SUM_TOL {
                    report.violate(
                        Some(x),
                        format!("control {i}: probability row sums to {total}"),
                        total,
                    );
                }
            }
        }
    }

    fn transition_value(&self, x: usize, control: usize, j: &[f64], scale: f64, skip: Option<usize>) -> f64 {
        self.branches[x][control]
            .iter()
            .map(|b| {
                let cont = if Some(b.to) == skip { 0.0 } else { j[b.to] };
                b.prob * (b.cost + scale * cont)
            })
            .sum()
    }

    /// `(I - scale·P_mu) J = g_mu`, with `pinned` states forced to zero.
    fn linear_system(&self, controls: &[usize], scale: f64, pinned: Option<usize>) -> PolicySystem {
        let n = self.num_states();
        let mut matrix = DMatrix::<f64>::identity(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for (x, &i) in controls.iter().enumerate() {
            if Some(x) == pinned {
                continue;
            }
            rhs[x] = self.expected_cost(x, i);
            for b in &self.branches[x][i] {
                if Some(b.to) != pinned {
                    matrix[(x, b.to)] -= scale * b.prob;
                }
            }
        }
        PolicySystem { matrix, rhs }
    }
}

/// α-discounted MDP: `H(x,u,J) = Σ_y p_xy(u) (g(x,u,y) + α J(y))`.
#[derive(Clone, Debug)]
pub struct DiscountedMdp {
    data: MdpData,
    alpha: f64,
    weights: WeightVector,
}

impl DiscountedMdp {
    pub fn new(data: MdpData, alpha: f64) -> Self {
        let weights = WeightVector::ones(data.num_states());
        DiscountedMdp {
            data,
            alpha,
            weights,
        }
    }

    pub fn data(&self) -> &MdpData {
        &self.data
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl DpModel for DiscountedMdp {
    fn num_states(&self) -> usize {
        self.data.num_states()
    }

    fn num_agents(&self) -> usize {
        self.data.num_agents()
    }

    fn controls(&self, x: usize) -> &[ControlTuple] {
        self.data.controls(x)
    }

    fn h(&self, x: usize, control: usize, j: &[f64]) -> f64 {
        self.data.transition_value(x, control, j, self.alpha, None)
    }

    fn modulus(&self) -> f64 {
        self.alpha
    }

    fn weights(&self) -> &WeightVector {
        &self.weights
    }

    fn control_index(&self, x: usize, u: &ControlTuple) -> Option<usize> {
        self.data.control_index(x, u)
    }

    fn shift_factor(&self) -> Option<f64> {
        Some(self.alpha)
    }

    fn policy_system(&self, controls: &[usize]) -> Option<PolicySystem> {
        Some(self.data.linear_system(controls, self.alpha, None))
    }
}

/// Evaluates the discounted-MDP mapping at an explicit control tuple.
pub fn mdp_eval_h(model: &DiscountedMdp, x: usize, u: &ControlTuple, j: &ValueFunction) -> Result<f64> {
    crate::abstract_dp::check_state(model, x)?;
    crate::abstract_dp::check_len(model, j)?;
    model.eval_h(x, u, j)
}

/// Stochastic shortest path problem with an absorbing, cost-free destination.
///
/// The destination's value is pinned at zero: `H` treats `J(destination)` as
/// 0, so `H(destination, u, J) = 0` on a valid model. Weights and modulus
/// start as `(1, 1)` and are replaced by [`SspModel::with_derived_weights`].
#[derive(Clone, Debug)]
pub struct SspModel {
    data: MdpData,
    destination: usize,
    weights: WeightVector,
    modulus: f64,
}

impl SspModel {
    pub fn new(data: MdpData, destination: usize) -> Result<Self> {
        if destination >= data.num_states() {
            return Err(DpError::InvalidArgument(format!(
                "destination {destination} out of range 0..{}",
                data.num_states()
            )));
        }
        let weights = WeightVector::ones(data.num_states());
        Ok(SspModel {
            data,
            destination,
            weights,
            modulus: 1.0,
        })
    }

    /// Computes first-passage weights and the matching modulus.
    pub fn with_derived_weights(mut self, cap: u128) -> Result<Self> {
        let (weights, modulus) = ssp_weights(&self, cap)?;
        self.weights = weights;
        self.modulus = modulus;
        Ok(self)
    }

    pub fn data(&self) -> &MdpData {
        &self.data
    }

    pub fn destination(&self) -> usize {
        self.destination
    }

    /// `J0 = c·v` off the destination (0 on it) with `c = max(0, max expected stage cost)`.
    ///
    /// With derived weights, `v(x) >= 1 + Σ_{y≠d} p_xy(u) v(y)` for every `u`,
    /// so `T_mu J0 <= J0` for every policy.
    pub fn dominating_initial_value(&self) -> ValueFunction {
        let c = self.data.max_expected_cost().max(0.0);
        ValueFunction::new(
            self.weights
                .as_slice()
                .iter()
                .enumerate()
                .map(|(x, w)| if x == self.destination { 0.0 } else { c * w })
                .collect(),
        )
    }
}

impl DpModel for SspModel {
    fn num_states(&self) -> usize {
        self.data.num_states()
    }

    fn num_agents(&self) -> usize {
        self.data.num_agents()
    }

    fn controls(&self, x: usize) -> &[ControlTuple] {
        self.data.controls(x)
    }

    fn h(&self, x: usize, control: usize, j: &[f64]) -> f64 {
        self.data
            .transition_value(x, control, j, 1.0, Some(self.destination))
    }

    fn modulus(&self) -> f64 {
        self.modulus
    }

    fn weights(&self) -> &WeightVector {
        &self.weights
    }

    fn control_index(&self, x: usize, u: &ControlTuple) -> Option<usize> {
        self.data.control_index(x, u)
    }

    fn policy_system(&self, controls: &[usize]) -> Option<PolicySystem> {
        Some(self.data.linear_system(controls, 1.0, Some(self.destination)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Discounted,
    Ssp,
}

/// A loaded problem of either kind.
#[derive(Clone, Debug)]
pub enum Problem {
    Discounted(DiscountedMdp),
    Ssp(SspModel),
}

impl Problem {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Problem::Discounted(_) => ProblemKind::Discounted,
            Problem::Ssp(_) => ProblemKind::Ssp,
        }
    }

    pub fn data(&self) -> &MdpData {
        match self {
            Problem::Discounted(m) => m.data(),
            Problem::Ssp(m) => m.data(),
        }
    }

    pub fn as_model(&self) -> &dyn DpModel {
        match self {
            Problem::Discounted(m) => m,
            Problem::Ssp(m) => m,
        }
    }
}

impl DpModel for Problem {
    fn num_states(&self) -> usize {
        self.as_model().num_states()
    }

    fn num_agents(&self) -> usize {
        self.as_model().num_agents()
    }

    fn controls(&self, x: usize) -> &[ControlTuple] {
        self.data().controls(x)
    }

    fn h(&self, x: usize, control: usize, j: &[f64]) -> f64 {
        match self {
            Problem::Discounted(m) => m.h(x, control, j),
            Problem::Ssp(m) => m.h(x, control, j),
        }
    }

    fn modulus(&self) -> f64 {
        self.as_model().modulus()
    }

    fn weights(&self) -> &WeightVector {
        match self {
            Problem::Discounted(m) => m.weights(),
            Problem::Ssp(m) => m.weights(),
        }
    }

    fn control_index(&self, x: usize, u: &ControlTuple) -> Option<usize> {
        self.data().control_index(x, u)
    }

    fn shift_factor(&self) -> Option<f64> {
        self.as_model().shift_factor()
    }

    fn policy_system(&self, controls: &[usize]) -> Option<PolicySystem> {
        self.as_model().policy_system(controls)
    }
}

/// Structural and stochastic checks; never raises, reports violations instead.
pub fn validate_model(problem: &Problem, cap: u128) -> PropertyReport {
    let mut report = PropertyReport::default();
    problem.data().validate_into(&mut report);
    match problem {
        Problem::Discounted(m) => {
            if !(m.alpha() > 0.0 && m.alpha() < 1.0) {
                report.violate(None, "discount must lie in (0, 1)", m.alpha());
            }
        }
        Problem::Ssp(m) => {
            // Reachability only makes sense once the rows themselves are sound.
            if report.passed() {
                match validate_ssp(m, cap) {
                    Ok(r) => report.merge(r),
                    Err(e) => report.violate(None, e.to_string(), 0.0),
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ct(v: &[u32]) -> ControlTuple {
        ControlTuple::new(v.to_vec())
    }

    fn single_state(prob: f64) -> Problem {
        let data = MdpData::new(1, vec![vec![ct(&[0])]], vec![vec![vec![Branch::new(0, prob, 1.0)]]]).unwrap();
        Problem::Discounted(DiscountedMdp::new(data, 0.5))
    }

    #[test]
    fn eval_examples() {
        // deterministic move 0 -> 1 with cost c = 3, alpha = 0.5, J(1) = 2
        let data = MdpData::new(
            1,
            vec![vec![ct(&[0])], vec![ct(&[0])]],
            vec![
                vec![vec![Branch::new(1, 1.0, 3.0)]],
                vec![vec![Branch::new(1, 1.0, 0.0)]],
            ],
        )
        .unwrap();
        let m = DiscountedMdp::new(data, 0.5);
        let j = ValueFunction::new(vec![0.0, 2.0]);
        assert_eq!(mdp_eval_h(&m, 0, &ct(&[0]), &j).unwrap(), 4.0);
        assert!(matches!(
            mdp_eval_h(&m, 0, &ct(&[1]), &j),
            Err(DpError::Infeasible { state: 0, .. })
        ));
    }

    #[test]
    fn validation_flags_bad_rows_and_empty_sets() {
        assert!(validate_model(&single_state(1.0), 10).passed());
        let r = validate_model(&single_state(0.9), 10);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].state, Some(0));
        assert!(r.violations[0].subject.contains("control 0"));

        let data = MdpData::new(1, vec![vec![]], vec![vec![]]).unwrap();
        let r = validate_model(&Problem::Discounted(DiscountedMdp::new(data, 0.5)), 10);
        assert!(r.violations.iter().any(|v| v.subject.contains("empty")));
    }

    #[test]
    fn validation_flags_tuple_length_and_alpha() {
        let data = MdpData::new(2, vec![vec![ct(&[0])]], vec![vec![vec![Branch::new(0, 1.0, 0.0)]]]).unwrap();
        let r = validate_model(&Problem::Discounted(DiscountedMdp::new(data, 1.0)), 10);
        assert_eq!(r.violations.len(), 2);
    }

    #[test]
    fn constructor_rejects_bad_shape() {
        assert!(MdpData::new(1, vec![vec![ct(&[0])]], vec![vec![vec![Branch::new(3, 1.0, 0.0)]]]).is_err());
        assert!(MdpData::new(1, vec![vec![ct(&[0])]], vec![vec![]]).is_err());
    }
}
