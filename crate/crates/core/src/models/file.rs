use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_model, Branch, DiscountedMdp, MdpData, Problem, ProblemKind, SspModel};
use crate::control::ControlTuple;
use crate::enumerate::DEFAULT_POLICY_CAP;
use crate::error::{DpError, Result};

/// On-disk problem description (JSON).
///
/// `transitions[x][i]` and `costs[x][i]` list `[y, p]` and `[y, g]` pairs for
/// the `i`-th control of state `x`. Missing cost entries are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub kind: ProblemKind,
    pub num_states: usize,
    pub num_agents: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<usize>,
    pub controls: Vec<Vec<Vec<u32>>>,
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
    #[serde(default)]
    pub costs: Vec<Vec<Vec<(usize, f64)>>>,
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    /// Rescale probability rows to sum to one instead of rejecting them.
    pub renormalize: bool,
    pub policy_cap: u128,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            renormalize: false,
            policy_cap: DEFAULT_POLICY_CAP,
        }
    }
}

fn shape_error(msg: String) -> DpError {
    DpError::InvalidArgument(msg)
}

impl ProblemFile {
    fn build_data(&self) -> Result<MdpData> {
        let n = self.num_states;
        if self.controls.len() != n {
            return Err(shape_error(format!(
                "controls: num_states is {n} but {} state entries given",
                self.controls.len()
            )));
        }
        if self.transitions.len() != n {
            return Err(shape_error(format!(
                "transitions: num_states is {n} but {} state entries given",
                self.transitions.len()
            )));
        }
        if !self.costs.is_empty() && self.costs.len() != n {
            return Err(shape_error(format!(
                "costs: num_states is {n} but {} state entries given",
                self.costs.len()
            )));
        }
        let mut branches = Vec::with_capacity(n);
        for x in 0..n {
            let rows = &self.transitions[x];
            if rows.len() != self.controls[x].len() {
                return Err(shape_error(format!(
                    "transitions[{x}]: {} controls but {} rows",
                    self.controls[x].len(),
                    rows.len()
                )));
            }
            let cost_rows = self.costs.get(x);
            if let Some(c) = cost_rows {
                if !c.is_empty() && c.len() != rows.len() {
                    return Err(shape_error(format!(
                        "costs[{x}]: {} controls but {} rows",
                        rows.len(),
                        c.len()
                    )));
                }
            }
            let mut state_rows = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                let costs: HashMap<usize, f64> = cost_rows
                    .and_then(|c| c.get(i))
                    .map(|r| r.iter().copied().collect())
                    .unwrap_or_default();
                state_rows.push(
                    row.iter()
                        .map(|&(y, p)| Branch::new(y, p, costs.get(&y).copied().unwrap_or(0.0)))
                        .collect(),
                );
            }
            branches.push(state_rows);
        }
        let controls = self
            .controls
            .iter()
            .map(|us| us.iter().map(|u| ControlTuple::new(u.clone())).collect())
            .collect();
        MdpData::new(self.num_agents, controls, branches)
    }

    /// Builds and validates the model described by this file.
    pub fn into_problem(self, opts: &LoadOptions) -> Result<Problem> {
        let mut data = self.build_data()?;
        if opts.renormalize {
            data.renormalize();
        }
        let problem = match self.kind {
            ProblemKind::Discounted => {
                let alpha = self
                    .discount
                    .ok_or_else(|| shape_error("discount: required for kind \"discounted\"".into()))?;
                Problem::Discounted(DiscountedMdp::new(data, alpha))
            }
            ProblemKind::Ssp => {
                let dest = self
                    .destination
                    .ok_or_else(|| shape_error("destination: required for kind \"ssp\"".into()))?;
                Problem::Ssp(SspModel::new(data, dest)?)
            }
        };
        let report = validate_model(&problem, opts.policy_cap);
        if !report.passed() {
            return Err(DpError::Validation(Box::new(report)));
        }
        Ok(match problem {
            Problem::Ssp(m) => Problem::Ssp(m.with_derived_weights(opts.policy_cap)?),
            other => other,
        })
    }

    pub fn from_problem(problem: &Problem) -> Self {
        let data = problem.data();
        let n = data.num_states();
        let controls = (0..n)
            .map(|x| data.controls(x).iter().map(|u| u.0.clone()).collect())
            .collect();
        let rows = |f: fn(&Branch) -> (usize, f64)| -> Vec<Vec<Vec<(usize, f64)>>> {
            (0..n)
                .map(|x| {
                    (0..data.controls(x).len())
                        .map(|i| data.branches(x, i).iter().map(f).collect())
                        .collect()
                })
                .collect()
        };
        let (discount, destination) = match problem {
            Problem::Discounted(m) => (Some(m.alpha()), None),
            Problem::Ssp(m) => (None, Some(m.destination())),
        };
        ProblemFile {
            kind: problem.kind(),
            num_states: n,
            num_agents: data.num_agents(),
            discount,
            destination,
            controls,
            transitions: rows(|b| (b.to, b.prob)),
            costs: rows(|b| (b.to, b.cost)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem file serializes")
    }
}

/// Parses and validates a problem from JSON text.
pub fn parse_problem(text: &str, opts: &LoadOptions) -> Result<Problem> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| DpError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.into_problem(opts)
}

pub fn load_problem(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Problem> {
    let text = std::fs::read_to_string(path)?;
    parse_problem(&text, opts)
}
