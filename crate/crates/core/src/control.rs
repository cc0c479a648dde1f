use std::fmt;

use serde::{Deserialize, Serialize};

/// A joint control `(u_1, ..., u_m)`, one small integer code per agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlTuple(pub Vec<u32>);

impl ControlTuple {
    pub fn new(components: Vec<u32>) -> Self {
        ControlTuple(components)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn component(&self, agent: usize) -> u32 {
        self.0[agent]
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    /// Copy of `self` with slot `agent` replaced by `value`.
    pub fn with_component(&self, agent: usize, value: u32) -> Self {
        let mut out = self.clone();
        out.0[agent] = value;
        out
    }

    /// True when `self` and `other` agree on every slot except possibly `agent`.
    pub fn agrees_except(&self, other: &ControlTuple, agent: usize) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .enumerate()
                .all(|(slot, (a, b))| slot == agent || a == b)
    }
}

impl From<Vec<u32>> for ControlTuple {
    fn from(v: Vec<u32>) -> Self {
        ControlTuple(v)
    }
}

impl fmt::Display for ControlTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Stationary policy: one feasible control tuple per state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(pub Vec<ControlTuple>);

impl Policy {
    pub fn new(controls: Vec<ControlTuple>) -> Self {
        Policy(controls)
    }

    pub fn num_states(&self) -> usize {
        self.0.len()
    }

    pub fn at(&self, x: usize) -> &ControlTuple {
        &self.0[x]
    }

    pub fn set(&mut self, x: usize, u: ControlTuple) {
        self.0[x] = u;
    }

    pub fn controls(&self) -> &[ControlTuple] {
        &self.0
    }
}
