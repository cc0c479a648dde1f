//! Mixed-radix enumeration of deterministic policies.

use crate::abstract_dp::DpModel;
use crate::error::{DpError, Result};

pub const DEFAULT_POLICY_CAP: u128 = 1_000_000;

/// Environment variable overriding [`DEFAULT_POLICY_CAP`].
pub const POLICY_CAP_ENV: &str = "MAAVI_POLICY_CAP";

pub fn policy_cap_from_env() -> u128 {
    std::env::var(POLICY_CAP_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_POLICY_CAP)
}

/// The set of policies of a model, indexed by rank.
///
/// Rank order is lexicographic in the per-state control-index list, with
/// state 0 most significant.
#[derive(Clone, Debug)]
pub struct PolicySpace {
    radices: Vec<usize>,
    count: u128,
}

impl PolicySpace {
    pub fn of<M: DpModel + ?Sized>(model: &M) -> Self {
        let radices: Vec<usize> = (0..model.num_states())
            .map(|x| model.controls(x).len())
            .collect();
        let count = radices
            .iter()
            .try_fold(1u128, |acc, &r| acc.checked_mul(r as u128))
            .unwrap_or(u128::MAX);
        PolicySpace { radices, count }
    }

    pub fn count(&self) -> u128 {
        self.count
    }

    pub fn ensure_within(&self, cap: u128) -> Result<()> {
        if self.count > cap {
            return Err(DpError::PolicyCapExceeded {
                count: self.count,
                cap,
            });
        }
        Ok(())
    }

    pub fn indices_of(&self, mut rank: u128) -> Vec<usize> {
        let mut out = vec![0; self.radices.len()];
        for (slot, &r) in out.iter_mut().zip(&self.radices).rev() {
            *slot = (rank % r as u128) as usize;
            rank /= r as u128;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.count).map(move |r| self.indices_of(r))
    }
}
