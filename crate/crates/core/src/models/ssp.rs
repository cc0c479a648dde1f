use nalgebra::{DMatrix, DVector};

use super::{MdpData, SspModel, ROW_SUM_TOL};
use crate::enumerate::PolicySpace;
use crate::error::{DpError, Result};
use crate::properties::PropertyReport;
use crate::value::WeightVector;

const MAX_LISTED_IMPROPER: usize = 50;

/// First state (if any) that cannot reach `dest` along positive-probability
/// edges of the policy's transition graph.
fn unreachable_state(data: &MdpData, controls: &[usize], dest: usize) -> Option<usize> {
    let n = data.num_states();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (x, &i) in controls.iter().enumerate() {
        for b in data.branches(x, i) {
            if b.prob > 0.0 {
                preds[b.to].push(x);
            }
        }
    }
    let mut reached = vec![false; n];
    reached[dest] = true;
    let mut stack = vec![dest];
    while let Some(y) = stack.pop() {
        for &x in &preds[y] {
            if !reached[x] {
                reached[x] = true;
                stack.push(x);
            }
        }
    }
    reached.iter().position(|r| !r)
}

/// Checks the destination is absorbing and cost-free, and that every
/// deterministic policy reaches it with probability one from every state.
pub fn validate_ssp(model: &SspModel, cap: u128) -> Result<PropertyReport> {
    let data = model.data();
    let dest = model.destination();
    let space = PolicySpace::of(model);
    space.ensure_within(cap)?;
    let mut report = PropertyReport::default();
    for (i, row) in (0..data.controls(dest).len()).map(|i| (i, data.branches(dest, i))) {
        let stay: f64 = row.iter().filter(|b| b.to == dest).map(|b| b.prob).sum();
        if (stay - 1.0).abs() > ROW_SUM_TOL {
            report.violate(Some(dest), format!("destination control {i} leaves the destination"), stay);
        }
        if row.iter().any(|b| b.prob > 0.0 && b.cost != 0.0) {
            report.violate(Some(dest), format!("destination control {i} has nonzero cost"), 0.0);
        }
    }
    let mut improper = 0usize;
    for idx in space.iter() {
        report.samples_checked += 1;
        if let Some(x) = unreachable_state(data, &idx, dest) {
            improper += 1;
            if improper <= MAX_LISTED_IMPROPER {
                report.violate(Some(x), format!("improper policy {idx:?}"), 0.0);
            }
        }
    }
    if improper > MAX_LISTED_IMPROPER {
        report.note(format!("{improper} improper policies, first {MAX_LISTED_IMPROPER} listed"));
    }
    Ok(report)
}

/// Expected stages to reach the destination under one proper policy.
fn first_passage_times(data: &MdpData, controls: &[usize], dest: usize) -> Result<Vec<f64>> {
    let n = data.num_states();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::from_element(n, 1.0);
    b[dest] = 0.0;
    for (x, &i) in controls.iter().enumerate() {
        if x == dest {
            continue;
        }
        for br in data.branches(x, i) {
            if br.to != dest {
                a[(x, br.to)] -= br.prob;
            }
        }
    }
    let t = a.lu().solve(&b).ok_or(DpError::Singular)?;
    Ok(t.iter().copied().collect())
}

/// Weights `v(x) = max_mu E[stages to destination | x, mu]` (1 on the
/// destination) and modulus `max_x (v(x) - 1) / v(x)`.
pub fn ssp_weights(model: &SspModel, cap: u128) -> Result<(WeightVector, f64)> {
    let data = model.data();
    let dest = model.destination();
    let space = PolicySpace::of(model);
    space.ensure_within(cap)?;
    let n = data.num_states();
    let mut v = vec![0.0f64; n];
    for idx in space.iter() {
        if let Some(state) = unreachable_state(data, &idx, dest) {
            return Err(DpError::ImproperPolicy { policy: idx, state });
        }
        let t = first_passage_times(data, &idx, dest)?;
        for (vx, tx) in v.iter_mut().zip(t) {
            *vx = vx.max(tx);
        }
    }
    v[dest] = 1.0;
    let modulus = v
        .iter()
        .enumerate()
        .filter(|&(x, _)| x != dest)
        .map(|(_, &w)| (w - 1.0) / w)
        .fold(0.0, f64::max);
    Ok((WeightVector::new(v)?, modulus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlTuple;
    use crate::models::Branch;

    fn two_state(stay: f64) -> SspModel {
        let u = vec![ControlTuple::new(vec![0])];
        let data = MdpData::new(
            1,
            vec![u.clone(), u],
            vec![
                vec![vec![Branch::new(0, stay, 1.0), Branch::new(1, 1.0 - stay, 1.0)]],
                vec![vec![Branch::new(1, 1.0, 0.0)]],
            ],
        )
        .unwrap();
        SspModel::new(data, 1).unwrap()
    }

    #[test]
    fn one_step_hit() {
        let (v, a) = ssp_weights(&two_state(0.0), 100).unwrap();
        assert!((v.as_slice()[0] - 1.0).abs() < 1e-12);
        assert_eq!(v.as_slice()[1], 1.0);
        assert!(a.abs() < 1e-12);
    }

    #[test]
    fn geometric_first_passage() {
        let (v, a) = ssp_weights(&two_state(0.5), 100).unwrap();
        assert!((v.as_slice()[0] - 2.0).abs() < 1e-12);
        assert!((a - 0.5).abs() < 1e-12);
    }

    #[test]
    fn chain_to_destination_is_proper() {
        assert!(validate_ssp(&two_state(0.3), 100).unwrap().passed());
    }

    #[test]
    fn cost_free_self_loop_is_improper() {
        let us = vec![ControlTuple::new(vec![0]), ControlTuple::new(vec![1])];
        let data = MdpData::new(
            1,
            vec![us, vec![ControlTuple::new(vec![0])]],
            vec![
                vec![vec![Branch::new(1, 1.0, 1.0)], vec![Branch::new(0, 1.0, 0.0)]],
                vec![vec![Branch::new(1, 1.0, 0.0)]],
            ],
        )
        .unwrap();
        let m = SspModel::new(data, 1).unwrap();
        let r = validate_ssp(&m, 100).unwrap();
        assert_eq!(r.violations.len(), 1);
        assert!(r.violations[0].subject.contains("[1, 0]"));
        assert!(matches!(ssp_weights(&m, 100), Err(DpError::ImproperPolicy { state: 0, .. })));
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            validate_ssp(&two_state(0.5), 0),
            Err(DpError::PolicyCapExceeded { count: 1, cap: 0 })
        ));
    }
}
