//! Sampling-based checkers for the monotonicity and contraction assumptions.
//!
//! Both quantify over an infinite function space, so the checkers draw seeded
//! random functions and test every `(x, u)` pair exhaustively against them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::abstract_dp::{policy_indices, t_mu_indexed, DpModel, TIE_TOL};
use crate::control::Policy;
use crate::enumerate::PolicySpace;
use crate::error::{DpError, Result};
use crate::value::ValueFunction;

const SAMPLE_SCALE: f64 = 10.0;

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub state: Option<usize>,
    /// What was being checked (control, policy, function pair, link).
    pub subject: String,
    pub measured: f64,
}

/// Evidence from a property check. Passes exactly when no violation was found.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PropertyReport {
    pub violations: Vec<Violation>,
    pub samples_checked: u64,
    pub notes: Vec<String>,
    /// Largest observed `‖T_mu J - T_mu J'‖ / ‖J - J'‖` (contraction checks only).
    pub worst_ratio: Option<f64>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violate(&mut self, state: Option<usize>, subject: impl Into<String>, measured: f64) {
        self.violations.push(Violation {
            state,
            subject: subject.into(),
            measured,
        });
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }

    pub fn merge(&mut self, other: PropertyReport) {
        self.violations.extend(other.violations);
        self.samples_checked += other.samples_checked;
        self.notes.extend(other.notes);
        self.worst_ratio = match (self.worst_ratio, other.worst_ratio) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }

    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .take(5)
            .map(|v| match v.state {
                Some(x) => format!("state {x}: {} ({})", v.subject, v.measured),
                None => format!("{} ({})", v.subject, v.measured),
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

fn random_function(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.gen_range(-SAMPLE_SCALE..SAMPLE_SCALE))
        .collect()
}

fn random_policy<M: DpModel + ?Sized>(model: &M, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..model.num_states())
        .map(|x| rng.gen_range(0..model.controls(x).len()))
        .collect()
}

fn require_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(DpError::InvalidArgument("trials must be at least 1".into()));
    }
    Ok(())
}

/// Samples `J <= J'` and checks `H(x,u,J) <= H(x,u,J')` at every `(x, u)`.
pub fn check_monotonicity<M: DpModel + ?Sized>(
    model: &M,
    trials: usize,
    seed: u64,
) -> Result<PropertyReport> {
    require_trials(trials)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.num_states();
    let mut report = PropertyReport::default();
    for trial in 0..trials {
        let lo = random_function(&mut rng, n);
        let hi: Vec<f64> = lo
            .iter()
            .map(|v| v + rng.gen_range(0.0..SAMPLE_SCALE / 2.0))
            .collect();
        for x in 0..n {
            for (i, u) in model.controls(x).iter().enumerate() {
                let a = model.h(x, i, &lo);
                let b = model.h(x, i, &hi);
                report.samples_checked += 1;
                if a > b + TIE_TOL {
                    report.violate(
                        Some(x),
                        format!("control {u}, trial {trial}: H(J) > H(J') for J <= J'"),
                        a - b,
                    );
                }
            }
        }
    }
    Ok(report)
}

fn record_pair<M: DpModel + ?Sized>(
    model: &M,
    idx: &[usize],
    j: &[f64],
    j2: &[f64],
    label: &str,
    report: &mut PropertyReport,
) {
    let w = model.weights();
    let gap = w.dist(j, j2);
    if gap == 0.0 {
        report.note(format!("{label}: J = J', ratio undefined, skipped"));
        return;
    }
    let t1 = t_mu_indexed(model, idx, j);
    let t2 = t_mu_indexed(model, idx, j2);
    let lhs = w.dist(&t1, &t2);
    let alpha = model.modulus();
    report.samples_checked += 1;
    let ratio = lhs / gap;
    report.worst_ratio = Some(report.worst_ratio.map_or(ratio, |r| r.max(ratio)));
    if lhs > alpha * gap + TIE_TOL {
        report.violate(
            None,
            format!("{label}: ‖T_mu J - T_mu J'‖ exceeds modulus {alpha} times ‖J - J'‖"),
            ratio,
        );
    }
}

/// Checks the contraction inequality for one policy and one function pair.
pub fn check_contraction_pair<M: DpModel + ?Sized>(
    model: &M,
    mu: &Policy,
    j: &ValueFunction,
    j2: &ValueFunction,
) -> Result<PropertyReport> {
    crate::abstract_dp::check_len(model, j)?;
    crate::abstract_dp::check_len(model, j2)?;
    let idx = policy_indices(model, mu)?;
    let mut report = PropertyReport::default();
    record_pair(model, &idx, j, j2, "given pair", &mut report);
    Ok(report)
}

/// Samples random `(mu, J, J')` and checks `‖T_mu J - T_mu J'‖ <= α ‖J - J'‖`.
pub fn check_contraction<M: DpModel + ?Sized>(
    model: &M,
    trials: usize,
    seed: u64,
) -> Result<PropertyReport> {
    require_trials(trials)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.num_states();
    let mut report = PropertyReport::default();
    for trial in 0..trials {
        let idx = random_policy(model, &mut rng);
        let j = random_function(&mut rng, n);
        let j2 = random_function(&mut rng, n);
        record_pair(model, &idx, &j, &j2, &format!("trial {trial}"), &mut report);
    }
    Ok(report)
}

/// Like [`check_contraction`], but over every policy of the model.
pub fn check_contraction_exhaustive<M: DpModel + ?Sized>(
    model: &M,
    trials_per_policy: usize,
    seed: u64,
    cap: u128,
) -> Result<PropertyReport> {
    require_trials(trials_per_policy)?;
    let space = PolicySpace::of(model);
    space.ensure_within(cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.num_states();
    let mut report = PropertyReport::default();
    for idx in space.iter() {
        for _ in 0..trials_per_policy {
            let j = random_function(&mut rng, n);
            let j2 = random_function(&mut rng, n);
            record_pair(model, &idx, &j, &j2, &format!("policy {idx:?}"), &mut report);
        }
    }
    Ok(report)
}
