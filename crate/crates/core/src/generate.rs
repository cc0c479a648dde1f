//! Seeded instance generators.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};
use crate::models::{LoadOptions, Problem, ProblemFile, ProblemKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Each state gets a random nonempty subset of `{0..s-1}^m`.
    RandomGeneral,
    /// Each state gets the full product `{0..s-1}^m`.
    Cartesian,
    /// Binary tuples with exactly one component equal to 1.
    SimplexCoupled,
    /// Stochastic shortest path; the last state is the destination.
    RandomSsp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub m: usize,
    pub s: u32,
    /// Successors per `(x, u)`; 0 means all states.
    pub density: usize,
    pub cost_range: (f64, f64),
    /// Discount factor for the discounted kinds.
    pub discount: f64,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Cartesian,
            n: 4,
            m: 2,
            s: 2,
            density: 2,
            cost_range: (0.0, 10.0),
            discount: 0.9,
            seed: 0,
        }
    }
}

fn all_tuples(m: usize, s: u32) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::with_capacity(m)];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..s).map(move |c| {
                    let mut t = prefix.clone();
                    t.push(c);
                    t
                })
            })
            .collect();
    }
    out
}

fn one_hot(m: usize) -> Vec<Vec<u32>> {
    (0..m)
        .map(|k| (0..m).map(|l| u32::from(l == k)).collect())
        .collect()
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DpError::InvalidArgument(msg));
        if self.n == 0 || self.m == 0 || self.s == 0 {
            return bad(format!("n, m, s must be at least 1 (got {}, {}, {})", self.n, self.m, self.s));
        }
        let (lo, hi) = self.cost_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad(format!("cost range [{lo}, {hi}] is not a finite interval"));
        }
        match self.kind {
            GeneratorKind::SimplexCoupled if self.s != 2 => {
                bad(format!("simplex_coupled needs the binary alphabet (s = 2), got s = {}", self.s))
            }
            GeneratorKind::RandomSsp if self.n < 2 => bad("random_ssp needs at least 2 states".into()),
            GeneratorKind::RandomSsp if self.cost_range.0 < 0.0 => {
                bad("random_ssp needs nonnegative costs".into())
            }
            GeneratorKind::RandomSsp => Ok(()),
            _ if !(self.discount > 0.0 && self.discount < 1.0) => {
                bad(format!("discount must lie in (0, 1), got {}", self.discount))
            }
            _ => Ok(()),
        }
    }

    fn control_sets(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<u32>>> {
        (0..self.n)
            .map(|_| match self.kind {
                GeneratorKind::Cartesian => all_tuples(self.m, self.s),
                GeneratorKind::SimplexCoupled => one_hot(self.m),
                GeneratorKind::RandomGeneral | GeneratorKind::RandomSsp => {
                    let all = all_tuples(self.m, self.s);
                    let mut keep: Vec<Vec<u32>> = all.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
                    if keep.is_empty() {
                        keep.push(all[rng.gen_range(0..all.len())].clone());
                    }
                    keep
                }
            })
            .collect()
    }
}

/// Builds a problem file for `spec`. Deterministic in `spec.seed`.
pub fn generate(spec: &GeneratorSpec) -> Result<ProblemFile> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let controls = spec.control_sets(&mut rng);
    let ssp = spec.kind == GeneratorKind::RandomSsp;
    let dest = n - 1;
    let fan = if spec.density == 0 { n } else { spec.density.min(n) };
    let (lo, hi) = spec.cost_range;
    let mut transitions = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    for (x, us) in controls.iter().enumerate() {
        let mut trows = Vec::with_capacity(us.len());
        let mut crows = Vec::with_capacity(us.len());
        for _ in us {
            if ssp && x == dest {
                trows.push(vec![(dest, 1.0)]);
                crows.push(vec![(dest, 0.0)]);
                continue;
            }
            let mut succ: Vec<usize> = sample(&mut rng, n, fan).into_vec();
            if ssp && !succ.contains(&dest) {
                let k = rng.gen_range(0..succ.len());
                succ[k] = dest;
            }
            succ.sort_unstable();
            let raw: Vec<f64> = succ.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            trows.push(succ.iter().zip(&raw).map(|(&y, r)| (y, r / total)).collect());
            crows.push(
                succ.iter()
                    .map(|&y| (y, if lo == hi { lo } else { rng.gen_range(lo..hi) }))
                    .collect(),
            );
        }
        transitions.push(trows);
        costs.push(crows);
    }
    Ok(ProblemFile {
        kind: if ssp { ProblemKind::Ssp } else { ProblemKind::Discounted },
        num_states: n,
        num_agents: spec.m,
        discount: (!ssp).then_some(spec.discount),
        destination: ssp.then_some(dest),
        controls,
        transitions,
        costs,
    })
}

/// [`generate`] followed by loading and validation.
pub fn generate_problem(spec: &GeneratorSpec, opts: &LoadOptions) -> Result<Problem> {
    generate(spec)?.into_problem(opts)
}
