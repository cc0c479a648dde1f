#![allow(dead_code)]

use std::path::PathBuf;

use maavi::{
    generate, DpModel, GeneratorKind, GeneratorSpec, LoadOptions, Problem, ProblemFile, ValueFunction,
};

pub fn t1_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/t1.json")
}

pub fn t1_file() -> ProblemFile {
    serde_json::from_str(&std::fs::read_to_string(t1_path()).unwrap()).unwrap()
}

pub fn t1() -> Problem {
    t1_file().into_problem(&LoadOptions::default()).unwrap()
}

pub fn load(file: &ProblemFile) -> Problem {
    file.clone().into_problem(&LoadOptions::default()).unwrap()
}

/// `Σ_y p (g + α J(y))` straight from the file's lists.
pub fn hand_h(file: &ProblemFile, x: usize, i: usize, j: &[f64]) -> f64 {
    let alpha = file.discount.unwrap_or(1.0);
    let dest = file.destination;
    let costs = file.costs.get(x).and_then(|c| c.get(i));
    file.transitions[x][i]
        .iter()
        .map(|&(y, p)| {
            let g = costs
                .and_then(|c| c.iter().find(|&&(z, _)| z == y))
                .map_or(0.0, |&(_, g)| g);
            let cont = if Some(y) == dest { 0.0 } else { j[y] };
            p * (g + alpha * cont)
        })
        .sum()
}

/// The 200-instance family: mixed constraint structures, α = 0.9.
pub fn family_spec(i: u64) -> GeneratorSpec {
    let kind = match i % 3 {
        0 => GeneratorKind::RandomGeneral,
        1 => GeneratorKind::Cartesian,
        _ => GeneratorKind::SimplexCoupled,
    };
    let s = if kind == GeneratorKind::SimplexCoupled { 2 } else { 2 + ((i / 3) % 2) as u32 };
    GeneratorSpec {
        kind,
        n: 2 + (i % 5) as usize,
        m: 1 + ((i / 5) % 3) as usize,
        s,
        density: 1 + (i % 4) as usize,
        cost_range: (0.0, 10.0),
        discount: 0.9,
        seed: 1000 + i,
    }
}

pub fn family(i: u64) -> Problem {
    load(&generate(&family_spec(i)).unwrap())
}

pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

pub fn wdist(model: &dyn DpModel, a: &ValueFunction, b: &ValueFunction) -> f64 {
    model.weights().dist(a, b)
}
