mod common;

use maavi::{
    apply_t_mu, check_contraction, component_constraint_set, first_feasible_policy, generate, mdp_eval_h,
    parse_problem, prepare_start, validate_model, ControlTuple, DpError, DpModel, GeneratorKind, GeneratorSpec,
    InitialConditionMode, LoadOptions, Problem, ProblemFile, ValueFunction, DEFAULT_POLICY_CAP,
};
use proptest::prelude::*;

use common::{hand_h, load, t1_file};

fn ct(v: &[u32]) -> ControlTuple {
    ControlTuple::new(v.to_vec())
}

fn file_with_controls(controls: Vec<Vec<Vec<u32>>>) -> ProblemFile {
    let n = controls.len();
    let transitions = controls
        .iter()
        .map(|us| us.iter().map(|_| vec![(0usize, 1.0)]).collect())
        .collect();
    ProblemFile {
        kind: maavi::ProblemKind::Discounted,
        num_states: n,
        num_agents: controls[0][0].len(),
        discount: Some(0.9),
        destination: None,
        controls,
        transitions,
        costs: Vec::new(),
    }
}

fn arb_spec() -> impl Strategy<Value = GeneratorSpec> {
    (
        prop_oneof![
            Just(GeneratorKind::RandomGeneral),
            Just(GeneratorKind::Cartesian),
            Just(GeneratorKind::SimplexCoupled),
        ],
        1usize..5,
        1usize..4,
        2u32..4,
        0usize..4,
        any::<u64>(),
    )
        .prop_map(|(kind, n, m, s, density, seed)| GeneratorSpec {
            kind,
            n,
            m,
            s: if kind == GeneratorKind::SimplexCoupled { 2 } else { s },
            density,
            cost_range: (0.0, 10.0),
            discount: 0.9,
            seed,
        })
}

#[test]
fn cartesian_component_sets_are_full() {
    let p = load(&file_with_controls(vec![vec![
        vec![0, 0],
        vec![0, 1],
        vec![1, 0],
        vec![1, 1],
    ]]));
    for agent in 0..2 {
        let set = component_constraint_set(&p, 0, agent, &ct(&[1, 0])).unwrap();
        assert_eq!(set.admissible, vec![0, 1]);
    }
}

#[test]
fn simplex_component_sets_are_singletons() {
    let p = load(&generate(&GeneratorSpec {
        kind: GeneratorKind::SimplexCoupled,
        n: 2,
        m: 3,
        s: 2,
        ..GeneratorSpec::default()
    })
    .unwrap());
    for x in 0..2 {
        for u in p.controls(x) {
            for agent in 0..3 {
                let set = component_constraint_set(&p, x, agent, u).unwrap();
                assert_eq!(set.admissible, vec![u.component(agent)]);
            }
        }
    }
}

#[test]
fn diagonal_set_pins_each_component() {
    let p = load(&file_with_controls(vec![vec![vec![0, 0], vec![1, 1]]]));
    let set = component_constraint_set(&p, 0, 1, &ct(&[0, 0])).unwrap();
    assert_eq!(set.admissible, vec![0]);
    assert_eq!((set.agent, set.state), (1, 0));
}

#[test]
fn component_set_rejects_bad_arguments() {
    let p = load(&file_with_controls(vec![vec![vec![0, 0], vec![1, 1]]]));
    assert!(matches!(
        component_constraint_set(&p, 0, 0, &ct(&[0, 1])),
        Err(DpError::Infeasible { state: 0, .. })
    ));
    assert!(matches!(
        component_constraint_set(&p, 0, 2, &ct(&[0, 0])),
        Err(DpError::InvalidArgument(_))
    ));
    assert!(matches!(
        component_constraint_set(&p, 1, 0, &ct(&[0, 0])),
        Err(DpError::InvalidArgument(_))
    ));
}

#[test]
fn h_is_affine_in_each_successor_value() {
    let file = t1_file();
    let p = load(&file);
    let Problem::Discounted(mdp) = &p else { unreachable!() };
    let j = ValueFunction::new(vec![0.7, -1.3]);
    for x in 0..2 {
        for (i, u) in p.controls(x).iter().enumerate() {
            let base = mdp_eval_h(mdp, x, u, &j).unwrap();
            assert!((base - hand_h(&file, x, i, &j)).abs() < 1e-12);
            for y in 0..2 {
                let prob: f64 = file.transitions[x][i].iter().filter(|&&(z, _)| z == y).map(|&(_, q)| q).sum();
                let mut bumped = j.clone().into_inner();
                bumped[y] += 2.0;
                let h = mdp_eval_h(mdp, x, u, &ValueFunction::new(bumped)).unwrap();
                assert!((h - base - 0.5 * prob * 2.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn loader_reports_shape_problems() {
    let mut f = t1_file();
    f.controls[0][0] = vec![0, 0, 0];
    match f.into_problem(&LoadOptions::default()) {
        Err(DpError::Validation(r)) => assert!(r.summary().contains("components")),
        other => panic!("expected validation failure, got {other:?}"),
    }

    let mut f = t1_file();
    f.kind = maavi::ProblemKind::Ssp;
    f.discount = None;
    let err = f.into_problem(&LoadOptions::default()).unwrap_err();
    assert!(err.to_string().contains("destination"));

    let mut f = t1_file();
    f.transitions[1].pop();
    assert!(matches!(
        f.into_problem(&LoadOptions::default()),
        Err(DpError::InvalidArgument(_))
    ));
}

#[test]
fn parse_errors_carry_position() {
    let text = "{\n  \"kind\": \"discounted\",\n  \"num_states\": oops\n}";
    match parse_problem(text, &LoadOptions::default()) {
        Err(DpError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected parse error, got {other:?}"),
    }
    let mut v: serde_json::Value = serde_json::from_str(&t1_file().to_json()).unwrap();
    v["extra"] = serde_json::json!(1);
    let err = parse_problem(&v.to_string(), &LoadOptions::default()).unwrap_err();
    assert!(err.to_string().contains("extra"));
}

#[test]
fn renormalize_is_opt_in() {
    let mut f = t1_file();
    for row in &mut f.transitions[0] {
        for e in row.iter_mut() {
            e.1 *= 2.0;
        }
    }
    assert!(matches!(
        f.clone().into_problem(&LoadOptions::default()),
        Err(DpError::Validation(_))
    ));
    let opts = LoadOptions {
        renormalize: true,
        ..LoadOptions::default()
    };
    let p = f.into_problem(&opts).unwrap();
    let j = ValueFunction::new(vec![1.0, 2.0]);
    let a = apply_t_mu(&p, &first_feasible_policy(&p), &j).unwrap();
    let b = apply_t_mu(&load(&t1_file()), &first_feasible_policy(&p), &j).unwrap();
    assert!(common::sup_dist(&a, &b) < 1e-12);
}

#[test]
fn file_roundtrip_preserves_model() {
    let p = load(&t1_file());
    let again = load(&ProblemFile::from_problem(&p));
    let j = ValueFunction::new(vec![3.0, -1.0]);
    for x in 0..2 {
        for i in 0..p.controls(x).len() {
            assert_eq!(p.h(x, i, &j), again.h(x, i, &j));
        }
    }
}

#[test]
fn discount_outside_unit_interval_is_rejected() {
    let mut f = t1_file();
    f.discount = Some(1.0);
    assert!(matches!(
        f.into_problem(&LoadOptions::default()),
        Err(DpError::Validation(_))
    ));
}

#[test]
fn improper_ssp_is_rejected() {
    // State 0 may stay put forever under control 1.
    let f = ProblemFile {
        kind: maavi::ProblemKind::Ssp,
        num_states: 2,
        num_agents: 1,
        discount: None,
        destination: Some(1),
        controls: vec![vec![vec![0], vec![1]], vec![vec![0]]],
        transitions: vec![vec![vec![(1, 1.0)], vec![(0, 1.0)]], vec![vec![(1, 1.0)]]],
        costs: vec![vec![vec![(1, 1.0)], vec![(0, 1.0)]], vec![vec![]]],
    };
    match f.into_problem(&LoadOptions::default()) {
        Err(DpError::Validation(r)) => assert!(r.summary().contains("improper")),
        other => panic!("expected improper policy, got {other:?}"),
    }
}

#[test]
fn generated_ssp_instances_validate_and_contract() {
    for seed in 0..10 {
        let f = generate(&GeneratorSpec {
            kind: GeneratorKind::RandomSsp,
            n: 4,
            m: 2,
            s: 2,
            density: 3,
            cost_range: (0.0, 5.0),
            discount: 0.9,
            seed,
        })
        .unwrap();
        let p = load(&f);
        assert!(validate_model(&p, DEFAULT_POLICY_CAP).passed());
        let d = f.destination.unwrap();
        assert_eq!(p.weights().as_slice()[d], 1.0);
        assert!(p.weights().as_slice().iter().all(|&w| w >= 1.0));
        let r = check_contraction(&p, 100, seed).unwrap();
        assert!(r.passed(), "seed {seed}: {}", r.summary());
    }
}

#[test]
fn ssp_rejects_auto_shift() {
    let p = load(
        &generate(&GeneratorSpec {
            kind: GeneratorKind::RandomSsp,
            n: 3,
            ..GeneratorSpec::default()
        })
        .unwrap(),
    );
    let mu = first_feasible_policy(&p);
    let j0 = ValueFunction::zeros(3);
    assert!(matches!(
        prepare_start(&p, &j0, &mu, InitialConditionMode::AutoShift),
        Err(DpError::UnsupportedMode(_))
    ));
    let Problem::Ssp(ssp) = &p else { unreachable!() };
    let dom = ssp.dominating_initial_value();
    let (start, shift) = prepare_start(&p, &dom, &mu, InitialConditionMode::Validate).unwrap();
    assert_eq!((start, shift), (dom, 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn component_sets_contain_current_and_stay_feasible(spec in arb_spec()) {
        let p = load(&generate(&spec).unwrap());
        for x in 0..p.num_states() {
            for u in p.controls(x) {
                for agent in 0..p.num_agents() {
                    let set = component_constraint_set(&p, x, agent, u).unwrap();
                    prop_assert!(set.admissible.contains(&u.component(agent)));
                    for &v in &set.admissible {
                        prop_assert!(p.control_index(x, &u.with_component(agent, v)).is_some());
                    }
                }
            }
        }
    }

    #[test]
    fn cartesian_sets_ignore_the_reference(
        (n, m, s, seed) in (1usize..4, 1usize..4, 2u32..4, any::<u64>())
    ) {
        let p = load(&generate(&GeneratorSpec {
            kind: GeneratorKind::Cartesian,
            n, m, s, seed,
            ..GeneratorSpec::default()
        }).unwrap());
        let all: Vec<u32> = (0..s).collect();
        for x in 0..n {
            for u in p.controls(x) {
                for agent in 0..m {
                    prop_assert_eq!(&component_constraint_set(&p, x, agent, u).unwrap().admissible, &all);
                }
            }
        }
    }

    #[test]
    fn generated_models_validate(spec in arb_spec()) {
        let f = generate(&spec).unwrap();
        let p = load(&f);
        prop_assert!(validate_model(&p, DEFAULT_POLICY_CAP).passed());
        let j: Vec<f64> = (0..spec.n).map(|x| x as f64 - 1.5).collect();
        for x in 0..spec.n {
            for i in 0..p.controls(x).len() {
                prop_assert!((p.h(x, i, &j) - hand_h(&f, x, i, &j)).abs() <= 1e-12);
            }
        }
    }
}
