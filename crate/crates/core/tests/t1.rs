//! The bundled two-state, two-agent instance, checked against hand
//! evaluation straight from the file and against frozen oracle values.

mod common;

use maavi::{
    agent_sweep, apply_t, apply_t_mu, async_opi_run, brute_force_optimal, compute_q_factors,
    enumerate_aba_optimal_policies, first_feasible_policy, is_agent_by_agent_optimal, load_problem, mdp_eval_h,
    monotone_chain_check, multiagent_vi_run, optimistic_pi_run, policy_cost, policy_from_indices, prepare_start,
    validate_model, value_iteration_run, ControlTuple, DpModel, InitialConditionMode, LoadOptions, Problem,
    RunOptions, Schedule, StatePartitionSchedule, StepKind, ValueFunction,
};

use common::{hand_h, sup_dist, t1, t1_file, t1_path};

const J_STAR: [f64; 2] = [6.292501888360881, 6.734211308659167];

/// Control index of `(a, b)` in the Cartesian listing.
fn ix(a: usize, b: usize) -> usize {
    2 * a + b
}

/// Policy cost by Cramer's rule on the 2×2 system `(I - αP) J = g`.
fn cramer_cost(i0: usize, i1: usize) -> [f64; 2] {
    let f = t1_file();
    let alpha = f.discount.unwrap();
    let row = |x: usize, i: usize| {
        let mut p = [0.0; 2];
        for &(y, q) in &f.transitions[x][i] {
            p[y] += q;
        }
        (p, hand_h(&f, x, i, &[0.0, 0.0]))
    };
    let (p0, g0) = row(0, i0);
    let (p1, g1) = row(1, i1);
    let (a, b, c, d) = (1.0 - alpha * p0[0], -alpha * p0[1], -alpha * p1[0], 1.0 - alpha * p1[1]);
    let det = a * d - b * c;
    [(g0 * d - b * g1) / det, (a * g1 - c * g0) / det]
}

#[test]
fn loads_and_validates() {
    let p = load_problem(t1_path(), &LoadOptions::default()).unwrap();
    assert!(matches!(p, Problem::Discounted(_)));
    assert_eq!((p.num_states(), p.num_agents(), p.modulus()), (2, 2, 0.5));
    assert!(validate_model(&p, 100).passed());
    assert!((0..2).all(|x| p.controls(x).len() == 4));
}

#[test]
fn t_mu_at_zero_is_expected_stage_cost() {
    let f = t1_file();
    let p = t1();
    let mu = first_feasible_policy(&p);
    assert_eq!(mu.at(0), &ControlTuple::new(vec![0, 0]));
    let t = apply_t_mu(&p, &mu, &ValueFunction::zeros(2)).unwrap();
    // Hand sums: Σ_y p_xy g_xy for control (0,0).
    let g0 = 0.2550055798345571 * 7.26741296713265 + 0.7449944201654429 * 6.01259015284284;
    let g1 = 0.324280130086367 * 4.8190476851144615 + 0.6757198699136329 * 8.860528960896916;
    assert!((t[0] - g0).abs() < 1e-12 && (t[1] - g1).abs() < 1e-12);
    assert!((t[0] - hand_h(&f, 0, 0, &[0.0, 0.0])).abs() < 1e-12);
}

#[test]
fn eval_h_matches_hand_sum() {
    let f = t1_file();
    let Problem::Discounted(m) = t1() else { unreachable!() };
    let j = ValueFunction::new(vec![1.5, -2.25]);
    for x in 0..2 {
        for (i, u) in f.controls[x].iter().enumerate() {
            let lib = mdp_eval_h(&m, x, &ControlTuple::new(u.clone()), &j).unwrap();
            assert!((lib - hand_h(&f, x, i, &j)).abs() < 1e-12);
        }
    }
    assert!(mdp_eval_h(&m, 0, &ControlTuple::new(vec![2, 0]), &j).is_err());
}

#[test]
fn q_factors_and_bellman_at_zero() {
    let f = t1_file();
    let p = t1();
    let zero = ValueFunction::zeros(2);
    let (tj, greedy) = apply_t(&p, &zero).unwrap();
    for x in 0..2 {
        let q = compute_q_factors(&p, x, &zero).unwrap();
        assert_eq!(q.len(), 4);
        let hand: Vec<f64> = (0..4).map(|i| hand_h(&f, x, i, &zero)).collect();
        for (i, (u, v)) in q.iter().enumerate() {
            assert_eq!(u.components(), f.controls[x][i].as_slice());
            assert!((v - hand[i]).abs() < 1e-12);
        }
        let min = hand.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((tj[x] - min).abs() < 1e-12);
        let argmin = hand.iter().position(|&v| v == min).unwrap();
        assert_eq!(greedy.at(x).components(), f.controls[x][argmin].as_slice());
    }
}

#[test]
fn one_sweep_matches_straight_line_execution() {
    let f = t1_file();
    let p = t1();
    let mu0 = first_feasible_policy(&p);
    let (j, shift) = prepare_start(&p, &ValueFunction::zeros(2), &mu0, InitialConditionMode::AutoShift).unwrap();
    let c = hand_h(&f, 0, 0, &[0.0, 0.0]).max(hand_h(&f, 1, 0, &[0.0, 0.0])) / 0.5;
    assert!((shift - c).abs() < 1e-12);
    let j = j.as_slice();

    // Agent 0 at both states: choose between (0,0) and (1,0) against J.
    let pick = |a: f64, b: f64| if b < a - 1e-12 { (1usize, b) } else { (0usize, a) };
    let (a0, v0) = pick(hand_h(&f, 0, ix(0, 0), j), hand_h(&f, 0, ix(1, 0), j));
    let (a1, v1) = pick(hand_h(&f, 1, ix(0, 0), j), hand_h(&f, 1, ix(1, 0), j));
    let j1 = [v0, v1];
    // Agent 1: choose between (a,0) and (a,1) against J_1.
    let (b0, w0) = pick(hand_h(&f, 0, ix(a0, 0), &j1), hand_h(&f, 0, ix(a0, 1), &j1));
    let (b1, w1) = pick(hand_h(&f, 1, ix(a1, 0), &j1), hand_h(&f, 1, ix(a1, 1), &j1));

    let trace = agent_sweep(&p, &ValueFunction::new(j.to_vec()), &mu0, None).unwrap();
    assert_eq!(trace.h_evals, 8);
    assert_eq!(trace.chain.len(), 2);
    assert!(sup_dist(&trace.chain[0].value, &j1) < 1e-12);
    assert_eq!(trace.chain[0].components, vec![a0 as u32, a1 as u32]);
    assert!(sup_dist(&trace.chain[1].value, &[w0, w1]) < 1e-12);
    assert_eq!(trace.chain[1].components, vec![b0 as u32, b1 as u32]);
    assert_eq!(trace.output_policy, policy_from_indices(&p, &[ix(a0, b0), ix(a1, b1)]));
    assert!(monotone_chain_check(&trace, &p).unwrap().passed());
}

#[test]
fn every_policy_cost_is_a_fixed_point() {
    let p = t1();
    for i0 in 0..4 {
        for i1 in 0..4 {
            let mu = policy_from_indices(&p, &[i0, i1]);
            let j = policy_cost(&p, &mu).unwrap();
            let r = sup_dist(&apply_t_mu(&p, &mu, &j).unwrap(), &j);
            assert!(r <= 1e-10, "policy ({i0},{i1}) residual {r:e}");
            assert!(sup_dist(&j, &cramer_cost(i0, i1)) < 1e-10);
        }
    }
}

#[test]
fn oracle_golden_values() {
    let p = t1();
    let r = brute_force_optimal(&p, 100).unwrap();
    assert_eq!(r.policy_count, 16);
    assert!(sup_dist(&r.optimal_value, &J_STAR) < 1e-12);
    let hand_star: Vec<f64> = (0..2)
        .map(|x| {
            (0..16)
                .map(|k| cramer_cost(k / 4, k % 4)[x])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    assert!(sup_dist(&r.optimal_value, &hand_star) < 1e-10);
    assert_eq!(r.optimal_policies, vec![policy_from_indices(&p, &[2, 3])]);
    assert_eq!(
        r.aba_optimal_policies,
        vec![policy_from_indices(&p, &[1, 3]), policy_from_indices(&p, &[2, 3])]
    );
    assert!(r.uniqueness_holds);
    assert!(r.bellman_residual <= 1e-9);
    assert_eq!(enumerate_aba_optimal_policies(&p, 100).unwrap(), r.aba_optimal_policies);
    let json: serde_json::Value = serde_json::from_str(&r.to_json(&p).unwrap()).unwrap();
    assert_eq!(json["optimal_policies"], serde_json::json!([[2, 3]]));
}

#[test]
fn value_iteration_limit_is_j_star() {
    let p = t1();
    let opts = RunOptions {
        epsilon: 1e-11,
        ..RunOptions::default()
    };
    let r = value_iteration_run(&p, &ValueFunction::zeros(2), &opts).unwrap();
    assert!(r.converged());
    assert!(sup_dist(&r.final_value, &J_STAR) < 1e-8);
    assert_eq!(r.step_evals(0), 8);
}

#[test]
fn multiagent_vi_golden_run() {
    let p = t1();
    let opts = RunOptions {
        initial_condition_mode: InitialConditionMode::AutoShift,
        record_traces: true,
        ..RunOptions::default()
    };
    let r = multiagent_vi_run(&p, &ValueFunction::zeros(2), &first_feasible_policy(&p), &opts).unwrap();
    assert!(r.converged());
    assert_eq!(r.iterations.len(), 18);
    assert_eq!(r.h_evals, 18 * 8);
    assert_eq!(r.final_policy, policy_from_indices(&p, &[2, 3]));
    assert!(is_agent_by_agent_optimal(&p, &r.final_policy).unwrap().0);
    let cost = policy_cost(&p, &r.final_policy).unwrap();
    assert!(sup_dist(&r.final_value, &cost) <= 1e-9);
    for t in &r.traces {
        assert!(monotone_chain_check(t, &p).unwrap().passed());
    }
}

#[test]
fn reversed_agent_order_still_reaches_an_aba_policy() {
    let p = t1();
    let opts = RunOptions {
        initial_condition_mode: InitialConditionMode::AutoShift,
        agent_order: Some(vec![1, 0]),
        ..RunOptions::default()
    };
    let r = multiagent_vi_run(&p, &ValueFunction::zeros(2), &first_feasible_policy(&p), &opts).unwrap();
    assert_eq!(r.agent_order, vec![1, 0]);
    assert!(r.converged());
    assert!(is_agent_by_agent_optimal(&p, &r.final_policy).unwrap().0);
}

#[test]
fn optimistic_pi_every_fifth_iteration() {
    let p = t1();
    let opts = RunOptions {
        initial_condition_mode: InitialConditionMode::AutoShift,
        ..RunOptions::default()
    };
    let schedule = Schedule::every_q(5, opts.max_iters).unwrap();
    let r = optimistic_pi_run(&p, &ValueFunction::zeros(2), &first_feasible_policy(&p), &schedule, &opts).unwrap();
    assert!(r.converged());
    assert!(is_agent_by_agent_optimal(&p, &r.final_policy).unwrap().0);
    let cost = policy_cost(&p, &r.final_policy).unwrap();
    assert!(sup_dist(&r.final_value, &cost) <= 1e-9);
    for (k, it) in r.iterations.iter().enumerate() {
        let expected = if k % 5 == 0 { 8 } else { 2 };
        assert_eq!(it.step == StepKind::Improve, k % 5 == 0);
        assert_eq!(r.step_evals(k), expected);
    }
}

#[test]
fn async_two_blocks_round_robin() {
    let p = t1();
    let opts = RunOptions {
        initial_condition_mode: InitialConditionMode::AutoShift,
        ..RunOptions::default()
    };
    let schedule = Schedule::every_q(2, opts.max_iters).unwrap();
    let partition = StatePartitionSchedule::contiguous(2, 2).unwrap();
    let r = async_opi_run(&p, &ValueFunction::zeros(2), &first_feasible_policy(&p), &schedule, &partition, &opts)
        .unwrap();
    assert!(r.converged());
    assert!(is_agent_by_agent_optimal(&p, &r.final_policy).unwrap().0);
    let cost = policy_cost(&p, &r.final_policy).unwrap();
    assert!(sup_dist(&r.final_value, &cost) <= 1e-9);
    assert!(r.certificate_evals > 0);
}
