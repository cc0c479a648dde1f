//! Dynamic programming for problems whose control is a tuple of agent
//! components: agent-by-agent value iteration, multiagent optimistic and
//! asynchronous policy iteration, and brute-force oracles to check them.

pub mod abstract_dp;
pub mod control;
pub mod enumerate;
pub mod error;
pub mod generate;
pub mod harness;
pub mod models;
pub mod multiagent_vi;
pub mod optimistic_pi;
pub mod oracle;
pub mod properties;
pub mod run;
pub mod value;

pub use abstract_dp::{
    apply_t, apply_t_mu, compute_q_factors, first_feasible_policy, policy_from_indices, policy_indices, DpModel,
    Metered, PolicySystem, DEFAULT_EPSILON, TIE_TOL,
};
pub use control::{ControlTuple, Policy};
pub use enumerate::{policy_cap_from_env, PolicySpace, DEFAULT_POLICY_CAP, POLICY_CAP_ENV};
pub use error::{DpError, Result};
pub use generate::{generate, generate_problem, GeneratorKind, GeneratorSpec};
pub use harness::{compare, run_algorithm, Algorithm, ComparisonRow, SolveSettings};
pub use models::{
    component_constraint_set, load_problem, mdp_eval_h, parse_problem, ssp_weights, validate_model, validate_ssp, Branch,
    ComponentConstraintSet, DiscountedMdp, LoadOptions, MdpData, Problem, ProblemFile, ProblemKind, SspModel,
};
pub use multiagent_vi::{
    agent_sweep, ensure_initial_condition, initial_shift, monotone_chain_check, multiagent_vi_run, prepare_start,
    value_iteration_run,
    InitialConditionMode, SweepStep, SweepTrace,
};
pub use optimistic_pi::{
    async_opi_run, optimistic_pi_run, write_event_log, Activation, EventAction, ProcessorEvent, Schedule,
    StatePartitionSchedule,
};
pub use oracle::{
    brute_force_optimal, component_minima_are_global, enumerate_aba_optimal_policies, is_agent_by_agent_optimal,
    is_component_wise_minimum, policy_cost, OptimalityWitness, OracleReport,
};
pub use properties::{
    check_contraction, check_contraction_exhaustive, check_contraction_pair, check_monotonicity, PropertyReport,
    Violation,
};
pub use run::{residual_bound, IterationLog, Iterate, RunOptions, RunReport, StepKind, Termination};
pub use value::{weighted_sup_norm, ValueFunction, WeightVector};
