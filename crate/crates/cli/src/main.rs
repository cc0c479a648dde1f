use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use maavi::{
    brute_force_optimal, compare, first_feasible_policy, generate, is_agent_by_agent_optimal, load_problem,
    policy_cap_from_env, policy_cost, policy_indices, run_algorithm, write_event_log, Activation,
    Algorithm, ControlTuple, DpModel, GeneratorKind, GeneratorSpec, InitialConditionMode, LoadOptions, Policy,
    PolicySpace, Problem, RunOptions, SolveSettings, StatePartitionSchedule, ValueFunction,
};
use serde_json::Value;

/// Above this many policies `solve` skips the uniqueness check.
const UNIQUENESS_CHECK_LIMIT: u128 = 100_000;

#[derive(Parser)]
#[command(name = "maavi", version, about = "Multiagent value and policy iteration for finite DP problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random problem file
    Generate(GenerateArgs),
    /// Run one algorithm on a problem
    Solve(SolveArgs),
    /// Run several algorithms and tabulate the results as CSV
    Compare(CompareArgs),
    /// Check a policy for agent-by-agent (and optionally global) optimality
    Check(CheckArgs),
    /// Enumerate all policies and print the optimal cost and policy sets
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    RandomGeneral,
    Cartesian,
    SimplexCoupled,
    RandomSsp,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    s: u32,
    /// Successors per state-control pair (0 = all states)
    #[arg(long, default_value_t = 2)]
    density: usize,
    #[arg(long, default_value_t = 0.0)]
    cost_lo: f64,
    #[arg(long, default_value_t = 10.0)]
    cost_hi: f64,
    #[arg(long, default_value_t = 0.9)]
    discount: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Validate,
    AutoShift,
    Unchecked,
}

#[derive(Clone, Copy, ValueEnum)]
enum J0Arg {
    Zero,
    /// `c·v` with `c` the largest expected stage cost (SSP) or `c/(1-α)` (discounted)
    Dominating,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    RoundRobin,
    Shuffled,
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Rescale probability rows instead of rejecting them
    #[arg(long)]
    renormalize: bool,
}

impl ProblemArgs {
    fn load(&self) -> Result<Problem> {
        let opts = LoadOptions {
            renormalize: self.renormalize,
            policy_cap: policy_cap_from_env(),
        };
        load_problem(&self.input, &opts).with_context(|| format!("loading {}", self.input.display()))
    }
}

#[derive(Args)]
struct RunArgs {
    /// Target accuracy of the final value
    #[arg(long, default_value_t = maavi::DEFAULT_EPSILON)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Agent processing order, e.g. 2,0,1
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<usize>>,
    /// Improvement period for opi and async_opi
    #[arg(long, default_value_t = 1)]
    q: usize,
    /// Explicit improvement iterations, e.g. 0,3,6 (overrides --q)
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<usize>>,
    /// Number of contiguous state blocks for async_opi
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    #[arg(long, value_enum, default_value = "round-robin")]
    activation: ActivationArg,
    /// Seed for shuffled activation
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial-condition handling (default: auto-shift for discounted, validate for ssp)
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Starting value (default: zero for discounted, dominating for ssp)
    #[arg(long, value_enum)]
    j0: Option<J0Arg>,
    /// Allow an unchecked start for async_opi
    #[arg(long)]
    force: bool,
    /// async_opi: evaluate only the active block between improvements
    #[arg(long)]
    restrict_eval: bool,
}

impl RunArgs {
    fn settings(&self, problem: &Problem, record_history: bool) -> Result<SolveSettings> {
        let mode = match self.init {
            Some(InitArg::Validate) => InitialConditionMode::Validate,
            Some(InitArg::AutoShift) => InitialConditionMode::AutoShift,
            Some(InitArg::Unchecked) => InitialConditionMode::Unchecked,
            None => match problem {
                Problem::Discounted(_) => InitialConditionMode::AutoShift,
                Problem::Ssp(_) => InitialConditionMode::Validate,
            },
        };
        let opts = RunOptions {
            max_iters: self.max_iters,
            epsilon: self.tol,
            agent_order: self.order.clone(),
            initial_condition_mode: mode,
            record_history,
            record_traces: false,
            force: self.force,
            restrict_eval: self.restrict_eval,
        };
        let partition = if self.blocks > 1 {
            let p = StatePartitionSchedule::contiguous(problem.num_states(), self.blocks)?;
            Some(match self.activation {
                ActivationArg::RoundRobin => p,
                ActivationArg::Shuffled => p.with_activation(Activation::Shuffled { seed: self.seed })?,
            })
        } else {
            None
        };
        Ok(SolveSettings {
            opts,
            q: self.q,
            schedule: self.schedule.clone(),
            partition,
        })
    }

    fn start(&self, problem: &Problem) -> (ValueFunction, Policy) {
        let n = problem.num_states();
        let j0 = match (self.j0, problem) {
            (Some(J0Arg::Zero), _) | (None, Problem::Discounted(_)) => ValueFunction::zeros(n),
            (Some(J0Arg::Dominating), Problem::Discounted(m)) => {
                let c = m.data().max_expected_cost().max(0.0) / (1.0 - m.alpha());
                ValueFunction::constant(n, c)
            }
            (Some(J0Arg::Dominating), Problem::Ssp(m)) | (None, Problem::Ssp(m)) => m.dominating_initial_value(),
        };
        (j0, first_feasible_policy(problem))
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "mavi")]
    algo: Algorithm,
    #[command(flatten)]
    run: RunArgs,
    /// Write the full run report (JSON)
    #[arg(long)]
    report: Option<PathBuf>,
    /// Include every iterate in the report
    #[arg(long)]
    history: bool,
    /// Write the processor event log (JSON lines)
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_delimiter = ',', default_value = "vi,mavi,opi,async_opi")]
    algos: Vec<Algorithm>,
    #[command(flatten)]
    run: RunArgs,
    /// Skip policy enumeration (gap and global-optimality columns stay empty)
    #[arg(long)]
    no_oracle: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Policy file: control indices per state, or control tuples per state
    #[arg(long)]
    policy: PathBuf,
    /// Also decide global optimality by enumeration
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_generate(args: &GenerateArgs) -> Result<ExitCode> {
    let spec = GeneratorSpec {
        kind: match args.kind {
            KindArg::RandomGeneral => GeneratorKind::RandomGeneral,
            KindArg::Cartesian => GeneratorKind::Cartesian,
            KindArg::SimplexCoupled => GeneratorKind::SimplexCoupled,
            KindArg::RandomSsp => GeneratorKind::RandomSsp,
        },
        n: args.n,
        m: args.m,
        s: args.s,
        density: args.density,
        cost_range: (args.cost_lo, args.cost_hi),
        discount: args.discount,
        seed: args.seed,
    };
    let file = generate(&spec)?;
    let opts = LoadOptions {
        policy_cap: policy_cap_from_env(),
        ..LoadOptions::default()
    };
    file.clone().into_problem(&opts).context("generated problem failed validation")?;
    let mut out = writer(args.output.as_deref())?;
    writeln!(out, "{}", file.to_json())?;
    Ok(ExitCode::SUCCESS)
}

fn uniqueness_flag(problem: &Problem) -> Option<bool> {
    let count = PolicySpace::of(problem).count();
    if count > UNIQUENESS_CHECK_LIMIT.min(policy_cap_from_env()) {
        info!("{count} policies; skipping the uniqueness check");
        return None;
    }
    brute_force_optimal(problem, count).ok().map(|r| r.uniqueness_holds)
}

fn cmd_solve(args: &SolveArgs) -> Result<ExitCode> {
    let problem = args.problem.load()?;
    let settings = args.run.settings(&problem, args.history)?;
    let (j0, mu0) = args.run.start(&problem);
    let mut report = run_algorithm(&problem, args.algo, &j0, &mu0, &settings)?;
    report.uniqueness_holds = uniqueness_flag(&problem);
    let encoding = policy_indices(&problem, &report.final_policy)?;
    println!("algorithm: {}", report.algorithm);
    println!("termination: {}", serde_json::to_value(report.termination)?.as_str().unwrap_or("?"));
    println!("iterations: {}", report.iterations.len());
    println!("h_evals: {}", report.h_evals);
    if report.initial_shift > 0.0 {
        println!("initial_shift: {}", report.initial_shift);
    }
    println!("final_policy: {encoding:?}");
    println!("final_value: {:?}", report.final_value.as_slice());
    if let Some(path) = &args.report {
        let mut out = writer(Some(path))?;
        serde_json::to_writer_pretty(&mut out, &report)?;
        writeln!(out)?;
    }
    if let Some(path) = &args.events {
        write_event_log(&report.events, writer(Some(path))?)?;
    }
    Ok(if report.converged() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_compare(args: &CompareArgs) -> Result<ExitCode> {
    let problem = args.problem.load()?;
    let settings = args.run.settings(&problem, false)?;
    let (j0, mu0) = args.run.start(&problem);
    let oracle = if args.no_oracle {
        None
    } else {
        Some(brute_force_optimal(&problem, policy_cap_from_env()).context("oracle failed (use --no-oracle to skip)")?)
    };
    let rows = compare(&problem, &args.algos, &j0, &mu0, &settings, oracle.as_ref())?;
    let mut csv = csv::Writer::from_writer(writer(args.output.as_deref())?);
    for (row, _) in &rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn read_policy(problem: &Problem, path: &Path) -> Result<Policy> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let list = match value {
        Value::Object(mut o) => o.remove("policy").context("policy object lacks a \"policy\" field")?,
        other => other,
    };
    let Value::Array(entries) = list else {
        bail!("policy must be a JSON array");
    };
    if entries.len() != problem.num_states() {
        bail!("policy has {} entries, problem has {} states", entries.len(), problem.num_states());
    }
    let mut controls = Vec::with_capacity(entries.len());
    for (x, e) in entries.iter().enumerate() {
        let u = match e {
            Value::Number(_) => {
                let i = e.as_u64().context("control index must be a nonnegative integer")? as usize;
                match problem.controls(x).get(i) {
                    Some(u) => u.clone(),
                    None => bail!("state {x}: control index {i} out of range"),
                }
            }
            Value::Array(_) => ControlTuple::new(serde_json::from_value(e.clone())?),
            _ => bail!("state {x}: expected a control index or tuple"),
        };
        controls.push(u);
    }
    let policy = Policy::new(controls);
    policy_indices(problem, &policy)?;
    Ok(policy)
}

fn cmd_check(args: &CheckArgs) -> Result<ExitCode> {
    let problem = args.problem.load()?;
    let policy = read_policy(&problem, &args.policy)?;
    let (aba, witnesses) = is_agent_by_agent_optimal(&problem, &policy)?;
    println!("aba_optimal: {aba}");
    for w in &witnesses {
        println!(
            "  witness: state {} agent {} -> component {} lowers H by {:e}",
            w.state, w.agent, w.deviating_component, w.improvement
        );
    }
    if args.oracle {
        let report = brute_force_optimal(&problem, policy_cap_from_env())?;
        let cost = policy_cost(&problem, &policy)?;
        println!("globally_optimal: {}", report.is_optimal(&policy));
        println!("gap_to_optimal: {:e}", cost.max_abs_diff(&report.optimal_value));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(args: &OracleArgs) -> Result<ExitCode> {
    let problem = args.problem.load()?;
    let report = brute_force_optimal(&problem, policy_cap_from_env())?;
    let mut out = writer(args.output.as_deref())?;
    writeln!(out, "{}", report.to_json(&problem)?)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Check(a) => cmd_check(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

