//! `switchq` — solve alternating zero-sum Markov games, run minimax
//! Q-learning, and verify the path-wise orderings, algebraic identities,
//! and finite-time error bounds its switching-system view must satisfy.
//!
//! Exit codes: 0 success, 1 verification violations, 2 usage or input errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use switchq_core::bounds::{BoundId, BoundParams, ExponentVariant};
use switchq_core::q_learning::{run_q_learning, SnapshotStride};
use switchq_core::value_iteration::{greedy_policies, solve_optimal_q};
use switchq_core::{generate_random_game, io as game_io, Dims, QTable, Result, SamplingModel};

use switchq_cli::experiment::{self, ExperimentConfig, GameSource, SamplingChoice};
use switchq_cli::output::{self, fmt_f, metadata_path};

/// Directory used for default output paths.
const OUT_DIR_ENV: &str = "SWITCHQ_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "switchq",
    version,
    about = "Zero-sum Markov game solver and minimax Q-learning verification harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a game exactly and print the fixed point and greedy policies
    Solve(SolveArgs),
    /// Run one minimax Q-learning trajectory and write its error curve
    Learn(LearnArgs),
    /// Run the coupled verification experiment over seeded trials
    Verify(VerifyArgs),
    /// Evaluate the finite-time bounds on a step grid, no simulation
    Bounds(BoundsArgs),
    /// Generate a random game file
    Generate(GenerateArgs),
}

fn parse_alpha(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("step-size {v} must lie in (0, 1)"))
    }
}

fn parse_gamma(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("discount {v} must lie in [0, 1)"))
    }
}

fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundVariantArg {
    Printed,
    ThreeHalves,
}

impl From<BoundVariantArg> for ExponentVariant {
    fn from(v: BoundVariantArg) -> ExponentVariant {
        match v {
            BoundVariantArg::Printed => ExponentVariant::Printed,
            BoundVariantArg::ThreeHalves => ExponentVariant::ThreeHalves,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SamplingArg {
    /// Use the game file's sampling block; uniform when absent
    File,
    Uniform,
    Random,
}

impl From<SamplingArg> for SamplingChoice {
    fn from(v: SamplingArg) -> SamplingChoice {
        match v {
            SamplingArg::File => SamplingChoice::File,
            SamplingArg::Uniform => SamplingChoice::Uniform,
            SamplingArg::Random => SamplingChoice::Random,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Game file to solve
    #[arg(long)]
    game: PathBuf,
    /// Target bound on the fixed-point error
    #[arg(long, default_value_t = 1e-12, value_parser = parse_positive)]
    tol: f64,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record every Nth step (default: the table-size rule)
    #[arg(long)]
    stride: Option<usize>,
    /// Override the game's discount factor
    #[arg(long, value_parser = parse_gamma)]
    gamma: Option<f64>,
    /// Output CSV path (default: learn.csv in the output directory)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (default: verify.csv in the output directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write every Nth step to the CSV; checks still cover every step
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    stride: u32,
    /// Override the game's discount factor
    #[arg(long, value_parser = parse_gamma)]
    gamma: Option<f64>,
    #[arg(long, value_enum, default_value_t = SamplingArg::File)]
    sampling: SamplingArg,
    /// Draw the common initial table uniformly from the unit ball
    #[arg(long)]
    random_q0: bool,
    #[arg(long, value_enum, default_value_t = BoundVariantArg::Printed)]
    bound_variant: BoundVariantArg,
    /// Slack allowed when empirical means exceed a bound
    #[arg(long, default_value_t = 0.0)]
    mc_tol: f64,
    /// Elementwise tolerance for the path-wise ordering checks
    #[arg(long, default_value_t = 1e-9, value_parser = parse_positive)]
    ordering_tol: f64,
    /// Tolerance for the exact algebraic identities
    #[arg(long, default_value_t = 1e-12, value_parser = parse_positive)]
    identity_tol: f64,
}

#[derive(Args)]
struct BoundsArgs {
    /// Derive parameters from a game file (with --alpha); otherwise pass
    /// them explicitly
    #[arg(long)]
    game: Option<PathBuf>,
    #[arg(long, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    kmax: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    stride: u32,
    #[arg(long, value_enum, default_value_t = BoundVariantArg::Printed)]
    bound_variant: BoundVariantArg,
    #[arg(long, value_parser = parse_gamma)]
    gamma: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d_min: Option<f64>,
    #[arg(long)]
    d_max: Option<f64>,
    #[arg(long)]
    q0_err_2: Option<f64>,
    #[arg(long)]
    q0_err_inf: Option<f64>,
    /// Output CSV path (default: print to stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 3)]
    states: usize,
    #[arg(long, default_value_t = 2)]
    actions_user: usize,
    #[arg(long, default_value_t = 2)]
    actions_adv: usize,
    #[arg(long, default_value_t = 0.8, value_parser = parse_gamma)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Sampling block embedded in the file
    #[arg(long, value_enum, default_value_t = GenerateSampling::Uniform)]
    sampling: GenerateSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenerateSampling {
    Uniform,
    Random,
    None,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Learn(args) => cmd_learn(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::Bounds(args) => cmd_bounds(&args),
        Command::Generate(args) => cmd_generate(&args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn default_out(name: &str, requested: Option<&Path>) -> PathBuf {
    match requested {
        Some(path) => path.to_path_buf(),
        None => {
            let dir = std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."));
            dir.join(name)
        }
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<bool> {
    let loaded = game_io::load_game(&args.game)?;
    let result = solve_optimal_q(&loaded.spec, args.tol)?;
    let dims = loaded.spec.dims();
    println!(
        "solved in {} iterations, residual {}, certificate {}",
        result.iterations,
        fmt_f(result.residual),
        fmt_f(result.error_certificate)
    );
    for s in 0..dims.num_states {
        for a in 0..dims.num_actions_user {
            for b in 0..dims.num_actions_adv {
                println!(
                    "Q*(s={s},a={a},b={b}) = {}",
                    fmt_f(result.q_star.get(s, a, b))
                );
            }
        }
    }
    let policies = greedy_policies(&result.q_star);
    for s in 0..dims.num_states {
        println!("pi*(s={s}) = {}", policies.user_action(s));
    }
    for s in 0..dims.num_states {
        for a in 0..dims.num_actions_user {
            println!("mu*(s={s},a={a}) = {}", policies.adversary_action(s, a));
        }
    }
    Ok(true)
}

fn cmd_learn(args: &LearnArgs) -> Result<bool> {
    let loaded = game_io::load_game(&args.game)?;
    let spec = match args.gamma {
        Some(gamma) => loaded.spec.with_discount(gamma)?,
        None => loaded.spec,
    };
    let model = loaded
        .sampling
        .unwrap_or_else(|| SamplingModel::uniform(spec.dims()));
    let q_star = solve_optimal_q(&spec, 1e-12)?.q_star;
    let stride = match args.stride {
        Some(k) => SnapshotStride::Every(k),
        None => SnapshotStride::DefaultRule,
    };
    let q0 = QTable::zeros(spec.dims());
    let run = run_q_learning(
        &spec, &model, args.alpha, args.steps, args.seed, &q0, stride,
    )?;

    let out = default_out("learn.csv", args.out.as_deref());
    let mut csv = String::from("k,err_inf,err_2,q_inf\n");
    for snap in &run.snapshots {
        let diff = snap.q.sub(&q_star);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            snap.step,
            fmt_f(switchq_core::linalg::vec_inf_norm(diff.values())),
            fmt_f(switchq_core::linalg::vec_two_norm(diff.values())),
            fmt_f(snap.q.inf_norm())
        ));
    }
    std::fs::write(&out, csv)?;
    let meta = serde_json::json!({
        "tool": "switchq",
        "version": env!("CARGO_PKG_VERSION"),
        "rng_algorithm": switchq_core::rng::RNG_ALGORITHM,
        "game": args.game.display().to_string(),
        "alpha": args.alpha,
        "steps": args.steps,
        "seed": args.seed,
        "snapshots": run.snapshots.len(),
        "max_q_inf": run.max_inf_norm,
        "csv_columns": ["k", "err_inf", "err_2", "q_inf"],
    });
    std::fs::write(
        metadata_path(&out),
        serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n",
    )?;
    println!(
        "learned {} steps, final error {}, wrote {}",
        run.steps,
        fmt_f(run.final_q.sub(&q_star).inf_norm()),
        out.display()
    );
    Ok(true)
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let out = default_out("verify.csv", args.out.as_deref());
    let cfg = ExperimentConfig {
        game: GameSource::Path(args.game.display().to_string()),
        gamma_override: args.gamma,
        sampling: args.sampling.into(),
        alpha: args.alpha,
        steps: args.steps,
        trials: args.trials as usize,
        base_seed: args.seed,
        csv_stride: args.stride as usize,
        random_q0: args.random_q0,
        bound_variant: args.bound_variant.into(),
        mc_tolerance: args.mc_tol,
        ordering_tol: args.ordering_tol,
        identity_tol: args.identity_tol,
        solve_tol: 1e-12,
    };
    let record = experiment::run_experiment(&cfg)?;
    let diagnostics = record.diagnostics(&cfg);
    output::write_verify_outputs(&cfg, &record, &diagnostics, &out)?;

    println!(
        "verify: {} trials x {} steps, rho={}, ordering violations={}, \
max identity residual={}",
        record.trials,
        record.steps,
        fmt_f(record.rho),
        record.total_ordering_violations,
        fmt_f(record.max_error_identity_residual),
    );
    for check in &record.bound_checks {
        println!(
            "  {} vs {}: min margin {} ({} violations)",
            check.bound,
            check.series,
            fmt_f(check.min_margin),
            check.violations
        );
    }
    println!(
        "wrote {} and {}",
        out.display(),
        metadata_path(&out).display()
    );
    if diagnostics.is_empty() {
        Ok(true)
    } else {
        for d in &diagnostics {
            eprintln!("violation: {}: {}", d.rule, d.detail);
        }
        Ok(false)
    }
}

fn cmd_bounds(args: &BoundsArgs) -> Result<bool> {
    let params = match &args.game {
        Some(path) => {
            let loaded = game_io::load_game(path)?;
            let spec = match args.gamma {
                Some(gamma) => loaded.spec.with_discount(gamma)?,
                None => loaded.spec,
            };
            let model = loaded
                .sampling
                .unwrap_or_else(|| SamplingModel::uniform(spec.dims()));
            let q_star = solve_optimal_q(&spec, 1e-12)?.q_star;
            let q0 = QTable::zeros(spec.dims());
            BoundParams::for_run(
                &spec,
                &model,
                args.alpha,
                &q0,
                &q_star,
                args.bound_variant.into(),
            )?
        }
        None => {
            let missing = |name: &'static str| switchq_core::Error::InvalidParameter {
                name,
                reason: "required when --game is not given".into(),
            };
            BoundParams::new(
                args.alpha,
                args.gamma.ok_or_else(|| missing("gamma"))?,
                args.d_min.ok_or_else(|| missing("d-min"))?,
                args.d_max.ok_or_else(|| missing("d-max"))?,
                args.n.ok_or_else(|| missing("n"))?,
                1.0,
                args.q0_err_2.ok_or_else(|| missing("q0-err-2"))?,
                args.q0_err_inf.ok_or_else(|| missing("q0-err-inf"))?,
                args.bound_variant.into(),
            )?
        }
    };
    let mut csv = String::from(
        "k,bound_thm1,bound_thm2,bound_cor1_eq4,bound_cor1_eq5,bound_thm4,bound_thm5\n",
    );
    let ids = [
        BoundId::Thm1,
        BoundId::Thm2,
        BoundId::Cor1Eq4,
        BoundId::Cor1Eq5,
        BoundId::Thm4,
        BoundId::Thm5,
    ];
    for k in (0..=args.kmax).step_by(args.stride as usize) {
        csv.push_str(&k.to_string());
        for id in ids {
            csv.push(',');
            csv.push_str(&fmt_f(id.eval(k, &params)));
        }
        csv.push('\n');
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv)?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(true)
}

fn cmd_generate(args: &GenerateArgs) -> Result<bool> {
    let dims = Dims::new(args.actions_user, args.actions_adv, args.states)?;
    let spec = generate_random_game(dims, args.gamma, args.seed)?;
    let sampling = match args.sampling {
        GenerateSampling::Uniform => Some(SamplingModel::uniform(dims)),
        GenerateSampling::Random => Some(SamplingModel::random(dims, args.seed.wrapping_add(1))),
        GenerateSampling::None => None,
    };
    game_io::save_game(&args.out, &spec, sampling.as_ref())?;
    println!(
        "generated {}x{}x{} game (gamma={}) at {}",
        args.actions_user,
        args.actions_adv,
        args.states,
        args.gamma,
        args.out.display()
    );
    Ok(true)
}
