use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};

use langevin_kl::config::RunConfig;
use langevin_kl::planner::{self, StepPlan, WeakPlanInputs};
use langevin_kl::{experiment, report, verify, Error};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "langevin-kl", version, about = "Plan, run and verify unadjusted Langevin sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a step size and iteration count.
    Plan(PlanArgs),
    /// Execute a TOML run configuration and write its report.
    Run {
        config: PathBuf,
    },
    /// Run a property suite.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Strong,
    Weak,
    Halving,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TargetArg {
    Kl,
    Tv,
    W2,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(clap::Args)]
struct PlanArgs {
    #[arg(long, value_enum)]
    regime: RegimeArg,
    /// Strong-convexity constant.
    #[arg(long)]
    m: Option<f64>,
    /// Gradient-Lipschitz constant.
    #[arg(long = "L", alias = "l")]
    l: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    /// KL target in nats.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_enum, default_value_t = TargetArg::Kl)]
    target: TargetArg,
    /// TV or W2 accuracy for `--target tv|w2`.
    #[arg(long)]
    delta: Option<f64>,
    /// W2(p0, p*) for the weak regime.
    #[arg(long)]
    c1: Option<f64>,
    /// Root second moment of the target for the weak regime.
    #[arg(long)]
    c2: Option<f64>,
    /// Step cap for the weak regime; accepts `inf`.
    #[arg(long = "h-prime", default_value = "inf")]
    h_prime: f64,
    /// Initial KL gap; the halving regime defaults to dL/m.
    #[arg(long)]
    kl0: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn usage(msg: &str) -> ! {
    Cli::command().error(clap::error::ErrorKind::MissingRequiredArgument, msg).exit()
}

fn need<T: Copy>(v: Option<T>, flag: &str, regime: &str) -> T {
    v.unwrap_or_else(|| usage(&format!("--{flag} is required for the {regime} regime")))
}

fn plan(args: &PlanArgs) -> Result<Vec<StepPlan>, Error> {
    let l = need(args.l, "L", "selected");
    let d = need(args.d, "d", "selected");
    match args.regime {
        RegimeArg::Strong => {
            let m = need(args.m, "m", "strong");
            match args.target {
                TargetArg::Kl => Ok(vec![planner::plan_strong(m, l, d, need(args.eps, "eps", "strong"))?]),
                TargetArg::Tv => Ok(vec![planner::plan_strong_tv(m, l, d, need(args.delta, "delta", "strong"))?]),
                TargetArg::W2 => Ok(vec![planner::plan_strong_w2(m, l, d, need(args.delta, "delta", "strong"))?]),
            }
        }
        RegimeArg::Weak => {
            if args.target != TargetArg::Kl {
                usage("the weak regime plans for a KL target only");
            }
            let inputs = WeakPlanInputs {
                c1: need(args.c1, "c1", "weak"),
                c2: need(args.c2, "c2", "weak"),
                h_prime: args.h_prime,
                kl0: need(args.kl0, "kl0", "weak"),
            };
            Ok(vec![planner::plan_weak(inputs, l, d, need(args.eps, "eps", "weak"))?])
        }
        RegimeArg::Halving => {
            if args.target != TargetArg::Kl {
                usage("the halving regime plans for a KL target only");
            }
            let m = need(args.m, "m", "halving");
            let kl0 = args.kl0.unwrap_or_else(|| planner::kl_init_bound(m, l, d));
            planner::plan_halving(m, l, d, need(args.eps, "eps", "halving"), kl0)
        }
    }
}

fn print_plans(plans: &[StepPlan], format: Format) {
    if format == Format::Json {
        println!("{}", serde_json::to_string_pretty(plans).expect("plans serialize"));
        return;
    }
    if plans.is_empty() {
        println!("no stages: the initial gap is already within epsilon");
    }
    for (i, p) in plans.iter().enumerate() {
        if plans.len() > 1 {
            println!("stage {i}");
        }
        println!("regime: {}", serde_json::to_value(p.regime).expect("regime serializes").as_str().unwrap_or("?"));
        println!("h: {:e}", p.h);
        println!("k: {}", p.k);
        println!("epsilon: {}", p.epsilon);
        for n in &p.notes {
            println!("note: {n}");
        }
    }
    if plans.len() > 1 {
        println!("total k: {}", plans.iter().map(|p| p.k).sum::<u64>());
    }
}

fn print_verdict(v: &verify::Verdict) {
    println!(
        "{} {:<34} margin={:+.3e} cases={:<5} {}",
        if v.pass { "PASS" } else { "FAIL" },
        v.name,
        v.margin,
        v.cases,
        v.claim
    );
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("LANGEVIN_KL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("LANGEVIN_KL_THREADS must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    match cli.command {
        Command::Plan(args) => match plan(&args) {
            Ok(plans) => {
                print_plans(&plans, args.format);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_FAIL)
            }
        },
        Command::Run { config } => {
            let result = RunConfig::load(&config).and_then(|cfg| {
                let rep = experiment::execute(&cfg)?;
                let files = report::write_outputs(&rep, &cfg.output)?;
                Ok((rep, files))
            });
            match result {
                Ok((rep, files)) => {
                    for p in &rep.plans {
                        println!("plan: h={:e} k={} epsilon={}", p.h, p.k, p.epsilon);
                    }
                    if let Some(w) = &rep.weak_inputs {
                        println!("weak inputs: c1={} c2={} h_prime={} kl0={}", w.c1, w.c2, w.h_prime, w.kl0);
                    }
                    for v in &rep.verdicts {
                        print_verdict(v);
                    }
                    for f in &files {
                        println!("wrote {}", f.display());
                    }
                    if rep.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_FAIL)
                    }
                }
                Err(e @ Error::Config(_)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_USAGE)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_FAIL)
                }
            }
        }
        Command::Verify { suite, seed, format } => {
            if !verify::SUITES.contains(&suite.as_str()) {
                eprintln!("error: unknown suite '{suite}'; available suites: {}", verify::SUITES.join(", "));
                return ExitCode::from(EXIT_USAGE);
            }
            match verify::run_suite(&suite, seed) {
                Ok(rep) => {
                    if format == Format::Json {
                        println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
                    } else {
                        for v in &rep.verdicts {
                            print_verdict(v);
                        }
                        if let Some(w) = rep.worst() {
                            println!("worst margin: {:+.3e} ({})", w.margin, w.name);
                        }
                        println!("{}: {}", rep.suite, if rep.passed() { "pass" } else { "FAIL" });
                    }
                    if rep.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_FAIL)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_FAIL)
                }
            }
        }
    }
}
