use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use palms_core::benchmark::{emit_results, limited_survey, run_experiment, ExperimentConfig, MethodId, NeighborPool};
use palms_core::data::read_unlabeled_csv;
use palms_core::{load_csv, ErrorKind, LimitedSetParams, MixingRule};
use palms_service::{serve, SessionStore};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "palms", version, about = "Active learning with post-hoc LOOCV model selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the benchmark and write results.json plus one plot file per method.
    Run(RunArgs),
    /// Mean percentage of limited test points over repeated balanced draws.
    Limited(LimitedArgs),
    /// Serve the labeling session API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "RANDOM,DEFAULT,ORACLE,PALMS,PALMS_FWC")]
    methods: Vec<MethodId>,
    #[arg(long, default_value_t = 55)]
    budget: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 50)]
    test_per_class: usize,
    #[arg(long, default_value_t = 2)]
    init_per_class: usize,
    #[arg(long, default_value_t = 1.5)]
    weight: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// ORACLE picks one model by its final-budget accuracy instead of the best per budget.
    #[arg(long)]
    oracle_final_budget: bool,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct LimitedArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0.3)]
    rho: f64,
    #[arg(long, default_value_t = 50)]
    test_per_class: usize,
    #[arg(long, default_value_t = 20)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `opposite` counts neighbors of the other class, `minority` the smaller class count.
    #[arg(long, default_value = "opposite", value_parser = parse_rule)]
    rule: MixingRule,
    /// Neighbor search space: `test` (the drawn test set) or `full` (whole dataset).
    #[arg(long, default_value = "test")]
    reference: NeighborPool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// CSV pool offered to sessions under its file stem; repeatable.
    #[arg(long)]
    dataset: Vec<PathBuf>,
    /// Directory for per-session event logs; sessions found there are resumed.
    #[arg(long)]
    log_dir: Option<PathBuf>,
}

fn parse_rule(s: &str) -> Result<MixingRule, String> {
    match s {
        "opposite" | "opposite_class" => Ok(MixingRule::OppositeClass),
        "minority" => Ok(MixingRule::Minority),
        other => Err(format!("unknown rule `{other}` (expected `opposite` or `minority`)")),
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<palms_core::Error> for Failure {
    fn from(e: palms_core::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Numerical => EXIT_NUMERICAL,
            ErrorKind::Data | ErrorKind::Io => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let config = ExperimentConfig {
        dataset: args.dataset,
        methods: args.methods,
        budget: args.budget,
        trials: args.trials,
        test_per_class: args.test_per_class,
        init_per_class: args.init_per_class,
        weight: args.weight,
        seed: args.seed,
        stride: args.stride,
        oracle_final_budget: args.oracle_final_budget,
        ..Default::default()
    };
    config.validate().map_err(|e| Failure {
        code: EXIT_USAGE,
        message: e.to_string(),
    })?;
    let result = run_experiment(&config)?;
    let written = emit_results(&result, &args.out)?;
    let last = *result.budgets.last().unwrap_or(&0);
    println!("budget {last}, {} trials", result.trials.len());
    for (method, agg) in &result.aggregates {
        let (Some(m), Some(s)) = (agg.mean.last(), agg.std.last()) else { continue };
        println!("{:<10} {m:.4} ± {s:.4}", method.as_str());
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn limited(args: LimitedArgs) -> Result<(), Failure> {
    let params = LimitedSetParams {
        k: args.k,
        rho: args.rho,
        rule: args.rule,
    };
    params.validate().map_err(|e| Failure {
        code: EXIT_USAGE,
        message: e.to_string(),
    })?;
    let data = load_csv(&args.dataset)?;
    let survey = limited_survey(&data, &params, args.reference, args.test_per_class, args.draws, args.seed)?;
    println!("{:.2}", 100.0 * survey.mean);
    Ok(())
}

fn serve_cmd(args: ServeArgs) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure {
        code: EXIT_DATA,
        message: e.to_string(),
    };
    let (mut store, problems) = match &args.log_dir {
        Some(dir) => SessionStore::open(dir).map_err(|e| Failure {
            code: EXIT_DATA,
            message: e.to_string(),
        })?,
        None => (SessionStore::in_memory(), Vec::new()),
    };
    for p in problems {
        eprintln!("skipped log {p}");
    }
    for path in &args.dataset {
        let file = std::fs::File::open(path).map_err(|e| Failure {
            code: EXIT_DATA,
            message: format!("{}: {e}", path.display()),
        })?;
        let (_, features) = read_unlabeled_csv(file)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        eprintln!("dataset `{name}`: {} points", features.len());
        store.register_dataset(name, features);
    }
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(io)?;
    eprintln!("listening on http://{addr}");
    runtime.block_on(serve(Arc::new(store), addr)).map_err(io)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Limited(args) => limited(args),
        Command::Serve(args) => serve_cmd(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        let numerical = palms_core::Error::NonConvergence {
            iterations: 1,
            violation: 1.0,
            tolerance: 1e-3,
        };
        assert_eq!(Failure::from(numerical).code, EXIT_NUMERICAL);
        let nested = palms_core::Error::Trial {
            trial: 0,
            source: Box::new(palms_core::Error::NonConvergence {
                iterations: 1,
                violation: 1.0,
                tolerance: 1e-3,
            }),
        };
        assert_eq!(Failure::from(nested).code, EXIT_NUMERICAL);
        assert_eq!(Failure::from(palms_core::Error::EmptyDataset).code, EXIT_DATA);
        let io = palms_core::Error::Io(std::io::Error::from(std::io::ErrorKind::NotFound));
        assert_eq!(Failure::from(io).code, EXIT_DATA);
    }

    #[test]
    fn rules_parse() {
        assert_eq!(parse_rule("minority"), Ok(MixingRule::Minority));
        assert_eq!(parse_rule("opposite"), Ok(MixingRule::OppositeClass));
        assert!(parse_rule("both").is_err());
    }
}
