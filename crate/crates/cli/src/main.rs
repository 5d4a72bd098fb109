use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use policy_advice::chain::evaluate_policy;
use policy_advice::envs::{advice_set, make_gridworld, GridSpec};
use policy_advice::harness::{
    aggregate, run_experiment, sweep, write_summary_csv, AgentKind, EnvSpec, Experiment, ExperimentConfig,
    ExperimentResult, LoadedBundle,
};
use policy_advice::rlpa::SpanFunction;
use policy_advice::{DeterministicPolicy, TabularMdp};
use serde_json::json;

#[derive(Parser)]
#[command(name = "rlpa", version, about = "Policy-advice reinforcement learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replications of one agent on one environment.
    Run(RunArgs),
    /// Run the same experiment over several grid sides.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "4,6,8")]
        sides: Vec<usize>,
    },
    /// Write a grid-world MDP and its advice policies.
    Gen {
        #[arg(long, default_value_t = 4)]
        side: usize,
        #[arg(long, default_value_t = 4)]
        model_id: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print gain, bias span and recurrence structure of a policy.
    Analyze {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Summarize result bundles into one CSV table.
    Aggregate {
        bundles: Vec<PathBuf>,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 4)]
    env_side: usize,
    #[arg(long, default_value_t = 4)]
    model_id: u8,
    /// MDP file to use instead of a grid world.
    #[arg(long, conflicts_with = "env_side")]
    env_file: Option<PathBuf>,
    #[arg(long, default_value = "rlpa")]
    agent: AgentKind,
    #[arg(long, default_value_t = 100_000)]
    horizon: u64,
    #[arg(long, default_value_t = 1)]
    runs: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// `log` or `const:<h>`.
    #[arg(long, default_value = "log")]
    span: SpanFunction,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, num_args = 1..)]
    advice_from: Option<Vec<PathBuf>>,
    #[arg(long, num_args = 1..)]
    models_from: Option<Vec<PathBuf>>,
}

impl RunArgs {
    fn config(&self) -> ExperimentConfig {
        let env = match &self.env_file {
            Some(path) => EnvSpec::File { path: path.clone() },
            None => EnvSpec::Grid { side: self.env_side, model_id: self.model_id },
        };
        ExperimentConfig {
            env,
            agent: self.agent,
            horizon: self.horizon,
            runs: self.runs,
            base_seed: self.seed,
            delta: self.delta,
            span_function: self.span,
            advice_from: self.advice_from.clone(),
            models_from: self.models_from.clone(),
        }
    }
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn write_summary(results: &[&ExperimentResult], path: &Path) -> CliResult {
    let loaded: Vec<LoadedBundle> = results.iter().map(|r| LoadedBundle::from_result(r)).collect();
    let rows = aggregate(&loaded)?;
    write_summary_csv(&rows, fs::File::create(path)?)?;
    Ok(())
}

fn report(result: &ExperimentResult) -> serde_json::Value {
    json!({
        "agent": result.bundle.config.agent,
        "env": result.bundle.env_label,
        "num_states": result.bundle.num_states,
        "horizon": result.bundle.config.horizon,
        "mu_plus": result.bundle.mu_plus,
        "summary": result.bundle.summary,
    })
}

fn run(args: &RunArgs) -> CliResult {
    let experiment = Experiment::prepare(args.config())?;
    let result = run_experiment(&experiment);
    result.write(&args.out)?;
    write_summary(&[&result], &args.out.join("summary.csv"))?;
    println!("{}", report(&result));
    Ok(())
}

fn run_sweep(args: &RunArgs, sides: &[usize]) -> CliResult {
    let results = sweep(&args.config(), sides)?;
    for (side, result) in sides.iter().zip(&results) {
        result.write(&args.out.join(format!("side_{side}")))?;
        println!("{}", report(result));
    }
    write_summary(&results.iter().collect::<Vec<_>>(), &args.out.join("summary.csv"))?;
    Ok(())
}

fn gen(side: usize, model_id: u8, out: &Path) -> CliResult {
    fs::create_dir_all(out)?;
    make_gridworld(&GridSpec::new(side, model_id))?.save(out.join("mdp.json"))?;
    let mut files = Vec::new();
    for (k, policy) in advice_set(side)?.iter().enumerate() {
        let path = out.join(format!("advice_{}.json", k + 1));
        policy.save(&path)?;
        files.push(path);
    }
    println!("{}", json!({ "mdp": out.join("mdp.json"), "advice": files }));
    Ok(())
}

fn analyze(mdp: &Path, policy: &Path) -> CliResult {
    let mdp = TabularMdp::load(mdp)?;
    let policy = DeterministicPolicy::load(policy)?;
    let sol = evaluate_policy(&mdp, &policy)?;
    println!(
        "{}",
        json!({
            "gain": sol.gain(),
            "mu": sol.mu,
            "bias": sol.bias,
            "span": sol.span,
            "unichain": sol.is_unichain(),
            "recurrent_classes": sol.classification.recurrent_classes,
            "transient": sol.classification.transient,
            "residual": sol.residual,
        })
    );
    Ok(())
}

fn aggregate_dirs(dirs: &[PathBuf], out: Option<&Path>) -> CliResult {
    let loaded = dirs.iter().map(|d| LoadedBundle::load(d)).collect::<Result<Vec<_>, _>>()?;
    let rows = aggregate(&loaded)?;
    match out {
        Some(path) => write_summary_csv(&rows, fs::File::create(path)?)?,
        None => write_summary_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RLPA_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    let (name, result) = match &cli.command {
        Command::Run(args) => ("run", run(args)),
        Command::Sweep { run, sides } => ("sweep", run_sweep(run, sides)),
        Command::Gen { side, model_id, out } => ("gen", gen(*side, *model_id, out)),
        Command::Analyze { mdp, policy } => ("analyze", analyze(mdp, policy)),
        Command::Aggregate { bundles, out } => ("aggregate", aggregate_dirs(bundles, out.as_deref())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", json!({ "error": { "command": name, "message": err.to_string() } }));
            ExitCode::FAILURE
        }
    }
}
