use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use excall_core::crypto::{keygen_from_label, PublicKey};
use excall_harness::experiment::RemoteOracle;
use excall_harness::report::summary_text;
use excall_harness::{demo, emit_report, run_experiment, ExperimentConfig, HarnessError, Impl};
use excall_oracle::{serve, OracleService};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "excall-chain", about = "Betting experiments on a local proof-of-authority chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time a batch of bets and write a CSV report.
    Run(RunArgs),
    /// Serve signed random outcomes over HTTP.
    ServeOracle(ServeArgs),
    /// Place one bet end to end and print each step.
    Demo,
}

#[derive(Args, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct RunArgs {
    /// JSON file supplying any of these flags; flags given here win.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long = "impl", value_enum)]
    #[serde(rename = "impl")]
    implementation: Option<Impl>,
    #[arg(long)]
    initiators: Option<usize>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    period_ms: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    verifiers: Option<usize>,
    #[arg(long)]
    win_prob: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use a running oracle instead of starting one.
    #[arg(long)]
    oracle_url: Option<String>,
    /// Key label the running oracle was started with.
    #[arg(long)]
    oracle_key_seed: Option<String>,
    /// Hex public key of the running oracle; overrides the key label.
    #[arg(long)]
    oracle_pubkey: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn merged(self) -> Result<RunArgs, HarnessError> {
        let Some(path) = &self.config else { return Ok(self) };
        let text = std::fs::read_to_string(path)?;
        let file: RunArgs = serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Ok(RunArgs {
            config: None,
            implementation: self.implementation.or(file.implementation),
            initiators: self.initiators.or(file.initiators),
            iterations: self.iterations.or(file.iterations),
            period_ms: self.period_ms.or(file.period_ms),
            repeats: self.repeats.or(file.repeats),
            verifiers: self.verifiers.or(file.verifiers),
            win_prob: self.win_prob.or(file.win_prob),
            seed: self.seed.or(file.seed),
            oracle_url: self.oracle_url.or(file.oracle_url),
            oracle_key_seed: self.oracle_key_seed.or(file.oracle_key_seed),
            oracle_pubkey: self.oracle_pubkey.or(file.oracle_pubkey),
            out: self.out.or(file.out),
        })
    }

    fn experiment(&self) -> Result<ExperimentConfig, HarnessError> {
        let d = ExperimentConfig::default();
        let oracle = match &self.oracle_url {
            None => None,
            Some(url) => {
                let public_key = match &self.oracle_pubkey {
                    Some(h) => PublicKey::from_hex(h).map_err(|e| HarnessError::Config(format!("oracle key: {e}")))?,
                    None => keygen_from_label(self.oracle_key_seed.as_deref().unwrap_or(DEFAULT_KEY_SEED)).public_key(),
                };
                Some(RemoteOracle { url: url.clone(), public_key })
            }
        };
        let c = ExperimentConfig {
            implementation: self.implementation.unwrap_or(d.implementation),
            initiators: self.initiators.unwrap_or(d.initiators),
            iterations: self.iterations.unwrap_or(d.iterations),
            block_period_ms: self.period_ms.unwrap_or(d.block_period_ms),
            repeats: self.repeats.unwrap_or(d.repeats),
            verifiers: self.verifiers.unwrap_or(d.verifiers),
            win_probability: self.win_prob.unwrap_or(d.win_probability),
            oracle_seed: self.seed.unwrap_or(d.oracle_seed),
            oracle,
            ..d
        };
        c.validate()?;
        Ok(c)
    }
}

const DEFAULT_KEY_SEED: &str = "oracle";

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    win_prob: f64,
    /// Label the signing key is derived from.
    #[arg(long, default_value = DEFAULT_KEY_SEED)]
    key_seed: String,
    /// Extra delay before each answer, in milliseconds.
    #[arg(long, default_value_t = 0)]
    latency_ms: u64,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let args = args.merged()?;
            let config = args.experiment()?;
            let report = run_experiment(&config)?;
            let reports = [report];
            let summary = match &args.out {
                Some(path) => emit_report(&reports, path)?,
                None => {
                    excall_harness::write_csv(&reports, std::io::stdout())?;
                    summary_text(&reports)
                }
            };
            print!("{summary}");
            if !reports[0].complete() {
                return Err(HarnessError::Timeout("every bet to resolve".into()));
            }
        }
        Command::ServeOracle(a) => {
            let svc = OracleService::new(keygen_from_label(&a.key_seed), a.win_prob, a.seed)?
                .with_latency(Duration::from_millis(a.latency_ms));
            let svc = Arc::new(svc);
            let handle = serve(&a.bind, svc.clone())?;
            println!("serving on {} with key {}", handle.url(), svc.public_key().to_hex());
            loop {
                std::thread::park();
            }
        }
        Command::Demo => {
            demo::run_demo(&mut std::io::stdout())?;
        }
    }
    Ok(())
}
