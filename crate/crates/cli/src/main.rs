//! Command-line driver. Every command is a request to the HTTP service:
//! the one at `--server`, or one started in-process on a loopback port.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use delegacoin::api::{AttackRequest, BenchRequest, DiskGrowthRequest};
use delegacoin::eval::{parse_schedule, FaultPlan, RunConfig, BENCH_ITERATIONS, DISK_GROWTH_SIZES};
use delegacoin::harness::Verdict;
use delegacoin_client::{Client, ClientError};
use delegacoin_server::AppState;

const USAGE: u8 = 2;

/// A comma-separated amount list as one flag value.
#[derive(Debug, Clone)]
struct Amounts(Vec<u64>);

fn amounts(s: &str) -> Result<Amounts, String> {
    parse_schedule(s).map(Amounts).map_err(|e| e.to_string())
}
const PROTOCOL: u8 = 1;

#[derive(Parser, Debug)]
#[command(name = "delegacoin", version, about = "Offline coin delegation between two enclaves")]
struct Cli {
    #[command(flatten)]
    run: RunArgs,

    /// Base URL of a running service; starts one in-process when omitted.
    #[arg(long, global = true)]
    server: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML file with run settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Owner deposit in µBTC.
    #[arg(long, global = true)]
    deposit: Option<u64>,
    /// Comma-separated delegation amounts, e.g. 200,400.
    #[arg(long, global = true, value_parser = amounts)]
    schedule: Option<Amounts>,
    /// Confirmation depth in blocks.
    #[arg(long, global = true)]
    depth: Option<u64>,
    /// Fault plan, e.g. drop=0.1,dup=0.1,crash=host/after-persist@1; "none" for a clean run.
    #[arg(long, global = true)]
    faults: Option<FaultPlan>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Setup, deposit, the delegation schedule and the delegatee's spends; writes transcript.txt.
    Demo,
    /// Times each protocol operation; writes bench.tsv.
    Bench {
        #[arg(long, default_value_t = BENCH_ITERATIONS)]
        iterations: usize,
    },
    /// Seal-store size against number of delegations; writes diskgrowth.csv.
    Diskgrowth {
        /// Comma-separated set sizes.
        #[arg(long, value_parser = amounts)]
        sizes: Option<Amounts>,
    },
    /// Runs a scripted attack and reports whether it was defended; writes transcript.txt.
    Attack { name: String },
    /// Lists the attack scenarios.
    Attacks,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, String> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).map_err(|e| e.to_string())?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.deposit {
            cfg.deposit_amount = v;
        }
        if let Some(v) = &self.schedule {
            cfg.delegation_schedule = v.0.clone();
        }
        if let Some(v) = self.depth {
            cfg.confirmation_depth = v;
        }
        if let Some(v) = self.faults {
            cfg.fault_plan = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

enum Failure {
    Usage(String),
    Protocol(String),
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Protocol(e.to_string())
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&path, contents))
        .map_err(|e| Failure::Protocol(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

async fn run(cli: Cli, client: &Client) -> Result<u8, Failure> {
    let cfg = cli.run.resolve().map_err(Failure::Usage)?;
    let out = &cfg.output_dir;
    match cli.command {
        Command::Demo => {
            let report = client.demo(&cfg).await?;
            print!("{}", report.transcript);
            write(out, "transcript.txt", &report.transcript)?;
            if let Some(e) = &report.error {
                eprintln!("error: {e}");
            }
            Ok(report.exit_code as u8)
        }
        Command::Bench { iterations } => {
            let report = client
                .bench(&BenchRequest {
                    iterations,
                    seed: cfg.seed,
                })
                .await?;
            let tsv = report.to_tsv();
            print!("{tsv}");
            write(out, "bench.tsv", &tsv)?;
            println!(
                "full delegation path: {:.3} ms (published {} ms, budget {} ms): {}",
                report.full_delegation.mean_ms,
                report.claim_ms,
                report.budget_ms,
                if report.within_budget() { "within budget" } else { "over budget" }
            );
            Ok(0)
        }
        Command::Diskgrowth { sizes } => {
            let report = client
                .diskgrowth(&DiskGrowthRequest {
                    seed: cfg.seed,
                    sizes: sizes.map_or_else(|| DISK_GROWTH_SIZES.to_vec(), |s| s.0),
                })
                .await?;
            let csv = report.to_csv();
            print!("{csv}");
            write(out, "diskgrowth.csv", &csv)?;
            println!(
                "linear fit: bytes = {:.2} * n + {:.2}, R² = {:.6}",
                report.fit.slope, report.fit.intercept, report.fit.r_squared
            );
            Ok(0)
        }
        Command::Attack { name } => {
            let report = match client.attack(&name, &AttackRequest { seed: cfg.seed }).await {
                Err(e) if e.is_usage() => {
                    let known = client.attacks().await?;
                    let mut msg = format!("{e}\navailable scenarios:");
                    for s in known {
                        msg.push_str(&format!("\n  {:<32} {}", s.name, s.description));
                    }
                    return Err(Failure::Usage(msg));
                }
                r => r?,
            };
            print!("{}", report.transcript);
            write(out, "transcript.txt", &report.transcript)?;
            println!("{}: {}", report.name, report.verdict);
            Ok(if report.verdict == Verdict::Defended { 0 } else { PROTOCOL })
        }
        Command::Attacks => {
            for s in client.attacks().await? {
                println!("{:<32} {}", s.name, s.description);
            }
            Ok(0)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let (client, server) = match &cli.server {
        Some(url) => (Client::new(url.clone()), None),
        None => match delegacoin_server::spawn(([127, 0, 0, 1], 0).into(), AppState::default()).await {
            Ok((addr, task)) => (Client::new(format!("http://{addr}")), Some(task)),
            Err(e) => {
                eprintln!("error: cannot start the local service: {e}");
                return ExitCode::from(PROTOCOL);
            }
        },
    };
    let code = match run(cli, &client).await {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            USAGE
        }
        Err(Failure::Protocol(msg)) => {
            eprintln!("error: {msg}");
            PROTOCOL
        }
    };
    if let Some(task) = server {
        task.abort();
    }
    ExitCode::from(code)
}
