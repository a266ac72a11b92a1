// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hptmt_cli::bench::{cmd_bench, BenchOp};
use hptmt_cli::config::{read_peers, RunConfig, Transport};
use hptmt_cli::csvio::{parse_schema_spec, read_csv, write_csv, CsvError};
use hptmt_cli::mdscmd::{cmd_mds, MdsArgs};
use hptmt_cli::verify::{cmd_verify, render, Suite, VerifyOptions};
use hptmt_cli::{CliError, CliResult, EXIT_OK, EXIT_USAGE};

#[derive(Parser, Debug)]
#[command(
    name = "hptmt",
    version,
    about = "Distributed table and array operators"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Number of workers (tcp: defaults to the number of peers).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = TransportArg::Inproc)]
    transport: TransportArg,
    /// tcp: file with one host:port per line; line index is the rank.
    #[arg(long, global = true)]
    peers: Option<PathBuf>,
    /// tcp: rank of this process.
    #[arg(long, global = true)]
    rank: Option<usize>,
    /// CSV schema, e.g. "id:i64,name:str,score:f64".
    #[arg(long, global = true)]
    schema: Option<String>,
    /// Per-worker memory budget in bytes.
    #[arg(long, global = true)]
    memory_budget: Option<usize>,
    #[arg(long, global = true)]
    spill_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    rows_per_worker: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TransportArg {
    Inproc,
    Tcp,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the verification suites and print a pass/fail table.
    Verify {
        /// Comma-separated subset of suites.
        #[arg(long, value_delimiter = ',')]
        suites: Vec<String>,
        /// Smaller workloads, for smoke testing.
        #[arg(long)]
        quick: bool,
    },
    /// Benchmark one operator on generated tables; prints a JSON report.
    Bench {
        #[arg(value_enum)]
        operator: BenchOp,
    },
    /// Embed the rows of a CSV file; writes the embedding to --out.
    Mds {
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        dims: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Comma-separated feature columns (default: all).
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
    },
    /// Parse a CSV file against --schema; with --out, write it back out.
    Csvcheck { input: PathBuf },
}

fn run_config(c: &Common) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::inproc(c.workers.unwrap_or(1));
    if c.transport == TransportArg::Tcp {
        let peers_file = c
            .peers
            .as_ref()
            .ok_or_else(|| CliError::Usage("--transport tcp needs --peers".into()))?;
        let rank = c
            .rank
            .ok_or_else(|| CliError::Usage("--transport tcp needs --rank".into()))?;
        let peers = read_peers(peers_file)?;
        cfg.workers = c.workers.unwrap_or(peers.len());
        cfg.transport = Transport::Tcp { peers, rank };
    } else if c.peers.is_some() || c.rank.is_some() {
        return Err(CliError::Usage(
            "--peers and --rank apply to --transport tcp only".into(),
        ));
    }
    if let Some(b) = c.memory_budget {
        cfg.memory_budget = b;
    }
    if let Some(r) = c.rows_per_worker {
        cfg.rows_per_worker = r;
    }
    cfg.spill_dir = c.spill_dir.clone();
    cfg.seed = c.seed;
    cfg.out = c.out.clone();
    cfg.validate()?;
    Ok(cfg)
}

fn need_schema(c: &Common) -> CliResult<&str> {
    c.schema
        .as_deref()
        .ok_or_else(|| CliError::Usage("--schema is required".into()))
}

fn verify_options(c: &Common, cfg: &RunConfig, quick: bool) -> VerifyOptions {
    let mut opts = VerifyOptions::for_world(cfg.workers);
    opts.seed = c.seed;
    if let Some(b) = c.memory_budget {
        opts.sort_budget = b;
        opts.sort_input_bytes = b / 16 * 100;
    }
    if quick {
        opts = VerifyOptions {
            relational_cases: 50,
            dist_instances: 10,
            dist_max_rows: 5000,
            shuffle_instances: 20,
            aggregate_rows: 100_000,
            sort_input_bytes: opts.sort_input_bytes.min(4 << 20),
            sort_budget: opts.sort_budget.min(640 << 10),
            stream_chunks: 100,
            mds_points: 20,
            ..opts
        };
    }
    opts
}

fn run(cli: Cli) -> CliResult<()> {
    let c = &cli.common;
    match &cli.command {
        Command::Verify { suites, quick } => {
            let cfg = run_config(c)?;
            let selected = if suites.is_empty() {
                Suite::ALL.to_vec()
            } else {
                suites
                    .iter()
                    .map(|s| {
                        Suite::from_name(s)
                            .ok_or_else(|| CliError::Usage(format!("unknown suite {s:?}")))
                    })
                    .collect::<CliResult<Vec<_>>>()?
            };
            let outcomes = cmd_verify(&cfg, &verify_options(c, &cfg, *quick), &selected)?;
            print!("{}", render(&outcomes));
            let failed: Vec<&str> = outcomes
                .iter()
                .filter(|o| !o.passed)
                .map(|o| o.suite.name())
                .collect();
            if !failed.is_empty() {
                return Err(CliError::Verification(format!(
                    "failing suites: {}",
                    failed.join(", ")
                )));
            }
        }
        Command::Bench { operator } => {
            let cfg = run_config(c)?;
            let report = cmd_bench(&cfg, *operator)?;
            println!("{}", report.to_json());
        }
        Command::Mds {
            input,
            dims,
            iters,
            tol,
            features,
        } => {
            let cfg = run_config(c)?;
            let args = MdsArgs {
                input: input.clone(),
                schema: need_schema(c)?.to_string(),
                features: features.clone(),
                dims: *dims,
                iters: *iters,
                tol: *tol,
            };
            let report = cmd_mds(&cfg, &args)?;
            println!("{}", report.to_json());
        }
        Command::Csvcheck { input } => {
            let schema =
                parse_schema_spec(need_schema(c)?).map_err(|e| CliError::Usage(e.to_string()))?;
            let table = read_csv(input, &schema).map_err(|e| match e {
                e @ CsvError::Io { .. } => CliError::Csv(e),
                e => CliError::Verification(e.to_string()),
            })?;
            if let Some(out) = &c.out {
                write_csv(&table, out)?;
            }
            println!("{} rows, {} columns", table.num_rows(), table.num_columns());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_USAGE as u8
            } else {
                EXIT_OK as u8
            });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("hptmt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
