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

//! Acceptance criteria, one line per criterion. Exits non-zero if any fails.

use std::fs;
use std::net::TcpListener;
use std::process::{Command, ExitCode, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use hptmt_cli::config::RunConfig;
use hptmt_cli::verify::{cmd_verify, Suite, VerifyOptions};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, Box<dyn FnOnce() -> Outcome>);

const BIN: &str = env!("CARGO_BIN_EXE_hptmt");

/// Runs one suite at each world size with the full-size workload.
fn suite_at(suite: Suite, worlds: &[usize]) -> Outcome {
    let mut cases = 0;
    for &w in worlds {
        let opts = VerifyOptions::for_world(w);
        let outcomes = cmd_verify(&RunConfig::inproc(w), &opts, &[suite])
            .map_err(|e| format!("W={w}: {e}"))?;
        let o = &outcomes[0];
        if !o.passed {
            return Err(format!("W={w}: {}", o.detail.clone().unwrap_or_default()));
        }
        cases += o.cases;
    }
    Ok(format!("{} checks over W={worlds:?}", cases))
}

fn within(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let detail = f()?;
    let took = start.elapsed();
    if took > limit {
        return Err(format!("took {took:.1?}, limit {limit:?}"));
    }
    Ok(detail)
}

fn c7_chunked_shuffle() -> Outcome {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let _ = tx.send(suite_at(Suite::ChunkedShuffle, &[2, 4, 8]));
    });
    rx.recv_timeout(Duration::from_secs(60))
        .unwrap_or_else(|_| Err("watchdog: no result within 60 s".into()))
}

/// The first four columns of each suite row: name, verdict, cases, digest.
fn logical_lines(stdout: &[u8]) -> Vec<String> {
    String::from_utf8_lossy(stdout)
        .lines()
        .filter(|l| {
            Suite::ALL
                .iter()
                .any(|s| l.split_whitespace().next() == Some(s.name()))
        })
        .map(|l| l.split_whitespace().take(4).collect::<Vec<_>>().join(" "))
        .collect()
}

fn c9_transport_equivalence() -> Outcome {
    let inproc = Command::new(BIN)
        .args(["verify", "--workers", "4", "--transport", "inproc"])
        .output()
        .map_err(|e| e.to_string())?;
    if !inproc.status.success() {
        return Err(format!(
            "inproc: {}",
            String::from_utf8_lossy(&inproc.stdout)
        ));
    }
    let expected = logical_lines(&inproc.stdout);
    if expected.len() != Suite::ALL.len() {
        return Err(format!("inproc printed {} suite rows", expected.len()));
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let listeners: Vec<TcpListener> = (0..4)
        .map(|_| TcpListener::bind("127.0.0.1:0").unwrap())
        .collect();
    let peers: String = listeners
        .iter()
        .map(|l| format!("{}\n", l.local_addr().unwrap()))
        .collect();
    drop(listeners);
    let peers_file = dir.path().join("peers");
    fs::write(&peers_file, peers).map_err(|e| e.to_string())?;
    let children: Vec<_> = (0..4)
        .map(|r| {
            Command::new(BIN)
                .args([
                    "verify",
                    "--transport",
                    "tcp",
                    "--peers",
                    peers_file.to_str().unwrap(),
                    "--rank",
                    &r.to_string(),
                ])
                .stdout(Stdio::piped())
                .stderr(Stdio::piped())
                .spawn()
                .unwrap()
        })
        .collect();
    for (r, child) in children.into_iter().enumerate() {
        let out = child.wait_with_output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "tcp rank {r} exited {:?}: {}",
                out.status.code(),
                String::from_utf8_lossy(&out.stderr)
            ));
        }
        let got = logical_lines(&out.stdout);
        if got != expected {
            return Err(format!(
                "tcp rank {r} differs:\n{}\nvs inproc:\n{}",
                got.join("\n"),
                expected.join("\n")
            ));
        }
    }
    Ok(format!(
        "{} suites identical on inproc and 4 tcp ranks",
        expected.len()
    ))
}

fn bench_join(workers: usize, rows_per_worker: usize) -> Result<serde_json::Value, String> {
    let out = Command::new(BIN)
        .args([
            "bench",
            "join",
            "--workers",
            &workers.to_string(),
            "--rows-per-worker",
            &rows_per_worker.to_string(),
        ])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "W={workers} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| format!("W={workers}: bad JSON: {e}"))
}

fn c10_bench_smoke() -> Outcome {
    let eight = bench_join(8, 1_000_000)?;
    let one = bench_join(1, 8_000_000)?;
    for phase in ["partition", "exchange", "local"] {
        if !eight["phase_times_ms"][phase].is_number() {
            return Err(format!("report lacks phase_times_ms.{phase}: {eight}"));
        }
    }
    if eight["result_rows"] != one["result_rows"] || !eight["result_rows"].is_u64() {
        return Err(format!(
            "result_rows W=8 {} vs W=1 {}",
            eight["result_rows"], one["result_rows"]
        ));
    }
    Ok(format!("{} rows on W=8 and W=1", eight["result_rows"]))
}

fn main() -> ExitCode {
    let min = |m: u64| Duration::from_secs(60 * m);
    let criteria: Vec<Criterion> = vec![
        (
            1,
            "collectives vs oracle",
            Box::new(move || within(min(1), || suite_at(Suite::Collectives, &[1, 2, 3, 4, 8]))),
        ),
        (
            2,
            "relational vs oracle",
            Box::new(move || within(min(2), || suite_at(Suite::Relational, &[1]))),
        ),
        (
            3,
            "distributed equals local",
            Box::new(move || within(min(10), || suite_at(Suite::DistOps, &[1, 2, 4, 8]))),
        ),
        (
            4,
            "shuffle invariants",
            Box::new(|| suite_at(Suite::Shuffle, &[2, 4, 8])),
        ),
        (
            5,
            "aggregate communication bound",
            Box::new(|| suite_at(Suite::AggregateComm, &[1, 2, 4, 8])),
        ),
        (
            6,
            "external sort",
            Box::new(move || within(min(5), || suite_at(Suite::ExternalSort, &[1]))),
        ),
        (
            7,
            "chunked shuffle termination",
            Box::new(c7_chunked_shuffle),
        ),
        (
            8,
            "mds",
            Box::new(move || within(min(1), || suite_at(Suite::Mds, &[1, 2, 4]))),
        ),
        (
            9,
            "transport equivalence",
            Box::new(move || within(min(15), c9_transport_equivalence)),
        ),
        (10, "join benchmark smoke", Box::new(c10_bench_smoke)),
    ];
    let only: Vec<u32> = std::env::var("HPTMT_CRITERIA")
        .map(|s| s.split(',').filter_map(|c| c.trim().parse().ok()).collect())
        .unwrap_or_default();

    let mut failed = 0;
    for (n, name, check) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS {took:>7.1}s  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL {took:>7.1}s  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
