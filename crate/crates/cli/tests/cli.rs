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

use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

fn hptmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hptmt"))
        .args(args)
        .output()
        .expect("spawn hptmt")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

#[test]
fn csvcheck_accepts_and_rewrites() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.csv", "id,name,score\n1,\"a,b\",0.5\n2,,\n");
    let out = dir.path().join("out.csv");
    let o = hptmt(&[
        "csvcheck",
        &input,
        "--schema",
        "id:i64,name:str,score:f64",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{o:?}");
    assert!(stdout(&o).contains("2 rows, 3 columns"));
    let again = hptmt(&[
        "csvcheck",
        out.to_str().unwrap(),
        "--schema",
        "id:i64,name:str,score:f64",
    ]);
    assert_eq!(code(&again), 0);
}

#[test]
fn csvcheck_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let bad_cell = write(dir.path(), "cell.csv", "id\n1\nx\n");
    let ragged = write(dir.path(), "ragged.csv", "a,b\n1,2\n3\n");
    assert_eq!(
        code(&hptmt(&["csvcheck", &bad_cell, "--schema", "id:i64"])),
        1
    );
    assert_eq!(
        code(&hptmt(&["csvcheck", &ragged, "--schema", "a:i64,b:i64"])),
        1
    );
    let o = hptmt(&["csvcheck", &bad_cell, "--schema", "id:i64"]);
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("record 3"),
        "{o:?}"
    );
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.csv", "x\n1\n");
    assert_eq!(code(&hptmt(&["verify", "--no-such-flag"])), 2);
    assert_eq!(code(&hptmt(&["csvcheck", &input])), 2);
    assert_eq!(
        code(&hptmt(&["csvcheck", &input, "--schema", "x:int128"])),
        2
    );
    assert_eq!(code(&hptmt(&["verify", "--suites", "nonsense"])), 2);
    assert_eq!(
        code(&hptmt(&["verify", "--transport", "tcp", "--rank", "0"])),
        2
    );
    assert_eq!(code(&hptmt(&["verify", "--rank", "0"])), 2);
    assert_eq!(code(&hptmt(&["verify", "--workers", "0"])), 2);
    assert_eq!(
        code(&hptmt(&["bench", "join", "--rows-per-worker", "0"])),
        2
    );
    assert_eq!(code(&hptmt(&[])), 2);
    assert_eq!(code(&hptmt(&["--help"])), 0);
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        code(&hptmt(&[
            "mds",
            missing.to_str().unwrap(),
            "--schema",
            "x:f64"
        ])),
        3
    );

    // Rank 1 never starts.
    let peers = write(
        dir.path(),
        "peers",
        &format!("127.0.0.1:{}\n127.0.0.1:{}\n", free_port(), free_port()),
    );
    let o = Command::new(env!("CARGO_BIN_EXE_hptmt"))
        .args([
            "verify",
            "--suites",
            "collectives",
            "--transport",
            "tcp",
            "--peers",
            &peers,
            "--rank",
            "0",
        ])
        .env("HPTMT_CONNECT_TIMEOUT_SECS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 3, "{o:?}");
}

#[test]
fn quick_verify_passes() {
    let o = hptmt(&["verify", "--workers", "2", "--quick"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = stdout(&o);
    for suite in [
        "collectives",
        "relational",
        "dist_ops",
        "shuffle",
        "aggregate_comm",
        "external_sort",
        "chunked_shuffle",
        "mds",
    ] {
        assert!(
            text.lines()
                .any(|l| l.starts_with(suite) && l.contains("PASS")),
            "{suite}: {text}"
        );
    }
}

#[test]
fn bench_is_deterministic() {
    let run = || {
        let o = hptmt(&[
            "bench",
            "groupby",
            "--workers",
            "3",
            "--rows-per-worker",
            "2000",
            "--seed",
            "9",
        ]);
        assert_eq!(code(&o), 0, "{o:?}");
        serde_json::from_str::<serde_json::Value>(&stdout(&o)).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a["result_rows"], b["result_rows"]);
    assert_eq!(a["operator"], "groupby");
    assert_eq!(a["workers"], 3);
    assert_eq!(a["seed"], 9);
    for phase in ["partition", "exchange", "local"] {
        assert!(a["phase_times_ms"][phase].is_f64(), "{a}");
    }
}

#[test]
fn mds_writes_embedding_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "pts.csv",
        "label,a,b\np,0,0\nq,3,0\nr,0,4\ns,3,4\n",
    );
    let out = dir.path().join("emb.csv");
    let o = hptmt(&[
        "mds",
        &input,
        "--schema",
        "label:str,a:f64,b:f64",
        "--features",
        "a,b",
        "--iters",
        "50",
        "--workers",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{o:?}");
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["points"], 4);
    let emb = fs::read_to_string(&out).unwrap();
    assert_eq!(emb.lines().next(), Some("index,x0,x1"));
    assert_eq!(emb.lines().count(), 5);
    let hist = fs::read_to_string(dir.path().join("emb.csv.stress.csv")).unwrap();
    assert_eq!(
        hist.lines().count() as u64,
        1 + report["iterations"].as_u64().unwrap()
    );
}
