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

//! Run configuration shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use hptmt_core::comm::{bootstrap, connect_timeout_from_env, launch_inproc_with, TransportConfig};
use hptmt_core::dist::{WorkerContext, DEFAULT_MEMORY_BUDGET};
use hptmt_core::{CommError, Error};

use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Transport {
    InProc,
    /// This process is `rank` in a world of `peers.len()` ranks.
    Tcp {
        peers: Vec<String>,
        rank: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub workers: usize,
    pub transport: Transport,
    pub memory_budget: usize,
    pub spill_dir: Option<PathBuf>,
    pub seed: u64,
    pub rows_per_worker: usize,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn inproc(workers: usize) -> Self {
        RunConfig {
            workers,
            transport: Transport::InProc,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            spill_dir: None,
            seed: 0,
            rows_per_worker: 1000,
            out: None,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.workers == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        if self.memory_budget == 0 {
            return Err(CliError::Usage("--memory-budget must be positive".into()));
        }
        if let Transport::Tcp { peers, rank } = &self.transport {
            if peers.len() != self.workers {
                return Err(CliError::Usage(format!(
                    "peers file lists {} ranks but --workers is {}",
                    peers.len(),
                    self.workers
                )));
            }
            if *rank >= peers.len() {
                return Err(CliError::Usage(format!(
                    "--rank {rank} outside a world of {}",
                    peers.len()
                )));
            }
        }
        Ok(())
    }

    fn context(&self, comm: hptmt_core::comm::Communicator) -> hptmt_core::Result<WorkerContext> {
        let mut ctx = WorkerContext::new(comm)
            .with_memory_budget(self.memory_budget)?
            .with_seed(self.seed);
        if let Some(dir) = &self.spill_dir {
            ctx = ctx.with_spill_dir(dir);
        }
        Ok(ctx)
    }

    /// Run `body` SPMD-style: on `workers` threads for the in-process
    /// transport (results in rank order), or once as this process's TCP rank.
    pub fn run<T, F>(&self, body: F) -> CliResult<Vec<T>>
    where
        T: Send,
        F: Fn(&mut WorkerContext) -> hptmt_core::Result<T> + Sync,
    {
        self.validate()?;
        let finish = |mut ctx: WorkerContext, out: hptmt_core::Result<T>| {
            if out.is_ok() {
                ctx.comm_mut().finalize();
            }
            out
        };
        match &self.transport {
            Transport::InProc => {
                let results = launch_inproc_with(&TransportConfig::inproc(self.workers), |comm| {
                    let mut ctx = self.context(comm)?;
                    let out = body(&mut ctx);
                    finish(ctx, out)
                })?;
                first_error(results)
            }
            Transport::Tcp { peers, rank } => {
                let cfg = TransportConfig::tcp(peers.clone(), *rank)
                    .with_connect_timeout(connect_timeout_from_env());
                let mut ctx = self.context(bootstrap(&cfg)?)?;
                let out = body(&mut ctx);
                Ok(vec![finish(ctx, out)?])
            }
        }
    }
}

/// Report the root cause: errors caused by a peer going away come last.
fn first_error<T>(results: Vec<hptmt_core::Result<T>>) -> CliResult<Vec<T>> {
    let mut oks = Vec::with_capacity(results.len());
    let (mut root, mut secondary) = (None, None);
    for r in results {
        match r {
            Ok(v) => oks.push(v),
            Err(e @ Error::Comm(CommError::PeerDisconnected(_))) => {
                secondary.get_or_insert(e);
            }
            Err(e) => {
                root.get_or_insert(e);
            }
        }
    }
    match root.or(secondary) {
        Some(e) => Err(e.into()),
        None => Ok(oks),
    }
}

/// One `host:port` per line; line index is the rank. Trailing blank lines
/// are ignored.
pub fn read_peers(path: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut peers: Vec<String> = text.lines().map(|l| l.trim().to_string()).collect();
    while peers.last().is_some_and(|p| p.is_empty()) {
        peers.pop();
    }
    if peers.is_empty() || peers.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!(
            "{}: expected one host:port per line",
            path.display()
        )));
    }
    Ok(peers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(RunConfig::inproc(0).validate().is_err());
        let mut c = RunConfig::inproc(2);
        c.transport = Transport::Tcp {
            peers: vec!["a:1".into(), "b:2".into()],
            rank: 2,
        };
        assert!(matches!(c.validate(), Err(CliError::Usage(_))));
    }

    #[test]
    fn inproc_runs_every_rank() {
        let out = RunConfig::inproc(3).run(|ctx| Ok(ctx.rank())).unwrap();
        assert_eq!(out, vec![0, 1, 2]);
    }

    #[test]
    fn root_cause_error_wins() {
        let err = RunConfig::inproc(2)
            .run(|ctx| {
                if ctx.rank() == 1 {
                    return Err(Error::InvalidArgument("root cause".into()));
                }
                ctx.comm_mut()
                    .recv(1, hptmt_core::comm::MessageTag(5))
                    .map(|_| ())
            })
            .unwrap_err();
        assert!(err.to_string().contains("root cause"), "{err}");
    }

    #[test]
    fn peers_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("peers");
        fs::write(&p, "127.0.0.1:1\n127.0.0.1:2\n\n").unwrap();
        assert_eq!(read_peers(&p).unwrap().len(), 2);
        fs::write(&p, "a:1\n\nb:2\n").unwrap();
        assert!(read_peers(&p).is_err());
    }
}
