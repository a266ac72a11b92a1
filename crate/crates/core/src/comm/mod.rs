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

//! Execution-environment independent communicator.
//!
//! A [`Communicator`] gives one worker its rank, the world size and tagged,
//! FIFO-per-channel point-to-point byte messaging. It can be backed by an
//! in-process cluster of threads ([`launch_inproc`]) or by a TCP mesh
//! ([`bootstrap`]); distributed operators never know which.

mod inproc;
mod mailbox;
mod tcp;

use std::net::TcpListener;
use std::time::Duration;

pub use inproc::{InProcTransport, DEFAULT_CHANNEL_CAPACITY};
pub use tcp::{frame_header, read_frame, TcpTransport};

use crate::error::{CommError, Error, Result};

/// Environment variable overriding the TCP connect timeout, in seconds.
pub const CONNECT_TIMEOUT_ENV: &str = "HPTMT_CONNECT_TIMEOUT_SECS";
pub const DEFAULT_CONNECT_TIMEOUT: Duration = Duration::from_secs(30);

/// Label partitioning message streams between a pair of ranks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MessageTag(pub u32);

impl MessageTag {
    /// First tag of the range reserved for collectives.
    pub const COLLECTIVE_BASE: u32 = 0x4000_0000;
    pub const COLLECTIVE_END: u32 = 0x4FFF_FFFF;
    pub const BARRIER: MessageTag = MessageTag(0x5000_0000);

    pub fn is_reserved(self) -> bool {
        self.0 >= Self::COLLECTIVE_BASE
    }
}

/// Byte-level point-to-point transport behind a [`Communicator`].
pub trait Transport: Send {
    fn send(
        &mut self,
        dest: usize,
        tag: u32,
        payload: Vec<u8>,
    ) -> std::result::Result<(), CommError>;
    /// Returns the payload back instead of blocking when the channel is full.
    fn try_send(
        &mut self,
        dest: usize,
        tag: u32,
        payload: Vec<u8>,
    ) -> std::result::Result<Option<Vec<u8>>, CommError>;
    fn recv(&mut self, src: usize, tag: u32) -> std::result::Result<Vec<u8>, CommError>;
    fn try_recv(&mut self, src: usize, tag: u32)
        -> std::result::Result<Option<Vec<u8>>, CommError>;
    /// Park until some message may have arrived (or the timeout passes).
    fn wait_activity(&mut self, timeout: Duration);
    fn close(&mut self);
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransportKind {
    InProc,
    Tcp { addrs: Vec<String>, rank: usize },
}

#[derive(Clone, Debug)]
pub struct TransportConfig {
    pub kind: TransportKind,
    pub world_size: usize,
    pub connect_timeout: Duration,
    /// Per-channel buffer bound for the in-process transport.
    pub channel_capacity: usize,
}

impl TransportConfig {
    pub fn inproc(world_size: usize) -> Self {
        TransportConfig {
            kind: TransportKind::InProc,
            world_size,
            connect_timeout: connect_timeout_from_env(),
            channel_capacity: DEFAULT_CHANNEL_CAPACITY,
        }
    }

    pub fn tcp(addrs: Vec<String>, rank: usize) -> Self {
        TransportConfig {
            world_size: addrs.len(),
            kind: TransportKind::Tcp { addrs, rank },
            connect_timeout: connect_timeout_from_env(),
            channel_capacity: DEFAULT_CHANNEL_CAPACITY,
        }
    }

    pub fn with_connect_timeout(mut self, timeout: Duration) -> Self {
        self.connect_timeout = timeout;
        self
    }

    pub fn validate(&self) -> std::result::Result<(), CommError> {
        if self.world_size == 0 {
            return Err(CommError::Config("world size must be at least 1".into()));
        }
        if let TransportKind::Tcp { addrs, rank } = &self.kind {
            if addrs.len() != self.world_size {
                return Err(CommError::Config(format!(
                    "{} addresses for world size {}",
                    addrs.len(),
                    self.world_size
                )));
            }
            if *rank >= self.world_size {
                return Err(CommError::InvalidRank {
                    rank: *rank,
                    world_size: self.world_size,
                });
            }
        }
        Ok(())
    }
}

/// Connect timeout from [`CONNECT_TIMEOUT_ENV`], defaulting to 30 s.
pub fn connect_timeout_from_env() -> Duration {
    std::env::var(CONNECT_TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|s| s.is_finite() && *s > 0.0)
        .map(Duration::from_secs_f64)
        .unwrap_or(DEFAULT_CONNECT_TIMEOUT)
}

/// Message and byte counters for one communicator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransportStats {
    pub messages_sent: u64,
    pub bytes_sent: u64,
    pub messages_received: u64,
    pub bytes_received: u64,
}

impl std::ops::Sub for TransportStats {
    type Output = TransportStats;

    fn sub(self, rhs: Self) -> Self {
        TransportStats {
            messages_sent: self.messages_sent - rhs.messages_sent,
            bytes_sent: self.bytes_sent - rhs.bytes_sent,
            messages_received: self.messages_received - rhs.messages_received,
            bytes_received: self.bytes_received - rhs.bytes_received,
        }
    }
}

pub struct Communicator {
    rank: usize,
    world_size: usize,
    transport: Box<dyn Transport>,
    finalized: bool,
    stats: TransportStats,
}

impl std::fmt::Debug for Communicator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Communicator")
            .field("rank", &self.rank)
            .field("world_size", &self.world_size)
            .field("finalized", &self.finalized)
            .finish()
    }
}

impl Communicator {
    pub fn new(rank: usize, world_size: usize, transport: Box<dyn Transport>) -> Self {
        assert!(rank < world_size);
        Communicator {
            rank,
            world_size,
            transport,
            finalized: false,
            stats: TransportStats::default(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn world_size(&self) -> usize {
        self.world_size
    }

    pub fn stats(&self) -> TransportStats {
        self.stats
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    fn check(&self, peer: usize) -> Result<()> {
        if self.finalized {
            return Err(CommError::Finalized.into());
        }
        if peer >= self.world_size {
            return Err(CommError::InvalidRank {
                rank: peer,
                world_size: self.world_size,
            }
            .into());
        }
        Ok(())
    }

    /// Blocking send; may wait for buffer space on the channel.
    pub fn send(&mut self, dest: usize, tag: MessageTag, payload: Vec<u8>) -> Result<()> {
        self.check(dest)?;
        let len = payload.len() as u64;
        self.transport.send(dest, tag.0, payload)?;
        self.stats.messages_sent += 1;
        self.stats.bytes_sent += len;
        Ok(())
    }

    /// Send without blocking; `Ok(Some(payload))` means the channel is full.
    pub fn try_send(
        &mut self,
        dest: usize,
        tag: MessageTag,
        payload: Vec<u8>,
    ) -> Result<Option<Vec<u8>>> {
        self.check(dest)?;
        let len = payload.len() as u64;
        let back = self.transport.try_send(dest, tag.0, payload)?;
        if back.is_none() {
            self.stats.messages_sent += 1;
            self.stats.bytes_sent += len;
        }
        Ok(back)
    }

    /// Block until the next message from `(src, tag)` arrives.
    pub fn recv(&mut self, src: usize, tag: MessageTag) -> Result<Vec<u8>> {
        self.check(src)?;
        let msg = self.transport.recv(src, tag.0)?;
        self.stats.messages_received += 1;
        self.stats.bytes_received += msg.len() as u64;
        Ok(msg)
    }

    pub fn try_recv(&mut self, src: usize, tag: MessageTag) -> Result<Option<Vec<u8>>> {
        self.check(src)?;
        let msg = self.transport.try_recv(src, tag.0)?;
        if let Some(m) = &msg {
            self.stats.messages_received += 1;
            self.stats.bytes_received += m.len() as u64;
        }
        Ok(msg)
    }

    /// Park briefly until a message may be available.
    pub fn wait_activity(&mut self, timeout: Duration) {
        self.transport.wait_activity(timeout);
    }

    /// No rank leaves until every rank has entered.
    pub fn barrier(&mut self) -> Result<()> {
        if self.finalized {
            return Err(CommError::Finalized.into());
        }
        let tag = MessageTag::BARRIER;
        if self.rank == 0 {
            for src in 1..self.world_size {
                self.recv(src, tag)?;
            }
            for dest in 1..self.world_size {
                self.send(dest, tag, Vec::new())?;
            }
        } else {
            self.send(0, tag, Vec::new())?;
            self.recv(0, tag)?;
        }
        Ok(())
    }

    /// Synchronize with the other ranks and close all connections. Calling it
    /// again is a no-op.
    pub fn finalize(&mut self) {
        if self.finalized {
            return;
        }
        if let Err(e) = self.barrier() {
            log::debug!("rank {}: finalize barrier failed: {e}", self.rank);
        }
        self.finalized = true;
        self.transport.close();
    }
}

impl Drop for Communicator {
    fn drop(&mut self) {
        // no barrier here: a worker bailing out early must not block
        self.finalized = true;
        self.transport.close();
    }
}

/// Connect one TCP rank (or, for `InProc` with one rank, a trivial world).
pub fn bootstrap(config: &TransportConfig) -> Result<Communicator> {
    config.validate()?;
    match &config.kind {
        TransportKind::Tcp { addrs, rank } => {
            let t = TcpTransport::bootstrap(addrs, *rank, config.connect_timeout)?;
            Ok(Communicator::new(*rank, config.world_size, Box::new(t)))
        }
        TransportKind::InProc if config.world_size == 1 => {
            let t = InProcTransport::cluster(1, config.channel_capacity)
                .pop()
                .unwrap();
            Ok(Communicator::new(0, 1, Box::new(t)))
        }
        TransportKind::InProc => Err(Error::InvalidArgument(
            "an in-process world of more than one rank must be started with launch_inproc".into(),
        )),
    }
}

/// Run `body` once per rank on its own thread over an in-process cluster and
/// return every rank's result, in rank order.
pub fn launch_inproc_with<T, F>(config: &TransportConfig, body: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(Communicator) -> Result<T> + Sync,
{
    config.validate()?;
    if config.kind != TransportKind::InProc {
        return Err(Error::InvalidArgument(
            "launch_inproc_with needs an InProc config".into(),
        ));
    }
    let endpoints = InProcTransport::cluster(config.world_size, config.channel_capacity);
    let world_size = config.world_size;
    Ok(run_threads(
        endpoints.into_iter().enumerate().map(|(rank, t)| {
            let t: Box<dyn Transport> = Box::new(t);
            move || Ok(Communicator::new(rank, world_size, t))
        }),
        &body,
    ))
}

/// [`launch_inproc_with`] using default settings; fails with the first
/// (lowest-rank) worker error.
pub fn launch_inproc<T, F>(world_size: usize, body: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Communicator) -> Result<T> + Sync,
{
    launch_inproc_with(&TransportConfig::inproc(world_size), body)?
        .into_iter()
        .collect()
}

/// Run a TCP world of `world_size` ranks inside this process, one thread per
/// rank, over loopback sockets.
pub fn launch_tcp_local<T, F>(world_size: usize, body: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Communicator) -> Result<T> + Sync,
{
    if world_size == 0 {
        return Err(CommError::Config("world size must be at least 1".into()).into());
    }
    let mut listeners = Vec::with_capacity(world_size);
    let mut addrs = Vec::with_capacity(world_size);
    for _ in 0..world_size {
        let l = TcpListener::bind("127.0.0.1:0").map_err(|source| CommError::Bind {
            addr: "127.0.0.1:0".into(),
            source,
        })?;
        addrs.push(l.local_addr().map_err(CommError::Io)?.to_string());
        listeners.push(l);
    }
    let timeout = connect_timeout_from_env();
    let addrs = &addrs;
    run_threads(
        listeners.into_iter().enumerate().map(|(rank, l)| {
            move || {
                let t = TcpTransport::bootstrap_with_listener(l, addrs, rank, timeout)?;
                Ok(Communicator::new(
                    rank,
                    world_size,
                    Box::new(t) as Box<dyn Transport>,
                ))
            }
        }),
        &body,
    )
    .into_iter()
    .collect()
}

fn run_threads<T, F, I, C>(connectors: I, body: &F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(Communicator) -> Result<T> + Sync,
    I: Iterator<Item = C>,
    C: FnOnce() -> Result<Communicator> + Send,
{
    std::thread::scope(|scope| {
        let handles: Vec<_> = connectors
            .enumerate()
            .map(|(rank, connect)| {
                std::thread::Builder::new()
                    .name(format!("hptmt-worker-{rank}"))
                    .spawn_scoped(scope, move || {
                        let comm = connect()?;
                        body(comm)
                    })
                    .expect("spawn worker thread")
            })
            .collect();
        let mut results = Vec::with_capacity(handles.len());
        let mut panic = None;
        for h in handles {
            match h.join() {
                Ok(r) => results.push(r),
                Err(p) => {
                    results.push(Err(Error::InvalidArgument("worker panicked".into())));
                    panic.get_or_insert(p);
                }
            }
        }
        if let Some(p) = panic {
            std::panic::resume_unwind(p);
        }
        results
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_of_one() {
        let out = launch_inproc(1, |mut c| {
            c.send(0, MessageTag(3), b"hi".to_vec())?;
            let m = c.recv(0, MessageTag(3))?;
            c.barrier()?;
            c.finalize();
            Ok((c.rank(), m))
        })
        .unwrap();
        assert_eq!(out, vec![(0, b"hi".to_vec())]);
    }

    #[test]
    fn distinct_ranks() {
        let mut ranks = launch_inproc(4, |c| Ok((c.rank(), c.world_size()))).unwrap();
        ranks.sort();
        assert_eq!(ranks, vec![(0, 4), (1, 4), (2, 4), (3, 4)]);
    }

    #[test]
    fn finalize_then_send_is_an_error() {
        launch_inproc(2, |mut c| {
            c.finalize();
            c.finalize();
            assert!(matches!(
                c.send(0, MessageTag(1), vec![]),
                Err(Error::Comm(CommError::Finalized))
            ));
            assert!(matches!(
                c.barrier(),
                Err(Error::Comm(CommError::Finalized))
            ));
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn tag_isolation() {
        launch_inproc(2, |mut c| {
            if c.rank() == 0 {
                c.send(1, MessageTag(1), b"one".to_vec())?;
                c.send(1, MessageTag(2), b"two".to_vec())?;
            } else {
                assert_eq!(c.recv(0, MessageTag(2))?, b"two");
                assert_eq!(c.recv(0, MessageTag(1))?, b"one");
            }
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn peer_exit_unblocks_receiver() {
        let res = launch_inproc_with(&TransportConfig::inproc(2), |mut c| {
            if c.rank() == 0 {
                return Err(Error::InvalidArgument("boom".into()));
            }
            c.recv(0, MessageTag(9)).map(|_| ())
        })
        .unwrap();
        assert!(res[0].is_err());
        assert!(matches!(
            res[1],
            Err(Error::Comm(CommError::PeerDisconnected(0)))
        ));
    }

    #[test]
    fn invalid_configs() {
        assert!(TransportConfig::inproc(0).validate().is_err());
        let mut c = TransportConfig::tcp(vec!["127.0.0.1:1".into()], 0);
        c.world_size = 2;
        assert!(c.validate().is_err());
        assert!(TransportConfig::tcp(vec!["127.0.0.1:1".into()], 1)
            .validate()
            .is_err());
    }
}
