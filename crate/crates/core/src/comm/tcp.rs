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

//! TCP mesh transport.
//!
//! Frames are `u32 tag | u64 payload_len | payload`, little-endian. Rank `r`
//! listens on address `r`, accepts one connection from every lower rank and
//! then connects to every higher rank. The connecting side opens with a
//! 12-byte handshake (`"HPTC"`, its rank, the world size). One reader thread
//! per peer drains the socket into the local mailbox, so sends never wait on
//! the receiving worker.

use std::io::{self, BufReader, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use log::debug;

use super::mailbox::Mailbox;
use super::Transport;
use crate::error::CommError;

const HANDSHAKE_MAGIC: &[u8; 4] = b"HPTC";
const POLL_INTERVAL: Duration = Duration::from_millis(10);
const CLOSE_GRACE: Duration = Duration::from_secs(5);

pub struct TcpTransport {
    rank: usize,
    mailbox: Arc<Mailbox>,
    writers: Vec<Option<TcpStream>>,
    readers: Vec<JoinHandle<()>>,
    closed: bool,
}

/// Encode one frame header.
pub fn frame_header(tag: u32, len: u64) -> [u8; 12] {
    let mut h = [0u8; 12];
    h[..4].copy_from_slice(&tag.to_le_bytes());
    h[4..].copy_from_slice(&len.to_le_bytes());
    h
}

/// Read one frame; `Ok(None)` on a clean EOF at a frame boundary.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<(u32, Vec<u8>)>> {
    let mut header = [0u8; 12];
    let mut got = 0;
    while got < header.len() {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let tag = u32::from_le_bytes(header[..4].try_into().unwrap());
    let len = u64::from_le_bytes(header[4..].try_into().unwrap());
    let mut payload = Vec::with_capacity(len.min(1 << 24) as usize);
    let n = r.take(len).read_to_end(&mut payload)?;
    if (n as u64) < len {
        return Err(io::ErrorKind::UnexpectedEof.into());
    }
    Ok(Some((tag, payload)))
}

fn resolve(addr: &str) -> Result<std::net::SocketAddr, CommError> {
    addr.to_socket_addrs()
        .map_err(|e| CommError::Config(format!("cannot resolve {addr}: {e}")))?
        .next()
        .ok_or_else(|| CommError::Config(format!("no address for {addr}")))
}

impl TcpTransport {
    /// Bind address `rank` and form the mesh.
    pub fn bootstrap(
        addrs: &[String],
        rank: usize,
        timeout: Duration,
    ) -> Result<TcpTransport, CommError> {
        let addr = addrs.get(rank).ok_or(CommError::InvalidRank {
            rank,
            world_size: addrs.len(),
        })?;
        let listener = TcpListener::bind(resolve(addr)?).map_err(|source| CommError::Bind {
            addr: addr.clone(),
            source,
        })?;
        Self::bootstrap_with_listener(listener, addrs, rank, timeout)
    }

    /// Form the mesh using an already bound listener for this rank.
    pub fn bootstrap_with_listener(
        listener: TcpListener,
        addrs: &[String],
        rank: usize,
        timeout: Duration,
    ) -> Result<TcpTransport, CommError> {
        let world_size = addrs.len();
        if rank >= world_size {
            return Err(CommError::InvalidRank { rank, world_size });
        }
        let deadline = Instant::now() + timeout;
        let mut streams: Vec<Option<TcpStream>> = (0..world_size).map(|_| None).collect();

        listener.set_nonblocking(true)?;
        let mut pending = rank;
        while pending > 0 {
            match listener.accept() {
                Ok((mut stream, _)) => {
                    stream.set_nonblocking(false)?;
                    stream.set_read_timeout(Some(
                        deadline
                            .saturating_duration_since(Instant::now())
                            .max(POLL_INTERVAL),
                    ))?;
                    let mut hs = [0u8; 12];
                    if stream.read_exact(&mut hs).is_err() || &hs[..4] != HANDSHAKE_MAGIC {
                        debug!("rank {rank}: dropping connection with a bad handshake");
                        continue;
                    }
                    let peer = u32::from_le_bytes(hs[4..8].try_into().unwrap()) as usize;
                    let peer_world = u32::from_le_bytes(hs[8..12].try_into().unwrap()) as usize;
                    if peer_world != world_size {
                        return Err(CommError::Config(format!(
                            "peer {peer} reports world size {peer_world}, expected {world_size}"
                        )));
                    }
                    if peer >= rank {
                        return Err(CommError::InvalidRank {
                            rank: peer,
                            world_size: rank,
                        });
                    }
                    if streams[peer].is_some() {
                        return Err(CommError::DuplicateRank(peer));
                    }
                    stream.set_read_timeout(None)?;
                    streams[peer] = Some(stream);
                    pending -= 1;
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        let missing: Vec<usize> =
                            (0..rank).filter(|&p| streams[p].is_none()).collect();
                        return Err(CommError::ConnectTimeout(
                            timeout,
                            format!("connections from ranks {missing:?}"),
                        ));
                    }
                    std::thread::sleep(POLL_INTERVAL);
                }
                Err(e) => return Err(e.into()),
            }
        }
        drop(listener);

        for peer in rank + 1..world_size {
            let target = resolve(&addrs[peer])?;
            let mut stream = loop {
                let left = deadline.saturating_duration_since(Instant::now());
                if left.is_zero() {
                    return Err(CommError::ConnectTimeout(
                        timeout,
                        format!("rank {peer} at {}", addrs[peer]),
                    ));
                }
                match TcpStream::connect_timeout(&target, left.min(Duration::from_secs(1))) {
                    Ok(s) => break s,
                    Err(_) => std::thread::sleep(POLL_INTERVAL.min(left)),
                }
            };
            let mut hs = [0u8; 12];
            hs[..4].copy_from_slice(HANDSHAKE_MAGIC);
            hs[4..8].copy_from_slice(&(rank as u32).to_le_bytes());
            hs[8..].copy_from_slice(&(world_size as u32).to_le_bytes());
            stream.write_all(&hs)?;
            streams[peer] = Some(stream);
        }

        let mailbox = Arc::new(Mailbox::new(world_size));
        let mut readers = Vec::new();
        for (peer, s) in streams.iter().enumerate() {
            let Some(s) = s else { continue };
            s.set_nodelay(true)?;
            let reader = s.try_clone()?;
            let mb = mailbox.clone();
            let handle = std::thread::Builder::new()
                .name(format!("hptmt-rx-{rank}-{peer}"))
                .spawn(move || {
                    let mut r = BufReader::with_capacity(1 << 16, reader);
                    loop {
                        match read_frame(&mut r) {
                            Ok(Some((tag, payload))) => mb.push(peer, tag, payload),
                            Ok(None) => break,
                            Err(e) => {
                                debug!("reader for peer {peer} stopped: {e}");
                                break;
                            }
                        }
                    }
                    mb.close_source(peer);
                })?;
            readers.push(handle);
        }
        Ok(TcpTransport {
            rank,
            mailbox,
            writers: streams,
            readers,
            closed: false,
        })
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, dest: usize, tag: u32, payload: Vec<u8>) -> Result<(), CommError> {
        if dest == self.rank {
            self.mailbox.push(dest, tag, payload);
            return Ok(());
        }
        let stream = self.writers[dest]
            .as_mut()
            .ok_or(CommError::PeerDisconnected(dest))?;
        let result = stream
            .write_all(&frame_header(tag, payload.len() as u64))
            .and_then(|_| stream.write_all(&payload));
        result.map_err(|_| CommError::PeerDisconnected(dest))
    }

    fn try_send(
        &mut self,
        dest: usize,
        tag: u32,
        payload: Vec<u8>,
    ) -> Result<Option<Vec<u8>>, CommError> {
        self.send(dest, tag, payload).map(|_| None)
    }

    fn recv(&mut self, src: usize, tag: u32) -> Result<Vec<u8>, CommError> {
        self.mailbox.pop(src, tag)
    }

    fn try_recv(&mut self, src: usize, tag: u32) -> Result<Option<Vec<u8>>, CommError> {
        self.mailbox.try_pop(src, tag)
    }

    fn wait_activity(&mut self, timeout: Duration) {
        self.mailbox.wait_activity(timeout);
    }

    fn close(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        for s in self.writers.iter().flatten() {
            let _ = s.shutdown(Shutdown::Write);
        }
        // give peers a chance to finish reading before tearing down
        self.mailbox.wait_all_closed(self.rank, CLOSE_GRACE);
        for s in self.writers.iter().flatten() {
            let _ = s.shutdown(Shutdown::Both);
        }
        for h in self.readers.drain(..) {
            let _ = h.join();
        }
        self.mailbox.close_owner();
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        self.close();
    }
}
