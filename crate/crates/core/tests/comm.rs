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

use std::time::{Duration, Instant};

use hptmt_core::comm::{
    bootstrap, launch_inproc, launch_inproc_with, launch_tcp_local, Communicator, MessageTag,
    TransportConfig,
};
use hptmt_core::{CommError, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIZES: [usize; 5] = [0, 1, 8, 4096, 1 << 20];

fn payload(src: usize, dst: usize, seq: usize, len: usize) -> Vec<u8> {
    (0..len)
        .map(|i| (src * 31 + dst * 7 + seq * 13 + i) as u8)
        .collect()
}

/// Every rank sends `msgs` messages of random sizes to every rank in a
/// random interleaving, then checks arrival order per (source, tag).
fn fifo_program(mut c: Communicator, seed: u64, msgs: usize) -> Result<Vec<(usize, usize, usize)>> {
    let (me, w) = (c.rank(), c.world_size());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ me as u64);
    // Random interleaving across destinations, sequence order kept per destination.
    let mut plan: Vec<(usize, usize, usize)> = (0..w)
        .flat_map(|d| (0..msgs).map(move |s| (d, s)))
        .map(|(d, s)| (s * w + rng.gen_range(0..w), d, s))
        .collect();
    plan.sort();
    for &(_, d, s) in &plan {
        c.send(d, MessageTag(7), payload(me, d, s, SIZES[s % SIZES.len()]))?;
    }
    let mut seen = Vec::new();
    for src in 0..w {
        for s in 0..msgs {
            let m = c.recv(src, MessageTag(7))?;
            assert_eq!(
                m,
                payload(src, me, s, SIZES[s % SIZES.len()]),
                "src {src} seq {s}"
            );
            seen.push((src, s, m.len()));
        }
    }
    c.finalize();
    Ok(seen)
}

#[test]
fn fifo_per_channel_with_mixed_sizes() {
    for w in [1, 2, 3, 4] {
        for seed in 0..3 {
            let out = launch_inproc(w, |c| fifo_program(c, seed, 6)).unwrap();
            assert!(out.iter().all(|s| s.len() == w * 6));
        }
    }
}

#[test]
fn tcp_and_inproc_agree() {
    let inproc = launch_inproc(3, |c| fifo_program(c, 11, 6)).unwrap();
    let tcp = launch_tcp_local(3, |c| fifo_program(c, 11, 6)).unwrap();
    assert_eq!(inproc, tcp);
}

#[test]
fn large_messages_between_threads() {
    // Several messages over the channel capacity in both directions at once.
    let out = launch_inproc(2, |mut c| {
        let peer = 1 - c.rank();
        let big = vec![c.rank() as u8; 24 << 20];
        if c.rank() == 0 {
            c.send(peer, MessageTag(1), big.clone())?;
            let m = c.recv(peer, MessageTag(1))?;
            Ok(m.len())
        } else {
            let m = c.recv(peer, MessageTag(1))?;
            c.send(peer, MessageTag(1), big)?;
            Ok(m.len())
        }
    })
    .unwrap();
    assert_eq!(out, vec![24 << 20; 2]);
}

#[test]
fn repeated_barriers_keep_ranks_in_step() {
    use std::sync::atomic::{AtomicUsize, Ordering};
    let round = AtomicUsize::new(0);
    let arrived = AtomicUsize::new(0);
    launch_inproc(4, |mut c| {
        for r in 0..20 {
            if arrived.fetch_add(1, Ordering::SeqCst) % 4 == 3 {
                round.fetch_add(1, Ordering::SeqCst);
            }
            c.barrier()?;
            // Nobody can be here before all four arrived for round r.
            assert!(round.load(Ordering::SeqCst) > r);
            c.barrier()?;
        }
        Ok(())
    })
    .unwrap();
}

#[test]
fn tcp_connect_times_out() {
    // Reserve a port, then close it so nothing is listening there.
    let dead = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .to_string();
    let me = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .to_string();
    let cfg =
        TransportConfig::tcp(vec![me, dead], 0).with_connect_timeout(Duration::from_millis(500));
    let start = Instant::now();
    match bootstrap(&cfg) {
        Err(Error::Comm(CommError::ConnectTimeout(..))) => {}
        other => panic!("expected timeout, got {other:?}"),
    }
    assert!(start.elapsed() < Duration::from_secs(10));
}

#[test]
fn failing_rank_does_not_hang_the_others() {
    let res = launch_inproc_with(&TransportConfig::inproc(3), |mut c| {
        if c.rank() == 2 {
            return Err(Error::InvalidArgument("boom".into()));
        }
        c.recv(2, MessageTag(3)).map(|_| ())
    })
    .unwrap();
    assert!(res.iter().all(|r| r.is_err()));
}
