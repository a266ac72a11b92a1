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

//! In-process simulated cluster: every rank is a thread, every channel an
//! in-memory queue with bounded buffering.

use std::sync::Arc;
use std::time::Duration;

use super::mailbox::Mailbox;
use super::Transport;
use crate::error::CommError;

/// Default per-channel buffer bound.
pub const DEFAULT_CHANNEL_CAPACITY: usize = 16 << 20;

pub struct InProcTransport {
    rank: usize,
    world: Arc<Vec<Mailbox>>,
    capacity: usize,
    closed: bool,
}

impl InProcTransport {
    /// One endpoint per rank, all sharing a set of mailboxes.
    pub fn cluster(world_size: usize, capacity: usize) -> Vec<InProcTransport> {
        let world: Arc<Vec<Mailbox>> =
            Arc::new((0..world_size).map(|_| Mailbox::new(world_size)).collect());
        (0..world_size)
            .map(|rank| InProcTransport {
                rank,
                world: world.clone(),
                capacity,
                closed: false,
            })
            .collect()
    }
}

impl Transport for InProcTransport {
    fn send(&mut self, dest: usize, tag: u32, payload: Vec<u8>) -> Result<(), CommError> {
        self.world[dest].push_bounded(self.rank, dest, tag, payload, self.capacity)
    }

    fn try_send(
        &mut self,
        dest: usize,
        tag: u32,
        payload: Vec<u8>,
    ) -> Result<Option<Vec<u8>>, CommError> {
        self.world[dest].try_push_bounded(self.rank, dest, tag, payload, self.capacity)
    }

    fn recv(&mut self, src: usize, tag: u32) -> Result<Vec<u8>, CommError> {
        self.world[self.rank].pop(src, tag)
    }

    fn try_recv(&mut self, src: usize, tag: u32) -> Result<Option<Vec<u8>>, CommError> {
        self.world[self.rank].try_pop(src, tag)
    }

    fn wait_activity(&mut self, timeout: Duration) {
        self.world[self.rank].wait_activity(timeout);
    }

    fn close(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        self.world[self.rank].close_owner();
        for (i, mb) in self.world.iter().enumerate() {
            if i != self.rank {
                mb.close_source(self.rank);
            }
        }
    }
}

impl Drop for InProcTransport {
    fn drop(&mut self) {
        self.close();
    }
}
