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

//! Per-rank inbox keyed by `(source, tag)`.

use std::collections::{HashMap, VecDeque};
use std::sync::{Condvar, Mutex, MutexGuard};

use crate::error::CommError;

#[derive(Default)]
pub(crate) struct MailboxState {
    queues: HashMap<(usize, u32), VecDeque<Vec<u8>>>,
    /// Bytes currently queued per source.
    buffered: Vec<usize>,
    /// Sources that will never send again.
    closed: Vec<bool>,
    /// The owning rank has shut down and will never receive again.
    owner_closed: bool,
}

pub(crate) struct Mailbox {
    state: Mutex<MailboxState>,
    cond: Condvar,
}

impl Mailbox {
    pub(crate) fn new(world_size: usize) -> Self {
        Mailbox {
            state: Mutex::new(MailboxState {
                queues: HashMap::new(),
                buffered: vec![0; world_size],
                closed: vec![false; world_size],
                owner_closed: false,
            }),
            cond: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, MailboxState> {
        // a panicking worker must not wedge its peers
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Enqueue unconditionally.
    pub(crate) fn push(&self, src: usize, tag: u32, payload: Vec<u8>) {
        let mut st = self.lock();
        st.buffered[src] += payload.len();
        st.queues.entry((src, tag)).or_default().push_back(payload);
        drop(st);
        self.cond.notify_all();
    }

    /// Enqueue, blocking while the `src` channel holds data and adding
    /// `payload` would exceed `capacity`. A lone oversized message is admitted
    /// into an empty channel.
    pub(crate) fn push_bounded(
        &self,
        src: usize,
        dest: usize,
        tag: u32,
        payload: Vec<u8>,
        capacity: usize,
    ) -> Result<(), CommError> {
        let mut st = self.lock();
        loop {
            if st.owner_closed {
                return Err(CommError::PeerDisconnected(dest));
            }
            let queued = st.buffered[src];
            if queued == 0 || queued + payload.len() <= capacity {
                break;
            }
            st = self.cond.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        st.buffered[src] += payload.len();
        st.queues.entry((src, tag)).or_default().push_back(payload);
        drop(st);
        self.cond.notify_all();
        Ok(())
    }

    /// Non-blocking variant of [`push_bounded`]; hands the payload back when
    /// the channel is full.
    pub(crate) fn try_push_bounded(
        &self,
        src: usize,
        dest: usize,
        tag: u32,
        payload: Vec<u8>,
        capacity: usize,
    ) -> Result<Option<Vec<u8>>, CommError> {
        let mut st = self.lock();
        if st.owner_closed {
            return Err(CommError::PeerDisconnected(dest));
        }
        let queued = st.buffered[src];
        if queued != 0 && queued + payload.len() > capacity {
            return Ok(Some(payload));
        }
        st.buffered[src] += payload.len();
        st.queues.entry((src, tag)).or_default().push_back(payload);
        drop(st);
        self.cond.notify_all();
        Ok(None)
    }

    fn pop_locked(&self, st: &mut MailboxState, src: usize, tag: u32) -> Option<Vec<u8>> {
        let q = st.queues.get_mut(&(src, tag))?;
        let msg = q.pop_front()?;
        if q.is_empty() {
            st.queues.remove(&(src, tag));
        }
        st.buffered[src] -= msg.len();
        Some(msg)
    }

    pub(crate) fn pop(&self, src: usize, tag: u32) -> Result<Vec<u8>, CommError> {
        let mut st = self.lock();
        loop {
            if let Some(msg) = self.pop_locked(&mut st, src, tag) {
                drop(st);
                self.cond.notify_all();
                return Ok(msg);
            }
            if st.closed[src] {
                return Err(CommError::PeerDisconnected(src));
            }
            st = self.cond.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub(crate) fn try_pop(&self, src: usize, tag: u32) -> Result<Option<Vec<u8>>, CommError> {
        let mut st = self.lock();
        if let Some(msg) = self.pop_locked(&mut st, src, tag) {
            drop(st);
            self.cond.notify_all();
            return Ok(Some(msg));
        }
        if st.closed[src] {
            return Err(CommError::PeerDisconnected(src));
        }
        Ok(None)
    }

    /// Block until any message arrives or `timeout` elapses.
    pub(crate) fn wait_activity(&self, timeout: std::time::Duration) {
        let st = self.lock();
        let _ = self.cond.wait_timeout(st, timeout);
    }

    pub(crate) fn close_source(&self, src: usize) {
        self.lock().closed[src] = true;
        self.cond.notify_all();
    }

    pub(crate) fn close_owner(&self) {
        self.lock().owner_closed = true;
        self.cond.notify_all();
    }

    /// Wait until every source other than `me` is closed, up to `timeout`.
    pub(crate) fn wait_all_closed(&self, me: usize, timeout: std::time::Duration) -> bool {
        let deadline = std::time::Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            if st.closed.iter().enumerate().all(|(i, &c)| c || i == me) {
                return true;
            }
            let now = std::time::Instant::now();
            if now >= deadline {
                return false;
            }
            st = self
                .cond
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}
