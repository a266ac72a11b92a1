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

//! Array collectives: broadcast, gather, allgather, scatter, alltoall,
//! reduce and allreduce over a [`Communicator`].
//!
//! Every collective is a matched call. Before moving any data, each rank
//! sends a 16-byte parameter header (kind, dtype, op, status, root, length)
//! to every other rank, so a contract violation on any rank surfaces as
//! [`Error::ParameterMismatch`] on all ranks instead of a hang.
//!
//! Algorithms: binomial-tree broadcast, direct gather/scatter, ring
//! allgather, pairwise-exchange alltoall, and reduce as gather-to-root
//! followed by a fold in ascending rank order. The fixed fold order makes
//! Float64 reductions bit-reproducible for a given world size.

use std::cmp::Ordering;

use crate::columnar::DataType;
use crate::comm::{Communicator, MessageTag};
use crate::error::{Error, Result};

const TAG_HEADER: MessageTag = MessageTag(MessageTag::COLLECTIVE_BASE + 1);
const TAG_BCAST: MessageTag = MessageTag(MessageTag::COLLECTIVE_BASE + 2);
const TAG_GATHER: MessageTag = MessageTag(MessageTag::COLLECTIVE_BASE + 3);
const TAG_RING: MessageTag = MessageTag(MessageTag::COLLECTIVE_BASE + 4);
const TAG_SCATTER: MessageTag = MessageTag(MessageTag::COLLECTIVE_BASE + 5);
const TAG_ALLTOALL: MessageTag = MessageTag(MessageTag::COLLECTIVE_BASE + 6);

/// Dense array of numbers without nulls.
#[derive(Clone, Debug)]
pub enum NumericArray {
    Int64(Vec<i64>),
    Float64(Vec<f64>),
}

impl NumericArray {
    pub fn empty(dtype: DataType) -> Result<Self> {
        match dtype {
            DataType::Int64 => Ok(NumericArray::Int64(Vec::new())),
            DataType::Float64 => Ok(NumericArray::Float64(Vec::new())),
            other => Err(Error::InvalidArgument(format!(
                "{other} is not a numeric array type"
            ))),
        }
    }

    pub fn dtype(&self) -> DataType {
        match self {
            NumericArray::Int64(_) => DataType::Int64,
            NumericArray::Float64(_) => DataType::Float64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            NumericArray::Int64(v) => v.len(),
            NumericArray::Float64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_i64(&self) -> Option<&[i64]> {
        match self {
            NumericArray::Int64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match self {
            NumericArray::Float64(v) => Some(v),
            _ => None,
        }
    }

    /// Little-endian value bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * 8);
        match self {
            NumericArray::Int64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NumericArray::Float64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(dtype: DataType, bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::InvalidArgument(format!(
                "{} bytes is not a whole number of values",
                bytes.len()
            )));
        }
        let words = bytes.chunks_exact(8).map(|c| c.try_into().unwrap());
        match dtype {
            DataType::Int64 => Ok(NumericArray::Int64(words.map(i64::from_le_bytes).collect())),
            DataType::Float64 => Ok(NumericArray::Float64(
                words.map(f64::from_le_bytes).collect(),
            )),
            other => Err(Error::InvalidArgument(format!(
                "{other} is not a numeric array type"
            ))),
        }
    }

    /// Concatenate in order; all parts must share `dtype`.
    pub fn concat(dtype: DataType, parts: &[NumericArray]) -> Result<Self> {
        let mut out = NumericArray::empty(dtype)?;
        for p in parts {
            match (&mut out, p) {
                (NumericArray::Int64(o), NumericArray::Int64(v)) => o.extend_from_slice(v),
                (NumericArray::Float64(o), NumericArray::Float64(v)) => o.extend_from_slice(v),
                _ => {
                    return Err(Error::TypeMismatch {
                        expected: dtype,
                        found: p.dtype().to_string(),
                    })
                }
            }
        }
        Ok(out)
    }

    /// Bitwise equality (distinguishes NaN payloads and signed zeros).
    pub fn bit_eq(&self, other: &NumericArray) -> bool {
        self.dtype() == other.dtype() && self.to_bytes() == other.to_bytes()
    }
}

impl PartialEq for NumericArray {
    fn eq(&self, other: &Self) -> bool {
        self.bit_eq(other)
    }
}

impl From<Vec<i64>> for NumericArray {
    fn from(v: Vec<i64>) -> Self {
        NumericArray::Int64(v)
    }
}

impl From<Vec<f64>> for NumericArray {
    fn from(v: Vec<f64>) -> Self {
        NumericArray::Float64(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReduceOp {
    Sum,
    Min,
    Max,
    Prod,
}

impl ReduceOp {
    fn code(self) -> u8 {
        match self {
            ReduceOp::Sum => 1,
            ReduceOp::Min => 2,
            ReduceOp::Max => 3,
            ReduceOp::Prod => 4,
        }
    }

    /// Integer combine; SUM and PROD wrap on overflow.
    #[inline]
    pub fn apply_i64(self, a: i64, b: i64) -> i64 {
        match self {
            ReduceOp::Sum => a.wrapping_add(b),
            ReduceOp::Prod => a.wrapping_mul(b),
            ReduceOp::Min => a.min(b),
            ReduceOp::Max => a.max(b),
        }
    }

    /// Float combine. MIN and MAX use the engine's total order (NaN above
    /// every number) and keep `a` when the operands compare equal.
    #[inline]
    pub fn apply_f64(self, a: f64, b: f64) -> f64 {
        match self {
            ReduceOp::Sum => a + b,
            ReduceOp::Prod => a * b,
            ReduceOp::Min => {
                if total_cmp_f64(b, a) == Ordering::Less {
                    b
                } else {
                    a
                }
            }
            ReduceOp::Max => {
                if total_cmp_f64(b, a) == Ordering::Greater {
                    b
                } else {
                    a
                }
            }
        }
    }

    pub fn identity_i64(self) -> i64 {
        match self {
            ReduceOp::Sum => 0,
            ReduceOp::Prod => 1,
            ReduceOp::Min => i64::MAX,
            ReduceOp::Max => i64::MIN,
        }
    }

    pub fn identity_f64(self) -> f64 {
        match self {
            ReduceOp::Sum => 0.0,
            ReduceOp::Prod => 1.0,
            ReduceOp::Min => f64::NAN,
            ReduceOp::Max => f64::NEG_INFINITY,
        }
    }

    /// Element-wise `acc = acc op other`.
    pub fn fold_into(self, acc: &mut NumericArray, other: &NumericArray) -> Result<()> {
        if acc.len() != other.len() {
            return Err(Error::ParameterMismatch(format!(
                "lengths {} and {}",
                acc.len(),
                other.len()
            )));
        }
        match (acc, other) {
            (NumericArray::Int64(a), NumericArray::Int64(b)) => a
                .iter_mut()
                .zip(b)
                .for_each(|(x, y)| *x = self.apply_i64(*x, *y)),
            (NumericArray::Float64(a), NumericArray::Float64(b)) => a
                .iter_mut()
                .zip(b)
                .for_each(|(x, y)| *x = self.apply_f64(*x, *y)),
            (a, b) => {
                return Err(Error::ParameterMismatch(format!(
                    "dtypes {} and {}",
                    a.dtype(),
                    b.dtype()
                )))
            }
        }
        Ok(())
    }
}

/// Natural order on numbers with every NaN equal to each other and greater
/// than all numbers; `-0.0 == +0.0`.
#[inline]
pub fn total_cmp_f64(a: f64, b: f64) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (false, false) => a.partial_cmp(&b).unwrap(),
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Broadcast = 1,
    Gather = 2,
    Allgather = 3,
    Scatter = 4,
    Alltoall = 5,
    AlltoallBytes = 6,
    Reduce = 7,
    Allreduce = 8,
    AllgatherBytes = 9,
    GatherBytes = 10,
    BroadcastBytes = 11,
}

const DTYPE_ANY: u8 = 0xFF;
const NO_ROOT: u32 = u32::MAX;

/// The 16-byte parameter-check header.
#[derive(Clone, Copy, Debug)]
struct Header {
    kind: u8,
    dtype: u8,
    op: u8,
    /// 0 ok, 1 local precondition violated
    status: u8,
    root: u32,
    length: u64,
}

impl Header {
    fn new(kind: Kind) -> Self {
        Header {
            kind: kind as u8,
            dtype: DTYPE_ANY,
            op: 0,
            status: 0,
            root: NO_ROOT,
            length: 0,
        }
    }

    fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(16);
        b.extend_from_slice(&[self.kind, self.dtype, self.op, self.status]);
        b.extend_from_slice(&self.root.to_le_bytes());
        b.extend_from_slice(&self.length.to_le_bytes());
        b
    }

    fn decode(b: &[u8]) -> Result<Self> {
        if b.len() != 16 {
            return Err(Error::ParameterMismatch(format!(
                "header of {} bytes",
                b.len()
            )));
        }
        Ok(Header {
            kind: b[0],
            dtype: b[1],
            op: b[2],
            status: b[3],
            root: u32::from_le_bytes(b[4..8].try_into().unwrap()),
            length: u64::from_le_bytes(b[8..16].try_into().unwrap()),
        })
    }
}

#[derive(Default)]
struct Checks {
    same_root: bool,
    same_dtype: bool,
    same_length: bool,
    same_op: bool,
}

/// Exchange headers with every rank and validate them identically everywhere.
fn check_params(
    comm: &mut Communicator,
    mine: Header,
    local_error: Option<String>,
    checks: Checks,
) -> Result<()> {
    let w = comm.world_size();
    let me = comm.rank();
    let mut mine = mine;
    if local_error.is_some() {
        mine.status = 1;
    }
    let encoded = mine.encode();
    for peer in (0..w).filter(|&p| p != me) {
        comm.send(peer, TAG_HEADER, encoded.clone())?;
    }
    let mut headers = Vec::with_capacity(w);
    for peer in 0..w {
        if peer == me {
            headers.push(mine);
        } else {
            headers.push(Header::decode(&comm.recv(peer, TAG_HEADER)?)?);
        }
    }
    if let Some(msg) = local_error {
        return Err(Error::ParameterMismatch(format!("rank {me}: {msg}")));
    }
    if let Some(bad) = headers.iter().position(|h| h.status != 0) {
        return Err(Error::ParameterMismatch(format!(
            "rank {bad} rejected its arguments"
        )));
    }
    let first = headers[0];
    for (r, h) in headers.iter().enumerate() {
        if h.kind != first.kind {
            return Err(Error::ParameterMismatch(format!(
                "rank {r} entered collective {} while rank 0 entered {}",
                h.kind, first.kind
            )));
        }
        if checks.same_root && h.root != first.root {
            return Err(Error::ParameterMismatch(format!(
                "rank {r} uses root {} vs {}",
                h.root, first.root
            )));
        }
        if checks.same_op && h.op != first.op {
            return Err(Error::ParameterMismatch(format!(
                "rank {r} uses a different reduce op"
            )));
        }
        if checks.same_length && h.length != first.length {
            return Err(Error::ParameterMismatch(format!(
                "rank {r} has length {} vs {}",
                h.length, first.length
            )));
        }
    }
    if checks.same_dtype {
        let mut known = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.dtype != DTYPE_ANY);
        if let Some((_, d0)) = known.next() {
            if let Some((r, _)) = known.find(|(_, h)| h.dtype != d0.dtype) {
                return Err(Error::ParameterMismatch(format!(
                    "rank {r} uses a different dtype"
                )));
            }
        }
    }
    if checks.same_root && first.root as usize >= w {
        return Err(Error::ParameterMismatch(format!(
            "root {} out of range for world size {w}",
            first.root
        )));
    }
    Ok(())
}

fn root_field(root: usize) -> u32 {
    u32::try_from(root).unwrap_or(NO_ROOT - 1)
}

fn root_error(root: usize, w: usize) -> Option<String> {
    (root >= w).then(|| format!("root {root} out of range for world size {w}"))
}

fn array_header(kind: Kind, array: &NumericArray) -> Header {
    let mut h = Header::new(kind);
    h.dtype = array.dtype().tag();
    h.length = array.len() as u64;
    h
}

fn dtype_from_header(tag: u8) -> Result<DataType> {
    DataType::from_tag(tag).ok_or_else(|| Error::ParameterMismatch(format!("bad dtype tag {tag}")))
}

fn binomial_broadcast(
    comm: &mut Communicator,
    root: usize,
    payload: Option<Vec<u8>>,
    tag: MessageTag,
) -> Result<Vec<u8>> {
    let w = comm.world_size();
    let vrank = (comm.rank() + w - root) % w;
    let real = |v: usize| (v + root) % w;
    let mut data = payload;
    let mut mask = 1;
    while mask < w {
        if vrank & mask != 0 {
            data = Some(comm.recv(real(vrank - mask), tag)?);
            break;
        }
        mask <<= 1;
    }
    let data = data.expect("root holds the payload");
    mask >>= 1;
    while mask > 0 {
        if vrank + mask < w {
            comm.send(real(vrank + mask), tag, data.clone())?;
        }
        mask >>= 1;
    }
    Ok(data)
}

fn direct_gather(
    comm: &mut Communicator,
    root: usize,
    mine: Vec<u8>,
) -> Result<Option<Vec<Vec<u8>>>> {
    let me = comm.rank();
    if me != root {
        comm.send(root, TAG_GATHER, mine)?;
        return Ok(None);
    }
    let mut mine = Some(mine);
    let mut parts = Vec::with_capacity(comm.world_size());
    for src in 0..comm.world_size() {
        if src == me {
            parts.push(mine.take().unwrap());
        } else {
            parts.push(comm.recv(src, TAG_GATHER)?);
        }
    }
    Ok(Some(parts))
}

fn ring_allgather(comm: &mut Communicator, mine: Vec<u8>) -> Result<Vec<Vec<u8>>> {
    let w = comm.world_size();
    let me = comm.rank();
    let mut blocks: Vec<Option<Vec<u8>>> = vec![None; w];
    blocks[me] = Some(mine);
    let right = (me + 1) % w;
    let left = (me + w - 1) % w;
    for step in 0..w.saturating_sub(1) {
        let send_idx = (me + w - step) % w;
        let recv_idx = (me + w - step - 1) % w;
        comm.send(
            right,
            TAG_RING,
            blocks[send_idx].clone().expect("block present"),
        )?;
        blocks[recv_idx] = Some(comm.recv(left, TAG_RING)?);
    }
    Ok(blocks
        .into_iter()
        .map(|b| b.expect("all blocks received"))
        .collect())
}

fn pairwise_alltoall(comm: &mut Communicator, mut parts: Vec<Vec<u8>>) -> Result<Vec<Vec<u8>>> {
    let w = comm.world_size();
    let me = comm.rank();
    let mut out: Vec<Vec<u8>> = vec![Vec::new(); w];
    out[me] = std::mem::take(&mut parts[me]);
    for k in 1..w {
        let dest = (me + k) % w;
        let src = (me + w - k) % w;
        comm.send(dest, TAG_ALLTOALL, std::mem::take(&mut parts[dest]))?;
        out[src] = comm.recv(src, TAG_ALLTOALL)?;
    }
    Ok(out)
}

/// Every rank returns a copy of `root`'s array. Non-root contents are
/// ignored, but the dtype must agree.
pub fn broadcast(
    comm: &mut Communicator,
    array: &NumericArray,
    root: usize,
) -> Result<NumericArray> {
    let w = comm.world_size();
    let mut h = array_header(Kind::Broadcast, array);
    h.root = root_field(root);
    let checks = Checks {
        same_root: true,
        same_dtype: true,
        ..Default::default()
    };
    check_params(comm, h, root_error(root, w), checks)?;
    let payload = (comm.rank() == root).then(|| array.to_bytes());
    let bytes = binomial_broadcast(comm, root, payload, TAG_BCAST)?;
    NumericArray::from_bytes(array.dtype(), &bytes)
}

/// Root returns the rank-order concatenation of every rank's array.
pub fn gather(
    comm: &mut Communicator,
    array: &NumericArray,
    root: usize,
) -> Result<Option<NumericArray>> {
    let w = comm.world_size();
    let mut h = array_header(Kind::Gather, array);
    h.root = root_field(root);
    let checks = Checks {
        same_root: true,
        same_dtype: true,
        ..Default::default()
    };
    check_params(comm, h, root_error(root, w), checks)?;
    match direct_gather(comm, root, array.to_bytes())? {
        None => Ok(None),
        Some(parts) => Ok(Some(NumericArray::from_bytes(
            array.dtype(),
            &parts.concat(),
        )?)),
    }
}

/// Every rank returns the rank-order concatenation of every rank's array.
pub fn allgather(comm: &mut Communicator, array: &NumericArray) -> Result<NumericArray> {
    let h = array_header(Kind::Allgather, array);
    check_params(
        comm,
        h,
        None,
        Checks {
            same_dtype: true,
            ..Default::default()
        },
    )?;
    let blocks = ring_allgather(comm, array.to_bytes())?;
    NumericArray::from_bytes(array.dtype(), &blocks.concat())
}

/// Rank `r` returns `parts[r]` from the root. Only the root's `parts` is read.
pub fn scatter(
    comm: &mut Communicator,
    parts: Option<&[NumericArray]>,
    root: usize,
) -> Result<NumericArray> {
    let w = comm.world_size();
    let me = comm.rank();
    let mut h = Header::new(Kind::Scatter);
    h.root = root_field(root);
    let mut err = root_error(root, w);
    if me == root {
        match parts {
            Some(p) if p.len() == w => {
                let d = p
                    .first()
                    .map(NumericArray::dtype)
                    .unwrap_or(DataType::Int64);
                if p.iter().any(|x| x.dtype() != d) {
                    err.get_or_insert_with(|| "scatter parts have mixed dtypes".into());
                }
                h.dtype = d.tag();
                h.length = p.len() as u64;
            }
            Some(p) => {
                err.get_or_insert_with(|| format!("{} parts for world size {w}", p.len()));
            }
            None => {
                err.get_or_insert_with(|| "root supplied no parts".into());
            }
        }
    }
    check_params(
        comm,
        h,
        err,
        Checks {
            same_root: true,
            ..Default::default()
        },
    )?;
    // the dtype travels with the first byte of each part
    if me == root {
        let parts = parts.expect("checked above");
        for (dest, p) in parts.iter().enumerate() {
            if dest != me {
                let mut msg = vec![p.dtype().tag()];
                msg.extend_from_slice(&p.to_bytes());
                comm.send(dest, TAG_SCATTER, msg)?;
            }
        }
        Ok(parts[me].clone())
    } else {
        let msg = comm.recv(root, TAG_SCATTER)?;
        let (&tag, body) = msg
            .split_first()
            .ok_or_else(|| Error::ParameterMismatch("empty scatter message".into()))?;
        NumericArray::from_bytes(dtype_from_header(tag)?, body)
    }
}

/// `output[s]` at rank `r` is `parts[r]` at rank `s`.
pub fn alltoall(comm: &mut Communicator, parts: &[NumericArray]) -> Result<Vec<NumericArray>> {
    let w = comm.world_size();
    let mut h = Header::new(Kind::Alltoall);
    h.length = parts.len() as u64;
    let mut err = (parts.len() != w).then(|| format!("{} parts for world size {w}", parts.len()));
    let dtype = parts.first().map(NumericArray::dtype);
    if let Some(d) = dtype {
        h.dtype = d.tag();
        if parts.iter().any(|p| p.dtype() != d) {
            err.get_or_insert_with(|| "alltoall parts have mixed dtypes".into());
        }
    }
    check_params(
        comm,
        h,
        err,
        Checks {
            same_dtype: true,
            same_length: true,
            ..Default::default()
        },
    )?;
    let dtype = dtype.expect("w >= 1 parts");
    let out = pairwise_alltoall(comm, parts.iter().map(NumericArray::to_bytes).collect())?;
    out.iter()
        .map(|b| NumericArray::from_bytes(dtype, b))
        .collect()
}

/// Variable-size byte exchange: `output[s]` at rank `r` is `parts[r]` at rank `s`.
pub fn alltoall_bytes(comm: &mut Communicator, parts: Vec<Vec<u8>>) -> Result<Vec<Vec<u8>>> {
    let w = comm.world_size();
    let mut h = Header::new(Kind::AlltoallBytes);
    h.length = parts.len() as u64;
    let err = (parts.len() != w).then(|| format!("{} parts for world size {w}", parts.len()));
    check_params(
        comm,
        h,
        err,
        Checks {
            same_length: true,
            ..Default::default()
        },
    )?;
    pairwise_alltoall(comm, parts)
}

/// Every rank returns every rank's payload, in rank order.
pub fn allgather_bytes(comm: &mut Communicator, mine: Vec<u8>) -> Result<Vec<Vec<u8>>> {
    check_params(
        comm,
        Header::new(Kind::AllgatherBytes),
        None,
        Checks::default(),
    )?;
    ring_allgather(comm, mine)
}

/// Root returns every rank's payload, in rank order.
pub fn gather_bytes(
    comm: &mut Communicator,
    mine: Vec<u8>,
    root: usize,
) -> Result<Option<Vec<Vec<u8>>>> {
    let w = comm.world_size();
    let mut h = Header::new(Kind::GatherBytes);
    h.root = root_field(root);
    check_params(
        comm,
        h,
        root_error(root, w),
        Checks {
            same_root: true,
            ..Default::default()
        },
    )?;
    direct_gather(comm, root, mine)
}

/// Every rank returns the root's payload.
pub fn broadcast_bytes(comm: &mut Communicator, payload: Vec<u8>, root: usize) -> Result<Vec<u8>> {
    let w = comm.world_size();
    let mut h = Header::new(Kind::BroadcastBytes);
    h.root = root_field(root);
    check_params(
        comm,
        h,
        root_error(root, w),
        Checks {
            same_root: true,
            ..Default::default()
        },
    )?;
    let payload = (comm.rank() == root).then_some(payload);
    binomial_broadcast(comm, root, payload, TAG_BCAST)
}

fn reduce_header(kind: Kind, array: &NumericArray, op: ReduceOp, root: usize) -> Header {
    let mut h = array_header(kind, array);
    h.op = op.code();
    h.root = root_field(root);
    h
}

fn reduce_unchecked(
    comm: &mut Communicator,
    array: &NumericArray,
    op: ReduceOp,
    root: usize,
) -> Result<Option<NumericArray>> {
    let Some(parts) = direct_gather(comm, root, array.to_bytes())? else {
        return Ok(None);
    };
    let mut parts = parts.into_iter();
    let mut acc =
        NumericArray::from_bytes(array.dtype(), &parts.next().expect("world has rank 0"))?;
    for p in parts {
        op.fold_into(&mut acc, &NumericArray::from_bytes(array.dtype(), &p)?)?;
    }
    Ok(Some(acc))
}

/// Element-wise reduction to `root`, folded as `((v0 op v1) op v2) ...`.
pub fn reduce(
    comm: &mut Communicator,
    array: &NumericArray,
    op: ReduceOp,
    root: usize,
) -> Result<Option<NumericArray>> {
    let w = comm.world_size();
    let h = reduce_header(Kind::Reduce, array, op, root);
    let checks = Checks {
        same_root: true,
        same_dtype: true,
        same_length: true,
        same_op: true,
    };
    check_params(comm, h, root_error(root, w), checks)?;
    reduce_unchecked(comm, array, op, root)
}

/// Reduce to rank 0, then broadcast; every rank returns identical bits.
pub fn allreduce(
    comm: &mut Communicator,
    array: &NumericArray,
    op: ReduceOp,
) -> Result<NumericArray> {
    let h = reduce_header(Kind::Allreduce, array, op, 0);
    let checks = Checks {
        same_root: true,
        same_dtype: true,
        same_length: true,
        same_op: true,
    };
    check_params(comm, h, None, checks)?;
    let reduced = reduce_unchecked(comm, array, op, 0)?;
    let bytes = binomial_broadcast(comm, 0, reduced.map(|r| r.to_bytes()), TAG_BCAST)?;
    NumericArray::from_bytes(array.dtype(), &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::launch_inproc;

    fn rank_array(c: &Communicator) -> NumericArray {
        NumericArray::from(vec![c.rank() as i64])
    }

    #[test]
    fn world_of_one_is_identity() {
        let out = launch_inproc(1, |mut c| {
            let a = NumericArray::from(vec![1.5, -2.0]);
            assert_eq!(broadcast(&mut c, &a, 0)?, a);
            assert_eq!(allgather(&mut c, &a)?, a);
            assert_eq!(allreduce(&mut c, &a, ReduceOp::Sum)?, a);
            assert_eq!(alltoall(&mut c, std::slice::from_ref(&a))?, vec![a.clone()]);
            Ok(())
        });
        out.unwrap();
    }

    #[test]
    fn broadcast_from_rank_two() {
        let out = launch_inproc(4, |mut c| {
            let mine = if c.rank() == 2 { vec![5i64, 6] } else { vec![] };
            broadcast(&mut c, &NumericArray::from(mine), 2)
        })
        .unwrap();
        assert!(out.iter().all(|a| a == &NumericArray::from(vec![5i64, 6])));
    }

    #[test]
    fn gather_in_rank_order() {
        let out = launch_inproc(3, |mut c| {
            let a = rank_array(&c);
            gather(&mut c, &a, 0)
        })
        .unwrap();
        assert_eq!(out[0], Some(NumericArray::from(vec![0i64, 1, 2])));
        assert!(out[1].is_none() && out[2].is_none());
    }

    #[test]
    fn gather_skips_empty_contribution() {
        let out = launch_inproc(3, |mut c| {
            let v = if c.rank() == 1 {
                vec![]
            } else {
                vec![c.rank() as i64]
            };
            gather(&mut c, &NumericArray::from(v), 1)
        })
        .unwrap();
        assert_eq!(out[1], Some(NumericArray::from(vec![0i64, 2])));
    }

    #[test]
    fn allgather_ranks() {
        let out = launch_inproc(4, |mut c| {
            let a = rank_array(&c);
            allgather(&mut c, &a)
        })
        .unwrap();
        assert!(out
            .iter()
            .all(|a| a == &NumericArray::from(vec![0i64, 1, 2, 3])));
    }

    #[test]
    fn scatter_parts() {
        let out = launch_inproc(2, |mut c| {
            let parts = [
                NumericArray::from(vec![1i64]),
                NumericArray::from(vec![2i64, 3]),
            ];
            let p = (c.rank() == 0).then_some(&parts[..]);
            scatter(&mut c, p, 0)
        })
        .unwrap();
        assert_eq!(
            out,
            vec![
                NumericArray::from(vec![1i64]),
                NumericArray::from(vec![2i64, 3])
            ]
        );
    }

    #[test]
    fn scatter_wrong_part_count_errors_everywhere() {
        let out =
            crate::comm::launch_inproc_with(&crate::comm::TransportConfig::inproc(3), |mut c| {
                let parts = [NumericArray::from(vec![1i64])];
                let p = (c.rank() == 0).then_some(&parts[..]);
                scatter(&mut c, p, 0)
            })
            .unwrap();
        assert!(out
            .iter()
            .all(|r| matches!(r, Err(Error::ParameterMismatch(_)))));
    }

    #[test]
    fn alltoall_transposes() {
        let out = launch_inproc(2, |mut c| {
            let base = if c.rank() == 0 { [1i64, 2] } else { [3, 4] };
            let parts: Vec<NumericArray> =
                base.iter().map(|&v| NumericArray::from(vec![v])).collect();
            alltoall(&mut c, &parts)
        })
        .unwrap();
        assert_eq!(
            out[0],
            vec![
                NumericArray::from(vec![1i64]),
                NumericArray::from(vec![3i64])
            ]
        );
        assert_eq!(
            out[1],
            vec![
                NumericArray::from(vec![2i64]),
                NumericArray::from(vec![4i64])
            ]
        );
    }

    #[test]
    fn reduce_sum_and_max() {
        let out = launch_inproc(4, |mut c| {
            let a = rank_array(&c);
            reduce(&mut c, &a, ReduceOp::Sum, 0)
        })
        .unwrap();
        assert_eq!(out[0], Some(NumericArray::from(vec![6i64])));
        let out = launch_inproc(3, |mut c| {
            let v = [[1i64, 5], [2, 4], [3, 3]][c.rank()].to_vec();
            reduce(&mut c, &NumericArray::from(v), ReduceOp::Max, 0)
        })
        .unwrap();
        assert_eq!(out[0], Some(NumericArray::from(vec![3i64, 5])));
    }

    #[test]
    fn allreduce_prod_is_zero() {
        let out = launch_inproc(4, |mut c| {
            let a = rank_array(&c);
            allreduce(&mut c, &a, ReduceOp::Prod)
        })
        .unwrap();
        assert!(out.iter().all(|a| a == &NumericArray::from(vec![0i64])));
    }

    #[test]
    fn mismatches_are_errors_on_every_rank() {
        let cfg = crate::comm::TransportConfig::inproc(3);
        let out = crate::comm::launch_inproc_with(&cfg, |mut c| {
            let v = vec![1i64; if c.rank() == 1 { 2 } else { 1 }];
            allreduce(&mut c, &NumericArray::from(v), ReduceOp::Sum)
        })
        .unwrap();
        assert!(out
            .iter()
            .all(|r| matches!(r, Err(Error::ParameterMismatch(_)))));

        let out = crate::comm::launch_inproc_with(&cfg, |mut c| {
            let a = if c.rank() == 2 {
                NumericArray::from(vec![1.0])
            } else {
                NumericArray::from(vec![1i64])
            };
            broadcast(&mut c, &a, 0)
        })
        .unwrap();
        assert!(out
            .iter()
            .all(|r| matches!(r, Err(Error::ParameterMismatch(_)))));

        let out = crate::comm::launch_inproc_with(&cfg, |mut c| {
            let root = c.rank().min(1);
            broadcast(&mut c, &NumericArray::from(vec![1i64]), root)
        })
        .unwrap();
        assert!(out
            .iter()
            .all(|r| matches!(r, Err(Error::ParameterMismatch(_)))));

        let out = crate::comm::launch_inproc_with(&cfg, |mut c| {
            let r = gather(&mut c, &NumericArray::from(vec![1i64]), 7);
            // the communicator stays usable after a rejected call
            let a = rank_array(&c);
            let ok = allgather(&mut c, &a)?;
            assert_eq!(ok.len(), 3);
            r
        })
        .unwrap();
        assert!(out
            .iter()
            .all(|r| matches!(r, Err(Error::ParameterMismatch(_)))));
    }

    #[test]
    fn float_min_max_total_order() {
        assert!(ReduceOp::Max.apply_f64(1.0, f64::NAN).is_nan());
        assert_eq!(ReduceOp::Min.apply_f64(f64::NAN, 1.0), 1.0);
        assert_eq!(
            ReduceOp::Min.apply_f64(-0.0, 0.0).to_bits(),
            (-0.0f64).to_bits()
        );
        assert!(ReduceOp::Min.identity_f64().is_nan());
    }
}
