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

//! Error types shared by every layer of the engine.

use std::io;

use thiserror::Error;

use crate::columnar::DataType;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures while decoding the table wire format.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("buffer truncated while reading {0}")]
    Truncated(&'static str),
    #[error("unknown type tag {0}")]
    InvalidTypeTag(u8),
    #[error("invalid validity flag {0}")]
    InvalidValidityFlag(u8),
    #[error("utf8 offsets are not monotonically non-decreasing at row {0}")]
    NonMonotonicOffsets(usize),
    #[error("utf8 offsets do not span the data buffer: {0}")]
    OffsetsOutOfRange(String),
    #[error("invalid utf8 in {0}")]
    InvalidUtf8(&'static str),
    #[error("invalid bool byte {0}")]
    InvalidBool(u8),
    #[error("{0} trailing bytes after table")]
    TrailingBytes(usize),
    #[error("row count {0} does not fit in memory")]
    RowCountOverflow(u64),
    #[error("invalid schema: {0}")]
    Schema(String),
}

/// Transport level failures.
#[derive(Debug, Error)]
pub enum CommError {
    #[error("peer {0} disconnected")]
    PeerDisconnected(usize),
    #[error("connection timeout after {0:?} waiting for {1}")]
    ConnectTimeout(std::time::Duration, String),
    #[error("duplicate rank {0} during bootstrap")]
    DuplicateRank(usize),
    #[error("failed to bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("communicator used after finalize")]
    Finalized,
    #[error("rank {rank} out of range for world size {world_size}")]
    InvalidRank { rank: usize, world_size: usize },
    #[error("invalid transport configuration: {0}")]
    Config(String),
    #[error("transport io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("type mismatch: expected {expected:?}, found {found}")]
    TypeMismatch { expected: DataType, found: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("row index {index} out of bounds for {len} rows")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error("collective parameter mismatch: {0}")]
    ParameterMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}
