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

//! Canonical row encoding used for hashing, equality and canonical ordering.

use super::array::{ColumnArray, DataType};
use super::table::Table;

/// Canonical bytes of one row restricted to a list of key columns.
///
/// Per column: `0x00` for null, else `0x01` followed by the value
/// (Int64/Float64 as 8 little-endian bytes, Bool as one byte, Utf8 as a
/// little-endian `u32` length then the bytes). Floats are canonicalized first,
/// so `-0.0 == +0.0` and all NaNs are one value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowKey(pub Vec<u8>);

impl RowKey {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

pub const CANONICAL_NAN_BITS: u64 = 0x7FF8_0000_0000_0000;

#[inline]
pub fn canonical_f64_bits(v: f64) -> u64 {
    if v.is_nan() {
        CANONICAL_NAN_BITS
    } else if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

#[inline]
pub(crate) fn encode_value_into(out: &mut Vec<u8>, col: &ColumnArray, row: usize) {
    if !col.is_valid(row) {
        out.push(0);
        return;
    }
    out.push(1);
    match col.dtype() {
        DataType::Int64 => out.extend_from_slice(&col.i64_at(row).to_le_bytes()),
        DataType::Float64 => {
            out.extend_from_slice(&canonical_f64_bits(col.f64_at(row)).to_le_bytes())
        }
        DataType::Bool => out.push(col.bool_at(row) as u8),
        DataType::Utf8 => {
            let b = col.bytes_at(row);
            out.extend_from_slice(&(b.len() as u32).to_le_bytes());
            out.extend_from_slice(b);
        }
    }
}

/// Append the key encoding of `row` over `key_columns` to `out`.
#[inline]
pub fn encode_row_key_into(out: &mut Vec<u8>, table: &Table, row: usize, key_columns: &[usize]) {
    for &c in key_columns {
        encode_value_into(out, table.column(c), row);
    }
}

pub fn encode_row_key(table: &Table, row: usize, key_columns: &[usize]) -> RowKey {
    let mut out = Vec::with_capacity(key_columns.len() * 9);
    encode_row_key_into(&mut out, table, row, key_columns);
    RowKey(out)
}

/// Whether any of the key columns is null at `row`.
#[inline]
pub fn has_null_key(table: &Table, row: usize, key_columns: &[usize]) -> bool {
    key_columns.iter().any(|&c| !table.column(c).is_valid(row))
}

/// Flat storage of one encoded key per row: avoids one allocation per row.
pub struct EncodedKeys {
    bytes: Vec<u8>,
    ends: Vec<usize>,
}

impl EncodedKeys {
    pub fn encode(table: &Table, key_columns: &[usize]) -> Self {
        let n = table.num_rows();
        let mut bytes = Vec::with_capacity(n * key_columns.len() * 9);
        let mut ends = Vec::with_capacity(n);
        for row in 0..n {
            encode_row_key_into(&mut bytes, table, row, key_columns);
            ends.push(bytes.len());
        }
        EncodedKeys { bytes, ends }
    }

    #[inline]
    pub fn get(&self, row: usize) -> &[u8] {
        let start = if row == 0 { 0 } else { self.ends[row - 1] };
        &self.bytes[start..self.ends[row]]
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }
}

/// Sort rows by the byte order of their full-row keys. Only meant for
/// order-insensitive comparison of results.
pub fn canonicalize(table: &Table) -> Table {
    let all: Vec<usize> = (0..table.num_columns()).collect();
    let keys = EncodedKeys::encode(table, &all);
    let mut idx: Vec<usize> = (0..table.num_rows()).collect();
    idx.sort_by(|&a, &b| keys.get(a).cmp(keys.get(b)));
    table.take_unchecked(&idx)
}

/// Logical equality of two tables as multisets of canonical rows.
pub fn same_rows(a: &Table, b: &Table) -> bool {
    if a.schema() != b.schema() || a.num_rows() != b.num_rows() {
        return false;
    }
    let all: Vec<usize> = (0..a.num_columns()).collect();
    let mut ka: Vec<RowKey> = (0..a.num_rows())
        .map(|r| encode_row_key(a, r, &all))
        .collect();
    let mut kb: Vec<RowKey> = (0..b.num_rows())
        .map(|r| encode_row_key(b, r, &all))
        .collect();
    ka.sort_unstable();
    kb.sort_unstable();
    ka == kb
}
