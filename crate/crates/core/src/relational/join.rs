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

//! Equi-join by hashing.
//!
//! The build side is the smaller input. Keys are bucketed by 64-bit FNV-1a
//! over their canonical encoding and collisions are resolved by comparing
//! the encodings. Null keys never match. Output rows are ordered by left row,
//! then by right row; right rows that never matched (`Right`/`FullOuter`)
//! follow in right order.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use super::setops::combined_schema;
use crate::columnar::{has_null_key, ColumnBuilder, EncodedKeys, Schema, Table};
use crate::error::{Error, Result};
use crate::hash::fnv1a64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JoinType {
    Inner,
    Left,
    Right,
    FullOuter,
}

impl JoinType {
    pub const ALL: [JoinType; 4] = [
        JoinType::Inner,
        JoinType::Left,
        JoinType::Right,
        JoinType::FullOuter,
    ];

    fn keeps_left(self) -> bool {
        matches!(self, JoinType::Left | JoinType::FullOuter)
    }

    fn keeps_right(self) -> bool {
        matches!(self, JoinType::Right | JoinType::FullOuter)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JoinSpec {
    pub join_type: JoinType,
    pub left_keys: Vec<String>,
    pub right_keys: Vec<String>,
}

impl JoinSpec {
    pub fn new(join_type: JoinType, left_keys: &[&str], right_keys: &[&str]) -> Self {
        JoinSpec {
            join_type,
            left_keys: left_keys.iter().map(|s| s.to_string()).collect(),
            right_keys: right_keys.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Resolve key names to column indices and check dtype alignment.
    pub fn resolve(&self, left: &Schema, right: &Schema) -> Result<(Vec<usize>, Vec<usize>)> {
        if self.left_keys.is_empty() || self.left_keys.len() != self.right_keys.len() {
            return Err(Error::InvalidArgument(
                "join keys must be non-empty and of equal length".into(),
            ));
        }
        let l = self
            .left_keys
            .iter()
            .map(|k| left.index_of(k))
            .collect::<Result<Vec<_>>>()?;
        let r = self
            .right_keys
            .iter()
            .map(|k| right.index_of(k))
            .collect::<Result<Vec<_>>>()?;
        for (&li, &ri) in l.iter().zip(&r) {
            let (lt, rt) = (left.field(li).dtype, right.field(ri).dtype);
            if lt != rt {
                return Err(Error::TypeMismatch {
                    expected: lt,
                    found: format!("{rt} for key {:?}", right.field(ri).name),
                });
            }
        }
        Ok((l, r))
    }

    /// Output schema: every left column, then the right non-key columns.
    pub fn output_schema(&self, left: &Schema, right: &Schema) -> Result<Schema> {
        let (_, r) = self.resolve(left, right)?;
        combined_schema(
            left,
            right
                .fields()
                .iter()
                .enumerate()
                .filter(|(i, _)| !r.contains(i))
                .map(|(_, f)| f),
        )
    }
}

/// Hasher for keys that are already FNV digests.
#[derive(Default)]
struct PassThrough(u64);

impl Hasher for PassThrough {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, _: &[u8]) {
        unreachable!("only u64 keys are hashed")
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = v;
    }
}

/// Rows of one table bucketed by key hash; null-keyed rows are left out.
struct HashIndex<'a> {
    keys: &'a EncodedKeys,
    buckets: HashMap<u64, Vec<usize>, BuildHasherDefault<PassThrough>>,
}

impl<'a> HashIndex<'a> {
    fn build(table: &Table, key_cols: &[usize], keys: &'a EncodedKeys) -> Self {
        let mut buckets: HashMap<u64, Vec<usize>, BuildHasherDefault<PassThrough>> =
            HashMap::with_capacity_and_hasher(table.num_rows(), Default::default());
        for row in 0..table.num_rows() {
            if !has_null_key(table, row, key_cols) {
                buckets.entry(fnv1a64(keys.get(row))).or_default().push(row);
            }
        }
        HashIndex { keys, buckets }
    }

    fn probe<'s>(&'s self, key: &'s [u8]) -> impl Iterator<Item = usize> + 's {
        self.buckets
            .get(&fnv1a64(key))
            .into_iter()
            .flatten()
            .copied()
            .filter(move |&r| self.keys.get(r) == key)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum OutRow {
    Both(usize, usize),
    LeftOnly(usize),
    RightOnly(usize),
}

fn match_rows(a: &Table, b: &Table, lk: &[usize], rk: &[usize], jt: JoinType) -> Vec<OutRow> {
    let ka = EncodedKeys::encode(a, lk);
    let kb = EncodedKeys::encode(b, rk);
    let mut out = Vec::new();
    let mut right_matched = vec![false; b.num_rows()];
    if b.num_rows() <= a.num_rows() {
        let index = HashIndex::build(b, rk, &kb);
        for i in 0..a.num_rows() {
            let mut any = false;
            if !has_null_key(a, i, lk) {
                for j in index.probe(ka.get(i)) {
                    out.push(OutRow::Both(i, j));
                    right_matched[j] = true;
                    any = true;
                }
            }
            if !any && jt.keeps_left() {
                out.push(OutRow::LeftOnly(i));
            }
        }
    } else {
        let index = HashIndex::build(a, lk, &ka);
        let mut left_matched = vec![false; a.num_rows()];
        for j in 0..b.num_rows() {
            if has_null_key(b, j, rk) {
                continue;
            }
            for i in index.probe(kb.get(j)) {
                out.push(OutRow::Both(i, j));
                left_matched[i] = true;
                right_matched[j] = true;
            }
        }
        if jt.keeps_left() {
            out.extend(
                (0..a.num_rows())
                    .filter(|&i| !left_matched[i])
                    .map(OutRow::LeftOnly),
            );
        }
        out.sort_unstable_by_key(|r| match *r {
            OutRow::Both(i, j) => (i, j),
            OutRow::LeftOnly(i) => (i, 0),
            OutRow::RightOnly(_) => unreachable!(),
        });
    }
    if jt.keeps_right() {
        out.extend(
            (0..b.num_rows())
                .filter(|&j| !right_matched[j])
                .map(OutRow::RightOnly),
        );
    }
    out
}

/// Hash equi-join of `a` and `b`.
pub fn join(a: &Table, b: &Table, spec: &JoinSpec) -> Result<Table> {
    let (lk, rk) = spec.resolve(a.schema(), b.schema())?;
    let schema = spec.output_schema(a.schema(), b.schema())?;
    let rows = match_rows(a, b, &lk, &rk, spec.join_type);

    let mut columns = Vec::with_capacity(schema.len());
    for (c, col) in a.columns().iter().enumerate() {
        // unmatched right rows fill the left key columns from the right keys
        let fill = lk.iter().position(|&k| k == c).map(|p| b.column(rk[p]));
        let mut builder = ColumnBuilder::with_capacity(col.dtype(), rows.len());
        for r in &rows {
            match *r {
                OutRow::Both(i, _) | OutRow::LeftOnly(i) => builder.append_from(col, i),
                OutRow::RightOnly(j) => match fill {
                    Some(src) => builder.append_from(src, j),
                    None => builder.push_null(),
                },
            }
        }
        columns.push(builder.finish());
    }
    for (c, col) in b.columns().iter().enumerate() {
        if rk.contains(&c) {
            continue;
        }
        let mut builder = ColumnBuilder::with_capacity(col.dtype(), rows.len());
        for r in &rows {
            match *r {
                OutRow::Both(_, j) | OutRow::RightOnly(j) => builder.append_from(col, j),
                OutRow::LeftOnly(_) => builder.push_null(),
            }
        }
        columns.push(builder.finish());
    }
    Table::new(schema, columns)
}
