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

//! Stable multi-key sort under the engine's total order.
//!
//! Within a key: non-null, non-NaN values in natural order (reversed for
//! `Desc`), then NaN, then null. NaN and null placement does not depend on
//! the direction, so nulls are always last.

use std::cmp::Ordering;

use crate::collectives::total_cmp_f64;
use crate::columnar::{ColumnArray, DataType, Table};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortKey {
    pub column: String,
    pub direction: Direction,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortSpec {
    pub keys: Vec<SortKey>,
}

impl SortSpec {
    pub fn asc(columns: &[&str]) -> Self {
        SortSpec {
            keys: columns
                .iter()
                .map(|c| SortKey {
                    column: c.to_string(),
                    direction: Direction::Asc,
                })
                .collect(),
        }
    }

    pub fn then(mut self, column: &str, direction: Direction) -> Self {
        self.keys.push(SortKey {
            column: column.to_string(),
            direction,
        });
        self
    }
}

/// 0 for ordinary values, 1 for NaN, 2 for null.
#[inline]
fn class(col: &ColumnArray, row: usize) -> u8 {
    if !col.is_valid(row) {
        2
    } else if col.dtype() == DataType::Float64 && col.f64_at(row).is_nan() {
        1
    } else {
        0
    }
}

/// Compare two cells of same-typed columns under the total order, ascending.
#[inline]
pub fn compare_values(a: &ColumnArray, i: usize, b: &ColumnArray, j: usize) -> Ordering {
    let (ca, cb) = (class(a, i), class(b, j));
    if ca != 0 || cb != 0 {
        return ca.cmp(&cb);
    }
    compare_present(a, i, b, j)
}

#[inline]
fn compare_present(a: &ColumnArray, i: usize, b: &ColumnArray, j: usize) -> Ordering {
    match a.dtype() {
        DataType::Int64 => a.i64_at(i).cmp(&b.i64_at(j)),
        DataType::Float64 => total_cmp_f64(a.f64_at(i), b.f64_at(j)),
        DataType::Bool => a.bool_at(i).cmp(&b.bool_at(j)),
        DataType::Utf8 => a.bytes_at(i).cmp(b.bytes_at(j)),
    }
}

/// Resolved sort keys for tables of one schema.
#[derive(Clone, Debug)]
pub struct RowComparator {
    keys: Vec<(usize, Direction)>,
}

impl RowComparator {
    pub fn new(schema: &crate::columnar::Schema, spec: &SortSpec) -> Result<Self> {
        if spec.keys.is_empty() {
            return Err(Error::InvalidArgument("sort needs at least one key".into()));
        }
        let keys = spec
            .keys
            .iter()
            .map(|k| Ok((schema.index_of(&k.column)?, k.direction)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RowComparator { keys })
    }

    pub fn key_columns(&self) -> Vec<usize> {
        self.keys.iter().map(|k| k.0).collect()
    }

    /// Compare row `i` of `a` with row `j` of `b`.
    #[inline]
    pub fn compare(&self, a: &Table, i: usize, b: &Table, j: usize) -> Ordering {
        self.compare_with(a, i, self, b, j)
    }

    /// Compare rows of tables with different layouts; `other` resolves the
    /// same sort spec against `b`'s schema.
    #[inline]
    pub fn compare_with(
        &self,
        a: &Table,
        i: usize,
        other: &RowComparator,
        b: &Table,
        j: usize,
    ) -> Ordering {
        for (&(c, dir), &(d, _)) in self.keys.iter().zip(&other.keys) {
            let (ca, cb) = (a.column(c), b.column(d));
            let (xa, xb) = (class(ca, i), class(cb, j));
            let ord = if xa != 0 || xb != 0 {
                xa.cmp(&xb)
            } else {
                let o = compare_present(ca, i, cb, j);
                match dir {
                    Direction::Asc => o,
                    Direction::Desc => o.reverse(),
                }
            };
            if ord != Ordering::Equal {
                return ord;
            }
        }
        Ordering::Equal
    }

    /// Stable sorted permutation of `table`'s rows.
    pub fn sorted_indices(&self, table: &Table) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..table.num_rows()).collect();
        idx.sort_by(|&x, &y| self.compare(table, x, table, y));
        idx
    }
}

/// Stable sort; ties keep their input order.
pub fn sort(table: &Table, spec: &SortSpec) -> Result<Table> {
    let cmp = RowComparator::new(table.schema(), spec)?;
    Ok(table.take_unchecked(&cmp.sorted_indices(table)))
}
