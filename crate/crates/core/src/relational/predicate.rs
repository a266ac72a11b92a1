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

//! Row selection by conjunctive comparison predicates, and column projection.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::columnar::{ColumnArray, DataType, Scalar, Table};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparison {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparison {
    /// Apply to an IEEE-style partial ordering; unordered (NaN) is false
    /// except for `Ne`.
    pub fn holds(self, ord: Option<Ordering>) -> bool {
        match ord {
            None => self == Comparison::Ne,
            Some(o) => match self {
                Comparison::Eq => o == Ordering::Equal,
                Comparison::Ne => o != Ordering::Equal,
                Comparison::Lt => o == Ordering::Less,
                Comparison::Le => o != Ordering::Greater,
                Comparison::Gt => o == Ordering::Greater,
                Comparison::Ge => o != Ordering::Less,
            },
        }
    }
}

/// `column <cmp> literal`.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub column: String,
    pub cmp: Comparison,
    pub literal: Scalar,
}

/// Conjunction of atoms. An empty predicate accepts every row; a comparison
/// against a null cell is false.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Predicate {
    pub atoms: Vec<Atom>,
}

impl Predicate {
    pub fn atom(column: impl Into<String>, cmp: Comparison, literal: impl Into<Scalar>) -> Self {
        Predicate {
            atoms: vec![Atom {
                column: column.into(),
                cmp,
                literal: literal.into(),
            }],
        }
    }

    pub fn and(mut self, other: Predicate) -> Self {
        self.atoms.extend(other.atoms);
        self
    }
}

fn comparable(col: DataType, lit: DataType) -> bool {
    col == lit || (col.is_numeric() && lit.is_numeric())
}

/// Compare one cell with a literal. `None` for null cells and NaN.
pub(crate) fn compare_cell(col: &ColumnArray, row: usize, lit: &Scalar) -> Option<Ordering> {
    if !col.is_valid(row) {
        return None;
    }
    match (col.dtype(), lit) {
        (DataType::Int64, Scalar::Int64(l)) => Some(col.i64_at(row).cmp(l)),
        (DataType::Int64, Scalar::Float64(l)) => (col.i64_at(row) as f64).partial_cmp(l),
        (DataType::Float64, Scalar::Float64(l)) => col.f64_at(row).partial_cmp(l),
        (DataType::Float64, Scalar::Int64(l)) => col.f64_at(row).partial_cmp(&(*l as f64)),
        (DataType::Bool, Scalar::Bool(l)) => Some(col.bool_at(row).cmp(l)),
        (DataType::Utf8, Scalar::Utf8(l)) => Some(col.bytes_at(row).cmp(l.as_bytes())),
        _ => None,
    }
}

/// Rows satisfying `predicate`, input order preserved.
pub fn select(table: &Table, predicate: &Predicate) -> Result<Table> {
    let mut bound = Vec::with_capacity(predicate.atoms.len());
    for a in &predicate.atoms {
        let idx = table.schema().index_of(&a.column)?;
        let dtype = table.schema().field(idx).dtype;
        if !comparable(dtype, a.literal.dtype()) {
            return Err(Error::TypeMismatch {
                expected: dtype,
                found: a.literal.dtype().to_string(),
            });
        }
        bound.push((table.column(idx), a));
    }
    let keep: Vec<usize> = (0..table.num_rows())
        .filter(|&r| {
            bound
                .iter()
                .all(|(col, a)| col.is_valid(r) && a.cmp.holds(compare_cell(col, r, &a.literal)))
        })
        .collect();
    Ok(table.take_unchecked(&keep))
}

/// Restrict and reorder columns by name.
pub fn project(table: &Table, columns: &[&str]) -> Result<Table> {
    let mut seen = HashSet::new();
    let mut idx = Vec::with_capacity(columns.len());
    for &c in columns {
        if !seen.insert(c) {
            return Err(Error::InvalidArgument(format!(
                "column {c:?} requested twice"
            )));
        }
        idx.push(table.schema().index_of(c)?);
    }
    table.select_columns(&idx)
}
