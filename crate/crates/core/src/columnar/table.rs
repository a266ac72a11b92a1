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

//! Schemas and tables.

use std::collections::HashSet;
use std::fmt;

use super::array::{ColumnArray, ColumnBuilder, DataType, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Field {
    pub name: String,
    pub dtype: DataType,
}

impl Field {
    pub fn new(name: impl Into<String>, dtype: DataType) -> Self {
        Field {
            name: name.into(),
            dtype,
        }
    }
}

/// Ordered list of uniquely named, typed fields.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Schema {
    fields: Vec<Field>,
}

impl Schema {
    pub fn new(fields: Vec<Field>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &fields {
            if f.name.is_empty() {
                return Err(Error::SchemaMismatch("empty field name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::SchemaMismatch(format!(
                    "duplicate field name {:?}",
                    f.name
                )));
            }
        }
        Ok(Schema { fields })
    }

    /// Convenience constructor from `(name, dtype)` pairs.
    pub fn of(fields: &[(&str, DataType)]) -> Result<Self> {
        Self::new(fields.iter().map(|(n, t)| Field::new(*n, *t)).collect())
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field(&self, i: usize) -> &Field {
        &self.fields[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.fields
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.fields.iter().any(|f| f.name == name)
    }

    /// 64-bit FNV-1a digest of names and type tags, used to detect schema
    /// disagreement between ranks.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::hash::Fnv1a::new();
        for f in &self.fields {
            h.write(&(f.name.len() as u32).to_le_bytes());
            h.write(f.name.as_bytes());
            h.write(&[f.dtype.tag()]);
        }
        h.finish()
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .fields
            .iter()
            .map(|x| format!("{}:{}", x.name, x.dtype))
            .collect();
        f.write_str(&parts.join(","))
    }
}

/// A schema plus equal-length columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    schema: Schema,
    columns: Vec<ColumnArray>,
    num_rows: usize,
}

impl Table {
    pub fn new(schema: Schema, columns: Vec<ColumnArray>) -> Result<Self> {
        if columns.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} columns for {} fields",
                columns.len(),
                schema.len()
            )));
        }
        let num_rows = columns.first().map_or(0, ColumnArray::len);
        for (i, c) in columns.iter().enumerate() {
            if c.dtype() != schema.field(i).dtype {
                return Err(Error::TypeMismatch {
                    expected: schema.field(i).dtype,
                    found: c.dtype().to_string(),
                });
            }
            if c.len() != num_rows {
                return Err(Error::SchemaMismatch(format!(
                    "column {:?} has {} rows, expected {num_rows}",
                    schema.field(i).name,
                    c.len()
                )));
            }
        }
        Ok(Table {
            schema,
            columns,
            num_rows,
        })
    }

    /// A zero-row table.
    pub fn empty(schema: Schema) -> Self {
        let columns = schema
            .fields()
            .iter()
            .map(|f| ColumnBuilder::new(f.dtype).finish())
            .collect();
        Table {
            schema,
            columns,
            num_rows: 0,
        }
    }

    /// Build from rows of optional scalars.
    pub fn from_rows(schema: Schema, rows: &[Vec<Option<Scalar>>]) -> Result<Self> {
        let mut builders: Vec<ColumnBuilder> = schema
            .fields()
            .iter()
            .map(|f| ColumnBuilder::with_capacity(f.dtype, rows.len()))
            .collect();
        for row in rows {
            if row.len() != builders.len() {
                return Err(Error::SchemaMismatch(format!(
                    "row has {} values for {} fields",
                    row.len(),
                    builders.len()
                )));
            }
            for (b, v) in builders.iter_mut().zip(row) {
                b.push(v.as_ref())?;
            }
        }
        Table::new(
            schema,
            builders.into_iter().map(ColumnBuilder::finish).collect(),
        )
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn columns(&self) -> &[ColumnArray] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &ColumnArray {
        &self.columns[i]
    }

    pub fn column_by_name(&self, name: &str) -> Result<&ColumnArray> {
        Ok(&self.columns[self.schema.index_of(name)?])
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.num_rows == 0
    }

    pub fn into_parts(self) -> (Schema, Vec<ColumnArray>) {
        (self.schema, self.columns)
    }

    pub fn row(&self, i: usize) -> Vec<Option<Scalar>> {
        self.columns.iter().map(|c| c.scalar_at(i)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<Option<Scalar>>> {
        (0..self.num_rows).map(|i| self.row(i)).collect()
    }

    /// Sum of column buffer sizes.
    pub fn byte_size(&self) -> usize {
        self.columns.iter().map(ColumnArray::byte_size).sum()
    }

    /// Gather rows by position; indices may repeat.
    pub fn take(&self, indices: &[usize]) -> Result<Table> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.num_rows) {
            return Err(Error::IndexOutOfBounds {
                index: bad,
                len: self.num_rows,
            });
        }
        Ok(self.take_unchecked(indices))
    }

    pub(crate) fn take_unchecked(&self, indices: &[usize]) -> Table {
        Table {
            schema: self.schema.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| c.take_unchecked(indices))
                .collect(),
            num_rows: indices.len(),
        }
    }

    pub fn slice(&self, offset: usize, len: usize) -> Table {
        Table {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.slice(offset, len)).collect(),
            num_rows: len,
        }
    }

    /// Keep the columns at `indices`, in that order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Table> {
        let mut fields = Vec::with_capacity(indices.len());
        let mut columns = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.num_columns() {
                return Err(Error::InvalidArgument(format!(
                    "column index {i} out of range"
                )));
            }
            fields.push(self.schema.field(i).clone());
            columns.push(self.columns[i].clone());
        }
        Ok(Table {
            schema: Schema::new(fields)?,
            columns,
            num_rows: self.num_rows,
        })
    }

    /// Replace the schema's field names, keeping types.
    pub fn with_names(self, names: &[String]) -> Result<Table> {
        if names.len() != self.num_columns() {
            return Err(Error::SchemaMismatch("rename arity".into()));
        }
        let fields = self
            .schema
            .fields()
            .iter()
            .zip(names)
            .map(|(f, n)| Field::new(n.clone(), f.dtype))
            .collect();
        Table::new(Schema::new(fields)?, self.columns)
    }

    /// Iterator-friendly chunking by row count.
    pub fn chunks(&self, rows_per_chunk: usize) -> Vec<Table> {
        assert!(rows_per_chunk > 0);
        (0..self.num_rows)
            .step_by(rows_per_chunk)
            .map(|o| self.slice(o, rows_per_chunk.min(self.num_rows - o)))
            .collect()
    }
}

/// Row-wise concatenation of schema-equal tables, in input order.
pub fn concat_tables(tables: &[Table]) -> Result<Table> {
    let Some(first) = tables.first() else {
        return Err(Error::InvalidArgument("concat of zero tables".into()));
    };
    concat_with_schema(first.schema(), tables)
}

/// Like [`concat_tables`], but well defined for an empty list.
pub fn concat_with_schema(schema: &Schema, tables: &[Table]) -> Result<Table> {
    for t in tables {
        if t.schema() != schema {
            return Err(Error::SchemaMismatch(format!(
                "{} vs {}",
                t.schema(),
                schema
            )));
        }
    }
    if tables.len() == 1 {
        return Ok(tables[0].clone());
    }
    let total: usize = tables.iter().map(Table::num_rows).sum();
    let columns = schema
        .fields()
        .iter()
        .enumerate()
        .map(|(ci, f)| {
            let mut b = ColumnBuilder::with_capacity(f.dtype, total);
            for t in tables {
                b.extend_from(t.column(ci), 0, t.num_rows());
            }
            b.finish()
        })
        .collect();
    Ok(Table {
        schema: schema.clone(),
        columns,
        num_rows: total,
    })
}

/// Appends individual rows drawn from arbitrary source tables of one schema.
pub struct TableBuilder {
    schema: Schema,
    builders: Vec<ColumnBuilder>,
}

impl TableBuilder {
    pub fn new(schema: &Schema, capacity: usize) -> Self {
        TableBuilder {
            schema: schema.clone(),
            builders: schema
                .fields()
                .iter()
                .map(|f| ColumnBuilder::with_capacity(f.dtype, capacity))
                .collect(),
        }
    }

    pub fn append_row(&mut self, src: &Table, row: usize) {
        for (b, c) in self.builders.iter_mut().zip(src.columns()) {
            b.append_from(c, row);
        }
    }

    pub fn len(&self) -> usize {
        self.builders.first().map_or(0, ColumnBuilder::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_size(&self) -> usize {
        self.builders.iter().map(ColumnBuilder::byte_size).sum()
    }

    pub fn finish(self) -> Table {
        let columns: Vec<ColumnArray> = self
            .builders
            .into_iter()
            .map(ColumnBuilder::finish)
            .collect();
        let num_rows = columns.first().map_or(0, ColumnArray::len);
        Table {
            schema: self.schema,
            columns,
            num_rows,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(name: &str, v: &[i64]) -> Table {
        Table::new(
            Schema::of(&[(name, DataType::Int64)]).unwrap(),
            vec![ColumnArray::from_i64(v)],
        )
        .unwrap()
    }

    #[test]
    fn schema_rejects_duplicates_and_empty_names() {
        assert!(Schema::of(&[("a", DataType::Int64), ("a", DataType::Bool)]).is_err());
        assert!(Schema::of(&[("", DataType::Int64)]).is_err());
    }

    #[test]
    fn table_rejects_ragged_columns() {
        let s = Schema::of(&[("a", DataType::Int64), ("b", DataType::Int64)]).unwrap();
        let r = Table::new(
            s,
            vec![ColumnArray::from_i64(&[1]), ColumnArray::from_i64(&[1, 2])],
        );
        assert!(r.is_err());
    }

    #[test]
    fn concat_lengths_add() {
        let t = concat_tables(&[ints("x", &[1, 2]), ints("x", &[3, 4, 5])]).unwrap();
        assert_eq!(t.num_rows(), 5);
        assert_eq!(t.column(0).i64_at(4), 5);
    }

    #[test]
    fn concat_single_is_identity() {
        let t = ints("x", &[1, 2]);
        assert_eq!(concat_tables(std::slice::from_ref(&t)).unwrap(), t);
    }

    #[test]
    fn concat_empty_tables_keeps_schema() {
        let t = concat_tables(&[ints("x", &[]), ints("x", &[])]).unwrap();
        assert_eq!(t.num_rows(), 0);
        assert_eq!(t.schema(), ints("x", &[]).schema());
    }

    #[test]
    fn concat_schema_mismatch() {
        assert!(concat_tables(&[ints("x", &[1]), ints("y", &[1])]).is_err());
    }

    #[test]
    fn take_permutes_and_repeats() {
        let t = ints("x", &[10, 20, 30]);
        let p = t.take(&[2, 0]).unwrap();
        assert_eq!((p.column(0).i64_at(0), p.column(0).i64_at(1)), (30, 10));
        assert_eq!(t.take(&[]).unwrap().num_rows(), 0);
        let r = ints("x", &[1, 2]).take(&[1, 1, 1]).unwrap();
        assert_eq!(r, ints("x", &[2, 2, 2]));
        assert!(matches!(
            t.take(&[3]),
            Err(Error::IndexOutOfBounds { index: 3, len: 3 })
        ));
    }
}
