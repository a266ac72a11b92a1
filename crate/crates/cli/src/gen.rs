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

//! Deterministic input generators for the verification suites and benchmarks.

use hptmt_core::columnar::{ColumnArray, ColumnBuilder, DataType, Field, Schema, Table};
use hptmt_core::dist::ChunkStream;
use hptmt_core::mds::splitmix64;
use hptmt_core::{Error, Result};
use rand::Rng;

pub const TYPES: [DataType; 4] = [
    DataType::Int64,
    DataType::Float64,
    DataType::Bool,
    DataType::Utf8,
];

/// Shape of generated cell values.
#[derive(Clone, Copy, Debug)]
pub struct CellDist {
    pub null_rate: f64,
    pub nan_rate: f64,
    /// Distinct non-null values per column, roughly.
    pub domain: i64,
}

impl Default for CellDist {
    fn default() -> Self {
        CellDist {
            null_rate: 0.05,
            nan_rate: 0.02,
            domain: 20,
        }
    }
}

pub fn random_schema<R: Rng>(rng: &mut R, prefix: &str, max_cols: usize) -> Schema {
    let n = rng.gen_range(1..=max_cols);
    Schema::new(
        (0..n)
            .map(|i| Field::new(format!("{prefix}{i}"), TYPES[rng.gen_range(0..TYPES.len())]))
            .collect(),
    )
    .expect("generated names are unique")
}

pub fn random_column<R: Rng>(
    rng: &mut R,
    dtype: DataType,
    rows: usize,
    dist: CellDist,
) -> ColumnArray {
    let mut b = ColumnBuilder::with_capacity(dtype, rows);
    for _ in 0..rows {
        if rng.gen_bool(dist.null_rate) {
            b.push_null();
            continue;
        }
        match dtype {
            DataType::Int64 => b.push_i64(rng.gen_range(0..dist.domain.max(1))),
            DataType::Float64 => {
                if rng.gen_bool(dist.nan_rate) {
                    b.push_f64(f64::NAN)
                } else {
                    // Small half-integer domain: exact sums, plenty of ties, signed zeros.
                    let v = (rng.gen_range(0..dist.domain.max(1)) - dist.domain / 2) as f64 * 0.5;
                    b.push_f64(if v == 0.0 && rng.gen_bool(0.5) {
                        -0.0
                    } else {
                        v
                    })
                }
            }
            DataType::Bool => b.push_bool(rng.gen()),
            DataType::Utf8 => {
                let v = rng.gen_range(0..dist.domain.max(1));
                b.push_str(&format!("s{v}"))
            }
        }
    }
    b.finish()
}

pub fn random_table<R: Rng>(rng: &mut R, schema: &Schema, rows: usize, dist: CellDist) -> Table {
    let cols = schema
        .fields()
        .iter()
        .map(|f| random_column(rng, f.dtype, rows, dist))
        .collect();
    Table::new(schema.clone(), cols).expect("columns match schema")
}

/// Cut `table` into `parts` contiguous pieces of random length.
pub fn random_split<R: Rng>(rng: &mut R, table: &Table, parts: usize) -> Vec<Table> {
    let mut cuts: Vec<usize> = (0..parts.saturating_sub(1))
        .map(|_| rng.gen_range(0..=table.num_rows()))
        .collect();
    cuts.sort_unstable();
    cuts.insert(0, 0);
    cuts.push(table.num_rows());
    cuts.windows(2)
        .map(|c| table.slice(c[0], c[1] - c[0]))
        .collect()
}

fn try_vec<T>(len: usize) -> Result<Vec<T>> {
    let mut v = Vec::new();
    v.try_reserve_exact(len)
        .map_err(|e| Error::InvalidArgument(format!("cannot allocate {len} rows: {e}")))?;
    Ok(v)
}

/// Benchmark input: rows `[first, first + rows)` of a global two-column
/// Int64 table. Each cell depends only on `(seed, table_id, global row)`, so
/// any partitioning of the same global rows sees identical data. Keys are
/// uniform in `[0, key_range)`.
pub fn bench_table(
    seed: u64,
    table_id: u64,
    value_name: &str,
    first: u64,
    rows: usize,
    key_range: u64,
) -> Result<Table> {
    let key_seed = splitmix64(seed, 2 * table_id);
    let val_seed = splitmix64(seed, 2 * table_id + 1);
    let mut keys = try_vec(rows)?;
    let mut vals = try_vec(rows)?;
    for g in first..first + rows as u64 {
        keys.push((splitmix64(key_seed, g) % key_range.max(1)) as i64);
        vals.push(splitmix64(val_seed, g) as i64);
    }
    let schema = Schema::of(&[("k", DataType::Int64), (value_name, DataType::Int64)])?;
    Table::new(
        schema,
        vec![ColumnArray::from_i64(&keys), ColumnArray::from_i64(&vals)],
    )
}

/// Lazily generated stream of `(k, v)` Int64 rows, `chunk_rows` per chunk;
/// `v` is the global row number and `k` a pseudo-random key.
#[derive(Debug)]
pub struct KeyStream {
    schema: Schema,
    seed: u64,
    next: u64,
    end: u64,
    chunk_rows: usize,
    key_range: u64,
}

impl KeyStream {
    pub fn new(seed: u64, rows: u64, chunk_rows: usize, key_range: u64) -> Self {
        KeyStream {
            schema: Schema::of(&[("k", DataType::Int64), ("v", DataType::Int64)])
                .expect("static schema"),
            seed,
            next: 0,
            end: rows,
            chunk_rows: chunk_rows.max(1),
            key_range: key_range.max(1),
        }
    }

    /// Bytes per generated row.
    pub const ROW_BYTES: usize = 16;
}

impl ChunkStream for KeyStream {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_chunk(&mut self) -> Result<Option<Table>> {
        if self.next >= self.end {
            return Ok(None);
        }
        let stop = (self.next + self.chunk_rows as u64).min(self.end);
        let v: Vec<i64> = (self.next as i64..stop as i64).collect();
        let k: Vec<i64> = (self.next..stop)
            .map(|g| (splitmix64(self.seed, g) % self.key_range) as i64)
            .collect();
        self.next = stop;
        Ok(Some(Table::new(
            self.schema.clone(),
            vec![ColumnArray::from_i64(&k), ColumnArray::from_i64(&v)],
        )?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hptmt_core::columnar::concat_tables;

    #[test]
    fn bench_rows_do_not_depend_on_partitioning() {
        let whole = bench_table(7, 0, "v", 0, 100, 200).unwrap();
        let parts = [
            bench_table(7, 0, "v", 0, 30, 200).unwrap(),
            bench_table(7, 0, "v", 30, 70, 200).unwrap(),
        ];
        assert_eq!(concat_tables(&parts).unwrap(), whole);
        assert_ne!(bench_table(7, 1, "v", 0, 100, 200).unwrap(), whole);
    }

    #[test]
    fn key_stream_sizes() {
        let mut s = KeyStream::new(1, 10, 4, 5);
        let sizes: Vec<usize> = std::iter::from_fn(|| s.next_chunk().unwrap())
            .map(|t| t.num_rows())
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }
}
