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

#![allow(dead_code)]

use hptmt_core::columnar::{ColumnBuilder, DataType, Field, Schema, Table};
use rand::Rng;

pub const TYPES: [DataType; 4] = [
    DataType::Int64,
    DataType::Float64,
    DataType::Bool,
    DataType::Utf8,
];

/// Random table with small value domains so that duplicates and joins hit.
pub fn random_table<R: Rng>(rng: &mut R, schema: &Schema, rows: usize) -> Table {
    let cols = schema
        .fields()
        .iter()
        .map(|f| {
            let mut b = ColumnBuilder::with_capacity(f.dtype, rows);
            for _ in 0..rows {
                if rng.gen_bool(0.05) {
                    b.push_null();
                    continue;
                }
                match f.dtype {
                    DataType::Int64 => b.push_i64(rng.gen_range(-5..5)),
                    DataType::Float64 => match rng.gen_range(0..50) {
                        0 => b.push_f64(f64::NAN),
                        1 => b.push_f64(-0.0),
                        _ => b.push_f64(rng.gen_range(-4..4) as f64 * 0.5),
                    },
                    DataType::Bool => b.push_bool(rng.gen()),
                    DataType::Utf8 => {
                        let len = rng.gen_range(0..3);
                        let s: String = (0..len)
                            .map(|_| rng.gen_range(b'a'..b'd') as char)
                            .collect();
                        b.push_str(&s)
                    }
                }
            }
            b.finish()
        })
        .collect();
    Table::new(schema.clone(), cols).unwrap()
}

pub fn random_schema<R: Rng>(rng: &mut R, prefix: &str) -> Schema {
    let n = rng.gen_range(1..4);
    Schema::new(
        (0..n)
            .map(|i| Field::new(format!("{prefix}{i}"), TYPES[rng.gen_range(0..4)]))
            .collect(),
    )
    .unwrap()
}

/// Split `t` into `w` contiguous parts of random sizes (some may be empty).
pub fn random_split<R: Rng>(rng: &mut R, t: &Table, w: usize) -> Vec<Table> {
    let mut cuts: Vec<usize> = (0..w - 1)
        .map(|_| rng.gen_range(0..=t.num_rows()))
        .collect();
    cuts.sort();
    cuts.insert(0, 0);
    cuts.push(t.num_rows());
    cuts.windows(2)
        .map(|c| t.slice(c[0], c[1] - c[0]))
        .collect()
}
