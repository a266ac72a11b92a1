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

mod common;

use hptmt_core::columnar::{
    canonicalize, deserialize_table, encode_row_key, read_table, serialize_table, write_table,
    ColumnArray, DataType, Scalar, Schema, Table,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn table_strategy() -> impl Strategy<Value = Table> {
    (any::<u64>(), 0usize..60).prop_map(|(seed, rows)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = common::random_schema(&mut rng, "c");
        common::random_table(&mut rng, &schema, rows)
    })
}

fn scalar_strategy() -> impl Strategy<Value = Option<Scalar>> {
    prop_oneof![
        Just(None),
        any::<i64>().prop_map(|v| Some(Scalar::Int64(v))),
        any::<f64>().prop_map(|v| Some(Scalar::Float64(v))),
        any::<bool>().prop_map(|v| Some(Scalar::Bool(v))),
        ".{0,6}".prop_map(|v| Some(Scalar::Utf8(v))),
    ]
}

fn one_cell(v: &Option<Scalar>, dtype: DataType) -> Table {
    let schema = Schema::of(&[("v", dtype)]).unwrap();
    Table::new(
        schema,
        vec![ColumnArray::from_scalars(dtype, std::slice::from_ref(v)).unwrap()],
    )
    .unwrap()
}

fn dtype_of(v: &Option<Scalar>) -> DataType {
    match v {
        Some(Scalar::Int64(_)) | None => DataType::Int64,
        Some(Scalar::Float64(_)) => DataType::Float64,
        Some(Scalar::Bool(_)) => DataType::Bool,
        Some(Scalar::Utf8(_)) => DataType::Utf8,
    }
}

fn same_value(a: &Option<Scalar>, b: &Option<Scalar>) -> bool {
    match (a, b) {
        (Some(Scalar::Float64(x)), Some(Scalar::Float64(y))) => {
            (x.is_nan() && y.is_nan()) || (*x == 0.0 && *y == 0.0) || x.to_bits() == y.to_bits()
        }
        _ => a == b,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wire_round_trip(t in table_strategy()) {
        let bytes = serialize_table(&t);
        prop_assert_eq!(deserialize_table(&bytes).unwrap(), t.clone());
        let mut stream = Vec::new();
        write_table(&mut stream, &t).unwrap();
        write_table(&mut stream, &t).unwrap();
        let mut r = &stream[..];
        prop_assert_eq!(read_table(&mut r).unwrap().unwrap(), t.clone());
        prop_assert_eq!(read_table(&mut r).unwrap().unwrap(), t);
        prop_assert!(read_table(&mut r).unwrap().is_none());
    }

    #[test]
    fn truncation_never_panics(t in table_strategy(), cut in 0usize..1000) {
        let bytes = serialize_table(&t);
        let cut = cut % bytes.len();
        prop_assert!(deserialize_table(&bytes[..cut]).is_err());
    }

    #[test]
    fn row_key_is_injective(a in scalar_strategy(), b in scalar_strategy()) {
        let (da, db) = (dtype_of(&a), dtype_of(&b));
        prop_assume!(da == db || a.is_none() || b.is_none());
        let dtype = if a.is_none() { db } else { da };
        let ka = encode_row_key(&one_cell(&a, dtype), 0, &[0]);
        let kb = encode_row_key(&one_cell(&b, dtype), 0, &[0]);
        prop_assert_eq!(ka == kb, same_value(&a, &b));
    }

    #[test]
    fn canonicalize_ignores_row_order(t in table_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..t.num_rows()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = t.take(&perm).unwrap();
        // -0.0/+0.0 and NaN payloads share a key, so compare key sequences.
        let keys = |t: &Table| {
            let all: Vec<usize> = (0..t.num_columns()).collect();
            (0..t.num_rows()).map(|r| encode_row_key(t, r, &all)).collect::<Vec<_>>()
        };
        let c = canonicalize(&t);
        prop_assert_eq!(keys(&canonicalize(&shuffled)), keys(&c));
        prop_assert_eq!(canonicalize(&c), c);
    }
}
