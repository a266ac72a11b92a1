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

use std::collections::HashMap;

use hptmt_core::columnar::{
    concat_tables, concat_with_schema, encode_row_key, same_rows, ColumnArray, DataType, Schema,
    Table,
};
use hptmt_core::comm::launch_inproc;
use hptmt_core::dist::{
    chunked_shuffle, dist_aggregate, dist_difference, dist_groupby_aggregate, dist_intersect,
    dist_join, dist_sort, dist_union, shuffle, ChunkStream, TableStream, WorkerContext,
};
use hptmt_core::relational::{
    difference, groupby_aggregate, intersect, join, sort, union, AggFunc, AggSpec, Aggregation,
    JoinSpec, JoinType, RowComparator, SortSpec,
};
use hptmt_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run<T: Send>(
    parts: &[Table],
    body: impl Fn(&mut WorkerContext, &Table) -> Result<T> + Sync,
) -> Vec<T> {
    launch_inproc(parts.len(), |comm| {
        let mut ctx = WorkerContext::new(comm);
        let part = parts[ctx.rank()].clone();
        body(&mut ctx, &part)
    })
    .unwrap()
}

fn kv_schema() -> Schema {
    Schema::of(&[
        ("k", DataType::Int64),
        ("s", DataType::Utf8),
        ("v", DataType::Float64),
    ])
    .unwrap()
}

#[test]
fn shuffle_conserves_and_co_locates() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..30 {
        let w = [1, 2, 3, 4, 8][case % 5];
        let rows = rng.gen_range(0..(if case % 3 == 0 { 5 } else { 300 }));
        let t = common::random_table(&mut rng, &kv_schema(), rows);
        let parts = common::random_split(&mut rng, &t, w);
        let out = run(&parts, |ctx, p| shuffle(ctx, p, &["k", "s"]));
        assert!(same_rows(&concat_tables(&out).unwrap(), &t));
        let mut owner: HashMap<Vec<u8>, usize> = HashMap::new();
        for (r, part) in out.iter().enumerate() {
            for row in 0..part.num_rows() {
                let key = encode_row_key(part, row, &[0, 1]).0;
                assert_eq!(*owner.entry(key).or_insert(r), r);
            }
        }
    }
}

#[test]
fn set_operators_equal_local() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..12 {
        let w = [1, 2, 4][case % 3];
        let schema = Schema::of(&[("a", DataType::Int64), ("b", DataType::Bool)]).unwrap();
        let a = {
            let n = rng.gen_range(0..80);
            common::random_table(&mut rng, &schema, n)
        };
        let b = {
            let n = rng.gen_range(0..80);
            common::random_table(&mut rng, &schema, n)
        };
        let pa = common::random_split(&mut rng, &a, w);
        let pb = common::random_split(&mut rng, &b, w);
        let pb = &pb;
        let got = run(&pa, |ctx, p| {
            let r = ctx.rank();
            Ok([
                dist_union(ctx, p, &pb[r])?,
                dist_difference(ctx, p, &pb[r])?,
                dist_intersect(ctx, p, &pb[r])?,
            ])
        });
        let expected = [
            union(&a, &b).unwrap(),
            difference(&a, &b).unwrap(),
            intersect(&a, &b).unwrap(),
        ];
        for (i, e) in expected.iter().enumerate() {
            let g: Vec<Table> = got.iter().map(|x| x[i].clone()).collect();
            assert!(
                same_rows(&concat_tables(&g).unwrap(), e),
                "case {case} op {i}"
            );
        }
    }
}

#[test]
fn joins_equal_local() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ls = Schema::of(&[("k", DataType::Int64), ("x", DataType::Utf8)]).unwrap();
    let rs = Schema::of(&[("k", DataType::Int64), ("y", DataType::Float64)]).unwrap();
    for case in 0..12 {
        let w = [1, 2, 4][case % 3];
        let a = {
            let n = rng.gen_range(0..60);
            common::random_table(&mut rng, &ls, n)
        };
        let b = {
            let n = rng.gen_range(0..60);
            common::random_table(&mut rng, &rs, n)
        };
        let pa = common::random_split(&mut rng, &a, w);
        let pb = common::random_split(&mut rng, &b, w);
        for jt in JoinType::ALL {
            let spec = JoinSpec::new(jt, &["k"], &["k"]);
            let got = run(&pa, |ctx, p| dist_join(ctx, p, &pb[ctx.rank()], &spec));
            let expected = join(&a, &b, &spec).unwrap();
            assert!(
                same_rows(&concat_tables(&got).unwrap(), &expected),
                "case {case} {jt:?}"
            );
        }
    }
}

#[test]
fn grouped_aggregation_equals_local() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let schema = Schema::of(&[("k", DataType::Utf8), ("v", DataType::Int64)]).unwrap();
    for case in 0..12 {
        let w = [1, 2, 4][case % 3];
        let t = {
            let n = rng.gen_range(0..200);
            common::random_table(&mut rng, &schema, n)
        };
        let parts = common::random_split(&mut rng, &t, w);
        let spec = AggSpec::new(
            &["k"],
            AggFunc::ALL
                .iter()
                .map(|&f| Aggregation::new("v", f, &format!("{f:?}")))
                .collect(),
        );
        let got = run(&parts, |ctx, p| dist_groupby_aggregate(ctx, p, &spec));
        assert!(same_rows(
            &concat_tables(&got).unwrap(),
            &groupby_aggregate(&t, &spec).unwrap()
        ));
    }
}

#[test]
fn sort_is_globally_ordered_and_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..12 {
        let w = [2, 4, 8][case % 3];
        let t = {
            let n = rng.gen_range(0..400);
            common::random_table(&mut rng, &kv_schema(), n)
        };
        let parts = common::random_split(&mut rng, &t, w);
        let spec = SortSpec::asc(&["v"]).then("s", hptmt_core::relational::Direction::Desc);
        let got = run(&parts, |ctx, p| dist_sort(ctx, p, &spec));
        let cmp = RowComparator::new(t.schema(), &spec).unwrap();
        let nonempty: Vec<&Table> = got.iter().filter(|p| p.num_rows() > 0).collect();
        for pair in nonempty.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            assert!(cmp.compare(a, a.num_rows() - 1, b, 0).is_le());
        }
        assert_eq!(concat_tables(&got).unwrap(), sort(&t, &spec).unwrap());
    }
}

#[test]
fn chunked_shuffle_sees_w_eos_and_matches_eager() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for w in [2, 4, 8] {
        let t = common::random_table(&mut rng, &kv_schema(), 500);
        let parts = common::random_split(&mut rng, &t, w);
        let got = run(&parts, |ctx, p| {
            let eager = shuffle(ctx, p, &["k"])?;
            let mut s = chunked_shuffle(ctx, Box::new(TableStream::from_table(p, 7)), &["k"])?;
            let mut chunks = Vec::new();
            while let Some(c) = s.next_chunk()? {
                chunks.push(c);
            }
            assert_eq!(s.eos_received(), w);
            assert!(s.next_chunk()?.is_none());
            Ok(same_rows(&eager, &concat_with_schema(p.schema(), &chunks)?))
        });
        assert!(got.into_iter().all(|ok| ok));
    }
}

#[test]
fn aggregate_sends_no_table_data() {
    let n = 100_000;
    let col: Vec<f64> = (0..n).map(|i| i as f64 * 0.25).collect();
    let t = Table::new(
        Schema::of(&[("v", DataType::Float64)]).unwrap(),
        vec![ColumnArray::from_f64(&col)],
    )
    .unwrap();
    let parts: Vec<Table> = (0..4).map(|r| t.slice(r * n / 4, n / 4)).collect();
    let aggs: Vec<Aggregation> = AggFunc::ALL
        .iter()
        .map(|&f| Aggregation::new("v", f, &format!("{f:?}")))
        .collect();
    let got = run(&parts, |ctx, p| {
        let before = ctx.stats();
        let out = dist_aggregate(ctx, p, &aggs)?;
        Ok((out, (ctx.stats() - before).bytes_sent))
    });
    let sent: u64 = got.iter().map(|g| g.1).sum();
    assert!(sent < 1024 * 4, "{sent} bytes");
    assert!(got.windows(2).all(|g| g[0].0 == g[1].0));
}
