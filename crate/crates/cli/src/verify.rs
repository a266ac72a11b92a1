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

//! Verification suites. Each suite runs SPMD on every rank, checks engine
//! output against the oracles in [`crate::oracle`] or against invariants,
//! and the ranks then agree on one outcome per suite.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hptmt_core::collectives::{
    allgather, allgather_bytes, allreduce, alltoall, alltoall_bytes, broadcast, gather,
    gather_bytes, reduce, scatter, NumericArray, ReduceOp,
};
use hptmt_core::columnar::{
    canonical_f64_bits, canonicalize, concat_with_schema, deserialize_table, encode_row_key,
    encoded_len, serialize_table, ColumnArray, DataType, Field, Scalar, Schema, Table,
};
use hptmt_core::comm::{bootstrap, TransportConfig};
use hptmt_core::dist::{
    chunked_shuffle, dist_aggregate, dist_difference, dist_groupby_aggregate, dist_intersect,
    dist_join, dist_sort, dist_union, external_sort, shuffle, shuffle_by_indices, ChunkStream,
    PartitionMap, TableStream, WorkerContext, MERGE_BLOCK_BYTES,
};
use hptmt_core::hash::Fnv1a;
use hptmt_core::mds::{row_range, run_mds, splitmix64};
use hptmt_core::relational::{
    aggregate, cartesian_product, difference, distinct, groupby_aggregate, intersect, join,
    project, select, sort, union, AggFunc, AggSpec, Aggregation, Comparison, Direction, JoinSpec,
    JoinType, Predicate, SortKey, SortSpec,
};
use hptmt_core::{Error, Result};

use crate::config::RunConfig;
use crate::gen::{
    random_column, random_schema, random_split, random_table, CellDist, KeyStream, TYPES,
};
use crate::oracle::{self, Row};
use crate::CliResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Collectives,
    Relational,
    DistOps,
    Shuffle,
    AggregateComm,
    ExternalSort,
    ChunkedShuffle,
    Mds,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Collectives,
        Suite::Relational,
        Suite::DistOps,
        Suite::Shuffle,
        Suite::AggregateComm,
        Suite::ExternalSort,
        Suite::ChunkedShuffle,
        Suite::Mds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Collectives => "collectives",
            Suite::Relational => "relational",
            Suite::DistOps => "dist_ops",
            Suite::Shuffle => "shuffle",
            Suite::AggregateComm => "aggregate_comm",
            Suite::ExternalSort => "external_sort",
            Suite::ChunkedShuffle => "chunked_shuffle",
            Suite::Mds => "mds",
        }
    }

    pub fn from_name(name: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// Sizes of the generated workloads.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random cases per local operator.
    pub relational_cases: usize,
    pub dist_instances: usize,
    pub dist_max_rows: usize,
    pub shuffle_instances: usize,
    /// Global rows of the column used for the communication bound.
    pub aggregate_rows: usize,
    /// External sort input and memory budget, per rank.
    pub sort_input_bytes: usize,
    pub sort_budget: usize,
    /// Chunks per rank in the long chunked-shuffle stream.
    pub stream_chunks: usize,
    pub mds_points: usize,
    pub mds_iters: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            relational_cases: 500,
            dist_instances: 100,
            dist_max_rows: 100_000,
            shuffle_instances: 200,
            aggregate_rows: 1_000_000,
            sort_input_bytes: 100 << 20,
            sort_budget: 16 << 20,
            stream_chunks: 1000,
            mds_points: 50,
            mds_iters: 300,
        }
    }
}

impl VerifyOptions {
    /// Defaults with the external sort workload split across `world_size`
    /// ranks, keeping the input-to-budget ratio.
    pub fn for_world(world_size: usize) -> Self {
        let d = VerifyOptions::default();
        let w = world_size.max(1);
        VerifyOptions {
            sort_input_bytes: d.sort_input_bytes / w,
            sort_budget: d.sort_budget / w,
            ..d
        }
    }
}

/// Agreed result of one suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub passed: bool,
    /// Checks performed, summed over ranks.
    pub cases: u64,
    /// Hash of the checked outputs; equal runs give equal digests.
    pub digest: u64,
    /// First failure, if any.
    pub detail: Option<String>,
    pub elapsed: Duration,
}

impl SuiteOutcome {
    /// The outcome without timing.
    pub fn logical_line(&self) -> String {
        format!(
            "{:<16} {:<6} {:>8} {:016x}",
            self.suite.name(),
            if self.passed { "PASS" } else { "FAIL" },
            self.cases,
            self.digest
        )
    }
}

pub fn render(outcomes: &[SuiteOutcome]) -> String {
    let mut s = format!(
        "{:<16} {:<6} {:>8} {:<16} {:>9}\n",
        "suite", "result", "cases", "digest", "time"
    );
    for o in outcomes {
        let _ = writeln!(s, "{} {:>8.2}s", o.logical_line(), o.elapsed.as_secs_f64());
        if let Some(d) = &o.detail {
            let _ = writeln!(s, "  {d}");
        }
    }
    s
}

struct Tally {
    cases: u64,
    digest: Fnv1a,
    failure: Option<String>,
}

impl Tally {
    fn new() -> Self {
        Tally {
            cases: 0,
            digest: Fnv1a::new(),
            failure: None,
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok && self.failure.is_none() {
            self.failure = Some(what());
        }
    }

    fn absorb(&mut self, bytes: &[u8]) {
        self.digest.write(bytes);
    }

    fn absorb_table(&mut self, t: &Table) {
        self.digest.write(&serialize_table(t));
    }
}

fn agree(
    ctx: &mut WorkerContext,
    suite: Suite,
    tally: Tally,
    elapsed: Duration,
) -> Result<SuiteOutcome> {
    let mut msg = vec![tally.failure.is_none() as u8];
    msg.extend_from_slice(&tally.cases.to_le_bytes());
    msg.extend_from_slice(&tally.digest.finish().to_le_bytes());
    msg.extend_from_slice(tally.failure.unwrap_or_default().as_bytes());
    let all = allgather_bytes(ctx.comm_mut(), msg)?;
    let mut out = SuiteOutcome {
        suite,
        passed: true,
        cases: 0,
        digest: 0,
        detail: None,
        elapsed,
    };
    let mut h = Fnv1a::new();
    for (rank, m) in all.iter().enumerate() {
        if m.len() < 17 {
            return Err(Error::InvalidArgument(format!(
                "malformed suite report from rank {rank}"
            )));
        }
        out.cases += u64::from_le_bytes(m[1..9].try_into().unwrap());
        h.write(&m[9..17]);
        if m[0] == 0 {
            out.passed = false;
            if out.detail.is_none() {
                out.detail = Some(format!(
                    "rank {rank}: {}",
                    String::from_utf8_lossy(&m[17..])
                ));
            }
        }
    }
    out.digest = h.finish();
    Ok(out)
}

/// Run `suites` in order on this rank. Every rank must call this with the
/// same arguments; the returned outcomes are identical on all ranks.
pub fn run_suites(
    ctx: &mut WorkerContext,
    opts: &VerifyOptions,
    suites: &[Suite],
) -> Result<Vec<SuiteOutcome>> {
    let mut out = Vec::with_capacity(suites.len());
    for &suite in suites {
        let start = Instant::now();
        let mut tally = Tally::new();
        let res = match suite {
            Suite::Collectives => collectives_suite(ctx, opts, &mut tally),
            Suite::Relational => relational_suite(ctx, opts, &mut tally),
            Suite::DistOps => dist_ops_suite(ctx, opts, &mut tally),
            Suite::Shuffle => shuffle_suite(ctx, opts, &mut tally),
            Suite::AggregateComm => aggregate_comm_suite(ctx, opts, &mut tally),
            Suite::ExternalSort => external_sort_suite(ctx, opts, &mut tally),
            Suite::ChunkedShuffle => chunked_shuffle_suite(ctx, opts, &mut tally),
            Suite::Mds => mds_suite(ctx, opts, &mut tally),
        };
        if let Err(e) = res {
            log::error!("suite {} aborted on rank {}: {e}", suite.name(), ctx.rank());
            return Err(e);
        }
        log::debug!(
            "suite {} done on rank {} in {:?}",
            suite.name(),
            ctx.rank(),
            start.elapsed()
        );
        out.push(agree(ctx, suite, tally, start.elapsed())?);
    }
    Ok(out)
}

/// `hptmt verify`: run the suites over the configured world and return the
/// agreed outcomes.
pub fn cmd_verify(
    config: &RunConfig,
    opts: &VerifyOptions,
    suites: &[Suite],
) -> CliResult<Vec<SuiteOutcome>> {
    let mut per_rank = config.run(|ctx| run_suites(ctx, opts, suites))?;
    Ok(per_rank.swap_remove(0))
}

fn rng_for(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed, stream), index))
}

fn unit(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

// ---- collectives ----

fn det_array(seed: u64, dtype: DataType, stream: u64, len: usize) -> NumericArray {
    let base = splitmix64(seed, stream);
    match dtype {
        DataType::Int64 => NumericArray::Int64(
            (0..len as u64)
                .map(|i| {
                    let b = splitmix64(base, i);
                    (b as i64) >> (b % 63)
                })
                .collect(),
        ),
        _ => NumericArray::Float64(
            (0..len as u64)
                .map(|i| {
                    let b = splitmix64(base, i);
                    match b % 64 {
                        0 => f64::NAN,
                        1 => -0.0,
                        2 => f64::INFINITY,
                        3 => f64::NEG_INFINITY,
                        _ => (unit(b) - 0.5) * 2e3,
                    }
                })
                .collect(),
        ),
    }
}

fn collectives_suite(ctx: &mut WorkerContext, opts: &VerifyOptions, t: &mut Tally) -> Result<()> {
    let (me, w) = (ctx.rank(), ctx.world_size());
    let comm = ctx.comm_mut();
    let mut case = 0u64;
    let mut next_seed = || {
        case += 1;
        splitmix64(opts.seed, case)
    };
    for (li, len) in [0usize, 1, 7, 64, 1000].into_iter().enumerate() {
        for (di, dtype) in [DataType::Int64, DataType::Float64].into_iter().enumerate() {
            let root = (li + di) % w;
            let vlen = |s: usize, d: usize| {
                if len == 0 {
                    0
                } else {
                    (len + s + 2 * d) % (len + 1)
                }
            };
            let gen = |c: u64, stream: usize, n: usize| det_array(c, dtype, stream as u64, n);
            let tag = format!("len {len} {dtype}");

            let c = next_seed();
            let mine = if me == root {
                gen(c, root, len)
            } else {
                gen(c, me, vlen(me, 1))
            };
            let out = broadcast(comm, &mine, root)?;
            t.check(out.bit_eq(&gen(c, root, len)), || {
                format!("broadcast {tag} root {root}")
            });
            t.absorb(&out.to_bytes());

            let c = next_seed();
            let inputs: Vec<NumericArray> = (0..w).map(|s| gen(c, s, vlen(s, 0))).collect();
            let expected = oracle::concat(&inputs);
            let got = gather(comm, &inputs[me], root)?;
            t.check(
                match &got {
                    Some(a) => me == root && a.bit_eq(&expected),
                    None => me != root,
                },
                || format!("gather {tag} root {root}"),
            );
            let all = allgather(comm, &inputs[me])?;
            t.check(all.bit_eq(&expected), || format!("allgather {tag}"));
            t.absorb(&all.to_bytes());
            let staged = match got {
                Some(a) => a,
                None => NumericArray::empty(dtype)?,
            };
            let via = broadcast(comm, &staged, root)?;
            t.check(via.bit_eq(&all), || {
                format!("allgather vs gather+broadcast {tag}")
            });

            let c = next_seed();
            let parts: Vec<NumericArray> = (0..w).map(|r| gen(c, r, vlen(r, 0))).collect();
            let out = scatter(comm, (me == root).then_some(parts.as_slice()), root)?;
            t.check(out.bit_eq(&parts[me]), || {
                format!("scatter {tag} root {root}")
            });
            t.absorb(&out.to_bytes());

            let c = next_seed();
            let parts: Vec<NumericArray> =
                (0..w).map(|d| gen(c, me * w + d, vlen(me, d))).collect();
            let out = alltoall(comm, &parts)?;
            let ok =
                out.len() == w && (0..w).all(|s| out[s].bit_eq(&gen(c, s * w + me, vlen(s, me))));
            t.check(ok, || format!("alltoall {tag}"));
            out.iter().for_each(|a| t.absorb(&a.to_bytes()));

            let c = next_seed();
            let payload = |s: usize, d: usize| {
                let mut b = gen(c, s * w + d, vlen(s, d)).to_bytes();
                b.extend(std::iter::repeat_n(d as u8, (s + d) % 3));
                b
            };
            let out = alltoall_bytes(comm, (0..w).map(|d| payload(me, d)).collect())?;
            let ok = out.len() == w && (0..w).all(|s| out[s] == payload(s, me));
            t.check(ok, || format!("alltoall_bytes {tag}"));
            out.iter().for_each(|b| t.absorb(b));

            for (oi, op) in [ReduceOp::Sum, ReduceOp::Min, ReduceOp::Max, ReduceOp::Prod]
                .into_iter()
                .enumerate()
            {
                let c = next_seed();
                let inputs: Vec<NumericArray> = (0..w).map(|s| gen(c, s, len)).collect();
                let expected = oracle::reduce(&inputs, op);
                let r = (root + oi) % w;
                let got = reduce(comm, &inputs[me], op, r)?;
                t.check(
                    match &got {
                        Some(a) => me == r && oracle::same_reduction(a, &expected),
                        None => me != r,
                    },
                    || format!("reduce {op:?} {tag} root {r}"),
                );
                let all = allreduce(comm, &inputs[me], op)?;
                t.check(oracle::same_reduction(&all, &expected), || {
                    format!("allreduce {op:?} {tag}")
                });
                t.absorb(&all.to_bytes());
            }
        }
    }

    if w > 1 {
        let c = next_seed();
        let mismatch = |r: Result<NumericArray>| matches!(r, Err(Error::ParameterMismatch(_)));
        let arr = det_array(
            c,
            DataType::Int64,
            me as u64,
            if me == w - 1 { 3 } else { 2 },
        );
        t.check(mismatch(allreduce(comm, &arr, ReduceOp::Sum)), || {
            "allreduce length mismatch undetected".into()
        });
        let arr = det_array(
            c,
            if me == 0 {
                DataType::Int64
            } else {
                DataType::Float64
            },
            me as u64,
            2,
        );
        t.check(mismatch(allreduce(comm, &arr, ReduceOp::Max)), || {
            "allreduce dtype mismatch undetected".into()
        });
        let arr = det_array(c, DataType::Float64, me as u64, 2);
        t.check(mismatch(broadcast(comm, &arr, me % 2)), || {
            "broadcast root mismatch undetected".into()
        });
        // The communicator stays usable after a rejected call.
        let out = allreduce(comm, &NumericArray::Int64(vec![1]), ReduceOp::Sum)?;
        t.check(out.as_i64() == Some(&[w as i64][..]), || {
            "allreduce after mismatch".into()
        });
    }
    Ok(())
}

// ---- local relational operators ----

const RELATIONAL_OPS: [&str; 14] = [
    "select",
    "project",
    "distinct",
    "union",
    "difference",
    "intersect",
    "product",
    "join_inner",
    "join_left",
    "join_right",
    "join_full",
    "groupby",
    "aggregate",
    "sort",
];

fn relational_suite(ctx: &mut WorkerContext, opts: &VerifyOptions, t: &mut Tally) -> Result<()> {
    let (me, w) = (ctx.rank(), ctx.world_size());
    for (oi, op) in RELATIONAL_OPS.iter().enumerate() {
        for case in (me..opts.relational_cases).step_by(w) {
            let mut rng = rng_for(opts.seed, 100 + oi as u64, case as u64);
            let (ok, out) = relational_case(op, &mut rng)?;
            t.check(ok, || format!("{op} case {case}"));
            t.absorb_table(&out);
        }
    }
    Ok(())
}

fn small_table(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    max_cols: usize,
    max_rows: usize,
    dist: CellDist,
) -> Table {
    let schema = random_schema(rng, prefix, max_cols);
    let n = rng.gen_range(0..=max_rows);
    random_table(rng, &schema, n, dist)
}

fn random_literal(rng: &mut ChaCha8Rng, dtype: DataType) -> Scalar {
    match dtype {
        DataType::Int64 if rng.gen_bool(0.5) => Scalar::Int64(rng.gen_range(-2..22)),
        DataType::Int64 => Scalar::Float64(rng.gen_range(-4..44) as f64 * 0.5),
        DataType::Float64 => match rng.gen_range(0..10) {
            0 => Scalar::Float64(f64::NAN),
            1..=4 => Scalar::Int64(rng.gen_range(-6..6)),
            _ => Scalar::Float64(rng.gen_range(-12..12) as f64 * 0.5),
        },
        DataType::Bool => Scalar::Bool(rng.gen()),
        DataType::Utf8 => Scalar::Utf8(format!("s{}", rng.gen_range(0..22))),
    }
}

fn names(schema: &Schema, cols: &[usize]) -> Vec<String> {
    cols.iter().map(|&c| schema.field(c).name.clone()).collect()
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn shuffled_subset(rng: &mut ChaCha8Rng, n: usize, max: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.truncate(rng.gen_range(1..=n.min(max)));
    idx
}

fn relational_case(op: &str, rng: &mut ChaCha8Rng) -> Result<(bool, Table)> {
    let dist = CellDist::default();
    let few = CellDist { domain: 3, ..dist };
    let multiset = |got: Table, schema: &Schema, rows: &[Row]| {
        let ok = oracle::same_multiset(&got, &oracle::to_table(schema, rows));
        (ok, got)
    };
    Ok(match op {
        "select" => {
            let a = small_table(rng, "c", 4, 200, dist);
            let atoms: Vec<(usize, Comparison, Scalar)> = (0..rng.gen_range(1..=3))
                .map(|_| {
                    let c = rng.gen_range(0..a.num_columns());
                    let cmp = *[
                        Comparison::Eq,
                        Comparison::Ne,
                        Comparison::Lt,
                        Comparison::Le,
                        Comparison::Gt,
                        Comparison::Ge,
                    ]
                    .choose(rng)
                    .unwrap();
                    (c, cmp, random_literal(rng, a.schema().field(c).dtype))
                })
                .collect();
            let pred = atoms.iter().fold(Predicate::default(), |p, (c, cmp, lit)| {
                p.and(Predicate::atom(
                    a.schema().field(*c).name.clone(),
                    *cmp,
                    lit.clone(),
                ))
            });
            multiset(
                select(&a, &pred)?,
                a.schema(),
                &oracle::select(&a.rows(), &atoms),
            )
        }
        "project" => {
            let a = small_table(rng, "c", 4, 200, dist);
            let cols = shuffled_subset(rng, a.num_columns(), usize::MAX);
            let got = project(&a, &strs(&names(a.schema(), &cols)))?;
            let schema = Schema::new(cols.iter().map(|&c| a.schema().field(c).clone()).collect())?;
            multiset(got, &schema, &oracle::project(&a.rows(), &cols))
        }
        "distinct" => {
            let a = small_table(rng, "c", 3, 200, few);
            multiset(distinct(&a), a.schema(), &oracle::distinct(&a.rows()))
        }
        "union" | "difference" | "intersect" => {
            let schema = random_schema(rng, "c", 3);
            let (na, nb) = (rng.gen_range(0..=200), rng.gen_range(0..=200));
            let a = random_table(rng, &schema, na, few);
            let b = random_table(rng, &schema, nb, few);
            let (ra, rb) = (a.rows(), b.rows());
            match op {
                "union" => multiset(union(&a, &b)?, &schema, &oracle::union(&ra, &rb)),
                "difference" => {
                    multiset(difference(&a, &b)?, &schema, &oracle::difference(&ra, &rb))
                }
                _ => multiset(intersect(&a, &b)?, &schema, &oracle::intersect(&ra, &rb)),
            }
        }
        "product" => {
            let a = small_table(rng, "c", 3, 50, dist);
            let prefix = if rng.gen_bool(0.5) { "c" } else { "d" };
            let b = small_table(rng, prefix, 3, 50, dist);
            let schema = oracle::combined_schema(a.schema(), b.schema().fields());
            multiset(
                cartesian_product(&a, &b)?,
                &schema,
                &oracle::cartesian_product(&a.rows(), &b.rows()),
            )
        }
        "groupby" | "aggregate" => {
            let a = small_table(rng, "c", 4, 200, dist);
            let n = a.num_columns();
            let keys = if op == "groupby" {
                shuffled_subset(rng, n, 2)
            } else {
                vec![]
            };
            let aggs: Vec<(usize, AggFunc)> = (0..rng.gen_range(1..=4))
                .map(|_| {
                    let c = rng.gen_range(0..n);
                    let f = if a.schema().field(c).dtype.is_numeric() {
                        *AggFunc::ALL.choose(rng).unwrap()
                    } else {
                        *[AggFunc::Count, AggFunc::Min, AggFunc::Max]
                            .choose(rng)
                            .unwrap()
                    };
                    (c, f)
                })
                .collect();
            let specs: Vec<Aggregation> = aggs
                .iter()
                .enumerate()
                .map(|(i, &(c, f))| {
                    Aggregation::new(&a.schema().field(c).name, f, &format!("o{i}"))
                })
                .collect();
            let key_names = names(a.schema(), &keys);
            let got = if op == "groupby" {
                groupby_aggregate(&a, &AggSpec::new(&strs(&key_names), specs))?
            } else {
                aggregate(&a, &specs)?
            };
            let mut fields: Vec<Field> =
                keys.iter().map(|&k| a.schema().field(k).clone()).collect();
            for (i, &(c, f)) in aggs.iter().enumerate() {
                fields.push(Field::new(
                    format!("o{i}"),
                    f.output_type(a.schema().field(c).dtype)?,
                ));
            }
            let dtypes: Vec<DataType> = a.schema().fields().iter().map(|f| f.dtype).collect();
            multiset(
                got,
                &Schema::new(fields)?,
                &oracle::groupby(&a.rows(), &keys, &aggs, &dtypes),
            )
        }
        "sort" => {
            let base = small_table(rng, "c", 3, 200, dist);
            let n = base.num_rows();
            let (schema, mut cols) = base.into_parts();
            let mut fields = schema.fields().to_vec();
            fields.push(Field::new("rid", DataType::Int64));
            cols.push(ColumnArray::from_i64(&(0..n as i64).collect::<Vec<_>>()));
            let a = Table::new(Schema::new(fields)?, cols)?;
            let keys: Vec<(usize, bool)> = shuffled_subset(rng, a.num_columns() - 1, 3)
                .into_iter()
                .map(|c| (c, rng.gen_bool(0.5)))
                .collect();
            let spec = SortSpec {
                keys: keys
                    .iter()
                    .map(|&(c, desc)| SortKey {
                        column: a.schema().field(c).name.clone(),
                        direction: if desc {
                            Direction::Desc
                        } else {
                            Direction::Asc
                        },
                    })
                    .collect(),
            };
            let got = sort(&a, &spec)?;
            let want = oracle::to_table(a.schema(), &oracle::sort(&a.rows(), &keys));
            (oracle::same_sequence(&got, &want), got)
        }
        join_op => {
            let jt = match join_op {
                "join_inner" => JoinType::Inner,
                "join_left" => JoinType::Left,
                "join_right" => JoinType::Right,
                _ => JoinType::FullOuter,
            };
            let nk = rng.gen_range(1..=2);
            let key_types: Vec<DataType> = (0..nk).map(|_| *TYPES.choose(rng).unwrap()).collect();
            let mut lf: Vec<Field> = key_types
                .iter()
                .enumerate()
                .map(|(i, &t)| Field::new(format!("k{i}"), t))
                .collect();
            for i in 0..rng.gen_range(0..=2) {
                lf.push(Field::new(format!("a{i}"), *TYPES.choose(rng).unwrap()));
            }
            lf.shuffle(rng);
            let mut rf: Vec<Field> = key_types
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    Field::new(
                        if rng.gen_bool(0.5) {
                            format!("k{i}")
                        } else {
                            format!("rk{i}")
                        },
                        t,
                    )
                })
                .collect();
            let right_keys: Vec<String> = rf.iter().map(|f| f.name.clone()).collect();
            for i in 0..rng.gen_range(0..=2) {
                let name = if rng.gen_bool(0.5) {
                    format!("a{i}")
                } else {
                    format!("b{i}")
                };
                rf.push(Field::new(name, *TYPES.choose(rng).unwrap()));
            }
            rf.shuffle(rng);
            let (ls, rs) = (Schema::new(lf)?, Schema::new(rf)?);
            let (na, nb) = (rng.gen_range(0..=200), rng.gen_range(0..=200));
            let a = random_table(rng, &ls, na, dist);
            let b = random_table(rng, &rs, nb, dist);
            let left_keys: Vec<String> = (0..nk).map(|i| format!("k{i}")).collect();
            let lk = left_keys
                .iter()
                .map(|k| ls.index_of(k))
                .collect::<Result<Vec<_>>>()?;
            let rk = right_keys
                .iter()
                .map(|k| rs.index_of(k))
                .collect::<Result<Vec<_>>>()?;
            let got = join(
                &a,
                &b,
                &JoinSpec::new(jt, &strs(&left_keys), &strs(&right_keys)),
            )?;
            let rest: Vec<Field> = (0..rs.len())
                .filter(|c| !rk.contains(c))
                .map(|c| rs.field(c).clone())
                .collect();
            let schema = oracle::combined_schema(&ls, &rest);
            let want = oracle::join(&a.rows(), &b.rows(), ls.len(), rs.len(), &lk, &rk, jt);
            multiset(got, &schema, &want)
        }
    })
}

// ---- distributed operators ----

/// Gather every rank's table at rank 0, in rank order.
fn gather_tables(ctx: &mut WorkerContext, t: &Table) -> Result<Option<Vec<Table>>> {
    let parts = gather_bytes(ctx.comm_mut(), serialize_table(t), 0)?;
    parts
        .map(|ps| ps.iter().map(|b| deserialize_table(b)).collect())
        .transpose()
}

fn gather_concat(ctx: &mut WorkerContext, t: &Table) -> Result<Option<Table>> {
    let schema = t.schema().clone();
    gather_tables(ctx, t)?
        .map(|ts| concat_with_schema(&schema, &ts))
        .transpose()
}

/// No key value appears on two ranks.
fn colocated(outs: &[Table], keys: &[usize]) -> bool {
    let mut owner: HashMap<Vec<u8>, usize> = HashMap::new();
    for (r, t) in outs.iter().enumerate() {
        for i in 0..t.num_rows() {
            if *owner.entry(encode_row_key(t, i, keys).0).or_insert(r) != r {
                return false;
            }
        }
    }
    true
}

struct Instance {
    a: Table,
    /// Same schema as `a`, partly overlapping it.
    b: Table,
    /// Join partner of `a` on `k`.
    r: Table,
}

fn with_key(rng: &mut ChaCha8Rng, rows: usize, key_domain: i64, extras: &Schema) -> Table {
    let mut fields = vec![Field::new("k", DataType::Int64)];
    fields.extend(extras.fields().iter().cloned());
    let mut cols = vec![random_column(
        rng,
        DataType::Int64,
        rows,
        CellDist {
            domain: key_domain,
            ..Default::default()
        },
    )];
    cols.extend(
        extras
            .fields()
            .iter()
            .map(|f| random_column(rng, f.dtype, rows, CellDist::default())),
    );
    Table::new(Schema::new(fields).expect("distinct names"), cols).expect("columns match")
}

fn dist_instance(rng: &mut ChaCha8Rng, max_rows: usize) -> Result<Instance> {
    let rows = match rng.gen_range(0..100) {
        0..=59 => rng.gen_range(0..=300.min(max_rows)),
        60..=89 => rng.gen_range(0..=3000.min(max_rows)),
        _ => rng.gen_range(0..=max_rows),
    };
    let domain = (rows as i64 / 8).max(20);
    let extras = random_schema(rng, "a", 3);
    let a = with_key(rng, rows, domain, &extras);
    let nb = rng.gen_range(0..=rows);
    let shared: Vec<usize> = if rows == 0 {
        vec![]
    } else {
        (0..nb / 2).map(|_| rng.gen_range(0..rows)).collect()
    };
    let fresh = with_key(rng, nb - shared.len(), domain, &extras);
    let b = concat_with_schema(a.schema(), &[a.take(&shared)?, fresh])?;
    let prefix = if rng.gen_bool(0.5) { "a" } else { "b" };
    let right_extras = random_schema(rng, prefix, 2);
    let nr = rng.gen_range(0..=(rows / 2).max(1));
    let r = with_key(rng, nr, domain, &right_extras);
    Ok(Instance { a, b, r })
}

fn float_close(x: f64, y: f64) -> bool {
    canonical_f64_bits(x) == canonical_f64_bits(y) || (x - y).abs() <= 1e-9 * x.abs().max(y.abs())
}

/// Grouped results equal up to row order, Float64 SUM/PROD within 1e-9
/// relative.
fn groups_match(got: &Table, want: &Table, nkeys: usize, approx: &[bool]) -> bool {
    if got.schema() != want.schema() || got.num_rows() != want.num_rows() {
        return false;
    }
    let keys: Vec<usize> = (0..nkeys).collect();
    let mut index = HashMap::new();
    for i in 0..got.num_rows() {
        if index.insert(encode_row_key(got, i, &keys), i).is_some() {
            return false;
        }
    }
    (0..want.num_rows()).all(|j| {
        let Some(&i) = index.get(&encode_row_key(want, j, &keys)) else {
            return false;
        };
        (nkeys..want.num_columns()).all(|c| {
            match (got.column(c).scalar_at(i), want.column(c).scalar_at(j)) {
                (Some(Scalar::Float64(x)), Some(Scalar::Float64(y))) if approx[c] => {
                    float_close(x, y)
                }
                (x, y) => oracle::cell_key(&x) == oracle::cell_key(&y),
            }
        })
    })
}

fn dist_ops_suite(ctx: &mut WorkerContext, opts: &VerifyOptions, t: &mut Tally) -> Result<()> {
    let (me, w) = (ctx.rank(), ctx.world_size());
    for inst in 0..opts.dist_instances {
        // Every rank draws the same sequence; only the checks are rank-0 only.
        let mut rng = rng_for(opts.seed, 200, inst as u64);
        let Instance { a, b, r } = dist_instance(&mut rng, opts.dist_max_rows)?;
        let ap = random_split(&mut rng, &a, w).swap_remove(me);
        let bp = random_split(&mut rng, &b, w).swap_remove(me);
        let rp = random_split(&mut rng, &r, w).swap_remove(me);
        let what = |op: &str| format!("{op} instance {inst} ({} rows)", a.num_rows());

        let s = shuffle(ctx, &ap, &["k"])?;
        if let Some(outs) = gather_tables(ctx, &s)? {
            let all = concat_with_schema(a.schema(), &outs)?;
            t.check(
                oracle::same_multiset(&all, &a) && colocated(&outs, &[0]),
                || what("shuffle"),
            );
            t.absorb_table(&canonicalize(&all));
        }

        type SetOp = fn(&mut WorkerContext, &Table, &Table) -> Result<Table>;
        type LocalSetOp = fn(&Table, &Table) -> Result<Table>;
        let set_ops: [(&str, SetOp, LocalSetOp); 3] = [
            ("union", dist_union, union),
            ("difference", dist_difference, difference),
            ("intersect", dist_intersect, intersect),
        ];
        for (name, dist_op, local_op) in set_ops {
            let out = dist_op(ctx, &ap, &bp)?;
            if let Some(all) = gather_concat(ctx, &out)? {
                t.check(oracle::same_multiset(&all, &local_op(&a, &b)?), || {
                    what(name)
                });
                t.absorb_table(&canonicalize(&all));
            }
        }

        for jt in JoinType::ALL {
            let spec = JoinSpec::new(jt, &["k"], &["k"]);
            let out = dist_join(ctx, &ap, &rp, &spec)?;
            if let Some(all) = gather_concat(ctx, &out)? {
                t.check(oracle::same_multiset(&all, &join(&a, &r, &spec)?), || {
                    what(&format!("join {jt:?}"))
                });
                t.absorb_table(&canonicalize(&all));
            }
        }

        let mut aggs = Vec::new();
        for (c, f) in a.schema().fields().iter().enumerate() {
            let funcs: &[AggFunc] = if f.dtype.is_numeric() {
                &AggFunc::ALL
            } else {
                &[AggFunc::Count]
            };
            for &func in funcs {
                aggs.push((
                    c,
                    func,
                    Aggregation::new(&f.name, func, &format!("o{}", aggs.len())),
                ));
            }
        }
        let specs: Vec<Aggregation> = aggs.iter().map(|x| x.2.clone()).collect();
        let out = dist_aggregate(ctx, &ap, &specs)?;
        let part_rows = gather_tables(ctx, &ap)?;
        if let Some(parts) = part_rows {
            let parts: Vec<Vec<Row>> = parts.iter().map(Table::rows).collect();
            let local = aggregate(&a, &specs)?;
            let ok = out.schema() == local.schema()
                && aggs.iter().enumerate().all(|(i, &(c, func, _))| {
                    let dtype = a.schema().field(c).dtype;
                    let got = out.column(i).scalar_at(0);
                    if dtype == DataType::Float64 && matches!(func, AggFunc::Sum | AggFunc::Prod) {
                        let folded = oracle::partitioned_aggregate(&parts, c, func, dtype);
                        oracle::cell_key(&got) == oracle::cell_key(&folded)
                    } else {
                        oracle::cell_key(&got) == oracle::cell_key(&local.column(i).scalar_at(0))
                    }
                });
            t.check(ok, || what("dist_aggregate"));
            t.absorb_table(&out);
        }

        let mut keys = vec!["k".to_string()];
        if a.num_columns() > 1 && rng.gen_bool(0.5) {
            keys.push(a.schema().field(1).name.clone());
        }
        let mut gaggs = vec![Aggregation::new("k", AggFunc::Count, "n")];
        let mut approx = vec![false; keys.len() + 1];
        for f in a.schema().fields().iter().skip(keys.len()) {
            let choices: &[AggFunc] = if f.dtype.is_numeric() {
                &AggFunc::ALL
            } else {
                &[AggFunc::Count, AggFunc::Min, AggFunc::Max]
            };
            for _ in 0..2 {
                let func = *choices.choose(&mut rng).unwrap();
                approx.push(
                    f.dtype == DataType::Float64 && matches!(func, AggFunc::Sum | AggFunc::Prod),
                );
                gaggs.push(Aggregation::new(
                    &f.name,
                    func,
                    &format!("o{}", gaggs.len()),
                ));
            }
        }
        let spec = AggSpec::new(&strs(&keys), gaggs);
        let out = dist_groupby_aggregate(ctx, &ap, &spec)?;
        if let Some(all) = gather_concat(ctx, &out)? {
            let want = groupby_aggregate(&a, &spec)?;
            t.check(groups_match(&all, &want, keys.len(), &approx), || {
                what("dist_groupby_aggregate")
            });
            t.absorb_table(&canonicalize(&all));
        }

        let mut spec = SortSpec::asc(&["k"]);
        if a.num_columns() > 1 {
            let dir = if rng.gen_bool(0.5) {
                Direction::Asc
            } else {
                Direction::Desc
            };
            spec = spec.then(&a.schema().field(1).name.clone(), dir);
        }
        let out = dist_sort(ctx, &ap, &spec)?;
        if let Some(all) = gather_concat(ctx, &out)? {
            t.check(oracle::same_sequence(&all, &sort(&a, &spec)?), || {
                what("dist_sort")
            });
            t.absorb_table(&all);
        }

        let rows_per_chunk = rng.gen_range(1..=64);
        let eager = shuffle(ctx, &ap, &["k"])?;
        let (streamed, eos) = {
            let mut cs = chunked_shuffle(
                ctx,
                Box::new(TableStream::from_table(&ap, rows_per_chunk)),
                &["k"],
            )?;
            let out = cs.collect_table()?;
            (out, cs.eos_received())
        };
        t.check(eos == w && oracle::same_multiset(&streamed, &eager), || {
            what("chunked_shuffle")
        });
    }
    Ok(())
}

// ---- shuffle invariants ----

fn shuffle_suite(ctx: &mut WorkerContext, opts: &VerifyOptions, t: &mut Tally) -> Result<()> {
    let (me, w) = (ctx.rank(), ctx.world_size());
    for inst in 0..opts.shuffle_instances {
        let mut rng = rng_for(opts.seed, 300, inst as u64);
        let rows = match inst % 4 {
            0 => 0,
            1 => rng.gen_range(0..w.max(2)),
            _ => rng.gen_range(0..=2000),
        };
        let schema = random_schema(&mut rng, "c", 4);
        let table = random_table(&mut rng, &schema, rows, CellDist::default());
        let parts = if rng.gen_bool(0.25) {
            let owner = rng.gen_range(0..w);
            (0..w)
                .map(|r| {
                    if r == owner {
                        table.clone()
                    } else {
                        table.slice(0, 0)
                    }
                })
                .collect()
        } else {
            random_split(&mut rng, &table, w)
        };
        let keys = shuffled_subset(&mut rng, schema.len(), usize::MAX);
        let out = shuffle_by_indices(ctx, &parts[me], &keys)?;
        if let Some(outs) = gather_tables(ctx, &out)? {
            let all = concat_with_schema(&schema, &outs)?;
            t.check(oracle::same_multiset(&all, &table), || {
                format!("conservation, instance {inst}")
            });
            t.check(colocated(&outs, &keys), || {
                format!("co-location, instance {inst}")
            });
            outs.iter().for_each(|o| t.absorb_table(&canonicalize(o)));
        }
    }
    Ok(())
}

// ---- communication bound of whole-table aggregation ----

fn aggregate_comm_suite(
    ctx: &mut WorkerContext,
    opts: &VerifyOptions,
    t: &mut Tally,
) -> Result<()> {
    let (me, w) = (ctx.rank(), ctx.world_size());
    let n = opts.aggregate_rows;
    let (lo, hi) = row_range(n, w, me);
    let xs: Vec<f64> = (lo..hi)
        .map(|i| unit(splitmix64(opts.seed ^ 0xA66, i as u64)) * 100.0)
        .collect();
    let table = Table::new(
        Schema::of(&[("g", DataType::Int64), ("x", DataType::Float64)])?,
        vec![
            ColumnArray::from_i64(&vec![7; xs.len()]),
            ColumnArray::from_f64(&xs),
        ],
    )?;
    let aggs: Vec<Aggregation> = AggFunc::ALL
        .iter()
        .map(|&f| Aggregation::new("x", f, &format!("{f:?}").to_lowercase()))
        .collect();

    let before = ctx.stats();
    let whole = dist_aggregate(ctx, &table, &aggs)?;
    let agg_bytes = (ctx.stats() - before).bytes_sent;

    let spec = AggSpec::new(&["g"], aggs);
    let before = ctx.stats();
    let grouped = dist_groupby_aggregate(ctx, &table, &spec)?;
    let group_bytes = (ctx.stats() - before).bytes_sent;

    let partial = groupby_aggregate(&table, &spec)?;
    let partial_bytes = if partial.num_rows() > 0
        && PartitionMap::new(w).destination(encode_row_key(&partial, 0, &[0]).as_bytes()) != me
    {
        encoded_len(&partial) as u64
    } else {
        0
    };
    let totals = allreduce(
        ctx.comm_mut(),
        &NumericArray::Int64(vec![
            agg_bytes as i64,
            group_bytes as i64,
            partial_bytes as i64,
        ]),
        ReduceOp::Sum,
    )?;
    let totals = totals.as_i64().expect("int totals").to_vec();
    t.check(totals[0] < 1024 * w as i64, || {
        format!(
            "dist_aggregate sent {} bytes in total, bound {}",
            totals[0],
            1024 * w
        )
    });
    t.check(totals[1] >= totals[2] && (w == 1 || totals[2] > 0), || {
        format!(
            "groupby sent {} bytes, partial tables are {} bytes",
            totals[1], totals[2]
        )
    });
    let count_ok = whole.column(3).scalar_at(0) == Some(Scalar::Int64(n as i64));
    let grouped_rows = allreduce(
        ctx.comm_mut(),
        &NumericArray::Int64(vec![grouped.num_rows() as i64]),
        ReduceOp::Sum,
    )?;
    t.check(
        count_ok && grouped_rows.as_i64() == Some(&[(n > 0) as i64][..]),
        || "aggregate results".into(),
    );
    t.absorb_table(&whole);
    Ok(())
}

// ---- external sort ----

fn external_sort_suite(ctx: &mut WorkerContext, opts: &VerifyOptions, t: &mut Tally) -> Result<()> {
    let me = ctx.rank();
    let saved = ctx.memory_budget();
    let out = (|| {
        ctx.set_memory_budget(opts.sort_budget)?;
        large_sort(ctx, opts, t)?;
        ctx.set_memory_budget(160 << 10)?;
        for desc in [false, true] {
            exact_sort(ctx, splitmix64(opts.seed ^ 0x5043, me as u64), desc, t)?;
        }
        Ok(())
    })();
    ctx.set_memory_budget(saved)?;
    out
}

fn sort_chunk_rows(budget: usize) -> usize {
    (budget / 8 / KeyStream::ROW_BYTES).clamp(1, 1 << 16)
}

fn large_sort(ctx: &mut WorkerContext, opts: &VerifyOptions, t: &mut Tally) -> Result<()> {
    let budget = opts.sort_budget;
    let rows = (opts.sort_input_bytes / KeyStream::ROW_BYTES) as u64;
    let range = (rows / 4).max(1);
    let seed = splitmix64(opts.seed ^ 0x534F, ctx.rank() as u64);
    let input = KeyStream::new(seed, rows, sort_chunk_rows(budget), range);
    let mut sorted = external_sort(ctx, Box::new(input), &SortSpec::asc(&["k"]))?;

    let mut seen = vec![false; rows as usize];
    let (mut count, mut ordered, mut intact) = (0u64, true, true);
    let mut prev: Option<(i64, i64)> = None;
    let mut files = Vec::new();
    let mut h = Fnv1a::new();
    while let Some(chunk) = sorted.next_chunk()? {
        if files.is_empty() {
            files = sorted.spill_files().to_vec();
        }
        let (k, v) = (chunk.column(0), chunk.column(1));
        for i in 0..chunk.num_rows() {
            let cur = (k.i64_at(i), v.i64_at(i));
            ordered &= prev.is_none_or(|p| p < cur);
            prev = Some(cur);
            let g = cur.1 as u64;
            if g >= rows || seen[g as usize] || cur.0 as u64 != splitmix64(seed, g) % range {
                intact = false;
            } else {
                seen[g as usize] = true;
            }
            count += 1;
        }
        h.write(&serialize_table(&chunk));
    }
    let stats = sorted.stats();
    drop(sorted);

    let min_runs = if opts.sort_input_bytes > budget {
        opts.sort_input_bytes.div_ceil(budget)
    } else {
        0
    };
    t.check(ordered, || "external sort output out of order".into());
    t.check(intact && count == rows, || {
        format!("external sort returned {count} of {rows} rows or altered rows")
    });
    t.check(stats.runs >= min_runs, || {
        format!("{} runs, expected at least {min_runs}", stats.runs)
    });
    let bound = budget + MERGE_BLOCK_BYTES * stats.runs;
    t.check(stats.peak_resident_bytes <= bound, || {
        format!(
            "peak resident {} bytes over bound {bound}",
            stats.peak_resident_bytes
        )
    });
    t.check(files.iter().all(|f| !f.exists()), || {
        "spill files left behind".into()
    });
    t.absorb(&h.finish().to_le_bytes());
    t.absorb(&(stats.runs as u64).to_le_bytes());
    Ok(())
}

/// 1 MiB input checked row for row against the stable reference sort.
fn exact_sort(ctx: &mut WorkerContext, seed: u64, desc: bool, t: &mut Tally) -> Result<()> {
    let rows = (1u64 << 20) / KeyStream::ROW_BYTES as u64;
    let chunk_rows = sort_chunk_rows(ctx.memory_budget());
    let mut reference = KeyStream::new(seed, rows, chunk_rows, 1000);
    let mut chunks = Vec::new();
    while let Some(c) = reference.next_chunk()? {
        chunks.push(c);
    }
    let input = concat_with_schema(&reference.schema().clone(), &chunks)?;
    let direction = if desc {
        Direction::Desc
    } else {
        Direction::Asc
    };
    let spec = SortSpec {
        keys: vec![SortKey {
            column: "k".into(),
            direction,
        }],
    };
    let mut sorted = external_sort(
        ctx,
        Box::new(KeyStream::new(seed, rows, chunk_rows, 1000)),
        &spec,
    )?;
    let got = sorted.collect_table()?;
    let runs = sorted.stats().runs;
    let want = oracle::to_table(input.schema(), &oracle::sort(&input.rows(), &[(0, desc)]));
    t.check(oracle::same_sequence(&got, &want) && runs >= 2, || {
        format!("1 MiB external sort, desc {desc}, {runs} runs")
    });
    t.absorb_table(&got);
    Ok(())
}

// ---- chunked shuffle ----

fn chunked_shuffle_suite(
    ctx: &mut WorkerContext,
    opts: &VerifyOptions,
    t: &mut Tally,
) -> Result<()> {
    let (me, w) = (ctx.rank(), ctx.world_size());
    let schema = Schema::of(&[("k", DataType::Int64), ("s", DataType::Utf8)])?;
    let mut rng = rng_for(opts.seed, 400, me as u64);
    let chunk =
        |rng: &mut ChaCha8Rng, rows: usize| random_table(rng, &schema, rows, CellDist::default());
    let cases: Vec<(&str, Vec<Table>)> = vec![
        ("no chunks", vec![]),
        ("empty chunks", (0..3).map(|_| chunk(&mut rng, 0)).collect()),
        ("single row", vec![chunk(&mut rng, 1)]),
        (
            "many chunks",
            (0..opts.stream_chunks)
                .map(|_| {
                    let n = rng.gen_range(0..=8);
                    chunk(&mut rng, n)
                })
                .collect(),
        ),
    ];
    for (name, chunks) in cases {
        let input = concat_with_schema(&schema, &chunks)?;
        let (out, eos) = {
            let mut cs = chunked_shuffle(
                ctx,
                Box::new(TableStream::new(schema.clone(), chunks)?),
                &["k"],
            )?;
            let out = cs.collect_table()?;
            (out, cs.eos_received())
        };
        let eager = shuffle(ctx, &input, &["k"])?;
        t.check(eos == w, || {
            format!("{name}: {eos} end-of-stream markers, expected {w}")
        });
        t.check(oracle::same_multiset(&out, &eager), || {
            format!("{name}: rows differ from the eager shuffle")
        });
        t.absorb_table(&canonicalize(&out));
    }
    Ok(())
}

// ---- MDS ----

fn mds_points(seed: u64, n: usize) -> Result<Table> {
    let coord = |i: usize| unit(splitmix64(seed ^ 0x4D44, i as u64)) * 10.0;
    Table::new(
        Schema::of(&[("x", DataType::Float64), ("y", DataType::Float64)])?,
        vec![
            ColumnArray::from_f64(&(0..n).map(|i| coord(2 * i)).collect::<Vec<_>>()),
            ColumnArray::from_f64(&(0..n).map(|i| coord(2 * i + 1)).collect::<Vec<_>>()),
        ],
    )
}

fn mds_suite(ctx: &mut WorkerContext, opts: &VerifyOptions, t: &mut Tally) -> Result<()> {
    let (me, w) = (ctx.rank(), ctx.world_size());
    let points = mds_points(opts.seed, opts.mds_points)?;
    let (lo, hi) = row_range(points.num_rows(), w, me);
    let res = run_mds(
        ctx,
        &points.slice(lo, hi - lo),
        &["x", "y"],
        2,
        opts.mds_iters,
        0.0,
    )?;
    let monotone = res
        .history
        .windows(2)
        .all(|p| p[1] <= p[0] + 1e-9 * p[0].max(1.0));
    t.check(monotone && !res.history.is_empty(), || {
        format!("stress history not monotone: {:?}", res.history)
    });
    for s in &res.history {
        t.absorb(&s.to_bits().to_le_bytes());
    }

    if me == 0 {
        let comm = bootstrap(&TransportConfig::inproc(1))?;
        let mut solo = WorkerContext::new(comm).with_seed(ctx.seed());
        let reference = run_mds(&mut solo, &points, &["x", "y"], 2, opts.mds_iters, 0.0)?;
        solo.comm_mut().finalize();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        t.check(
            bits(&reference.history) == bits(&res.history)
                && bits(&reference.embedding.coords) == bits(&res.embedding.coords),
            || "history or embedding differs from the single-worker run".into(),
        );
    }

    let line = Table::new(
        Schema::of(&[("x", DataType::Float64)])?,
        vec![ColumnArray::from_f64(&[0.0, 1.0, 2.0])],
    )?;
    let (lo, hi) = row_range(3, w, me);
    let res = run_mds(ctx, &line.slice(lo, hi - lo), &["x"], 1, 200, 0.0)?;
    let last = *res.history.last().unwrap_or(&f64::INFINITY);
    let mut xs: Vec<f64> = res.embedding.coords.clone();
    xs.sort_by(f64::total_cmp);
    let gaps_ok = xs.windows(2).all(|p| ((p[1] - p[0]) - 1.0).abs() <= 1e-3);
    t.check(last < 1e-6 && gaps_ok, || {
        format!("collinear case: stress {last}, coordinates {xs:?}")
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyOptions {
        VerifyOptions {
            relational_cases: 40,
            dist_instances: 12,
            dist_max_rows: 5000,
            shuffle_instances: 20,
            aggregate_rows: 10_000,
            sort_input_bytes: 2 << 20,
            sort_budget: 512 << 10,
            stream_chunks: 50,
            mds_points: 12,
            mds_iters: 50,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn every_suite_passes_on_small_worlds() {
        for w in [1, 2, 3] {
            let outcomes = cmd_verify(&RunConfig::inproc(w), &small(), &Suite::ALL).unwrap();
            for o in &outcomes {
                assert!(o.passed, "W={w}: {}", render(&outcomes));
                assert!(o.cases > 0, "{}", o.suite.name());
            }
        }
    }

    #[test]
    fn outcomes_are_deterministic() {
        let opts = VerifyOptions { seed: 9, ..small() };
        let suites = [Suite::Relational, Suite::DistOps, Suite::Shuffle];
        let a = cmd_verify(&RunConfig::inproc(2), &opts, &suites).unwrap();
        let b = cmd_verify(&RunConfig::inproc(2), &opts, &suites).unwrap();
        let lines =
            |v: &[SuiteOutcome]| v.iter().map(SuiteOutcome::logical_line).collect::<Vec<_>>();
        assert_eq!(lines(&a), lines(&b));
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::from_name(s.name()), Some(s));
        }
        assert_eq!(Suite::from_name("nope"), None);
    }
}
