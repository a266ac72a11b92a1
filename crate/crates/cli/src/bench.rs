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

//! Operator benchmarks over generated two-column Int64 tables.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use serde_json::json;

use hptmt_core::collectives::{allgather_bytes, allreduce, NumericArray, ReduceOp};
use hptmt_core::columnar::{concat_tables, deserialize_table, serialize_table, Table};
use hptmt_core::dist::{
    dist_groupby_aggregate, dist_join, dist_sort, shuffle, PhaseTimes, WorkerContext,
};
use hptmt_core::relational::{AggFunc, AggSpec, Aggregation, JoinSpec, JoinType, SortSpec};
use hptmt_core::Result;

use crate::config::RunConfig;
use crate::gen::bench_table;
use crate::{CliError, CliResult};

/// Output rows sampled per rank for the spot check.
const SAMPLES_PER_RANK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum BenchOp {
    Join,
    Shuffle,
    Sort,
    Allreduce,
    Groupby,
}

impl BenchOp {
    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Join => "join",
            BenchOp::Shuffle => "shuffle",
            BenchOp::Sort => "sort",
            BenchOp::Allreduce => "allreduce",
            BenchOp::Groupby => "groupby",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub operator: BenchOp,
    pub workers: usize,
    pub rows_per_worker: usize,
    /// Slowest rank per phase.
    pub phase_times: PhaseTimes,
    pub result_rows: u64,
    pub seed: u64,
}

impl BenchReport {
    pub fn to_json(&self) -> serde_json::Value {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        json!({
            "operator": self.operator.name(),
            "workers": self.workers,
            "rows_per_worker": self.rows_per_worker,
            "phase_times_ms": {
                "partition": ms(self.phase_times.partition),
                "exchange": ms(self.phase_times.exchange),
                "local": ms(self.phase_times.local),
            },
            "result_rows": self.result_rows,
            "seed": self.seed,
        })
    }
}

struct RankResult {
    times: PhaseTimes,
    rows: u64,
    spot_check: bool,
}

/// `hptmt bench`: rows `[rank * rpw, (rank + 1) * rpw)` of two global
/// tables with keys uniform in `[0, 2 * global rows)`.
pub fn cmd_bench(config: &RunConfig, op: BenchOp) -> CliResult<BenchReport> {
    if config.rows_per_worker == 0 {
        return Err(CliError::Usage(
            "--rows-per-worker must be at least 1".into(),
        ));
    }
    let results = config.run(|ctx| bench_rank(ctx, op, config.rows_per_worker))?;
    let r = &results[0];
    if !r.spot_check {
        return Err(CliError::Verification(format!(
            "{} output failed the sampled-row check",
            op.name()
        )));
    }
    Ok(BenchReport {
        operator: op,
        workers: config.workers,
        rows_per_worker: config.rows_per_worker,
        phase_times: r.times,
        result_rows: r.rows,
        seed: config.seed,
    })
}

fn bench_rank(ctx: &mut WorkerContext, op: BenchOp, rpw: usize) -> Result<RankResult> {
    let (me, w, seed) = (ctx.rank(), ctx.world_size(), ctx.seed());
    let global = (w * rpw) as u64;
    let first = (me * rpw) as u64;
    let left = bench_table(seed, 0, "lv", first, rpw, 2 * global)?;
    let right = if op == BenchOp::Join {
        Some(bench_table(seed, 1, "rv", first, rpw, 2 * global)?)
    } else {
        None
    };
    ctx.comm_mut().barrier()?;
    ctx.reset_phase_times();

    let (times, rows, ok) = match op {
        BenchOp::Allreduce => {
            let start = Instant::now();
            let values = NumericArray::Int64((0..rpw).map(|i| left.column(1).i64_at(i)).collect());
            let local = start.elapsed();
            let start = Instant::now();
            let sum = allreduce(ctx.comm_mut(), &values, ReduceOp::Sum)?;
            let times = PhaseTimes {
                partition: Duration::ZERO,
                exchange: start.elapsed(),
                local,
            };
            let ok = check_allreduce(ctx, &values, &sum)?;
            (times, sum.len() as u64, ok)
        }
        _ => {
            let out = match op {
                BenchOp::Join => dist_join(
                    ctx,
                    &left,
                    right.as_ref().unwrap(),
                    &JoinSpec::new(JoinType::Inner, &["k"], &["k"]),
                )?,
                BenchOp::Shuffle => shuffle(ctx, &left, &["k"])?,
                BenchOp::Sort => dist_sort(ctx, &left, &SortSpec::asc(&["k"]))?,
                _ => dist_groupby_aggregate(ctx, &left, &groupby_spec())?,
            };
            let times = ctx.phase_times();
            let rows = allreduce(
                ctx.comm_mut(),
                &NumericArray::Int64(vec![out.num_rows() as i64]),
                ReduceOp::Sum,
            )?;
            let ok = check_sample(ctx, op, &left, right.as_ref(), &out)?;
            (times, rows.as_i64().unwrap()[0] as u64, ok)
        }
    };

    let slowest = allreduce(
        ctx.comm_mut(),
        &NumericArray::Int64(vec![
            times.partition.as_nanos() as i64,
            times.exchange.as_nanos() as i64,
            times.local.as_nanos() as i64,
        ]),
        ReduceOp::Max,
    )?;
    let ns = |i: usize| Duration::from_nanos(slowest.as_i64().unwrap()[i] as u64);
    Ok(RankResult {
        times: PhaseTimes {
            partition: ns(0),
            exchange: ns(1),
            local: ns(2),
        },
        rows,
        spot_check: ok,
    })
}

fn groupby_spec() -> AggSpec {
    AggSpec::new(
        &["k"],
        vec![
            Aggregation::new("lv", AggFunc::Sum, "sum"),
            Aggregation::new("lv", AggFunc::Count, "count"),
        ],
    )
}

/// Evenly spaced rows of `t`.
fn sample(t: &Table) -> Result<Table> {
    let n = t.num_rows();
    let idx: Vec<usize> = (0..SAMPLES_PER_RANK.min(n))
        .map(|i| i * n / SAMPLES_PER_RANK.min(n))
        .collect();
    t.take(&idx)
}

fn pairs(t: &Table, value_col: usize) -> HashSet<(i64, i64)> {
    (0..t.num_rows())
        .map(|i| (t.column(0).i64_at(i), t.column(value_col).i64_at(i)))
        .collect()
}

/// Every rank's sampled output rows, checked by all ranks against their
/// own input: each sampled row must be explained by some rank's input.
fn check_sample(
    ctx: &mut WorkerContext,
    op: BenchOp,
    left: &Table,
    right: Option<&Table>,
    out: &Table,
) -> Result<bool> {
    let mut locally_sorted = true;
    if op == BenchOp::Sort {
        let k = out.column(0);
        locally_sorted = (1..out.num_rows()).all(|i| k.i64_at(i - 1) <= k.i64_at(i));
    }
    let mine = sample(out)?;
    let all = allgather_bytes(ctx.comm_mut(), serialize_table(&mine))?;
    let samples = concat_tables(
        &all.iter()
            .map(|b| deserialize_table(b))
            .collect::<Result<Vec<_>>>()?,
    )?;

    // Per sample: [left evidence, right evidence] for joins, [sum, count]
    // partials for groupby, [found] otherwise.
    let width = if matches!(op, BenchOp::Join | BenchOp::Groupby) {
        2
    } else {
        1
    };
    let mut evidence = vec![0i64; samples.num_rows() * width];
    let lp = pairs(left, 1);
    if op == BenchOp::Groupby {
        let mut partial: HashMap<i64, (i64, i64)> = HashMap::new();
        for i in 0..left.num_rows() {
            let e = partial.entry(left.column(0).i64_at(i)).or_default();
            e.0 = e.0.wrapping_add(left.column(1).i64_at(i));
            e.1 += 1;
        }
        for s in 0..samples.num_rows() {
            let (sum, count) = partial
                .get(&samples.column(0).i64_at(s))
                .copied()
                .unwrap_or_default();
            evidence[2 * s] = sum;
            evidence[2 * s + 1] = count;
        }
    } else {
        let rp = right.map(|r| pairs(r, 1));
        for s in 0..samples.num_rows() {
            let k = samples.column(0).i64_at(s);
            evidence[s * width] = lp.contains(&(k, samples.column(1).i64_at(s))) as i64;
            if let Some(rp) = &rp {
                evidence[s * width + 1] = rp.contains(&(k, samples.column(2).i64_at(s))) as i64;
            }
        }
    }
    let summed = allreduce(
        ctx.comm_mut(),
        &NumericArray::Int64(evidence),
        ReduceOp::Sum,
    )?;
    let summed = summed.as_i64().unwrap();
    let ok = (0..samples.num_rows()).all(|s| match op {
        BenchOp::Groupby => {
            summed[2 * s] == samples.column(1).i64_at(s)
                && summed[2 * s + 1] == samples.column(2).i64_at(s)
        }
        _ => summed[s * width..(s + 1) * width].iter().all(|&e| e >= 1),
    });
    let flags = allreduce(
        ctx.comm_mut(),
        &NumericArray::Int64(vec![locally_sorted as i64]),
        ReduceOp::Min,
    )?;
    Ok(ok && flags.as_i64().unwrap()[0] == 1)
}

/// Recompute a few sampled elements of the allreduce result.
fn check_allreduce(
    ctx: &mut WorkerContext,
    values: &NumericArray,
    sum: &NumericArray,
) -> Result<bool> {
    let (vals, sums) = (values.as_i64().unwrap(), sum.as_i64().unwrap());
    let n = vals.len();
    let idx: Vec<usize> = (0..SAMPLES_PER_RANK.min(n))
        .map(|i| i * n / SAMPLES_PER_RANK.min(n))
        .collect();
    let picked = NumericArray::Int64(idx.iter().map(|&i| vals[i]).collect());
    let again = allreduce(ctx.comm_mut(), &picked, ReduceOp::Sum)?;
    Ok(idx
        .iter()
        .zip(again.as_i64().unwrap())
        .all(|(&i, &s)| sums[i] == s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(op: BenchOp, workers: usize, rpw: usize, seed: u64) -> BenchReport {
        let mut c = RunConfig::inproc(workers);
        c.rows_per_worker = rpw;
        c.seed = seed;
        cmd_bench(&c, op).unwrap()
    }

    #[test]
    fn report_shape() {
        let r = run(BenchOp::Join, 2, 1000, 1);
        let v = r.to_json();
        for phase in ["partition", "exchange", "local"] {
            assert!(v["phase_times_ms"][phase].as_f64().unwrap() >= 0.0);
        }
        assert!(r.phase_times.total() > Duration::ZERO);
        assert_eq!(v["operator"], "join");
        assert_eq!(v["rows_per_worker"], 1000);
    }

    #[test]
    fn result_rows_do_not_depend_on_world_size() {
        for op in [
            BenchOp::Join,
            BenchOp::Shuffle,
            BenchOp::Sort,
            BenchOp::Groupby,
        ] {
            let one = run(op, 1, 4000, 3).result_rows;
            let four = run(op, 4, 1000, 3).result_rows;
            assert_eq!(one, four, "{op:?}");
            assert_eq!(run(op, 4, 1000, 3).result_rows, four);
        }
        assert_eq!(run(BenchOp::Allreduce, 3, 500, 0).result_rows, 500);
    }

    #[test]
    fn zero_rows_is_a_usage_error() {
        let mut c = RunConfig::inproc(1);
        c.rows_per_worker = 0;
        assert!(matches!(
            cmd_bench(&c, BenchOp::Sort),
            Err(CliError::Usage(_))
        ));
    }
}
