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

//! `hptmt mds`: embed the rows of a CSV file with distributed SMACOF.

use std::path::{Path, PathBuf};

use serde_json::json;

use hptmt_core::columnar::{ColumnArray, DataType, Field, Schema, Table};
use hptmt_core::mds::{row_range, run_mds, MdsResult};

use crate::config::{RunConfig, Transport};
use crate::csvio::{parse_schema_spec, read_csv, write_csv};
use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct MdsArgs {
    pub input: PathBuf,
    pub schema: String,
    /// Feature columns; all columns when empty.
    pub features: Vec<String>,
    pub dims: usize,
    pub iters: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdsReport {
    pub points: usize,
    pub dims: usize,
    pub workers: usize,
    pub seed: u64,
    pub result: MdsResult,
}

impl MdsReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "points": self.points,
            "dims": self.dims,
            "workers": self.workers,
            "seed": self.seed,
            "iterations": self.result.history.len(),
            "final_stress": self.result.history.last(),
        })
    }
}

/// Path of the stress history written next to the embedding.
pub fn stress_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".stress.csv");
    PathBuf::from(s)
}

pub fn embedding_table(result: &MdsResult) -> Table {
    let e = &result.embedding;
    let mut fields = vec![Field::new("index", DataType::Int64)];
    let mut cols = vec![ColumnArray::from_i64(&(0..e.n as i64).collect::<Vec<_>>())];
    for d in 0..e.dims {
        fields.push(Field::new(format!("x{d}"), DataType::Float64));
        cols.push(ColumnArray::from_f64(
            &(0..e.n).map(|i| e.point(i)[d]).collect::<Vec<_>>(),
        ));
    }
    Table::new(Schema::new(fields).expect("distinct names"), cols).expect("columns match")
}

pub fn history_table(result: &MdsResult) -> Table {
    let h = &result.history;
    Table::new(
        Schema::of(&[
            ("iteration", DataType::Int64),
            ("stress", DataType::Float64),
        ])
        .expect("static schema"),
        vec![
            ColumnArray::from_i64(&(1..=h.len() as i64).collect::<Vec<_>>()),
            ColumnArray::from_f64(h),
        ],
    )
    .expect("columns match")
}

pub fn cmd_mds(config: &RunConfig, args: &MdsArgs) -> CliResult<MdsReport> {
    if args.dims == 0 || args.iters == 0 {
        return Err(CliError::Usage(
            "--dims and --iters must be at least 1".into(),
        ));
    }
    let schema = parse_schema_spec(&args.schema)?;
    let table = read_csv(&args.input, &schema)?;
    let features: Vec<String> = if args.features.is_empty() {
        schema.fields().iter().map(|f| f.name.clone()).collect()
    } else {
        args.features.clone()
    };
    let names: Vec<&str> = features.iter().map(String::as_str).collect();
    let n = table.num_rows();
    let results = config.run(|ctx| {
        let (lo, hi) = row_range(n, ctx.world_size(), ctx.rank());
        run_mds(
            ctx,
            &table.slice(lo, hi - lo),
            &names,
            args.dims,
            args.iters,
            args.tol,
        )
    })?;
    let result = results.into_iter().next().expect("at least one rank");

    let writes = match &config.transport {
        Transport::InProc => true,
        Transport::Tcp { rank, .. } => *rank == 0,
    };
    if let (Some(out), true) = (&config.out, writes) {
        write_csv(&embedding_table(&result), out)?;
        write_csv(&history_table(&result), &stress_path(out))?;
    }
    Ok(MdsReport {
        points: n,
        dims: args.dims,
        workers: config.workers,
        seed: config.seed,
        result,
    })
}
