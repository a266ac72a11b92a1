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

//! Grouped and whole-table aggregation.

use std::cmp::Ordering;
use std::collections::HashMap;

use super::sort::compare_values;
use crate::collectives::ReduceOp;
use crate::columnar::{ColumnArray, ColumnBuilder, DataType, EncodedKeys, Field, Schema, Table};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Sum,
    Min,
    Max,
    Count,
    Prod,
}

impl AggFunc {
    pub const ALL: [AggFunc; 5] = [
        AggFunc::Sum,
        AggFunc::Min,
        AggFunc::Max,
        AggFunc::Count,
        AggFunc::Prod,
    ];

    /// Result type for an input column of type `input`.
    pub fn output_type(self, input: DataType) -> Result<DataType> {
        match self {
            AggFunc::Count => Ok(DataType::Int64),
            AggFunc::Min | AggFunc::Max => Ok(input),
            AggFunc::Sum | AggFunc::Prod if input.is_numeric() => Ok(input),
            AggFunc::Sum | AggFunc::Prod => Err(Error::InvalidArgument(format!(
                "{self:?} needs a numeric column, got {input}"
            ))),
        }
    }

    /// The function that merges partial results of `self`.
    pub fn combiner(self) -> AggFunc {
        match self {
            AggFunc::Count => AggFunc::Sum,
            other => other,
        }
    }

    pub fn reduce_op(self) -> ReduceOp {
        match self {
            AggFunc::Sum | AggFunc::Count => ReduceOp::Sum,
            AggFunc::Min => ReduceOp::Min,
            AggFunc::Max => ReduceOp::Max,
            AggFunc::Prod => ReduceOp::Prod,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Aggregation {
    pub column: String,
    pub func: AggFunc,
    pub output: String,
}

impl Aggregation {
    pub fn new(column: &str, func: AggFunc, output: &str) -> Self {
        Aggregation {
            column: column.into(),
            func,
            output: output.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggSpec {
    pub group_keys: Vec<String>,
    pub aggregates: Vec<Aggregation>,
}

impl AggSpec {
    pub fn new(group_keys: &[&str], aggregates: Vec<Aggregation>) -> Self {
        AggSpec {
            group_keys: group_keys.iter().map(|s| s.to_string()).collect(),
            aggregates,
        }
    }

    /// Key column indices, aggregate input indices and the output schema.
    pub fn resolve(&self, schema: &Schema) -> Result<(Vec<usize>, Vec<usize>, Schema)> {
        let keys = self
            .group_keys
            .iter()
            .map(|k| schema.index_of(k))
            .collect::<Result<Vec<_>>>()?;
        let mut fields: Vec<Field> = keys.iter().map(|&k| schema.field(k).clone()).collect();
        let mut inputs = Vec::with_capacity(self.aggregates.len());
        for a in &self.aggregates {
            let idx = schema.index_of(&a.column)?;
            fields.push(Field::new(
                a.output.clone(),
                a.func.output_type(schema.field(idx).dtype)?,
            ));
            inputs.push(idx);
        }
        Ok((keys, inputs, Schema::new(fields)?))
    }
}

/// Group id of every row (first-occurrence numbering) and one
/// representative row per group.
pub(crate) fn assign_groups(table: &Table, keys: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let n = table.num_rows();
    if keys.is_empty() {
        return (vec![0; n], vec![]);
    }
    let enc = EncodedKeys::encode(table, keys);
    let mut ids: HashMap<&[u8], usize> = HashMap::new();
    let mut reps = Vec::new();
    let groups = (0..n)
        .map(|r| {
            *ids.entry(enc.get(r)).or_insert_with(|| {
                reps.push(r);
                reps.len() - 1
            })
        })
        .collect();
    (groups, reps)
}

/// Fold one column per group, skipping nulls.
pub(crate) fn aggregate_column(
    col: &ColumnArray,
    func: AggFunc,
    groups: &[usize],
    ngroups: usize,
) -> ColumnArray {
    match func {
        AggFunc::Count => {
            let mut counts = vec![0i64; ngroups];
            for (r, &g) in groups.iter().enumerate() {
                if col.is_valid(r) {
                    counts[g] += 1;
                }
            }
            ColumnArray::from_i64(&counts)
        }
        AggFunc::Sum | AggFunc::Prod => {
            let op = func.reduce_op();
            let mut seen = vec![false; ngroups];
            let mut out = ColumnBuilder::with_capacity(col.dtype(), ngroups);
            match col.dtype() {
                DataType::Int64 => {
                    let mut acc = vec![op.identity_i64(); ngroups];
                    for (r, &g) in groups.iter().enumerate() {
                        if col.is_valid(r) {
                            acc[g] = op.apply_i64(acc[g], col.i64_at(r));
                            seen[g] = true;
                        }
                    }
                    for g in 0..ngroups {
                        if seen[g] {
                            out.push_i64(acc[g])
                        } else {
                            out.push_null()
                        }
                    }
                }
                DataType::Float64 => {
                    let mut acc = vec![op.identity_f64(); ngroups];
                    for (r, &g) in groups.iter().enumerate() {
                        if col.is_valid(r) {
                            acc[g] = op.apply_f64(acc[g], col.f64_at(r));
                            seen[g] = true;
                        }
                    }
                    for g in 0..ngroups {
                        if seen[g] {
                            out.push_f64(acc[g])
                        } else {
                            out.push_null()
                        }
                    }
                }
                other => unreachable!("{other} rejected by output_type"),
            }
            out.finish()
        }
        AggFunc::Min | AggFunc::Max => {
            let wanted = if func == AggFunc::Min {
                Ordering::Less
            } else {
                Ordering::Greater
            };
            let mut best: Vec<Option<usize>> = vec![None; ngroups];
            for (r, &g) in groups.iter().enumerate() {
                if !col.is_valid(r) {
                    continue;
                }
                match best[g] {
                    Some(b) if compare_values(col, r, col, b) != wanted => {}
                    _ => best[g] = Some(r),
                }
            }
            let mut out = ColumnBuilder::with_capacity(col.dtype(), ngroups);
            for b in best {
                match b {
                    Some(r) => out.append_from(col, r),
                    None => out.push_null(),
                }
            }
            out.finish()
        }
    }
}

/// One row per distinct group key (nulls form their own group), in
/// first-occurrence order. With no group keys the whole table is one group
/// and exactly one row is produced, even for empty input.
pub fn groupby_aggregate(table: &Table, spec: &AggSpec) -> Result<Table> {
    let (keys, inputs, schema) = spec.resolve(table.schema())?;
    let (groups, reps) = assign_groups(table, &keys);
    let ngroups = if keys.is_empty() { 1 } else { reps.len() };
    let mut columns: Vec<ColumnArray> = keys
        .iter()
        .map(|&k| table.column(k).take_unchecked(&reps))
        .collect();
    for (a, &idx) in spec.aggregates.iter().zip(&inputs) {
        columns.push(aggregate_column(
            table.column(idx),
            a.func,
            &groups,
            ngroups,
        ));
    }
    Table::new(schema, columns)
}

/// Whole-table aggregation: a single output row.
pub fn aggregate(table: &Table, aggregates: &[Aggregation]) -> Result<Table> {
    groupby_aggregate(
        table,
        &AggSpec {
            group_keys: vec![],
            aggregates: aggregates.to_vec(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::Scalar;

    fn kv() -> Table {
        Table::new(
            Schema::of(&[("k", DataType::Utf8), ("v", DataType::Int64)]).unwrap(),
            vec![
                ColumnArray::from_opt_str(&[Some("a"), Some("a"), Some("b")]),
                ColumnArray::from_i64(&[1, 2, 3]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn grouped_sum() {
        let out = groupby_aggregate(
            &kv(),
            &AggSpec::new(&["k"], vec![Aggregation::new("v", AggFunc::Sum, "s")]),
        )
        .unwrap();
        assert_eq!(
            out.rows(),
            vec![
                vec![Some(Scalar::Utf8("a".into())), Some(Scalar::Int64(3))],
                vec![Some(Scalar::Utf8("b".into())), Some(Scalar::Int64(3))]
            ]
        );
    }

    #[test]
    fn empty_input_rules() {
        let empty = kv().take(&[]).unwrap();
        let aggs: Vec<Aggregation> = AggFunc::ALL
            .iter()
            .map(|&f| Aggregation::new("v", f, &format!("{f:?}")))
            .collect();
        let grouped = groupby_aggregate(&empty, &AggSpec::new(&["k"], aggs.clone())).unwrap();
        assert_eq!(grouped.num_rows(), 0);
        let whole = aggregate(&empty, &aggs).unwrap();
        assert_eq!(whole.num_rows(), 1);
        assert_eq!(
            whole.row(0),
            vec![None, None, None, Some(Scalar::Int64(0)), None]
        );
    }

    #[test]
    fn nulls_are_skipped_and_null_keys_group() {
        let t = Table::new(
            Schema::of(&[("k", DataType::Int64), ("v", DataType::Float64)]).unwrap(),
            vec![
                ColumnArray::from_opt_i64(&[None, Some(1), None]),
                ColumnArray::from_opt_f64(&[Some(2.0), None, Some(f64::NAN)]),
            ],
        )
        .unwrap();
        let spec = AggSpec::new(
            &["k"],
            vec![
                Aggregation::new("v", AggFunc::Min, "mn"),
                Aggregation::new("v", AggFunc::Max, "mx"),
                Aggregation::new("v", AggFunc::Count, "c"),
                Aggregation::new("v", AggFunc::Sum, "s"),
            ],
        );
        let out = groupby_aggregate(&t, &spec).unwrap();
        assert_eq!(out.num_rows(), 2);
        assert_eq!(out.column(1).f64_at(0), 2.0);
        assert!(out.column(2).f64_at(0).is_nan());
        assert_eq!(out.column(3).i64_at(0), 2);
        assert!(out.column(4).f64_at(0).is_nan());
        assert_eq!(
            out.row(1),
            vec![
                Some(Scalar::Int64(1)),
                None,
                None,
                Some(Scalar::Int64(0)),
                None
            ]
        );
    }

    #[test]
    fn sum_on_text_is_rejected() {
        let r = groupby_aggregate(
            &kv(),
            &AggSpec::new(&[], vec![Aggregation::new("k", AggFunc::Sum, "s")]),
        );
        assert!(r.is_err());
        let ok = groupby_aggregate(
            &kv(),
            &AggSpec::new(&[], vec![Aggregation::new("k", AggFunc::Max, "m")]),
        )
        .unwrap();
        assert_eq!(ok.row(0), vec![Some(Scalar::Utf8("b".into()))]);
    }
}
