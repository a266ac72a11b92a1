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

//! Brute-force reference implementations. They work on materialized rows
//! with straightforward loops and share no code with the engine's operators.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use hptmt_core::collectives::{NumericArray, ReduceOp};
use hptmt_core::columnar::{canonicalize, encode_row_key, DataType, Field, Scalar, Schema, Table};
use hptmt_core::relational::{AggFunc, Comparison, JoinType};

pub type Row = Vec<Option<Scalar>>;

/// Value identity used by set operators, grouping and join matching:
/// `-0.0 == +0.0`, all NaNs are equal, nulls equal nulls.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CellKey {
    Null,
    Int(i64),
    Float(u64),
    Bool(bool),
    Str(String),
}

pub fn cell_key(v: &Option<Scalar>) -> CellKey {
    match v {
        None => CellKey::Null,
        Some(Scalar::Int64(x)) => CellKey::Int(*x),
        Some(Scalar::Float64(x)) if x.is_nan() => CellKey::Float(f64::NAN.to_bits()),
        Some(Scalar::Float64(x)) if *x == 0.0 => CellKey::Float(0),
        Some(Scalar::Float64(x)) => CellKey::Float(x.to_bits()),
        Some(Scalar::Bool(x)) => CellKey::Bool(*x),
        Some(Scalar::Utf8(x)) => CellKey::Str(x.clone()),
    }
}

pub fn row_key(row: &[Option<Scalar>]) -> Vec<CellKey> {
    row.iter().map(cell_key).collect()
}

fn float_order(a: f64, b: f64) -> Ordering {
    if a.is_nan() || b.is_nan() {
        return b.is_nan().cmp(&a.is_nan()).reverse();
    }
    if a < b {
        Ordering::Less
    } else if a > b {
        Ordering::Greater
    } else {
        Ordering::Equal
    }
}

/// The sort order: values ascending (or descending), then NaN, then null,
/// in both directions.
pub fn sort_cmp(a: &Option<Scalar>, b: &Option<Scalar>, descending: bool) -> Ordering {
    let rank = |v: &Option<Scalar>| match v {
        None => 2,
        Some(Scalar::Float64(x)) if x.is_nan() => 1,
        _ => 0,
    };
    let (ra, rb) = (rank(a), rank(b));
    if ra != 0 || rb != 0 {
        return ra.cmp(&rb);
    }
    let o = match (a, b) {
        (Some(Scalar::Int64(x)), Some(Scalar::Int64(y))) => x.cmp(y),
        (Some(Scalar::Float64(x)), Some(Scalar::Float64(y))) => float_order(*x, *y),
        (Some(Scalar::Bool(x)), Some(Scalar::Bool(y))) => x.cmp(y),
        (Some(Scalar::Utf8(x)), Some(Scalar::Utf8(y))) => x.as_bytes().cmp(y.as_bytes()),
        _ => panic!("mixed types in one column"),
    };
    if descending {
        o.reverse()
    } else {
        o
    }
}

pub fn to_table(schema: &Schema, rows: &[Row]) -> Table {
    Table::from_rows(schema.clone(), rows).expect("oracle rows match schema")
}

/// Same rows in the same order, comparing values by their canonical key.
pub fn same_sequence(a: &Table, b: &Table) -> bool {
    if a.schema() != b.schema() || a.num_rows() != b.num_rows() {
        return false;
    }
    let all: Vec<usize> = (0..a.num_columns()).collect();
    (0..a.num_rows()).all(|r| encode_row_key(a, r, &all) == encode_row_key(b, r, &all))
}

/// Equal as multisets of rows.
pub fn same_multiset(a: &Table, b: &Table) -> bool {
    same_sequence(&canonicalize(a), &canonicalize(b))
}

// ---- relational ----

/// Fields of `a` then `b`; a `b` name already taken gets `_r` appended until
/// it is free.
pub fn combined_schema(a: &Schema, b: &[Field]) -> Schema {
    let mut fields: Vec<Field> = a.fields().to_vec();
    for f in b {
        let mut name = f.name.clone();
        while fields.iter().any(|g| g.name == name) {
            name.push_str("_r");
        }
        fields.push(Field::new(name, f.dtype));
    }
    Schema::new(fields).expect("names made unique")
}

fn compare_literal(v: &Option<Scalar>, lit: &Scalar) -> Option<Ordering> {
    let num = |s: &Scalar| match s {
        Scalar::Int64(x) => Some(*x as f64),
        Scalar::Float64(x) => Some(*x),
        _ => None,
    };
    match (v.as_ref()?, lit) {
        (Scalar::Int64(a), Scalar::Int64(b)) => Some(a.cmp(b)),
        (Scalar::Bool(a), Scalar::Bool(b)) => Some(a.cmp(b)),
        (Scalar::Utf8(a), Scalar::Utf8(b)) => Some(a.as_bytes().cmp(b.as_bytes())),
        (a, b) => num(a)?.partial_cmp(&num(b)?),
    }
}

/// Row-by-row interpreter for conjunctions of `column cmp literal`.
pub fn select(rows: &[Row], atoms: &[(usize, Comparison, Scalar)]) -> Vec<Row> {
    rows.iter()
        .filter(|row| {
            atoms.iter().all(|(c, cmp, lit)| {
                if row[*c].is_none() {
                    return false;
                }
                let ord = compare_literal(&row[*c], lit);
                match cmp {
                    Comparison::Eq => ord == Some(Ordering::Equal),
                    Comparison::Ne => ord != Some(Ordering::Equal),
                    Comparison::Lt => ord == Some(Ordering::Less),
                    Comparison::Le => matches!(ord, Some(Ordering::Less | Ordering::Equal)),
                    Comparison::Gt => ord == Some(Ordering::Greater),
                    Comparison::Ge => matches!(ord, Some(Ordering::Greater | Ordering::Equal)),
                }
            })
        })
        .cloned()
        .collect()
}

pub fn project(rows: &[Row], cols: &[usize]) -> Vec<Row> {
    rows.iter()
        .map(|r| cols.iter().map(|&c| r[c].clone()).collect())
        .collect()
}

fn dedup<'a>(
    rows: impl Iterator<Item = &'a Row>,
    keep: impl Fn(&Vec<CellKey>) -> bool,
) -> Vec<Row> {
    let mut seen = HashSet::new();
    rows.filter(|r| {
        let k = row_key(r);
        keep(&k) && seen.insert(k)
    })
    .cloned()
    .collect()
}

pub fn distinct(rows: &[Row]) -> Vec<Row> {
    dedup(rows.iter(), |_| true)
}

pub fn union(a: &[Row], b: &[Row]) -> Vec<Row> {
    dedup(a.iter().chain(b), |_| true)
}

pub fn difference(a: &[Row], b: &[Row]) -> Vec<Row> {
    let other: HashSet<Vec<CellKey>> = b.iter().map(|r| row_key(r)).collect();
    dedup(a.iter(), |k| !other.contains(k))
}

pub fn intersect(a: &[Row], b: &[Row]) -> Vec<Row> {
    let other: HashSet<Vec<CellKey>> = b.iter().map(|r| row_key(r)).collect();
    dedup(a.iter(), |k| other.contains(k))
}

pub fn cartesian_product(a: &[Row], b: &[Row]) -> Vec<Row> {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            out.push(x.iter().chain(y).cloned().collect());
        }
    }
    out
}

/// Nested-loop equi-join. Output columns: all of `a`, then `b` without its
/// key columns. A right row without a match carries its key values in the
/// left key columns.
pub fn join(
    a: &[Row],
    b: &[Row],
    a_width: usize,
    b_width: usize,
    lk: &[usize],
    rk: &[usize],
    jt: JoinType,
) -> Vec<Row> {
    let b_rest: Vec<usize> = (0..b_width).filter(|c| !rk.contains(c)).collect();
    let matches = |x: &Row, y: &Row| {
        lk.iter()
            .zip(rk)
            .all(|(&i, &j)| x[i].is_some() && y[j].is_some() && cell_key(&x[i]) == cell_key(&y[j]))
    };
    let mut out = Vec::new();
    let mut b_used = vec![false; b.len()];
    for x in a {
        let mut any = false;
        for (j, y) in b.iter().enumerate() {
            if matches(x, y) {
                any = true;
                b_used[j] = true;
                out.push(
                    x.iter()
                        .cloned()
                        .chain(b_rest.iter().map(|&c| y[c].clone()))
                        .collect(),
                );
            }
        }
        if !any && matches!(jt, JoinType::Left | JoinType::FullOuter) {
            out.push(
                x.iter()
                    .cloned()
                    .chain(b_rest.iter().map(|_| None))
                    .collect(),
            );
        }
    }
    if matches!(jt, JoinType::Right | JoinType::FullOuter) {
        for (j, y) in b.iter().enumerate() {
            if !b_used[j] {
                let mut left: Row = vec![None; a_width];
                for (&i, &k) in lk.iter().zip(rk) {
                    left[i] = y[k].clone();
                }
                out.push(
                    left.into_iter()
                        .chain(b_rest.iter().map(|&c| y[c].clone()))
                        .collect(),
                );
            }
        }
    }
    out
}

fn fold(func: AggFunc, dtype: DataType, values: &[&Scalar]) -> Option<Scalar> {
    match func {
        AggFunc::Count => Some(Scalar::Int64(values.len() as i64)),
        _ if values.is_empty() => None,
        AggFunc::Sum | AggFunc::Prod => Some(match dtype {
            DataType::Int64 => {
                let mut acc: i64 = if func == AggFunc::Sum { 0 } else { 1 };
                for v in values {
                    let Scalar::Int64(x) = v else { unreachable!() };
                    acc = if func == AggFunc::Sum {
                        acc.wrapping_add(*x)
                    } else {
                        acc.wrapping_mul(*x)
                    };
                }
                Scalar::Int64(acc)
            }
            _ => {
                let mut acc: f64 = if func == AggFunc::Sum { 0.0 } else { 1.0 };
                for v in values {
                    let Scalar::Float64(x) = v else {
                        unreachable!()
                    };
                    acc = if func == AggFunc::Sum {
                        acc + x
                    } else {
                        acc * x
                    };
                }
                Scalar::Float64(acc)
            }
        }),
        AggFunc::Min | AggFunc::Max => {
            let want = if func == AggFunc::Min {
                Ordering::Less
            } else {
                Ordering::Greater
            };
            let mut best = values[0];
            for v in &values[1..] {
                if sort_cmp(&Some((*v).clone()), &Some(best.clone()), false) == want {
                    best = v;
                }
            }
            Some(best.clone())
        }
    }
}

/// Dictionary-of-lists grouping: groups in first-appearance order, each
/// aggregate folded over the group's non-null values in row order.
pub fn groupby(
    rows: &[Row],
    keys: &[usize],
    aggs: &[(usize, AggFunc)],
    dtypes: &[DataType],
) -> Vec<Row> {
    let mut order: Vec<Vec<CellKey>> = Vec::new();
    let mut groups: HashMap<Vec<CellKey>, Vec<&Row>> = HashMap::new();
    for r in rows {
        let k: Vec<CellKey> = keys.iter().map(|&c| cell_key(&r[c])).collect();
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    if keys.is_empty() && order.is_empty() {
        order.push(vec![]);
        groups.insert(vec![], vec![]);
    }
    order
        .iter()
        .map(|k| {
            let members = &groups[k];
            let mut out: Row = keys.iter().map(|&c| members[0][c].clone()).collect();
            for &(c, f) in aggs {
                let vals: Vec<&Scalar> = members.iter().filter_map(|r| r[c].as_ref()).collect();
                out.push(fold(f, dtypes[c], &vals));
            }
            out
        })
        .collect()
}

/// Whole-table aggregate of column `col` when each partition is folded on
/// its own and the partials are then folded in partition order. An empty
/// partition contributes the operator's identity.
pub fn partitioned_aggregate(
    parts: &[Vec<Row>],
    col: usize,
    func: AggFunc,
    dtype: DataType,
) -> Option<Scalar> {
    let count: usize = parts
        .iter()
        .map(|p| p.iter().filter(|r| r[col].is_some()).count())
        .sum();
    if func == AggFunc::Count {
        return Some(Scalar::Int64(count as i64));
    }
    if count == 0 {
        return None;
    }
    let op = match func {
        AggFunc::Sum => ReduceOp::Sum,
        AggFunc::Prod => ReduceOp::Prod,
        AggFunc::Min => ReduceOp::Min,
        _ => ReduceOp::Max,
    };
    let partials: Vec<Scalar> = parts
        .iter()
        .map(|p| {
            let vals: Vec<&Scalar> = p.iter().filter_map(|r| r[col].as_ref()).collect();
            fold(func, dtype, &vals).unwrap_or(match (dtype, op) {
                (DataType::Int64, ReduceOp::Sum) => Scalar::Int64(0),
                (DataType::Int64, ReduceOp::Prod) => Scalar::Int64(1),
                (DataType::Int64, ReduceOp::Min) => Scalar::Int64(i64::MAX),
                (DataType::Int64, ReduceOp::Max) => Scalar::Int64(i64::MIN),
                (_, ReduceOp::Sum) => Scalar::Float64(0.0),
                (_, ReduceOp::Prod) => Scalar::Float64(1.0),
                (_, ReduceOp::Min) => Scalar::Float64(f64::NAN),
                (_, ReduceOp::Max) => Scalar::Float64(f64::NEG_INFINITY),
            })
        })
        .collect();
    let mut acc = partials[0].clone();
    for p in &partials[1..] {
        acc = match (acc, p) {
            (Scalar::Int64(a), Scalar::Int64(b)) => Scalar::Int64(apply_i64(op, a, *b)),
            (Scalar::Float64(a), Scalar::Float64(b)) => Scalar::Float64(apply_f64(op, a, *b)),
            _ => unreachable!("numeric partials"),
        };
    }
    Some(acc)
}

/// Stable comparison sort.
pub fn sort(rows: &[Row], keys: &[(usize, bool)]) -> Vec<Row> {
    let mut out = rows.to_vec();
    out.sort_by(|x, y| {
        keys.iter()
            .map(|&(c, desc)| sort_cmp(&x[c], &y[c], desc))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    });
    out
}

// ---- collectives ----

fn apply_i64(op: ReduceOp, a: i64, b: i64) -> i64 {
    match op {
        ReduceOp::Sum => a.wrapping_add(b),
        ReduceOp::Prod => a.wrapping_mul(b),
        ReduceOp::Min => a.min(b),
        ReduceOp::Max => a.max(b),
    }
}

fn apply_f64(op: ReduceOp, a: f64, b: f64) -> f64 {
    match op {
        ReduceOp::Sum => a + b,
        ReduceOp::Prod => a * b,
        ReduceOp::Min if float_order(b, a) == Ordering::Less => b,
        ReduceOp::Max if float_order(b, a) == Ordering::Greater => b,
        _ => a,
    }
}

/// Element-wise fold of every rank's array in rank order.
pub fn reduce(inputs: &[NumericArray], op: ReduceOp) -> NumericArray {
    let mut acc = inputs[0].clone();
    for next in &inputs[1..] {
        match (&mut acc, next) {
            (NumericArray::Int64(a), NumericArray::Int64(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = apply_i64(op, *x, *y);
                }
            }
            (NumericArray::Float64(a), NumericArray::Float64(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = apply_f64(op, *x, *y);
                }
            }
            _ => panic!("mixed dtypes"),
        }
    }
    acc
}

/// Bit equality of reduction results, except that any two NaNs match: the
/// sign and payload of a NaN produced by arithmetic are unspecified.
pub fn same_reduction(a: &NumericArray, b: &NumericArray) -> bool {
    match (a, b) {
        (NumericArray::Float64(x), NumericArray::Float64(y)) => {
            x.len() == y.len()
                && x.iter()
                    .zip(y)
                    .all(|(p, q)| p.to_bits() == q.to_bits() || (p.is_nan() && q.is_nan()))
        }
        _ => a.bit_eq(b),
    }
}

pub fn concat(inputs: &[NumericArray]) -> NumericArray {
    match &inputs[0] {
        NumericArray::Int64(_) => NumericArray::Int64(
            inputs
                .iter()
                .flat_map(|a| a.as_i64().unwrap().iter().copied())
                .collect(),
        ),
        NumericArray::Float64(_) => NumericArray::Float64(
            inputs
                .iter()
                .flat_map(|a| a.as_f64().unwrap().iter().copied())
                .collect(),
        ),
    }
}
