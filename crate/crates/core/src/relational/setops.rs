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

//! Set operators with DISTINCT semantics (nulls equal nulls) and the cross
//! product.

use std::collections::HashSet;

use crate::columnar::{EncodedKeys, Field, Schema, Table};
use crate::error::{Error, Result};

fn all_columns(t: &Table) -> Vec<usize> {
    (0..t.num_columns()).collect()
}

fn check_schemas(a: &Table, b: &Table) -> Result<()> {
    if a.schema() != b.schema() {
        return Err(Error::SchemaMismatch(format!(
            "{} vs {}",
            a.schema(),
            b.schema()
        )));
    }
    Ok(())
}

/// Distinct rows in first-occurrence order.
pub fn distinct(table: &Table) -> Table {
    let keys = EncodedKeys::encode(table, &all_columns(table));
    let mut seen = HashSet::with_capacity(table.num_rows());
    let keep: Vec<usize> = (0..table.num_rows())
        .filter(|&r| seen.insert(keys.get(r)))
        .collect();
    table.take_unchecked(&keep)
}

/// Distinct rows of `a` followed by distinct rows of `b` not already seen.
pub fn union(a: &Table, b: &Table) -> Result<Table> {
    check_schemas(a, b)?;
    let cols = all_columns(a);
    let ka = EncodedKeys::encode(a, &cols);
    let kb = EncodedKeys::encode(b, &cols);
    let mut seen = HashSet::with_capacity(a.num_rows() + b.num_rows());
    let keep_a: Vec<usize> = (0..a.num_rows())
        .filter(|&r| seen.insert(ka.get(r)))
        .collect();
    let keep_b: Vec<usize> = (0..b.num_rows())
        .filter(|&r| seen.insert(kb.get(r)))
        .collect();
    crate::columnar::concat_tables(&[a.take_unchecked(&keep_a), b.take_unchecked(&keep_b)])
}

/// Distinct rows of `a` that do not occur in `b`.
pub fn difference(a: &Table, b: &Table) -> Result<Table> {
    check_schemas(a, b)?;
    let cols = all_columns(a);
    let ka = EncodedKeys::encode(a, &cols);
    let kb = EncodedKeys::encode(b, &cols);
    let exclude: HashSet<&[u8]> = (0..b.num_rows()).map(|r| kb.get(r)).collect();
    let mut seen = HashSet::new();
    let keep: Vec<usize> = (0..a.num_rows())
        .filter(|&r| !exclude.contains(ka.get(r)) && seen.insert(ka.get(r)))
        .collect();
    Ok(a.take_unchecked(&keep))
}

/// Distinct rows of `a` that also occur in `b`.
pub fn intersect(a: &Table, b: &Table) -> Result<Table> {
    check_schemas(a, b)?;
    let cols = all_columns(a);
    let ka = EncodedKeys::encode(a, &cols);
    let kb = EncodedKeys::encode(b, &cols);
    let present: HashSet<&[u8]> = (0..b.num_rows()).map(|r| kb.get(r)).collect();
    let mut seen = HashSet::new();
    let keep: Vec<usize> = (0..a.num_rows())
        .filter(|&r| present.contains(ka.get(r)) && seen.insert(ka.get(r)))
        .collect();
    Ok(a.take_unchecked(&keep))
}

/// Give `name` a `_r` suffix until it no longer collides.
pub(crate) fn disambiguate(taken: &HashSet<String>, name: &str) -> String {
    let mut n = name.to_string();
    while taken.contains(&n) {
        n.push_str("_r");
    }
    n
}

/// Schema of `a`'s fields followed by `b`'s, renaming collisions.
pub(crate) fn combined_schema<'a>(
    a: &Schema,
    b_fields: impl Iterator<Item = &'a Field>,
) -> Result<Schema> {
    let mut fields: Vec<Field> = a.fields().to_vec();
    let mut taken: HashSet<String> = fields.iter().map(|f| f.name.clone()).collect();
    for f in b_fields {
        let name = disambiguate(&taken, &f.name);
        taken.insert(name.clone());
        fields.push(Field::new(name, f.dtype));
    }
    Schema::new(fields)
}

/// Every pairing of a row of `a` with a row of `b`, `a`-major.
pub fn cartesian_product(a: &Table, b: &Table) -> Result<Table> {
    let schema = combined_schema(a.schema(), b.schema().fields().iter())?;
    let (na, nb) = (a.num_rows(), b.num_rows());
    let total = na
        .checked_mul(nb)
        .ok_or_else(|| Error::InvalidArgument("product too large".into()))?;
    let ia: Vec<usize> = (0..total).map(|k| k / nb.max(1)).collect();
    let ib: Vec<usize> = (0..total).map(|k| k % nb.max(1)).collect();
    let left = a.take_unchecked(&ia);
    let right = b.take_unchecked(&ib);
    let (_, mut columns) = left.into_parts();
    columns.extend(right.into_parts().1);
    Table::new(schema, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::{ColumnArray, DataType};

    fn ints(v: &[Option<i64>]) -> Table {
        Table::new(
            Schema::of(&[("x", DataType::Int64)]).unwrap(),
            vec![ColumnArray::from_opt_i64(v)],
        )
        .unwrap()
    }

    #[test]
    fn union_removes_duplicates() {
        let u = union(&ints(&[Some(1), Some(2)]), &ints(&[Some(2), Some(3)])).unwrap();
        assert_eq!(u, ints(&[Some(1), Some(2), Some(3)]));
    }

    #[test]
    fn union_with_self_is_distinct() {
        let t = ints(&[Some(1), None, Some(1), None]);
        assert_eq!(union(&t, &t).unwrap(), distinct(&t));
        assert_eq!(distinct(&t), ints(&[Some(1), None]));
    }

    #[test]
    fn difference_and_intersect() {
        let a = ints(&[Some(1), Some(2), Some(3)]);
        assert_eq!(
            difference(&a, &ints(&[Some(2)])).unwrap(),
            ints(&[Some(1), Some(3)])
        );
        assert_eq!(difference(&a, &a).unwrap().num_rows(), 0);
        let i = intersect(&ints(&[Some(1), Some(2)]), &ints(&[Some(2), Some(3)])).unwrap();
        assert_eq!(i, ints(&[Some(2)]));
        assert_eq!(intersect(&a, &ints(&[])).unwrap().num_rows(), 0);
        // nulls match nulls in set operators
        assert_eq!(
            intersect(&ints(&[None]), &ints(&[None]))
                .unwrap()
                .num_rows(),
            1
        );
    }

    #[test]
    fn set_ops_check_schema() {
        let other = Table::new(
            Schema::of(&[("y", DataType::Int64)]).unwrap(),
            vec![ColumnArray::from_i64(&[1])],
        )
        .unwrap();
        assert!(union(&ints(&[]), &other).is_err());
        assert!(difference(&ints(&[]), &other).is_err());
        assert!(intersect(&ints(&[]), &other).is_err());
    }

    #[test]
    fn cross_product_shape() {
        let a = ints(&[Some(1), Some(2)]);
        let b = ints(&[Some(7), Some(8), Some(9)]);
        let p = cartesian_product(&a, &b).unwrap();
        assert_eq!(p.num_rows(), 6);
        assert_eq!(p.schema().field(1).name, "x_r");
        assert_eq!(p.row(4), vec![Some(2i64.into()), Some(8i64.into())]);
        assert_eq!(cartesian_product(&a, &ints(&[])).unwrap().num_rows(), 0);
    }
}
