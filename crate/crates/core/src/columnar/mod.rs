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

//! Columnar table model: typed arrays with validity bitmaps, schemas,
//! canonical row keys and the binary wire format.

mod array;
mod rowkey;
mod table;
mod wire;

pub use array::{bitmap_len, ColumnArray, ColumnBuilder, DataType, Scalar};
pub use rowkey::{
    canonical_f64_bits, canonicalize, encode_row_key, encode_row_key_into, has_null_key, same_rows,
    EncodedKeys, RowKey, CANONICAL_NAN_BITS,
};
pub use table::{concat_tables, concat_with_schema, Field, Schema, Table, TableBuilder};
pub use wire::{deserialize_table, encoded_len, read_table, serialize_table, write_table, MAGIC};

/// `make_array`: build a column from optional scalars.
pub fn make_array(dtype: DataType, values: &[Option<Scalar>]) -> crate::Result<ColumnArray> {
    ColumnArray::from_scalars(dtype, values)
}

/// `take`: gather rows of `table` by position.
pub fn take(table: &Table, indices: &[usize]) -> crate::Result<Table> {
    table.take(indices)
}
