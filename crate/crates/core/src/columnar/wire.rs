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

//! Binary table format shared by the shuffle exchange and spill files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "HPT1" | u32 column_count | u64 row_count
//! per column:
//!   u16 name_len | name bytes | u8 type tag | u8 has_validity
//!   [ceil(rows/8) validity bytes]
//!   Utf8:        (rows+1) x u32 offsets | u64 data_len | data
//!   fixed width: rows x width data bytes
//! ```
//!
//! The format is self-delimiting, so a file may hold several tables back to
//! back and be read with [`read_table`].

use std::io::{self, Read, Write};

use super::array::{bitmap_len, ColumnArray, DataType};
use super::table::{Field, Schema, Table};
use crate::error::{Error, ParseError, Result};

pub const MAGIC: &[u8; 4] = b"HPT1";

/// Exact encoded size of `table`.
pub fn encoded_len(table: &Table) -> usize {
    let mut n = 4 + 4 + 8;
    for (f, c) in table.schema().fields().iter().zip(table.columns()) {
        n += 2 + f.name.len() + 2;
        if c.validity().is_some() {
            n += bitmap_len(c.len());
        }
        n += match c.offsets() {
            Some(o) => o.len() * 4 + 8 + c.data().len(),
            None => c.data().len(),
        };
    }
    n
}

pub fn serialize_table(table: &Table) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(table));
    write_table(&mut out, table).expect("writing to a Vec cannot fail");
    out
}

pub fn write_table<W: Write>(w: &mut W, table: &Table) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(table.num_columns() as u32).to_le_bytes())?;
    w.write_all(&(table.num_rows() as u64).to_le_bytes())?;
    for (f, c) in table.schema().fields().iter().zip(table.columns()) {
        let name = f.name.as_bytes();
        let name_len = u16::try_from(name.len()).map_err(|_| {
            io::Error::new(
                io::ErrorKind::InvalidInput,
                "column name longer than 65535 bytes",
            )
        })?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[f.dtype.tag()])?;
        match c.validity() {
            Some(v) => {
                w.write_all(&[1])?;
                w.write_all(v)?;
            }
            None => w.write_all(&[0])?,
        }
        if let Some(offsets) = c.offsets() {
            let mut buf = Vec::with_capacity(offsets.len() * 4);
            for o in offsets {
                buf.extend_from_slice(&o.to_le_bytes());
            }
            w.write_all(&buf)?;
            w.write_all(&(c.data().len() as u64).to_le_bytes())?;
        }
        w.write_all(c.data())?;
    }
    Ok(())
}

struct Decoder<R> {
    inner: R,
}

impl<R: Read> Decoder<R> {
    fn exact<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.fill(&mut buf, what)?;
        Ok(buf)
    }

    fn fill(&mut self, buf: &mut [u8], what: &'static str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Parse(ParseError::Truncated(what)),
            _ => Error::Io(e),
        })
    }

    /// Reads `n` bytes without trusting `n` for the initial allocation.
    fn bytes(&mut self, n: u64, what: &'static str) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(n.min(1 << 20) as usize);
        let got = (&mut self.inner).take(n).read_to_end(&mut out)?;
        if (got as u64) < n {
            return Err(ParseError::Truncated(what).into());
        }
        Ok(out)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.exact::<1>(what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.exact(what)?))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.exact(what)?))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.exact(what)?))
    }

    fn table_after_magic(&mut self) -> Result<Table> {
        let column_count = self.u32("column count")?;
        let row_count = self.u64("row count")?;
        let rows = usize::try_from(row_count)
            .ok()
            .filter(|r| r.checked_mul(8).is_some())
            .ok_or(ParseError::RowCountOverflow(row_count))?;
        let mut fields = Vec::new();
        let mut columns = Vec::new();
        for _ in 0..column_count {
            let name_len = self.u16("column name length")?;
            let name = self.bytes(name_len as u64, "column name")?;
            let name =
                String::from_utf8(name).map_err(|_| ParseError::InvalidUtf8("column name"))?;
            let tag = self.u8("type tag")?;
            let dtype = DataType::from_tag(tag).ok_or(ParseError::InvalidTypeTag(tag))?;
            let validity = match self.u8("validity flag")? {
                0 => None,
                1 => Some(self.bytes(bitmap_len(rows) as u64, "validity bitmap")?),
                other => return Err(ParseError::InvalidValidityFlag(other).into()),
            };
            let (data, offsets) = match dtype.width() {
                Some(w) => (self.bytes((rows * w) as u64, "data buffer")?, None),
                None => {
                    let raw = self.bytes((rows as u64 + 1) * 4, "utf8 offsets")?;
                    let offsets: Vec<u32> = raw
                        .chunks_exact(4)
                        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    if offsets[0] != 0 {
                        return Err(ParseError::OffsetsOutOfRange(
                            "first offset is not zero".into(),
                        )
                        .into());
                    }
                    if let Some(i) = offsets.windows(2).position(|w| w[0] > w[1]) {
                        return Err(ParseError::NonMonotonicOffsets(i).into());
                    }
                    let data_len = self.u64("utf8 data length")?;
                    if data_len != offsets[rows] as u64 {
                        return Err(ParseError::OffsetsOutOfRange(format!(
                            "last offset {} but data length {data_len}",
                            offsets[rows]
                        ))
                        .into());
                    }
                    let data = self.bytes(data_len, "utf8 data")?;
                    for w in offsets.windows(2) {
                        if std::str::from_utf8(&data[w[0] as usize..w[1] as usize]).is_err() {
                            return Err(ParseError::InvalidUtf8("utf8 value").into());
                        }
                    }
                    (data, Some(offsets))
                }
            };
            if dtype == DataType::Bool {
                if let Some(&b) = data.iter().find(|&&b| b > 1) {
                    return Err(ParseError::InvalidBool(b).into());
                }
            }
            let column = ColumnArray::from_parts(dtype, rows, validity, data, offsets)
                .map_err(|e| ParseError::Schema(e.to_string()))?;
            fields.push(Field::new(name, dtype));
            columns.push(column);
        }
        let schema = Schema::new(fields).map_err(|e| ParseError::Schema(e.to_string()))?;
        if columns.is_empty() && rows != 0 {
            return Err(ParseError::Schema("rows without columns".into()).into());
        }
        Ok(Table::new(schema, columns).map_err(|e| ParseError::Schema(e.to_string()))?)
    }
}

/// Decode one table occupying the whole buffer.
pub fn deserialize_table(bytes: &[u8]) -> Result<Table> {
    let mut cursor = bytes;
    let table = read_table(&mut cursor)?.ok_or(ParseError::Truncated("magic"))?;
    if !cursor.is_empty() {
        return Err(ParseError::TrailingBytes(cursor.len()).into());
    }
    Ok(table)
}

/// Read the next table from a stream; `Ok(None)` on a clean end of input.
pub fn read_table<R: Read>(r: &mut R) -> Result<Option<Table>> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut magic[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if got == 0 {
        return Ok(None);
    }
    if got < 4 {
        return Err(ParseError::Truncated("magic").into());
    }
    if &magic != MAGIC {
        return Err(ParseError::BadMagic(magic).into());
    }
    Decoder { inner: r }.table_after_magic().map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::ColumnArray;

    #[test]
    fn empty_table_header() {
        let t = Table::empty(Schema::of(&[("x", DataType::Int64)]).unwrap());
        let b = serialize_table(&t);
        assert_eq!(&b[..4], b"HPT1");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 0);
        // name "x", tag 0, no validity
        assert_eq!(&b[16..], &[1, 0, b'x', 0, 0]);
        assert_eq!(deserialize_table(&b).unwrap(), t);
    }

    #[test]
    fn all_null_utf8_column() {
        let col = ColumnArray::nulls(DataType::Utf8, 3);
        let t = Table::new(Schema::of(&[("s", DataType::Utf8)]).unwrap(), vec![col]).unwrap();
        let b = serialize_table(&t);
        let mut expected = b"HPT1".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&3u64.to_le_bytes());
        expected.extend_from_slice(&[1, 0, b's', 3, 1, 0]);
        expected.extend_from_slice(&[0u8; 16]);
        expected.extend_from_slice(&0u64.to_le_bytes());
        assert_eq!(b, expected);
        assert_eq!(encoded_len(&t), b.len());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let t = Table::empty(Schema::of(&[("x", DataType::Int64)]).unwrap());
        let mut b = serialize_table(&t);
        b[0] = b'X';
        assert!(matches!(
            deserialize_table(&b),
            Err(Error::Parse(ParseError::BadMagic(_)))
        ));
    }

    #[test]
    fn truncated_buffer_is_rejected() {
        let t = Table::new(
            Schema::of(&[("x", DataType::Int64)]).unwrap(),
            vec![ColumnArray::from_i64(&[1, 2, 3])],
        )
        .unwrap();
        let b = serialize_table(&t);
        for cut in 0..b.len() {
            let r = deserialize_table(&b[..cut]);
            assert!(
                matches!(r, Err(Error::Parse(ParseError::Truncated(_)))),
                "cut {cut}: {r:?}"
            );
        }
    }

    #[test]
    fn non_monotonic_offsets_are_rejected() {
        let col = ColumnArray::from_opt_str(&[Some("ab"), Some("c")]);
        let t = Table::new(Schema::of(&[("s", DataType::Utf8)]).unwrap(), vec![col]).unwrap();
        let mut b = serialize_table(&t);
        // header 16, name 2+1, tag, flag -> offsets start at 21: [0,2,3]
        let off = 21;
        b[off + 4..off + 8].copy_from_slice(&5u32.to_le_bytes());
        assert!(matches!(
            deserialize_table(&b),
            Err(Error::Parse(ParseError::NonMonotonicOffsets(1)))
        ));
    }

    #[test]
    fn huge_row_count_does_not_allocate() {
        let mut b = b"HPT1".to_vec();
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&(1u64 << 40).to_le_bytes());
        b.extend_from_slice(&[1, 0, b'x', 0, 0]);
        assert!(matches!(
            deserialize_table(&b),
            Err(Error::Parse(ParseError::Truncated(_)))
        ));
    }

    #[test]
    fn stream_of_tables() {
        let t = Table::new(
            Schema::of(&[("x", DataType::Float64)]).unwrap(),
            vec![ColumnArray::from_f64(&[1.5, -2.0])],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_table(&mut buf, &t).unwrap();
        write_table(&mut buf, &t.slice(1, 1)).unwrap();
        let mut r = &buf[..];
        assert_eq!(read_table(&mut r).unwrap().unwrap(), t);
        assert_eq!(read_table(&mut r).unwrap().unwrap(), t.slice(1, 1));
        assert!(read_table(&mut r).unwrap().is_none());
    }
}
