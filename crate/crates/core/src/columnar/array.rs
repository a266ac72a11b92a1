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

//! Typed column buffers with an optional validity bitmap.

use std::fmt;

use crate::error::{Error, Result};

/// Logical type of a column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DataType {
    Int64,
    Float64,
    Bool,
    Utf8,
}

impl DataType {
    /// Bytes per value for fixed-width types, `None` for `Utf8`.
    pub fn width(self) -> Option<usize> {
        match self {
            DataType::Int64 | DataType::Float64 => Some(8),
            DataType::Bool => Some(1),
            DataType::Utf8 => None,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            DataType::Int64 => 0,
            DataType::Float64 => 1,
            DataType::Bool => 2,
            DataType::Utf8 => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(DataType::Int64),
            1 => Some(DataType::Float64),
            2 => Some(DataType::Bool),
            3 => Some(DataType::Utf8),
            _ => None,
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Int64 | DataType::Float64)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DataType::Int64 => "i64",
            DataType::Float64 => "f64",
            DataType::Bool => "bool",
            DataType::Utf8 => "str",
        };
        f.write_str(s)
    }
}

/// A single non-null value.
#[derive(Clone, Debug, PartialEq)]
pub enum Scalar {
    Int64(i64),
    Float64(f64),
    Bool(bool),
    Utf8(String),
}

impl Scalar {
    pub fn dtype(&self) -> DataType {
        match self {
            Scalar::Int64(_) => DataType::Int64,
            Scalar::Float64(_) => DataType::Float64,
            Scalar::Bool(_) => DataType::Bool,
            Scalar::Utf8(_) => DataType::Utf8,
        }
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::Int64(v)
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Float64(v)
    }
}

impl From<bool> for Scalar {
    fn from(v: bool) -> Self {
        Scalar::Bool(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Utf8(v.to_string())
    }
}

#[inline]
pub(crate) fn bit_is_set(bitmap: &[u8], i: usize) -> bool {
    bitmap[i >> 3] & (1 << (i & 7)) != 0
}

/// Number of bytes needed for a bitmap covering `len` rows.
#[inline]
pub fn bitmap_len(len: usize) -> usize {
    len.div_ceil(8)
}

/// One column: contiguous value bytes, an optional validity bitmap
/// (LSB-first, 1 = present) and, for `Utf8`, `len + 1` offsets into `data`.
///
/// Null rows hold zeroed bytes (fixed width) or empty slices (`Utf8`). The
/// validity bitmap is only materialized when at least one row is null, so two
/// logically equal arrays are also byte-equal.
#[derive(Clone, PartialEq)]
pub struct ColumnArray {
    dtype: DataType,
    len: usize,
    validity: Option<Vec<u8>>,
    data: Vec<u8>,
    offsets: Option<Vec<u32>>,
}

impl fmt::Debug for ColumnArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for i in 0..self.len.min(32) {
            list.entry(&self.scalar_at(i));
        }
        list.finish()?;
        if self.len > 32 {
            write!(f, " ... ({} rows)", self.len)?;
        }
        Ok(())
    }
}

impl ColumnArray {
    /// Assemble a column from raw parts, checking every layout invariant.
    pub fn from_parts(
        dtype: DataType,
        len: usize,
        validity: Option<Vec<u8>>,
        data: Vec<u8>,
        offsets: Option<Vec<u32>>,
    ) -> Result<Self> {
        let array = ColumnArray {
            dtype,
            len,
            validity,
            data,
            offsets,
        };
        array.validate()?;
        Ok(array.normalized())
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if let Some(v) = &self.validity {
            if v.len() != bitmap_len(self.len) {
                return bad(format!(
                    "validity has {} bytes for {} rows",
                    v.len(),
                    self.len
                ));
            }
        }
        match self.dtype.width() {
            Some(w) => {
                if self.offsets.is_some() {
                    return bad("fixed-width column with offsets".into());
                }
                if self.data.len() != self.len * w {
                    return bad(format!(
                        "data has {} bytes, expected {}",
                        self.data.len(),
                        self.len * w
                    ));
                }
            }
            None => {
                let Some(offsets) = &self.offsets else {
                    return bad("utf8 column without offsets".into());
                };
                if offsets.len() != self.len + 1 || offsets[0] != 0 {
                    return bad("utf8 offsets have the wrong shape".into());
                }
                if offsets.windows(2).any(|w| w[0] > w[1]) {
                    return bad("utf8 offsets decrease".into());
                }
                if offsets[self.len] as usize != self.data.len() {
                    return bad("utf8 offsets do not end at the data length".into());
                }
                for i in 0..self.len {
                    let s = &self.data[offsets[i] as usize..offsets[i + 1] as usize];
                    if std::str::from_utf8(s).is_err() {
                        return bad(format!("row {i} is not valid utf8"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Drops an all-ones bitmap and zeroes null slots.
    fn normalized(mut self) -> Self {
        let Some(validity) = &self.validity else {
            return self;
        };
        let nulls = (0..self.len).filter(|&i| !bit_is_set(validity, i)).count();
        if nulls == 0 {
            self.validity = None;
            return self;
        }
        let validity = validity.clone();
        match self.dtype.width() {
            Some(w) => {
                for i in 0..self.len {
                    if !bit_is_set(&validity, i) {
                        self.data[i * w..(i + 1) * w].fill(0);
                    }
                }
            }
            None => {
                let has_null_bytes = (0..self.len).any(|i| {
                    let o = self.offsets.as_ref().unwrap();
                    !bit_is_set(&validity, i) && o[i] != o[i + 1]
                });
                if has_null_bytes {
                    let mut b = ColumnBuilder::with_capacity(DataType::Utf8, self.len);
                    for i in 0..self.len {
                        b.append_from(&self, i);
                    }
                    return b.finish();
                }
            }
        }
        // clear padding bits past len
        let mut validity = validity;
        if !self.len.is_multiple_of(8) {
            let last = validity.len() - 1;
            validity[last] &= (1u8 << (self.len % 8)) - 1;
        }
        self.validity = Some(validity);
        self
    }

    /// Build a column from optional scalars; `None` entries become nulls.
    pub fn from_scalars(dtype: DataType, values: &[Option<Scalar>]) -> Result<Self> {
        let mut b = ColumnBuilder::with_capacity(dtype, values.len());
        for v in values {
            b.push(v.as_ref())?;
        }
        Ok(b.finish())
    }

    pub fn from_i64(values: &[i64]) -> Self {
        let mut data = Vec::with_capacity(values.len() * 8);
        for v in values {
            data.extend_from_slice(&v.to_le_bytes());
        }
        ColumnArray {
            dtype: DataType::Int64,
            len: values.len(),
            validity: None,
            data,
            offsets: None,
        }
    }

    pub fn from_f64(values: &[f64]) -> Self {
        let mut data = Vec::with_capacity(values.len() * 8);
        for v in values {
            data.extend_from_slice(&v.to_le_bytes());
        }
        ColumnArray {
            dtype: DataType::Float64,
            len: values.len(),
            validity: None,
            data,
            offsets: None,
        }
    }

    pub fn from_opt_i64(values: &[Option<i64>]) -> Self {
        let mut b = ColumnBuilder::with_capacity(DataType::Int64, values.len());
        for v in values {
            match v {
                Some(v) => b.push_i64(*v),
                None => b.push_null(),
            }
        }
        b.finish()
    }

    pub fn from_opt_f64(values: &[Option<f64>]) -> Self {
        let mut b = ColumnBuilder::with_capacity(DataType::Float64, values.len());
        for v in values {
            match v {
                Some(v) => b.push_f64(*v),
                None => b.push_null(),
            }
        }
        b.finish()
    }

    pub fn from_opt_str(values: &[Option<&str>]) -> Self {
        let mut b = ColumnBuilder::with_capacity(DataType::Utf8, values.len());
        for v in values {
            match v {
                Some(v) => b.push_str(v),
                None => b.push_null(),
            }
        }
        b.finish()
    }

    /// A column of `len` nulls.
    pub fn nulls(dtype: DataType, len: usize) -> Self {
        let mut b = ColumnBuilder::with_capacity(dtype, len);
        for _ in 0..len {
            b.push_null();
        }
        b.finish()
    }

    pub fn dtype(&self) -> DataType {
        self.dtype
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn validity(&self) -> Option<&[u8]> {
        self.validity.as_deref()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn offsets(&self) -> Option<&[u32]> {
        self.offsets.as_deref()
    }

    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        match &self.validity {
            None => true,
            Some(v) => bit_is_set(v, i),
        }
    }

    pub fn null_count(&self) -> usize {
        match &self.validity {
            None => 0,
            Some(v) => (0..self.len).filter(|&i| !bit_is_set(v, i)).count(),
        }
    }

    /// Raw value of row `i` of an `Int64` column (0 for nulls).
    #[inline]
    pub fn i64_at(&self, i: usize) -> i64 {
        debug_assert_eq!(self.dtype, DataType::Int64);
        i64::from_le_bytes(self.data[i * 8..i * 8 + 8].try_into().unwrap())
    }

    #[inline]
    pub fn f64_at(&self, i: usize) -> f64 {
        debug_assert_eq!(self.dtype, DataType::Float64);
        f64::from_le_bytes(self.data[i * 8..i * 8 + 8].try_into().unwrap())
    }

    #[inline]
    pub fn bool_at(&self, i: usize) -> bool {
        debug_assert_eq!(self.dtype, DataType::Bool);
        self.data[i] != 0
    }

    #[inline]
    pub fn bytes_at(&self, i: usize) -> &[u8] {
        let o = self.offsets.as_ref().expect("utf8 column");
        &self.data[o[i] as usize..o[i + 1] as usize]
    }

    #[inline]
    pub fn str_at(&self, i: usize) -> &str {
        std::str::from_utf8(self.bytes_at(i)).expect("utf8 validated at construction")
    }

    /// Value of row `i` widened to `f64`, for numeric columns.
    pub fn numeric_at(&self, i: usize) -> Option<f64> {
        if !self.is_valid(i) {
            return None;
        }
        match self.dtype {
            DataType::Int64 => Some(self.i64_at(i) as f64),
            DataType::Float64 => Some(self.f64_at(i)),
            _ => None,
        }
    }

    pub fn scalar_at(&self, i: usize) -> Option<Scalar> {
        if !self.is_valid(i) {
            return None;
        }
        Some(match self.dtype {
            DataType::Int64 => Scalar::Int64(self.i64_at(i)),
            DataType::Float64 => Scalar::Float64(self.f64_at(i)),
            DataType::Bool => Scalar::Bool(self.bool_at(i)),
            DataType::Utf8 => Scalar::Utf8(self.str_at(i).to_string()),
        })
    }

    /// Approximate resident size of the column buffers.
    pub fn byte_size(&self) -> usize {
        self.data.len()
            + self.validity.as_ref().map_or(0, Vec::len)
            + self.offsets.as_ref().map_or(0, |o| o.len() * 4)
    }

    /// Gather rows by position.
    pub fn take(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len) {
            return Err(Error::IndexOutOfBounds {
                index: bad,
                len: self.len,
            });
        }
        Ok(self.take_unchecked(indices))
    }

    pub(crate) fn take_unchecked(&self, indices: &[usize]) -> Self {
        match self.dtype.width() {
            Some(w) if self.validity.is_none() => {
                let mut data = Vec::with_capacity(indices.len() * w);
                for &i in indices {
                    data.extend_from_slice(&self.data[i * w..(i + 1) * w]);
                }
                ColumnArray {
                    dtype: self.dtype,
                    len: indices.len(),
                    validity: None,
                    data,
                    offsets: None,
                }
            }
            _ => {
                let mut b = ColumnBuilder::with_capacity(self.dtype, indices.len());
                for &i in indices {
                    b.append_from(self, i);
                }
                b.finish()
            }
        }
    }

    /// Rows `offset..offset + len`.
    pub fn slice(&self, offset: usize, len: usize) -> Self {
        assert!(offset + len <= self.len, "slice out of bounds");
        let mut b = ColumnBuilder::with_capacity(self.dtype, len);
        b.extend_from(self, offset, len);
        b.finish()
    }
}

/// Incremental column construction.
pub struct ColumnBuilder {
    dtype: DataType,
    len: usize,
    nulls: usize,
    validity: Vec<u8>,
    data: Vec<u8>,
    offsets: Vec<u32>,
}

impl ColumnBuilder {
    pub fn new(dtype: DataType) -> Self {
        Self::with_capacity(dtype, 0)
    }

    pub fn with_capacity(dtype: DataType, rows: usize) -> Self {
        let mut offsets = Vec::new();
        if dtype == DataType::Utf8 {
            offsets.reserve(rows + 1);
            offsets.push(0);
        }
        ColumnBuilder {
            dtype,
            len: 0,
            nulls: 0,
            validity: Vec::with_capacity(bitmap_len(rows)),
            data: Vec::with_capacity(rows * dtype.width().unwrap_or(8)),
            offsets,
        }
    }

    pub fn dtype(&self) -> DataType {
        self.dtype
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bytes accumulated so far, as [`ColumnArray::byte_size`] would count them.
    pub fn byte_size(&self) -> usize {
        self.data.len()
            + if self.nulls > 0 {
                self.validity.len()
            } else {
                0
            }
            + self.offsets.len() * 4
    }

    #[inline]
    fn push_validity(&mut self, valid: bool) {
        if self.len.is_multiple_of(8) {
            self.validity.push(0);
        }
        if valid {
            *self.validity.last_mut().unwrap() |= 1 << (self.len % 8);
        } else {
            self.nulls += 1;
        }
        self.len += 1;
    }

    pub fn push_null(&mut self) {
        match self.dtype.width() {
            Some(w) => self.data.extend(std::iter::repeat_n(0, w)),
            None => self.offsets.push(self.data.len() as u32),
        }
        self.push_validity(false);
    }

    pub fn push_i64(&mut self, v: i64) {
        debug_assert_eq!(self.dtype, DataType::Int64);
        self.data.extend_from_slice(&v.to_le_bytes());
        self.push_validity(true);
    }

    pub fn push_f64(&mut self, v: f64) {
        debug_assert_eq!(self.dtype, DataType::Float64);
        self.data.extend_from_slice(&v.to_le_bytes());
        self.push_validity(true);
    }

    pub fn push_bool(&mut self, v: bool) {
        debug_assert_eq!(self.dtype, DataType::Bool);
        self.data.push(v as u8);
        self.push_validity(true);
    }

    pub fn push_str(&mut self, v: &str) {
        debug_assert_eq!(self.dtype, DataType::Utf8);
        self.data.extend_from_slice(v.as_bytes());
        let end = u32::try_from(self.data.len()).expect("utf8 column exceeds 4 GiB");
        self.offsets.push(end);
        self.push_validity(true);
    }

    /// Push an optional scalar, checking its type.
    pub fn push(&mut self, v: Option<&Scalar>) -> Result<()> {
        match v {
            None => self.push_null(),
            Some(s) if s.dtype() != self.dtype => {
                return Err(Error::TypeMismatch {
                    expected: self.dtype,
                    found: s.dtype().to_string(),
                })
            }
            Some(Scalar::Int64(v)) => self.push_i64(*v),
            Some(Scalar::Float64(v)) => self.push_f64(*v),
            Some(Scalar::Bool(v)) => self.push_bool(*v),
            Some(Scalar::Utf8(v)) => self.push_str(v),
        }
        Ok(())
    }

    /// Copy row `row` of `src` (same dtype) onto the end of this builder.
    #[inline]
    pub fn append_from(&mut self, src: &ColumnArray, row: usize) {
        debug_assert_eq!(src.dtype, self.dtype);
        if !src.is_valid(row) {
            self.push_null();
            return;
        }
        match self.dtype.width() {
            Some(w) => self
                .data
                .extend_from_slice(&src.data[row * w..(row + 1) * w]),
            None => {
                self.data.extend_from_slice(src.bytes_at(row));
                let end = u32::try_from(self.data.len()).expect("utf8 column exceeds 4 GiB");
                self.offsets.push(end);
            }
        }
        self.push_validity(true);
    }

    /// Copy `len` rows of `src` starting at `offset`.
    pub fn extend_from(&mut self, src: &ColumnArray, offset: usize, len: usize) {
        if src.validity.is_none() {
            if let Some(w) = self.dtype.width() {
                self.data
                    .extend_from_slice(&src.data[offset * w..(offset + len) * w]);
                for _ in 0..len {
                    self.push_validity(true);
                }
                return;
            }
        }
        for i in offset..offset + len {
            self.append_from(src, i);
        }
    }

    pub fn finish(self) -> ColumnArray {
        let validity = if self.nulls == 0 {
            None
        } else {
            Some(self.validity)
        };
        let offsets = if self.dtype == DataType::Utf8 {
            Some(self.offsets)
        } else {
            None
        };
        let array = ColumnArray {
            dtype: self.dtype,
            len: self.len,
            validity,
            data: self.data,
            offsets,
        };
        debug_assert!(array.validate().is_ok());
        array
    }
}
