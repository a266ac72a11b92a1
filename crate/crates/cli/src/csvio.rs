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

//! CSV files with an explicit schema.
//!
//! Empty unquoted fields are null; `""` is an empty string. Floats are
//! written with 17 significant digits so that reading them back restores
//! the same bits.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use hptmt_core::columnar::{ColumnBuilder, DataType, Field, Schema, Table};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("bad schema spec: {0}")]
    Schema(String),
    #[error("header mismatch: expected [{expected}], found [{found}]")]
    Header { expected: String, found: String },
    #[error("record {record}: expected {expected} fields, found {found}")]
    Ragged {
        record: usize,
        expected: usize,
        found: usize,
    },
    #[error("record {record}, column {column}: {message}")]
    Cell {
        record: usize,
        column: String,
        message: String,
    },
    #[error("record {record}: {message}")]
    Syntax { record: usize, message: String },
    #[error("empty file: missing header")]
    MissingHeader,
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

/// Parse `name:type,...` with types `i64`, `f64`, `bool`, `str`.
pub fn parse_schema_spec(spec: &str) -> Result<Schema, CsvError> {
    let mut fields = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let (name, ty) = part
            .rsplit_once(':')
            .ok_or_else(|| CsvError::Schema(format!("'{part}' is not name:type")))?;
        let dtype = match ty.trim() {
            "i64" => DataType::Int64,
            "f64" => DataType::Float64,
            "bool" => DataType::Bool,
            "str" => DataType::Utf8,
            other => {
                return Err(CsvError::Schema(format!(
                    "unknown type '{other}' for column '{name}'"
                )))
            }
        };
        fields.push(Field::new(name.trim(), dtype));
    }
    Schema::new(fields).map_err(|e| CsvError::Schema(e.to_string()))
}

#[derive(Debug, PartialEq)]
struct RawField {
    text: String,
    quoted: bool,
}

fn parse_records(text: &str) -> Result<Vec<Vec<RawField>>, CsvError> {
    let mut records = Vec::new();
    let mut chars = text.chars().peekable();
    while chars.peek().is_some() {
        let record = records.len() + 1;
        let mut fields = Vec::new();
        loop {
            let mut field = RawField {
                text: String::new(),
                quoted: false,
            };
            if chars.peek() == Some(&'"') {
                chars.next();
                field.quoted = true;
                loop {
                    match chars.next() {
                        None => {
                            return Err(CsvError::Syntax {
                                record,
                                message: "unterminated quoted field".into(),
                            })
                        }
                        Some('"') if chars.peek() == Some(&'"') => {
                            chars.next();
                            field.text.push('"');
                        }
                        Some('"') => break,
                        Some(c) => field.text.push(c),
                    }
                }
                if !matches!(chars.peek(), None | Some(',') | Some('\n') | Some('\r')) {
                    return Err(CsvError::Syntax {
                        record,
                        message: "text after closing quote".into(),
                    });
                }
            } else {
                while let Some(&c) = chars.peek() {
                    if c == ',' || c == '\n' || c == '\r' {
                        break;
                    }
                    field.text.push(c);
                    chars.next();
                }
            }
            fields.push(field);
            match chars.next() {
                Some(',') => continue,
                Some('\r') => {
                    if chars.peek() == Some(&'\n') {
                        chars.next();
                    }
                    break;
                }
                _ => break,
            }
        }
        records.push(fields);
    }
    Ok(records)
}

fn parse_cell(b: &mut ColumnBuilder, dtype: DataType, f: &RawField) -> Result<(), String> {
    if f.text.is_empty() && !(f.quoted && dtype == DataType::Utf8) {
        b.push_null();
        return Ok(());
    }
    match dtype {
        DataType::Int64 => b.push_i64(
            f.text
                .parse()
                .map_err(|e| format!("'{}' is not an i64: {e}", f.text))?,
        ),
        DataType::Float64 => b.push_f64(
            f.text
                .parse()
                .map_err(|e| format!("'{}' is not an f64: {e}", f.text))?,
        ),
        DataType::Bool => match f.text.as_str() {
            "true" => b.push_bool(true),
            "false" => b.push_bool(false),
            other => return Err(format!("'{other}' is not a bool (true/false)")),
        },
        DataType::Utf8 => b.push_str(&f.text),
    }
    Ok(())
}

/// Parse CSV text whose header must list the schema's names in order.
pub fn parse_csv(text: &str, schema: &Schema) -> Result<Table, CsvError> {
    let mut records = parse_records(text)?.into_iter();
    let header = records.next().ok_or(CsvError::MissingHeader)?;
    let names: Vec<&str> = schema.fields().iter().map(|f| f.name.as_str()).collect();
    let found: Vec<&str> = header.iter().map(|f| f.text.as_str()).collect();
    if names != found {
        return Err(CsvError::Header {
            expected: names.join(","),
            found: found.join(","),
        });
    }
    let mut builders: Vec<ColumnBuilder> = schema
        .fields()
        .iter()
        .map(|f| ColumnBuilder::new(f.dtype))
        .collect();
    for (i, rec) in records.enumerate() {
        let record = i + 2;
        if rec.len() != names.len() {
            return Err(CsvError::Ragged {
                record,
                expected: names.len(),
                found: rec.len(),
            });
        }
        for ((b, field), raw) in builders.iter_mut().zip(schema.fields()).zip(&rec) {
            parse_cell(b, field.dtype, raw).map_err(|message| CsvError::Cell {
                record,
                column: field.name.clone(),
                message,
            })?;
        }
    }
    Table::new(
        schema.clone(),
        builders.into_iter().map(ColumnBuilder::finish).collect(),
    )
    .map_err(|e| CsvError::Schema(e.to_string()))
}

pub fn read_csv(path: &Path, schema: &Schema) -> Result<Table, CsvError> {
    let io_err = |source| CsvError::Io {
        path: path.display().to_string(),
        source,
    };
    let bytes = fs::read(path).map_err(io_err)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| io_err(io::Error::new(io::ErrorKind::InvalidData, e.utf8_error())))?;
    parse_csv(&text, schema)
}

fn write_text<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    if s.is_empty() || s.contains([',', '"', '\n', '\r']) {
        write!(w, "\"{}\"", s.replace('"', "\"\""))
    } else {
        w.write_all(s.as_bytes())
    }
}

/// Shortest text that parses back to the same bits: 17 significant digits.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn write_csv_to<W: Write>(table: &Table, w: &mut W) -> io::Result<()> {
    for (i, f) in table.schema().fields().iter().enumerate() {
        if i > 0 {
            w.write_all(b",")?;
        }
        write_text(w, &f.name)?;
    }
    w.write_all(b"\n")?;
    for r in 0..table.num_rows() {
        for (c, col) in table.columns().iter().enumerate() {
            if c > 0 {
                w.write_all(b",")?;
            }
            if !col.is_valid(r) {
                continue;
            }
            match col.dtype() {
                DataType::Int64 => write!(w, "{}", col.i64_at(r))?,
                DataType::Float64 => w.write_all(format_f64(col.f64_at(r)).as_bytes())?,
                DataType::Bool => write!(w, "{}", col.bool_at(r))?,
                DataType::Utf8 => write_text(w, col.str_at(r))?,
            }
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_csv(table: &Table, path: &Path) -> Result<(), CsvError> {
    let io_err = |source| CsvError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    write_csv_to(table, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_err)
}
