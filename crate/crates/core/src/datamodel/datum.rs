use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DataType {
    Int32,
    Int64,
    Float64,
    Text,
    Bool,
}

impl DataType {
    pub fn name(self) -> &'static str {
        match self {
            DataType::Int32 => "int32",
            DataType::Int64 => "int64",
            DataType::Float64 => "float64",
            DataType::Text => "text",
            DataType::Bool => "bool",
        }
    }

    /// Estimated on-row width in bytes, used by plan estimates.
    pub fn width(self) -> usize {
        match self {
            DataType::Int32 => 4,
            DataType::Int64 | DataType::Float64 => 8,
            DataType::Text => 32,
            DataType::Bool => 1,
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Int32 | DataType::Int64 | DataType::Float64)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataType {
    type Err = Error;

    /// Accepts the canonical names plus the PostgreSQL-style aliases
    /// `int4`, `int8`, `float4`, `float8`. Single-precision widens to float64.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "int32" | "int4" | "int" | "integer" => Ok(DataType::Int32),
            "int64" | "int8" | "bigint" => Ok(DataType::Int64),
            "float64" | "float8" | "float32" | "float4" | "double" => Ok(DataType::Float64),
            "text" | "string" | "varchar" => Ok(DataType::Text),
            "bool" | "boolean" => Ok(DataType::Bool),
            other => Err(Error::Type(format!("unknown type name '{other}'"))),
        }
    }
}

/// A single dynamically typed cell.
#[derive(Debug, Clone)]
pub enum Datum {
    Null,
    Int32(i32),
    Int64(i64),
    Float64(f64),
    Text(String),
    Bool(bool),
}

impl Datum {
    pub fn data_type(&self) -> Option<DataType> {
        match self {
            Datum::Null => None,
            Datum::Int32(_) => Some(DataType::Int32),
            Datum::Int64(_) => Some(DataType::Int64),
            Datum::Float64(_) => Some(DataType::Float64),
            Datum::Text(_) => Some(DataType::Text),
            Datum::Bool(_) => Some(DataType::Bool),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Datum::Null)
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Datum::Int32(v) => Some(v as i64),
            Datum::Int64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Datum::Int32(v) => Some(v as f64),
            Datum::Int64(v) => Some(v as f64),
            Datum::Float64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Datum::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Datum::Bool(b) => Some(b),
            _ => None,
        }
    }

    /// Parses a textual cell (CSV field, CLI literal) as the given type.
    pub fn parse_as(text: &str, ty: DataType) -> Result<Datum> {
        let bad = || Error::Type(format!("cannot parse '{text}' as {ty}"));
        let t = text.trim();
        Ok(match ty {
            DataType::Int32 => Datum::Int32(t.parse().map_err(|_| bad())?),
            DataType::Int64 => Datum::Int64(t.parse().map_err(|_| bad())?),
            DataType::Float64 => Datum::Float64(t.parse().map_err(|_| bad())?),
            DataType::Bool => match t.to_ascii_lowercase().as_str() {
                "true" | "t" | "1" => Datum::Bool(true),
                "false" | "f" | "0" => Datum::Bool(false),
                _ => return Err(bad()),
            },
            DataType::Text => Datum::Text(text.to_string()),
        })
    }

    fn type_rank(&self) -> u8 {
        match self {
            Datum::Null => 0,
            Datum::Bool(_) => 1,
            Datum::Int32(_) => 2,
            Datum::Int64(_) => 3,
            Datum::Float64(_) => 4,
            Datum::Text(_) => 5,
        }
    }
}

/// Compares two datums of the same type. Null sorts first and equals Null.
///
/// Comparing values of two different non-null types is a type error.
pub fn datum_compare(a: &Datum, b: &Datum) -> Result<Ordering> {
    match (a, b) {
        (Datum::Null, Datum::Null) => Ok(Ordering::Equal),
        (Datum::Null, _) => Ok(Ordering::Less),
        (_, Datum::Null) => Ok(Ordering::Greater),
        (Datum::Int32(x), Datum::Int32(y)) => Ok(x.cmp(y)),
        (Datum::Int64(x), Datum::Int64(y)) => Ok(x.cmp(y)),
        (Datum::Float64(x), Datum::Float64(y)) => Ok(x.total_cmp(y)),
        (Datum::Text(x), Datum::Text(y)) => Ok(x.as_bytes().cmp(y.as_bytes())),
        (Datum::Bool(x), Datum::Bool(y)) => Ok(x.cmp(y)),
        _ => Err(Error::Type(format!(
            "cannot compare {} with {}",
            a.data_type().map_or("null", DataType::name),
            b.data_type().map_or("null", DataType::name)
        ))),
    }
}

// Equality, hashing and ordering below form one consistent total order so
// datums can key maps and be sorted for multiset comparison. On values of a
// single type they agree with `datum_compare`.

impl PartialEq for Datum {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Datum {}

impl PartialOrd for Datum {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Datum {
    fn cmp(&self, other: &Self) -> Ordering {
        datum_compare(self, other).unwrap_or_else(|_| self.type_rank().cmp(&other.type_rank()))
    }
}

impl Hash for Datum {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.type_rank().hash(state);
        match self {
            Datum::Null => {}
            Datum::Int32(v) => v.hash(state),
            Datum::Int64(v) => v.hash(state),
            Datum::Float64(v) => v.to_bits().hash(state),
            Datum::Text(s) => s.hash(state),
            Datum::Bool(b) => b.hash(state),
        }
    }
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datum::Null => Ok(()),
            Datum::Int32(v) => write!(f, "{v}"),
            Datum::Int64(v) => write!(f, "{v}"),
            Datum::Float64(v) => write!(f, "{v}"),
            Datum::Text(s) => f.write_str(s),
            Datum::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl From<i32> for Datum {
    fn from(v: i32) -> Self {
        Datum::Int32(v)
    }
}

impl From<i64> for Datum {
    fn from(v: i64) -> Self {
        Datum::Int64(v)
    }
}

impl From<f64> for Datum {
    fn from(v: f64) -> Self {
        Datum::Float64(v)
    }
}

impl From<bool> for Datum {
    fn from(v: bool) -> Self {
        Datum::Bool(v)
    }
}

impl From<&str> for Datum {
    fn from(v: &str) -> Self {
        Datum::Text(v.to_string())
    }
}

impl From<String> for Datum {
    fn from(v: String) -> Self {
        Datum::Text(v)
    }
}
