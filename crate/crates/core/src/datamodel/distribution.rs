//! Distribution policies and the row-to-segment hash.
//!
//! Single integer (and bool) columns map by value modulo the segment count,
//! so `hash(i)` on two segments behaves exactly like `i % 2`. Text hashes
//! with 64-bit FNV-1a over the UTF-8 bytes and float64 with FNV-1a over the
//! little-endian IEEE-754 bits. A null key goes to segment 0. Multi-column
//! keys feed every cell's canonical encoding through one FNV-1a state.

use std::fmt;

use super::{Datum, Row, Schema};
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_extend(FNV_OFFSET, bytes)
}

fn fnv1a64_extend(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DistributionPolicy {
    /// Hash the listed column indices.
    HashColumns(Vec<usize>),
    /// Full copy on every segment.
    Replicated,
    /// All rows on one segment.
    SingletonSegment(usize),
}

impl DistributionPolicy {
    /// Checks column indices (or the singleton segment id) for validity.
    pub fn validate(&self, schema: &Schema, nseg: usize) -> Result<()> {
        match self {
            DistributionPolicy::HashColumns(cols) => {
                if cols.is_empty() {
                    return Err(Error::Schema("hash policy needs at least one column".into()));
                }
                if let Some(bad) = cols.iter().find(|&&c| c >= schema.len()) {
                    return Err(Error::Schema(format!(
                        "hash column index {bad} out of range for {schema}"
                    )));
                }
                Ok(())
            }
            DistributionPolicy::Replicated => Ok(()),
            DistributionPolicy::SingletonSegment(s) if *s < nseg => Ok(()),
            DistributionPolicy::SingletonSegment(s) => Err(Error::Schema(format!(
                "singleton segment {s} does not exist with {nseg} segments"
            ))),
        }
    }

    /// Parses `hash(a,b)`, `replicated` or `singleton(N)` against a schema.
    pub fn parse(spec: &str, schema: &Schema) -> Result<Self> {
        let spec = spec.trim();
        let lower = spec.to_ascii_lowercase();
        if lower == "replicated" {
            return Ok(DistributionPolicy::Replicated);
        }
        let inner = |prefix: &str| -> Option<&str> {
            lower
                .starts_with(prefix)
                .then(|| spec[prefix.len()..].trim())
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
        };
        if let Some(args) = inner("hash") {
            let cols = args
                .split(',')
                .map(|name| {
                    schema.index_of(name.trim()).ok_or_else(|| {
                        Error::Schema(format!("unknown column '{}' in policy", name.trim()))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(DistributionPolicy::HashColumns(cols));
        }
        if let Some(arg) = inner("singleton") {
            let seg = arg
                .parse()
                .map_err(|_| Error::Schema(format!("bad segment id '{arg}'")))?;
            return Ok(DistributionPolicy::SingletonSegment(seg));
        }
        Err(Error::Schema(format!(
            "unknown distribution policy '{spec}' (expected hash(cols), replicated or singleton(n))"
        )))
    }

    pub fn display<'a>(&'a self, schema: &'a Schema) -> impl fmt::Display + 'a {
        PolicyDisplay {
            policy: self,
            schema,
        }
    }
}

struct PolicyDisplay<'a> {
    policy: &'a DistributionPolicy,
    schema: &'a Schema,
}

impl fmt::Display for PolicyDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.policy {
            DistributionPolicy::HashColumns(cols) => {
                f.write_str("hash(")?;
                for (i, c) in cols.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    match self.schema.columns().get(*c) {
                        Some(col) => f.write_str(&col.name)?,
                        None => write!(f, "#{c}")?,
                    }
                }
                f.write_str(")")
            }
            DistributionPolicy::Replicated => f.write_str("replicated"),
            DistributionPolicy::SingletonSegment(s) => write!(f, "singleton({s})"),
        }
    }
}

fn encode_for_hash(d: &Datum, out: &mut Vec<u8>) {
    match d {
        Datum::Null => out.push(0),
        Datum::Int32(v) => out.extend_from_slice(&(*v as i64).to_le_bytes()),
        Datum::Int64(v) => out.extend_from_slice(&v.to_le_bytes()),
        Datum::Float64(v) => out.extend_from_slice(&v.to_bits().to_le_bytes()),
        Datum::Text(s) => {
            out.extend_from_slice(s.as_bytes());
            out.push(0xff);
        }
        Datum::Bool(b) => out.push(*b as u8),
    }
}

/// Segment owning a single key value.
pub fn hash_datum(d: &Datum, nseg: usize) -> usize {
    let n = nseg as u64;
    let seg = match d {
        Datum::Null => 0,
        Datum::Int32(v) => (*v as i64).rem_euclid(nseg as i64) as u64,
        Datum::Int64(v) => (*v as i128).rem_euclid(nseg as i128) as u64,
        Datum::Bool(b) => *b as u64 % n,
        Datum::Float64(v) => fnv1a64(&v.to_bits().to_le_bytes()) % n,
        Datum::Text(s) => fnv1a64(s.as_bytes()) % n,
    };
    seg as usize
}

/// Maps a row to its owning segment in `[0, nseg)`.
pub fn hash_segment(row: &Row, policy: &DistributionPolicy, nseg: usize) -> Result<usize> {
    if nseg == 0 {
        return Err(Error::Schema("segment count must be positive".into()));
    }
    match policy {
        DistributionPolicy::HashColumns(cols) => {
            let cell = |c: usize| {
                row.get(c).ok_or_else(|| {
                    Error::Schema(format!(
                        "hash column index {c} out of range for a row of {} cells",
                        row.len()
                    ))
                })
            };
            match cols.as_slice() {
                [] => Err(Error::Schema("hash policy needs at least one column".into())),
                [c] => Ok(hash_datum(cell(*c)?, nseg)),
                _ => {
                    let mut buf = Vec::with_capacity(16 * cols.len());
                    for c in cols {
                        encode_for_hash(cell(*c)?, &mut buf);
                    }
                    Ok((fnv1a64(&buf) % nseg as u64) as usize)
                }
            }
        }
        DistributionPolicy::SingletonSegment(s) if *s < nseg => Ok(*s),
        DistributionPolicy::SingletonSegment(s) => Err(Error::Schema(format!(
            "singleton segment {s} does not exist with {nseg} segments"
        ))),
        DistributionPolicy::Replicated => Err(Error::Schema(
            "replicated policy does not map rows to a single segment".into(),
        )),
    }
}
