//! Builtin transducers: small utilities, run detection, BFS and
//! Bellman-Ford over BSP, and the TCP transfer pair.

mod basic;
mod graph;
mod runs;
mod transfer;

use std::fmt::Display;
use std::str::FromStr;

pub use basic::{probe_summary, Counter, Identity, ModFilter, PartitionProbe};
pub use graph::{Bfs, Sssp};
pub use runs::Runs;
pub use transfer::{TransferRecv, TransferSend, HELLO_MAGIC, HELLO_VERSION};

use crate::datamodel::{DataType, Schema};
use crate::error::{Error, Result};
use crate::transducer::{Params, Registry};

/// Registry holding every builtin in this module.
pub fn default_registry() -> Registry {
    let mut r = Registry::new();
    r.register(Identity)
        .register(ModFilter)
        .register(Counter)
        .register(PartitionProbe)
        .register(Runs)
        .register(Bfs)
        .register(Sssp)
        .register(TransferSend)
        .register(TransferRecv);
    r
}

/// Optional typed parameter.
pub(crate) fn param<T>(params: &Params, key: &str) -> Result<Option<T>>
where
    T: FromStr,
    T::Err: Display,
{
    params
        .get(key)
        .map(|v| {
            v.parse()
                .map_err(|e| Error::Plan(format!("parameter {key}={v}: {e}")))
        })
        .transpose()
}

pub(crate) fn required<T>(params: &Params, builtin: &str, key: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    param(params, key)?
        .ok_or_else(|| Error::Plan(format!("builtin {builtin} needs parameter {key}=...")))
}

/// Rejects parameters the builtin does not know.
pub(crate) fn known_params(params: &Params, builtin: &str, known: &[&str]) -> Result<()> {
    match params.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(Error::Plan(format!("builtin {builtin} has no parameter '{k}'"))),
        None => Ok(()),
    }
}

/// Checks a declared schema against the column types a builtin needs.
pub(crate) fn expect_types(
    builtin: &str,
    which: &str,
    schema: &Schema,
    want: &[DataType],
) -> Result<()> {
    if schema.types().eq(want.iter().copied()) {
        return Ok(());
    }
    let want: Vec<&str> = want.iter().map(|t| t.name()).collect();
    Err(Error::Type(format!(
        "builtin {builtin} needs {which} types ({}), declared {schema}",
        want.join(", ")
    )))
}
