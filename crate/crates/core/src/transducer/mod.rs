//! Transducer runtime: the program interface, builtin and subprocess
//! runners, and the row-group wire protocol.

pub mod child;
mod external;
mod io;
pub mod proto;
mod registry;
mod runner;
mod spec;

pub use external::{expand_template, ExternalTransducerOp, SCRIPT_PLACEHOLDER};
pub use io::{
    run_builtin, InstanceInfo, NodeShared, OutRecord, Record, RowGroupSink, TransducerIo,
    TransducerProgram,
};
pub use registry::{Builtin, FnBuiltin, Registry};
pub use runner::BuiltinTransducerOp;
pub use spec::{ExecMode, Params, TransducerSpec};

use std::sync::Arc;

use crate::datamodel::{Row, RowGroup, SchemaRef};

/// Splits `rows` into row groups of at most `batch_size` rows, preserving
/// order. Zero rows yield zero groups.
pub fn stream_rowgroups(
    schema: &SchemaRef,
    rows: Vec<Row>,
    batch_size: usize,
) -> impl Iterator<Item = RowGroup> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let schema = Arc::clone(schema);
    let mut rows = rows.into_iter().peekable();
    std::iter::from_fn(move || {
        rows.peek()?;
        let chunk: Vec<Row> = rows.by_ref().take(batch_size).collect();
        Some(RowGroup::new_unchecked(Arc::clone(&schema), chunk))
    })
}
