//! Shared-nothing executor. A plan runs as one pull pipeline per segment;
//! motions move row groups between segments over bounded queues and the
//! master drains the root.

mod cluster;
pub mod exchange;
mod exec;
mod explain;
mod expr;
mod ops;
mod plan;

pub use cluster::{Catalog, Cluster, ExecConfig, QueryResult, StatementOutput, Table, TableInfo};
pub use exec::{execute, ExecState};
pub use explain::explain;
pub use expr::{BinaryOp, Expr, UnaryOp};
pub use ops::{FilterOp, ProjectOp, ScanOp, SortOp, ValuesOp, WindowRowNumberOp};
pub use plan::{Locus, PlanKind, PlanNode};

use crate::datamodel::{RowGroup, SchemaRef};
use crate::error::Result;

pub const DEFAULT_BATCH_SIZE: usize = 256;
pub const DEFAULT_CHANNEL_CAPACITY: usize = 16;

/// A pull-based operator producing row groups.
pub trait Operator: Send {
    fn schema(&self) -> &SchemaRef;

    /// Next non-empty row group, or `None` at end of stream.
    fn next_batch(&mut self) -> Result<Option<RowGroup>>;
}

impl Operator for Box<dyn Operator> {
    fn schema(&self) -> &SchemaRef {
        (**self).schema()
    }

    fn next_batch(&mut self) -> Result<Option<RowGroup>> {
        (**self).next_batch()
    }
}

/// One sort key over a column of the operator's input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SortKey {
    pub column: usize,
    pub descending: bool,
}

impl SortKey {
    pub fn asc(column: usize) -> Self {
        SortKey {
            column,
            descending: false,
        }
    }

    pub fn desc(column: usize) -> Self {
        SortKey {
            column,
            descending: true,
        }
    }
}

/// Drains an operator into a vector of rows.
pub fn collect_rows(op: &mut dyn Operator) -> Result<Vec<crate::datamodel::Row>> {
    let mut rows = Vec::new();
    while let Some(rg) = op.next_batch()? {
        rows.extend(rg.into_rows());
    }
    Ok(rows)
}
