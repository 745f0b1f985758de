use std::ops::Index;

use super::{Datum, SchemaRef};
use crate::error::{Error, Result};

/// A tuple of cells. Rows carry no schema; the enclosing [`RowGroup`] or
/// operator does.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Row(Vec<Datum>);

impl Row {
    pub fn new(cells: Vec<Datum>) -> Self {
        Row(cells)
    }

    pub fn cells(&self) -> &[Datum] {
        &self.0
    }

    pub fn into_cells(self) -> Vec<Datum> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, idx: usize) -> Option<&Datum> {
        self.0.get(idx)
    }

    pub fn push(&mut self, d: Datum) {
        self.0.push(d);
    }
}

impl Index<usize> for Row {
    type Output = Datum;

    fn index(&self, idx: usize) -> &Datum {
        &self.0[idx]
    }
}

impl From<Vec<Datum>> for Row {
    fn from(cells: Vec<Datum>) -> Self {
        Row(cells)
    }
}

impl FromIterator<Datum> for Row {
    fn from_iter<I: IntoIterator<Item = Datum>>(iter: I) -> Self {
        Row(iter.into_iter().collect())
    }
}

/// Shorthand for building rows in code and tests: `row![1, "a", 2.5]`.
#[macro_export]
macro_rules! row {
    ($($cell:expr),* $(,)?) => {
        $crate::datamodel::Row::new(vec![$($crate::datamodel::Datum::from($cell)),*])
    };
}

/// A batch of rows sharing one schema; the unit of transfer between
/// operators, processes and machines.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGroup {
    schema: SchemaRef,
    rows: Vec<Row>,
}

impl RowGroup {
    /// Validates every row against `schema`.
    pub fn new(schema: SchemaRef, rows: Vec<Row>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            schema
                .validate(r.cells())
                .map_err(|e| Error::Schema(format!("row {i}: {e}")))?;
        }
        Ok(RowGroup { schema, rows })
    }

    /// For rows already known to match `schema`.
    pub(crate) fn new_unchecked(schema: SchemaRef, rows: Vec<Row>) -> Self {
        debug_assert!(rows.iter().all(|r| schema.validate(r.cells()).is_ok()));
        RowGroup { schema, rows }
    }

    pub fn schema(&self) -> &SchemaRef {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Row> {
        self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
