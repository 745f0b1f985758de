//! Values, schemas, rows and row groups shared by every other module.

mod datum;
mod distribution;
mod row;
mod schema;

pub use datum::{datum_compare, DataType, Datum};
pub use distribution::{fnv1a64, hash_datum, hash_segment, DistributionPolicy};
pub use row::{Row, RowGroup};
pub use schema::{Column, Schema, SchemaRef};

/// Sorts rows into a canonical order; tests use it for multiset comparison.
pub fn sort_rows(rows: &mut [Row]) {
    rows.sort();
}
