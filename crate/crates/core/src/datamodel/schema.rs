use std::fmt;
use std::sync::Arc;

use super::{DataType, Datum};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Column {
    pub name: String,
    pub data_type: DataType,
}

impl Column {
    pub fn new(name: impl Into<String>, data_type: DataType) -> Self {
        Column {
            name: name.into(),
            data_type,
        }
    }
}

/// Ordered, non-empty list of uniquely named columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Schema {
    columns: Vec<Column>,
}

pub type SchemaRef = Arc<Schema>;

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Schema("a schema needs at least one column".into()));
        }
        for (i, c) in columns.iter().enumerate() {
            if c.name.is_empty() {
                return Err(Error::Schema(format!("column {} has an empty name", i + 1)));
            }
            if columns[..i]
                .iter()
                .any(|p| p.name.eq_ignore_ascii_case(&c.name))
            {
                return Err(Error::Schema(format!("duplicate column name '{}'", c.name)));
            }
        }
        Ok(Schema { columns })
    }

    /// Builds a schema from `(name, type)` pairs.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, DataType)>) -> Result<Self> {
        Schema::new(pairs.into_iter().map(|(n, t)| Column::new(n, t)).collect())
    }

    /// Parses the compact form `id:int32,txt:text`.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, ty) = part
                .split_once(':')
                .ok_or_else(|| Error::Schema(format!("expected name:type, got '{part}'")))?;
            columns.push(Column::new(name.trim(), ty.trim().parse()?));
        }
        Schema::new(columns)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn types(&self) -> impl Iterator<Item = DataType> + '_ {
        self.columns.iter().map(|c| c.data_type)
    }

    /// Same column types in the same order, names ignored.
    pub fn same_types(&self, other: &Schema) -> bool {
        self.len() == other.len() && self.types().eq(other.types())
    }

    /// Same types and case-insensitively equal names.
    pub fn compatible(&self, other: &Schema) -> bool {
        self.same_types(other)
            && self
                .columns
                .iter()
                .zip(&other.columns)
                .all(|(a, b)| a.name.eq_ignore_ascii_case(&b.name))
    }

    pub fn row_width(&self) -> usize {
        self.types().map(DataType::width).sum()
    }

    /// Checks arity and per-cell types of `cells` against this schema.
    pub fn validate(&self, cells: &[Datum]) -> Result<()> {
        if cells.len() != self.columns.len() {
            return Err(Error::Schema(format!(
                "row has {} cells, schema {} has {} columns",
                cells.len(),
                self,
                self.columns.len()
            )));
        }
        for (cell, col) in cells.iter().zip(&self.columns) {
            if let Some(t) = cell.data_type() {
                if t != col.data_type {
                    return Err(Error::Schema(format!(
                        "column '{}' expects {}, got {} value {}",
                        col.name, col.data_type, t, cell
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.columns.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} {}", c.name, c.data_type)?;
        }
        f.write_str(")")
    }
}
