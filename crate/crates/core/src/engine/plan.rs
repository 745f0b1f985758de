//! Physical plan tree with per-segment row estimates.

use std::sync::Arc;

use super::expr::Expr;
use super::SortKey;
use crate::datamodel::{Column, DataType, Schema, SchemaRef};
use crate::error::{Error, Result};
use crate::transducer::TransducerSpec;

/// Where a subtree's output stream lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Locus {
    /// One stream per segment.
    Segments,
    /// A single stream on the master.
    Master,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanKind {
    Scan { table: String },
    /// Produces no rows on every segment; input of a transducer without FROM.
    Empty,
    Filter(Expr),
    Project(Vec<Expr>),
    Sort(Vec<SortKey>),
    /// Appends an int64 row number per partition in order-key order.
    WindowRowNumber {
        partition: Vec<usize>,
        order: Vec<SortKey>,
    },
    /// Hash re-shard on the given columns.
    Redistribute { columns: Vec<usize>, nseg: usize },
    Gather { nseg: usize },
    Transducer(TransducerSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    pub kind: PlanKind,
    pub children: Vec<PlanNode>,
    pub schema: SchemaRef,
    /// Estimated rows per stream (per segment below a gather).
    pub est_rows: f64,
}

impl PlanNode {
    pub fn scan(table: &str, schema: SchemaRef, table_rows: usize, nseg: usize) -> PlanNode {
        PlanNode {
            kind: PlanKind::Scan {
                table: table.to_string(),
            },
            children: Vec::new(),
            schema,
            est_rows: table_rows as f64 / nseg.max(1) as f64,
        }
    }

    pub fn empty(schema: SchemaRef) -> PlanNode {
        PlanNode {
            kind: PlanKind::Empty,
            children: Vec::new(),
            schema,
            est_rows: 0.0,
        }
    }

    pub fn filter(child: PlanNode, predicate: Expr) -> Result<PlanNode> {
        match predicate.data_type(&child.schema)? {
            None | Some(DataType::Bool) => {}
            Some(t) => return Err(Error::Type(format!("WHERE clause must be bool, got {t}"))),
        }
        Ok(PlanNode {
            est_rows: child.est_rows / 3.0,
            schema: Arc::clone(&child.schema),
            kind: PlanKind::Filter(predicate),
            children: vec![child],
        })
    }

    /// Projects `exprs`, naming output columns `names`. Untyped null
    /// expressions take the type given in `null_types` (or int32).
    pub fn project(child: PlanNode, exprs: Vec<Expr>, names: Vec<String>) -> Result<PlanNode> {
        Self::project_typed(child, exprs, names, &[])
    }

    pub fn project_typed(
        child: PlanNode,
        exprs: Vec<Expr>,
        names: Vec<String>,
        null_types: &[DataType],
    ) -> Result<PlanNode> {
        assert_eq!(exprs.len(), names.len(), "one name per projected expression");
        let mut cols = Vec::with_capacity(exprs.len());
        for (i, (e, name)) in exprs.iter().zip(names).enumerate() {
            let ty = e
                .data_type(&child.schema)?
                .or_else(|| null_types.get(i).copied())
                .unwrap_or(DataType::Int32);
            cols.push(Column::new(name, ty));
        }
        Ok(PlanNode {
            schema: Arc::new(Schema::new(cols)?),
            est_rows: child.est_rows,
            kind: PlanKind::Project(exprs),
            children: vec![child],
        })
    }

    pub fn sort(child: PlanNode, keys: Vec<SortKey>) -> Result<PlanNode> {
        check_keys(&child.schema, &keys)?;
        Ok(PlanNode {
            schema: Arc::clone(&child.schema),
            est_rows: child.est_rows,
            kind: PlanKind::Sort(keys),
            children: vec![child],
        })
    }

    pub fn window_row_number(
        child: PlanNode,
        partition: Vec<usize>,
        order: Vec<SortKey>,
        name: &str,
    ) -> Result<PlanNode> {
        check_keys(&child.schema, &order)?;
        check_cols(&child.schema, &partition)?;
        let mut cols = child.schema.columns().to_vec();
        cols.push(Column::new(name, DataType::Int64));
        Ok(PlanNode {
            schema: Arc::new(Schema::new(cols)?),
            est_rows: child.est_rows,
            kind: PlanKind::WindowRowNumber { partition, order },
            children: vec![child],
        })
    }

    pub fn redistribute(child: PlanNode, columns: Vec<usize>, nseg: usize) -> Result<PlanNode> {
        if columns.is_empty() {
            return Err(Error::Plan("redistribute needs at least one column".into()));
        }
        check_cols(&child.schema, &columns)?;
        let est = match child.locus() {
            Locus::Segments => child.est_rows,
            Locus::Master => child.est_rows / nseg as f64,
        };
        Ok(PlanNode {
            schema: Arc::clone(&child.schema),
            est_rows: est,
            kind: PlanKind::Redistribute { columns, nseg },
            children: vec![child],
        })
    }

    pub fn gather(child: PlanNode, nseg: usize) -> Result<PlanNode> {
        if child.locus() != Locus::Segments {
            return Err(Error::Plan("gather motion over a master-side subtree".into()));
        }
        Ok(PlanNode {
            schema: Arc::clone(&child.schema),
            est_rows: child.est_rows * nseg as f64,
            kind: PlanKind::Gather { nseg },
            children: vec![child],
        })
    }

    /// Places a transducer over `child`, whose output must match the
    /// declared input types position by position.
    pub fn transducer(child: PlanNode, spec: TransducerSpec) -> Result<PlanNode> {
        if !child.schema.same_types(&spec.in_schema) {
            return Err(Error::Type(format!(
                "transducer input {} does not match its input expressions {}",
                spec.in_schema, child.schema
            )));
        }
        Ok(PlanNode {
            schema: Arc::clone(&spec.out_schema),
            est_rows: child.est_rows,
            kind: PlanKind::Transducer(spec),
            children: vec![child],
        })
    }

    pub fn child(&self) -> &PlanNode {
        &self.children[0]
    }

    pub fn locus(&self) -> Locus {
        match &self.kind {
            PlanKind::Scan { .. } | PlanKind::Empty | PlanKind::Redistribute { .. } => {
                Locus::Segments
            }
            PlanKind::Gather { .. } => Locus::Master,
            _ => self.children[0].locus(),
        }
    }

    /// Bytes per output row, from the column types.
    pub fn est_width(&self) -> usize {
        self.schema.row_width()
    }

    /// Checks the structural invariants for execution on `nseg` segments.
    pub fn validate(&self, nseg: usize) -> Result<()> {
        self.validate_inner(nseg, false)
    }

    fn validate_inner(&self, nseg: usize, gathered: bool) -> Result<()> {
        let want = match self.kind {
            PlanKind::Scan { .. } | PlanKind::Empty => 0,
            _ => 1,
        };
        if self.children.len() != want {
            return Err(Error::Plan(format!(
                "{} node needs {want} child(ren), has {}",
                self.name(),
                self.children.len()
            )));
        }
        let mut gathered = gathered;
        match &self.kind {
            PlanKind::Gather { nseg: n } | PlanKind::Redistribute { nseg: n, .. } if *n != nseg => {
                return Err(Error::Plan(format!(
                    "plan built for {n} segments, cluster has {nseg}"
                )));
            }
            PlanKind::Gather { .. } => {
                if gathered {
                    return Err(Error::Plan("more than one gather motion on a path".into()));
                }
                if self.child().locus() != Locus::Segments {
                    return Err(Error::Plan("gather motion over a master-side subtree".into()));
                }
                gathered = true;
            }
            _ => {}
        }
        self.children
            .iter()
            .try_for_each(|c| c.validate_inner(nseg, gathered))
    }

    pub(crate) fn name(&self) -> &'static str {
        match self.kind {
            PlanKind::Scan { .. } => "Scan",
            PlanKind::Empty => "Result",
            PlanKind::Filter(_) => "Filter",
            PlanKind::Project(_) => "Project",
            PlanKind::Sort(_) => "Sort",
            PlanKind::WindowRowNumber { .. } => "WindowAgg",
            PlanKind::Redistribute { .. } => "Redistribute Motion",
            PlanKind::Gather { .. } => "Gather Motion",
            PlanKind::Transducer(_) => "Transducer",
        }
    }

    /// Sort order guaranteed on this node's output streams.
    pub fn output_ordering(&self) -> Vec<SortKey> {
        match &self.kind {
            PlanKind::Sort(keys) => keys.clone(),
            PlanKind::Filter(_) => self.child().output_ordering(),
            PlanKind::WindowRowNumber { partition, order } => partition
                .iter()
                .map(|&c| SortKey::asc(c))
                .chain(order.iter().copied())
                .collect(),
            PlanKind::Project(exprs) => {
                let mut out = Vec::new();
                for k in self.child().output_ordering() {
                    match exprs.iter().position(|e| *e == Expr::Column(k.column)) {
                        Some(pos) => out.push(SortKey {
                            column: pos,
                            descending: k.descending,
                        }),
                        None => break,
                    }
                }
                out
            }
            _ => Vec::new(),
        }
    }

    /// Columns the output streams are hash-partitioned on, if known.
    pub fn output_partitioning(&self) -> Option<Vec<usize>> {
        match &self.kind {
            PlanKind::Redistribute { columns, .. } => Some(columns.clone()),
            PlanKind::Filter(_) | PlanKind::Sort(_) | PlanKind::WindowRowNumber { .. } => {
                self.child().output_partitioning()
            }
            PlanKind::Project(exprs) => {
                let cols = self.child().output_partitioning()?;
                cols.iter()
                    .map(|&c| exprs.iter().position(|e| *e == Expr::Column(c)))
                    .collect()
            }
            _ => None,
        }
    }
}

fn check_cols(schema: &Schema, cols: &[usize]) -> Result<()> {
    match cols.iter().find(|&&c| c >= schema.len()) {
        Some(c) => Err(Error::Plan(format!("column #{c} out of range for {schema}"))),
        None => Ok(()),
    }
}

fn check_keys(schema: &Schema, keys: &[SortKey]) -> Result<()> {
    let cols: Vec<usize> = keys.iter().map(|k| k.column).collect();
    check_cols(schema, &cols)
}
