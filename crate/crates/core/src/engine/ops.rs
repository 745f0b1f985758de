//! Segment-local relational operators.

use std::cmp::Ordering;
use std::sync::Arc;

use super::expr::Expr;
use super::{Operator, SortKey};
use crate::datamodel::{Datum, Row, RowGroup, SchemaRef};
use crate::error::{Error, Result};

pub(crate) fn compare_rows(a: &Row, b: &Row, keys: &[SortKey]) -> Ordering {
    for k in keys {
        let o = a[k.column].cmp(&b[k.column]);
        let o = if k.descending { o.reverse() } else { o };
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Emits stored rows in batches.
pub struct ScanOp {
    schema: SchemaRef,
    rows: Arc<Vec<Row>>,
    pos: usize,
    batch_size: usize,
}

impl ScanOp {
    pub fn new(schema: SchemaRef, rows: Arc<Vec<Row>>, batch_size: usize) -> Self {
        ScanOp {
            schema,
            rows,
            pos: 0,
            batch_size: batch_size.max(1),
        }
    }
}

impl Operator for ScanOp {
    fn schema(&self) -> &SchemaRef {
        &self.schema
    }

    fn next_batch(&mut self) -> Result<Option<RowGroup>> {
        if self.pos >= self.rows.len() {
            return Ok(None);
        }
        let end = (self.pos + self.batch_size).min(self.rows.len());
        let chunk = self.rows[self.pos..end].to_vec();
        self.pos = end;
        Ok(Some(RowGroup::new_unchecked(Arc::clone(&self.schema), chunk)))
    }
}

/// Emits an owned list of rows; empty for the `Result` plan node.
pub struct ValuesOp {
    schema: SchemaRef,
    rows: std::vec::IntoIter<Row>,
    batch_size: usize,
}

impl ValuesOp {
    pub fn new(schema: SchemaRef, rows: Vec<Row>, batch_size: usize) -> Result<Self> {
        for r in &rows {
            schema.validate(r.cells())?;
        }
        Ok(ValuesOp {
            schema,
            rows: rows.into_iter(),
            batch_size: batch_size.max(1),
        })
    }
}

impl Operator for ValuesOp {
    fn schema(&self) -> &SchemaRef {
        &self.schema
    }

    fn next_batch(&mut self) -> Result<Option<RowGroup>> {
        let chunk: Vec<Row> = self.rows.by_ref().take(self.batch_size).collect();
        if chunk.is_empty() {
            return Ok(None);
        }
        Ok(Some(RowGroup::new_unchecked(Arc::clone(&self.schema), chunk)))
    }
}

pub struct FilterOp {
    child: Box<dyn Operator>,
    predicate: Expr,
}

impl FilterOp {
    pub fn new(child: Box<dyn Operator>, predicate: Expr) -> Self {
        FilterOp { child, predicate }
    }
}

impl Operator for FilterOp {
    fn schema(&self) -> &SchemaRef {
        self.child.schema()
    }

    fn next_batch(&mut self) -> Result<Option<RowGroup>> {
        while let Some(rg) = self.child.next_batch()? {
            let schema = Arc::clone(rg.schema());
            let mut kept = Vec::new();
            for r in rg.into_rows() {
                let v = self
                    .predicate
                    .eval(&r)
                    .map_err(|e| Error::execution("Filter", e.to_string()))?;
                if v == Datum::Bool(true) {
                    kept.push(r);
                }
            }
            if !kept.is_empty() {
                return Ok(Some(RowGroup::new_unchecked(schema, kept)));
            }
        }
        Ok(None)
    }
}

pub struct ProjectOp {
    child: Box<dyn Operator>,
    exprs: Vec<Expr>,
    schema: SchemaRef,
}

impl ProjectOp {
    pub fn new(child: Box<dyn Operator>, exprs: Vec<Expr>, schema: SchemaRef) -> Self {
        ProjectOp {
            child,
            exprs,
            schema,
        }
    }
}

impl Operator for ProjectOp {
    fn schema(&self) -> &SchemaRef {
        &self.schema
    }

    fn next_batch(&mut self) -> Result<Option<RowGroup>> {
        let Some(rg) = self.child.next_batch()? else {
            return Ok(None);
        };
        let mut out = Vec::with_capacity(rg.row_count());
        for r in rg.rows() {
            let cells = self
                .exprs
                .iter()
                .map(|e| e.eval(r))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::execution("Project", e.to_string()))?;
            self.schema
                .validate(&cells)
                .map_err(|e| Error::execution("Project", e.to_string()))?;
            out.push(Row::new(cells));
        }
        Ok(Some(RowGroup::new_unchecked(Arc::clone(&self.schema), out)))
    }
}

/// Blocking stable sort of the whole input stream.
pub struct SortOp {
    child: Box<dyn Operator>,
    keys: Vec<SortKey>,
    sorted: Option<ValuesOp>,
    batch_size: usize,
}

impl SortOp {
    pub fn new(child: Box<dyn Operator>, keys: Vec<SortKey>, batch_size: usize) -> Self {
        SortOp {
            child,
            keys,
            sorted: None,
            batch_size,
        }
    }
}

impl Operator for SortOp {
    fn schema(&self) -> &SchemaRef {
        self.child.schema()
    }

    fn next_batch(&mut self) -> Result<Option<RowGroup>> {
        if self.sorted.is_none() {
            let mut rows = super::collect_rows(&mut *self.child)?;
            rows.sort_by(|a, b| compare_rows(a, b, &self.keys));
            let schema = Arc::clone(self.child.schema());
            self.sorted = Some(ValuesOp {
                schema,
                rows: rows.into_iter(),
                batch_size: self.batch_size.max(1),
            });
        }
        self.sorted.as_mut().unwrap().next_batch()
    }
}

/// `row_number() over (partition by .. order by ..)`: sorts its input by
/// partition then order keys and appends the 1-based position of each row
/// within its partition.
pub struct WindowRowNumberOp {
    child: Box<dyn Operator>,
    partition: Vec<usize>,
    order: Vec<SortKey>,
    schema: SchemaRef,
    out: Option<ValuesOp>,
    batch_size: usize,
}

impl WindowRowNumberOp {
    pub fn new(
        child: Box<dyn Operator>,
        partition: Vec<usize>,
        order: Vec<SortKey>,
        schema: SchemaRef,
        batch_size: usize,
    ) -> Self {
        WindowRowNumberOp {
            child,
            partition,
            order,
            schema,
            out: None,
            batch_size,
        }
    }

    fn number(&mut self) -> Result<Vec<Row>> {
        let mut rows = super::collect_rows(&mut *self.child)?;
        let keys: Vec<SortKey> = self
            .partition
            .iter()
            .map(|&c| SortKey::asc(c))
            .chain(self.order.iter().copied())
            .collect();
        rows.sort_by(|a, b| compare_rows(a, b, &keys));
        let mut n = 0i64;
        let mut prev: Option<Vec<Datum>> = None;
        let mut out = Vec::with_capacity(rows.len());
        for mut r in rows {
            let key: Vec<Datum> = self.partition.iter().map(|&c| r[c].clone()).collect();
            if prev.as_ref() != Some(&key) {
                n = 0;
                prev = Some(key);
            }
            n += 1;
            r.push(Datum::Int64(n));
            out.push(r);
        }
        Ok(out)
    }
}

impl Operator for WindowRowNumberOp {
    fn schema(&self) -> &SchemaRef {
        &self.schema
    }

    fn next_batch(&mut self) -> Result<Option<RowGroup>> {
        if self.out.is_none() {
            let rows = self.number()?;
            self.out = Some(ValuesOp {
                schema: Arc::clone(&self.schema),
                rows: rows.into_iter(),
                batch_size: self.batch_size.max(1),
            });
        }
        self.out.as_mut().unwrap().next_batch()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Schema;
    use crate::engine::collect_rows;
    use crate::row;

    fn values(spec: &str, rows: Vec<Row>) -> Box<dyn Operator> {
        let s = Arc::new(Schema::parse_spec(spec).unwrap());
        Box::new(ValuesOp::new(s, rows, 2).unwrap())
    }

    #[test]
    fn row_number_sorts_then_enumerates() {
        let input = values(
            "symbol:text,day:int32",
            vec![row!["B", 2], row!["A", 5], row!["A", 3], row!["A", 9], row!["B", 1]],
        );
        let schema = Arc::new(Schema::parse_spec("symbol:text,day:int32,rn:int64").unwrap());
        let mut op = WindowRowNumberOp::new(input, vec![0], vec![SortKey::asc(1)], schema, 2);
        let rows = collect_rows(&mut op).unwrap();
        assert_eq!(
            rows,
            vec![
                row!["A", 3, 1i64],
                row!["A", 5, 2i64],
                row!["A", 9, 3i64],
                row!["B", 1, 1i64],
                row!["B", 2, 2i64],
            ]
        );
    }

    #[test]
    fn sort_is_stable_and_honors_direction() {
        let input = values(
            "k:int32,v:text",
            vec![row![1, "a"], row![2, "b"], row![1, "c"], row![Datum::Null, "n"]],
        );
        let mut op = SortOp::new(input, vec![SortKey::desc(0)], 3);
        let rows = collect_rows(&mut op).unwrap();
        assert_eq!(
            rows,
            vec![row![2, "b"], row![1, "a"], row![1, "c"], row![Datum::Null, "n"]]
        );
    }

    #[test]
    fn project_reports_operator_on_runtime_error() {
        let input = values("k:int32", vec![row![1], row![0]]);
        let schema = Arc::new(Schema::parse_spec("q:int32").unwrap());
        let div = Expr::binary(crate::engine::BinaryOp::Div, Expr::lit(10), Expr::col(0));
        let mut op = ProjectOp::new(input, vec![div], schema);
        let err = collect_rows(&mut op).unwrap_err();
        assert!(err.to_string().starts_with("Project:"), "{err}");
    }
}
