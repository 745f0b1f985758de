//! Turns a parsed query into a physical plan.
//!
//! A transducer select becomes a Transducer node over a child that computes
//! the trailing input expressions, with a Project above it for the
//! `transducer_col` picks. The child and the consumer are planned on their
//! own; nothing is pushed through the Transducer.

use std::sync::Arc;

use super::ast::*;
use super::directives::parse_transducer_spec;
use super::parser::{transducer_body, transducer_col};
use crate::datamodel::{DataType, Datum, Schema};
use crate::engine::{Catalog, Expr, Locus, PlanNode, SortKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct ScopeCol {
    qualifier: Option<String>,
    name: String,
    /// Window results are addressable only through their function call.
    hidden: bool,
}

/// Output columns of a planned subtree, aligned with its schema.
#[derive(Debug, Clone)]
struct Scope {
    cols: Vec<ScopeCol>,
    /// Window spec whose row number sits in column `.1`.
    window: Option<(WindowSpec, usize)>,
}

impl Scope {
    fn of(schema: &Schema, qualifier: Option<&str>) -> Scope {
        Scope {
            cols: schema
                .columns()
                .iter()
                .map(|c| ScopeCol {
                    qualifier: qualifier.map(str::to_string),
                    name: c.name.clone(),
                    hidden: false,
                })
                .collect(),
            window: None,
        }
    }

    fn resolve(&self, qualifier: Option<&str>, name: &str) -> Result<usize> {
        let mut found = self.cols.iter().enumerate().filter(|(_, c)| {
            !c.hidden
                && c.name.eq_ignore_ascii_case(name)
                && qualifier.map_or(true, |q| {
                    c.qualifier.as_deref().is_some_and(|cq| cq.eq_ignore_ascii_case(q))
                })
        });
        let display = match qualifier {
            Some(q) => format!("{q}.{name}"),
            None => name.to_string(),
        };
        match (found.next(), found.next()) {
            (Some((i, _)), None) => Ok(i),
            (Some(_), Some(_)) => Err(Error::Plan(format!("column reference '{display}' is ambiguous"))),
            (None, _) => Err(Error::Plan(format!("column '{display}' does not exist"))),
        }
    }
}

type Env = [(String, Query)];

struct Planner<'a> {
    catalog: &'a dyn Catalog,
    nseg: usize,
}

fn literal(l: &Literal) -> Datum {
    match l {
        Literal::Integer(v) => match i32::try_from(*v) {
            Ok(x) => Datum::Int32(x),
            Err(_) => Datum::Int64(*v),
        },
        Literal::Float(v) => Datum::Float64(*v),
        Literal::String(s) | Literal::Dollar(s) => Datum::Text(s.clone()),
        Literal::Bool(b) => Datum::Bool(*b),
        Literal::Null => Datum::Null,
    }
}

/// Integer literal retyped to fit a declared column type.
fn coerce_literal(e: &AstExpr, to: DataType) -> Option<Expr> {
    let v = match e {
        AstExpr::Literal(Literal::Integer(v)) => *v,
        AstExpr::Unary {
            op: crate::engine::UnaryOp::Neg,
            expr,
        } => match expr.as_ref() {
            AstExpr::Literal(Literal::Integer(v)) => v.checked_neg()?,
            _ => return None,
        },
        _ => return None,
    };
    let d = match to {
        DataType::Int32 => Datum::Int32(i32::try_from(v).ok()?),
        DataType::Int64 => Datum::Int64(v),
        DataType::Float64 => Datum::Float64(v as f64),
        _ => return None,
    };
    Some(Expr::Literal(d))
}

/// Appends `_2`, `_3`, ... to names already taken.
fn dedupe(names: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(names.len());
    for n in names {
        let mut cand = n.clone();
        let mut k = 2;
        while out.iter().any(|o| o.eq_ignore_ascii_case(&cand)) {
            cand = format!("{n}_{k}");
            k += 1;
        }
        out.push(cand);
    }
    out
}

fn is_identity(exprs: &[Expr], width: usize) -> bool {
    exprs.len() == width && exprs.iter().enumerate().all(|(i, e)| *e == Expr::Column(i))
}

fn find_window(e: &AstExpr, out: &mut Vec<WindowSpec>) -> Result<()> {
    match e {
        AstExpr::Function { name, args, over } => {
            if let Some(w) = over {
                if name != "row_number" || !args.is_empty() {
                    return Err(Error::Plan(format!(
                        "window function {name}() is not supported; only row_number()"
                    )));
                }
                if !out.contains(w) {
                    out.push(w.clone());
                }
            }
            args.iter().try_for_each(|a| find_window(a, out))
        }
        AstExpr::Unary { expr, .. } => find_window(expr, out),
        AstExpr::Binary { left, right, .. } => {
            find_window(left, out)?;
            find_window(right, out)
        }
        AstExpr::Case {
            branches,
            otherwise,
        } => {
            for (c, v) in branches {
                find_window(c, out)?;
                find_window(v, out)?;
            }
            otherwise.as_deref().map_or(Ok(()), |o| find_window(o, out))
        }
        _ => Ok(()),
    }
}

impl Planner<'_> {
    fn expr(&self, e: &AstExpr, scope: &Scope, schema: &Schema) -> Result<Expr> {
        let out = match e {
            AstExpr::Literal(l) => Expr::Literal(literal(l)),
            AstExpr::Column { qualifier, name } => {
                Expr::Column(scope.resolve(qualifier.as_deref(), name)?)
            }
            AstExpr::Unary { op, expr } => Expr::unary(*op, self.expr(expr, scope, schema)?),
            AstExpr::Binary { op, left, right } => Expr::binary(
                *op,
                self.expr(left, scope, schema)?,
                self.expr(right, scope, schema)?,
            ),
            AstExpr::Case {
                branches,
                otherwise,
            } => {
                let branches = branches
                    .iter()
                    .map(|(c, v)| Ok((self.expr(c, scope, schema)?, self.expr(v, scope, schema)?)))
                    .collect::<Result<Vec<_>>>()?;
                let otherwise = otherwise
                    .as_deref()
                    .map(|o| self.expr(o, scope, schema))
                    .transpose()?;
                Expr::case(branches, otherwise, schema)?
            }
            AstExpr::Function {
                name,
                over: Some(w),
                ..
            } => match &scope.window {
                Some((spec, col)) if spec == w && name == "row_number" => Expr::Column(*col),
                _ => {
                    return Err(Error::Plan(format!(
                        "window function {name}() is not allowed here"
                    )))
                }
            },
            AstExpr::Function { name, .. } => {
                return Err(Error::Plan(format!("unknown function {name}()")));
            }
        };
        out.data_type(schema)?;
        Ok(out)
    }

    fn column_index(&self, e: &AstExpr, scope: &Scope, what: &str) -> Result<usize> {
        match e {
            AstExpr::Column { qualifier, name } => scope.resolve(qualifier.as_deref(), name),
            other => Err(Error::Plan(format!(
                "{what} supports column references only, got {other}"
            ))),
        }
    }

    /// Plans a query whose result stays distributed; returns the plan and
    /// the output column names.
    fn query(&self, q: &Query, env: &Env) -> Result<(PlanNode, Scope)> {
        if !q.order_by.is_empty() {
            return Err(Error::Plan(
                "ORDER BY is only supported on the outermost query".into(),
            ));
        }
        self.query_body(q, env)
    }

    fn query_body(&self, q: &Query, env: &Env) -> Result<(PlanNode, Scope)> {
        let mut env = env.to_vec();
        for (i, cte) in q.with.iter().enumerate() {
            if q.with[..i].iter().any(|c| c.name.eq_ignore_ascii_case(&cte.name)) {
                return Err(Error::Plan(format!("WITH name '{}' defined twice", cte.name)));
            }
            env.push((cte.name.clone(), cte.query.clone()));
        }
        self.select(&q.select, &env)
    }

    fn from_item(&self, item: &FromItem, env: &Env) -> Result<(PlanNode, Scope)> {
        match item {
            FromItem::Table { name, alias } => {
                let qualifier = alias.as_deref().unwrap_or(name);
                if let Some(i) = env.iter().rposition(|(n, _)| n.eq_ignore_ascii_case(name)) {
                    let (node, scope) = self.query(&env[i].1, &env[..i])?;
                    return Ok((node, requalify(scope, Some(qualifier))));
                }
                let info = self.catalog.table_info(name)?;
                let node = PlanNode::scan(name, Arc::clone(&info.schema), info.rows, self.nseg);
                let scope = Scope::of(&info.schema, Some(qualifier));
                Ok((node, scope))
            }
            FromItem::Subquery { query, alias } => {
                let (node, scope) = self.query(query, env)?;
                Ok((node, requalify(scope, alias.as_deref())))
            }
        }
    }

    /// Adds the row number for `spec`: redistribute by the partition,
    /// sort by partition then order keys, number.
    fn window(&self, node: PlanNode, scope: &mut Scope, spec: &WindowSpec) -> Result<PlanNode> {
        if spec.partition_by.is_empty() {
            return Err(Error::Plan(
                "row_number() over () needs a PARTITION BY clause".into(),
            ));
        }
        let partition = spec
            .partition_by
            .iter()
            .map(|e| self.column_index(e, scope, "PARTITION BY"))
            .collect::<Result<Vec<_>>>()?;
        let order = spec
            .order_by
            .iter()
            .map(|o| {
                let column = self.column_index(&o.expr, scope, "window ORDER BY")?;
                Ok(SortKey {
                    column,
                    descending: o.desc,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut keys: Vec<SortKey> = partition.iter().map(|&c| SortKey::asc(c)).collect();
        keys.extend(order.iter().copied());
        let node = PlanNode::redistribute(node, partition.clone(), self.nseg)?;
        let node = PlanNode::sort(node, keys)?;
        let taken: Vec<String> = node.schema.columns().iter().map(|c| c.name.clone()).collect();
        let mut names = taken.clone();
        names.push("row_number".into());
        let name = dedupe(names).pop().expect("non-empty");
        let node = PlanNode::window_row_number(node, partition, order, &name)?;
        scope.cols.push(ScopeCol {
            qualifier: None,
            name,
            hidden: true,
        });
        scope.window = Some((spec.clone(), scope.cols.len() - 1));
        Ok(node)
    }

    fn select(&self, sel: &Select, env: &Env) -> Result<(PlanNode, Scope)> {
        let is_transducer = sel.items.iter().any(|it| {
            matches!(it, SelectItem::Expr { expr, .. } if transducer_body(expr).is_some())
        });
        let (mut node, mut scope) = match &sel.from {
            Some(item) => self.from_item(item, env)?,
            None if is_transducer => return self.transducer_without_from(sel),
            None => {
                return Err(Error::Plan(
                    "SELECT without FROM is only supported for transducer queries".into(),
                ))
            }
        };
        if let Some(w) = &sel.selection {
            let pred = self.expr(w, &scope, &node.schema)?;
            node = PlanNode::filter(node, pred)?;
        }
        let mut windows = Vec::new();
        for it in &sel.items {
            if let SelectItem::Expr { expr, .. } = it {
                find_window(expr, &mut windows)?;
            }
        }
        match windows.as_slice() {
            [] => {}
            [w] => node = self.window(node, &mut scope, w)?,
            _ => {
                return Err(Error::Plan(
                    "all row_number() calls in one select must share a window".into(),
                ))
            }
        }
        if is_transducer {
            self.transducer(sel, node, &scope)
        } else {
            self.projection(sel, node, &scope)
        }
    }

    fn projection(&self, sel: &Select, node: PlanNode, scope: &Scope) -> Result<(PlanNode, Scope)> {
        let mut exprs = Vec::new();
        let mut names = Vec::new();
        for (i, it) in sel.items.iter().enumerate() {
            match it {
                SelectItem::Wildcard => {
                    for (c, sc) in scope.cols.iter().enumerate() {
                        if !sc.hidden {
                            exprs.push(Expr::Column(c));
                            names.push(sc.name.clone());
                        }
                    }
                }
                SelectItem::Expr { expr, alias } => {
                    exprs.push(self.expr(expr, scope, &node.schema)?);
                    names.push(match (alias, expr) {
                        (Some(a), _) => a.clone(),
                        (None, AstExpr::Column { name, .. }) => name.clone(),
                        (None, AstExpr::Function { name, .. }) => name.clone(),
                        (None, _) => format!("col{}", i + 1),
                    });
                }
            }
        }
        let names = dedupe(names);
        let same_names = names
            .iter()
            .zip(node.schema.columns())
            .all(|(n, c)| *n == c.name);
        let node = if is_identity(&exprs, node.schema.len()) && same_names {
            node
        } else {
            PlanNode::project(node, exprs, names)?
        };
        let scope = Scope::of(&node.schema, None);
        Ok((node, scope))
    }

    fn spec_for(&self, sel: &Select) -> Result<crate::transducer::TransducerSpec> {
        let body = sel
            .items
            .iter()
            .find_map(|it| match it {
                SelectItem::Expr { expr, .. } => transducer_body(expr),
                SelectItem::Wildcard => None,
            })
            .expect("caller checked for a transducer call");
        let spec = parse_transducer_spec(body)?;
        self.catalog.check_transducer(&spec)?;
        Ok(spec)
    }

    fn transducer_without_from(&self, sel: &Select) -> Result<(PlanNode, Scope)> {
        let spec = self.spec_for(sel)?;
        let ninputs = split_items(sel)?.2.len();
        if ninputs > 0 {
            return Err(Error::Plan(
                "transducer input expressions need a FROM clause".into(),
            ));
        }
        let child = PlanNode::empty(Arc::clone(&spec.in_schema));
        self.finish_transducer(sel, child, spec)
    }

    fn transducer(&self, sel: &Select, node: PlanNode, scope: &Scope) -> Result<(PlanNode, Scope)> {
        let spec = self.spec_for(sel)?;
        let (_, _, inputs) = split_items(sel)?;
        let decl = &spec.in_schema;
        if inputs.len() != decl.len() {
            return Err(Error::Plan(format!(
                "transducer declares {} input column(s) {decl} but the select passes {}",
                decl.len(),
                inputs.len()
            )));
        }
        let mut exprs = Vec::with_capacity(inputs.len());
        for (k, (e, col)) in inputs.iter().zip(decl.columns()).enumerate() {
            let x = match coerce_literal(e, col.data_type) {
                Some(x) => x,
                None => self.expr(e, scope, &node.schema)?,
            };
            match x.data_type(&node.schema)? {
                Some(t) if t != col.data_type => {
                    return Err(Error::Type(format!(
                        "transducer input {} ({e}) is {t} but column '{}' is declared {}",
                        k + 1,
                        col.name,
                        col.data_type
                    )));
                }
                _ => {}
            }
            exprs.push(x);
        }
        let child = if is_identity(&exprs, node.schema.len()) {
            node
        } else {
            let names = decl.columns().iter().map(|c| c.name.clone()).collect();
            let types: Vec<DataType> = decl.types().collect();
            PlanNode::project_typed(node, exprs, names, &types)?
        };
        self.finish_transducer(sel, child, spec)
    }

    fn finish_transducer(
        &self,
        sel: &Select,
        child: PlanNode,
        spec: crate::transducer::TransducerSpec,
    ) -> Result<(PlanNode, Scope)> {
        let (outputs, _, _) = split_items(sel)?;
        let out = Arc::clone(&spec.out_schema);
        let node = PlanNode::transducer(child, spec)?;
        let mut exprs = Vec::with_capacity(outputs.len());
        let mut names = Vec::with_capacity(outputs.len());
        for (expr, alias) in outputs {
            let (ty, n) = transducer_col(expr).expect("checked by the parser");
            if n > out.len() {
                return Err(Error::Plan(format!(
                    "{expr} refers past the {} declared output column(s)",
                    out.len()
                )));
            }
            let col = out.column(n - 1);
            if col.data_type != ty {
                return Err(Error::Type(format!(
                    "{expr} does not match output column '{}' declared {}",
                    col.name, col.data_type
                )));
            }
            exprs.push(Expr::Column(n - 1));
            names.push(alias.clone().unwrap_or_else(|| col.name.clone()));
        }
        let node = PlanNode::project(node, exprs, dedupe(names))?;
        let scope = Scope::of(&node.schema, None);
        Ok((node, scope))
    }
}

type ItemRef<'a> = (&'a AstExpr, &'a Option<String>);

/// Splits a transducer select list into output picks, the call, and inputs.
fn split_items(sel: &Select) -> Result<(Vec<ItemRef<'_>>, &AstExpr, Vec<&AstExpr>)> {
    let mut outputs = Vec::new();
    let mut call = None;
    let mut inputs = Vec::new();
    for it in &sel.items {
        match it {
            SelectItem::Wildcard if call.is_some() => {
                return Err(Error::Plan(
                    "'*' cannot be a transducer input; list the columns".into(),
                ))
            }
            SelectItem::Wildcard => {
                return Err(Error::Plan("'*' cannot precede the transducer() call".into()))
            }
            SelectItem::Expr { expr, alias } => {
                if transducer_body(expr).is_some() {
                    call = Some(expr);
                } else if call.is_some() {
                    inputs.push(expr);
                } else {
                    outputs.push((expr, alias));
                }
            }
        }
    }
    Ok((outputs, call.expect("caller checked for a transducer call"), inputs))
}

fn requalify(mut scope: Scope, qualifier: Option<&str>) -> Scope {
    for c in &mut scope.cols {
        c.qualifier = qualifier.map(str::to_string);
    }
    scope
}

/// Plans `query` for execution: results are gathered to the master and
/// sorted if the query has ORDER BY.
pub fn plan(query: &Query, catalog: &dyn Catalog) -> Result<PlanNode> {
    let nseg = catalog.nseg();
    let planner = Planner { catalog, nseg };
    let (mut node, scope) = planner.query_body(query, &[])?;
    if node.locus() == Locus::Segments {
        node = PlanNode::gather(node, nseg)?;
    }
    if !query.order_by.is_empty() {
        let mut keys = Vec::with_capacity(query.order_by.len());
        for o in &query.order_by {
            let column = match &o.expr {
                AstExpr::Literal(Literal::Integer(k)) if *k >= 1 && (*k as usize) <= node.schema.len() => {
                    *k as usize - 1
                }
                AstExpr::Literal(Literal::Integer(k)) => {
                    return Err(Error::Plan(format!("ORDER BY position {k} is out of range")))
                }
                AstExpr::Column { name, .. } => scope.resolve(None, name)?,
                other => {
                    return Err(Error::Plan(format!(
                        "ORDER BY supports output column names or positions, got {other}"
                    )))
                }
            };
            keys.push(SortKey {
                column,
                descending: o.desc,
            });
        }
        node = PlanNode::sort(node, keys)?;
    }
    Ok(node)
}
