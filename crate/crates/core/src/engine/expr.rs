//! Scalar expressions evaluated against a single row.

use std::cmp::Ordering;

use crate::datamodel::{DataType, Datum, Row, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "%",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(
            self,
            BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod
        )
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge
        )
    }
}

/// A typed scalar expression. Columns are referenced by input position.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(Datum),
    Column(usize),
    Unary {
        op: UnaryOp,
        expr: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Case {
        branches: Vec<(Expr, Expr)>,
        otherwise: Option<Box<Expr>>,
    },
    Cast {
        expr: Box<Expr>,
        to: DataType,
    },
}

/// Result type of mixing two numeric types.
fn promote(a: DataType, b: DataType) -> DataType {
    use DataType::*;
    match (a, b) {
        (Float64, _) | (_, Float64) => Float64,
        (Int64, _) | (_, Int64) => Int64,
        _ => Int32,
    }
}

fn unify(a: Option<DataType>, b: Option<DataType>) -> Result<Option<DataType>> {
    Ok(match (a, b) {
        (None, t) | (t, None) => t,
        (Some(x), Some(y)) if x == y => Some(x),
        (Some(x), Some(y)) if x.is_numeric() && y.is_numeric() => Some(promote(x, y)),
        (Some(x), Some(y)) => {
            return Err(Error::Type(format!("incompatible types {x} and {y}")));
        }
    })
}

impl Expr {
    pub fn lit(d: impl Into<Datum>) -> Expr {
        Expr::Literal(d.into())
    }

    pub fn col(idx: usize) -> Expr {
        Expr::Column(idx)
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn unary(op: UnaryOp, expr: Expr) -> Expr {
        Expr::Unary {
            op,
            expr: Box::new(expr),
        }
    }

    pub fn cast(self, to: DataType) -> Expr {
        Expr::Cast {
            expr: Box::new(self),
            to,
        }
    }

    /// Builds a CASE whose branches all yield the unified result type,
    /// inserting casts where numeric branches differ.
    pub fn case(
        branches: Vec<(Expr, Expr)>,
        otherwise: Option<Expr>,
        schema: &Schema,
    ) -> Result<Expr> {
        let mut ty = None;
        for (_, v) in &branches {
            ty = unify(ty, v.data_type(schema)?)?;
        }
        if let Some(o) = &otherwise {
            ty = unify(ty, o.data_type(schema)?)?;
        }
        let fit = |e: Expr| -> Result<Expr> {
            match (ty, e.data_type(schema)?) {
                (Some(t), Some(et)) if t != et => Ok(e.cast(t)),
                _ => Ok(e),
            }
        };
        let branches = branches
            .into_iter()
            .map(|(c, v)| Ok((c, fit(v)?)))
            .collect::<Result<Vec<_>>>()?;
        let otherwise = otherwise.map(fit).transpose()?.map(Box::new);
        let e = Expr::Case {
            branches,
            otherwise,
        };
        e.data_type(schema)?;
        Ok(e)
    }

    /// Static type against `schema`. `None` means the expression is an
    /// untyped null.
    pub fn data_type(&self, schema: &Schema) -> Result<Option<DataType>> {
        use DataType::*;
        match self {
            Expr::Literal(d) => Ok(d.data_type()),
            Expr::Column(i) => {
                if *i >= schema.len() {
                    return Err(Error::Schema(format!("column #{i} out of range for {schema}")));
                }
                Ok(Some(schema.column(*i).data_type))
            }
            Expr::Unary { op, expr } => {
                let t = expr.data_type(schema)?;
                match (op, t) {
                    (_, None) => Ok(None),
                    (UnaryOp::Neg, Some(t)) if t.is_numeric() => Ok(Some(t)),
                    (UnaryOp::Not, Some(Bool)) => Ok(Some(Bool)),
                    (UnaryOp::Neg, Some(t)) => Err(Error::Type(format!("cannot negate {t}"))),
                    (UnaryOp::Not, Some(t)) => Err(Error::Type(format!("NOT needs bool, got {t}"))),
                }
            }
            Expr::Binary { op, left, right } => {
                let l = left.data_type(schema)?;
                let r = right.data_type(schema)?;
                if op.is_arithmetic() {
                    for t in [l, r].into_iter().flatten() {
                        if !t.is_numeric() {
                            return Err(Error::Type(format!(
                                "operator {} needs numeric operands, got {t}",
                                op.symbol()
                            )));
                        }
                    }
                    return unify(l, r);
                }
                if op.is_comparison() {
                    unify(l, r).map_err(|_| {
                        Error::Type(format!(
                            "cannot compare {} with {}",
                            l.map_or("null", DataType::name),
                            r.map_or("null", DataType::name)
                        ))
                    })?;
                    return Ok(Some(Bool));
                }
                for t in [l, r].into_iter().flatten() {
                    if t != Bool {
                        return Err(Error::Type(format!(
                            "operator {} needs bool operands, got {t}",
                            op.symbol()
                        )));
                    }
                }
                Ok(Some(Bool))
            }
            Expr::Case {
                branches,
                otherwise,
            } => {
                let mut ty = None;
                for (c, v) in branches {
                    match c.data_type(schema)? {
                        None | Some(Bool) => {}
                        Some(t) => {
                            return Err(Error::Type(format!("CASE condition must be bool, got {t}")))
                        }
                    }
                    ty = unify(ty, v.data_type(schema)?)?;
                }
                if let Some(o) = otherwise {
                    ty = unify(ty, o.data_type(schema)?)?;
                }
                Ok(ty)
            }
            Expr::Cast { expr, to } => match expr.data_type(schema)? {
                None => Ok(Some(*to)),
                Some(t) if t == *to || (t.is_numeric() && to.is_numeric()) => Ok(Some(*to)),
                Some(t) => Err(Error::Type(format!("cannot cast {t} to {to}"))),
            },
        }
    }

    pub fn eval(&self, row: &Row) -> Result<Datum> {
        match self {
            Expr::Literal(d) => Ok(d.clone()),
            Expr::Column(i) => row
                .get(*i)
                .cloned()
                .ok_or_else(|| Error::Schema(format!("column #{i} out of range"))),
            Expr::Unary { op, expr } => {
                let v = expr.eval(row)?;
                match (op, v) {
                    (_, Datum::Null) => Ok(Datum::Null),
                    (UnaryOp::Not, Datum::Bool(b)) => Ok(Datum::Bool(!b)),
                    (UnaryOp::Neg, Datum::Int32(x)) => x
                        .checked_neg()
                        .map(Datum::Int32)
                        .ok_or_else(|| overflow()),
                    (UnaryOp::Neg, Datum::Int64(x)) => x
                        .checked_neg()
                        .map(Datum::Int64)
                        .ok_or_else(|| overflow()),
                    (UnaryOp::Neg, Datum::Float64(x)) => Ok(Datum::Float64(-x)),
                    (op, v) => Err(Error::Type(format!("invalid operand {v:?} for {op:?}"))),
                }
            }
            Expr::Binary { op, left, right } => match op {
                BinaryOp::And => {
                    let l = left.eval(row)?;
                    if l == Datum::Bool(false) {
                        return Ok(l);
                    }
                    let r = right.eval(row)?;
                    logic(l, r, false)
                }
                BinaryOp::Or => {
                    let l = left.eval(row)?;
                    if l == Datum::Bool(true) {
                        return Ok(l);
                    }
                    let r = right.eval(row)?;
                    logic(l, r, true)
                }
                op if op.is_arithmetic() => arith(*op, &left.eval(row)?, &right.eval(row)?),
                op => compare(*op, &left.eval(row)?, &right.eval(row)?),
            },
            Expr::Case {
                branches,
                otherwise,
            } => {
                for (c, v) in branches {
                    if c.eval(row)? == Datum::Bool(true) {
                        return v.eval(row);
                    }
                }
                match otherwise {
                    Some(o) => o.eval(row),
                    None => Ok(Datum::Null),
                }
            }
            Expr::Cast { expr, to } => cast(expr.eval(row)?, *to),
        }
    }

    /// Input columns the expression reads.
    pub fn columns(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Literal(_) => {}
            Expr::Column(i) => out.push(*i),
            Expr::Unary { expr, .. } | Expr::Cast { expr, .. } => expr.columns(out),
            Expr::Binary { left, right, .. } => {
                left.columns(out);
                right.columns(out);
            }
            Expr::Case {
                branches,
                otherwise,
            } => {
                for (c, v) in branches {
                    c.columns(out);
                    v.columns(out);
                }
                if let Some(o) = otherwise {
                    o.columns(out);
                }
            }
        }
    }
}

fn overflow() -> Error {
    Error::Type("integer out of range".into())
}

/// Three-valued AND (`is_or == false`) and OR.
fn logic(l: Datum, r: Datum, is_or: bool) -> Result<Datum> {
    let as_opt = |d: &Datum| -> Result<Option<bool>> {
        match d {
            Datum::Null => Ok(None),
            Datum::Bool(b) => Ok(Some(*b)),
            other => Err(Error::Type(format!("expected bool, got {other:?}"))),
        }
    };
    let (l, r) = (as_opt(&l)?, as_opt(&r)?);
    let dominant = is_or;
    Ok(match (l, r) {
        (Some(a), _) if a == dominant => Datum::Bool(dominant),
        (_, Some(b)) if b == dominant => Datum::Bool(dominant),
        (Some(_), Some(_)) => Datum::Bool(!dominant),
        _ => Datum::Null,
    })
}

fn int_op(op: BinaryOp, a: i64, b: i64) -> Result<i64> {
    let r = match op {
        BinaryOp::Add => a.checked_add(b),
        BinaryOp::Sub => a.checked_sub(b),
        BinaryOp::Mul => a.checked_mul(b),
        BinaryOp::Div | BinaryOp::Mod if b == 0 => {
            return Err(Error::Type("division by zero".into()))
        }
        BinaryOp::Div => a.checked_div(b),
        BinaryOp::Mod => a.checked_rem(b),
        _ => unreachable!("not arithmetic"),
    };
    r.ok_or_else(overflow)
}

fn arith(op: BinaryOp, a: &Datum, b: &Datum) -> Result<Datum> {
    use Datum::*;
    match (a, b) {
        (Null, _) | (_, Null) => Ok(Null),
        (Int32(x), Int32(y)) => {
            let v = int_op(op, *x as i64, *y as i64)?;
            i32::try_from(v).map(Int32).map_err(|_| overflow())
        }
        (Int32(_) | Int64(_), Int32(_) | Int64(_)) => {
            int_op(op, a.as_i64().unwrap(), b.as_i64().unwrap()).map(Int64)
        }
        _ => {
            let (x, y) = match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => (x, y),
                _ => {
                    return Err(Error::Type(format!(
                        "operator {} needs numeric operands",
                        op.symbol()
                    )))
                }
            };
            if matches!(op, BinaryOp::Div | BinaryOp::Mod) && y == 0.0 {
                return Err(Error::Type("division by zero".into()));
            }
            Ok(Float64(match op {
                BinaryOp::Add => x + y,
                BinaryOp::Sub => x - y,
                BinaryOp::Mul => x * y,
                BinaryOp::Div => x / y,
                BinaryOp::Mod => x % y,
                _ => unreachable!("not arithmetic"),
            }))
        }
    }
}

fn compare(op: BinaryOp, a: &Datum, b: &Datum) -> Result<Datum> {
    use Datum::*;
    let ord = match (a, b) {
        (Null, _) | (_, Null) => return Ok(Null),
        (Int32(_) | Int64(_), Int32(_) | Int64(_)) => a.as_i64().cmp(&b.as_i64()),
        (Float64(_), Int32(_) | Int64(_) | Float64(_)) | (Int32(_) | Int64(_), Float64(_)) => {
            a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap())
        }
        _ => crate::datamodel::datum_compare(a, b)?,
    };
    Ok(Bool(match op {
        BinaryOp::Eq => ord == Ordering::Equal,
        BinaryOp::Ne => ord != Ordering::Equal,
        BinaryOp::Lt => ord == Ordering::Less,
        BinaryOp::Le => ord != Ordering::Greater,
        BinaryOp::Gt => ord == Ordering::Greater,
        BinaryOp::Ge => ord != Ordering::Less,
        _ => unreachable!("not a comparison"),
    }))
}

fn cast(v: Datum, to: DataType) -> Result<Datum> {
    use Datum::*;
    if v.is_null() || v.data_type() == Some(to) {
        return Ok(v);
    }
    match (to, &v) {
        (DataType::Float64, Int32(_) | Int64(_)) => Ok(Float64(v.as_f64().unwrap())),
        (DataType::Int64, Int32(x)) => Ok(Int64(*x as i64)),
        (DataType::Int32, Int64(x)) => i32::try_from(*x).map(Int32).map_err(|_| overflow()),
        (DataType::Int64, Float64(x)) if x.is_finite() => Ok(Int64(x.trunc() as i64)),
        (DataType::Int32, Float64(x)) if x.is_finite() && x.abs() < 2.2e9 => {
            i32::try_from(x.trunc() as i64).map(Int32).map_err(|_| overflow())
        }
        _ => Err(Error::Type(format!("cannot cast {v:?} to {to}"))),
    }
}
