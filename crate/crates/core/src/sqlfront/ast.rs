//! Syntax tree and its printer. Printing then parsing yields an equal tree.

use std::fmt;

use crate::engine::{BinaryOp, UnaryOp};

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub explain: bool,
    pub query: Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub with: Vec<Cte>,
    pub select: Select,
    pub order_by: Vec<OrderItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cte {
    pub name: String,
    pub query: Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub items: Vec<SelectItem>,
    pub from: Option<FromItem>,
    pub selection: Option<AstExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard,
    Expr { expr: AstExpr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FromItem {
    Table { name: String, alias: Option<String> },
    Subquery { query: Box<Query>, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderItem {
    pub expr: AstExpr,
    pub desc: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    pub partition_by: Vec<AstExpr>,
    pub order_by: Vec<OrderItem>,
}

/// Literals stay untyped until planning.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Integer(i64),
    Float(f64),
    String(String),
    /// `$$ ... $$` text.
    Dollar(String),
    Bool(bool),
    Null,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AstExpr {
    Literal(Literal),
    Column {
        qualifier: Option<String>,
        name: String,
    },
    Unary {
        op: UnaryOp,
        expr: Box<AstExpr>,
    },
    Binary {
        op: BinaryOp,
        left: Box<AstExpr>,
        right: Box<AstExpr>,
    },
    Case {
        branches: Vec<(AstExpr, AstExpr)>,
        otherwise: Option<Box<AstExpr>>,
    },
    Function {
        name: String,
        args: Vec<AstExpr>,
        over: Option<WindowSpec>,
    },
}

/// Words that cannot be bare identifiers. `end` and `begin` are not
/// reserved so they can name columns.
pub const RESERVED: &[&str] = &[
    "select", "from", "where", "with", "as", "and", "or", "not", "case", "when", "then", "else",
    "over", "partition", "by", "order", "asc", "desc", "null", "true", "false", "explain",
];

/// Prints an identifier, quoting it unless it lexes back unchanged.
pub struct Ident<'a>(pub &'a str);

impl fmt::Display for Ident<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.0;
        let simple = s.starts_with(|c: char| c.is_ascii_lowercase() || c == '_')
            && s.chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
        if simple && !RESERVED.contains(&s) && s != "end" {
            f.write_str(s)
        } else {
            write!(f, "\"{}\"", s.replace('"', "\"\""))
        }
    }
}

fn comma_list<T>(
    f: &mut fmt::Formatter<'_>,
    items: &[T],
    mut each: impl FnMut(&mut fmt::Formatter<'_>, &T) -> fmt::Result,
) -> fmt::Result {
    for (i, it) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        each(f, it)?;
    }
    Ok(())
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.explain {
            f.write_str("explain ")?;
        }
        write!(f, "{}", self.query)
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.with.is_empty() {
            f.write_str("with ")?;
            comma_list(f, &self.with, |f, c| {
                write!(f, "{} as ({})", Ident(&c.name), c.query)
            })?;
            f.write_str(" ")?;
        }
        write!(f, "{}", self.select)?;
        if !self.order_by.is_empty() {
            f.write_str(" order by ")?;
            comma_list(f, &self.order_by, |f, o| write!(f, "{o}"))?;
        }
        Ok(())
    }
}

impl fmt::Display for Select {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("select ")?;
        comma_list(f, &self.items, |f, it| match it {
            SelectItem::Wildcard => f.write_str("*"),
            SelectItem::Expr { expr, alias } => {
                write!(f, "{expr}")?;
                match alias {
                    Some(a) => write!(f, " as {}", Ident(a)),
                    None => Ok(()),
                }
            }
        })?;
        if let Some(from) = &self.from {
            write!(f, " from {from}")?;
        }
        if let Some(w) = &self.selection {
            write!(f, " where {w}")?;
        }
        Ok(())
    }
}

impl fmt::Display for FromItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let alias = match self {
            FromItem::Table { name, alias } => {
                write!(f, "{}", Ident(name))?;
                alias
            }
            FromItem::Subquery { query, alias } => {
                write!(f, "({query})")?;
                alias
            }
        };
        match alias {
            Some(a) => write!(f, " as {}", Ident(a)),
            None => Ok(()),
        }
    }
}

impl fmt::Display for OrderItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)?;
        if self.desc {
            f.write_str(" desc")?;
        }
        Ok(())
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Integer(v) => write!(f, "{v}"),
            // Debug formatting always keeps a '.' or exponent.
            Literal::Float(v) => write!(f, "{v:?}"),
            Literal::String(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Literal::Dollar(s) => write!(f, "$${s}$$"),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Null => f.write_str("null"),
        }
    }
}

impl fmt::Display for AstExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AstExpr::Literal(l) => write!(f, "{l}"),
            AstExpr::Column { qualifier, name } => {
                if let Some(q) = qualifier {
                    write!(f, "{}.", Ident(q))?;
                }
                write!(f, "{}", Ident(name))
            }
            AstExpr::Unary { op, expr } => match op {
                UnaryOp::Neg => write!(f, "(- {expr})"),
                UnaryOp::Not => write!(f, "(not {expr})"),
            },
            AstExpr::Binary { op, left, right } => {
                write!(f, "({left} {} {right})", op.symbol())
            }
            AstExpr::Case {
                branches,
                otherwise,
            } => {
                f.write_str("case")?;
                for (c, v) in branches {
                    write!(f, " when {c} then {v}")?;
                }
                if let Some(o) = otherwise {
                    write!(f, " else {o}")?;
                }
                f.write_str(" end")
            }
            AstExpr::Function { name, args, over } => {
                write!(f, "{}(", Ident(name))?;
                comma_list(f, args, |f, a| write!(f, "{a}"))?;
                f.write_str(")")?;
                if let Some(w) = over {
                    f.write_str(" over (")?;
                    let mut sep = "";
                    if !w.partition_by.is_empty() {
                        f.write_str("partition by ")?;
                        comma_list(f, &w.partition_by, |f, e| write!(f, "{e}"))?;
                        sep = " ";
                    }
                    if !w.order_by.is_empty() {
                        write!(f, "{sep}order by ")?;
                        comma_list(f, &w.order_by, |f, o| write!(f, "{o}"))?;
                    }
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}
