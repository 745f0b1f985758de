//! Recursive-descent parser for the supported SELECT subset.

use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use crate::datamodel::DataType;
use crate::engine::{BinaryOp, UnaryOp};
use crate::error::{Error, Pos, Result};

pub const TRANSDUCER_FN: &str = "transducer";
pub const TRANSDUCER_COL_PREFIX: &str = "transducer_col_";

struct Parser {
    toks: Vec<Token>,
    at: usize,
}

fn is_reserved(w: &str) -> bool {
    RESERVED.contains(&w)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.at + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.at].tok.clone();
        if self.at < self.toks.len() - 1 {
            self.at += 1;
        }
        t
    }

    fn err_at(&self, pos: Pos, msg: impl Into<String>) -> Error {
        Error::Syntax {
            msg: msg.into(),
            pos,
        }
    }

    fn unexpected(&self, wanted: &str) -> Error {
        let found = match self.peek() {
            Tok::Word(w) => format!("'{w}'"),
            Tok::Quoted(q) => format!("\"{q}\""),
            Tok::Integer(i) => i.to_string(),
            Tok::Float(v) => v.to_string(),
            Tok::Str(_) => "string literal".into(),
            Tok::Dollar(_) => "$$ string".into(),
            Tok::Sym(s) => format!("'{s}'"),
            Tok::Eof => "end of input".into(),
        };
        self.err_at(self.pos(), format!("expected {wanted}, found {found}"))
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{kw}'")))
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{s}'")))
        }
    }

    /// A plain identifier: unreserved word or quoted name.
    fn ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            // `end` cannot be mistaken for CASE's terminator here: that is
            // only looked for after a complete expression.
            Tok::Word(w) if !is_reserved(&w) => {
                self.advance();
                Ok(w)
            }
            Tok::Quoted(q) => {
                self.advance();
                Ok(q)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    /// An alias after AS, where any word is accepted.
    fn alias_after_as(&mut self) -> Result<String> {
        match self.advance() {
            Tok::Word(w) | Tok::Quoted(w) => Ok(w),
            _ => {
                self.at -= 1;
                Err(self.unexpected("alias"))
            }
        }
    }

    fn opt_alias(&mut self) -> Result<Option<String>> {
        if self.eat_kw("as") {
            return self.alias_after_as().map(Some);
        }
        match self.peek() {
            Tok::Word(w) if !is_reserved(w) && w != "end" => self.ident().map(Some),
            Tok::Quoted(_) => self.ident().map(Some),
            _ => Ok(None),
        }
    }

    fn statement(&mut self) -> Result<Statement> {
        let explain = self.eat_kw("explain");
        let query = self.query()?;
        self.eat_sym(";");
        if *self.peek() != Tok::Eof {
            return Err(self.unexpected("end of statement"));
        }
        Ok(Statement { explain, query })
    }

    fn query(&mut self) -> Result<Query> {
        let mut with = Vec::new();
        if self.eat_kw("with") {
            loop {
                let name = self.ident()?;
                self.expect_kw("as")?;
                self.expect_sym("(")?;
                let query = self.query()?;
                self.expect_sym(")")?;
                with.push(Cte { name, query });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let select = self.select()?;
        let mut order_by = Vec::new();
        if self.eat_kw("order") {
            self.expect_kw("by")?;
            order_by = self.order_items()?;
        }
        Ok(Query {
            with,
            select,
            order_by,
        })
    }

    fn order_items(&mut self) -> Result<Vec<OrderItem>> {
        let mut items = Vec::new();
        loop {
            let expr = self.expr()?;
            let desc = if self.eat_kw("desc") {
                true
            } else {
                self.eat_kw("asc");
                false
            };
            items.push(OrderItem { expr, desc });
            if !self.eat_sym(",") {
                return Ok(items);
            }
        }
    }

    fn select(&mut self) -> Result<Select> {
        let start = self.pos();
        self.expect_kw("select")?;
        let mut items = Vec::new();
        let mut positions = Vec::new();
        loop {
            positions.push(self.pos());
            if self.eat_sym("*") {
                items.push(SelectItem::Wildcard);
            } else {
                let expr = self.expr()?;
                let alias = self.opt_alias()?;
                items.push(SelectItem::Expr { expr, alias });
            }
            if !self.eat_sym(",") {
                break;
            }
        }
        let from = if self.eat_kw("from") {
            Some(self.from_item()?)
        } else {
            None
        };
        let selection = if self.eat_kw("where") {
            Some(self.expr()?)
        } else {
            None
        };
        check_transducer_items(&items, &positions, start)?;
        Ok(Select {
            items,
            from,
            selection,
        })
    }

    fn from_item(&mut self) -> Result<FromItem> {
        if self.eat_sym("(") {
            let query = self.query()?;
            self.expect_sym(")")?;
            let alias = self.opt_alias()?;
            return Ok(FromItem::Subquery {
                query: Box::new(query),
                alias,
            });
        }
        let name = self.ident()?;
        let alias = self.opt_alias()?;
        Ok(FromItem::Table { name, alias })
    }

    fn expr(&mut self) -> Result<AstExpr> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<AstExpr> {
        let mut left = self.and_expr()?;
        while self.eat_kw("or") {
            let right = self.and_expr()?;
            left = binary(BinaryOp::Or, left, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<AstExpr> {
        let mut left = self.not_expr()?;
        while self.eat_kw("and") {
            let right = self.not_expr()?;
            left = binary(BinaryOp::And, left, right);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<AstExpr> {
        if self.eat_kw("not") {
            let e = self.not_expr()?;
            return Ok(AstExpr::Unary {
                op: UnaryOp::Not,
                expr: Box::new(e),
            });
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<AstExpr> {
        let mut left = self.additive()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("=") | Tok::Sym("==") => BinaryOp::Eq,
                Tok::Sym("<>") | Tok::Sym("!=") => BinaryOp::Ne,
                Tok::Sym("<") => BinaryOp::Lt,
                Tok::Sym("<=") => BinaryOp::Le,
                Tok::Sym(">") => BinaryOp::Gt,
                Tok::Sym(">=") => BinaryOp::Ge,
                _ => return Ok(left),
            };
            self.advance();
            let right = self.additive()?;
            left = binary(op, left, right);
        }
    }

    fn additive(&mut self) -> Result<AstExpr> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinaryOp::Add,
                Tok::Sym("-") => BinaryOp::Sub,
                _ => return Ok(left),
            };
            self.advance();
            let right = self.multiplicative()?;
            left = binary(op, left, right);
        }
    }

    fn multiplicative(&mut self) -> Result<AstExpr> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => BinaryOp::Mul,
                Tok::Sym("/") => BinaryOp::Div,
                Tok::Sym("%") => BinaryOp::Mod,
                _ => return Ok(left),
            };
            self.advance();
            let right = self.unary()?;
            left = binary(op, left, right);
        }
    }

    fn unary(&mut self) -> Result<AstExpr> {
        if self.eat_sym("-") {
            let e = self.unary()?;
            return Ok(AstExpr::Unary {
                op: UnaryOp::Neg,
                expr: Box::new(e),
            });
        }
        if self.eat_sym("+") {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<AstExpr> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Integer(v) => {
                self.advance();
                Ok(AstExpr::Literal(Literal::Integer(v)))
            }
            Tok::Float(v) => {
                self.advance();
                Ok(AstExpr::Literal(Literal::Float(v)))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(AstExpr::Literal(Literal::String(s)))
            }
            Tok::Dollar(s) => {
                self.advance();
                Ok(AstExpr::Literal(Literal::Dollar(s)))
            }
            Tok::Sym("(") => {
                self.advance();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Word(w) => match w.as_str() {
                "null" => {
                    self.advance();
                    Ok(AstExpr::Literal(Literal::Null))
                }
                "true" | "false" => {
                    self.advance();
                    Ok(AstExpr::Literal(Literal::Bool(w == "true")))
                }
                "case" => self.case_expr(),
                _ if *self.peek_at(1) == Tok::Sym("(") && !is_reserved(&w) => {
                    self.advance();
                    self.function(w, pos)
                }
                _ => self.column_ref(),
            },
            Tok::Quoted(_) => self.column_ref(),
            _ => Err(self.unexpected("expression")),
        }
    }

    fn column_ref(&mut self) -> Result<AstExpr> {
        let first = self.ident()?;
        if self.eat_sym(".") {
            let name = self.ident()?;
            return Ok(AstExpr::Column {
                qualifier: Some(first),
                name,
            });
        }
        Ok(AstExpr::Column {
            qualifier: None,
            name: first,
        })
    }

    fn case_expr(&mut self) -> Result<AstExpr> {
        self.expect_kw("case")?;
        let mut branches = Vec::new();
        while self.eat_kw("when") {
            let c = self.expr()?;
            self.expect_kw("then")?;
            let v = self.expr()?;
            branches.push((c, v));
        }
        if branches.is_empty() {
            return Err(self.unexpected("'when'"));
        }
        let otherwise = if self.eat_kw("else") {
            Some(Box::new(self.expr()?))
        } else {
            None
        };
        if !self.eat_kw("end") {
            return Err(self.unexpected("'end'"));
        }
        Ok(AstExpr::Case {
            branches,
            otherwise,
        })
    }

    fn function(&mut self, name: String, pos: Pos) -> Result<AstExpr> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.eat_sym(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(")")?;
        }
        let over = if self.eat_kw("over") {
            self.expect_sym("(")?;
            let mut spec = WindowSpec {
                partition_by: Vec::new(),
                order_by: Vec::new(),
            };
            if self.eat_kw("partition") {
                self.expect_kw("by")?;
                loop {
                    spec.partition_by.push(self.expr()?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            if self.eat_kw("order") {
                self.expect_kw("by")?;
                spec.order_by = self.order_items()?;
            }
            self.expect_sym(")")?;
            Some(spec)
        } else {
            None
        };
        check_function(&name, &args, pos)?;
        Ok(AstExpr::Function { name, args, over })
    }
}

fn binary(op: BinaryOp, left: AstExpr, right: AstExpr) -> AstExpr {
    AstExpr::Binary {
        op,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Output type and 1-based ordinal of a `transducer_col_<type>(n)` call.
pub fn transducer_col(expr: &AstExpr) -> Option<(DataType, usize)> {
    match expr {
        AstExpr::Function { name, args, .. } => {
            let suffix = name.strip_prefix(TRANSDUCER_COL_PREFIX)?;
            let ty = suffix.parse().ok()?;
            match args.as_slice() {
                [AstExpr::Literal(Literal::Integer(n))] if *n >= 1 => Some((ty, *n as usize)),
                _ => None,
            }
        }
        _ => None,
    }
}

/// Script body of a `transducer($$...$$)` call.
pub fn transducer_body(expr: &AstExpr) -> Option<&str> {
    match expr {
        AstExpr::Function { name, args, .. } if name == TRANSDUCER_FN => match args.as_slice() {
            [AstExpr::Literal(Literal::Dollar(s) | Literal::String(s))] => Some(s),
            _ => None,
        },
        _ => None,
    }
}

fn check_function(name: &str, args: &[AstExpr], pos: Pos) -> Result<()> {
    let err = |msg: String| Error::Syntax { msg, pos };
    if let Some(suffix) = name.strip_prefix(TRANSDUCER_COL_PREFIX) {
        if suffix.parse::<DataType>().is_err() {
            return Err(err(format!("unknown transducer_col type suffix '{suffix}'")));
        }
        return match args {
            [AstExpr::Literal(Literal::Integer(n))] if *n >= 1 => Ok(()),
            [AstExpr::Literal(Literal::Integer(_))] | [AstExpr::Unary { op: UnaryOp::Neg, .. }] => {
                Err(err(format!("{name} ordinal must be a positive integer")))
            }
            _ => Err(err(format!("{name} takes one integer ordinal"))),
        };
    }
    if name == TRANSDUCER_FN {
        return match args {
            [AstExpr::Literal(Literal::Dollar(_) | Literal::String(_))] => Ok(()),
            _ => Err(err("transducer() takes one $$ script body".into())),
        };
    }
    Ok(())
}

fn contains_transducer_call(e: &AstExpr) -> bool {
    match e {
        AstExpr::Function { name, args, .. } => {
            name == TRANSDUCER_FN
                || name.starts_with(TRANSDUCER_COL_PREFIX)
                || args.iter().any(contains_transducer_call)
        }
        AstExpr::Unary { expr, .. } => contains_transducer_call(expr),
        AstExpr::Binary { left, right, .. } => {
            contains_transducer_call(left) || contains_transducer_call(right)
        }
        AstExpr::Case {
            branches,
            otherwise,
        } => {
            branches
                .iter()
                .any(|(c, v)| contains_transducer_call(c) || contains_transducer_call(v))
                || otherwise.as_deref().is_some_and(contains_transducer_call)
        }
        _ => false,
    }
}

/// Enforces the shape of a transducer select list: output column calls,
/// then the single `transducer(...)` call, then the input expressions.
fn check_transducer_items(items: &[SelectItem], positions: &[Pos], start: Pos) -> Result<()> {
    let mut ncalls = 0;
    let mut call_at = None;
    let mut ordinals = BTreeSet::new();
    let mut ncols = 0;
    for (i, item) in items.iter().enumerate() {
        let SelectItem::Expr { expr, .. } = item else {
            continue;
        };
        let err = |msg: &str| Error::Syntax {
            msg: msg.into(),
            pos: positions[i],
        };
        if transducer_body(expr).is_some() {
            ncalls += 1;
            if ncalls > 1 {
                return Err(err("at most one transducer() call per select"));
            }
            call_at = Some(i);
        } else if let Some((_, n)) = transducer_col(expr) {
            if call_at.is_some() {
                return Err(err("transducer_col must precede the transducer() call"));
            }
            ordinals.insert(n);
            ncols += 1;
        } else if contains_transducer_call(expr) {
            return Err(err(
                "transducer() and transducer_col calls must be whole select items",
            ));
        } else if ncols > 0 && call_at.is_none() {
            return Err(err("only transducer_col calls may precede the transducer() call"));
        }
    }
    let err = |msg: &str| Error::Syntax {
        msg: msg.into(),
        pos: start,
    };
    match (call_at, ncols) {
        (None, 0) => Ok(()),
        (None, _) => Err(err("transducer_col without transducer")),
        (Some(_), 0) => Err(err("transducer() needs at least one transducer_col output")),
        (Some(_), _) => {
            if ordinals.iter().copied().eq(1..=ordinals.len()) {
                Ok(())
            } else {
                Err(err("transducer_col ordinals must cover 1..k without gaps"))
            }
        }
    }
}

fn parser(sql: &str) -> Result<Parser> {
    Ok(Parser {
        toks: tokenize(sql)?,
        at: 0,
    })
}

/// Parses a single query (no `explain` prefix).
pub fn parse(sql: &str) -> Result<Query> {
    let stmt = parse_statement(sql)?;
    if stmt.explain {
        return Err(Error::Syntax {
            msg: "expected a query, found explain".into(),
            pos: Pos { line: 1, col: 1 },
        });
    }
    Ok(stmt.query)
}

/// Parses `[explain] <query> [;]`.
pub fn parse_statement(sql: &str) -> Result<Statement> {
    parser(sql)?.statement()
}
