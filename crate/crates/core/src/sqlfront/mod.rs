//! SQL subset front end: lexer, parser, printer, and planner.

mod ast;
mod directives;
mod lexer;
mod parser;
mod planner;

pub use crate::engine::Catalog;
pub use ast::*;
pub use directives::{extract_io_schemas, parse_exec_mode, parse_transducer_spec};
pub use lexer::{tokenize, Tok, Token};
pub use parser::{parse, parse_statement, transducer_body, transducer_col};
pub use planner::plan;
