//! Reads the `PHIExec` header and the `BEGIN INPUT` / `BEGIN OUTPUT` type
//! blocks from a transducer script body.

use std::sync::Arc;

use crate::datamodel::{Column, DataType, Schema, SchemaRef};
use crate::error::{Error, Result};
use crate::transducer::{ExecMode, Params, TransducerSpec};

/// Strips a leading line-comment marker. Returns the text and whether a
/// marker was present.
fn uncomment(line: &str) -> (&str, bool) {
    let t = line.trim();
    for marker in ["//", "#", "--"] {
        if let Some(rest) = t.strip_prefix(marker) {
            return (rest.trim(), true);
        }
    }
    (t, false)
}

fn is_marker(line: &str, word: &str, block: &str) -> bool {
    let mut parts = line.split_whitespace();
    matches!(
        (parts.next(), parts.next(), parts.next()),
        (Some(a), Some(b), None) if a.eq_ignore_ascii_case(word) && b.eq_ignore_ascii_case(block)
    )
}

fn read_block(body: &str, block: &str) -> Result<SchemaRef> {
    let mut lines = body.lines().map(uncomment);
    let Some((_, in_comments)) = lines.by_ref().find(|(l, _)| is_marker(l, "begin", block)) else {
        return Err(Error::Plan(format!("transducer body has no BEGIN {block} block")));
    };
    let mut cols = Vec::new();
    for (line, commented) in lines {
        if is_marker(line, "end", block) {
            if cols.is_empty() {
                return Err(Error::Plan(format!("{block} block declares no columns")));
            }
            return Ok(Arc::new(Schema::new(cols)?));
        }
        if line.is_empty() {
            continue;
        }
        if in_comments && !commented {
            // Script code reached while the block is still open.
            break;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(ty), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Plan(format!(
                "{block} block: expected 'name type', found '{line}'"
            )));
        };
        let ty: DataType = ty
            .parse()
            .map_err(|e: Error| Error::Plan(format!("{block} block, column {name}: {e}")))?;
        cols.push(Column::new(name, ty));
    }
    Err(Error::Plan(format!("{block} block is missing END {block}")))
}

/// Input and output schemas declared in a script body.
pub fn extract_io_schemas(body: &str) -> Result<(SchemaRef, SchemaRef)> {
    Ok((read_block(body, "INPUT")?, read_block(body, "OUTPUT")?))
}

/// Parses the first non-blank line, `PHIExec <lang>` or
/// `PHIExec builtin <name> [key=value ...]`.
pub fn parse_exec_mode(body: &str) -> Result<ExecMode> {
    let header = body.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let mut words = header.split_whitespace();
    if !words.next().is_some_and(|w| w.eq_ignore_ascii_case("phiexec")) {
        return Err(Error::Plan(
            "transducer body must start with 'PHIExec <lang>'".into(),
        ));
    }
    let Some(lang) = words.next() else {
        return Err(Error::Plan("PHIExec needs a language or 'builtin <name>'".into()));
    };
    if !lang.eq_ignore_ascii_case("builtin") {
        if let Some(extra) = words.next() {
            return Err(Error::Plan(format!("unexpected '{extra}' after PHIExec {lang}")));
        }
        return Ok(ExecMode::External {
            lang: lang.to_ascii_lowercase(),
        });
    }
    let Some(name) = words.next() else {
        return Err(Error::Plan("PHIExec builtin needs a transducer name".into()));
    };
    let mut params = Params::new();
    for kv in words {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(Error::Plan(format!(
                "builtin parameter '{kv}' is not key=value"
            )));
        };
        if params.insert(k.to_ascii_lowercase(), v.to_string()).is_some() {
            return Err(Error::Plan(format!("builtin parameter '{k}' given twice")));
        }
    }
    Ok(ExecMode::Builtin {
        name: name.to_ascii_lowercase(),
        params,
    })
}

pub fn parse_transducer_spec(body: &str) -> Result<TransducerSpec> {
    let mode = parse_exec_mode(body)?;
    let (in_schema, out_schema) = extract_io_schemas(body)?;
    Ok(TransducerSpec {
        in_schema,
        out_schema,
        mode,
        body: body.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FILTER_SCRIPT: &str = "PHIExec go
// The following is a valid go program
// BEGIN INPUT
// id int32
// t text
// END INPUT
// BEGIN OUTPUT
// id int32
// t text
// END OUTPUT
package main
";

    #[test]
    fn filter_script_blocks() {
        let (i, o) = extract_io_schemas(FILTER_SCRIPT).unwrap();
        let want = Schema::parse_spec("id:int32,t:text").unwrap();
        assert_eq!(*i, want);
        assert_eq!(*o, want);
        assert_eq!(
            parse_exec_mode(FILTER_SCRIPT).unwrap(),
            ExecMode::External { lang: "go".into() }
        );
    }

    #[test]
    fn aliases_and_comment_styles() {
        let body = "PHIExec builtin identity\n# BEGIN INPUT\n# x float8\n# END INPUT\n-- BEGIN OUTPUT\n-- y int4\n-- END OUTPUT\n";
        let (i, o) = extract_io_schemas(body).unwrap();
        assert_eq!(i.column(0).data_type, DataType::Float64);
        assert_eq!(i.column(0).name, "x");
        assert_eq!(o.column(0).data_type, DataType::Int32);
    }

    #[test]
    fn block_errors() {
        let missing_end = FILTER_SCRIPT.replace("// END OUTPUT", "");
        assert!(extract_io_schemas(&missing_end).unwrap_err().to_string().contains("END OUTPUT"));
        let no_input = "PHIExec go\n// BEGIN OUTPUT\n// a int32\n// END OUTPUT\n";
        assert!(extract_io_schemas(no_input).is_err());
        let empty = "// BEGIN INPUT\n// END INPUT\n// BEGIN OUTPUT\n// a int32\n// END OUTPUT";
        assert!(extract_io_schemas(empty).unwrap_err().to_string().contains("no columns"));
        let bad_type = FILTER_SCRIPT.replace("t text\n// END OUTPUT", "t blob\n// END OUTPUT");
        assert!(extract_io_schemas(&bad_type).unwrap_err().to_string().contains("blob"));
    }

    #[test]
    fn builtin_header_params() {
        let m = parse_exec_mode("\n  PHIExec builtin BFS start=7 directed=false\n").unwrap();
        let ExecMode::Builtin { name, params } = m else { panic!() };
        assert_eq!(name, "bfs");
        assert_eq!(params["start"], "7");
        assert_eq!(params["directed"], "false");
        assert!(parse_exec_mode("PHIExec builtin bfs start").is_err());
        assert!(parse_exec_mode("select 1").is_err());
    }
}
