//! Reference external transducer used by the protocol tests.
//!
//! Usage: `tdx-protocol-child <script>`. The script's type blocks give the
//! output schema; a comment line `mode: <name>` picks the behaviour:
//!
//! - `echo` (default): copy input to output
//! - `modfilter`: keep rows whose first column is 1 modulo 3
//! - `early`: write one row before reading any input, then echo
//! - `fail`: print to stderr and exit 1 without touching stdout
//! - `garbage`: write bytes that are not a frame
//! - `after-eos`: echo, then write another frame after end-of-stream
//! - `error-frame`: read one row, then send an error frame
//! - `bad-exit`: echo correctly, then exit 3
//! - `env`: drain input, then write one row of `TDX_SEGMENT_ID`, `TDX_NSEG`
//!   and `TDX_BATCH_SIZE` as int32 columns

use std::io::Write;
use std::process::ExitCode;
use std::sync::Arc;

use tdx::datamodel::{DataType, Datum, Row, SchemaRef};
use tdx::sqlfront::extract_io_schemas;
use tdx::transducer::child::ChildIo;
use tdx::Result;

fn mode_of(body: &str) -> String {
    body.lines()
        .map(|l| l.trim().trim_start_matches(['/', '#', '-']).trim())
        .find_map(|l| l.strip_prefix("mode:"))
        .map(|m| m.trim().to_string())
        .unwrap_or_else(|| "echo".into())
}

fn placeholder(schema: &SchemaRef) -> Row {
    schema
        .types()
        .map(|t| match t {
            DataType::Int32 => Datum::Int32(0),
            DataType::Int64 => Datum::Int64(0),
            DataType::Float64 => Datum::Float64(0.0),
            DataType::Text => Datum::Text("early".into()),
            DataType::Bool => Datum::Bool(false),
        })
        .collect()
}

fn echo<R: std::io::Read, W: Write>(io: &mut ChildIo<R, W>, keep: impl Fn(&Row) -> bool) -> Result<()> {
    while let Some(r) = io.next_input()? {
        if keep(&r) {
            io.write_output(r)?;
        }
    }
    Ok(())
}

fn run(mode: &str, out: SchemaRef) -> Result<u8> {
    let mut io = ChildIo::stdio(Some(Arc::clone(&out)))?;
    match mode {
        "echo" => echo(&mut io, |_| true)?,
        "modfilter" => echo(&mut io, |r| r[0].as_i64().is_some_and(|v| v % 3 == 1))?,
        "early" => {
            io.write_output(placeholder(&out))?;
            echo(&mut io, |_| true)?;
        }
        "fail" => {
            eprintln!("child failing on purpose");
            return Ok(1);
        }
        "garbage" => {
            let mut stdout = std::io::stdout();
            stdout.write_all(b"GARBAGE!GARBAGE!")?;
            stdout.flush()?;
            return Ok(0);
        }
        "after-eos" => {
            echo(&mut io, |_| true)?;
            io.finish()?;
            io.writer_mut().write_rowgroup(&out, vec![placeholder(&out)])?;
            io.writer_mut().flush()?;
            return Ok(0);
        }
        "error-frame" => {
            io.next_input()?;
            io.fail("boom from child")?;
            return Ok(1);
        }
        "env" => {
            echo(&mut io, |_| false)?;
            let var = |k: &str| -> Datum {
                std::env::var(k)
                    .ok()
                    .and_then(|v| v.parse().ok())
                    .map_or(Datum::Null, Datum::Int32)
            };
            io.write_output(Row::new(vec![
                var("TDX_SEGMENT_ID"),
                var("TDX_NSEG"),
                var("TDX_BATCH_SIZE"),
            ]))?;
        }
        "bad-exit" => {
            echo(&mut io, |_| true)?;
            io.finish()?;
            return Ok(3);
        }
        other => {
            eprintln!("unknown mode '{other}'");
            return Ok(2);
        }
    }
    io.finish()?;
    Ok(0)
}

fn main() -> ExitCode {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: tdx-protocol-child <script>");
        return ExitCode::from(2);
    };
    let body = match std::fs::read_to_string(&path) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("cannot read script {path}: {e}");
            return ExitCode::from(2);
        }
    };
    let out = match extract_io_schemas(&body) {
        Ok((_, out)) => out,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    match run(&mode_of(&body), out) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
