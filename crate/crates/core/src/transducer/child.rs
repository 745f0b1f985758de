//! Client side of the pipe protocol, for writing external transducers in
//! Rust. A child reads input frames from stdin and writes output frames to
//! stdout:
//!
//! ```no_run
//! use tdx::transducer::child::ChildIo;
//! # fn main() -> tdx::Result<()> {
//! let mut io = ChildIo::stdio(None)?;
//! while let Some(row) = io.next_input()? {
//!     io.write_output(row)?;
//! }
//! io.finish()
//! # }
//! ```

use std::collections::VecDeque;
use std::io::{self, BufReader, BufWriter, Read, Stdin, Stdout, Write};
use std::sync::Arc;

use super::proto::{Frame, FrameReader, FrameWriter};
use crate::datamodel::{Row, SchemaRef};
use crate::error::{Error, Result};

pub struct ChildIo<R: Read, W: Write> {
    reader: FrameReader<R>,
    writer: FrameWriter<W>,
    pending: VecDeque<Row>,
    in_schema: Option<SchemaRef>,
    out_schema: Option<SchemaRef>,
    out: Vec<Row>,
    batch_size: usize,
    input_done: bool,
    finished: bool,
}

impl ChildIo<BufReader<Stdin>, BufWriter<Stdout>> {
    /// Binds to the process's stdin/stdout, taking the batch size from
    /// `TDX_BATCH_SIZE`. With `out_schema` unset, output rows use the
    /// schema of the input.
    pub fn stdio(out_schema: Option<SchemaRef>) -> Result<Self> {
        let batch_size = std::env::var("TDX_BATCH_SIZE")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(256);
        Ok(ChildIo::new(
            BufReader::new(io::stdin()),
            BufWriter::new(io::stdout()),
            out_schema,
            batch_size,
        ))
    }
}

impl<R: Read, W: Write> ChildIo<R, W> {
    pub fn new(input: R, output: W, out_schema: Option<SchemaRef>, batch_size: usize) -> Self {
        ChildIo {
            reader: FrameReader::new(input),
            writer: FrameWriter::new(output),
            pending: VecDeque::new(),
            in_schema: None,
            out_schema,
            out: Vec::new(),
            batch_size: batch_size.max(1),
            input_done: false,
            finished: false,
        }
    }

    /// Schema of the input, known after the first row group arrives.
    pub fn in_schema(&self) -> Option<&SchemaRef> {
        self.in_schema.as_ref()
    }

    pub fn next_input(&mut self) -> Result<Option<Row>> {
        loop {
            if let Some(r) = self.pending.pop_front() {
                return Ok(Some(r));
            }
            if self.input_done {
                return Ok(None);
            }
            match self.reader.read_frame()? {
                Some(Frame::RowGroup(rg)) => {
                    if self.in_schema.is_none() {
                        self.in_schema = Some(Arc::clone(rg.schema()));
                    }
                    self.pending.extend(rg.into_rows());
                }
                Some(Frame::End) => self.input_done = true,
                Some(Frame::Error(msg)) => {
                    return Err(Error::execution("host", msg));
                }
                None => {
                    return Err(Error::Protocol {
                        offset: self.reader.offset(),
                        msg: "stdin closed without end-of-stream".into(),
                    })
                }
            }
        }
    }

    pub fn write_output(&mut self, row: Row) -> Result<()> {
        if self.finished {
            return Err(Error::execution("child", "write after end of output"));
        }
        self.out.push(row);
        if self.out.len() >= self.batch_size {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if self.out.is_empty() {
            return Ok(());
        }
        let schema = self
            .out_schema
            .clone()
            .or_else(|| self.in_schema.clone())
            .ok_or_else(|| Error::Schema("output schema unknown before any input".into()))?;
        let rows = std::mem::take(&mut self.out);
        self.writer.write_rowgroup(&schema, rows)?;
        self.writer.flush()
    }

    /// Flushes pending output and writes the end-of-stream frame.
    pub fn finish(&mut self) -> Result<()> {
        if self.finished {
            return Ok(());
        }
        self.flush()?;
        self.finished = true;
        self.writer.write_end()
    }

    /// Reports a failure to the host with an error frame.
    pub fn fail(&mut self, msg: &str) -> Result<()> {
        self.finished = true;
        self.writer.write_frame(&Frame::Error(msg.to_string()))?;
        self.writer.flush()
    }

    /// Raw access to the output, for protocol tests.
    pub fn writer_mut(&mut self) -> &mut FrameWriter<W> {
        &mut self.writer
    }
}
