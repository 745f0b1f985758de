//! Subprocess transducers.
//!
//! The child gets the script body as a file path in argv and the instance
//! identity in `TDX_SEGMENT_ID`, `TDX_NSEG` and `TDX_BATCH_SIZE`. Input row
//! groups go to its stdin as wire frames; output frames come back on stdout.
//! A dedicated thread services stdout so the child may interleave reads and
//! writes freely. stderr is captured for diagnostics.

use std::io::{BufReader, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crossbeam::channel::{self, Receiver, Sender};
use tempfile::NamedTempFile;

use super::io::InstanceInfo;
use super::proto::{Frame, FrameReader, FrameWriter};
use crate::datamodel::{RowGroup, SchemaRef};
use crate::engine::{ExecState, Operator};
use crate::error::{Error, Result};

/// Placeholder replaced by the script path in a command template.
pub const SCRIPT_PLACEHOLDER: &str = "{script}";

enum ReaderEvent {
    Batch(RowGroup),
    End,
    /// stdout closed without an end-of-stream frame.
    Eof,
    /// The child sent an error frame.
    Failed(String),
}

fn is_broken_pipe(e: &Error) -> bool {
    matches!(e, Error::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe)
}

/// Expands a command template: `{script}` is replaced by the script path,
/// or the path is appended when the template has no placeholder.
pub fn expand_template(template: &[String], script: &str) -> Result<Vec<String>> {
    if template.is_empty() {
        return Err(Error::Plan("empty external command template".into()));
    }
    let mut argv: Vec<String> = template
        .iter()
        .map(|a| a.replace(SCRIPT_PLACEHOLDER, script))
        .collect();
    if !template.iter().any(|a| a.contains(SCRIPT_PLACEHOLDER)) {
        argv.push(script.to_string());
    }
    Ok(argv)
}

/// Plan operator for one subprocess transducer instance.
pub struct ExternalTransducerOp {
    schema: SchemaRef,
    name: String,
    segment: usize,
    child: Child,
    rx: Option<Receiver<Result<ReaderEvent>>>,
    writer: Option<JoinHandle<Result<()>>>,
    reader: Option<JoinHandle<()>>,
    stderr: Option<JoinHandle<String>>,
    _script: NamedTempFile,
    done: bool,
}

impl ExternalTransducerOp {
    pub fn spawn(
        template: &[String],
        body: &str,
        info: InstanceInfo,
        input: Box<dyn Operator>,
        state: Arc<ExecState>,
        capacity: usize,
    ) -> Result<Self> {
        let mut script = tempfile::Builder::new()
            .prefix("tdx-script-")
            .tempfile()?;
        script.write_all(body.as_bytes())?;
        script.flush()?;
        let path = script.path().to_string_lossy().into_owned();
        let argv = expand_template(template, &path)?;

        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .env("TDX_SEGMENT_ID", info.segment_id.to_string())
            .env("TDX_NSEG", info.ninstances.to_string())
            .env("TDX_BATCH_SIZE", info.batch_size.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Transducer {
                name: info.name.clone(),
                segment: info.segment_id,
                msg: format!("cannot start '{}': {e}", argv[0]),
            })?;

        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");

        let in_schema = Arc::clone(&info.in_schema);
        let writer = thread::spawn(move || {
            let r = write_input(input, stdin, in_schema);
            match r {
                // An upstream failure is the real cause of whatever the
                // child does next, so record it first.
                Err(e) if !is_broken_pipe(&e) => {
                    state.report(e);
                    Err(Error::Cancelled)
                }
                r => r,
            }
        });
        let (tx, rx) = channel::bounded(capacity.max(1));
        let reader = thread::spawn(move || read_output(stdout, tx));
        let stderr = thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr_pipe.read_to_string(&mut s);
            s
        });

        Ok(ExternalTransducerOp {
            schema: Arc::clone(&info.out_schema),
            name: info.name.clone(),
            segment: info.segment_id,
            child,
            rx: Some(rx),
            writer: Some(writer),
            reader: Some(reader),
            stderr: Some(stderr),
            _script: script,
            done: false,
        })
    }

    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Transducer {
            name: self.name.clone(),
            segment: self.segment,
            msg: msg.into(),
        }
    }

    fn take_stderr(&mut self) -> String {
        self.stderr
            .take()
            .and_then(|h| h.join().ok())
            .unwrap_or_default()
    }

    /// Waits for the child and turns a nonzero exit into an error carrying
    /// its stderr. Also surfaces input-side failures.
    fn finish_child(&mut self) -> Result<()> {
        let status = self.child.wait()?;
        let writer_result = self
            .writer
            .take()
            .map(|h| h.join().unwrap_or_else(|_| Err(self.fail("input writer panicked"))))
            .unwrap_or(Ok(()));
        if !status.success() {
            let stderr = self.take_stderr();
            return Err(self.fail(format!(
                "child exited with {status}; stderr: {}",
                stderr.trim_end()
            )));
        }
        match writer_result {
            Err(e) if !is_broken_pipe(&e) => Err(e),
            _ => Ok(()),
        }
    }
}

fn write_input(mut input: Box<dyn Operator>, stdin: ChildStdin, in_schema: SchemaRef) -> Result<()> {
    let mut w = FrameWriter::new(BufWriter::new(stdin));
    while let Some(rg) = input.next_batch()? {
        if rg.is_empty() {
            continue;
        }
        let rg = RowGroup::new_unchecked(Arc::clone(&in_schema), rg.into_rows());
        w.write_frame(&Frame::RowGroup(rg))?;
        w.flush()?;
    }
    w.write_end()
}

fn read_output(stdout: ChildStdout, tx: Sender<Result<ReaderEvent>>) {
    let mut reader = FrameReader::new(BufReader::new(stdout));
    loop {
        let ev = match reader.read_frame() {
            Ok(Some(Frame::RowGroup(rg))) => Ok(ReaderEvent::Batch(rg)),
            Ok(Some(Frame::End)) => {
                let offset = reader.offset();
                let mut rest = reader.into_inner();
                let mut probe = [0u8; 1];
                let ev = match rest.read(&mut probe) {
                    Ok(0) => Ok(ReaderEvent::End),
                    Ok(_) => Err(Error::Protocol {
                        offset,
                        msg: "child wrote after end-of-stream".into(),
                    }),
                    Err(e) => Err(e.into()),
                };
                let _ = tx.send(ev);
                return;
            }
            Ok(Some(Frame::Error(msg))) => Ok(ReaderEvent::Failed(msg)),
            Ok(None) => Ok(ReaderEvent::Eof),
            Err(e) => Err(e),
        };
        let stop = !matches!(ev, Ok(ReaderEvent::Batch(_)));
        if tx.send(ev).is_err() || stop {
            return;
        }
    }
}

impl Operator for ExternalTransducerOp {
    fn schema(&self) -> &SchemaRef {
        &self.schema
    }

    fn next_batch(&mut self) -> Result<Option<RowGroup>> {
        if self.done {
            return Ok(None);
        }
        let ev = self
            .rx
            .as_ref()
            .expect("receiver present until drop")
            .recv()
            .unwrap_or(Ok(ReaderEvent::Eof));
        match ev {
            Ok(ReaderEvent::Batch(rg)) => {
                if !rg.schema().compatible(&self.schema) {
                    self.done = true;
                    let _ = self.child.kill();
                    return Err(self.fail(format!(
                        "output frame schema {} does not match declared output {}",
                        rg.schema(),
                        self.schema
                    )));
                }
                Ok(Some(RowGroup::new_unchecked(
                    Arc::clone(&self.schema),
                    rg.into_rows(),
                )))
            }
            Ok(ReaderEvent::End) => {
                self.done = true;
                self.finish_child()?;
                Ok(None)
            }
            Ok(ReaderEvent::Eof) => {
                self.done = true;
                self.finish_child()?;
                Err(self.fail("child closed stdout without an end-of-stream frame"))
            }
            Ok(ReaderEvent::Failed(msg)) => {
                self.done = true;
                let exit = match self.finish_child() {
                    Err(Error::Transducer { msg, .. }) => format!("; {msg}"),
                    _ => String::new(),
                };
                Err(self.fail(format!("child reported error: {msg}{exit}")))
            }
            Err(e) => {
                self.done = true;
                if matches!(e, Error::Protocol { .. }) {
                    let _ = self.child.kill();
                    let _ = self.child.wait();
                    return Err(self.fail(e.to_string()));
                }
                // Prefer the exit diagnostic (with stderr) when the child failed.
                self.finish_child()?;
                Err(self.fail(e.to_string()))
            }
        }
    }
}

impl Drop for ExternalTransducerOp {
    fn drop(&mut self) {
        self.rx.take();
        if matches!(self.child.try_wait(), Ok(None)) {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
        for h in [self.reader.take()].into_iter().flatten() {
            let _ = h.join();
        }
        if let Some(h) = self.writer.take() {
            let _ = h.join();
        }
        self.take_stderr();
    }
}
