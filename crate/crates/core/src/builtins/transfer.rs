//! Cluster-to-cluster transfer over TCP.
//!
//! Each sending instance opens one connection, writes a 16-byte hello
//! (`TDXN`, version, sender segment, reserved; little-endian u32s), then the
//! rows as wire frames ending with an end-of-stream frame. The receiver
//! answers with an end-of-stream frame once everything is accepted, or an
//! error frame, so the sender learns whether the transfer succeeded.

use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use super::{expect_types, known_params, param, required};
use crate::datamodel::{DataType, Datum, Row};
use crate::error::{Error, Result};
use crate::transducer::proto::{Frame, FrameReader, FrameWriter};
use crate::transducer::{Builtin, Params, TransducerIo, TransducerProgram, TransducerSpec};

pub const HELLO_MAGIC: [u8; 4] = *b"TDXN";
pub const HELLO_VERSION: u32 = 1;
const HELLO_LEN: usize = 16;

const DEFAULT_CONNECT_MS: u64 = 5_000;
const DEFAULT_ACCEPT_MS: u64 = 30_000;
/// How long either side waits on a silent peer mid-transfer.
const IO_TIMEOUT: Duration = Duration::from_secs(60);
const POLL: Duration = Duration::from_millis(10);

fn transfer_err(msg: impl Into<String>) -> Error {
    Error::Transfer(msg.into())
}

fn hello(segment: u32) -> [u8; HELLO_LEN] {
    let mut h = [0u8; HELLO_LEN];
    h[..4].copy_from_slice(&HELLO_MAGIC);
    h[4..8].copy_from_slice(&HELLO_VERSION.to_le_bytes());
    h[8..12].copy_from_slice(&segment.to_le_bytes());
    h
}

/// Validates a hello and returns the sender segment id.
fn read_hello(r: &mut impl Read) -> Result<u32> {
    let mut h = [0u8; HELLO_LEN];
    r.read_exact(&mut h)
        .map_err(|e| transfer_err(format!("reading hello: {e}")))?;
    if h[..4] != HELLO_MAGIC {
        return Err(transfer_err(format!("bad hello magic {:02x?}", &h[..4])));
    }
    let version = u32::from_le_bytes(h[4..8].try_into().unwrap());
    if version != HELLO_VERSION {
        return Err(transfer_err(format!("unsupported transfer protocol version {version}")));
    }
    Ok(u32::from_le_bytes(h[8..12].try_into().unwrap()))
}

/// Streams the input to `host:port`. Output is one `(rows int64)` row per
/// instance.
pub struct TransferSend;

const SEND_PARAMS: &[&str] = &["host", "port", "timeout_ms"];

impl Builtin for TransferSend {
    fn name(&self) -> &str {
        "transfer_send"
    }

    fn check(&self, spec: &TransducerSpec, params: &Params) -> Result<()> {
        known_params(params, "transfer_send", SEND_PARAMS)?;
        required::<u16>(params, "transfer_send", "port")?;
        param::<u64>(params, "timeout_ms")?;
        expect_types("transfer_send", "output", &spec.out_schema, &[DataType::Int64])
    }

    fn instantiate(&self, params: &Params) -> Result<Box<dyn TransducerProgram>> {
        let host = params.get("host").cloned().unwrap_or_else(|| "127.0.0.1".into());
        let port = required::<u16>(params, "transfer_send", "port")?;
        let timeout = Duration::from_millis(param(params, "timeout_ms")?.unwrap_or(DEFAULT_CONNECT_MS));
        Ok(Box::new(move |io: &mut TransducerIo<'_>| {
            send(io, &format!("{host}:{port}"), timeout)
        }))
    }
}

fn connect(addr: &str, timeout: Duration, io: &TransducerIo<'_>) -> Result<TcpStream> {
    let deadline = Instant::now() + timeout;
    let mut last = String::from("no address");
    loop {
        let addrs = addr
            .to_socket_addrs()
            .map_err(|e| transfer_err(format!("resolving {addr}: {e}")))?;
        for a in addrs {
            let left = deadline.saturating_duration_since(Instant::now()).max(POLL);
            match TcpStream::connect_timeout(&a, left) {
                Ok(s) => return Ok(s),
                Err(e) => last = e.to_string(),
            }
        }
        if io.is_cancelled() {
            return Err(Error::Cancelled);
        }
        if Instant::now() >= deadline {
            return Err(transfer_err(format!(
                "cannot connect to {addr} within {} ms: {last}",
                timeout.as_millis()
            )));
        }
        thread::sleep(Duration::from_millis(50));
    }
}

fn send(io: &mut TransducerIo<'_>, addr: &str, timeout: Duration) -> Result<()> {
    let stream = connect(addr, timeout, io)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_write_timeout(Some(IO_TIMEOUT))?;
    let mut ack = FrameReader::new(BufReader::new(stream.try_clone()?));
    let mut w = FrameWriter::new(BufWriter::with_capacity(1 << 16, stream));
    let wire = |e: Error| match e {
        Error::Io(e) => transfer_err(format!("connection to {addr}: {e}")),
        other => other,
    };
    w.get_mut()
        .write_all(&hello(io.segment_id() as u32))
        .map_err(|e| transfer_err(format!("connection to {addr}: {e}")))?;

    let schema = io.in_schema().clone();
    let batch = io.info().batch_size;
    let mut rows = Vec::with_capacity(batch);
    let mut sent = 0i64;
    while let Some(r) = io.next_input()? {
        rows.push(r);
        if rows.len() >= batch {
            sent += rows.len() as i64;
            w.write_rowgroup(&schema, std::mem::take(&mut rows)).map_err(wire)?;
        }
    }
    sent += rows.len() as i64;
    w.write_rowgroup(&schema, rows).map_err(wire)?;
    w.write_end().map_err(wire)?;

    match ack.read_frame().map_err(wire)? {
        Some(Frame::End) => {}
        Some(Frame::Error(msg)) => return Err(transfer_err(format!("receiver rejected the transfer: {msg}"))),
        Some(Frame::RowGroup(_)) => return Err(transfer_err("receiver sent rows instead of an acknowledgement")),
        None => return Err(transfer_err("receiver closed the connection before acknowledging")),
    }
    io.write_output(Row::new(vec![Datum::Int64(sent)]))
}

/// Accepts `senders` connections on `port` across all instances and emits
/// every received row. Output columns are the transferred rows.
pub struct TransferRecv;

const RECV_PARAMS: &[&str] = &["host", "port", "senders", "timeout_ms"];

struct Listener {
    socket: std::result::Result<TcpListener, String>,
    claimed: AtomicUsize,
}

impl Builtin for TransferRecv {
    fn name(&self) -> &str {
        "transfer_recv"
    }

    fn check(&self, _spec: &TransducerSpec, params: &Params) -> Result<()> {
        known_params(params, "transfer_recv", RECV_PARAMS)?;
        required::<u16>(params, "transfer_recv", "port")?;
        required::<usize>(params, "transfer_recv", "senders")?;
        param::<u64>(params, "timeout_ms")?;
        Ok(())
    }

    fn instantiate(&self, params: &Params) -> Result<Box<dyn TransducerProgram>> {
        let host = params.get("host").cloned().unwrap_or_else(|| "127.0.0.1".into());
        let port = required::<u16>(params, "transfer_recv", "port")?;
        let senders = required::<usize>(params, "transfer_recv", "senders")?;
        let timeout = Duration::from_millis(param(params, "timeout_ms")?.unwrap_or(DEFAULT_ACCEPT_MS));
        Ok(Box::new(move |io: &mut TransducerIo<'_>| {
            recv(io, &format!("{host}:{port}"), senders, timeout)
        }))
    }
}

fn bind(addr: &str) -> std::result::Result<TcpListener, String> {
    let l = TcpListener::bind(addr).map_err(|e| format!("cannot listen on {addr}: {e}"))?;
    l.set_nonblocking(true)
        .map_err(|e| format!("cannot listen on {addr}: {e}"))?;
    Ok(l)
}

fn recv(io: &mut TransducerIo<'_>, addr: &str, senders: usize, timeout: Duration) -> Result<()> {
    // Input carries nothing; drain it so upstream finishes.
    while io.next_input()?.is_some() {}
    let shared = io.shared().get_or_init(|| Listener {
        socket: bind(addr),
        claimed: AtomicUsize::new(0),
    });
    let listener = shared.socket.as_ref().map_err(|e| transfer_err(e.clone()))?;
    let deadline = Instant::now() + timeout;
    while shared.claimed.fetch_add(1, Ordering::SeqCst) < senders {
        let stream = loop {
            match listener.accept() {
                Ok((s, _)) => break s,
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if io.is_cancelled() {
                        return Err(Error::Cancelled);
                    }
                    if Instant::now() >= deadline {
                        return Err(transfer_err(format!(
                            "no sender connected to {addr} within {} ms",
                            timeout.as_millis()
                        )));
                    }
                    thread::sleep(POLL);
                }
                Err(e) => return Err(transfer_err(format!("accept on {addr}: {e}"))),
            }
        };
        receive_one(io, stream)?;
    }
    Ok(())
}

fn receive_one(io: &mut TransducerIo<'_>, stream: TcpStream) -> Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    let mut back = FrameWriter::new(stream.try_clone()?);
    let mut input = BufReader::with_capacity(1 << 16, stream);
    let result = (|| {
        let sender = read_hello(&mut input)?;
        let mut frames = FrameReader::new(&mut input);
        loop {
            match frames.read_frame()? {
                Some(Frame::RowGroup(rg)) => {
                    if !rg.schema().same_types(io.out_schema()) {
                        return Err(transfer_err(format!(
                            "sender segment {sender} sends {} but the receiver expects {}",
                            rg.schema(),
                            io.out_schema()
                        )));
                    }
                    for r in rg.into_rows() {
                        io.write_output(r)?;
                    }
                }
                Some(Frame::End) => return Ok(()),
                Some(Frame::Error(msg)) => {
                    return Err(transfer_err(format!("sender segment {sender} failed: {msg}")))
                }
                None => {
                    return Err(transfer_err(format!(
                        "sender segment {sender} closed the connection before end-of-stream"
                    )))
                }
            }
        }
    })();
    // Best effort: the sender may already be gone.
    let _ = match &result {
        Ok(()) => back.write_end(),
        Err(e) => back.write_frame(&Frame::Error(e.to_string())).and_then(|_| back.flush()),
    };
    result
}
