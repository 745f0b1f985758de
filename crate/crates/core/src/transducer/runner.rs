use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crossbeam::channel::{self, Receiver, Sender};

use super::io::{run_builtin, InstanceInfo, NodeShared, RowGroupSink, TransducerProgram};
use crate::datamodel::{RowGroup, SchemaRef};
use crate::engine::exchange::{send_packet, Packet};
use crate::engine::{ExecState, Operator};
use crate::error::{Error, Result};

struct ChannelSink {
    tx: Sender<Result<Packet>>,
    state: Arc<ExecState>,
}

impl ChannelSink {
    fn send(&self, p: Packet) -> Result<()> {
        if send_packet(&self.tx, Ok(p), &self.state)? {
            Ok(())
        } else {
            // Consumer went away; stop the program quietly.
            Err(Error::Cancelled)
        }
    }
}

impl RowGroupSink for ChannelSink {
    fn push(&mut self, rg: RowGroup) -> Result<()> {
        self.send(Packet::Batch(rg))
    }

    fn end(&mut self) -> Result<()> {
        self.send(Packet::End)
    }
}

/// Plan operator for one in-process transducer instance. The program runs
/// on its own thread and hands row groups over a bounded channel.
pub struct BuiltinTransducerOp {
    schema: SchemaRef,
    name: String,
    segment: usize,
    state: Arc<ExecState>,
    rx: Option<Receiver<Result<Packet>>>,
    handle: Option<JoinHandle<()>>,
    done: bool,
}

impl BuiltinTransducerOp {
    pub fn spawn(
        mut program: Box<dyn TransducerProgram>,
        info: InstanceInfo,
        mut input: Box<dyn Operator>,
        shared: Arc<NodeShared>,
        capacity: usize,
    ) -> Self {
        let (tx, rx) = channel::bounded(capacity.max(1));
        let schema = Arc::clone(&info.out_schema);
        let name = info.name.clone();
        let segment = info.segment_id;
        let state = Arc::clone(shared.state());
        let handle = thread::Builder::new()
            .name(format!("tdx-{}-{}", info.name, info.segment_id))
            .spawn(move || {
                let mut sink = ChannelSink {
                    tx,
                    state: Arc::clone(shared.state()),
                };
                if let Err(e) = run_builtin(&mut *program, &info, &mut *input, &mut sink, &shared) {
                    // The consumer may be gone or blocked behind a full queue,
                    // so the cause goes straight to the query state and the
                    // stream only carries a marker.
                    let marker = if e.is_secondary() {
                        e
                    } else {
                        shared.state().report(e);
                        Error::Cancelled
                    };
                    let _ = sink.tx.try_send(Err(marker));
                }
            })
            .expect("spawn transducer thread");
        BuiltinTransducerOp {
            schema,
            name,
            segment,
            state,
            rx: Some(rx),
            handle: Some(handle),
            done: false,
        }
    }
}

impl Operator for BuiltinTransducerOp {
    fn schema(&self) -> &SchemaRef {
        &self.schema
    }

    fn next_batch(&mut self) -> Result<Option<RowGroup>> {
        if self.done {
            return Ok(None);
        }
        let rx = self.rx.as_ref().expect("receiver present until drop");
        match rx.recv() {
            Ok(Ok(Packet::Batch(rg))) => Ok(Some(rg)),
            Ok(Ok(Packet::End)) => {
                self.done = true;
                Ok(None)
            }
            Ok(Err(e)) => {
                self.done = true;
                Err(e)
            }
            Err(_) if self.state.is_cancelled() => {
                self.done = true;
                Err(Error::Cancelled)
            }
            Err(_) => {
                self.done = true;
                Err(Error::Transducer {
                    name: self.name.clone(),
                    segment: self.segment,
                    msg: "program panicked".into(),
                })
            }
        }
    }
}

impl Drop for BuiltinTransducerOp {
    fn drop(&mut self) {
        self.rx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
