//! Motion plumbing: bounded queues between segment pipelines.
//!
//! Every (sender, receiver) pair of a motion has its own queue, so each
//! queue has exactly one producer and one consumer. A sender finishes its
//! stream with [`Packet::End`]; a queue that disconnects without one means
//! the sender failed.

use std::sync::Arc;
use std::time::Duration;

use crossbeam::channel::{Receiver, RecvTimeoutError, Select, SendTimeoutError, Sender, TryRecvError};

use super::exec::ExecState;
use super::Operator;
use crate::datamodel::{hash_segment, DistributionPolicy, Row, RowGroup, SchemaRef};
use crate::error::{Error, Result};

const POLL: Duration = Duration::from_millis(50);

#[derive(Debug)]
pub enum Packet {
    Batch(RowGroup),
    End,
}

/// Sends with cancellation checks. `Ok(false)` means the receiver is gone.
pub fn send_packet(
    tx: &Sender<Result<Packet>>,
    item: Result<Packet>,
    state: &ExecState,
) -> Result<bool> {
    let mut item = item;
    loop {
        match tx.send_timeout(item, POLL) {
            Ok(()) => return Ok(true),
            Err(SendTimeoutError::Disconnected(_)) => return Ok(false),
            Err(SendTimeoutError::Timeout(back)) => {
                if state.is_cancelled() {
                    return Err(Error::Cancelled);
                }
                item = back;
            }
        }
    }
}

/// Receiving end of a motion on one consumer: merges all senders' queues,
/// serving whichever is ready.
pub struct MotionRecvOp {
    schema: SchemaRef,
    inputs: Vec<Receiver<Result<Packet>>>,
    state: Arc<ExecState>,
}

impl MotionRecvOp {
    pub fn new(schema: SchemaRef, inputs: Vec<Receiver<Result<Packet>>>, state: Arc<ExecState>) -> Self {
        MotionRecvOp {
            schema,
            inputs,
            state,
        }
    }

    fn handle(&mut self, idx: usize, msg: Result<Result<Packet>, TryRecvError>) -> Result<Option<RowGroup>> {
        match msg {
            Ok(Ok(Packet::Batch(rg))) => Ok(Some(rg)),
            Ok(Ok(Packet::End)) => {
                self.inputs.swap_remove(idx);
                Ok(None)
            }
            Ok(Err(e)) => Err(e),
            Err(TryRecvError::Empty) => Ok(None),
            Err(TryRecvError::Disconnected) => {
                if self.state.is_cancelled() {
                    Err(Error::Cancelled)
                } else {
                    Err(Error::UpstreamAborted)
                }
            }
        }
    }
}

impl Operator for MotionRecvOp {
    fn schema(&self) -> &SchemaRef {
        &self.schema
    }

    fn next_batch(&mut self) -> Result<Option<RowGroup>> {
        loop {
            match self.inputs.len() {
                0 => return Ok(None),
                1 => {
                    let msg = match self.inputs[0].recv_timeout(POLL) {
                        Ok(m) => Ok(m),
                        Err(RecvTimeoutError::Timeout) => Err(TryRecvError::Empty),
                        Err(RecvTimeoutError::Disconnected) => Err(TryRecvError::Disconnected),
                    };
                    if let Some(rg) = self.handle(0, msg)? {
                        return Ok(Some(rg));
                    }
                }
                _ => {
                    let ready = {
                        let mut sel = Select::new();
                        for rx in &self.inputs {
                            sel.recv(rx);
                        }
                        sel.ready_timeout(POLL).ok()
                    };
                    if let Some(idx) = ready {
                        let msg = self.inputs[idx].try_recv();
                        if let Some(rg) = self.handle(idx, msg)? {
                            return Ok(Some(rg));
                        }
                    }
                }
            }
            if self.state.is_cancelled() {
                return Err(Error::Cancelled);
            }
        }
    }
}

/// Drains `input` into a single receiver and terminates the stream.
pub fn run_gather_sender(
    mut input: Box<dyn Operator>,
    tx: Sender<Result<Packet>>,
    state: &ExecState,
) -> Result<()> {
    while let Some(rg) = input.next_batch()? {
        if !send_packet(&tx, Ok(Packet::Batch(rg)), state)? {
            return Ok(());
        }
    }
    send_packet(&tx, Ok(Packet::End), state)?;
    Ok(())
}

/// Routes each row of `input` to the receiver chosen by hashing `columns`.
pub fn run_redistribute_sender(
    mut input: Box<dyn Operator>,
    txs: Vec<Sender<Result<Packet>>>,
    columns: &[usize],
    state: &ExecState,
) -> Result<()> {
    let n = txs.len();
    let policy = DistributionPolicy::HashColumns(columns.to_vec());
    let mut live = vec![true; n];
    while let Some(rg) = input.next_batch()? {
        let schema = Arc::clone(rg.schema());
        let mut parts: Vec<Vec<Row>> = vec![Vec::new(); n];
        for r in rg.into_rows() {
            let s = hash_segment(&r, &policy, n)?;
            parts[s].push(r);
        }
        for (s, rows) in parts.into_iter().enumerate() {
            if rows.is_empty() || !live[s] {
                continue;
            }
            let rg = RowGroup::new_unchecked(Arc::clone(&schema), rows);
            live[s] = send_packet(&txs[s], Ok(Packet::Batch(rg)), state)?;
        }
    }
    for (s, tx) in txs.iter().enumerate() {
        if live[s] {
            send_packet(tx, Ok(Packet::End), state)?;
        }
    }
    Ok(())
}
