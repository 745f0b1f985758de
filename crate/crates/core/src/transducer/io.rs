//! The callback surface a transducer program sees: `next_input`,
//! `write_output`, the BSP calls, and name-based record access.

use std::any::{Any, TypeId};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::bsp::{BspContext, BspGroup};
use crate::datamodel::{Datum, Row, RowGroup, Schema, SchemaRef};
use crate::engine::{ExecState, Operator, SortKey};
use crate::error::{Error, Result};

/// A stateful program driven through [`TransducerIo`]. It may read and write
/// in any order; returning ends its output stream.
pub trait TransducerProgram: Send {
    fn run(&mut self, io: &mut TransducerIo<'_>) -> Result<()>;
}

impl<F> TransducerProgram for F
where
    F: FnMut(&mut TransducerIo<'_>) -> Result<()> + Send,
{
    fn run(&mut self, io: &mut TransducerIo<'_>) -> Result<()> {
        self(io)
    }
}

/// Downstream side of a transducer instance.
pub trait RowGroupSink: Send {
    fn push(&mut self, rg: RowGroup) -> Result<()>;
    /// Signals end of stream. Called exactly once per instance.
    fn end(&mut self) -> Result<()>;
}

impl RowGroupSink for Vec<RowGroup> {
    fn push(&mut self, rg: RowGroup) -> Result<()> {
        Vec::push(self, rg);
        Ok(())
    }

    fn end(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Static facts about one transducer instance.
#[derive(Debug, Clone)]
pub struct InstanceInfo {
    pub name: String,
    pub segment_id: usize,
    pub ninstances: usize,
    pub batch_size: usize,
    pub in_schema: SchemaRef,
    pub out_schema: SchemaRef,
    /// Sort order the planner guarantees on the input, in input columns.
    pub input_ordering: Vec<SortKey>,
    /// Input columns the rows were hash-distributed on, if any.
    pub input_partitioning: Option<Vec<usize>>,
}

/// State shared by all instances of one transducer plan node execution.
#[derive(Debug)]
pub struct NodeShared {
    bsp: Arc<BspGroup>,
    state: Arc<ExecState>,
    slots: Mutex<HashMap<TypeId, Arc<dyn Any + Send + Sync>>>,
}

impl NodeShared {
    pub fn new(bsp: Arc<BspGroup>, state: Arc<ExecState>) -> Self {
        NodeShared {
            bsp,
            state,
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn bsp_group(&self) -> &Arc<BspGroup> {
        &self.bsp
    }

    pub fn state(&self) -> &Arc<ExecState> {
        &self.state
    }

    /// The node-wide value of type `T`, created by the first caller.
    pub fn get_or_init<T, F>(&self, init: F) -> Arc<T>
    where
        T: Any + Send + Sync,
        F: FnOnce() -> T,
    {
        let mut slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        let slot = slots
            .entry(TypeId::of::<T>())
            .or_insert_with(|| Arc::new(init()) as Arc<dyn Any + Send + Sync>);
        Arc::clone(slot).downcast::<T>().expect("slot keyed by TypeId")
    }
}

/// Read-only view of an input row with lookup by column name.
#[derive(Debug, Clone, Copy)]
pub struct Record<'a> {
    schema: &'a Schema,
    row: &'a Row,
}

impl<'a> Record<'a> {
    pub fn new(schema: &'a Schema, row: &'a Row) -> Self {
        Record { schema, row }
    }

    pub fn get(&self, name: &str) -> Result<&'a Datum> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::Schema(format!("no column '{name}' in {}", self.schema)))?;
        Ok(&self.row[idx])
    }
}

/// Output row under construction; unset columns are null.
#[derive(Debug, Clone)]
pub struct OutRecord {
    schema: SchemaRef,
    cells: Vec<Datum>,
}

impl OutRecord {
    pub fn new(schema: &SchemaRef) -> Self {
        OutRecord {
            schema: Arc::clone(schema),
            cells: vec![Datum::Null; schema.len()],
        }
    }

    pub fn set(&mut self, name: &str, value: impl Into<Datum>) -> Result<&mut Self> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::Schema(format!("no column '{name}' in {}", self.schema)))?;
        self.cells[idx] = value.into();
        Ok(self)
    }

    pub fn into_row(self) -> Row {
        Row::new(self.cells)
    }
}

pub struct TransducerIo<'a> {
    info: &'a InstanceInfo,
    input: &'a mut dyn Operator,
    pending: std::vec::IntoIter<Row>,
    input_done: bool,
    input_failed: bool,
    sink: &'a mut dyn RowGroupSink,
    out: Vec<Row>,
    ended: bool,
    shared: &'a NodeShared,
    bsp: Option<BspContext>,
}

impl<'a> TransducerIo<'a> {
    pub fn new(
        info: &'a InstanceInfo,
        input: &'a mut dyn Operator,
        sink: &'a mut dyn RowGroupSink,
        shared: &'a NodeShared,
    ) -> Self {
        TransducerIo {
            info,
            input,
            pending: Vec::new().into_iter(),
            input_done: false,
            input_failed: false,
            sink,
            out: Vec::new(),
            ended: false,
            shared,
            bsp: None,
        }
    }

    pub fn info(&self) -> &InstanceInfo {
        self.info
    }

    pub fn segment_id(&self) -> usize {
        self.info.segment_id
    }

    pub fn ninstances(&self) -> usize {
        self.info.ninstances
    }

    pub fn in_schema(&self) -> &SchemaRef {
        &self.info.in_schema
    }

    pub fn out_schema(&self) -> &SchemaRef {
        &self.info.out_schema
    }

    pub fn input_ordering(&self) -> &[SortKey] {
        &self.info.input_ordering
    }

    pub fn shared(&self) -> &NodeShared {
        self.shared
    }

    pub fn is_cancelled(&self) -> bool {
        self.shared.state.is_cancelled()
    }

    /// Next input row, or `None` once the input is exhausted.
    pub fn next_input(&mut self) -> Result<Option<Row>> {
        loop {
            if let Some(r) = self.pending.next() {
                return Ok(Some(r));
            }
            if self.input_done {
                return Ok(None);
            }
            match self.input.next_batch() {
                Ok(Some(rg)) => self.pending = rg.into_rows().into_iter(),
                Ok(None) => self.input_done = true,
                Err(e) => {
                    self.input_failed = true;
                    return Err(e);
                }
            }
        }
    }

    /// Wraps a row from `next_input` for lookup by column name.
    pub fn record<'r>(&self, row: &'r Row) -> Record<'r>
    where
        'a: 'r,
    {
        Record::new(&self.info.in_schema, row)
    }

    pub fn new_output(&self) -> OutRecord {
        OutRecord::new(&self.info.out_schema)
    }

    pub fn write_output(&mut self, row: Row) -> Result<()> {
        if self.ended {
            return Err(Error::execution("Transducer", "write_output after end of output"));
        }
        self.info.out_schema.validate(row.cells())?;
        self.out.push(row);
        if self.out.len() >= self.info.batch_size {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if self.out.is_empty() {
            return Ok(());
        }
        let rows = std::mem::take(&mut self.out);
        self.sink
            .push(RowGroup::new_unchecked(Arc::clone(&self.info.out_schema), rows))
    }

    /// Ends the output stream; the runner calls this if the program does not.
    pub fn write_end(&mut self) -> Result<()> {
        if self.ended {
            return Ok(());
        }
        self.flush()?;
        self.ended = true;
        self.sink.end()
    }

    /// Joins this node's BSP group; `n` must equal the instance count.
    pub fn bsp_init(&mut self, n: usize) -> Result<()> {
        if self.bsp.is_some() {
            return Err(Error::Bsp(format!(
                "peer {} called bsp_init twice",
                self.info.segment_id
            )));
        }
        self.bsp = Some(self.shared.bsp.join(self.info.segment_id, n)?);
        Ok(())
    }

    pub fn bsp(&mut self) -> Result<&mut BspContext> {
        self.bsp
            .as_mut()
            .ok_or_else(|| Error::Bsp("BSP call before bsp_init".into()))
    }

    pub fn bsp_send(&mut self, peer: usize, msg: Row) -> Result<()> {
        self.bsp()?.send(peer, msg)
    }

    pub fn bsp_next(&mut self) -> Result<Option<Row>> {
        self.bsp()?.next()
    }

    pub fn bsp_sync(&mut self, vote_done: bool) -> Result<bool> {
        self.bsp()?.sync(vote_done)
    }
}

/// Drives `program` to completion for one instance and terminates its output
/// stream exactly once. Failures name the program and segment.
pub fn run_builtin(
    program: &mut dyn TransducerProgram,
    info: &InstanceInfo,
    input: &mut dyn Operator,
    sink: &mut dyn RowGroupSink,
    shared: &NodeShared,
) -> Result<()> {
    let (result, input_failed) = {
        let mut io = TransducerIo::new(info, input, sink, shared);
        let r = program.run(&mut io).and_then(|()| io.write_end());
        (r, io.input_failed)
    };
    if let Err(e) = &result {
        if !e.is_secondary() {
            // Stop peers blocked at a barrier before they notice we left.
            shared.state.cancel();
        }
    }
    shared.bsp.depart(info.segment_id);
    result.map_err(|e| match e {
        // Failures upstream keep their own attribution.
        e if input_failed => e,
        Error::Cancelled | Error::UpstreamAborted | Error::Transducer { .. } => e,
        other => Error::Transducer {
            name: info.name.clone(),
            segment: info.segment_id,
            msg: other.to_string(),
        },
    })
}
