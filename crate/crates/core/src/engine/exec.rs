//! Turns a plan into running pipelines and drains the root on the caller.
//!
//! Every operator tree is built up front. Each motion sender runs on its own
//! thread; the root pipeline runs on the calling thread. The first worker to
//! fail records its error and raises the shared cancel flag, which every
//! blocking point polls.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use crossbeam::channel::{self, Receiver};

use super::cluster::{Cluster, QueryResult};
use super::exchange::{run_gather_sender, run_redistribute_sender, MotionRecvOp, Packet};
use super::ops::{FilterOp, ProjectOp, ScanOp, SortOp, ValuesOp, WindowRowNumberOp};
use super::plan::{Locus, PlanKind, PlanNode};
use super::{collect_rows, Operator};
use crate::bsp::BspGroup;
use crate::datamodel::DistributionPolicy;
use crate::error::{Error, Result};
use crate::transducer::{
    BuiltinTransducerOp, ExecMode, ExternalTransducerOp, InstanceInfo, NodeShared,
};

/// Cancellation flag and error list shared by all workers of one query.
#[derive(Debug, Default)]
pub struct ExecState {
    cancel: Arc<AtomicBool>,
    errors: Mutex<Vec<Error>>,
}

impl ExecState {
    pub fn new() -> Arc<Self> {
        Arc::new(ExecState::default())
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::Relaxed)
    }

    pub fn cancel_flag(&self) -> &Arc<AtomicBool> {
        &self.cancel
    }

    /// Records a worker failure; a primary error cancels the query.
    pub fn report(&self, e: Error) {
        if !e.is_secondary() {
            self.cancel();
        }
        self.errors.lock().unwrap_or_else(|p| p.into_inner()).push(e);
    }

    /// The error to surface for the query: the first primary error recorded,
    /// else `last`, else any secondary one.
    pub fn take_error(&self, last: Option<Error>) -> Option<Error> {
        let mut errs: Vec<Error> =
            std::mem::take(&mut *self.errors.lock().unwrap_or_else(|p| p.into_inner()));
        errs.extend(last);
        match errs.iter().position(|e| !e.is_secondary()) {
            Some(i) => Some(errs.swap_remove(i)),
            None => errs.into_iter().next(),
        }
    }
}

type Inbox = Vec<Receiver<Result<Packet>>>;

struct Builder<'a> {
    cluster: &'a Cluster,
    state: Arc<ExecState>,
    threads: Vec<JoinHandle<()>>,
    /// Per motion node: the queues each receiver instance reads.
    motions: HashMap<*const PlanNode, Vec<Option<Inbox>>>,
    shared: HashMap<*const PlanNode, Arc<NodeShared>>,
}

fn instances(node: &PlanNode, nseg: usize) -> usize {
    match node.locus() {
        Locus::Segments => nseg,
        Locus::Master => 1,
    }
}

impl<'a> Builder<'a> {
    fn spawn(&mut self, name: String, f: impl FnOnce(&ExecState) -> Result<()> + Send + 'static) {
        let state = Arc::clone(&self.state);
        let h = thread::Builder::new()
            .name(name)
            .spawn(move || {
                if let Err(e) = f(&state) {
                    state.report(e);
                }
            })
            .expect("spawn worker thread");
        self.threads.push(h);
    }

    fn motion_inbox(&mut self, node: &PlanNode, receiver: usize) -> Result<Inbox> {
        let key = node as *const PlanNode;
        if !self.motions.contains_key(&key) {
            let nseg = self.cluster.nseg();
            let child = node.child();
            let nsend = instances(child, nseg);
            let nrecv = instances(node, nseg);
            let cap = self.cluster.config().channel_capacity;
            let mut inboxes: Vec<Inbox> = (0..nrecv).map(|_| Vec::with_capacity(nsend)).collect();
            for s in 0..nsend {
                let input = self.build(child, s)?;
                let mut txs = Vec::with_capacity(nrecv);
                for inbox in inboxes.iter_mut() {
                    let (tx, rx) = channel::bounded(cap);
                    txs.push(tx);
                    inbox.push(rx);
                }
                match &node.kind {
                    PlanKind::Gather { .. } => {
                        let tx = txs.pop().expect("one receiver");
                        self.spawn(format!("gather-{s}"), move |st| {
                            run_gather_sender(input, tx, st)
                        });
                    }
                    PlanKind::Redistribute { columns, .. } => {
                        let columns = columns.clone();
                        self.spawn(format!("redistribute-{s}"), move |st| {
                            run_redistribute_sender(input, txs, &columns, st)
                        });
                    }
                    _ => unreachable!("motion node"),
                }
            }
            self.motions
                .insert(key, inboxes.into_iter().map(Some).collect());
        }
        let slot = &mut self.motions.get_mut(&key).expect("just inserted")[receiver];
        Ok(slot.take().expect("each receiver built once"))
    }

    fn node_shared(&mut self, node: &PlanNode, n: usize) -> Arc<NodeShared> {
        let key = node as *const PlanNode;
        let timeout = self.cluster.config().bsp_timeout;
        let state = &self.state;
        Arc::clone(self.shared.entry(key).or_insert_with(|| {
            let group = BspGroup::with_cancel(n, timeout, Some(Arc::clone(state.cancel_flag())));
            Arc::new(NodeShared::new(group, Arc::clone(state)))
        }))
    }

    /// Builds the pipeline for `node` on instance `inst` (a segment id, or 0
    /// on the master).
    fn build(&mut self, node: &PlanNode, inst: usize) -> Result<Box<dyn Operator>> {
        let cfg = self.cluster.config();
        let batch = cfg.batch_size;
        let schema = Arc::clone(&node.schema);
        Ok(match &node.kind {
            PlanKind::Scan { table } => {
                let t = self.cluster.table(table)?;
                let rows = match t.policy() {
                    DistributionPolicy::Replicated if inst != 0 => Arc::new(Vec::new()),
                    _ => Arc::clone(&t.segments()[inst]),
                };
                Box::new(ScanOp::new(schema, rows, batch))
            }
            PlanKind::Empty => Box::new(ValuesOp::new(schema, Vec::new(), batch)?),
            PlanKind::Filter(pred) => {
                let child = self.build(node.child(), inst)?;
                Box::new(FilterOp::new(child, pred.clone()))
            }
            PlanKind::Project(exprs) => {
                let child = self.build(node.child(), inst)?;
                Box::new(ProjectOp::new(child, exprs.clone(), schema))
            }
            PlanKind::Sort(keys) => {
                let child = self.build(node.child(), inst)?;
                Box::new(SortOp::new(child, keys.clone(), batch))
            }
            PlanKind::WindowRowNumber { partition, order } => {
                let child = self.build(node.child(), inst)?;
                Box::new(WindowRowNumberOp::new(
                    child,
                    partition.clone(),
                    order.clone(),
                    schema,
                    batch,
                ))
            }
            PlanKind::Gather { .. } | PlanKind::Redistribute { .. } => {
                let inbox = self.motion_inbox(node, inst)?;
                Box::new(MotionRecvOp::new(schema, inbox, Arc::clone(&self.state)))
            }
            PlanKind::Transducer(spec) => {
                let n = instances(node, self.cluster.nseg());
                let shared = self.node_shared(node, n);
                let child = node.child();
                let input = self.build(child, inst)?;
                let cfg = self.cluster.config();
                let info = InstanceInfo {
                    name: spec.display_name().to_string(),
                    segment_id: inst,
                    ninstances: n,
                    batch_size: cfg.batch_size,
                    in_schema: Arc::clone(&spec.in_schema),
                    out_schema: Arc::clone(&spec.out_schema),
                    input_ordering: child.output_ordering(),
                    input_partitioning: child.output_partitioning(),
                };
                match &spec.mode {
                    ExecMode::Builtin { name, params } => {
                        let program = cfg.registry.get(name)?.instantiate(params)?;
                        Box::new(BuiltinTransducerOp::spawn(
                            program,
                            info,
                            input,
                            shared,
                            cfg.channel_capacity,
                        ))
                    }
                    ExecMode::External { lang } => {
                        let template = cfg.external_template(lang)?;
                        Box::new(ExternalTransducerOp::spawn(
                            template,
                            &spec.body,
                            info,
                            input,
                            Arc::clone(&self.state),
                            cfg.channel_capacity,
                        )?)
                    }
                }
            }
        })
    }
}

/// Checks everything that can fail before any worker starts.
fn preflight(node: &PlanNode, cluster: &Cluster) -> Result<()> {
    match &node.kind {
        PlanKind::Scan { table } => {
            let t = cluster.table(table)?;
            if !t.schema().same_types(&node.schema) {
                return Err(Error::Plan(format!(
                    "table {table} is {} but the plan expects {}",
                    t.schema(),
                    node.schema
                )));
            }
        }
        PlanKind::Transducer(spec) => match &spec.mode {
            ExecMode::Builtin { name, params } => {
                cluster.config().registry.get(name)?.check(spec, params)?;
            }
            ExecMode::External { lang } => {
                cluster.config().external_template(lang)?;
            }
        },
        _ => {}
    }
    node.children.iter().try_for_each(|c| preflight(c, cluster))
}

/// Runs `plan` on `cluster` and returns the rows produced at the master. A
/// root that runs on the segments is gathered implicitly.
pub fn execute(plan: &PlanNode, cluster: &Cluster) -> Result<QueryResult> {
    let nseg = cluster.nseg();
    let gathered;
    let plan = match plan.locus() {
        Locus::Segments => {
            gathered = PlanNode::gather(plan.clone(), nseg)?;
            &gathered
        }
        Locus::Master => plan,
    };
    plan.validate(nseg)?;
    preflight(plan, cluster)?;

    let state = ExecState::new();
    let mut b = Builder {
        cluster,
        state: Arc::clone(&state),
        threads: Vec::new(),
        motions: HashMap::new(),
        shared: HashMap::new(),
    };
    let result = b.build(plan, 0).and_then(|mut root| {
        let rows = collect_rows(&mut root);
        drop(root);
        rows
    });
    if result.is_err() {
        state.cancel();
    }
    let threads = std::mem::take(&mut b.threads);
    drop(b);
    for h in threads {
        let _ = h.join();
    }
    let (rows, last) = match result {
        Ok(rows) => (Some(rows), None),
        Err(e) => (None, Some(e)),
    };
    match state.take_error(last) {
        // Stragglers noticing shutdown after a complete result are harmless.
        Some(e) if rows.is_some() && e.is_secondary() => {}
        Some(e) => return Err(e),
        None => {}
    }
    Ok(QueryResult {
        schema: Arc::clone(&plan.schema),
        rows: rows.expect("no error means rows"),
    })
}
