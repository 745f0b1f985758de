//! Bulk-synchronous-parallel runtime for transducer instances.
//!
//! A [`BspGroup`] is shared by the `n` instances of one transducer plan node.
//! Each instance joins once and gets a [`BspContext`]. Messages sent during
//! superstep `s` are buffered locally, handed to the group when the sender
//! reaches the barrier, and become readable by the receiver in superstep
//! `s + 1`. Delivery is FIFO per (sender, receiver) pair; the inbox lists
//! senders in id order.
//!
//! The barrier returns `done = true` only when every peer voted done in the
//! same superstep. After that every context is halted and further calls fail.

use std::collections::VecDeque;
use std::mem;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use crate::datamodel::{Row, SchemaRef};
use crate::error::{Error, Result};

pub const DEFAULT_SYNC_TIMEOUT: Duration = Duration::from_secs(60);

const POLL: Duration = Duration::from_millis(50);

#[derive(Debug)]
struct GroupState {
    joined: Vec<bool>,
    departed: Vec<bool>,
    arrived: Vec<bool>,
    narrived: usize,
    all_voted_done: bool,
    /// Completed barriers.
    generation: u64,
    /// `staging[dest][sender]` for the superstep being closed.
    staging: Vec<Vec<Vec<Row>>>,
    /// Messages handed to `dest` by the last completed barrier.
    delivered: Vec<Vec<Row>>,
    last_done: bool,
    halted: bool,
    failed: Option<String>,
}

/// Barrier and mailbox shared by the peers of one BSP computation.
#[derive(Debug)]
pub struct BspGroup {
    n: usize,
    timeout: Duration,
    cancel: Option<Arc<AtomicBool>>,
    state: Mutex<GroupState>,
    cv: Condvar,
}

impl BspGroup {
    pub fn new(n: usize, timeout: Duration) -> Arc<Self> {
        Self::with_cancel(n, timeout, None)
    }

    /// A group whose barrier also gives up once `cancel` is raised.
    pub fn with_cancel(n: usize, timeout: Duration, cancel: Option<Arc<AtomicBool>>) -> Arc<Self> {
        Arc::new(BspGroup {
            n,
            timeout,
            cancel,
            state: Mutex::new(GroupState {
                joined: vec![false; n],
                departed: vec![false; n],
                arrived: vec![false; n],
                narrived: 0,
                all_voted_done: true,
                generation: 0,
                staging: vec![vec![Vec::new(); n]; n],
                delivered: vec![Vec::new(); n],
                last_done: false,
                halted: false,
                failed: None,
            }),
            cv: Condvar::new(),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn lock(&self) -> MutexGuard<'_, GroupState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Registers peer `id`; `n` must equal the group size.
    pub fn join(self: &Arc<Self>, id: usize, n: usize) -> Result<BspContext> {
        if n == 0 {
            return Err(Error::Bsp("bsp_init needs a positive peer count".into()));
        }
        if n != self.n {
            return Err(Error::Bsp(format!(
                "bsp_init({n}) does not match the {} participating instances",
                self.n
            )));
        }
        if id >= self.n {
            return Err(Error::Bsp(format!("peer id {id} out of range 0..{}", self.n)));
        }
        let mut st = self.lock();
        if st.joined[id] {
            return Err(Error::Bsp(format!("peer {id} called bsp_init twice")));
        }
        st.joined[id] = true;
        Ok(BspContext {
            group: Arc::clone(self),
            my_id: id,
            outboxes: vec![Vec::new(); self.n],
            inbox: VecDeque::new(),
            superstep: 0,
            halted: false,
            message_schema: None,
        })
    }

    /// Marks peer `id` as gone. Peers waiting at a barrier it never reached
    /// fail instead of waiting for the timeout.
    pub fn depart(&self, id: usize) {
        let mut st = self.lock();
        if id < self.n && !st.departed[id] {
            st.departed[id] = true;
            drop(st);
            self.cv.notify_all();
        }
    }

    /// Fails every current and future barrier wait.
    pub fn abort(&self, reason: &str) {
        let mut st = self.lock();
        if st.failed.is_none() {
            st.failed = Some(reason.to_string());
        }
        drop(st);
        self.cv.notify_all();
    }

    fn sync(&self, me: usize, outboxes: &mut [Vec<Row>], vote_done: bool) -> Result<(bool, Vec<Row>)> {
        let mut st = self.lock();
        if let Some(f) = &st.failed {
            return Err(Error::Bsp(f.clone()));
        }
        for (dest, out) in outboxes.iter_mut().enumerate() {
            st.staging[dest][me].append(out);
        }
        st.arrived[me] = true;
        st.narrived += 1;
        st.all_voted_done &= vote_done;

        if st.narrived == self.n {
            let staging = mem::replace(&mut st.staging, vec![vec![Vec::new(); self.n]; self.n]);
            for (dest, per_sender) in staging.into_iter().enumerate() {
                st.delivered[dest] = per_sender.into_iter().flatten().collect();
            }
            st.last_done = st.all_voted_done;
            st.halted = st.last_done;
            st.all_voted_done = true;
            st.narrived = 0;
            st.arrived.iter_mut().for_each(|a| *a = false);
            st.generation += 1;
            self.cv.notify_all();
        } else {
            let gen = st.generation;
            let deadline = Instant::now() + self.timeout;
            while st.generation == gen {
                if let Some(f) = &st.failed {
                    return Err(Error::Bsp(f.clone()));
                }
                if self.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed)) {
                    return Err(Error::Cancelled);
                }
                if let Some(p) = (0..self.n).find(|&p| st.departed[p] && !st.arrived[p]) {
                    let msg = format!(
                        "peer {p} terminated without calling bsp_sync in superstep {}",
                        st.generation
                    );
                    st.failed = Some(msg.clone());
                    self.cv.notify_all();
                    return Err(Error::Bsp(msg));
                }
                let now = Instant::now();
                if now >= deadline {
                    let missing: Vec<usize> = (0..self.n).filter(|&p| !st.arrived[p]).collect();
                    let msg = format!(
                        "bsp_sync timed out after {:?} waiting for peers {missing:?}",
                        self.timeout
                    );
                    st.failed = Some(msg.clone());
                    self.cv.notify_all();
                    return Err(Error::Bsp(msg));
                }
                let wait = POLL.min(deadline - now);
                st = self
                    .cv
                    .wait_timeout(st, wait)
                    .unwrap_or_else(|e| e.into_inner())
                    .0;
            }
        }
        let inbox = mem::take(&mut st.delivered[me]);
        Ok((st.last_done, inbox))
    }
}

/// Creates a group of `n` peers and joins all of them.
pub fn bsp_init(n: usize, timeout: Duration) -> Result<Vec<BspContext>> {
    let group = BspGroup::new(n, timeout);
    (0..n).map(|id| group.join(id, n)).collect()
}

/// One peer's handle on a BSP computation.
#[derive(Debug)]
pub struct BspContext {
    group: Arc<BspGroup>,
    my_id: usize,
    outboxes: Vec<Vec<Row>>,
    inbox: VecDeque<Row>,
    superstep: u64,
    halted: bool,
    message_schema: Option<SchemaRef>,
}

impl BspContext {
    pub fn npeers(&self) -> usize {
        self.group.n
    }

    pub fn my_id(&self) -> usize {
        self.my_id
    }

    pub fn superstep(&self) -> u64 {
        self.superstep
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Validates every outgoing message against `schema` from now on.
    pub fn set_message_schema(&mut self, schema: SchemaRef) {
        self.message_schema = Some(schema);
    }

    fn check_live(&self, op: &str) -> Result<()> {
        if self.halted {
            return Err(Error::Bsp(format!("{op} called after the computation halted")));
        }
        Ok(())
    }

    /// Queues `msg` for `peer`; it becomes readable there next superstep.
    pub fn send(&mut self, peer: usize, msg: Row) -> Result<()> {
        self.check_live("bsp_send")?;
        if peer >= self.group.n {
            return Err(Error::Bsp(format!(
                "bsp_send to peer {peer}, valid peers are 0..{}",
                self.group.n
            )));
        }
        if let Some(s) = &self.message_schema {
            s.validate(msg.cells())?;
        }
        self.outboxes[peer].push(msg);
        Ok(())
    }

    /// Next message delivered for this superstep; `None` once drained.
    pub fn next(&mut self) -> Result<Option<Row>> {
        self.check_live("bsp_next")?;
        Ok(self.inbox.pop_front())
    }

    /// Messages still unread in this superstep.
    pub fn pending(&self) -> usize {
        self.inbox.len()
    }

    /// Barrier. Returns true iff every peer voted done this superstep.
    pub fn sync(&mut self, vote_done: bool) -> Result<bool> {
        self.check_live("bsp_sync")?;
        let (done, delivered) = self.group.sync(self.my_id, &mut self.outboxes, vote_done)?;
        // Anything left unread from the closing superstep is discarded.
        self.inbox = delivered.into();
        self.superstep += 1;
        if done {
            self.halted = true;
        }
        Ok(done)
    }
}

impl Drop for BspContext {
    fn drop(&mut self) {
        self.group.depart(self.my_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::row;
    use std::thread;

    fn run_peers<F, T>(n: usize, f: F) -> Vec<Result<T>>
    where
        F: Fn(BspContext) -> Result<T> + Send + Sync + 'static,
        T: Send + 'static,
    {
        let f = Arc::new(f);
        let ctxs = bsp_init(n, Duration::from_secs(5)).unwrap();
        let handles: Vec<_> = ctxs
            .into_iter()
            .map(|c| {
                let f = Arc::clone(&f);
                thread::spawn(move || f(c))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    }

    #[test]
    fn init_assigns_ids() {
        let ctxs = bsp_init(2, DEFAULT_SYNC_TIMEOUT).unwrap();
        let ids: Vec<_> = ctxs.iter().map(|c| c.my_id()).collect();
        assert_eq!(ids, vec![0, 1]);
        assert!(ctxs.iter().all(|c| c.superstep() == 0 && c.npeers() == 2));
    }

    #[test]
    fn single_peer_barrier_is_trivial() {
        let mut c = bsp_init(1, DEFAULT_SYNC_TIMEOUT).unwrap().pop().unwrap();
        assert!(!c.sync(false).unwrap());
        assert!(c.sync(true).unwrap());
        assert!(c.is_halted());
    }

    #[test]
    fn double_init_and_mismatched_n() {
        let g = BspGroup::new(2, DEFAULT_SYNC_TIMEOUT);
        let _a = g.join(0, 2).unwrap();
        assert!(g.join(0, 2).is_err());
        assert!(g.join(1, 3).is_err());
    }

    #[test]
    fn self_send_visible_next_superstep() {
        let mut c = bsp_init(1, DEFAULT_SYNC_TIMEOUT).unwrap().pop().unwrap();
        assert_eq!(c.next().unwrap(), None);
        c.send(0, row![7i64]).unwrap();
        assert_eq!(c.next().unwrap(), None);
        c.sync(false).unwrap();
        assert_eq!(c.next().unwrap(), Some(row![7i64]));
        assert_eq!(c.next().unwrap(), None);
    }

    #[test]
    fn send_errors() {
        let mut c = bsp_init(1, DEFAULT_SYNC_TIMEOUT).unwrap().pop().unwrap();
        assert!(c.send(1, row![1]).is_err());
        c.sync(true).unwrap();
        assert!(c.send(0, row![1]).is_err());
        assert!(c.next().is_err());
        assert!(c.sync(true).is_err());
    }

    #[test]
    fn message_schema_enforced() {
        let mut c = bsp_init(1, DEFAULT_SYNC_TIMEOUT).unwrap().pop().unwrap();
        c.set_message_schema(Arc::new(
            crate::datamodel::Schema::parse_spec("v:int64").unwrap(),
        ));
        assert!(c.send(0, row![1i32]).is_err());
        assert!(c.send(0, row![1i64]).is_ok());
    }

    #[test]
    fn three_messages_then_none() {
        let out = run_peers(2, |mut c| {
            if c.my_id() == 0 {
                for i in 0..3i64 {
                    c.send(1, row![i])?;
                }
            }
            c.sync(false)?;
            let mut got = Vec::new();
            while let Some(r) = c.next()? {
                got.push(r);
            }
            c.sync(true)?;
            Ok(got)
        });
        let out: Vec<_> = out.into_iter().map(Result::unwrap).collect();
        assert!(out[0].is_empty());
        assert_eq!(out[1], vec![row![0i64], row![1i64], row![2i64]]);
    }

    #[test]
    fn vote_truth_table() {
        for (v0, v1) in [(true, true), (true, false), (false, true), (false, false)] {
            let out = run_peers(2, move |mut c| {
                let vote = if c.my_id() == 0 { v0 } else { v1 };
                c.sync(vote)
            });
            let done: Vec<bool> = out.into_iter().map(Result::unwrap).collect();
            assert_eq!(done, vec![v0 && v1, v0 && v1], "votes {v0} {v1}");
        }
    }

    #[test]
    fn departed_peer_breaks_the_barrier() {
        let g = BspGroup::new(2, Duration::from_secs(30));
        let mut a = g.join(0, 2).unwrap();
        let b = g.join(1, 2).unwrap();
        let h = thread::spawn(move || a.sync(false));
        thread::sleep(Duration::from_millis(20));
        drop(b);
        let err = h.join().unwrap().unwrap_err();
        assert!(err.to_string().contains("terminated without calling bsp_sync"), "{err}");
    }

    #[test]
    fn sync_timeout() {
        let g = BspGroup::new(2, Duration::from_millis(100));
        let mut a = g.join(0, 2).unwrap();
        let _b = g.join(1, 2).unwrap();
        let err = a.sync(false).unwrap_err();
        assert!(err.to_string().contains("timed out"), "{err}");
    }
}
