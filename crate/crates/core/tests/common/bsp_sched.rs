//! Randomized send schedules and the vote truth table for the BSP runtime.

use std::collections::HashMap;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use tdx::bsp::{bsp_init, BspContext};
use tdx::datamodel::{Datum, Row};

const TIMEOUT: Duration = Duration::from_secs(20);

fn run_peers<T: Send + 'static>(
    n: usize,
    f: impl Fn(BspContext) -> Result<T, String> + Send + Sync + 'static,
) -> Vec<Result<T, String>> {
    let f = Arc::new(f);
    bsp_init(n, TIMEOUT)
        .unwrap()
        .into_iter()
        .map(|ctx| {
            let f = Arc::clone(&f);
            thread::spawn(move || f(ctx))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|h| h.join().unwrap_or_else(|_| Err("peer panicked".into())))
        .collect()
}

/// Every vote combination for 1..=4 peers: all peers must see the same
/// result, true exactly when everyone voted done.
pub fn truth_table() -> Result<usize, String> {
    let mut cases = 0;
    for n in 1..=4usize {
        for mask in 0..(1u32 << n) {
            let votes: Arc<Vec<bool>> = Arc::new((0..n).map(|i| mask & (1 << i) != 0).collect());
            let all = votes.iter().all(|&v| v);
            let v = Arc::clone(&votes);
            let results = run_peers(n, move |mut ctx| {
                let first = ctx.sync(v[ctx.my_id()]).map_err(|e| e.to_string())?;
                // Not halted yet: a follow-up unanimous barrier must end it.
                if !first {
                    let second = ctx.sync(true).map_err(|e| e.to_string())?;
                    if !second {
                        return Err("unanimous vote did not halt".into());
                    }
                }
                if !ctx.is_halted() || ctx.sync(true).is_ok() {
                    return Err("context still usable after halting".into());
                }
                Ok(first)
            });
            for (id, r) in results.into_iter().enumerate() {
                let got = r?;
                if got != all {
                    return Err(format!("votes {votes:?}: peer {id} got done={got}"));
                }
            }
            cases += 1;
        }
    }
    Ok(cases)
}

fn msg(sender: usize, step: u64, seq: usize) -> Row {
    Row::new(vec![
        Datum::Int64(sender as i64),
        Datum::Int64(step as i64),
        Datum::Int64(seq as i64),
    ])
}

/// A schedule: per superstep, per sender, the list of destinations in send
/// order.
type Plan = Vec<Vec<Vec<usize>>>;

fn random_plan(rng: &mut impl Rng, n: usize) -> Plan {
    let steps = rng.gen_range(1..=4);
    (0..steps)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let k = rng.gen_range(0..=12);
                    (0..k).map(|_| rng.gen_range(0..n)).collect()
                })
                .collect()
        })
        .collect()
}

/// Runs one schedule and checks that each message sent in superstep s is
/// read exactly once, by its destination, in superstep s + 1, and that
/// messages between a pair keep their send order.
pub fn run_schedule(seed: u64) -> Result<(), String> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let n = rng.gen_range(1..=5);
    let plan = Arc::new(random_plan(&mut rng, n));
    let jitter = rng.gen_bool(0.3);
    let p = Arc::clone(&plan);
    let results = run_peers(n, move |mut ctx| {
        let me = ctx.my_id();
        let mut local = rand::rngs::StdRng::seed_from_u64(seed ^ (me as u64 + 1) * 0x9e37_79b9);
        // (step read, sender, step sent, seq)
        let mut got = Vec::new();
        for (step, senders) in p.iter().enumerate() {
            for (seq, &dest) in senders[me].iter().enumerate() {
                if jitter && local.gen_ratio(1, 8) {
                    thread::yield_now();
                }
                ctx.send(dest, msg(me, step as u64, seq)).map_err(|e| e.to_string())?;
            }
            if ctx.sync(false).map_err(|e| e.to_string())? {
                return Err("halted on a not-done vote".into());
            }
            while let Some(r) = ctx.next().map_err(|e| e.to_string())? {
                got.push((
                    step as i64 + 1,
                    r[0].as_i64().unwrap(),
                    r[1].as_i64().unwrap(),
                    r[2].as_i64().unwrap(),
                ));
            }
        }
        if !ctx.sync(true).map_err(|e| e.to_string())? {
            return Err("unanimous vote did not halt".into());
        }
        Ok(got)
    });

    let mut expected: HashMap<(usize, usize, usize), Vec<usize>> = HashMap::new();
    for (step, senders) in plan.iter().enumerate() {
        for (s, dests) in senders.iter().enumerate() {
            for (seq, &d) in dests.iter().enumerate() {
                expected.entry((step, s, d)).or_default().push(seq);
            }
        }
    }
    let mut received: HashMap<(usize, usize, usize), Vec<usize>> = HashMap::new();
    for (dest, r) in results.into_iter().enumerate() {
        for (read_step, sender, sent_step, seq) in r? {
            if read_step != sent_step + 1 {
                return Err(format!(
                    "seed {seed}: message sent in superstep {sent_step} read in {read_step}"
                ));
            }
            received
                .entry((sent_step as usize, sender as usize, dest))
                .or_default()
                .push(seq as usize);
        }
    }
    // Equal per-pair sequences give conservation, exactly-once and FIFO.
    if expected != received {
        return Err(format!("seed {seed}: n={n}, delivered {received:?}, sent {expected:?}"));
    }
    Ok(())
}
