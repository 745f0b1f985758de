//! Graph traversal over the BSP runtime. Node `x` is owned by instance
//! `hash_datum(x, n)`, so integer ids land on `x mod n`.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::{expect_types, known_params, param, required};
use crate::datamodel::{hash_datum, DataType, Datum, Row};
use crate::error::{Error, Result};
use crate::transducer::{Builtin, Params, TransducerIo, TransducerProgram, TransducerSpec};

fn owner(node: i64, n: usize) -> usize {
    hash_datum(&Datum::Int64(node), n)
}

fn int(d: &Datum, what: &str) -> Result<i64> {
    d.as_i64()
        .ok_or_else(|| Error::execution("graph", format!("{what} is null")))
}

const EDGE: i32 = 0;
const VISIT: i32 = 1;
const NODE: i32 = 2;
const COUNT: i32 = 3;

fn msg(kind: i32, a: i64, b: i64, w: f64) -> Row {
    Row::new(vec![
        Datum::Int32(kind),
        Datum::Int64(a),
        Datum::Int64(b),
        Datum::Float64(w),
    ])
}

fn unpack(r: &Row) -> (i32, i64, i64, f64) {
    (
        r[0].as_i64().unwrap_or(-1) as i32,
        r[1].as_i64().unwrap_or(0),
        r[2].as_i64().unwrap_or(0),
        r[3].as_f64().unwrap_or(0.0),
    )
}

/// Breadth-first search from `start`. Input `(i int64, j int64)` edges,
/// output `(node int64, depth int64)` with -1 for unreachable nodes. Edges
/// are undirected unless `directed=true`.
pub struct Bfs;

impl Builtin for Bfs {
    fn name(&self) -> &str {
        "bfs"
    }

    fn check(&self, spec: &TransducerSpec, params: &Params) -> Result<()> {
        known_params(params, "bfs", &["start", "directed"])?;
        required::<i64>(params, "bfs", "start")?;
        param::<bool>(params, "directed")?;
        expect_types("bfs", "input", &spec.in_schema, &[DataType::Int64, DataType::Int64])?;
        expect_types("bfs", "output", &spec.out_schema, &[DataType::Int64, DataType::Int64])
    }

    fn instantiate(&self, params: &Params) -> Result<Box<dyn TransducerProgram>> {
        let start = required::<i64>(params, "bfs", "start")?;
        let directed = param::<bool>(params, "directed")?.unwrap_or(false);
        Ok(Box::new(move |io: &mut TransducerIo<'_>| bfs(io, start, directed)))
    }
}

fn bfs(io: &mut TransducerIo<'_>, start: i64, directed: bool) -> Result<()> {
    let n = io.ninstances();
    let me = io.segment_id();
    io.bsp_init(n)?;

    // Superstep 1: ship every edge to the owners of both endpoints.
    while let Some(r) = io.next_input()? {
        let (i, j) = (int(&r[0], "edge source")?, int(&r[1], "edge target")?);
        io.bsp_send(owner(i, n), msg(EDGE, i, j, 0.0))?;
        if owner(j, n) != owner(i, n) {
            io.bsp_send(owner(j, n), msg(EDGE, i, j, 0.0))?;
        }
    }
    io.bsp_sync(false)?;

    // Superstep 2: build adjacency for owned nodes and seed the start node.
    let mut adj: HashMap<i64, Vec<i64>> = HashMap::new();
    let mut depth: BTreeMap<i64, i64> = BTreeMap::new();
    while let Some(m) = io.bsp_next()? {
        let (_, i, j, _) = unpack(&m);
        if owner(i, n) == me {
            adj.entry(i).or_default().push(j);
            depth.insert(i, -1);
        }
        if owner(j, n) == me {
            if !directed {
                adj.entry(j).or_default().push(i);
            }
            depth.insert(j, -1);
        }
    }
    if owner(start, n) == me {
        io.bsp_send(me, msg(VISIT, start, 0, 0.0))?;
    }
    io.bsp_sync(false)?;

    // Frontier expansion until a superstep marks nothing anywhere.
    loop {
        let mut marked = false;
        while let Some(m) = io.bsp_next()? {
            let (_, node, d, _) = unpack(&m);
            let Some(slot) = depth.get_mut(&node) else {
                continue;
            };
            if *slot != -1 {
                continue;
            }
            *slot = d;
            marked = true;
            for &nb in adj.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
                io.bsp_send(owner(nb, n), msg(VISIT, nb, d + 1, 0.0))?;
            }
        }
        if io.bsp_sync(!marked)? {
            break;
        }
    }

    for (node, d) in depth {
        io.write_output(Row::new(vec![Datum::Int64(node), Datum::Int64(d)]))?;
    }
    Ok(())
}

/// Single-source shortest paths by Bellman-Ford relaxation. Input
/// `(i int64, j int64, w float64)` directed edges, output
/// `(node int64, dist float64)` with +infinity for unreachable nodes.
pub struct Sssp;

impl Builtin for Sssp {
    fn name(&self) -> &str {
        "sssp"
    }

    fn check(&self, spec: &TransducerSpec, params: &Params) -> Result<()> {
        known_params(params, "sssp", &["start"])?;
        required::<i64>(params, "sssp", "start")?;
        expect_types(
            "sssp",
            "input",
            &spec.in_schema,
            &[DataType::Int64, DataType::Int64, DataType::Float64],
        )?;
        expect_types("sssp", "output", &spec.out_schema, &[DataType::Int64, DataType::Float64])
    }

    fn instantiate(&self, params: &Params) -> Result<Box<dyn TransducerProgram>> {
        let start = required::<i64>(params, "sssp", "start")?;
        Ok(Box::new(move |io: &mut TransducerIo<'_>| sssp(io, start)))
    }
}

fn sssp(io: &mut TransducerIo<'_>, start: i64) -> Result<()> {
    let n = io.ninstances();
    let me = io.segment_id();
    io.bsp_init(n)?;

    // Superstep 1: edges to the source owner, node registrations to the
    // target owner.
    while let Some(r) = io.next_input()? {
        let (i, j) = (int(&r[0], "edge source")?, int(&r[1], "edge target")?);
        let w = r[2]
            .as_f64()
            .filter(|w| w.is_finite())
            .ok_or_else(|| Error::execution("sssp", format!("edge ({i}, {j}) has no finite weight")))?;
        io.bsp_send(owner(i, n), msg(EDGE, i, j, w))?;
        io.bsp_send(owner(j, n), msg(NODE, j, 0, 0.0))?;
    }
    io.bsp_sync(false)?;

    // Superstep 2: build adjacency, share node counts, seed the start.
    let mut adj: HashMap<i64, Vec<(i64, f64)>> = HashMap::new();
    let mut dist: BTreeMap<i64, f64> = BTreeMap::new();
    while let Some(m) = io.bsp_next()? {
        let (kind, a, b, w) = unpack(&m);
        if kind == EDGE {
            adj.entry(a).or_default().push((b, w));
        }
        dist.insert(a, f64::INFINITY);
    }
    for peer in 0..n {
        io.bsp_send(peer, msg(COUNT, dist.len() as i64, 0, 0.0))?;
    }
    if owner(start, n) == me {
        io.bsp_send(me, msg(VISIT, start, 0, 0.0))?;
    }
    io.bsp_sync(false)?;

    // Relaxation rounds. Round r settles paths of r-1 edges; without a
    // negative cycle nothing improves after round `total nodes`.
    let mut total: i64 = 0;
    let mut round: i64 = 0;
    loop {
        round += 1;
        let mut improved = HashSet::new();
        while let Some(m) = io.bsp_next()? {
            let (kind, a, _, w) = unpack(&m);
            if kind == COUNT {
                total += a;
                continue;
            }
            if let Some(d) = dist.get_mut(&a) {
                if w < *d {
                    *d = w;
                    improved.insert(a);
                }
            }
        }
        if !improved.is_empty() && round > total.max(1) {
            return Err(Error::execution("sssp", "negative cycle detected"));
        }
        for u in &improved {
            let du = dist[u];
            for &(v, w) in adj.get(u).map(Vec::as_slice).unwrap_or(&[]) {
                io.bsp_send(owner(v, n), msg(VISIT, v, 0, du + w))?;
            }
        }
        if io.bsp_sync(improved.is_empty())? {
            break;
        }
    }

    for (node, d) in dist {
        io.write_output(Row::new(vec![Datum::Int64(node), Datum::Float64(d)]))?;
    }
    Ok(())
}
