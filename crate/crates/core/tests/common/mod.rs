//! Fixtures, query builders and reference implementations shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod bsp_sched;
pub mod golden;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tdx::datamodel::{sort_rows, Datum, DistributionPolicy, Row, Schema};
use tdx::engine::Cluster;

pub const CHILD_BIN: &str = env!("CARGO_BIN_EXE_tdx-protocol-child");

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// A cluster whose `PHIExec child` runs the reference protocol child.
pub fn cluster(nseg: usize) -> Cluster {
    let mut c = Cluster::new(nseg);
    c.config_mut()
        .external
        .insert("child".into(), vec![CHILD_BIN.into(), "{script}".into()]);
    c
}

pub fn sorted(mut rows: Vec<Row>) -> Vec<Row> {
    sort_rows(&mut rows);
    rows
}

pub fn load(c: &mut Cluster, name: &str, spec: &str, policy: &str, rows: Vec<Row>) {
    let schema = Schema::parse_spec(spec).unwrap();
    let policy = DistributionPolicy::parse(policy, &schema).unwrap();
    c.load_table(name, schema, policy, rows).unwrap();
}

/// Transducer body with type blocks for `header` (`PHIExec ...`).
pub fn body(header: &str, inputs: &[(&str, &str)], outputs: &[(&str, &str)], extra: &str) -> String {
    let mut s = format!("{header}\n");
    s.push_str("// BEGIN INPUT\n");
    for (n, t) in inputs {
        s.push_str(&format!("// {n} {t}\n"));
    }
    s.push_str("// END INPUT\n// BEGIN OUTPUT\n");
    for (n, t) in outputs {
        s.push_str(&format!("// {n} {t}\n"));
    }
    s.push_str("// END OUTPUT\n");
    s.push_str(extra);
    s
}

// ---- mod-3 filter ----

pub const PLAIN_FILTER_SQL: &str = "select id, txt from t where id % 3 = 1";

/// The filter written as a transducer query, run by `header`.
pub fn filter_sql(header: &str, extra: &str) -> String {
    let b = body(
        header,
        &[("id", "int32"), ("t", "text")],
        &[("id", "int32"), ("t", "text")],
        extra,
    );
    format!(
        "select transducer_col_int4(1) as id,\n       transducer_col_text(2) as txt,\n       transducer($${b}$$),\n       t.id, t.txt\nfrom t"
    )
}

pub fn builtin_filter_sql() -> String {
    filter_sql("PHIExec builtin mod_filter", "")
}

pub fn random_t(r: &mut StdRng, max_rows: usize) -> Vec<Row> {
    let n = r.gen_range(0..=max_rows);
    (0..n)
        .map(|_| {
            let id = if r.gen_ratio(1, 50) {
                Datum::Null
            } else {
                Datum::Int32(r.gen_range(-1000..100_000))
            };
            let len = r.gen_range(0..8);
            let txt: String = (0..len).map(|_| r.gen_range(b'a'..=b'z') as char).collect();
            Row::new(vec![id, Datum::Text(txt)])
        })
        .collect()
}

pub fn load_t(c: &mut Cluster, rows: Vec<Row>) {
    load(c, "t", "id:int32,txt:text", "hash(id)", rows);
}

// ---- runs ----

pub fn runs_sql() -> String {
    let b = body(
        "PHIExec builtin runs",
        &[("rn", "int64"), ("symbol", "text"), ("day", "int32"), ("price", "float64")],
        &[
            ("symbol", "text"),
            ("begin", "int32"),
            ("beginprice", "float64"),
            ("end", "int32"),
            ("endprice", "float64"),
            ("direction", "int32"),
        ],
        "",
    );
    format!(
        "with run as (
  select transducer_col_text(1) as symbol,
         transducer_col_int4(2) as begin,
         transducer_col_float8(3) as beginprice,
         transducer_col_int4(4) as end,
         transducer_col_float8(5) as endprice,
         transducer_col_int4(6) as direction,
         transducer($${b}$$),
         t.rn, t.symbol, t.day, t.price
  from (select row_number() over (partition by symbol order by day) as rn,
               symbol, day, price
        from stock) t)
select symbol, begin, beginprice, end, endprice, direction from run"
    )
}

pub fn probe_sql() -> String {
    let b = body(
        "PHIExec builtin partition_probe key=symbol order=day",
        &[("symbol", "text"), ("day", "int32")],
        &[("seg", "int32"), ("symbol", "text"), ("rows", "int64"), ("ordered", "bool")],
        "",
    );
    format!(
        "select transducer_col_int4(1) as seg, transducer_col_text(2) as symbol,
       transducer_col_int8(3) as nrows, transducer_col_bool(4) as ordered,
       transducer($${b}$$), t.symbol, t.day
from (select row_number() over (partition by symbol order by day) as rn, symbol, day from stock) t"
    )
}

/// Up to `max_symbols` symbols, each with up to `max_days` distinct days in
/// shuffled order. Prices are small integers so flat steps occur.
pub fn random_stock(r: &mut StdRng, max_symbols: usize, max_days: usize) -> Vec<Row> {
    let nsym = r.gen_range(1..=max_symbols);
    let mut rows = Vec::new();
    for s in 0..nsym {
        let sym = format!("S{s}");
        let ndays = r.gen_range(1..=max_days);
        let mut day = r.gen_range(0..5);
        for _ in 0..ndays {
            let price = r.gen_range(0..6) as f64 + 0.5;
            rows.push(Row::new(vec![
                Datum::Text(sym.clone()),
                Datum::Int32(day),
                Datum::Float64(price),
            ]));
            day += r.gen_range(1..3);
        }
    }
    // Shuffle so the engine has to sort.
    for i in (1..rows.len()).rev() {
        let j = r.gen_range(0..=i);
        rows.swap(i, j);
    }
    rows
}

pub fn load_stock(c: &mut Cluster, rows: Vec<Row>) {
    load(c, "stock", "symbol:text,day:int32,price:float64", "hash(day)", rows);
}

/// Reference runs: classify each step by sign, merge equal nonzero signs.
pub fn runs_oracle(stock: &[Row]) -> Vec<Row> {
    let mut by_sym: BTreeMap<String, Vec<(i32, f64)>> = BTreeMap::new();
    for r in stock {
        by_sym
            .entry(r[0].as_str().unwrap().to_string())
            .or_default()
            .push((r[1].as_i64().unwrap() as i32, r[2].as_f64().unwrap()));
    }
    let mut out = Vec::new();
    for (sym, mut pts) in by_sym {
        pts.sort_by_key(|p| p.0);
        let emit = |out: &mut Vec<Row>, a: (i32, f64), b: (i32, f64), dir: i32| {
            out.push(Row::new(vec![
                Datum::Text(sym.clone()),
                Datum::Int32(a.0),
                Datum::Float64(a.1),
                Datum::Int32(b.0),
                Datum::Float64(b.1),
                Datum::Int32(dir),
            ]));
        };
        if pts.len() == 1 {
            emit(&mut out, pts[0], pts[0], 0);
            continue;
        }
        let signs: Vec<i32> = pts
            .windows(2)
            .map(|w| match w[1].1.partial_cmp(&w[0].1).unwrap() {
                Ordering::Greater => 1,
                Ordering::Less => -1,
                Ordering::Equal => 0,
            })
            .collect();
        let mut i = 0;
        while i < signs.len() {
            let mut j = i + 1;
            if signs[i] != 0 {
                while j < signs.len() && signs[j] == signs[i] {
                    j += 1;
                }
            }
            emit(&mut out, pts[i], pts[j], signs[i]);
            i = j;
        }
    }
    sorted(out)
}

// ---- graphs ----

pub fn bfs_sql(start: i64) -> String {
    let b = body(
        &format!("PHIExec builtin bfs start={start}"),
        &[("i", "int64"), ("j", "int64")],
        &[("node", "int64"), ("depth", "int64")],
        "",
    );
    format!(
        "select transducer_col_int8(1) as node, transducer_col_int8(2) as depth,\n       transducer($${b}$$), i, j\nfrom graph"
    )
}

pub fn sssp_sql(start: i64) -> String {
    let b = body(
        &format!("PHIExec builtin sssp start={start}"),
        &[("i", "int64"), ("j", "int64"), ("w", "float64")],
        &[("node", "int64"), ("dist", "float64")],
        "",
    );
    format!(
        "select transducer_col_int8(1) as node, transducer_col_float8(2) as dist,\n       transducer($${b}$$), i, j, w\nfrom wgraph"
    )
}

pub fn load_graph(c: &mut Cluster, edges: &[(i64, i64)]) {
    let rows = edges
        .iter()
        .map(|&(i, j)| Row::new(vec![Datum::Int64(i), Datum::Int64(j)]))
        .collect();
    load(c, "graph", "i:int64,j:int64", "hash(i)", rows);
}

pub fn load_wgraph(c: &mut Cluster, edges: &[(i64, i64, f64)]) {
    let rows = edges
        .iter()
        .map(|&(i, j, w)| Row::new(vec![Datum::Int64(i), Datum::Int64(j), Datum::Float64(w)]))
        .collect();
    load(c, "wgraph", "i:int64,j:int64,w:float64", "hash(j)", rows);
}

pub fn random_edges(r: &mut StdRng, max_nodes: i64, max_edges: usize) -> Vec<(i64, i64)> {
    let nodes = r.gen_range(2..=max_nodes);
    let m = r.gen_range(1..=max_edges);
    (0..m)
        .map(|_| (r.gen_range(0..nodes), r.gen_range(0..nodes)))
        .collect()
}

/// Sequential queue-based BFS over the undirected graph; start node
/// included only if some edge touches it.
pub fn bfs_oracle(edges: &[(i64, i64)], start: i64) -> BTreeMap<i64, i64> {
    let mut adj: HashMap<i64, Vec<i64>> = HashMap::new();
    for &(i, j) in edges {
        adj.entry(i).or_default().push(j);
        adj.entry(j).or_default().push(i);
    }
    let mut depth: BTreeMap<i64, i64> = adj.keys().map(|&k| (k, -1)).collect();
    if depth.contains_key(&start) {
        depth.insert(start, 0);
        let mut q = VecDeque::from([start]);
        while let Some(u) = q.pop_front() {
            let du = depth[&u];
            for &v in &adj[&u] {
                if depth[&v] == -1 {
                    depth.insert(v, du + 1);
                    q.push_back(v);
                }
            }
        }
    }
    depth
}

#[derive(PartialEq)]
struct HeapItem(f64, i64);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance.
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Binary-heap Dijkstra over the directed graph; nonnegative weights.
pub fn dijkstra_oracle(edges: &[(i64, i64, f64)], start: i64) -> BTreeMap<i64, f64> {
    let mut adj: HashMap<i64, Vec<(i64, f64)>> = HashMap::new();
    let mut dist: BTreeMap<i64, f64> = BTreeMap::new();
    for &(i, j, w) in edges {
        adj.entry(i).or_default().push((j, w));
        dist.insert(i, f64::INFINITY);
        dist.insert(j, f64::INFINITY);
    }
    if !dist.contains_key(&start) {
        return dist;
    }
    dist.insert(start, 0.0);
    let mut heap = BinaryHeap::from([HeapItem(0.0, start)]);
    while let Some(HeapItem(d, u)) = heap.pop() {
        if d > dist[&u] {
            continue;
        }
        for &(v, w) in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            let nd = d + w;
            if nd < dist[&v] {
                dist.insert(v, nd);
                heap.push(HeapItem(nd, v));
            }
        }
    }
    dist
}

pub fn result_map_i64(rows: &[Row]) -> BTreeMap<i64, i64> {
    rows.iter()
        .map(|r| (r[0].as_i64().unwrap(), r[1].as_i64().unwrap()))
        .collect()
}

pub fn result_map_f64(rows: &[Row]) -> BTreeMap<i64, f64> {
    rows.iter()
        .map(|r| (r[0].as_i64().unwrap(), r[1].as_f64().unwrap()))
        .collect()
}

/// Relative comparison with exact agreement on infinities.
pub fn close(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

pub fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

// ---- query corpus ----

pub struct CorpusData {
    pub t: Vec<Row>,
    pub stock: Vec<Row>,
    pub edges: Vec<(i64, i64)>,
    pub wedges: Vec<(i64, i64, f64)>,
}

pub fn corpus_data(seed: u64) -> CorpusData {
    let mut r = rng(seed);
    let t = random_t(&mut r, 3000);
    let stock = random_stock(&mut r, 5, 100);
    let edges = random_edges(&mut r, 300, 600);
    let wedges = random_edges(&mut r, 150, 400)
        .into_iter()
        .map(|(i, j)| (i, j, r.gen_range(0..100) as f64 / 4.0))
        .collect();
    CorpusData { t, stock, edges, wedges }
}

pub fn corpus_cluster(nseg: usize, d: &CorpusData) -> Cluster {
    let mut c = cluster(nseg);
    load_t(&mut c, d.t.clone());
    load_stock(&mut c, d.stock.clone());
    load_graph(&mut c, &d.edges);
    load_wgraph(&mut c, &d.wedges);
    c
}

/// Transducer and plain queries whose result multisets must not depend on
/// the segment count.
pub fn corpus(d: &CorpusData) -> Vec<(&'static str, String)> {
    let bfs_start = d.edges.first().map_or(0, |e| e.0);
    let sssp_start = d.wedges.first().map_or(0, |e| e.0);
    let identity = body(
        "PHIExec builtin identity",
        &[("id", "int32"), ("t", "text")],
        &[("id", "int32"), ("t", "text")],
        "",
    );
    vec![
        ("plain filter", PLAIN_FILTER_SQL.to_string()),
        (
            "plain arithmetic",
            "select id * 2 + 1 as v, txt from t where id >= 10 and id < 50000 or txt = 'ab'".into(),
        ),
        ("plain order by", "select txt, id from t where id % 7 = 0 order by id desc, txt".into()),
        (
            "window row_number",
            "select symbol, day, row_number() over (partition by symbol order by day) as rn from stock".into(),
        ),
        ("builtin filter", builtin_filter_sql()),
        (
            "filter over filter",
            format!("with f as ({}) select id from f where id > 50000", builtin_filter_sql()),
        ),
        (
            "identity transducer",
            format!(
                "select transducer_col_int4(1) as id, transducer_col_text(2) as txt, transducer($${identity}$$), id, txt from t"
            ),
        ),
        ("external child filter", filter_sql("PHIExec child", "// mode: modfilter\n")),
        ("runs", runs_sql()),
        (
            "gaining streak",
            format!("with r as ({}) select symbol, begin, end from r where direction = 1 and end - begin >= 3", runs_sql()),
        ),
        ("bfs", bfs_sql(bfs_start)),
        ("sssp", sssp_sql(sssp_start)),
    ]
}

// ---- transfer ----

fn type_fn(ty: &str) -> &'static str {
    match ty {
        "int32" => "int4",
        "int64" => "int8",
        "float64" => "float8",
        "text" => "text",
        "bool" => "bool",
        other => panic!("no transducer_col for {other}"),
    }
}

/// Sends every row of `table` (columns `cols`) to a receiver on `port`;
/// each instance outputs the number of rows it sent.
pub fn transfer_send_sql(table: &str, cols: &[(&str, &str)], port: u16, timeout_ms: u64) -> String {
    let b = body(
        &format!("PHIExec builtin transfer_send port={port} timeout_ms={timeout_ms}"),
        cols,
        &[("sent", "int64")],
        "",
    );
    let names: Vec<&str> = cols.iter().map(|c| c.0).collect();
    format!("select transducer_col_int8(1) as sent, transducer($${b}$$), {} from {table}", names.join(", "))
}

/// Receives rows of `cols` from `senders` connections on `port`.
pub fn transfer_recv_sql(cols: &[(&str, &str)], port: u16, senders: usize, timeout_ms: u64) -> String {
    let b = body(
        &format!("PHIExec builtin transfer_recv port={port} senders={senders} timeout_ms={timeout_ms}"),
        &[("unused", "int32")],
        cols,
        "",
    );
    let outs: Vec<String> = cols
        .iter()
        .enumerate()
        .map(|(i, (n, t))| format!("transducer_col_{}({}) as {n}", type_fn(t), i + 1))
        .collect();
    format!("select {}, transducer($${b}$$)", outs.join(", "))
}

pub struct Transfer {
    pub received: Vec<Row>,
    pub sent: i64,
    pub elapsed: std::time::Duration,
}

/// Copies `rows` from a `send_nseg` cluster into a `recv_nseg` cluster over
/// loopback TCP.
pub fn transfer(
    rows: Vec<Row>,
    cols: &[(&str, &str)],
    send_nseg: usize,
    recv_nseg: usize,
) -> Result<Transfer, String> {
    let spec: Vec<String> = cols.iter().map(|(n, t)| format!("{n}:{t}")).collect();
    let mut src = cluster(send_nseg);
    load(&mut src, "src", &spec.join(","), &format!("hash({})", cols[0].0), rows);
    let port = free_port();
    let recv_sql = transfer_recv_sql(cols, port, send_nseg, 30_000);
    let send_sql = transfer_send_sql("src", cols, port, 30_000);
    let start = std::time::Instant::now();
    let receiver = std::thread::spawn(move || cluster(recv_nseg).query(&recv_sql).map(|r| r.rows));
    let sent = src.query(&send_sql).map_err(|e| format!("send: {e}"))?;
    let received = receiver
        .join()
        .map_err(|_| "receiver panicked".to_string())?
        .map_err(|e| format!("recv: {e}"))?;
    let elapsed = start.elapsed();
    let sent = sent.rows.iter().map(|r| r[0].as_i64().unwrap()).sum();
    Ok(Transfer { received, sent, elapsed })
}
