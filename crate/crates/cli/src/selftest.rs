//! Quick end-to-end checks of the engine and the graph builtins, plus the
//! BFS depth histogram over a user-supplied edge list.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::thread;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use tdx::datamodel::{Datum, DistributionPolicy, Row, Schema};
use tdx::engine::Cluster;

use crate::Settings;

fn body(header: &str, inputs: &str, outputs: &str) -> String {
    let decl = |cols: &str| {
        cols.split(',')
            .map(|c| format!("// {}\n", c.replace(':', " ")))
            .collect::<String>()
    };
    format!(
        "{header}\n// BEGIN INPUT\n{}// END INPUT\n// BEGIN OUTPUT\n{}// END OUTPUT\n",
        decl(inputs),
        decl(outputs)
    )
}

fn filter_sql() -> String {
    let b = body("PHIExec builtin mod_filter", "id:int32,t:text", "id:int32,t:text");
    format!(
        "select transducer_col_int4(1) as id, transducer_col_text(2) as txt, transducer($${b}$$), t.id, t.txt from t"
    )
}

fn bfs_sql(start: i64) -> String {
    let b = body(
        &format!("PHIExec builtin bfs start={start}"),
        "i:int64,j:int64",
        "node:int64,depth:int64",
    );
    format!("select transducer_col_int8(1) as node, transducer_col_int8(2) as depth, transducer($${b}$$), i, j from graph")
}

fn sssp_sql(start: i64) -> String {
    let b = body(
        &format!("PHIExec builtin sssp start={start}"),
        "i:int64,j:int64,w:float64",
        "node:int64,dist:float64",
    );
    format!("select transducer_col_int8(1) as node, transducer_col_float8(2) as dist, transducer($${b}$$), i, j, w from wgraph")
}

fn load(c: &mut Cluster, name: &str, spec: &str, policy: &str, rows: Vec<Row>) -> Result<()> {
    let schema = Schema::parse_spec(spec)?;
    let policy = DistributionPolicy::parse(policy, &schema)?;
    c.load_table(name, schema, policy, rows)?;
    Ok(())
}

fn pairs(rows: &[Row]) -> BTreeMap<i64, String> {
    rows.iter()
        .map(|r| (r[0].as_i64().unwrap_or(i64::MIN), r[1].to_string()))
        .collect()
}

fn edges(list: &[(i64, i64)]) -> Vec<Row> {
    list.iter()
        .map(|&(i, j)| Row::new(vec![Datum::Int64(i), Datum::Int64(j)]))
        .collect()
}

fn wedges(list: &[(i64, i64, f64)]) -> Vec<Row> {
    list.iter()
        .map(|&(i, j, w)| Row::new(vec![Datum::Int64(i), Datum::Int64(j), Datum::Float64(w)]))
        .collect()
}

fn check_filter(s: &Settings) -> Result<()> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(1);
    let rows: Vec<Row> = (0..2000)
        .map(|i| Row::new(vec![Datum::Int32(rng.gen_range(-500..5000)), Datum::Text(format!("r{i}"))]))
        .collect();
    for nseg in [1, 2, 3] {
        let mut c = s.cluster_n(nseg);
        load(&mut c, "t", "id:int32,txt:text", "hash(id)", rows.clone())?;
        let got = c.query(&filter_sql())?.sorted_rows();
        let want = c.query("select id, txt from t where id % 3 = 1")?.sorted_rows();
        ensure!(got == want, "nseg={nseg}: {} rows vs {} rows from the plain filter", got.len(), want.len());
    }
    Ok(())
}

fn check_explain(s: &Settings) -> Result<()> {
    let mut c = s.cluster_n(2);
    load(&mut c, "t", "id:int32,txt:text", "hash(id)", Vec::new())?;
    let plan = c.explain(&filter_sql())?;
    let mut at = 0;
    for needle in ["Gather Motion 2:1", "-> Transducer", "-> Seq Scan"] {
        match plan[at..].find(needle) {
            Some(i) => at += i + needle.len(),
            None => bail!("'{needle}' missing or out of order in\n{plan}"),
        }
    }
    Ok(())
}

fn check_bfs(s: &Settings) -> Result<()> {
    let mut c = s.cluster_n(s.nseg);
    load(&mut c, "graph", "i:int64,j:int64", "hash(i)", edges(&[(1, 2), (3, 4)]))?;
    let got = pairs(&c.query(&bfs_sql(1))?.rows);
    let want: BTreeMap<i64, String> = [(1, "0"), (2, "1"), (3, "-1"), (4, "-1")]
        .into_iter()
        .map(|(k, v)| (k, v.to_string()))
        .collect();
    ensure!(got == want, "depths {got:?}");
    Ok(())
}

fn check_sssp(s: &Settings) -> Result<()> {
    let mut c = s.cluster_n(s.nseg);
    load(
        &mut c,
        "wgraph",
        "i:int64,j:int64,w:float64",
        "hash(j)",
        wedges(&[(1, 2, 1.0), (2, 3, 1.0), (1, 3, 5.0), (4, 1, 1.0)]),
    )?;
    let got = pairs(&c.query(&sssp_sql(1))?.rows);
    let want: BTreeMap<i64, String> = [(1, "0"), (2, "1"), (3, "2"), (4, "inf")]
        .into_iter()
        .map(|(k, v)| (k, v.to_string()))
        .collect();
    ensure!(got == want, "distances {got:?}");

    let mut c = s.cluster_n(s.nseg);
    load(&mut c, "wgraph", "i:int64,j:int64,w:float64", "hash(j)", wedges(&[(1, 2, -1.0), (2, 1, -1.0)]))?;
    match c.query(&sssp_sql(1)) {
        Err(e) if e.to_string().contains("negative cycle detected") => Ok(()),
        Err(e) => bail!("unexpected error: {e}"),
        Ok(_) => bail!("negative cycle not reported"),
    }
}

fn check_transfer(s: &Settings) -> Result<()> {
    let port = std::net::TcpListener::bind("127.0.0.1:0")?.local_addr()?.port();
    let rows: Vec<Row> = (0..5000)
        .map(|i| Row::new(vec![Datum::Int64(i), Datum::Text(format!("v{i}"))]))
        .collect();
    let schema = Schema::parse_spec("k:int64,v:text")?;
    let receiver = s.cluster_n(2);
    let recv_sql = crate::recv_sql(&schema, "127.0.0.1", port, 2, 10_000);
    let handle = thread::spawn(move || receiver.query(&recv_sql));
    let mut sender = s.cluster_n(2);
    load(&mut sender, "src", "k:int64,v:text", "hash(k)", rows.clone())?;
    let b = body(
        &format!("PHIExec builtin transfer_send port={port}"),
        "k:int64,v:text",
        "rows:int64",
    );
    let sent = sender.query(&format!("select transducer_col_int8(1) as n, transducer($${b}$$), k, v from src"))?;
    let got = handle.join().map_err(|_| anyhow::anyhow!("receiver panicked"))??;
    let total: i64 = sent.rows.iter().filter_map(|r| r[0].as_i64()).sum();
    ensure!(total == rows.len() as i64, "sender reported {total} rows");
    let mut want = rows;
    want.sort();
    ensure!(got.sorted_rows() == want, "received {} rows", got.rows.len());
    Ok(())
}

type Check = fn(&Settings) -> Result<()>;

pub fn run_all(s: &Settings, out: &mut impl Write) -> Result<u8> {
    let checks: [(&str, Check); 5] = [
        ("transducer filter equals plain filter", check_filter),
        ("explain shape", check_explain),
        ("bfs two components", check_bfs),
        ("sssp triangle and negative cycle", check_sssp),
        ("transfer loopback", check_transfer),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let t = Instant::now();
        match check(s) {
            Ok(()) => writeln!(out, "PASS {name} ({:.2}s)", t.elapsed().as_secs_f64())?,
            Err(e) => {
                failed += 1;
                writeln!(out, "FAIL {name}: {e:#}")?;
            }
        }
    }
    writeln!(out, "{} passed, {failed} failed", checks.len() - failed)?;
    Ok(if failed == 0 { 0 } else { 1 })
}

/// Loads a whitespace-separated edge list (lines starting with `#` or `%`
/// skipped), runs BFS and prints `depth,nodes` lines.
pub fn dblp(base: &Cluster, path: &Path, start: Option<i64>, out: &mut impl Write) -> Result<()> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut list = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<i64>);
        match (it.next(), it.next()) {
            (Some(Ok(i)), Some(Ok(j))) => list.push((i, j)),
            _ => bail!("{}:{}: expected two integer node ids", path.display(), n + 1),
        }
    }
    let Some(start) = start.or(list.first().map(|e| e.0)) else {
        bail!("{} has no edges", path.display());
    };
    let mut c = base.clone();
    load(&mut c, "graph", "i:int64,j:int64", "hash(i)", edges(&list))?;
    let t = Instant::now();
    let result = c.query(&bfs_sql(start))?;
    let elapsed = t.elapsed();
    let mut hist: BTreeMap<i64, usize> = BTreeMap::new();
    for r in &result.rows {
        *hist.entry(r[1].as_i64().unwrap_or(-1)).or_default() += 1;
    }
    writeln!(out, "depth,nodes")?;
    for (d, n) in hist {
        writeln!(out, "{d},{n}")?;
    }
    eprintln!(
        "{} edges, {} nodes, start {start}, bfs {:.2}s on {} segments",
        list.len(),
        result.rows.len(),
        elapsed.as_secs_f64(),
        c.nseg()
    );
    Ok(())
}
