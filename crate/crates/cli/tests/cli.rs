use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

const TDX: &str = env!("CARGO_BIN_EXE_tdx");

const FILTER_QUERY: &str = "select transducer_col_int4(1) as id,
       transducer_col_text(2) as txt,
       transducer($$PHIExec builtin mod_filter
// BEGIN INPUT
// id int32
// t text
// END INPUT
// BEGIN OUTPUT
// id int32
// t text
// END OUTPUT
$$),
       t.id, t.txt
from t";

fn tdx(args: &[&str]) -> Output {
    Command::new(TDX).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn six_rows(dir: &Path) -> String {
    let body: String = ["a", "b", "c", "d", "e", "f"]
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{},{t}\n", i + 1))
        .collect();
    write(dir, "t.csv", &format!("id,txt\n{body}"))
        .to_str()
        .unwrap()
        .to_string()
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn load_reports_segment_counts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = six_rows(dir.path());
    let o = tdx(&["--nseg", "2", "load", "t", "id:int32,txt:text", "hash(id)", &csv]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("loaded 6 rows into t\n"), "{out}");
    let counts: usize = out
        .lines()
        .filter_map(|l| l.strip_prefix("segment "))
        .map(|l| l.split(": ").nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(counts, 6);
    assert_eq!(out.lines().filter(|l| l.starts_with("segment ")).count(), 2);
}

#[test]
fn load_errors_are_user_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let o = tdx(&["load", "t", "id:int32", "hash(id)", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.csv"), "{}", stderr(&o));

    let bad = write(dir.path(), "bad.csv", "id,txt\n1,a\n2,b\nthree,c\n");
    let o = tdx(&["load", "t", "id:int32,txt:text", "hash(id)", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn filter_query_keeps_one_and_four() {
    let dir = tempfile::tempdir().unwrap();
    let csv = six_rows(dir.path());
    let sql = format!("{FILTER_QUERY} order by id");
    let o = tdx(&["query", "--table", "t", "id:int32,txt:text", "hash(id)", &csv, &sql]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "id,txt\n1,a\n4,d\n");
}

#[test]
fn explain_prints_plan_tree() {
    let dir = tempfile::tempdir().unwrap();
    let csv = six_rows(dir.path());
    let o = tdx(&["--nseg", "2", "explain", "--table", "t", "id:int32,txt:text", "hash(id)", &csv, FILTER_QUERY]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("Gather Motion 2:1 (slice1; segments: 2) (cost="), "{out}");
    assert!(lines.iter().any(|l| l.trim_start().starts_with("-> Transducer (cost=")), "{out}");
    assert!(lines.last().unwrap().trim_start().starts_with("-> Seq Scan on t (cost="), "{out}");

    let via_query = tdx(&[
        "--nseg", "2", "query", "--table", "t", "id:int32,txt:text", "hash(id)", &csv,
        &format!("explain {FILTER_QUERY}"),
    ]);
    assert_eq!(stdout(&via_query), out);
}

#[test]
fn empty_result_prints_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let csv = six_rows(dir.path());
    let o = tdx(&["query", "--table", "t", "id:int32,txt:text", "hash(id)", &csv, "select id, txt from t where id > 100"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "id,txt\n");
}

#[test]
fn sql_errors_carry_position() {
    let o = tdx(&["query", "select id\nfrom t where"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    let o = tdx(&["query", "select id from nosuch"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nosuch"), "{}", stderr(&o));
}

#[test]
fn runtime_errors_name_the_operator() {
    let dir = tempfile::tempdir().unwrap();
    let csv = six_rows(dir.path());
    let o = tdx(&["query", "--table", "t", "id:int32,txt:text", "hash(id)", &csv, "select 1.0 / (id - id) from t"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).to_lowercase().contains("division by zero"), "{}", stderr(&o));
}

#[test]
fn sorted_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..500).map(|i| format!("{},{}\n", (i * 7919) % 1000, i)).collect();
    let csv = write(dir.path(), "t.csv", &format!("id,txt\n{rows}"));
    let run = || {
        stdout(&tdx(&[
            "--nseg", "3", "query", "--table", "t", "id:int32,txt:text", "hash(id)", csv.to_str().unwrap(),
            "select id, txt from t where id % 2 = 0 order by id, txt",
        ]))
    };
    let first = run();
    assert_eq!(first.lines().count(), 251);
    for _ in 0..3 {
        assert_eq!(run(), first);
    }
}

#[test]
fn config_file_sets_segments() {
    let dir = tempfile::tempdir().unwrap();
    let csv = six_rows(dir.path());
    let cfg = write(dir.path(), "tdx.conf", "# test\nnseg = 3\nbatch_size = 2\n");
    let o = tdx(&["--config", cfg.to_str().unwrap(), "load", "t", "id:int32,txt:text", "hash(id)", &csv]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("segment ")).count(), 3);
    // The command line wins over the file.
    let o = tdx(&["--config", cfg.to_str().unwrap(), "--nseg", "1", "load", "t", "id:int32,txt:text", "hash(id)", &csv]);
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("segment ")).count(), 1);

    let bad = write(dir.path(), "bad.conf", "nseg = many\n");
    let o = tdx(&["--config", bad.to_str().unwrap(), "load", "t", "id:int32", "hash(id)", &csv]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(tdx(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tdx(&["--nseg", "0", "selftest"]).status.code(), Some(1));
    assert_eq!(tdx(&["--help"]).status.code(), Some(0));
}

#[test]
fn recv_pairs_with_transfer_send() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..2000).map(|i| format!("{i},row{i}\n")).collect();
    let csv = write(dir.path(), "src.csv", &format!("k,v\n{rows}"));
    let out_csv = dir.path().join("got.csv");
    let port = free_port().to_string();
    let recv = {
        let port = port.clone();
        let out_csv = out_csv.clone();
        thread::spawn(move || {
            tdx(&[
                "--nseg", "2", "recv", "--port", &port, "--schema", "k:int64,v:text", "--senders", "3",
                "--table", "copy", "--out", out_csv.to_str().unwrap(),
            ])
        })
    };
    let send_sql = format!(
        "select transducer_col_int8(1) as sent, transducer($$PHIExec builtin transfer_send port={port}
// BEGIN INPUT
// k int64
// v text
// END INPUT
// BEGIN OUTPUT
// sent int64
// END OUTPUT
$$), k, v from src"
    );
    let sent = tdx(&["--nseg", "3", "query", "--table", "src", "k:int64,v:text", "hash(k)", csv.to_str().unwrap(), &send_sql]);
    assert!(sent.status.success(), "{}", stderr(&sent));
    let total: i64 = stdout(&sent).lines().skip(1).map(|l| l.parse::<i64>().unwrap()).sum();
    assert_eq!(total, 2000);

    let got = recv.join().unwrap();
    assert!(got.status.success(), "{}", stderr(&got));
    assert!(stdout(&got).starts_with("received 2000 rows into copy\n"), "{}", stdout(&got));
    let mut received: Vec<String> = std::fs::read_to_string(&out_csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(String::from)
        .collect();
    received.sort();
    let mut want: Vec<String> = (0..2000).map(|i| format!("{i},row{i}")).collect();
    want.sort();
    assert_eq!(received, want);
}

#[test]
fn recv_times_out_without_sender() {
    let port = free_port().to_string();
    let o = tdx(&["recv", "--port", &port, "--schema", "k:int64", "--timeout-ms", "200"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no sender connected"), "{}", stderr(&o));
}

#[test]
fn recv_reports_port_in_use() {
    let busy = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port().to_string();
    let o = tdx(&["recv", "--port", &port, "--schema", "k:int64", "--timeout-ms", "200"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cannot listen"), "{}", stderr(&o));
    drop(busy);
}

#[test]
fn selftest_passes() {
    let o = tdx(&["selftest"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("5 passed, 0 failed"));
}

#[test]
fn dblp_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let edges = write(dir.path(), "g.txt", "# path plus an island\n1 2\n2 3\n3 4\n10 11\n");
    let o = tdx(&["--nseg", "3", "selftest", "--dblp", edges.to_str().unwrap(), "--start", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "depth,nodes\n-1,2\n0,1\n1,1\n2,1\n3,1\n");
}
