mod common;

use common::*;
use tdx::builtins::probe_summary;
use tdx::datamodel::{Datum, Row};

fn stock_rows(list: &[(&str, i32, f64)]) -> Vec<Row> {
    list.iter()
        .map(|&(s, d, p)| Row::new(vec![Datum::Text(s.into()), Datum::Int32(d), Datum::Float64(p)]))
        .collect()
}

fn run(sym: &str, b: i32, bp: f64, e: i32, ep: f64, dir: i32) -> Row {
    Row::new(vec![
        Datum::Text(sym.into()),
        Datum::Int32(b),
        Datum::Float64(bp),
        Datum::Int32(e),
        Datum::Float64(ep),
        Datum::Int32(dir),
    ])
}

#[test]
fn runs_rise_then_fall() {
    let mut c = cluster(2);
    load_stock(&mut c, stock_rows(&[("A", 4, 2.0), ("A", 2, 2.0), ("A", 1, 1.0), ("A", 3, 3.0)]));
    let got = sorted(c.query(&runs_sql()).unwrap().rows);
    assert_eq!(got, vec![run("A", 1, 1.0, 3, 3.0, 1), run("A", 3, 3.0, 4, 2.0, -1)]);
}

#[test]
fn single_day_is_a_zero_length_run() {
    let mut c = cluster(3);
    load_stock(&mut c, stock_rows(&[("Z", 9, 5.0)]));
    let got = c.query(&runs_sql()).unwrap().rows;
    assert_eq!(got, vec![run("Z", 9, 5.0, 9, 5.0, 0)]);
}

#[test]
fn two_symbols_give_one_run_each_for_any_nseg() {
    for nseg in [1, 2, 3, 5] {
        let mut c = cluster(nseg);
        load_stock(&mut c, stock_rows(&[("A", 1, 1.0), ("A", 2, 2.0), ("B", 1, 1.0), ("B", 2, 2.0)]));
        let got = sorted(c.query(&runs_sql()).unwrap().rows);
        assert_eq!(got, vec![run("A", 1, 1.0, 2, 2.0, 1), run("B", 1, 1.0, 2, 2.0, 1)], "nseg={nseg}");
    }
}

#[test]
fn flat_steps_are_their_own_runs() {
    let mut c = cluster(2);
    load_stock(&mut c, stock_rows(&[("F", 1, 1.0), ("F", 2, 1.0), ("F", 3, 1.0), ("F", 4, 2.0)]));
    let got = sorted(c.query(&runs_sql()).unwrap().rows);
    assert_eq!(
        got,
        vec![run("F", 1, 1.0, 2, 1.0, 0), run("F", 2, 1.0, 3, 1.0, 0), run("F", 3, 1.0, 4, 2.0, 1)]
    );
}

#[test]
fn runs_match_oracle_and_tile_each_symbol() {
    let mut r = rng(11);
    for _ in 0..10 {
        let stock = random_stock(&mut r, 5, 120);
        let want = runs_oracle(&stock);
        for nseg in [1, 3] {
            let mut c = cluster(nseg);
            load_stock(&mut c, stock.clone());
            let got = sorted(c.query(&runs_sql()).unwrap().rows);
            assert_eq!(got, want, "nseg={nseg}");
            // Consecutive runs of a symbol share their boundary day.
            for w in got.windows(2) {
                if w[0][0] == w[1][0] {
                    assert_eq!(w[0][3], w[1][1]);
                    assert_eq!(w[0][4], w[1][2]);
                }
            }
        }
    }
}

#[test]
fn gaining_streak_query_over_runs() {
    let mut rows = Vec::new();
    for d in 0..15 {
        rows.push(("UP", d, d as f64));
        rows.push(("SHORT", d, (d % 4) as f64));
    }
    let mut c = cluster(3);
    load_stock(&mut c, stock_rows(&rows));
    let sql = format!(
        "with r as ({}) select symbol, begin, end from r where direction = 1 and end - begin > 10",
        runs_sql()
    );
    let got = c.query(&sql).unwrap().rows;
    assert_eq!(got, vec![Row::new(vec![Datum::Text("UP".into()), Datum::Int32(0), Datum::Int32(14)])]);
}

#[test]
fn probe_sees_each_symbol_on_one_segment_in_order() {
    let mut r = rng(5);
    let stock = random_stock(&mut r, 5, 200);
    let nsym = stock
        .iter()
        .map(|row| row[0].clone())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    for nseg in [2, 3] {
        let mut c = cluster(nseg);
        load_stock(&mut c, stock.clone());
        let rows = c.query(&probe_sql()).unwrap().rows;
        let summary = probe_summary(&rows);
        assert_eq!(summary.len(), nsym);
        for (sym, stretches) in summary {
            assert_eq!(stretches.len(), 1, "{sym:?} split over {stretches:?}");
            assert!(stretches[0].1, "{sym:?} out of day order");
        }
    }
}

#[test]
fn runs_reject_out_of_order_days() {
    // Feed the transducer straight from a table so nothing sorts the days.
    let mut c = cluster(1);
    let rows = vec![
        Row::new(vec![Datum::Int64(1), Datum::Text("A".into()), Datum::Int32(2), Datum::Float64(1.0)]),
        Row::new(vec![Datum::Int64(2), Datum::Text("A".into()), Datum::Int32(1), Datum::Float64(2.0)]),
    ];
    load(&mut c, "numbered", "rn:int64,symbol:text,day:int32,price:float64", "hash(symbol)", rows);
    let sql = runs_sql();
    let inner_from = sql.find("  from (select row_number()").unwrap();
    let inner_end = sql.find(") t)").unwrap() + ") t".len();
    let sql = format!("{}  from numbered t{}", &sql[..inner_from], &sql[inner_end..]);
    let e = c.query(&sql).unwrap_err().to_string();
    assert!(e.contains("day"), "{e}");
}

#[test]
fn bfs_path_and_components() {
    for nseg in [1, 2, 3] {
        let mut c = cluster(nseg);
        load_graph(&mut c, &[(1, 2), (2, 3)]);
        let got = result_map_i64(&c.query(&bfs_sql(1)).unwrap().rows);
        assert_eq!(got, [(1, 0), (2, 1), (3, 2)].into(), "nseg={nseg}");

        let mut c = cluster(nseg);
        load_graph(&mut c, &[(1, 2), (3, 4)]);
        let got = result_map_i64(&c.query(&bfs_sql(1)).unwrap().rows);
        assert_eq!(got, [(1, 0), (2, 1), (3, -1), (4, -1)].into(), "nseg={nseg}");
    }
}

#[test]
fn bfs_absent_start_leaves_everything_unreached() {
    let mut c = cluster(2);
    load_graph(&mut c, &[(1, 2), (2, 3)]);
    let got = result_map_i64(&c.query(&bfs_sql(99)).unwrap().rows);
    assert_eq!(got, [(1, -1), (2, -1), (3, -1)].into());
}

#[test]
fn bfs_matches_sequential_oracle() {
    let mut r = rng(21);
    for _ in 0..5 {
        let edges = random_edges(&mut r, 400, 900);
        let start = edges[0].0;
        let want = bfs_oracle(&edges, start);
        for nseg in [1, 2, 3] {
            let mut c = cluster(nseg);
            load_graph(&mut c, &edges);
            let got = result_map_i64(&c.query(&bfs_sql(start)).unwrap().rows);
            assert_eq!(got, want, "nseg={nseg}");
            // Adjacent reached nodes sit at most one layer apart.
            for &(u, v) in &edges {
                if got[&u] >= 0 && got[&v] >= 0 {
                    assert!((got[&u] - got[&v]).abs() <= 1);
                }
            }
        }
    }
}

#[test]
fn bfs_directed_flag() {
    let b = body(
        "PHIExec builtin bfs start=1 directed=true",
        &[("i", "int64"), ("j", "int64")],
        &[("node", "int64"), ("depth", "int64")],
        "",
    );
    let mut c = cluster(2);
    load_graph(&mut c, &[(1, 2), (3, 1)]);
    let sql = format!("select transducer_col_int8(1) as n, transducer_col_int8(2) as d, transducer($${b}$$), i, j from graph");
    let got = result_map_i64(&c.query(&sql).unwrap().rows);
    assert_eq!(got, [(1, 0), (2, 1), (3, -1)].into());
}

#[test]
fn sssp_triangle_and_unreachable() {
    for nseg in [1, 2, 3] {
        let mut c = cluster(nseg);
        load_wgraph(&mut c, &[(1, 2, 1.0), (2, 3, 1.0), (1, 3, 5.0), (4, 1, 2.0)]);
        let got = result_map_f64(&c.query(&sssp_sql(1)).unwrap().rows);
        assert_eq!(got, [(1, 0.0), (2, 1.0), (3, 2.0), (4, f64::INFINITY)].into(), "nseg={nseg}");
    }
}

#[test]
fn sssp_negative_cycle_is_an_error() {
    for nseg in [1, 2, 3] {
        let mut c = cluster(nseg);
        load_wgraph(&mut c, &[(1, 2, -1.0), (2, 1, -1.0)]);
        let e = c.query(&sssp_sql(1)).unwrap_err().to_string();
        assert!(e.contains("negative cycle detected"), "{e}");
    }
}

#[test]
fn sssp_negative_edges_without_cycle() {
    let mut c = cluster(2);
    load_wgraph(&mut c, &[(1, 2, 4.0), (1, 3, 1.0), (3, 2, -2.0)]);
    let got = result_map_f64(&c.query(&sssp_sql(1)).unwrap().rows);
    assert_eq!(got, [(1, 0.0), (2, -1.0), (3, 1.0)].into());
}

#[test]
fn sssp_matches_dijkstra() {
    let mut r = rng(33);
    for _ in 0..5 {
        let pairs = random_edges(&mut r, 200, 800);
        let edges: Vec<(i64, i64, f64)> = pairs
            .iter()
            .map(|&(i, j)| (i, j, (rand::Rng::gen_range(&mut r, 0..1000) as f64) / 7.0))
            .collect();
        let start = edges[0].0;
        let want = dijkstra_oracle(&edges, start);
        for nseg in [1, 3] {
            let mut c = cluster(nseg);
            load_wgraph(&mut c, &edges);
            let got = result_map_f64(&c.query(&sssp_sql(start)).unwrap().rows);
            assert_eq!(got.len(), want.len());
            for (k, v) in &want {
                assert!(close(got[k], *v), "node {k}: {} vs {v}", got[k]);
            }
            for &(u, v, w) in &edges {
                if got[&u].is_finite() {
                    assert!(got[&v] <= got[&u] + w + 1e-9);
                }
            }
        }
    }
}

#[test]
fn graph_builtins_reject_bad_declarations() {
    let mut c = cluster(2);
    load_graph(&mut c, &[(1, 2)]);
    let b = body("PHIExec builtin bfs", &[("i", "int64"), ("j", "int64")], &[("n", "int64"), ("d", "int64")], "");
    let sql = format!("select transducer_col_int8(1) as n, transducer_col_int8(2) as d, transducer($${b}$$), i, j from graph");
    assert!(c.query(&sql).unwrap_err().to_string().contains("start"));
    let b = body("PHIExec builtin bfs start=1 colour=red", &[("i", "int64"), ("j", "int64")], &[("n", "int64"), ("d", "int64")], "");
    let sql = format!("select transducer_col_int8(1) as n, transducer_col_int8(2) as d, transducer($${b}$$), i, j from graph");
    assert!(c.query(&sql).unwrap_err().to_string().contains("colour"));
}
