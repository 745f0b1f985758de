//! `tdx`: load CSV tables into an in-process cluster, run or explain SQL,
//! receive a transfer, and run the self-test suite.
//!
//! Exit codes: 0 success, 1 user error (SQL, files, data, transducer
//! failures), 2 internal error.

mod config;
mod selftest;

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};
use tdx::datamodel::{DistributionPolicy, Schema};
use tdx::engine::{Cluster, ExecConfig, StatementOutput};

use config::Config;

#[derive(Parser, Debug)]
#[command(name = "tdx", version, about = "Shared-nothing SQL engine with transducer operators")]
struct Cli {
    /// Number of segments.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    nseg: Option<u64>,
    /// Rows per row group.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    batch_size: Option<u64>,
    /// key = value settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Tables {
    /// Table to load before the statement runs. Repeatable.
    #[arg(
        long = "table",
        num_args = 4,
        value_names = ["NAME", "SCHEMA", "POLICY", "CSV"],
        action = ArgAction::Append
    )]
    table: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a CSV file and report how its rows spread over the segments.
    Load {
        name: String,
        /// Column list such as `id:int32,txt:text`.
        schema: String,
        /// `hash(col, ...)`, `replicated` or `singleton(n)`.
        policy: String,
        csv: PathBuf,
    },
    /// Run a statement and print the rows as CSV. `-` reads SQL from stdin.
    Query {
        #[command(flatten)]
        tables: Tables,
        sql: String,
    },
    /// Print the plan of a query.
    Explain {
        #[command(flatten)]
        tables: Tables,
        sql: String,
    },
    /// Accept a transfer and store the received rows.
    Recv {
        /// Listening port; defaults to `transfer_port` from the config.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Schema of the incoming rows.
        #[arg(long)]
        schema: String,
        /// Number of sender connections; defaults to the local segment count.
        #[arg(long)]
        senders: Option<usize>,
        #[arg(long, default_value_t = 30_000)]
        timeout_ms: u64,
        /// Name of the table the rows are stored in.
        #[arg(long, default_value = "received")]
        table: String,
        /// Also write the received rows to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in checks, or the BFS depth histogram over a
    /// whitespace-separated edge list with `--dblp`.
    Selftest {
        #[arg(long)]
        dblp: Option<PathBuf>,
        /// BFS start node for `--dblp`; defaults to the first edge's source.
        #[arg(long)]
        start: Option<i64>,
    },
}

struct Settings {
    config: Config,
    nseg: usize,
    batch_size: Option<usize>,
}

impl Settings {
    fn new(cli: &Cli) -> Result<Settings> {
        let config = match &cli.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let nseg = cli.nseg.map(|n| n as usize).or(config.nseg).unwrap_or(2);
        let batch_size = cli.batch_size.map(|n| n as usize).or(config.batch_size);
        Ok(Settings {
            config,
            nseg,
            batch_size,
        })
    }

    fn cluster(&self) -> Cluster {
        self.cluster_n(self.nseg)
    }

    fn cluster_n(&self, nseg: usize) -> Cluster {
        let mut ec = ExecConfig::new(nseg);
        if let Some(b) = self.batch_size {
            ec.batch_size = b;
        }
        if let Some(t) = self.config.bsp_timeout {
            ec.bsp_timeout = t;
        }
        ec.external.extend(self.config.external.clone());
        Cluster::with_config(ec)
    }
}

fn load_table(c: &mut Cluster, name: &str, schema: &str, policy: &str, csv: &PathBuf) -> Result<Vec<usize>> {
    let schema = Schema::parse_spec(schema)?;
    let policy = DistributionPolicy::parse(policy, &schema)?;
    let t = c
        .load_csv_path(name, schema, policy, csv)
        .with_context(|| format!("loading {}", csv.display()))?;
    Ok(t.segment_counts())
}

fn cluster_with(settings: &Settings, tables: &Tables) -> Result<Cluster> {
    let mut c = settings.cluster();
    for t in tables.table.chunks(4) {
        load_table(&mut c, &t[0], &t[1], &t[2], &PathBuf::from(&t[3]))?;
    }
    Ok(c)
}

fn read_sql(sql: String) -> Result<String> {
    if sql != "-" {
        return Ok(sql);
    }
    let mut s = String::new();
    std::io::stdin().read_to_string(&mut s).context("reading SQL from stdin")?;
    Ok(s)
}

/// The receive query: a FROM-less transfer_recv transducer whose output
/// columns mirror `schema`.
fn recv_sql(schema: &Schema, host: &str, port: u16, senders: usize, timeout_ms: u64) -> String {
    let mut cols = String::new();
    let mut decls = String::new();
    for (i, c) in schema.columns().iter().enumerate() {
        let ty = c.data_type.name();
        cols.push_str(&format!("transducer_col_{ty}({}) as \"{}\", ", i + 1, c.name));
        decls.push_str(&format!("// {} {ty}\n", c.name));
    }
    format!(
        "select {cols}transducer($$PHIExec builtin transfer_recv host={host} port={port} senders={senders} timeout_ms={timeout_ms}
// BEGIN INPUT
// unused int32
// END INPUT
// BEGIN OUTPUT
{decls}// END OUTPUT
$$)"
    )
}

fn run(cli: Cli) -> Result<u8> {
    let settings = Settings::new(&cli)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Load {
            name,
            schema,
            policy,
            csv,
        } => {
            let mut c = settings.cluster();
            let counts = load_table(&mut c, &name, &schema, &policy, &csv)?;
            writeln!(out, "loaded {} rows into {name}", counts.iter().sum::<usize>())?;
            for (s, n) in counts.iter().enumerate() {
                writeln!(out, "segment {s}: {n}")?;
            }
        }
        Command::Query { tables, sql } => {
            let c = cluster_with(&settings, &tables)?;
            match c.run(&read_sql(sql)?)? {
                StatementOutput::Rows(r) => r.write_csv(&mut out)?,
                StatementOutput::Explain(text) => writeln!(out, "{}", text.trim_end())?,
            }
        }
        Command::Explain { tables, sql } => {
            let c = cluster_with(&settings, &tables)?;
            writeln!(out, "{}", c.explain(&read_sql(sql)?)?.trim_end())?;
        }
        Command::Recv {
            port,
            host,
            schema,
            senders,
            timeout_ms,
            table,
            out: csv_out,
        } => {
            let Some(port) = port.or(settings.config.transfer_port) else {
                bail!("recv needs --port or transfer_port in the config");
            };
            let schema = Schema::parse_spec(&schema)?;
            let senders = senders.unwrap_or(settings.nseg);
            let mut c = settings.cluster();
            let result = c.query(&recv_sql(&schema, &host, port, senders, timeout_ms))?;
            if let Some(path) = csv_out {
                let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                result.write_csv(std::io::BufWriter::new(f))?;
            }
            let policy = DistributionPolicy::HashColumns(vec![0]);
            let t = c.load_table(&table, schema, policy, result.rows)?;
            writeln!(out, "received {} rows into {table}", t.row_count())?;
            for (s, n) in t.segment_counts().iter().enumerate() {
                writeln!(out, "segment {s}: {n}")?;
            }
        }
        Command::Selftest { dblp, start } => {
            return match dblp {
                Some(path) => selftest::dblp(&settings.cluster(), &path, start, &mut out).map(|_| 0),
                None => selftest::run_all(&settings, &mut out),
            };
        }
    }
    out.flush()?;
    Ok(0)
}

/// Engine errors are user errors except the secondary ones, which should
/// never surface on their own.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<tdx::Error>() {
        Some(err) if err.is_secondary() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(2)
        }
    }
}
