//! In-memory catalog of hash-distributed tables plus execution settings.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use super::plan::PlanNode;
use crate::bsp::DEFAULT_SYNC_TIMEOUT;
use crate::datamodel::{hash_segment, Datum, DistributionPolicy, Row, Schema, SchemaRef};
use crate::error::{Error, Result};
use crate::transducer::{ExecMode, Registry, TransducerSpec};

/// Execution settings shared by every query on a cluster.
#[derive(Clone)]
pub struct ExecConfig {
    pub nseg: usize,
    pub batch_size: usize,
    /// Row groups in flight per motion queue and per transducer output.
    pub channel_capacity: usize,
    pub bsp_timeout: Duration,
    /// Command templates for external transducers, keyed by language tag.
    pub external: BTreeMap<String, Vec<String>>,
    pub registry: Registry,
}

impl ExecConfig {
    pub fn new(nseg: usize) -> Self {
        ExecConfig {
            nseg,
            batch_size: super::DEFAULT_BATCH_SIZE,
            channel_capacity: super::DEFAULT_CHANNEL_CAPACITY,
            bsp_timeout: DEFAULT_SYNC_TIMEOUT,
            external: BTreeMap::new(),
            registry: crate::builtins::default_registry(),
        }
    }

    pub fn external_template(&self, lang: &str) -> Result<&[String]> {
        self.external
            .get(&lang.to_ascii_lowercase())
            .map(Vec::as_slice)
            .ok_or_else(|| {
                Error::Plan(format!(
                    "no external command configured for 'PHIExec {lang}'"
                ))
            })
    }
}

impl fmt::Debug for ExecConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExecConfig")
            .field("nseg", &self.nseg)
            .field("batch_size", &self.batch_size)
            .field("channel_capacity", &self.channel_capacity)
            .field("bsp_timeout", &self.bsp_timeout)
            .field("external", &self.external)
            .field("registry", &self.registry)
            .finish()
    }
}

/// A stored table: one row vector per segment.
#[derive(Debug, Clone)]
pub struct Table {
    name: String,
    schema: SchemaRef,
    policy: DistributionPolicy,
    segments: Vec<Arc<Vec<Row>>>,
}

impl Table {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &SchemaRef {
        &self.schema
    }

    pub fn policy(&self) -> &DistributionPolicy {
        &self.policy
    }

    pub fn segments(&self) -> &[Arc<Vec<Row>>] {
        &self.segments
    }

    pub fn segment_counts(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.len()).collect()
    }

    /// Logical row count; a replicated table counts its rows once.
    pub fn row_count(&self) -> usize {
        match self.policy {
            DistributionPolicy::Replicated => self.segments[0].len(),
            _ => self.segments.iter().map(|s| s.len()).sum(),
        }
    }
}

/// What the planner needs to know about a table.
#[derive(Debug, Clone)]
pub struct TableInfo {
    pub schema: SchemaRef,
    pub rows: usize,
    pub policy: DistributionPolicy,
}

pub trait Catalog {
    fn nseg(&self) -> usize;

    fn table_info(&self, name: &str) -> Result<TableInfo>;

    /// Rejects transducers that cannot run here (unknown builtin, missing
    /// command template).
    fn check_transducer(&self, _spec: &TransducerSpec) -> Result<()> {
        Ok(())
    }
}

/// Rows returned to the master.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub schema: SchemaRef,
    pub rows: Vec<Row>,
}

impl QueryResult {
    /// Rows in canonical order, for multiset comparison.
    pub fn sorted_rows(&self) -> Vec<Row> {
        let mut rows = self.rows.clone();
        rows.sort();
        rows
    }

    /// Writes the result as CSV with a header line. Nulls are empty fields.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(self.schema.columns().iter().map(|c| c.name.as_str()))
            .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.cells().iter().map(Datum::to_string))
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of a SQL statement: rows, or plan text for `explain`.
#[derive(Debug, Clone, PartialEq)]
pub enum StatementOutput {
    Rows(QueryResult),
    Explain(String),
}

/// The master's view of the whole cluster: configuration and catalog.
#[derive(Debug, Clone)]
pub struct Cluster {
    config: ExecConfig,
    tables: BTreeMap<String, Table>,
}

impl Cluster {
    pub fn new(nseg: usize) -> Self {
        Self::with_config(ExecConfig::new(nseg))
    }

    pub fn with_config(config: ExecConfig) -> Self {
        assert!(config.nseg >= 1, "a cluster needs at least one segment");
        assert!(config.batch_size >= 1, "batch size must be at least 1");
        Cluster {
            config,
            tables: BTreeMap::new(),
        }
    }

    pub fn nseg(&self) -> usize {
        self.config.nseg
    }

    pub fn config(&self) -> &ExecConfig {
        &self.config
    }

    /// Settings other than `nseg` may change between queries.
    pub fn config_mut(&mut self) -> &mut ExecConfig {
        &mut self.config
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables
            .get(&name.to_ascii_lowercase())
            .ok_or_else(|| Error::Catalog(format!("table '{name}' does not exist")))
    }

    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn drop_table(&mut self, name: &str) -> Result<Table> {
        self.tables
            .remove(&name.to_ascii_lowercase())
            .ok_or_else(|| Error::Catalog(format!("table '{name}' does not exist")))
    }

    /// Creates `name` and spreads `rows` over the segments by `policy`.
    pub fn load_table(
        &mut self,
        name: &str,
        schema: impl Into<SchemaRef>,
        policy: DistributionPolicy,
        rows: impl IntoIterator<Item = Row>,
    ) -> Result<&Table> {
        let key = name.to_ascii_lowercase();
        if self.tables.contains_key(&key) {
            return Err(Error::Catalog(format!("table '{name}' already exists")));
        }
        let schema = schema.into();
        let nseg = self.nseg();
        policy.validate(&schema, nseg)?;
        let mut segments: Vec<Vec<Row>> = vec![Vec::new(); nseg];
        for (i, r) in rows.into_iter().enumerate() {
            schema
                .validate(r.cells())
                .map_err(|e| Error::Schema(format!("row {}: {e}", i + 1)))?;
            match policy {
                DistributionPolicy::Replicated => {
                    for seg in &mut segments {
                        seg.push(r.clone());
                    }
                }
                DistributionPolicy::SingletonSegment(s) => segments[s].push(r),
                DistributionPolicy::HashColumns(_) => {
                    let s = hash_segment(&r, &policy, nseg)?;
                    segments[s].push(r);
                }
            }
        }
        let table = Table {
            name: name.to_string(),
            schema,
            policy,
            segments: segments.into_iter().map(Arc::new).collect(),
        };
        Ok(self.tables.entry(key).or_insert(table))
    }

    /// Loads CSV with a header line naming the schema's columns in order.
    /// Empty fields are null, except in text columns where they are "".
    pub fn load_csv(
        &mut self,
        name: &str,
        schema: impl Into<SchemaRef>,
        policy: DistributionPolicy,
        input: impl Read,
    ) -> Result<&Table> {
        let schema = schema.into();
        let rows = read_csv(&schema, input)?;
        self.load_table(name, schema, policy, rows)
    }

    pub fn load_csv_path(
        &mut self,
        name: &str,
        schema: impl Into<SchemaRef>,
        policy: DistributionPolicy,
        path: impl AsRef<Path>,
    ) -> Result<&Table> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Csv(format!("cannot open {}: {e}", path.display())))?;
        self.load_csv(name, schema, policy, std::io::BufReader::new(file))
    }

    pub fn execute(&self, plan: &PlanNode) -> Result<QueryResult> {
        super::exec::execute(plan, self)
    }

    pub fn plan(&self, sql: &str) -> Result<PlanNode> {
        let query = crate::sqlfront::parse(sql)?;
        crate::sqlfront::plan(&query, self)
    }

    /// Parses, plans and runs a query.
    pub fn query(&self, sql: &str) -> Result<QueryResult> {
        self.execute(&self.plan(sql)?)
    }

    pub fn explain(&self, sql: &str) -> Result<String> {
        Ok(super::explain(&self.plan(sql)?))
    }

    /// Runs a statement: a query, or `explain <query>`.
    pub fn run(&self, sql: &str) -> Result<StatementOutput> {
        let stmt = crate::sqlfront::parse_statement(sql)?;
        let plan = crate::sqlfront::plan(&stmt.query, self)?;
        if stmt.explain {
            Ok(StatementOutput::Explain(super::explain(&plan)))
        } else {
            self.execute(&plan).map(StatementOutput::Rows)
        }
    }
}

impl Catalog for Cluster {
    fn nseg(&self) -> usize {
        self.config.nseg
    }

    fn table_info(&self, name: &str) -> Result<TableInfo> {
        let t = self.table(name)?;
        Ok(TableInfo {
            schema: Arc::clone(&t.schema),
            rows: t.row_count(),
            policy: t.policy.clone(),
        })
    }

    fn check_transducer(&self, spec: &TransducerSpec) -> Result<()> {
        match &spec.mode {
            ExecMode::Builtin { name, params } => self.config.registry.get(name)?.check(spec, params),
            ExecMode::External { lang } => self.config.external_template(lang).map(|_| ()),
        }
    }
}

/// Parses CSV text against `schema`. Errors name the 1-based data row.
pub fn read_csv(schema: &Schema, input: impl Read) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv(format!("header: {e}")))?
        .clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let expected: Vec<&str> = schema.columns().iter().map(|c| c.name.as_str()).collect();
    if names.len() != expected.len()
        || names
            .iter()
            .zip(&expected)
            .any(|(a, b)| !a.eq_ignore_ascii_case(b))
    {
        return Err(Error::Csv(format!(
            "header {names:?} does not match schema columns {expected:?}"
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rownum = i + 1;
        let rec = rec.map_err(|e| Error::Csv(format!("row {rownum}: {e}")))?;
        if rec.len() != schema.len() {
            return Err(Error::Csv(format!(
                "row {rownum}: expected {} fields, found {}",
                schema.len(),
                rec.len()
            )));
        }
        let mut cells = Vec::with_capacity(rec.len());
        for (j, field) in rec.iter().enumerate() {
            let col = schema.column(j);
            let d = if field.is_empty() && col.data_type != crate::datamodel::DataType::Text {
                Datum::Null
            } else {
                Datum::parse_as(field, col.data_type).map_err(|e| {
                    Error::Csv(format!("row {rownum}, column {} ({}): {e}", j + 1, col.name))
                })?
            };
            cells.push(d);
        }
        rows.push(Row::new(cells));
    }
    Ok(rows)
}
