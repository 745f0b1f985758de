use std::collections::HashMap;

use super::{expect_types, known_params, param};
use crate::datamodel::{datum_compare, DataType, Datum, Row};
use crate::error::{Error, Result};
use crate::transducer::{Builtin, Params, TransducerIo, TransducerProgram, TransducerSpec};

fn same_io(name: &str, spec: &TransducerSpec) -> Result<()> {
    if spec.in_schema.same_types(&spec.out_schema) {
        Ok(())
    } else {
        Err(Error::Type(format!(
            "builtin {name} needs equal input and output types, declared {} and {}",
            spec.in_schema, spec.out_schema
        )))
    }
}

/// Copies input to output unchanged.
pub struct Identity;

impl Builtin for Identity {
    fn name(&self) -> &str {
        "identity"
    }

    fn check(&self, spec: &TransducerSpec, params: &Params) -> Result<()> {
        known_params(params, "identity", &[])?;
        same_io("identity", spec)
    }

    fn instantiate(&self, _params: &Params) -> Result<Box<dyn TransducerProgram>> {
        Ok(Box::new(|io: &mut TransducerIo<'_>| {
            while let Some(r) = io.next_input()? {
                io.write_output(r)?;
            }
            Ok(())
        }))
    }
}

/// Passes rows whose integer column `col` satisfies
/// `col % modulus == remainder` (truncating remainder, as SQL `%`).
pub struct ModFilter;

const MOD_FILTER_PARAMS: &[&str] = &["col", "modulus", "remainder"];

impl Builtin for ModFilter {
    fn name(&self) -> &str {
        "mod_filter"
    }

    fn check(&self, spec: &TransducerSpec, params: &Params) -> Result<()> {
        known_params(params, "mod_filter", MOD_FILTER_PARAMS)?;
        same_io("mod_filter", spec)?;
        let idx = match params.get("col") {
            Some(c) => spec
                .in_schema
                .index_of(c)
                .ok_or_else(|| Error::Plan(format!("mod_filter: no input column '{c}'")))?,
            None => 0,
        };
        let t = spec.in_schema.column(idx).data_type;
        if !matches!(t, DataType::Int32 | DataType::Int64) {
            return Err(Error::Type(format!("mod_filter column must be an integer, got {t}")));
        }
        if param::<i64>(params, "modulus")? == Some(0) {
            return Err(Error::Plan("mod_filter modulus must be nonzero".into()));
        }
        Ok(())
    }

    fn instantiate(&self, params: &Params) -> Result<Box<dyn TransducerProgram>> {
        let col = params.get("col").cloned();
        let modulus = param::<i64>(params, "modulus")?.unwrap_or(3);
        let remainder = param::<i64>(params, "remainder")?.unwrap_or(1);
        if modulus == 0 {
            return Err(Error::Plan("mod_filter modulus must be nonzero".into()));
        }
        Ok(Box::new(move |io: &mut TransducerIo<'_>| {
            let idx = match &col {
                Some(c) => io
                    .in_schema()
                    .index_of(c)
                    .ok_or_else(|| Error::Plan(format!("mod_filter: no input column '{c}'")))?,
                None => 0,
            };
            while let Some(r) = io.next_input()? {
                if r[idx].as_i64().is_some_and(|v| v % modulus == remainder) {
                    io.write_output(r)?;
                }
            }
            Ok(())
        }))
    }
}

/// Drains its input and then emits a single row holding the row count.
pub struct Counter;

impl Builtin for Counter {
    fn name(&self) -> &str {
        "counter"
    }

    fn check(&self, spec: &TransducerSpec, params: &Params) -> Result<()> {
        known_params(params, "counter", &[])?;
        expect_types("counter", "output", &spec.out_schema, &[DataType::Int64])
    }

    fn instantiate(&self, _params: &Params) -> Result<Box<dyn TransducerProgram>> {
        Ok(Box::new(|io: &mut TransducerIo<'_>| {
            let mut n = 0i64;
            while io.next_input()?.is_some() {
                n += 1;
            }
            io.write_output(Row::new(vec![Datum::Int64(n)]))
        }))
    }
}

/// Instrumentation for partitioned inputs. For every maximal stretch of
/// equal `key` values it emits `(segment, key, rows, ordered)`, where
/// `ordered` says the `order` column never decreased within the stretch.
/// A key split across instances, or broken up within one, shows up as more
/// than one output row for that key.
pub struct PartitionProbe;

struct Stretch {
    key: Datum,
    rows: i64,
    last: Option<Datum>,
    ordered: bool,
}

impl Builtin for PartitionProbe {
    fn name(&self) -> &str {
        "partition_probe"
    }

    fn check(&self, spec: &TransducerSpec, params: &Params) -> Result<()> {
        known_params(params, "partition_probe", &["key", "order"])?;
        let key = probe_column(&spec.in_schema, params.get("key"))?.unwrap_or(0);
        if let Some(o) = params.get("order") {
            probe_column(&spec.in_schema, Some(o))?;
        }
        let kt = spec.in_schema.column(key).data_type;
        expect_types(
            "partition_probe",
            "output",
            &spec.out_schema,
            &[DataType::Int32, kt, DataType::Int64, DataType::Bool],
        )
    }

    fn instantiate(&self, params: &Params) -> Result<Box<dyn TransducerProgram>> {
        let key = params.get("key").cloned();
        let order = params.get("order").cloned();
        Ok(Box::new(move |io: &mut TransducerIo<'_>| {
            let k = probe_column(io.in_schema(), key.as_ref())?.unwrap_or(0);
            let o = probe_column(io.in_schema(), order.as_ref())?;
            let seg = Datum::Int32(io.segment_id() as i32);
            let mut cur: Option<Stretch> = None;
            let emit = |io: &mut TransducerIo<'_>, s: Stretch| {
                io.write_output(Row::new(vec![
                    seg.clone(),
                    s.key,
                    Datum::Int64(s.rows),
                    Datum::Bool(s.ordered),
                ]))
            };
            while let Some(r) = io.next_input()? {
                let kv = r[k].clone();
                let ov = o.map(|o| r[o].clone());
                match &mut cur {
                    Some(s) if s.key == kv => {
                        s.rows += 1;
                        if let (Some(prev), Some(now)) = (&s.last, &ov) {
                            if datum_compare(prev, now)?.is_gt() {
                                s.ordered = false;
                            }
                        }
                        s.last = ov;
                    }
                    _ => {
                        if let Some(s) = cur.take() {
                            emit(io, s)?;
                        }
                        cur = Some(Stretch {
                            key: kv,
                            rows: 1,
                            last: ov,
                            ordered: true,
                        });
                    }
                }
            }
            if let Some(s) = cur {
                emit(io, s)?;
            }
            Ok(())
        }))
    }
}

fn probe_column(schema: &crate::datamodel::Schema, name: Option<&String>) -> Result<Option<usize>> {
    name.map(|n| {
        schema
            .index_of(n)
            .ok_or_else(|| Error::Plan(format!("partition_probe: no input column '{n}'")))
    })
    .transpose()
}

/// Rows per key from probe output, for tests: key -> list of (segment, ordered).
pub fn probe_summary(rows: &[Row]) -> HashMap<Datum, Vec<(i32, bool)>> {
    let mut out: HashMap<Datum, Vec<(i32, bool)>> = HashMap::new();
    for r in rows {
        let seg = r[0].as_i64().unwrap_or(-1) as i32;
        let ordered = r[3].as_bool().unwrap_or(false);
        out.entry(r[1].clone()).or_default().push((seg, ordered));
    }
    out
}
