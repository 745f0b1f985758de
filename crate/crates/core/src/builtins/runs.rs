//! Maximal monotone price runs per symbol.
//!
//! Input is `(rn int64, symbol text, day int32, price float64)`, partitioned
//! by symbol and ordered by day, with `rn` the row number in that order.
//! Output is `(symbol, begin, beginprice, end, endprice, direction)`.
//!
//! Consecutive days form a step that rises, falls, or stays flat. A run is a
//! maximal chain of rising steps or of falling steps; each flat step is a run
//! of its own with direction 0. Adjacent runs share their boundary day, and a
//! symbol with a single day yields one run with `begin == end`.

use std::cmp::Ordering;

use super::{expect_types, known_params};
use crate::datamodel::{DataType, Datum, Row};
use crate::error::{Error, Result};
use crate::transducer::{Builtin, Params, TransducerIo, TransducerProgram, TransducerSpec};

pub struct Runs;

const IN_TYPES: &[DataType] = &[DataType::Int64, DataType::Text, DataType::Int32, DataType::Float64];
const OUT_TYPES: &[DataType] = &[
    DataType::Text,
    DataType::Int32,
    DataType::Float64,
    DataType::Int32,
    DataType::Float64,
    DataType::Int32,
];

impl Builtin for Runs {
    fn name(&self) -> &str {
        "runs"
    }

    fn check(&self, spec: &TransducerSpec, params: &Params) -> Result<()> {
        known_params(params, "runs", &[])?;
        expect_types("runs", "input", &spec.in_schema, IN_TYPES)?;
        expect_types("runs", "output", &spec.out_schema, OUT_TYPES)
    }

    fn instantiate(&self, _params: &Params) -> Result<Box<dyn TransducerProgram>> {
        Ok(Box::new(run_detector))
    }
}

struct Run {
    symbol: String,
    begin: i32,
    begin_price: f64,
    end: i32,
    end_price: f64,
    /// +1, -1, or 0 while the run is a single day or a flat step.
    dir: i32,
    steps: usize,
    /// Whether this symbol already emitted a run.
    emitted: bool,
}

impl Run {
    fn start(symbol: String, day: i32, price: f64, emitted: bool) -> Run {
        Run {
            symbol,
            begin: day,
            begin_price: price,
            end: day,
            end_price: price,
            dir: 0,
            steps: 0,
            emitted,
        }
    }

    fn row(&self) -> Row {
        Row::new(vec![
            Datum::Text(self.symbol.clone()),
            Datum::Int32(self.begin),
            Datum::Float64(self.begin_price),
            Datum::Int32(self.end),
            Datum::Float64(self.end_price),
            Datum::Int32(self.dir),
        ])
    }
}

fn direction(from: f64, to: f64) -> Result<i32> {
    match to.partial_cmp(&from) {
        Some(Ordering::Greater) => Ok(1),
        Some(Ordering::Less) => Ok(-1),
        Some(Ordering::Equal) => Ok(0),
        None => Err(Error::execution("runs", "price is NaN")),
    }
}

fn run_detector(io: &mut TransducerIo<'_>) -> Result<()> {
    let mut cur: Option<Run> = None;
    while let Some(r) = io.next_input()? {
        let (Some(rn), Some(symbol), Some(day), Some(price)) =
            (r[0].as_i64(), r[1].as_str(), r[2].as_i64(), r[3].as_f64())
        else {
            return Err(Error::execution("runs", format!("null field in input row {r:?}")));
        };
        let day = day as i32;
        let run = match cur.take() {
            Some(run) if rn != 1 => run,
            prev => {
                if let Some(p) = prev {
                    finish(io, p)?;
                }
                cur = Some(Run::start(symbol.to_string(), day, price, false));
                continue;
            }
        };
        if run.symbol != symbol {
            return Err(Error::execution(
                "runs",
                format!(
                    "symbol changed from {} to {symbol} without row number 1; input is not partitioned by symbol",
                    run.symbol
                ),
            ));
        }
        if day <= run.end {
            return Err(Error::execution(
                "runs",
                format!("{symbol}: day {day} after day {}; input is not ordered by day", run.end),
            ));
        }
        cur = Some(step(io, run, day, price)?);
    }
    if let Some(p) = cur {
        finish(io, p)?;
    }
    Ok(())
}

/// Applies one step to `run`, emitting any run the step closes.
fn step(io: &mut TransducerIo<'_>, mut run: Run, day: i32, price: f64) -> Result<Run> {
    let s = direction(run.end_price, price)?;
    if s != 0 && (run.steps == 0 || run.dir == s) {
        run.end = day;
        run.end_price = price;
        run.dir = s;
        run.steps += 1;
        return Ok(run);
    }
    if run.steps == 0 {
        // Flat step from a lone day: a run of its own.
        let mut flat = run;
        flat.end = day;
        flat.end_price = price;
        io.write_output(flat.row())?;
        return Ok(Run::start(flat.symbol, day, price, true));
    }
    io.write_output(run.row())?;
    let next = Run::start(run.symbol, run.end, run.end_price, true);
    step(io, next, day, price)
}

fn finish(io: &mut TransducerIo<'_>, run: Run) -> Result<()> {
    if run.steps > 0 || !run.emitted {
        io.write_output(run.row())?;
    }
    Ok(())
}
