//! Checks the wire-frame fixtures in `tests/golden` against manifest.json.

use std::path::{Path, PathBuf};

use serde_json::Value;
use tdx::datamodel::{DataType, Datum, Row};
use tdx::transducer::proto::{decode_frames, encode_frames, Frame};
use tdx::Error;

pub fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn manifest() -> Result<Value, String> {
    let text = std::fs::read_to_string(dir().join("manifest.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn expected_cell(v: &Value, ty: DataType) -> Result<Datum, String> {
    if v.is_null() {
        return Ok(Datum::Null);
    }
    let bad = || format!("manifest value {v} does not fit {ty}");
    Ok(match ty {
        DataType::Int32 => Datum::Int32(v.as_i64().and_then(|x| i32::try_from(x).ok()).ok_or_else(bad)?),
        DataType::Int64 => Datum::Int64(v.as_i64().ok_or_else(bad)?),
        DataType::Float64 => Datum::Float64(match v {
            Value::String(s) => match s.as_str() {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                "nan" => f64::NAN,
                "-0.0" => -0.0,
                _ => return Err(bad()),
            },
            _ => v.as_f64().ok_or_else(bad)?,
        }),
        DataType::Text => Datum::Text(v.as_str().ok_or_else(bad)?.to_string()),
        DataType::Bool => Datum::Bool(v.as_bool().ok_or_else(bad)?),
    })
}

/// Float cells compare by bit pattern so -0.0 and NaN are checked exactly.
fn same_cell(a: &Datum, b: &Datum) -> bool {
    match (a, b) {
        (Datum::Float64(x), Datum::Float64(y)) => x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()),
        _ => a == b,
    }
}

fn check_frame(got: &Frame, want: &Value) -> Result<(), String> {
    match (got, want["type"].as_str()) {
        (Frame::End, Some("end")) => Ok(()),
        (Frame::Error(m), Some("error")) if Some(m.as_str()) == want["message"].as_str() => Ok(()),
        (Frame::RowGroup(rg), Some("rowgroup")) => {
            let cols = want["columns"].as_array().ok_or("columns missing")?;
            let schema = rg.schema();
            if cols.len() != schema.len() {
                return Err(format!("{} columns, manifest lists {}", schema.len(), cols.len()));
            }
            let mut types = Vec::new();
            for (c, w) in schema.columns().iter().zip(cols) {
                let (name, ty) = (w[0].as_str().unwrap_or(""), w[1].as_str().unwrap_or(""));
                let ty: DataType = ty.parse().map_err(|e: Error| e.to_string())?;
                if c.name != name || c.data_type != ty {
                    return Err(format!("column {} {}, manifest says {name} {ty}", c.name, c.data_type));
                }
                types.push(ty);
            }
            let rows = want["rows"].as_array().ok_or("rows missing")?;
            if rows.len() != rg.row_count() {
                return Err(format!("{} rows, manifest lists {}", rg.row_count(), rows.len()));
            }
            for (i, (r, w)) in rg.rows().iter().zip(rows).enumerate() {
                let w = w.as_array().ok_or("row is not an array")?;
                let want_row: Row = w
                    .iter()
                    .zip(&types)
                    .map(|(v, &t)| expected_cell(v, t))
                    .collect::<Result<_, _>>()?;
                if r.len() != want_row.len() || !r.cells().iter().zip(want_row.cells()).all(|(a, b)| same_cell(a, b)) {
                    return Err(format!("row {i}: decoded {r:?}, manifest {want_row:?}"));
                }
            }
            Ok(())
        }
        _ => Err(format!("decoded {got:?}, manifest {want}")),
    }
}

/// Decodes every valid fixture, compares with the documented rows and
/// re-encodes; checks every invalid fixture fails at the documented offset.
/// Returns the number of valid fixtures.
pub fn check_all() -> Result<usize, String> {
    let m = manifest()?;
    let valid = m["valid"].as_array().ok_or("manifest has no valid list")?;
    for entry in valid {
        let file = entry["file"].as_str().ok_or("entry without file")?;
        let bytes = std::fs::read(dir().join(file)).map_err(|e| format!("{file}: {e}"))?;
        let frames = decode_frames(&bytes).map_err(|e| format!("{file}: {e}"))?;
        let want = entry["frames"].as_array().ok_or("entry without frames")?;
        if frames.len() != want.len() {
            return Err(format!("{file}: {} frames, manifest lists {}", frames.len(), want.len()));
        }
        for (i, (f, w)) in frames.iter().zip(want).enumerate() {
            check_frame(f, w).map_err(|e| format!("{file} frame {i}: {e}"))?;
        }
        let again = encode_frames(&frames).map_err(|e| format!("{file}: {e}"))?;
        if again != bytes {
            return Err(format!("{file}: re-encoding differs from the fixture bytes"));
        }
    }
    for entry in m["invalid"].as_array().ok_or("manifest has no invalid list")? {
        let file = entry["file"].as_str().ok_or("entry without file")?;
        let bytes = std::fs::read(dir().join(file)).map_err(|e| format!("{file}: {e}"))?;
        match decode_frames(&bytes) {
            Err(Error::Protocol { offset, msg }) => {
                let want_off = entry["offset"].as_u64().ok_or("offset missing")?;
                let frag = entry["contains"].as_str().unwrap_or("");
                if offset != want_off || !msg.contains(frag) {
                    return Err(format!(
                        "{file}: error at {offset} '{msg}', manifest expects {want_off} containing '{frag}'"
                    ));
                }
            }
            Err(e) => return Err(format!("{file}: expected a protocol error, got {e}")),
            Ok(f) => return Err(format!("{file}: decoded {} frames instead of failing", f.len())),
        }
    }
    Ok(valid.len())
}
