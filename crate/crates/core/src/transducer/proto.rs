//! Row-group wire frames exchanged with external transducers and over the
//! transfer sockets.
//!
//! All integers are little-endian.
//!
//! ```text
//! frame    := "TDX1" type:u8 payload_len:u32 payload
//! type     := 1 row group | 2 end-of-stream (empty payload) | 3 error (UTF-8 message)
//! rowgroup := col_count:u16 { tag:u8 name_len:u16 name } row_count:u32 { cell }
//! cell     := null:u8 (1 = null, 0 = value) [value]
//! value    := i32 | i64 | f64 bits | len:u32 utf8 | bool:u8
//! ```
//!
//! Column tags: 1 int32, 2 int64, 3 float64, 4 text, 5 bool. A row group
//! frame always carries at least one row; an empty stream is just the
//! end-of-stream frame.

use std::io::{self, Read, Write};
use std::sync::Arc;

use crate::datamodel::{Column, DataType, Datum, Row, RowGroup, Schema, SchemaRef};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"TDX1";
pub const HEADER_LEN: usize = 9;

pub const FRAME_ROWGROUP: u8 = 1;
pub const FRAME_END: u8 = 2;
pub const FRAME_ERROR: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    RowGroup(RowGroup),
    End,
    Error(String),
}

impl Frame {
    pub fn frame_type(&self) -> u8 {
        match self {
            Frame::RowGroup(_) => FRAME_ROWGROUP,
            Frame::End => FRAME_END,
            Frame::Error(_) => FRAME_ERROR,
        }
    }
}

pub fn type_tag(t: DataType) -> u8 {
    match t {
        DataType::Int32 => 1,
        DataType::Int64 => 2,
        DataType::Float64 => 3,
        DataType::Text => 4,
        DataType::Bool => 5,
    }
}

fn tag_type(tag: u8) -> Option<DataType> {
    Some(match tag {
        1 => DataType::Int32,
        2 => DataType::Int64,
        3 => DataType::Float64,
        4 => DataType::Text,
        5 => DataType::Bool,
        _ => return None,
    })
}

fn encode_err(msg: impl Into<String>) -> Error {
    Error::Protocol {
        offset: 0,
        msg: msg.into(),
    }
}

fn put_u16(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u16::try_from(v).map_err(|_| encode_err(format!("{what} {v} exceeds u16")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| encode_err(format!("{what} {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn encode_rowgroup_payload(rg: &RowGroup, out: &mut Vec<u8>) -> Result<()> {
    if rg.is_empty() {
        return Err(encode_err("row group frames must carry at least one row"));
    }
    let schema = rg.schema();
    put_u16(out, schema.len(), "column count")?;
    for c in schema.columns() {
        out.push(type_tag(c.data_type));
        put_u16(out, c.name.len(), "column name length")?;
        out.extend_from_slice(c.name.as_bytes());
    }
    put_u32(out, rg.row_count(), "row count")?;
    for row in rg.rows() {
        for cell in row.cells() {
            match cell {
                Datum::Null => out.push(1),
                Datum::Int32(v) => {
                    out.push(0);
                    out.extend_from_slice(&v.to_le_bytes());
                }
                Datum::Int64(v) => {
                    out.push(0);
                    out.extend_from_slice(&v.to_le_bytes());
                }
                Datum::Float64(v) => {
                    out.push(0);
                    out.extend_from_slice(&v.to_bits().to_le_bytes());
                }
                Datum::Text(s) => {
                    out.push(0);
                    put_u32(out, s.len(), "text length")?;
                    out.extend_from_slice(s.as_bytes());
                }
                Datum::Bool(b) => {
                    out.push(0);
                    out.push(*b as u8);
                }
            }
        }
    }
    Ok(())
}

/// Appends the encoding of `frame` to `out`.
pub fn encode_frame(frame: &Frame, out: &mut Vec<u8>) -> Result<()> {
    let start = out.len();
    out.extend_from_slice(&MAGIC);
    out.push(frame.frame_type());
    out.extend_from_slice(&[0; 4]);
    match frame {
        Frame::RowGroup(rg) => encode_rowgroup_payload(rg, out)?,
        Frame::End => {}
        Frame::Error(msg) => out.extend_from_slice(msg.as_bytes()),
    }
    let len = out.len() - start - HEADER_LEN;
    let len = u32::try_from(len).map_err(|_| encode_err("frame payload exceeds u32"))?;
    out[start + 5..start + 9].copy_from_slice(&len.to_le_bytes());
    Ok(())
}

pub fn encode_frames(frames: &[Frame]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for f in frames {
        encode_frame(f, &mut out)?;
    }
    Ok(out)
}

/// Cursor over one frame payload; errors carry absolute stream offsets.
struct PayloadCursor<'a> {
    buf: &'a [u8],
    pos: usize,
    base: u64,
}

impl<'a> PayloadCursor<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Protocol {
            offset: self.base + self.pos as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!("truncated payload reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn fixed8(&mut self, what: &str) -> Result<[u8; 8]> {
        Ok(self.take(8, what)?.try_into().unwrap())
    }

    fn utf8(&mut self, n: usize, what: &str) -> Result<String> {
        let at = self.pos;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Protocol {
            offset: self.base + at as u64,
            msg: format!("{what} is not valid UTF-8"),
        })
    }
}

fn decode_rowgroup_payload(buf: &[u8], base: u64) -> Result<RowGroup> {
    let mut cur = PayloadCursor { buf, pos: 0, base };
    let ncols = cur.u16("column count")? as usize;
    if ncols == 0 {
        return Err(cur.err("row group with zero columns"));
    }
    let mut columns = Vec::with_capacity(ncols);
    for _ in 0..ncols {
        let at = cur.pos;
        let tag = cur.u8("type tag")?;
        let ty = tag_type(tag).ok_or_else(|| Error::Protocol {
            offset: base + at as u64,
            msg: format!("unknown type tag {tag}"),
        })?;
        let nlen = cur.u16("name length")? as usize;
        let name = cur.utf8(nlen, "column name")?;
        columns.push(Column::new(name, ty));
    }
    let schema = Schema::new(columns).map_err(|e| Error::Protocol {
        offset: base,
        msg: e.to_string(),
    })?;
    let nrows_at = cur.pos;
    let nrows = cur.u32("row count")? as usize;
    if nrows == 0 {
        return Err(Error::Protocol {
            offset: base + nrows_at as u64,
            msg: "row group with zero rows (end of stream must use frame type 2)".into(),
        });
    }
    // Every cell takes at least one byte; cap the preallocation accordingly.
    let mut rows = Vec::with_capacity(nrows.min(buf.len() / ncols + 1));
    for _ in 0..nrows {
        let mut cells = Vec::with_capacity(ncols);
        for col in schema.columns() {
            let at = cur.pos;
            let flag = cur.u8("null flag")?;
            let d = match flag {
                1 => Datum::Null,
                0 => match col.data_type {
                    DataType::Int32 => {
                        Datum::Int32(i32::from_le_bytes(cur.take(4, "int32")?.try_into().unwrap()))
                    }
                    DataType::Int64 => Datum::Int64(i64::from_le_bytes(cur.fixed8("int64")?)),
                    DataType::Float64 => {
                        Datum::Float64(f64::from_bits(u64::from_le_bytes(cur.fixed8("float64")?)))
                    }
                    DataType::Text => {
                        let n = cur.u32("text length")? as usize;
                        Datum::Text(cur.utf8(n, "text value")?)
                    }
                    DataType::Bool => {
                        let bat = cur.pos;
                        match cur.u8("bool")? {
                            0 => Datum::Bool(false),
                            1 => Datum::Bool(true),
                            b => {
                                return Err(Error::Protocol {
                                    offset: base + bat as u64,
                                    msg: format!("invalid bool byte {b}"),
                                })
                            }
                        }
                    }
                },
                f => {
                    return Err(Error::Protocol {
                        offset: base + at as u64,
                        msg: format!("invalid null flag {f}"),
                    })
                }
            };
            cells.push(d);
        }
        rows.push(Row::new(cells));
    }
    if cur.pos != buf.len() {
        return Err(cur.err(format!(
            "{} trailing bytes after row group payload",
            buf.len() - cur.pos
        )));
    }
    Ok(RowGroup::new_unchecked(Arc::new(schema), rows))
}

/// Reads frames from a byte stream, tracking the absolute offset.
pub struct FrameReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        FrameReader { inner, offset: 0 }
    }

    /// Bytes consumed so far.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn into_inner(self) -> R {
        self.inner
    }

    /// Fills `buf` completely. Returns the number of bytes read before EOF.
    fn fill(&mut self, buf: &mut [u8]) -> Result<usize> {
        let mut got = 0;
        while got < buf.len() {
            match self.inner.read(&mut buf[got..]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(got)
    }

    /// Next frame, or `None` on a clean end of input at a frame boundary.
    pub fn read_frame(&mut self) -> Result<Option<Frame>> {
        let start = self.offset;
        let mut header = [0u8; HEADER_LEN];
        let got = self.fill(&mut header)?;
        if got == 0 {
            return Ok(None);
        }
        if header[..got.min(4)] != MAGIC[..got.min(4)] {
            return Err(Error::Protocol {
                offset: start,
                msg: format!("bad magic {:02x?}", &header[..got.min(4)]),
            });
        }
        if got < HEADER_LEN {
            return Err(Error::Protocol {
                offset: start + got as u64,
                msg: "truncated frame header".into(),
            });
        }
        let ftype = header[4];
        let len = u32::from_le_bytes(header[5..9].try_into().unwrap()) as usize;
        self.offset += HEADER_LEN as u64;
        let payload_start = self.offset;
        let frame = match ftype {
            FRAME_ROWGROUP | FRAME_ERROR | FRAME_END => {
                let mut payload = Vec::new();
                let got = (&mut self.inner)
                    .take(len as u64)
                    .read_to_end(&mut payload)?;
                self.offset += got as u64;
                if got < len {
                    return Err(Error::Protocol {
                        offset: self.offset,
                        msg: format!("truncated payload: expected {len} bytes, got {got}"),
                    });
                }
                match ftype {
                    FRAME_ROWGROUP => Frame::RowGroup(decode_rowgroup_payload(&payload, payload_start)?),
                    FRAME_ERROR => Frame::Error(String::from_utf8(payload).map_err(|_| {
                        Error::Protocol {
                            offset: payload_start,
                            msg: "error message is not valid UTF-8".into(),
                        }
                    })?),
                    _ if len != 0 => {
                        return Err(Error::Protocol {
                            offset: start + 5,
                            msg: format!("end-of-stream frame with {len}-byte payload"),
                        })
                    }
                    _ => Frame::End,
                }
            }
            other => {
                return Err(Error::Protocol {
                    offset: start + 4,
                    msg: format!("unknown frame type {other}"),
                })
            }
        };
        Ok(Some(frame))
    }
}

impl<R: Read> Iterator for FrameReader<R> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_frame().transpose()
    }
}

/// Decodes a complete byte buffer into frames.
pub fn decode_frames(bytes: &[u8]) -> Result<Vec<Frame>> {
    FrameReader::new(bytes).collect()
}

/// Writes frames to a byte sink.
pub struct FrameWriter<W: Write> {
    inner: W,
    buf: Vec<u8>,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(inner: W) -> Self {
        FrameWriter {
            inner,
            buf: Vec::new(),
        }
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<()> {
        self.buf.clear();
        encode_frame(frame, &mut self.buf)?;
        self.inner.write_all(&self.buf)?;
        Ok(())
    }

    pub fn write_rowgroup(&mut self, schema: &SchemaRef, rows: Vec<Row>) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        self.write_frame(&Frame::RowGroup(RowGroup::new(Arc::clone(schema), rows)?))
    }

    pub fn write_end(&mut self) -> Result<()> {
        self.write_frame(&Frame::End)?;
        self.flush()
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }

    pub fn get_mut(&mut self) -> &mut W {
        &mut self.inner
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}
