//! `CMFT` binary tensor files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                           |
//! |--------|------|---------------------------------|
//! | 0      | 4    | magic `b"CMFT"`                 |
//! | 4      | 4    | version (`u32`, always 1)       |
//! | 8      | 4    | rows (`u32`)                    |
//! | 12     | 4    | cols (`u32`)                    |
//! | 16     | 4    | dim (`u32`)                     |
//! | 20     | 4    | dtype (`u32`, 0 = f32, 1 = f64) |
//! | 24     | ..   | row-major payload               |
//!
//! Feature maps are always dtype 0. Network checkpoints use dtype 1 so that a
//! reloaded network is bitwise identical to the trained one.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::FeatureMap;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CMFT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

impl DType {
    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            other => Err(Error::Format(format!("unsupported dtype code {other}"))),
        }
    }

    pub fn width(self) -> u64 {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub rows: u32,
    pub cols: u32,
    pub dim: u32,
    pub dtype: DType,
}

impl Header {
    pub fn len(&self) -> u64 {
        self.rows as u64 * self.cols as u64 * self.dim as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn payload_bytes(&self) -> u64 {
        self.len() * self.dtype.width()
    }
}

/// Tensor payload after decoding, widened to f64 for dtype 1 files.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

struct CountingWriter<W> {
    inner: W,
    written: u64,
}

impl<W: Write> CountingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner.write_all(bytes).map_err(|source| Error::Io {
            offset: self.written,
            source,
        })?;
        self.written += bytes.len() as u64;
        Ok(())
    }
}

fn dim_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::Shape(format!("{what} {value} exceeds u32")))
}

fn write_header<W: Write>(out: &mut CountingWriter<W>, header: &Header) -> Result<()> {
    let mut buf = [0u8; HEADER_LEN as usize];
    buf[0..4].copy_from_slice(&MAGIC);
    buf[4..8].copy_from_slice(&VERSION.to_le_bytes());
    buf[8..12].copy_from_slice(&header.rows.to_le_bytes());
    buf[12..16].copy_from_slice(&header.cols.to_le_bytes());
    buf[16..20].copy_from_slice(&header.dim.to_le_bytes());
    buf[20..24].copy_from_slice(&(header.dtype as u32).to_le_bytes());
    out.put(&buf)
}

/// Writes a feature map and returns the number of bytes emitted
/// (`24 + 4 * rows * cols * dim`).
pub fn write_feature_tensor<W: Write>(map: &FeatureMap, sink: W) -> Result<u64> {
    let header = Header {
        rows: dim_u32(map.rows(), "rows")?,
        cols: dim_u32(map.cols(), "cols")?,
        dim: dim_u32(map.dim(), "dim")?,
        dtype: DType::F32,
    };
    let mut out = CountingWriter {
        inner: sink,
        written: 0,
    };
    write_header(&mut out, &header)?;
    let mut chunk = Vec::with_capacity(4096 * 4);
    for values in map.data().chunks(4096) {
        chunk.clear();
        for v in values {
            chunk.extend_from_slice(&v.to_le_bytes());
        }
        out.put(&chunk)?;
    }
    out.inner.flush().map_err(|source| Error::Io {
        offset: out.written,
        source,
    })?;
    Ok(out.written)
}

/// Writes an f64 tensor (dtype 1).
pub fn write_f64_tensor<W: Write>(
    rows: usize,
    cols: usize,
    dim: usize,
    values: &[f64],
    sink: W,
) -> Result<u64> {
    if values.len() != rows * cols * dim {
        return Err(Error::Shape(format!(
            "{rows}x{cols}x{dim} tensor needs {} values, got {}",
            rows * cols * dim,
            values.len()
        )));
    }
    let header = Header {
        rows: dim_u32(rows, "rows")?,
        cols: dim_u32(cols, "cols")?,
        dim: dim_u32(dim, "dim")?,
        dtype: DType::F64,
    };
    let mut out = CountingWriter {
        inner: sink,
        written: 0,
    };
    write_header(&mut out, &header)?;
    let mut chunk = Vec::with_capacity(4096 * 8);
    for block in values.chunks(4096) {
        chunk.clear();
        for v in block {
            chunk.extend_from_slice(&v.to_le_bytes());
        }
        out.put(&chunk)?;
    }
    out.inner.flush().map_err(|source| Error::Io {
        offset: out.written,
        source,
    })?;
    Ok(out.written)
}

fn read_header<R: Read>(source: &mut R) -> Result<Header> {
    let mut buf = Vec::with_capacity(HEADER_LEN as usize);
    source
        .take(HEADER_LEN)
        .read_to_end(&mut buf)
        .map_err(|source| Error::Io { offset: 0, source })?;
    if buf.len() >= 4 && buf[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"CMFT\"",
            String::from_utf8_lossy(&buf[0..4])
        )));
    }
    if (buf.len() as u64) < HEADER_LEN {
        return Err(Error::Length {
            expected: HEADER_LEN,
            actual: buf.len() as u64,
        });
    }
    let word = |i: usize| u32::from_le_bytes([buf[i], buf[i + 1], buf[i + 2], buf[i + 3]]);
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    Ok(Header {
        rows: word(8),
        cols: word(12),
        dim: word(16),
        dtype: DType::from_code(word(20))?,
    })
}

/// Reads any CMFT tensor, validating its length and rejecting non-finite values.
pub fn read_tensor<R: Read>(mut source: R) -> Result<(Header, Payload)> {
    let header = read_header(&mut source)?;
    let expected = header.payload_bytes();
    let mut bytes = Vec::with_capacity(expected.min(1 << 30) as usize);
    (&mut source)
        .take(expected)
        .read_to_end(&mut bytes)
        .map_err(|source| Error::Io {
            offset: HEADER_LEN,
            source,
        })?;
    if bytes.len() as u64 != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let non_finite = |i: usize| Error::Value(format!("non-finite value at cell index {i}"));
    let payload = match header.dtype {
        DType::F32 => {
            let mut values = Vec::with_capacity(header.len() as usize);
            for (i, b) in bytes.chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                if !v.is_finite() {
                    return Err(non_finite(i));
                }
                values.push(v);
            }
            Payload::F32(values)
        }
        DType::F64 => {
            let mut values = Vec::with_capacity(header.len() as usize);
            for (i, b) in bytes.chunks_exact(8).enumerate() {
                let v = f64::from_le_bytes(b.try_into().expect("chunk of 8"));
                if !v.is_finite() {
                    return Err(non_finite(i));
                }
                values.push(v);
            }
            Payload::F64(values)
        }
    };
    Ok((header, payload))
}

/// Reads a feature map (dtype 0 only).
pub fn read_feature_tensor<R: Read>(source: R) -> Result<FeatureMap> {
    let (header, payload) = read_tensor(source)?;
    match payload {
        Payload::F32(values) => FeatureMap::new(
            header.rows as usize,
            header.cols as usize,
            header.dim as usize,
            values,
        ),
        Payload::F64(_) => Err(Error::Format(
            "feature maps must be 32-bit float (dtype 0)".into(),
        )),
    }
}

pub fn save_feature_map(map: &FeatureMap, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::file(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_feature_tensor(map, BufWriter::new(file))
}

pub fn load_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_feature_tensor(BufReader::new(file))
}

pub fn save_f64_tensor(
    rows: usize,
    cols: usize,
    dim: usize,
    values: &[f64],
    path: impl AsRef<Path>,
) -> Result<u64> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_f64_tensor(rows, cols, dim, values, BufWriter::new(file))
}

pub fn load_f64_tensor(path: impl AsRef<Path>) -> Result<(Header, Vec<f64>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let (header, payload) = read_tensor(BufReader::new(file))?;
    match payload {
        Payload::F64(v) => Ok((header, v)),
        Payload::F32(v) => Ok((header, v.into_iter().map(f64::from).collect())),
    }
}
