//! The `ACSW` weight container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ACSW"
//! 4       4     version, u32 LE (1)
//! 8       8     entry count, u64 LE
//! 16      ...   entry headers, back to back:
//!                 u8 name length, name bytes (UTF-8, 1..=255)
//!                 u8 dtype (0 = f32, 1 = f64)
//!                 u8 rank, then rank × u64 LE extents
//!                 u64 LE absolute byte offset of the data
//! ...     ...   zero padding to a multiple of 8
//! ...     ...   data section: each tensor's elements, little-endian,
//!               starting at its recorded offset (a multiple of 8)
//! ```
//!
//! [`encode`] writes entries in store order, packed with the minimum
//! padding, and ends the file at the last data byte. [`decode`] accepts any
//! layout whose ranges are aligned, lie inside the data section, do not
//! overlap and end exactly at the end of the file.

use std::path::Path;

use acs_core::{AnyTensor, DType, Tensor, WeightStore};

pub const MAGIC: [u8; 4] = *b"ACSW";
pub const VERSION: u32 = 1;
pub const MAX_NAME_LEN: usize = 255;
const HEADER_LEN: usize = 16;
const ALIGN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic {0:02x?}")]
    BadMagic(Vec<u8>),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("entry `{entry}`: data range {start}..{end} lies outside the data section")]
    OutOfBounds { entry: String, start: u64, end: u64 },
    #[error("entry `{entry}`: offset {offset} is not 8-byte aligned")]
    Misaligned { entry: String, offset: u64 },
    #[error("entries `{first}` and `{second}` overlap")]
    Overlap { first: String, second: String },
    #[error("duplicate entry name `{0}`")]
    DuplicateName(String),
    #[error("entry name `{name}` is {len} bytes long (max 255)")]
    NameTooLong { name: String, len: usize },
    #[error("entry {0} has an empty name")]
    EmptyName(u64),
    #[error("entry {0} name is not UTF-8")]
    NameEncoding(u64),
    #[error("entry `{entry}`: unknown dtype code {code}")]
    UnknownDType { entry: String, code: u8 },
    #[error("entry `{entry}`: {reason}")]
    BadShape { entry: String, reason: String },
    #[error("{0} trailing bytes after the data section")]
    TrailingBytes(u64),
}

#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: String,
        #[source]
        source: FormatError,
    },
}

fn align(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

fn entry_header_len(name: &str, rank: usize) -> usize {
    1 + name.len() + 1 + 1 + 8 * rank + 8
}

pub fn encode(store: &WeightStore) -> Result<Vec<u8>, FormatError> {
    let mut head = HEADER_LEN;
    for (name, t) in store.iter() {
        if name.is_empty() {
            return Err(FormatError::EmptyName(0));
        }
        if name.len() > MAX_NAME_LEN {
            return Err(FormatError::NameTooLong {
                name: name.into(),
                len: name.len(),
            });
        }
        head += entry_header_len(name, t.shape().len());
    }
    let mut offsets = Vec::with_capacity(store.len());
    let mut end = align(head);
    for (_, t) in store.iter() {
        let start = align(end);
        offsets.push(start);
        end = start + t.len() * t.dtype().size();
    }
    let total = if store.is_empty() { HEADER_LEN } else { end };

    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for ((name, t), off) in store.iter().zip(&offsets) {
        out.push(name.len() as u8);
        out.extend_from_slice(name.as_bytes());
        out.push(t.dtype().code());
        out.push(t.shape().len() as u8);
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        out.extend_from_slice(&(*off as u64).to_le_bytes());
    }
    for ((_, t), &off) in store.iter().zip(&offsets) {
        out.resize(off, 0);
        match t {
            AnyTensor::F32(t) => t
                .data()
                .iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            AnyTensor::F64(t) => t
                .data()
                .iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        }
    }
    out.resize(total, 0);
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: impl FnOnce() -> String) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(FormatError::Truncated(what()));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: impl FnOnce() -> String) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    fn u64(&mut self, what: impl FnOnce() -> String) -> Result<u64, FormatError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

struct Entry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    start: u64,
    end: u64,
}

/// Parses a whole container. Every header and range is validated before
/// any tensor data is read.
pub fn decode(buf: &[u8]) -> Result<WeightStore, FormatError> {
    let mut c = Cursor { buf, pos: 0 };
    let magic = c.take(4, || "file header".into())?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic.to_vec()));
    }
    let version = u32::from_le_bytes(
        c.take(4, || "file header".into())?
            .try_into()
            .expect("4 bytes"),
    );
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let count = c.u64(|| "file header".into())?;

    let mut entries: Vec<Entry> = Vec::new();
    let mut names = std::collections::HashSet::new();
    for i in 0..count {
        let at = |part: &str| format!("{part} of entry {i}");
        let len = usize::from(c.u8(|| at("name length"))?);
        if len == 0 {
            return Err(FormatError::EmptyName(i));
        }
        let raw = c.take(len, || at("name"))?;
        let name = std::str::from_utf8(raw)
            .map_err(|_| FormatError::NameEncoding(i))?
            .to_string();
        let code = c.u8(|| format!("header of entry `{name}`"))?;
        let dtype = DType::from_code(code).ok_or_else(|| FormatError::UnknownDType {
            entry: name.clone(),
            code,
        })?;
        let rank = usize::from(c.u8(|| format!("header of entry `{name}`"))?);
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let e = c.u64(|| format!("header of entry `{name}`"))?;
            shape.push(usize::try_from(e).map_err(|_| FormatError::BadShape {
                entry: name.clone(),
                reason: format!("extent {e} does not fit in memory"),
            })?);
        }
        let start = c.u64(|| format!("header of entry `{name}`"))?;
        let bytes = shape
            .iter()
            .try_fold(dtype.size() as u64, |acc, &e| acc.checked_mul(e as u64));
        let end =
            bytes
                .and_then(|b| start.checked_add(b))
                .ok_or_else(|| FormatError::OutOfBounds {
                    entry: name.clone(),
                    start,
                    end: u64::MAX,
                })?;
        if !names.insert(name.clone()) {
            return Err(FormatError::DuplicateName(name));
        }
        entries.push(Entry {
            name,
            dtype,
            shape,
            start,
            end,
        });
    }

    let data_start = if count == 0 {
        HEADER_LEN as u64
    } else {
        align(c.pos) as u64
    };
    let file_len = buf.len() as u64;
    for e in &entries {
        if e.start % ALIGN as u64 != 0 {
            return Err(FormatError::Misaligned {
                entry: e.name.clone(),
                offset: e.start,
            });
        }
        if e.start < data_start {
            return Err(FormatError::OutOfBounds {
                entry: e.name.clone(),
                start: e.start,
                end: e.end,
            });
        }
    }
    let mut order: Vec<&Entry> = entries.iter().filter(|e| e.end > e.start).collect();
    order.sort_by_key(|e| e.start);
    for w in order.windows(2) {
        if w[1].start < w[0].end {
            return Err(FormatError::Overlap {
                first: w[0].name.clone(),
                second: w[1].name.clone(),
            });
        }
    }
    if let Some(e) = entries
        .iter()
        .filter(|e| e.end > file_len)
        .max_by_key(|e| e.end)
    {
        return Err(FormatError::Truncated(format!(
            "data of entry `{}` ends at byte {} but the file has {file_len}",
            e.name, e.end
        )));
    }
    let expected = entries
        .iter()
        .map(|e| e.end)
        .max()
        .unwrap_or(0)
        .max(data_start);
    if file_len > expected {
        return Err(FormatError::TrailingBytes(file_len - expected));
    }

    let mut store = WeightStore::new();
    for e in entries {
        let raw = &buf[e.start as usize..e.end as usize];
        let bad = |err: acs_core::Error| FormatError::BadShape {
            entry: e.name.clone(),
            reason: err.to_string(),
        };
        let t = match e.dtype {
            DType::F32 => AnyTensor::F32(
                Tensor::new(
                    e.shape.clone(),
                    raw.chunks_exact(4)
                        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                        .collect(),
                )
                .map_err(bad)?,
            ),
            DType::F64 => AnyTensor::F64(
                Tensor::new(
                    e.shape.clone(),
                    raw.chunks_exact(8)
                        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                        .collect(),
                )
                .map_err(bad)?,
            ),
        };
        store
            .insert(e.name.clone(), t)
            .map_err(|_| FormatError::DuplicateName(e.name.clone()))?;
    }
    Ok(store)
}

pub fn save(store: &WeightStore, path: impl AsRef<Path>) -> Result<(), WeightsError> {
    let path = path.as_ref();
    let bytes = encode(store).map_err(|source| WeightsError::Format {
        path: path.display().to_string(),
        source,
    })?;
    std::fs::write(path, bytes).map_err(|source| WeightsError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: impl AsRef<Path>) -> Result<WeightStore, WeightsError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| WeightsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes).map_err(|source| WeightsError::Format {
        path: path.display().to_string(),
        source,
    })
}
