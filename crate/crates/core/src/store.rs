//! Descriptor matrices and the `VITD` binary store.
//!
//! # File layout (all integers little-endian)
//!
//! ```text
//! offset  size       field
//! 0       4          magic  b"VITD"
//! 4       4          version: u32 = 1
//! 8       8          count N: u64
//! 16      4          dim D: u32
//! 20      1          value type tag: u8 = 1 (IEEE-754 binary32, LE)
//! 21      N*D*4      values, row-major
//! ...     N*(4+len)  ids: u32 byte length followed by UTF-8 bytes
//! ```
//!
//! Nothing may follow the id table.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result, StoreError};

pub const STORE_MAGIC: [u8; 4] = *b"VITD";
pub const STORE_VERSION: u32 = 1;
pub const VALUE_TYPE_F32: u8 = 1;
/// Size in bytes of the fixed header.
pub const HEADER_LEN: usize = 21;

/// Dense N×D row-major matrix of finite 32-bit descriptor values.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMatrix {
    data: Vec<f32>,
    dim: usize,
}

impl DescriptorMatrix {
    pub fn new(data: Vec<f32>, dim: usize) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(StoreError::RaggedData { len: data.len(), dim });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(StoreError::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Self { data, dim })
    }

    pub fn empty(dim: usize) -> Result<Self, StoreError> {
        Self::new(Vec::new(), dim)
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self, StoreError> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(StoreError::RaggedData {
                    len: data.len() + row.len(),
                    dim,
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(data, dim)
    }

    /// Builds a matrix from values already known to be finite and rectangular.
    pub(crate) fn from_parts_unchecked(data: Vec<f32>, dim: usize) -> Self {
        debug_assert!(dim > 0 && data.len().is_multiple_of(dim));
        Self { data, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Copies the selected rows, in the given order, into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self { data, dim: self.dim }
    }
}

fn validate_ids<S: AsRef<str>>(ids: &[S], rows: usize) -> Result<(), StoreError> {
    if ids.len() != rows {
        return Err(StoreError::IdCountMismatch { ids: ids.len(), rows });
    }
    let mut seen = std::collections::HashSet::with_capacity(ids.len());
    for id in ids {
        let id = id.as_ref();
        if id.contains('\n') {
            return Err(StoreError::IdWithNewline(id.to_owned()));
        }
        if !seen.insert(id) {
            return Err(StoreError::DuplicateId(id.to_owned()));
        }
    }
    Ok(())
}

/// Serializes a descriptor set into the binary store layout.
pub fn encode_store<S: AsRef<str>>(matrix: &DescriptorMatrix, ids: &[S]) -> Result<Vec<u8>, StoreError> {
    validate_ids(ids, matrix.count())?;
    let id_bytes: usize = ids.iter().map(|id| 4 + id.as_ref().len()).sum();
    let mut buf = Vec::with_capacity(HEADER_LEN + matrix.data.len() * 4 + id_bytes);
    buf.extend_from_slice(&STORE_MAGIC);
    buf.extend_from_slice(&STORE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrix.count() as u64).to_le_bytes());
    buf.extend_from_slice(&(matrix.dim as u32).to_le_bytes());
    buf.push(VALUE_TYPE_F32);
    for v in &matrix.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for id in ids {
        let id = id.as_ref();
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
    }
    Ok(buf)
}

pub fn write_store<S: AsRef<str>>(matrix: &DescriptorMatrix, ids: &[S], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_store(matrix, ids)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(&bytes)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> u64 {
        (self.buf.len() - self.pos) as u64
    }

    fn take(&mut self, n: u64, section: &'static str) -> Result<&'a [u8], StoreError> {
        if n > self.remaining() {
            return Err(StoreError::Truncated {
                section,
                needed: n,
                available: self.remaining(),
            });
        }
        let n = n as usize;
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, section: &'static str) -> Result<[u8; N], StoreError> {
        Ok(self.take(N as u64, section)?.try_into().expect("length checked"))
    }
}

/// Parses and validates a binary store held in memory.
pub fn decode_store(bytes: &[u8]) -> Result<(DescriptorMatrix, Vec<String>), StoreError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic: [u8; 4] = cur.array("magic")?;
    if magic != STORE_MAGIC {
        return Err(StoreError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(cur.array("header")?);
    if version != STORE_VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let count = u64::from_le_bytes(cur.array("header")?);
    let dim = u32::from_le_bytes(cur.array("header")?);
    let [tag] = cur.array::<1>("header")?;
    if tag != VALUE_TYPE_F32 {
        return Err(StoreError::UnsupportedValueType(tag));
    }
    if dim == 0 {
        return Err(StoreError::ZeroDim);
    }

    let value_bytes = count
        .checked_mul(dim as u64)
        .and_then(|n| n.checked_mul(4))
        .ok_or(StoreError::Truncated {
            section: "values",
            needed: u64::MAX,
            available: cur.remaining(),
        })?;
    let raw = cur.take(value_bytes, "values")?;
    let dim = dim as usize;
    let mut data = Vec::with_capacity(raw.len() / 4);
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        if !v.is_finite() {
            return Err(StoreError::NonFinite {
                row: i / dim,
                col: i % dim,
            });
        }
        data.push(v);
    }

    let count = count as usize;
    let mut ids = Vec::with_capacity(count);
    for i in 0..count {
        let len = u32::from_le_bytes(cur.array("id length")?);
        let raw = cur.take(len as u64, "id bytes")?;
        let id = std::str::from_utf8(raw).map_err(|_| StoreError::InvalidUtf8(i))?;
        ids.push(id.to_owned());
    }
    if cur.remaining() != 0 {
        return Err(StoreError::TrailingBytes(cur.remaining()));
    }
    validate_ids(&ids, count)?;
    Ok((DescriptorMatrix::from_parts_unchecked(data, dim), ids))
}

pub fn read_store(path: impl AsRef<Path>) -> Result<(DescriptorMatrix, Vec<String>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_store(&bytes)?)
}

/// Returns true when the bytes start with the binary store magic.
pub fn looks_like_store(bytes: &[u8]) -> bool {
    bytes.len() >= 4 && bytes[..4] == STORE_MAGIC
}

/// Parses the plain-text import format: one `<id> <v1> ... <vD>` record per line.
///
/// Blank lines are skipped. Every record must carry the same number of values.
pub fn parse_text(input: &str) -> Result<(DescriptorMatrix, Vec<String>), StoreError> {
    let mut data = Vec::new();
    let mut ids = Vec::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    let mut dim = None;
    for (lineno, line) in input.lines().enumerate() {
        let lineno = lineno + 1;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let start = data.len();
        for tok in fields {
            let v: f32 = tok.parse().map_err(|_| StoreError::TextParse {
                line: lineno,
                message: format!("cannot parse {tok:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(StoreError::TextParse {
                    line: lineno,
                    message: format!("non-finite value {tok:?}"),
                });
            }
            data.push(v);
        }
        let n = data.len() - start;
        match dim {
            None if n == 0 => {
                return Err(StoreError::TextParse {
                    line: lineno,
                    message: "record has no values".into(),
                })
            }
            None => dim = Some(n),
            Some(d) if d != n => {
                return Err(StoreError::TextParse {
                    line: lineno,
                    message: format!("expected {d} values, found {n}"),
                })
            }
            Some(_) => {}
        }
        if let Some(&first) = first_line.get(id) {
            return Err(StoreError::TextDuplicateId {
                id: id.to_owned(),
                line: lineno,
                first,
            });
        }
        first_line.insert(id.to_owned(), lineno);
        ids.push(id.to_owned());
    }
    let Some(dim) = dim else {
        return Err(StoreError::TextParse {
            line: 0,
            message: "no records".into(),
        });
    };
    Ok((DescriptorMatrix::from_parts_unchecked(data, dim), ids))
}

/// A descriptor matrix together with its row identifiers and an id → row map.
#[derive(Debug, Clone)]
pub struct DescriptorSet {
    matrix: DescriptorMatrix,
    ids: Vec<Arc<str>>,
    rows: HashMap<Arc<str>, usize>,
}

impl DescriptorSet {
    pub fn new<S: AsRef<str>>(matrix: DescriptorMatrix, ids: &[S]) -> Result<Self, StoreError> {
        validate_ids(ids, matrix.count())?;
        let ids: Vec<Arc<str>> = ids.iter().map(|s| Arc::from(s.as_ref())).collect();
        let rows = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Ok(Self { matrix, ids, rows })
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let (matrix, ids) = read_store(path)?;
        Ok(Self::new(matrix, &ids)?)
    }

    pub fn matrix(&self) -> &DescriptorMatrix {
        &self.matrix
    }

    pub fn ids(&self) -> &[Arc<str>] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &Arc<str> {
        &self.ids[row]
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.rows.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Same ids, different values (e.g. after normalization).
    pub fn with_matrix(&self, matrix: DescriptorMatrix) -> Self {
        assert_eq!(matrix.count(), self.ids.len(), "row count must be preserved");
        Self {
            matrix,
            ids: self.ids.clone(),
            rows: self.rows.clone(),
        }
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let ids: Vec<Arc<str>> = rows.iter().map(|&r| self.ids[r].clone()).collect();
        let map = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Self {
            matrix: self.matrix.select_rows(rows),
            ids,
            rows: map,
        }
    }
}
