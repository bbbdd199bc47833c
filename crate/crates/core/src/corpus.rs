//! Passage corpus and embedding matrix storage.
//!
//! Passages live in a JSON-lines file (one record per line). Embeddings live
//! in a compact little-endian binary file:
//!
//! ```text
//! "DREM" | u32 version (=1) | u8 normalized | u64 rows | u32 dim | rows*dim f32
//! ```
//!
//! Row `i` of the matrix belongs to line `i` of the passage file; the two are
//! joined by [`bind`].

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DREM";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 1 + 8 + 4;

/// Tolerance on `| ||row|| - 1 |` for a row to count as unit-norm.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassageRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<BTreeMap<String, String>>,
}

/// Dense row-major `rows x dim` matrix of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Builds a matrix from raw row-major data. The `normalized` flag is
    /// checked against the data.
    pub fn new(rows: usize, dim: usize, data: Vec<f32>, normalized: bool) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDim);
        }
        if data.len() != rows * dim {
            return Err(Error::InvalidArgument(format!(
                "matrix data has {} values, expected {rows} x {dim}",
                data.len()
            )));
        }
        let matrix = Self {
            rows,
            dim,
            data,
            normalized,
        };
        if normalized {
            matrix.check_unit_rows()?;
        }
        Ok(matrix)
    }

    /// Builds an unnormalized matrix from a list of equal-length rows.
    pub fn from_rows(rows: &[Vec<f32>], dim: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, data, false)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    fn check_unit_rows(&self) -> Result<()> {
        for (row, values) in self.iter_rows().enumerate() {
            let norm = l2_norm(values);
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::NotUnitNorm { row, norm });
            }
        }
        Ok(())
    }
}

pub(crate) fn l2_norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

/// Passages joined positionally with their embedding rows.
#[derive(Debug, Clone)]
pub struct DataCollection {
    passages: Vec<PassageRecord>,
    embeddings: EmbeddingMatrix,
}

impl DataCollection {
    pub fn passages(&self) -> &[PassageRecord] {
        &self.passages
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        self.embeddings.row(row)
    }
}

pub fn bind(passages: Vec<PassageRecord>, embeddings: EmbeddingMatrix) -> Result<DataCollection> {
    if passages.len() != embeddings.rows {
        return Err(Error::CountMismatch {
            passages: passages.len(),
            rows: embeddings.rows,
        });
    }
    Ok(DataCollection {
        passages,
        embeddings,
    })
}

pub fn load_passages(path: impl AsRef<Path>) -> Result<Vec<PassageRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_passages(&text, path)
}

pub(crate) fn parse_passages(text: &str, path: &Path) -> Result<Vec<PassageRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let record: PassageRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if record.id.is_empty() {
            return Err(Error::EmptyField {
                line: line_no,
                what: "id",
            });
        }
        if record.text.is_empty() {
            return Err(Error::EmptyField {
                line: line_no,
                what: "text",
            });
        }
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                id: record.id,
                line: line_no,
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_passages(passages: &[PassageRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in passages {
        let line = serde_json::to_string(p).expect("passage serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn encode_embeddings(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + matrix.data.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(u8::from(matrix.normalized));
    buf.extend_from_slice(&(matrix.rows as u64).to_le_bytes());
    buf.extend_from_slice(&(matrix.dim as u32).to_le_bytes());
    for v in &matrix.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::PayloadLength {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let normalized = match bytes[8] {
        0 => false,
        1 => true,
        other => {
            return Err(Error::InvalidArgument(format!(
                "normalized flag must be 0 or 1, found {other}"
            )))
        }
    };
    let rows = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
    let dim = u32::from_le_bytes(bytes[17..21].try_into().unwrap());
    if dim == 0 {
        return Err(Error::ZeroDim);
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(u64::from(dim))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::InvalidArgument(format!("header size {rows} x {dim} overflows")))?;
    if payload.len() as u64 != expected {
        return Err(Error::PayloadLength {
            expected,
            actual: payload.len() as u64,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(rows as usize, dim as usize, data, normalized)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_embeddings(matrix)).map_err(|e| Error::io(path, e))
}

/// Divides every row by its L2 norm and marks the matrix normalized.
pub fn normalize_rows(matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(matrix.data.len());
    for (row, values) in matrix.iter_rows().enumerate() {
        let norm = l2_norm(values);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm { row });
        }
        data.extend(values.iter().map(|&x| (f64::from(x) / norm) as f32));
    }
    Ok(EmbeddingMatrix {
        rows: matrix.rows,
        dim: matrix.dim,
        data,
        normalized: true,
    })
}

/// Returns `v / ||v||`, or an error naming `row` when the norm is zero.
pub fn normalize_vector(v: &[f32], row: usize) -> Result<Vec<f32>> {
    let norm = l2_norm(v);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm { row });
    }
    Ok(v.iter().map(|&x| (f64::from(x) / norm) as f32).collect())
}
