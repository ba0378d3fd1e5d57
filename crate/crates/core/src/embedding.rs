//! Dense embedding tables.
//!
//! An [`EmbeddingTable`] holds `count` vectors of dimension `dim` in a single
//! column-major buffer; column `j` is the embedding of node `j`. The
//! `normalized` flag records whether columns are unit vectors, which callers
//! rely on when interpreting inner products as cosines.
//!
//! The binary file format is a fixed header (magic, dim, count, normalized)
//! followed by the matrix as row-major little-endian f64, so files are
//! readable with a one-line reshape in most numeric environments. A
//! space-separated text export (one vector per line) is provided for
//! interoperability.

use std::io::{Read, Write};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HRETEMB1";

/// Unit-norm tolerance: columns of a table flagged `normalized` satisfy
/// `|norm - 1| <= NORM_TOL`.
pub const NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    count: usize,
    /// Column-major: column `j` occupies `values[j*dim .. (j+1)*dim]`.
    values: Vec<f64>,
    normalized: bool,
}

impl EmbeddingTable {
    pub fn zeros(dim: usize, count: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "embedding dimension must be >= 1".to_string(),
            });
        }
        if count == 0 {
            return Err(Error::InvalidParameter {
                name: "count",
                reason: "table must hold at least one column".to_string(),
            });
        }
        Ok(Self {
            dim,
            count,
            values: vec![0.0; dim * count],
            normalized: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Marks the table as holding unit columns. The caller asserts the
    /// property; [`Self::check_unit_norms`] verifies it.
    pub fn set_normalized(&mut self, normalized: bool) {
        self.normalized = normalized;
    }

    /// Scales every column to unit norm and sets the flag. A zero-norm
    /// column cannot be scaled and is reported by index.
    pub fn normalize_columns(&mut self) -> Result<()> {
        for j in 0..self.count {
            let norm = column_norm(self.column(j));
            if norm == 0.0 {
                return Err(Error::ZeroNormColumn { column: j });
            }
            for v in self.column_mut(j) {
                *v /= norm;
            }
        }
        self.normalized = true;
        Ok(())
    }

    /// A copy with unit columns; the original is untouched.
    pub fn normalized_copy(&self) -> Result<Self> {
        let mut copy = self.clone();
        copy.normalize_columns()?;
        Ok(copy)
    }

    /// True when every column norm is within [`NORM_TOL`] of 1.
    pub fn check_unit_norms(&self) -> bool {
        (0..self.count).all(|j| (column_norm(self.column(j)) - 1.0).abs() <= NORM_TOL)
    }

    /// Index of the first column containing a non-finite entry, if any.
    pub fn first_non_finite_column(&self) -> Option<usize> {
        (0..self.count).find(|&j| self.column(j).iter().any(|v| !v.is_finite()))
    }

    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(self.count as u64).to_le_bytes())?;
        w.write_all(&[self.normalized as u8])?;
        // Row-major on disk, column-major in memory.
        let mut buf = Vec::with_capacity(self.count * 8);
        for r in 0..self.dim {
            buf.clear();
            for c in 0..self.count {
                buf.extend_from_slice(&self.values[c * self.dim + r].to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::BadMagic {
                expected: "HRETEMB1",
            });
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let dim = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let count = u64::from_le_bytes(u64buf) as usize;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        if flag[0] > 1 {
            return Err(Error::CorruptFile {
                reason: format!("normalized flag byte {}", flag[0]),
            });
        }
        let cells = dim.checked_mul(count).ok_or_else(|| Error::CorruptFile {
            reason: format!("dim {dim} x count {count} overflows"),
        })?;
        if dim == 0 || count == 0 || cells > MAX_CELLS {
            return Err(Error::CorruptFile {
                reason: format!("implausible shape dim {dim} x count {count}"),
            });
        }
        let mut table = Self::zeros(dim, count)?;
        table.normalized = flag[0] == 1;
        let mut row = vec![0u8; count * 8];
        for r_idx in 0..dim {
            r.read_exact(&mut row)?;
            for c in 0..count {
                let bytes: [u8; 8] = row[c * 8..(c + 1) * 8].try_into().expect("8-byte chunk");
                table.values[c * dim + r_idx] = f64::from_le_bytes(bytes);
            }
        }
        Ok(table)
    }

    /// One vector per line, entries space-separated, full round-trip
    /// precision.
    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        let mut line = String::new();
        for c in 0..self.count {
            line.clear();
            for (i, v) in self.column(c).iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&format!("{v:?}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Euclidean norm of one column.
pub fn column_norm(col: &[f64]) -> f64 {
    col.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Inner product of two equal-length vectors.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const MAX_CELLS: usize = 1 << 33;
