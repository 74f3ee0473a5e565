//! Embedding matrices and their on-disk format.
//!
//! Binary layout, little endian: the magic `MAEMB001`, row count (u64),
//! dimension (u64), then per row a 32-byte SHA-256 of the input text followed
//! by `dim` f64 values. A CSV manifest lists `row,text_sha256` alongside.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MAEMB001";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
    input_hashes: Vec<String>,
}

pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl EmbeddingMatrix {
    pub fn new(rows: Vec<Vec<f64>>, input_hashes: Vec<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("embedding matrix".into()));
        }
        if rows.len() != input_hashes.len() {
            return Err(Error::invalid("one input hash per embedding row is required"));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::invalid("zero-dimensional embedding"));
        }
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::invalid(format!("row {i} has dim {} not {dim}", r.len())));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("row {i} has a non-finite value")));
            }
            values.extend_from_slice(r);
        }
        Ok(EmbeddingMatrix {
            rows: rows.len(),
            dim,
            values,
            input_hashes,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn input_hashes(&self) -> &[String] {
        &self.input_hashes
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Binary encoding described in the module docs.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::with_capacity(24 + self.rows * (32 + 8 * self.dim));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.rows as u64).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for i in 0..self.rows {
            let h = hex::decode(&self.input_hashes[i])
                .ok()
                .filter(|h| h.len() == 32)
                .ok_or_else(|| Error::invalid(format!("row {i} hash is not a SHA-256 hex digest")))?;
            buf.extend_from_slice(&h);
            for v in self.row(i) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn manifest_csv(&self) -> Vec<u8> {
        let mut out = String::from("row,text_sha256\n");
        for (i, h) in self.input_hashes.iter().enumerate() {
            out.push_str(&format!("{i},{h}\n"));
        }
        out.into_bytes()
    }

    pub fn write(&self, bin_path: &Path, manifest_path: &Path) -> Result<()> {
        fs::write(bin_path, self.to_bytes()?).map_err(|e| Error::io(bin_path, e))?;
        fs::write(manifest_path, self.manifest_csv()).map_err(|e| Error::io(manifest_path, e))
    }

    pub fn read(bin_path: &Path) -> Result<Self> {
        let bytes = fs::read(bin_path).map_err(|e| Error::io(bin_path, e))?;
        let bad = |m: &str| Error::Parse {
            path: bin_path.display().to_string(),
            row: 0,
            message: m.to_string(),
        };
        if bytes.len() < 24 || &bytes[..8] != MAGIC {
            return Err(bad("not an embedding matrix file"));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes")) as usize;
        let (rows, dim) = (u64_at(8), u64_at(16));
        let stride = 32 + 8 * dim;
        if dim == 0 || bytes.len() != 24 + rows * stride {
            return Err(bad("file size does not match header"));
        }
        let mut out_rows = Vec::with_capacity(rows);
        let mut hashes = Vec::with_capacity(rows);
        for i in 0..rows {
            let base = 24 + i * stride;
            hashes.push(hex::encode(&bytes[base..base + 32]));
            out_rows.push(
                (0..dim)
                    .map(|j| {
                        let o = base + 32 + 8 * j;
                        f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"))
                    })
                    .collect(),
            );
        }
        EmbeddingMatrix::new(out_rows, hashes)
    }
}
