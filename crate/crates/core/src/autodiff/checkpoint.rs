//! `.m2m` parameter files: one line of JSON header, a newline, then the
//! concatenated little-endian `f32` data of every tensor.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

const FORMAT: &str = "m2m-params";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 4],
    /// Byte offset into the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    pub blob_bytes: usize,
}

/// Named tensors plus free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape(),
                offset,
            });
            offset += 4 * t.numel();
        }
        let header = CheckpointHeader {
            format: FORMAT.into(),
            version: VERSION,
            meta: self.meta.clone(),
            tensors: entries,
            blob_bytes: offset,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let mut blob = Vec::with_capacity(offset);
        for (_, t) in &self.tensors {
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&blob)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        let header: CheckpointHeader = serde_json::from_slice(&line)?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{}",
                header.format, header.version
            )));
        }
        let mut blob = Vec::new();
        r.read_to_end(&mut blob)?;
        if blob.len() != header.blob_bytes {
            return Err(Error::Data(format!(
                "checkpoint blob has {} bytes, header says {}",
                blob.len(),
                header.blob_bytes
            )));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let bytes = blob
                .get(e.offset..e.offset + 4 * n)
                .ok_or_else(|| Error::Data(format!("tensor `{}` runs past the blob", e.name)))?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((e.name, Tensor::from_vec(e.shape, data)?));
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
