//! `GDDS` dataset files.
//!
//! Layout, integers `u32` little-endian: magic `GDDS`, version, manifest
//! length and UTF-8 JSON manifest, item count, then per item the label, `T`,
//! `N` and `T·N·N` little-endian `f64` values (row-major, frame after frame);
//! a CRC32 of everything before it closes the file.

use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::fsutil::{check_crc, write_atomic, Cursor};
use crate::sequence::{LabeledSequence, SpdSequence};
use crate::spd::{Mat, SpdMatrix};

pub const DATASET_MAGIC: &[u8; 4] = b"GDDS";
pub const DATASET_VERSION: u32 = 1;

/// Description of how a dataset was built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub class_names: Vec<String>,
    /// Matrix size `N`.
    pub dim: usize,
    /// Longest sequence length.
    pub length: usize,
    pub provenance: String,
    /// Construction parameters (window, shrinkage, ε, generator settings…).
    pub construction: serde_json::Value,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub items: Vec<LabeledSequence>,
    pub manifest: Manifest,
}

/// What a header scan reveals without reading the matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub manifest: Manifest,
    pub item_count: usize,
}

impl LabeledDataset {
    pub fn new(items: Vec<LabeledSequence>, manifest: Manifest) -> Result<Self> {
        let q = manifest.class_names.len();
        for (i, it) in items.iter().enumerate() {
            if it.seq.dim() != manifest.dim {
                return Err(GeoError::dim(format!("item {i} has size {}, manifest says {}", it.seq.dim(), manifest.dim)));
            }
            if it.label >= q {
                return Err(GeoError::param(format!("item {i} has label {} with {q} classes", it.label)));
            }
        }
        Ok(LabeledDataset { items, manifest })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.manifest.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.label).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(DATASET_MAGIC);
        buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        buf.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        buf.extend_from_slice(&manifest);
        buf.extend_from_slice(&(self.items.len() as u32).to_le_bytes());
        for it in &self.items {
            buf.extend_from_slice(&(it.label as u32).to_le_bytes());
            buf.extend_from_slice(&(it.seq.len() as u32).to_le_bytes());
            buf.extend_from_slice(&(it.seq.dim() as u32).to_le_bytes());
            for m in &it.seq {
                let m = m.as_matrix();
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        buf.extend_from_slice(&m[(i, j)].to_le_bytes());
                    }
                }
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != DATASET_MAGIC {
            return Err(GeoError::Format("not a GDDS dataset".into()));
        }
        let body = check_crc(bytes, "dataset")?;
        let mut c = Cursor::new(body, "dataset");
        let header = read_header(&mut c)?;
        let mut items = Vec::with_capacity(header.item_count.min(1 << 20));
        for k in 0..header.item_count {
            let label = c.u32()? as usize;
            let t = c.u32()? as usize;
            let n = c.u32()? as usize;
            if t == 0 || n == 0 || t.saturating_mul(n).saturating_mul(n) > c.remaining() / 8 {
                return Err(GeoError::Format(format!("item {k} has an impossible shape {t}x{n}x{n}")));
            }
            let mut frames = Vec::with_capacity(t);
            for f in 0..t {
                let mut m = Mat::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] = c.f64()?;
                    }
                }
                frames.push(SpdMatrix::new(m).map_err(|e| GeoError::Format(format!("item {k} frame {f}: {e}")))?);
            }
            items.push(LabeledSequence { seq: SpdSequence::new(frames)?, label });
        }
        if c.remaining() != 0 {
            return Err(GeoError::Format("trailing bytes after the last item".into()));
        }
        Self::new(items, header.manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn read_header(c: &mut Cursor<'_>) -> Result<DatasetHeader> {
    let magic = c.take(4)?;
    if magic != DATASET_MAGIC {
        return Err(GeoError::Format("not a GDDS dataset".into()));
    }
    let version = c.u32()?;
    if version != DATASET_VERSION {
        return Err(GeoError::Format(format!("unsupported dataset version {version}")));
    }
    let len = c.u32()? as usize;
    let manifest: Manifest = serde_json::from_slice(c.take(len)?)?;
    let item_count = c.u32()? as usize;
    Ok(DatasetHeader { version, manifest, item_count })
}

/// Reads only the magic, version, manifest and item count.
pub fn read_dataset_header(path: &Path) -> Result<DatasetHeader> {
    let mut f = BufReader::new(std::fs::File::open(path)?);
    let mut fixed = [0u8; 12];
    f.read_exact(&mut fixed).map_err(|_| GeoError::Format("truncated dataset header".into()))?;
    let len = u32::from_le_bytes(fixed[8..12].try_into().expect("4 bytes")) as usize;
    let mut rest = vec![0u8; len + 4];
    f.read_exact(&mut rest).map_err(|_| GeoError::Format("truncated dataset header".into()))?;
    let mut head = fixed.to_vec();
    head.extend_from_slice(&rest);
    read_header(&mut Cursor::new(&head, "dataset header"))
}
