//! Append-only blob files. Every blob starts with a 16-byte header:
//! magic `MRDB`, version `u16`, dtype `u8`, rank `u8`, `rank` dims as `u32`, zero padding.
//! All values are little-endian.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MRDB";
pub const BLOB_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
const MAX_RANK: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum DType {
    U8 = 0,
    U32 = 1,
    F32 = 2,
    F64 = 3,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::U32 | DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => DType::U8,
            1 => DType::U32,
            2 => DType::F32,
            3 => DType::F64,
            _ => return Err(Error::Format(format!("unknown dtype code {v}"))),
        })
    }
}

/// Location of one blob (header included) inside a blob file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRef {
    pub file: String,
    pub offset: u64,
    pub len: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlobHeader {
    pub dtype: DType,
    pub dims: Vec<u32>,
}

impl BlobHeader {
    pub fn n_elements(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        assert!(self.dims.len() <= MAX_RANK);
        let mut h = [0u8; HEADER_LEN];
        h[..4].copy_from_slice(MAGIC);
        h[4..6].copy_from_slice(&BLOB_VERSION.to_le_bytes());
        h[6] = self.dtype as u8;
        h[7] = self.dims.len() as u8;
        for (i, d) in self.dims.iter().enumerate() {
            h[8 + 4 * i..12 + 4 * i].copy_from_slice(&d.to_le_bytes());
        }
        h
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing MRDB blob header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != BLOB_VERSION {
            return Err(Error::Format(format!("unsupported blob version {version}")));
        }
        let dtype = DType::from_u8(bytes[6])?;
        let rank = bytes[7] as usize;
        if rank > MAX_RANK {
            return Err(Error::Format(format!("blob rank {rank} exceeds {MAX_RANK}")));
        }
        let dims = (0..rank)
            .map(|i| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()))
            .collect();
        Ok(BlobHeader { dtype, dims })
    }
}

/// In-memory blob files, flushed to disk at the end of a build.
#[derive(Default)]
pub struct BlobWriter {
    files: BTreeMap<String, Vec<u8>>,
}

impl BlobWriter {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, file: &str, header: BlobHeader, payload: &[u8]) -> BlobRef {
        debug_assert_eq!(payload.len(), header.n_elements() * header.dtype.size());
        let buf = self.files.entry(file.to_string()).or_default();
        let offset = buf.len() as u64;
        buf.extend_from_slice(&header.encode());
        buf.extend_from_slice(payload);
        BlobRef { file: file.to_string(), offset, len: (HEADER_LEN + payload.len()) as u64 }
    }

    pub fn push_u8(&mut self, file: &str, dims: &[u32], data: &[u8]) -> BlobRef {
        self.push(file, BlobHeader { dtype: DType::U8, dims: dims.to_vec() }, data)
    }

    pub fn push_u32(&mut self, file: &str, dims: &[u32], data: &[u32]) -> BlobRef {
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.push(file, BlobHeader { dtype: DType::U32, dims: dims.to_vec() }, &bytes)
    }

    pub fn push_f64(&mut self, file: &str, dims: &[u32], data: &[f64]) -> BlobRef {
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.push(file, BlobHeader { dtype: DType::F64, dims: dims.to_vec() }, &bytes)
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }

    pub fn file_names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }
}

/// Blob files loaded into memory for reading.
#[derive(Default)]
pub struct BlobReader {
    files: BTreeMap<String, Vec<u8>>,
}

impl BlobReader {
    pub fn open(dir: &Path, names: &[&str]) -> Result<Self> {
        let mut files = BTreeMap::new();
        for &n in names {
            let p = dir.join(n);
            if p.exists() {
                files.insert(n.to_string(), std::fs::read(p)?);
            }
        }
        Ok(BlobReader { files })
    }

    fn raw(&self, r: &BlobRef) -> Result<(BlobHeader, &[u8])> {
        let file = self.files.get(&r.file).ok_or_else(|| Error::Format(format!("missing blob file {}", r.file)))?;
        let (start, end) = (r.offset as usize, (r.offset + r.len) as usize);
        if end > file.len() || r.len < HEADER_LEN as u64 {
            return Err(Error::Format(format!("blob at {}+{} overruns {} ({} bytes)", r.offset, r.len, r.file, file.len())));
        }
        let bytes = &file[start..end];
        let header = BlobHeader::decode(bytes)?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != header.n_elements() * header.dtype.size() {
            return Err(Error::Format(format!("blob at {}+{} in {} has inconsistent length", r.offset, r.len, r.file)));
        }
        Ok((header, payload))
    }

    pub fn check(&self, r: &BlobRef) -> Result<BlobHeader> {
        self.raw(r).map(|(h, _)| h)
    }

    fn typed(&self, r: &BlobRef, dtype: DType) -> Result<(BlobHeader, &[u8])> {
        let (h, p) = self.raw(r)?;
        if h.dtype != dtype {
            return Err(Error::Format(format!("blob in {} has dtype {:?}, expected {dtype:?}", r.file, h.dtype)));
        }
        Ok((h, p))
    }

    pub fn u8s(&self, r: &BlobRef) -> Result<(Vec<u32>, Vec<u8>)> {
        let (h, p) = self.typed(r, DType::U8)?;
        Ok((h.dims, p.to_vec()))
    }

    pub fn u32s(&self, r: &BlobRef) -> Result<(Vec<u32>, Vec<u32>)> {
        let (h, p) = self.typed(r, DType::U32)?;
        Ok((h.dims, p.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect()))
    }

    pub fn f64s(&self, r: &BlobRef) -> Result<(Vec<u32>, Vec<f64>)> {
        let (h, p) = self.typed(r, DType::F64)?;
        Ok((h.dims, p.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let h = BlobHeader { dtype: DType::F64, dims: vec![3, 7] };
        let b = h.encode();
        assert_eq!(&b[..4], b"MRDB");
        assert_eq!(b[4..6], [1, 0]);
        assert_eq!(b[6], 3);
        assert_eq!(b[7], 2);
        assert_eq!(b[8..12], [3, 0, 0, 0]);
        assert_eq!(b[12..16], [7, 0, 0, 0]);
        assert_eq!(BlobHeader::decode(&b).unwrap(), h);
        let one = BlobHeader { dtype: DType::U8, dims: vec![512] }.encode();
        assert_eq!(one[12..16], [0; 4]);
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = BlobWriter::new();
        let a = w.push_f64("x.bin", &[2], &[1.5, -2.0]);
        let b = w.push_u32("x.bin", &[1, 3], &[1, 2, 3]);
        let c = w.push_u8("y.bin", &[2], &[9, 8]);
        w.write_to(dir.path()).unwrap();
        let r = BlobReader::open(dir.path(), &["x.bin", "y.bin"]).unwrap();
        assert_eq!(r.f64s(&a).unwrap(), (vec![2], vec![1.5, -2.0]));
        assert_eq!(r.u32s(&b).unwrap(), (vec![1, 3], vec![1, 2, 3]));
        assert_eq!(r.u8s(&c).unwrap(), (vec![2], vec![9, 8]));
        assert_eq!(b.offset, 32);
        assert!(r.u8s(&a).is_err());
        assert!(r.f64s(&BlobRef { len: 99, ..a }).is_err());
    }
}
