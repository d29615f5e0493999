//! On-disk containers.
//!
//! Dense tensor file (echo profiles and feature matrices), all little-endian:
//!
//! ```text
//! magic         4 bytes  "DKWT"
//! version       u32      1
//! ndim          u32
//! dims          ndim × u64
//! window_min    i64      first retained lag (0 for feature matrices)
//! window_max    i64      last retained lag (n_coeffs-1 for feature matrices)
//! frame_period  f64      seconds between frames
//! values        Π dims × f32, row-major
//! ```
//!
//! Weight bundle (models and fusion parameters):
//!
//! ```text
//! magic         4 bytes  "DKWB"
//! version       u32      1
//! meta_len      u64
//! meta          meta_len bytes of UTF-8 JSON
//! blob          f32 values, tensors concatenated in metadata order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};

const TENSOR_MAGIC: &[u8; 4] = b"DKWT";
const BUNDLE_MAGIC: &[u8; 4] = b"DKWB";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorHeader {
    pub dims: Vec<usize>,
    pub window: (i64, i64),
    pub frame_period: f64,
}

pub fn write_tensor(
    path: impl AsRef<Path>,
    header: &TensorHeader,
    values: impl Iterator<Item = f64>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(TENSOR_MAGIC)?;
    put(&VERSION.to_le_bytes())?;
    put(&(header.dims.len() as u32).to_le_bytes())?;
    for &d in &header.dims {
        put(&(d as u64).to_le_bytes())?;
    }
    put(&header.window.0.to_le_bytes())?;
    put(&header.window.1.to_le_bytes())?;
    put(&header.frame_period.to_le_bytes())?;
    let expected: usize = header.dims.iter().product();
    let mut count = 0;
    for v in values {
        put(&(v as f32).to_le_bytes())?;
        count += 1;
    }
    if count != expected {
        return Err(Error::Container(format!(
            "wrote {count} values for dims {:?}",
            header.dims
        )));
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Container(format!(
                "unexpected end of data at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| {
            Error::Container("tensor size overflows".into())
        })?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

fn check_magic(c: &mut Cursor<'_>, magic: &[u8; 4]) -> Result<()> {
    if c.take(4)? != magic {
        return Err(Error::Container(format!(
            "bad magic, expected {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<(TensorHeader, Vec<f64>)> {
    let bytes = read_all(path.as_ref())?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    check_magic(&mut c, TENSOR_MAGIC)?;
    let ndim = c.u32()? as usize;
    if ndim > 8 {
        return Err(Error::Container(format!("implausible rank {ndim}")));
    }
    let dims = (0..ndim)
        .map(|_| c.u64().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let window = (c.i64()?, c.i64()?);
    let frame_period = c.f64()?;
    let n = dims.iter().product();
    let values = c.f32s(n)?;
    if c.pos != bytes.len() {
        return Err(Error::Container("trailing bytes after tensor".into()));
    }
    Ok((
        TensorHeader {
            dims,
            window,
            frame_period,
        },
        values,
    ))
}

/// One named tensor inside a weight bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleMeta<M> {
    format_version: u32,
    kind: String,
    meta: M,
    tensors: Vec<TensorEntry>,
}

/// Writes JSON metadata followed by the concatenated tensors as f32.
pub fn write_bundle<M: Serialize>(
    path: impl AsRef<Path>,
    kind: &str,
    meta: &M,
    tensors: &[(TensorEntry, &[f64])],
) -> Result<()> {
    let path = path.as_ref();
    for (entry, data) in tensors {
        let n: usize = entry.shape.iter().product();
        if n != data.len() {
            return Err(Error::Container(format!(
                "tensor {} has {} values for shape {:?}",
                entry.name,
                data.len(),
                entry.shape
            )));
        }
    }
    let header = BundleMeta {
        format_version: VERSION,
        kind: kind.to_string(),
        meta,
        tensors: tensors.iter().map(|(e, _)| e.clone()).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(BUNDLE_MAGIC)?;
    put(&VERSION.to_le_bytes())?;
    put(&(json.len() as u64).to_le_bytes())?;
    put(&json)?;
    for (_, data) in tensors {
        for &v in data.iter() {
            put(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub type BundleContents<M> = (M, Vec<(TensorEntry, Vec<f64>)>);

pub fn read_bundle<M: DeserializeOwned>(
    path: impl AsRef<Path>,
    kind: &str,
) -> Result<BundleContents<M>> {
    let bytes = read_all(path.as_ref())?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    check_magic(&mut c, BUNDLE_MAGIC)?;
    let len = c.u64()? as usize;
    let json = c.take(len)?;
    let header: BundleMeta<M> = serde_json::from_slice(json)?;
    if header.kind != kind {
        return Err(Error::Container(format!(
            "expected a `{kind}` bundle, found `{}`",
            header.kind
        )));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let n = entry.shape.iter().product();
        let data = c.f32s(n)?;
        tensors.push((entry, data));
    }
    if c.pos != bytes.len() {
        return Err(Error::Container("trailing bytes after bundle".into()));
    }
    Ok((header.meta, tensors))
}
