//! Single-file artifact container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PKIT" | version: u32 | manifest_len: u64 | manifest (JSON, UTF-8)
//! payload region, repeated per array in name order:
//!     name_len: u32 | name | dtype: u8 | rank: u32 | dims: u64 × rank
//!     | byte_len: u64 | raw little-endian scalars
//! crc32(payload region): u32
//! ```
//!
//! The manifest carries free-form typed metadata under `meta` and the dtype
//! and shape of every payload array under `arrays`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{shape_mismatch, Error, Result};

pub const MAGIC: &[u8; 4] = b"PKIT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
    I32,
    I64,
    U32,
    U64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
            Dtype::I32 => 3,
            Dtype::I64 => 4,
            Dtype::U32 => 5,
            Dtype::U64 => 6,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => Dtype::F32,
            2 => Dtype::F64,
            3 => Dtype::I32,
            4 => Dtype::I64,
            5 => Dtype::U32,
            6 => Dtype::U64,
            _ => return None,
        })
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 | Dtype::I32 | Dtype::U32 => 4,
            Dtype::F64 | Dtype::I64 | Dtype::U64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I32(Vec<i32>),
    I64(Vec<i64>),
    U32(Vec<u32>),
    U64(Vec<u64>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F32(_) => Dtype::F32,
            ArrayData::F64(_) => Dtype::F64,
            ArrayData::I32(_) => Dtype::I32,
            ArrayData::I64(_) => Dtype::I64,
            ArrayData::U32(_) => Dtype::U32,
            ArrayData::U64(_) => Dtype::U64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::I32(v) => v.len(),
            ArrayData::I64(v) => v.len(),
            ArrayData::U32(v) => v.len(),
            ArrayData::U64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            ArrayData::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::F64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::I32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::I64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::U32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::U64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    fn read_le(dtype: Dtype, bytes: &[u8]) -> Self {
        fn conv<const N: usize, T>(bytes: &[u8], f: fn([u8; N]) -> T) -> Vec<T> {
            bytes
                .chunks_exact(N)
                .map(|c| f(c.try_into().expect("chunk width")))
                .collect()
        }
        match dtype {
            Dtype::F32 => ArrayData::F32(conv(bytes, f32::from_le_bytes)),
            Dtype::F64 => ArrayData::F64(conv(bytes, f64::from_le_bytes)),
            Dtype::I32 => ArrayData::I32(conv(bytes, i32::from_le_bytes)),
            Dtype::I64 => ArrayData::I64(conv(bytes, i64::from_le_bytes)),
            Dtype::U32 => ArrayData::U32(conv(bytes, u32::from_le_bytes)),
            Dtype::U64 => ArrayData::U64(conv(bytes, u64::from_le_bytes)),
        }
    }
}

/// A shaped payload array.
#[derive(Debug, Clone, PartialEq)]
pub struct NdArray {
    shape: Vec<usize>,
    data: ArrayData,
}

impl NdArray {
    pub fn new(shape: Vec<usize>, data: ArrayData) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(shape_mismatch(
                format!("{expected} elements for shape {shape:?}"),
                data.len(),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(shape, ArrayData::F64(data))
    }

    pub fn u64(shape: Vec<usize>, data: Vec<u64>) -> Result<Self> {
        Self::new(shape, ArrayData::U64(data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &ArrayData {
        &self.data
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match &self.data {
            ArrayData::F64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u64(&self) -> Option<&[u64]> {
        match &self.data {
            ArrayData::U64(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArraySpec {
    dtype: Dtype,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    meta: BTreeMap<String, Value>,
    arrays: BTreeMap<String, ArraySpec>,
}

/// Typed metadata plus named arrays, persisted bit-exactly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArtifactBundle {
    meta: BTreeMap<String, Value>,
    arrays: BTreeMap<String, NdArray>,
}

impl ArtifactBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<Value>) -> &mut Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn meta(&self) -> &BTreeMap<String, Value> {
        &self.meta
    }

    pub fn meta_value(&self, key: &str) -> Result<&Value> {
        self.meta
            .get(key)
            .ok_or_else(|| Error::Format(format!("manifest is missing `{key}`")))
    }

    pub fn meta_u64(&self, key: &str) -> Result<u64> {
        self.meta_value(key)?.as_u64().ok_or_else(|| {
            Error::Format(format!("manifest key `{key}` is not an unsigned integer"))
        })
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        Ok(self.meta_u64(key)? as usize)
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        self.meta_value(key)?
            .as_f64()
            .ok_or_else(|| Error::Format(format!("manifest key `{key}` is not a number")))
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta_value(key)?
            .as_str()
            .ok_or_else(|| Error::Format(format!("manifest key `{key}` is not a string")))
    }

    /// Fails unless the bundle's `kind` entry equals `kind`.
    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        let found = self.meta_str("kind")?;
        if found != kind {
            return Err(Error::Format(format!(
                "expected a `{kind}` bundle, found `{found}`"
            )));
        }
        Ok(())
    }

    pub fn insert(&mut self, name: impl Into<String>, array: NdArray) -> &mut Self {
        self.arrays.insert(name.into(), array);
        self
    }

    pub fn arrays(&self) -> &BTreeMap<String, NdArray> {
        &self.arrays
    }

    pub fn array(&self, name: &str) -> Result<&NdArray> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::Format(format!("bundle has no array `{name}`")))
    }

    pub fn f64_array(&self, name: &str) -> Result<(&[usize], &[f64])> {
        let a = self.array(name)?;
        let data = a
            .as_f64()
            .ok_or_else(|| Error::Format(format!("array `{name}` is not f64")))?;
        Ok((a.shape(), data))
    }

    pub fn u64_array(&self, name: &str) -> Result<(&[usize], &[u64])> {
        let a = self.array(name)?;
        let data = a
            .as_u64()
            .ok_or_else(|| Error::Format(format!("array `{name}` is not u64")))?;
        Ok((a.shape(), data))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(k, a)| {
                    (
                        k.clone(),
                        ArraySpec {
                            dtype: a.dtype(),
                            shape: a.shape.clone(),
                        },
                    )
                })
                .collect(),
        };
        let manifest = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| Error::Format(format!("manifest encoding failed: {e}")))?;

        let mut payload = Vec::new();
        for (name, array) in &self.arrays {
            payload.extend_from_slice(&(name.len() as u32).to_le_bytes());
            payload.extend_from_slice(name.as_bytes());
            payload.push(array.dtype().tag());
            payload.extend_from_slice(&(array.shape.len() as u32).to_le_bytes());
            for &d in &array.shape {
                payload.extend_from_slice(&(d as u64).to_le_bytes());
            }
            let byte_len = array.data.len() * array.dtype().width();
            payload.extend_from_slice(&(byte_len as u64).to_le_bytes());
            array.data.write_le(&mut payload);
        }

        let mut out = Vec::with_capacity(20 + manifest.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("missing PKIT magic".into()));
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::UnknownVersion(version));
        }
        let manifest_len = cur.u64()? as usize;
        let manifest: Manifest = serde_json::from_slice(cur.take(manifest_len)?)
            .map_err(|e| Error::Format(format!("manifest decoding failed: {e}")))?;

        let payload_start = cur.pos;
        if bytes.len() < payload_start + 4 {
            return Err(Error::Parse {
                offset: bytes.len() as u64,
                reason: "missing checksum trailer".into(),
            });
        }
        let payload_end = bytes.len() - 4;
        let payload = &bytes[payload_start..payload_end];
        let stored = u32::from_le_bytes(bytes[payload_end..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }

        let mut cur = Cursor {
            bytes: &bytes[..payload_end],
            pos: payload_start,
        };
        let mut arrays = BTreeMap::new();
        while cur.pos < payload_end {
            let name_len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| Error::Format("array name is not UTF-8".into()))?
                .to_owned();
            let tag = cur.take(1)?[0];
            let dtype = Dtype::from_tag(tag)
                .ok_or_else(|| Error::Format(format!("unknown dtype tag {tag}")))?;
            let rank = cur.u32()? as usize;
            let shape = (0..rank)
                .map(|_| cur.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let byte_len = cur.u64()? as usize;
            let elements: usize = shape.iter().product();
            if elements * dtype.width() != byte_len {
                return Err(shape_mismatch(
                    format!(
                        "{} bytes for `{name}` of shape {shape:?}",
                        elements * dtype.width()
                    ),
                    byte_len,
                ));
            }
            let data = ArrayData::read_le(dtype, cur.take(byte_len)?);
            match manifest.arrays.get(&name) {
                Some(spec) if spec.dtype == dtype && spec.shape == shape => {}
                Some(spec) => {
                    return Err(shape_mismatch(
                        format!("manifest {:?} {:?} for `{name}`", spec.dtype, spec.shape),
                        format!("payload {dtype:?} {shape:?}"),
                    ))
                }
                None => {
                    return Err(Error::Format(format!(
                        "array `{name}` is not declared in the manifest"
                    )))
                }
            }
            arrays.insert(name, NdArray { shape, data });
        }
        if let Some(missing) = manifest.arrays.keys().find(|k| !arrays.contains_key(*k)) {
            return Err(Error::Format(format!(
                "manifest declares missing array `{missing}`"
            )));
        }
        Ok(Self {
            meta: manifest.meta,
            arrays,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Parse {
                offset: self.pos as u64,
                reason: format!("need {n} bytes, {} remain", self.bytes.len() - self.pos),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn save_bundle(bundle: &ArtifactBundle, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, bundle.to_bytes()?)?;
    Ok(())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ArtifactBundle> {
    ArtifactBundle::from_bytes(&fs::read(path)?)
}
