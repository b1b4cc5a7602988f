//! GDSC descriptor file.
//!
//! ```text
//! magic      "GDSC"
//! version    u32 LE (= 1)
//! dtype      u8     (0 = float32 LE)
//! dim        u32 LE
//! count      u64 LE
//! meta_len   u32 LE, then meta_len bytes of UTF-8 `key=value\n` lines
//! records    count × { id_len u32 LE, id UTF-8, dim × f32 LE }
//! ```
//!
//! Metadata lines are written in key order so identical sets produce
//! identical bytes.

use std::path::Path;

use super::DescriptorSet;
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};

pub const GDSC_MAGIC: &[u8; 4] = b"GDSC";
pub const GDSC_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

pub(crate) fn encode_metadata(meta: &std::collections::BTreeMap<String, String>) -> Result<String> {
    let mut out = String::new();
    for (k, v) in meta {
        if k.is_empty() || k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(Error::Format(format!("metadata entry {k:?}={v:?} cannot be encoded as a key=value line")));
        }
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    Ok(out)
}

pub(crate) fn decode_metadata(text: &str) -> Result<std::collections::BTreeMap<String, String>> {
    let mut meta = std::collections::BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("metadata line {line:?} lacks '='")))?;
        meta.insert(k.to_string(), v.to_string());
    }
    Ok(meta)
}

/// Exact size in bytes of the encoded set.
pub fn encoded_len(set: &DescriptorSet) -> Result<usize> {
    let meta = encode_metadata(set.metadata())?;
    let header = 4 + 4 + 1 + 4 + 8 + 4 + meta.len();
    let body: usize = set.ids().iter().map(|id| 4 + id.len() + 4 * set.dim()).sum();
    Ok(header + body)
}

pub fn encode_descriptor_set(set: &DescriptorSet) -> Result<Vec<u8>> {
    let dim = u32::try_from(set.dim())
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::Format(format!("unsupported dimension {}", set.dim())))?;
    let mut w = Writer::new();
    w.bytes(GDSC_MAGIC);
    w.u32(GDSC_VERSION);
    w.u8(DTYPE_F32);
    w.u32(dim);
    w.u64(set.len() as u64);
    w.str(&encode_metadata(set.metadata())?)?;
    for (id, v) in set.iter() {
        w.str(id)?;
        w.f32_slice(v);
    }
    Ok(w.into_inner())
}

pub fn decode_descriptor_set(bytes: &[u8]) -> Result<DescriptorSet> {
    let mut r = Reader::new(bytes);
    let header = || "header".to_string();
    let magic = r.take(4, &header)?;
    if magic != GDSC_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"GDSC\"", String::from_utf8_lossy(magic))));
    }
    let version = r.u32(&header)?;
    if version != GDSC_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dtype = r.u8(&header)?;
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype {dtype}")));
    }
    let dim = r.u32(&header)? as usize;
    if dim == 0 {
        return Err(Error::Format("dimension zero".into()));
    }
    let count = r.u64(&header)?;
    let meta = r.str(&|| "metadata".to_string())?;
    let mut set = DescriptorSet::new(dim)?;
    for (k, v) in decode_metadata(&meta)? {
        set.set_metadata(k, v);
    }
    for index in 0..count as usize {
        let what = || format!("record {index}");
        let id = r.str(&what)?;
        let v = r.f32_vec(dim, &what)?;
        set.push(id, v)?;
    }
    if !r.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after {} records", r.remaining(), count)));
    }
    Ok(set)
}

pub fn write_descriptor_file(set: &DescriptorSet, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_descriptor_set(set)?;
    write_file(path.as_ref(), &bytes)
}

pub fn read_descriptor_file(path: impl AsRef<Path>) -> Result<DescriptorSet> {
    decode_descriptor_set(&read_file(path.as_ref())?)
}
