//! GIDX index file.
//!
//! ```text
//! magic      "GIDX"
//! version    u32 LE (= 1)
//! grid kind  u8 (0 = rotation, 1 = scale)
//! grid a     u32 LE (rotation: P degrees; scale: SP)
//! grid b     u32 LE (rotation: step degrees; scale: 0)
//! strategy   u8 (0 none, 1 max, 2 avg, 3 mindist, 4 pwl)
//! dtype      u8 (0 = float32 LE)
//! dim        u32 LE
//! count      u64 LE
//! entries    count × { id_len u32 LE, id UTF-8, mode u8 (0 single,
//!            1 mindist, 2 pwl), closed_loop u8, n_vectors u32 LE,
//!            n_vectors × dim × f32 LE }
//! ```

use std::path::Path;

use super::{EntryMode, Index, IndexEntry, PoolingStrategy, TransformGrid};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};

pub const GIDX_MAGIC: &[u8; 4] = b"GIDX";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

fn mode_code(m: EntryMode) -> u8 {
    match m {
        EntryMode::Single => 0,
        EntryMode::MinDist => 1,
        EntryMode::Pwl => 2,
    }
}

pub fn encode_index(index: &Index) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.bytes(GIDX_MAGIC);
    w.u32(VERSION);
    match index.grid {
        TransformGrid::Rotation { pool_limit, step } => {
            w.u8(0);
            w.u32(pool_limit);
            w.u32(step);
        }
        TransformGrid::Scale { extra_scales } => {
            w.u8(1);
            w.u32(extra_scales);
            w.u32(0);
        }
    }
    w.u8(index.strategy.code());
    w.u8(DTYPE_F32);
    w.u32(u32::try_from(index.dim).map_err(|_| Error::Format("dimension too large".into()))?);
    w.u64(index.entries.len() as u64);
    for e in &index.entries {
        w.str(&e.image_id)?;
        w.u8(mode_code(e.mode));
        w.u8(u8::from(e.closed_loop));
        w.u32(e.vectors.len() as u32);
        for v in &e.vectors {
            w.f32_slice(v);
        }
    }
    Ok(w.into_inner())
}

pub fn decode_index(bytes: &[u8]) -> Result<Index> {
    let mut r = Reader::new(bytes);
    let h = || "header".to_string();
    let magic = r.take(4, &h)?;
    if magic != GIDX_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"GIDX\"", String::from_utf8_lossy(magic))));
    }
    let version = r.u32(&h)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = r.u8(&h)?;
    let a = r.u32(&h)?;
    let b = r.u32(&h)?;
    let grid = match kind {
        0 => TransformGrid::rotation(a, b)?,
        1 => TransformGrid::scale(a)?,
        k => return Err(Error::Format(format!("unknown grid kind {k}"))),
    };
    let strategy = PoolingStrategy::from_code(r.u8(&h)?).ok_or_else(|| Error::Format("unknown strategy".into()))?;
    let dtype = r.u8(&h)?;
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype {dtype}")));
    }
    let dim = r.u32(&h)? as usize;
    let count = r.u64(&h)? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 20));
    let mut seen = std::collections::HashSet::new();
    for index in 0..count {
        let what = || format!("entry {index}");
        let image_id = r.str(&what)?;
        let mode = match r.u8(&what)? {
            0 => EntryMode::Single,
            1 => EntryMode::MinDist,
            2 => EntryMode::Pwl,
            m => return Err(Error::Format(format!("entry {index}: unknown mode {m}"))),
        };
        let closed_loop = r.u8(&what)? != 0;
        let n = r.u32(&what)? as usize;
        if n == 0 || (mode == EntryMode::Single && n != 1) {
            return Err(Error::Format(format!("entry {index}: {n} vectors for mode {mode:?}")));
        }
        let mut vectors = Vec::with_capacity(n);
        for _ in 0..n {
            let v = r.f32_vec(dim, &what)?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidRecord {
                    index,
                    id: image_id,
                    detail: "non-finite component".into(),
                });
            }
            vectors.push(v);
        }
        if !seen.insert(image_id.clone()) {
            return Err(Error::InvalidRecord {
                index,
                id: image_id,
                detail: "duplicate image id".into(),
            });
        }
        entries.push(IndexEntry {
            image_id,
            mode,
            vectors,
            closed_loop,
        });
    }
    if !r.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
    }
    let mut idx = Index::new(grid, strategy, entries)?;
    idx.dim = dim;
    Ok(idx)
}

pub fn write_index_file(index: &Index, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_index(index)?)
}

pub fn read_index_file(path: impl AsRef<Path>) -> Result<Index> {
    decode_index(&read_file(path.as_ref())?)
}
