//! Model files, laid out like GDSC:
//!
//! ```text
//! GPCA: magic, version u32, dtype u8, input_dim u32, output_dim u32,
//!       mean[input_dim] f32, basis[output_dim][input_dim] f32
//! GGMM: magic, version u32, dtype u8, K u32, D u32,
//!       weights[K] f32, means[K][D] f32, variances[K][D] f32
//! ```
//!
//! Values are stored as f32; loaded GMM weights are renormalized in f64.

use std::path::Path;

use super::{GmmModel, PcaModel};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};

const PCA_MAGIC: &[u8; 4] = b"GPCA";
const GMM_MAGIC: &[u8; 4] = b"GGMM";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn to_f64(v: Vec<f32>) -> Vec<f64> {
    v.into_iter().map(f64::from).collect()
}

fn header(r: &mut Reader, magic: &[u8; 4]) -> Result<(usize, usize)> {
    let h = || "header".to_string();
    let m = r.take(4, &h)?;
    if m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(m),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.u32(&h)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dtype = r.u8(&h)?;
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype {dtype}")));
    }
    let a = r.u32(&h)? as usize;
    let b = r.u32(&h)? as usize;
    if a == 0 || b == 0 {
        return Err(Error::Format("zero dimension in model header".into()));
    }
    Ok((a, b))
}

fn finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Format(format!("non-finite value in {what}")))
    }
}

pub fn encode_pca(m: &PcaModel) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(PCA_MAGIC);
    w.u32(VERSION);
    w.u8(DTYPE_F32);
    w.u32(m.input_dim as u32);
    w.u32(m.output_dim as u32);
    w.f32_slice(&to_f32(&m.mean));
    for row in &m.basis {
        w.f32_slice(&to_f32(row));
    }
    w.into_inner()
}

pub fn decode_pca(bytes: &[u8]) -> Result<PcaModel> {
    let mut r = Reader::new(bytes);
    let (input_dim, output_dim) = header(&mut r, PCA_MAGIC)?;
    if output_dim > input_dim {
        return Err(Error::Format(format!("PCA output dim {output_dim} exceeds input dim {input_dim}")));
    }
    let mean = to_f64(r.f32_vec(input_dim, &|| "mean".into())?);
    finite(&mean, "mean")?;
    let mut basis = Vec::with_capacity(output_dim);
    for i in 0..output_dim {
        let row = to_f64(r.f32_vec(input_dim, &|| format!("basis row {i}"))?);
        finite(&row, "basis")?;
        basis.push(row);
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after PCA model".into()));
    }
    Ok(PcaModel {
        input_dim,
        output_dim,
        mean,
        basis,
    })
}

pub fn encode_gmm(m: &GmmModel) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(GMM_MAGIC);
    w.u32(VERSION);
    w.u8(DTYPE_F32);
    w.u32(m.num_components() as u32);
    w.u32(m.dim() as u32);
    w.f32_slice(&to_f32(&m.weights));
    for v in m.means.iter().chain(&m.variances) {
        w.f32_slice(&to_f32(v));
    }
    w.into_inner()
}

pub fn decode_gmm(bytes: &[u8]) -> Result<GmmModel> {
    let mut r = Reader::new(bytes);
    let (k, d) = header(&mut r, GMM_MAGIC)?;
    let mut weights = to_f64(r.f32_vec(k, &|| "weights".into())?);
    let mut read_rows = |what: &str| -> Result<Vec<Vec<f64>>> {
        (0..k)
            .map(|c| Ok(to_f64(r.f32_vec(d, &|| format!("{what} of component {c}"))?)))
            .collect()
    };
    let means = read_rows("means")?;
    let variances = read_rows("variances")?;
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after GMM model".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Format("GMM weights do not sum to a positive value".into()));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    let model = GmmModel {
        weights,
        means,
        variances,
    };
    model.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(model)
}

pub fn write_pca_file(m: &PcaModel, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_pca(m))
}

pub fn read_pca_file(path: impl AsRef<Path>) -> Result<PcaModel> {
    decode_pca(&read_file(path.as_ref())?)
}

pub fn write_gmm_file(m: &GmmModel, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_gmm(m))
}

pub fn read_gmm_file(path: impl AsRef<Path>) -> Result<GmmModel> {
    decode_gmm(&read_file(path.as_ref())?)
}
