//! Dense, upright SIFT.
//!
//! Patches of side `magnification · scale` are laid on a regular grid
//! anchored at the top-left corner, `stride` pixels apart. Each patch is
//! split into 4×4 spatial cells with 8 orientation bins. Gradient
//! magnitudes are Gaussian-weighted (σ = half the patch side) and
//! soft-assigned trilinearly across neighbouring cells and orientations.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::store::{LocalDescriptor, LocalDescriptorSet, LOCAL_DESCRIPTOR_DIM};

const SPATIAL_BINS: usize = 4;
const ORIENTATION_BINS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSiftParams {
    pub stride: usize,
    pub magnification: f64,
    pub scales: Vec<f64>,
    /// Component clamp applied between the two L2 normalizations.
    pub clamp: f64,
    /// Patches whose raw histogram norm falls below this are dropped.
    pub low_contrast_norm_floor: f64,
}

impl Default for DenseSiftParams {
    fn default() -> Self {
        DenseSiftParams {
            stride: 4,
            magnification: 6.0,
            scales: vec![4.0],
            clamp: 0.2,
            low_contrast_norm_floor: 1e-6,
        }
    }
}

impl DenseSiftParams {
    pub fn multiscale() -> Self {
        DenseSiftParams {
            scales: vec![4.0, 8.0, 12.0, 16.0],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        if !(self.magnification > 0.0) {
            return Err(Error::InvalidParameter("magnification must be positive".into()));
        }
        if self.scales.is_empty() || self.scales.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter("scales must be a non-empty list of positive values".into()));
        }
        if !(self.clamp > 0.0 && self.clamp <= 1.0) {
            return Err(Error::InvalidParameter(format!("clamp {} outside (0, 1]", self.clamp)));
        }
        Ok(())
    }

    /// Side length in pixels of the patch at `scale`.
    pub fn patch_side(&self, scale: f64) -> usize {
        (self.magnification * scale).round() as usize
    }

    /// Grid points per axis for an axis of `len` pixels at `scale`.
    pub fn grid_len(&self, len: usize, scale: f64) -> usize {
        let p = self.patch_side(scale);
        if len < p {
            0
        } else {
            (len - p) / self.stride + 1
        }
    }
}

/// Per-pixel gradient magnitude and orientation, central differences in the
/// interior and one-sided at the border.
struct Gradients {
    width: usize,
    magnitude: Vec<f64>,
    /// Orientation scaled to bin units, in `[0, ORIENTATION_BINS)`.
    orientation: Vec<f64>,
}

impl Gradients {
    fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let mut magnitude = vec![0.0; w * h];
        let mut orientation = vec![0.0; w * h];
        let diff = |a: f64, b: f64, span: usize| if span == 0 { 0.0 } else { (a - b) / span as f64 };
        for y in 0..h {
            let (ya, yb) = (y.saturating_sub(1), (y + 1).min(h - 1));
            for x in 0..w {
                let (xa, xb) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let gx = diff(img.get(xb, y), img.get(xa, y), xb - xa);
                let gy = diff(img.get(x, yb), img.get(x, ya), yb - ya);
                let i = y * w + x;
                magnitude[i] = gx.hypot(gy);
                let mut t = gy.atan2(gx);
                if t < 0.0 {
                    t += std::f64::consts::TAU;
                }
                let o = t * ORIENTATION_BINS as f64 / std::f64::consts::TAU;
                orientation[i] = if o >= ORIENTATION_BINS as f64 { 0.0 } else { o };
            }
        }
        Gradients {
            width: w,
            magnitude,
            orientation,
        }
    }
}

fn describe_patch(grad: &Gradients, x0: usize, y0: usize, side: usize, params: &DenseSiftParams) -> Option<Vec<f32>> {
    let mut hist = [0.0f64; LOCAL_DESCRIPTOR_DIM];
    let bin = side as f64 / SPATIAL_BINS as f64;
    let half = side as f64 / 2.0;
    let inv_two_sigma2 = 1.0 / (2.0 * half * half);
    for py in 0..side {
        let ry = py as f64 + 0.5;
        let by = ry / bin - 0.5;
        let dy = ry - half;
        for px in 0..side {
            let i = (y0 + py) * grad.width + x0 + px;
            let mag = grad.magnitude[i];
            if mag == 0.0 {
                continue;
            }
            let rx = px as f64 + 0.5;
            let bx = rx / bin - 0.5;
            let dx = rx - half;
            let m = mag * (-(dx * dx + dy * dy) * inv_two_sigma2).exp();
            let o = grad.orientation[i];
            let o0 = o.floor();
            let fo = o - o0;
            let o0 = o0 as usize;
            let bx0 = bx.floor();
            let by0 = by.floor();
            let (fx, fy) = (bx - bx0, by - by0);
            for (yy, wy) in [(by0 as isize, 1.0 - fy), (by0 as isize + 1, fy)] {
                if yy < 0 || yy >= SPATIAL_BINS as isize || wy == 0.0 {
                    continue;
                }
                for (xx, wx) in [(bx0 as isize, 1.0 - fx), (bx0 as isize + 1, fx)] {
                    if xx < 0 || xx >= SPATIAL_BINS as isize || wx == 0.0 {
                        continue;
                    }
                    let cell = (yy as usize * SPATIAL_BINS + xx as usize) * ORIENTATION_BINS;
                    let w = m * wy * wx;
                    hist[cell + o0] += w * (1.0 - fo);
                    hist[cell + (o0 + 1) % ORIENTATION_BINS] += w * fo;
                }
            }
        }
    }
    let n = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n < params.low_contrast_norm_floor {
        return None;
    }
    hist.iter_mut().for_each(|v| *v /= n);
    clamp_normalize(&mut hist, params.clamp);
    Some(hist.iter().map(|&v| v as f32).collect())
}

/// Clamps a unit vector of non-negative values at `clamp` and restores unit
/// norm, landing on the fixed point of repeated clamp-and-renormalize: the
/// `m` largest components equal `clamp` and the rest are scaled by a common
/// factor. Falls back to a single clamp-and-renormalize when no such point
/// exists (`clamp² · len < 1`).
fn clamp_normalize(v: &mut [f64], clamp: f64) {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    let mut rest: f64 = v.iter().map(|x| x * x).sum();
    for m in 0..v.len() {
        let budget = 1.0 - m as f64 * clamp * clamp;
        if budget <= 0.0 || rest <= 0.0 {
            break;
        }
        let scale = (budget / rest).sqrt();
        if scale * v[order[m]] <= clamp {
            for (rank, &i) in order.iter().enumerate() {
                v[i] = if rank < m { clamp } else { v[i] * scale };
            }
            return;
        }
        rest -= v[order[m]] * v[order[m]];
    }
    v.iter_mut().for_each(|x| *x = x.min(clamp));
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn extract_scale(img: &GrayImage, grad: &Gradients, scale: f64, params: &DenseSiftParams) -> Vec<LocalDescriptor> {
    let side = params.patch_side(scale);
    let nx = params.grid_len(img.width(), scale);
    let ny = params.grid_len(img.height(), scale);
    if side == 0 || nx == 0 || ny == 0 {
        return Vec::new();
    }
    (0..ny)
        .into_par_iter()
        .flat_map_iter(|j| {
            let y0 = j * params.stride;
            (0..nx).filter_map(move |i| {
                let x0 = i * params.stride;
                describe_patch(grad, x0, y0, side, params).map(|vector| LocalDescriptor {
                    x: x0 as f64 + side as f64 / 2.0,
                    y: y0 as f64 + side as f64 / 2.0,
                    scale,
                    vector,
                })
            })
        })
        .collect()
}

/// Extracts descriptors at every scale in `params.scales`, scale by scale in
/// list order, rows then columns within a scale.
pub fn extract_dense_sift(img: &GrayImage, image_id: &str, params: &DenseSiftParams) -> Result<LocalDescriptorSet> {
    params.validate()?;
    let grad = Gradients::new(img);
    let mut out = LocalDescriptorSet::new(image_id, img.width(), img.height());
    for &s in &params.scales {
        out.descriptors.extend(extract_scale(img, &grad, s, params));
    }
    Ok(out)
}

/// Multi-scale extraction with the `{4, 8, 12, 16}` scale set.
pub fn extract_multiscale(img: &GrayImage, image_id: &str, params: &DenseSiftParams) -> Result<LocalDescriptorSet> {
    let params = DenseSiftParams {
        scales: vec![4.0, 8.0, 12.0, 16.0],
        ..params.clone()
    };
    extract_dense_sift(img, image_id, &params)
}
