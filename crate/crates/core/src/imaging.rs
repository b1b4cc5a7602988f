//! Grayscale images, canonical resizing and the rotation / scale
//! perturbation protocols.
//!
//! Pixel `(x, y)` covers the unit square whose centre sits at
//! `(x + 0.5, y + 0.5)` in continuous image coordinates.

use std::path::Path;

use crate::error::{Error, Result};

/// Default fill for rotated and cropped regions: the luminance of the
/// ImageNet mean colour.
pub const DEFAULT_FILL: f64 = 0.456;

/// Query downscale ratios used by the scale experiments, in order.
pub const SCALE_RATIOS: [f64; 7] = [1.0, 0.75, 0.5, 0.375, 0.25, 0.2, 0.125];

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Builds an image from row-major intensities, clamping them to `[0, 1]`.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("non-finite pixel value".into()));
        }
        Ok(GrayImage {
            width,
            height,
            pixels: pixels.into_iter().map(|p| p.clamp(0.0, 1.0)).collect(),
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        GrayImage::from_pixels(width, height, vec![value; width * height]).expect("valid constant image")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[y * self.width + x]
    }

    /// Maps every pixel through `f`, clamping the result.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p).clamp(0.0, 1.0)).collect(),
        }
    }

    /// Whether `(x, y)` lies in the disc of radius `min(w, h) / 2` centred
    /// on the image.
    pub fn in_inscribed_circle(&self, x: usize, y: usize) -> bool {
        let cx = self.width as f64 / 2.0;
        let cy = self.height as f64 / 2.0;
        let r = self.width.min(self.height) as f64 / 2.0;
        let dx = x as f64 + 0.5 - cx;
        let dy = y as f64 + 0.5 - cy;
        dx * dx + dy * dy <= r * r
    }

    /// Writes an 8-bit binary PGM.
    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|&p| (p * 255.0).round() as u8));
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Loads an image as luminance in `[0, 1]`.
///
/// Binary and ASCII PGM/PPM with maxval 255 are decoded directly; PNG and
/// JPEG go through the `image` crate. Colour is reduced with Rec.601
/// weights.
pub fn load_grayscale(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grayscale(&bytes)
}

pub fn decode_grayscale(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() >= 2 && bytes[0] == b'P' && matches!(bytes[1], b'2' | b'3' | b'5' | b'6') {
        return decode_netpbm(bytes);
    }
    let img = image::load_from_memory(bytes).map_err(|e| Error::Image(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let pixels = rgb.pixels().map(|p| luminance(p[0], p[1], p[2])).collect();
    GrayImage::from_pixels(w as usize, h as usize, pixels)
}

fn luminance(r: u8, g: u8, b: u8) -> f64 {
    (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)) / 255.0
}

fn decode_netpbm(bytes: &[u8]) -> Result<GrayImage> {
    let kind = bytes[1];
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Image("malformed netpbm header".into()))?;
    }
    let [w, h, maxval] = header;
    if w == 0 || h == 0 {
        return Err(Error::Image(format!("netpbm image has zero size {w}x{h}")));
    }
    if maxval != 255 {
        return Err(Error::Image(format!("unsupported netpbm maxval {maxval}")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Image("malformed netpbm header".into()));
    }
    pos += 1;
    let channels = if matches!(kind, b'3' | b'6') { 3 } else { 1 };
    let n = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(channels))
        .ok_or_else(|| Error::Image("netpbm image too large".into()))?;
    let samples: Vec<u8> = if matches!(kind, b'5' | b'6') {
        bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::Image("netpbm pixel data truncated".into()))?
            .to_vec()
    } else {
        let text = std::str::from_utf8(&bytes[pos - 1..]).map_err(|_| Error::Image("bad ascii netpbm".into()))?;
        let vals: Vec<u8> = text
            .split_ascii_whitespace()
            .map(|t| t.parse::<u8>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Image("bad ascii netpbm sample".into()))?;
        if vals.len() < n {
            return Err(Error::Image("netpbm pixel data truncated".into()));
        }
        vals
    };
    let pixels = if channels == 1 {
        samples[..n].iter().map(|&v| f64::from(v) / 255.0).collect()
    } else {
        samples[..n].chunks_exact(3).map(|c| luminance(c[0], c[1], c[2])).collect()
    };
    GrayImage::from_pixels(w, h, pixels)
}

/// Catmull-Rom cubic kernel (a = -0.5).
fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Precomputed 4-tap kernel for each output coordinate along one axis.
fn cubic_taps(in_len: usize, out_len: usize) -> Vec<(isize, [f64; 4])> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut w = [
                cubic_weight(1.0 + frac),
                cubic_weight(frac),
                cubic_weight(1.0 - frac),
                cubic_weight(2.0 - frac),
            ];
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            (base as isize - 1, w)
        })
        .collect()
}

/// Separable bicubic resampling to `out_w × out_h`, clamp-to-edge borders.
fn resample_bicubic(img: &GrayImage, out_w: usize, out_h: usize) -> GrayImage {
    let xt = cubic_taps(img.width, out_w);
    let yt = cubic_taps(img.height, out_h);
    let mut rows = vec![0.0; out_w * img.height];
    for y in 0..img.height {
        for (ox, (x0, w)) in xt.iter().enumerate() {
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                acc += wk * img.get_clamped(x0 + k as isize, y as isize);
            }
            rows[y * out_w + ox] = acc;
        }
    }
    let mut out = vec![0.0; out_w * out_h];
    for (oy, (y0, w)) in yt.iter().enumerate() {
        for ox in 0..out_w {
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                let y = (y0 + k as isize).clamp(0, img.height as isize - 1) as usize;
                acc += wk * rows[y * out_w + ox];
            }
            out[oy * out_w + ox] = acc.clamp(0.0, 1.0);
        }
    }
    GrayImage {
        width: out_w,
        height: out_h,
        pixels: out,
    }
}

/// Resizes so the larger side equals `target`, keeping the aspect ratio.
pub fn resize_max_side(img: &GrayImage, target: usize) -> Result<GrayImage> {
    if target == 0 {
        return Err(Error::InvalidParameter("resize target must be at least 1".into()));
    }
    let (w, h) = (img.width, img.height);
    if w.max(h) == target {
        return Ok(img.clone());
    }
    let (out_w, out_h) = if w >= h {
        (target, ((h as f64 * target as f64 / w as f64).round() as usize).max(1))
    } else {
        (((w as f64 * target as f64 / h as f64).round() as usize).max(1), target)
    };
    Ok(resample_bicubic(img, out_w, out_h))
}

/// Sets every pixel outside the inscribed circle to `fill`.
pub fn circular_center_crop(img: &GrayImage, fill: f64) -> GrayImage {
    let mut out = img.clone();
    let fill = fill.clamp(0.0, 1.0);
    for y in 0..img.height {
        for x in 0..img.width {
            if !img.in_inscribed_circle(x, y) {
                out.pixels[y * img.width + x] = fill;
            }
        }
    }
    out
}

/// Rotates counter-clockwise (as displayed, y pointing down) by `angle`
/// degrees about the image centre with bilinear sampling. Taps that fall
/// outside the source read `fill`.
pub fn rotate(img: &GrayImage, angle: f64, fill: f64) -> GrayImage {
    let fill = fill.clamp(0.0, 1.0);
    if angle == 0.0 {
        return img.clone();
    }
    let theta = angle.to_radians();
    let (s, c) = theta.sin_cos();
    let cx = (img.width as f64 - 1.0) / 2.0;
    let cy = (img.height as f64 - 1.0) / 2.0;
    let tap = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= img.width as isize || y >= img.height as isize {
            fill
        } else {
            img.pixels[y as usize * img.width + x as usize]
        }
    };
    let mut out = vec![0.0; img.pixels.len()];
    for y in 0..img.height {
        for x in 0..img.width {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // inverse map: output point rotated back by -angle
            let sx = c * dx - s * dy + cx;
            let sy = s * dx + c * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = (1.0 - fy) * ((1.0 - fx) * tap(x0, y0) + fx * tap(x0 + 1, y0))
                + fy * ((1.0 - fx) * tap(x0, y0 + 1) + fx * tap(x0 + 1, y0 + 1));
            out[y * img.width + x] = v.clamp(0.0, 1.0);
        }
    }
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: out,
    }
}

/// Standard deviation of the anti-aliasing blur applied before resampling
/// by `ratio`.
pub fn antialias_sigma(ratio: f64) -> f64 {
    if ratio >= 1.0 {
        0.0
    } else {
        0.6 * ((1.0 / ratio).powi(2) - 1.0).sqrt()
    }
}

/// Separable Gaussian blur with normalized, edge-truncated kernels.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let (w, h) = (img.width as isize, img.height as isize);
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut dst = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (k, kw) in kernel.iter().enumerate() {
                    let o = k as isize - radius;
                    let (sx, sy) = if horizontal { (x + o, y) } else { (x, y + o) };
                    if sx >= 0 && sx < w && sy >= 0 && sy < h {
                        acc += kw * src[(sy * w + sx) as usize];
                        norm += kw;
                    }
                }
                dst[(y * w + x) as usize] = acc / norm;
            }
        }
        dst
    };
    let tmp = pass(&img.pixels, true);
    let pixels = pass(&tmp, false);
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// Gaussian anti-aliasing followed by bicubic resampling to
/// `round(side · ratio)` (at least 1) per axis.
pub fn downscale(img: &GrayImage, ratio: f64) -> Result<GrayImage> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!("downscale ratio {ratio} outside (0, 1]")));
    }
    if ratio == 1.0 {
        return Ok(img.clone());
    }
    let out_w = ((img.width as f64 * ratio).round() as usize).max(1);
    let out_h = ((img.height as f64 * ratio).round() as usize).max(1);
    let blurred = gaussian_blur(img, antialias_sigma(ratio));
    Ok(resample_bicubic(&blurred, out_w, out_h))
}

/// Circular crop followed by rotation, both filled with `fill`.
pub fn rotation_query_protocol(img: &GrayImage, angle: f64, fill: f64) -> GrayImage {
    rotate(&circular_center_crop(img, fill), angle, fill)
}
