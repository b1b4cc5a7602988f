use super::gmm::{GmmModel, PosteriorEngine};
use crate::error::{Error, Result};

pub const DEFAULT_POSTERIOR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct FvOptions {
    /// Posteriors below this are zeroed before accumulation.
    pub posterior_floor: Option<f64>,
}

impl Default for FvOptions {
    fn default() -> Self {
        FvOptions {
            posterior_floor: Some(DEFAULT_POSTERIOR_FLOOR),
        }
    }
}

impl FvOptions {
    pub fn exact() -> Self {
        FvOptions { posterior_floor: None }
    }
}

/// Fisher Vector: for each component `k`, `D` mean gradients followed by
/// `D` variance gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherVector {
    pub values: Vec<f64>,
    pub normalized: bool,
    /// Set when the vector is all zero because there were no descriptors
    /// (or nothing survived normalization).
    pub degenerate: bool,
}

impl FisherVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Unnormalized Fisher Vector of `descriptors` under `model`.
///
/// With `T` descriptors and posteriors `γ_t(k)`:
///
/// ```text
/// G_μk = 1/(T √w_k)   Σ_t γ_t(k) (x_t − μ_k) / σ_k
/// G_σk = 1/(T √(2w_k)) Σ_t γ_t(k) [((x_t − μ_k) / σ_k)² − 1]
/// ```
///
/// Descriptors are accumulated in lexicographic order of their values, so
/// the result is bit-identical under any permutation of the input.
pub fn encode_fv<S: AsRef<[f64]>>(model: &GmmModel, descriptors: &[S], opts: &FvOptions) -> Result<FisherVector> {
    let k = model.num_components();
    let d = model.dim();
    if let Some(bad) = descriptors.iter().find(|x| x.as_ref().len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.as_ref().len(),
        });
    }
    let t = descriptors.len();
    let mut values = vec![0.0; 2 * k * d];
    if t == 0 {
        return Ok(FisherVector {
            values,
            normalized: false,
            degenerate: true,
        });
    }

    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| lexicographic(descriptors[a].as_ref(), descriptors[b].as_ref()));

    let inv_sigma: Vec<Vec<f64>> = model
        .variances
        .iter()
        .map(|v| v.iter().map(|s| 1.0 / s.sqrt()).collect())
        .collect();
    let engine = PosteriorEngine::new(model);
    let mut gamma = vec![0.0; k];
    for &i in &order {
        let x = descriptors[i].as_ref();
        engine.posteriors_into(x, opts.posterior_floor, &mut gamma);
        for (c, &g) in gamma.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let base = 2 * c * d;
            let mean = &model.means[c];
            let is = &inv_sigma[c];
            for j in 0..d {
                let z = (x[j] - mean[j]) * is[j];
                values[base + j] += g * z;
                values[base + d + j] += g * (z * z - 1.0);
            }
        }
    }
    for c in 0..k {
        let wm = 1.0 / (t as f64 * model.weights[c].sqrt());
        let ws = 1.0 / (t as f64 * (2.0 * model.weights[c]).sqrt());
        let base = 2 * c * d;
        values[base..base + d].iter_mut().for_each(|v| *v *= wm);
        values[base + d..base + 2 * d].iter_mut().for_each(|v| *v *= ws);
    }
    Ok(FisherVector {
        values,
        normalized: false,
        degenerate: false,
    })
}

/// Signed power law `sign(z)|z|^alpha` per component, then L2
/// normalization. An all-zero vector stays zero and is flagged degenerate.
pub fn normalize_fv(fv: &FisherVector, power_alpha: f64) -> FisherVector {
    let mut values: Vec<f64> = fv
        .values
        .iter()
        .map(|&z| if z == 0.0 { 0.0 } else { z.signum() * z.abs().powf(power_alpha) })
        .collect();
    let norm = crate::linalg::norm(&values);
    let degenerate = norm == 0.0 || !norm.is_finite();
    if degenerate {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    FisherVector {
        values,
        normalized: true,
        degenerate: fv.degenerate || degenerate,
    }
}
