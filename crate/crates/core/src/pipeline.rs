//! End-to-end glue: image → dense SIFT → PCA → Fisher Vector, model
//! training from local descriptors, and rendering of database transforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dsift::{extract_dense_sift, DenseSiftParams};
use crate::error::{Error, Result};
use crate::fisher::{apply_pca, encode_fv, normalize_fv, train_gmm, train_pca, FisherVector, FvOptions, GmmFit, GmmModel, GmmParams, PcaModel};
use crate::imaging::{downscale, resize_max_side, rotation_query_protocol, GrayImage};
use crate::pooling::{pooled_database, Index, PoolOptions, PoolingStrategy, TransformGrid};
use crate::store::{DescriptorSet, LocalDescriptorSet};

pub const DEFAULT_MAX_SIDE: usize = 640;
pub const DEFAULT_SAMPLE_BUDGET: usize = 200_000;

/// Anything that turns an image into one global vector.
pub trait GlobalDescriber: Sync {
    fn describe(&self, image: &GrayImage) -> Result<Vec<f32>>;

    fn dim(&self) -> usize;
}

/// Front end shared by extraction and encoding: canonical resize followed
/// by dense SIFT.
#[derive(Debug, Clone, PartialEq)]
pub struct Extractor {
    pub max_side: usize,
    pub sift: DenseSiftParams,
}

impl Default for Extractor {
    fn default() -> Self {
        Extractor {
            max_side: DEFAULT_MAX_SIDE,
            sift: DenseSiftParams::default(),
        }
    }
}

impl Extractor {
    pub fn extract(&self, image: &GrayImage, image_id: &str) -> Result<LocalDescriptorSet> {
        let img = resize_max_side(image, self.max_side)?;
        extract_dense_sift(&img, image_id, &self.sift)
    }
}

#[derive(Debug, Clone)]
pub struct FvPipeline {
    pub extractor: Extractor,
    pub pca: PcaModel,
    pub gmm: GmmModel,
    pub fv: FvOptions,
    pub power_alpha: f64,
}

impl FvPipeline {
    pub fn new(extractor: Extractor, pca: PcaModel, gmm: GmmModel) -> Result<Self> {
        if pca.output_dim != gmm.dim() {
            return Err(Error::DimensionMismatch {
                expected: pca.output_dim,
                found: gmm.dim(),
            });
        }
        Ok(FvPipeline {
            extractor,
            pca,
            gmm,
            fv: FvOptions::default(),
            power_alpha: 0.5,
        })
    }

    /// Normalized FV of an already extracted local descriptor set.
    pub fn encode_local(&self, local: &LocalDescriptorSet) -> Result<FisherVector> {
        let vectors: Vec<&[f32]> = local.descriptors.iter().map(|d| d.vector.as_slice()).collect();
        let reduced = apply_pca(&self.pca, &vectors)?;
        let fv = encode_fv(&self.gmm, &reduced, &self.fv)?;
        Ok(normalize_fv(&fv, self.power_alpha))
    }

    pub fn encode_image(&self, image: &GrayImage) -> Result<FisherVector> {
        self.encode_local(&self.extractor.extract(image, "")?)
    }
}

impl GlobalDescriber for FvPipeline {
    fn describe(&self, image: &GrayImage) -> Result<Vec<f32>> {
        Ok(self.encode_image(image)?.to_f32())
    }

    fn dim(&self) -> usize {
        2 * self.gmm.num_components() * self.gmm.dim()
    }
}

/// Draws up to `budget` descriptors uniformly without replacement, in a
/// fixed order determined by `seed`.
pub fn sample_descriptors(sets: &[LocalDescriptorSet], budget: usize, seed: u64) -> Vec<&[f32]> {
    let all: Vec<&[f32]> = sets
        .iter()
        .flat_map(|s| s.descriptors.iter().map(|d| d.vector.as_slice()))
        .collect();
    if all.len() <= budget {
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, all.len(), budget).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i]).collect()
}

#[derive(Debug, Clone)]
pub struct TrainParams {
    pub pca_dim: usize,
    pub gmm: GmmParams,
    pub sample_budget: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            pca_dim: 64,
            gmm: GmmParams::default(),
            sample_budget: DEFAULT_SAMPLE_BUDGET,
        }
    }
}

/// Trains PCA and the GMM on a sample of the given local descriptors.
pub fn train_models(sets: &[LocalDescriptorSet], params: &TrainParams) -> Result<(PcaModel, GmmFit)> {
    let sample = sample_descriptors(sets, params.sample_budget, params.gmm.seed);
    if sample.len() < params.gmm.components {
        return Err(Error::InvalidParameter(format!(
            "{} training descriptors for {} components",
            sample.len(),
            params.gmm.components
        )));
    }
    let pca = train_pca(&sample, params.pca_dim)?;
    let reduced = apply_pca(&pca, &sample)?;
    let fit = train_gmm(&reduced, &params.gmm)?;
    Ok((pca, fit))
}

/// Renders of `image` for every transform of `grid`, in grid order.
/// Rotation renders use the circular-crop protocol with `fill`; scale
/// renders are anti-aliased downscales.
pub fn render_transforms(image: &GrayImage, grid: &TransformGrid, fill: f64) -> Result<Vec<GrayImage>> {
    match grid {
        TransformGrid::Rotation { .. } => Ok(grid
            .angles()
            .into_iter()
            .map(|a| rotation_query_protocol(image, a, fill))
            .collect()),
        TransformGrid::Scale { .. } => grid.ratios().into_iter().map(|r| downscale(image, r)).collect(),
    }
}

/// Describes every database image under every grid transform, one
/// descriptor set per transform in grid order.
pub fn describe_transforms(
    images: &[(String, GrayImage)],
    grid: &TransformGrid,
    fill: f64,
    describer: &dyn GlobalDescriber,
) -> Result<Vec<DescriptorSet>> {
    let per_image: Vec<Vec<Vec<f32>>> = images
        .par_iter()
        .map(|(_, img)| {
            render_transforms(img, grid, fill)?
                .iter()
                .map(|r| describer.describe(r))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut sets = Vec::with_capacity(grid.size());
    for t in 0..grid.size() {
        let mut set = DescriptorSet::new(describer.dim())?;
        for ((id, _), vs) in images.iter().zip(&per_image) {
            set.push(id.clone(), vs[t].clone())?;
        }
        sets.push(set);
    }
    Ok(sets)
}

/// Renders, describes and pools a database in one go.
pub fn build_image_index(
    images: &[(String, GrayImage)],
    grid: TransformGrid,
    strategy: PoolingStrategy,
    opts: &PoolOptions,
    fill: f64,
    describer: &dyn GlobalDescriber,
) -> Result<Index> {
    let sets = describe_transforms(images, &grid, fill, describer)?;
    let entries = pooled_database(&sets, strategy, &grid, opts)?;
    Index::new(grid, strategy, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::texture_corpus;

    #[test]
    fn sampling_is_seeded_and_bounded() {
        let ex = Extractor { max_side: 48, ..Default::default() };
        let sets: Vec<_> = texture_corpus(3, 48, 48, 1)
            .iter()
            .map(|(id, img)| ex.extract(img, id).unwrap())
            .collect();
        let total: usize = sets.iter().map(|s| s.len()).sum();
        assert_eq!(sample_descriptors(&sets, total + 5, 0).len(), total);
        let a = sample_descriptors(&sets, 50, 3);
        assert_eq!(a.len(), 50);
        assert_eq!(a, sample_descriptors(&sets, 50, 3));
    }

    #[test]
    fn scale_renders_follow_ratio_list() {
        let img = crate::synth::procedural_texture(64, 48, 2);
        let r = render_transforms(&img, &TransformGrid::scale(3).unwrap(), 0.5).unwrap();
        let dims: Vec<_> = r.iter().map(|i| (i.width(), i.height())).collect();
        assert_eq!(dims, vec![(64, 48), (48, 36), (32, 24), (24, 18)]);
    }

    #[test]
    fn pipeline_dims_and_norm() {
        let ex = Extractor { max_side: 64, ..Default::default() };
        let corpus = texture_corpus(4, 64, 64, 10);
        let sets: Vec<_> = corpus.iter().map(|(id, img)| ex.extract(img, id).unwrap()).collect();
        let params = TrainParams {
            pca_dim: 8,
            gmm: GmmParams { components: 3, ..Default::default() },
            sample_budget: 2000,
        };
        let (pca, fit) = train_models(&sets, &params).unwrap();
        let p = FvPipeline::new(ex, pca, fit.model).unwrap();
        assert_eq!(p.dim(), 48);
        let v = p.describe(&corpus[0].1).unwrap();
        assert_eq!(v.len(), 48);
        let n: f64 = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
        let empty = p.encode_image(&GrayImage::filled(64, 64, 0.5)).unwrap();
        assert!(empty.degenerate);
    }
}
