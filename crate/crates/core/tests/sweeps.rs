use fvret_core::fisher::GmmParams;
use fvret_core::imaging::{circular_center_crop, DEFAULT_FILL};
use fvret_core::pipeline::{build_image_index, train_models, Extractor, FvPipeline, GlobalDescriber, TrainParams};
use fvret_core::pooling::{PoolOptions, PoolingStrategy, TransformGrid};
use fvret_core::retrieval::{evaluate, rank_queries, sweep_csv, sweep_rotation, sweep_scale};
use fvret_core::store::{parse_manifest_str, DatasetManifest, DescriptorSet};
use fvret_core::synth::texture_corpus;
use fvret_core::imaging::GrayImage;

struct Fixture {
    corpus: Vec<(String, GrayImage)>,
    pipeline: FvPipeline,
    manifest: DatasetManifest,
}

fn fixture(n: usize) -> Fixture {
    let corpus = texture_corpus(n, 64, 64, 21);
    let ex = Extractor { max_side: 64, ..Default::default() };
    let locals: Vec<_> = corpus.iter().map(|(id, img)| ex.extract(img, id).unwrap()).collect();
    let params = TrainParams {
        pca_dim: 16,
        gmm: GmmParams { components: 8, ..Default::default() },
        sample_budget: 20_000,
    };
    let (pca, fit) = train_models(&locals, &params).unwrap();
    let mut text = String::new();
    for (id, _) in &corpus {
        text += &format!("db {id}\n");
    }
    for (id, _) in &corpus {
        text += &format!("query {id} {id}\n");
    }
    Fixture {
        manifest: parse_manifest_str(&text).unwrap(),
        pipeline: FvPipeline::new(ex, pca, fit.model).unwrap(),
        corpus,
    }
}

fn plain_score(f: &Fixture, entries: &[fvret_core::pooling::IndexEntry], prep: impl Fn(&GrayImage) -> GrayImage) -> f64 {
    let mut qs = DescriptorSet::new(f.pipeline.dim()).unwrap();
    for (id, img) in &f.corpus {
        qs.push(id.clone(), f.pipeline.describe(&prep(img)).unwrap()).unwrap();
    }
    evaluate(&f.manifest, &rank_queries(&f.manifest, &qs, entries).unwrap()).unwrap().aggregate
}

#[test]
fn zero_angle_and_unit_ratio_reproduce_plain_evaluation() {
    let f = fixture(8);
    let opts = PoolOptions::default();
    let rot = build_image_index(&f.corpus, TransformGrid::rotation(0, 10).unwrap(), PoolingStrategy::None, &opts, DEFAULT_FILL, &f.pipeline).unwrap();
    let r = sweep_rotation(&f.manifest, &f.corpus, &rot.entries, &[0.0], &f.pipeline, DEFAULT_FILL).unwrap();
    let plain = plain_score(&f, &rot.entries, |i| circular_center_crop(i, DEFAULT_FILL));
    assert_eq!(r.sweep.as_deref(), Some(&[(0.0, plain)][..]));

    let sc = build_image_index(&f.corpus, TransformGrid::scale(0).unwrap(), PoolingStrategy::None, &opts, DEFAULT_FILL, &f.pipeline).unwrap();
    let r = sweep_scale(&f.manifest, &f.corpus, &sc.entries, &[1.0, 0.5], &f.pipeline).unwrap();
    let rows = r.sweep.unwrap();
    assert_eq!(rows[0], (1.0, plain_score(&f, &sc.entries, |i| i.clone())));
    assert_eq!(sweep_csv(&rows).lines().count(), 3);
}

#[test]
fn sweep_rejects_bad_parameters() {
    let f = fixture(2);
    let idx = build_image_index(&f.corpus, TransformGrid::identity(), PoolingStrategy::None, &PoolOptions::default(), DEFAULT_FILL, &f.pipeline).unwrap();
    assert!(sweep_scale(&f.manifest, &f.corpus, &idx.entries, &[0.3], &f.pipeline).is_err());
    assert!(sweep_rotation(&f.manifest, &f.corpus, &idx.entries, &[190.0], &f.pipeline, DEFAULT_FILL).is_err());
    assert!(sweep_rotation(&f.manifest, &f.corpus, &idx.entries, &[], &f.pipeline, DEFAULT_FILL).is_err());
}

#[test]
fn rotation_pooling_dominates_within_its_limit() {
    let f = fixture(20);
    let opts = PoolOptions::default();
    let angles = [-30.0, -20.0, -10.0, 10.0, 20.0, 30.0];
    let p0 = build_image_index(&f.corpus, TransformGrid::rotation(0, 10).unwrap(), PoolingStrategy::None, &opts, DEFAULT_FILL, &f.pipeline).unwrap();
    let p30 = build_image_index(&f.corpus, TransformGrid::rotation(30, 10).unwrap(), PoolingStrategy::MinDist, &opts, DEFAULT_FILL, &f.pipeline).unwrap();
    let a = sweep_rotation(&f.manifest, &f.corpus, &p0.entries, &angles, &f.pipeline, DEFAULT_FILL).unwrap().sweep.unwrap();
    let b = sweep_rotation(&f.manifest, &f.corpus, &p30.entries, &angles, &f.pipeline, DEFAULT_FILL).unwrap().sweep.unwrap();
    assert_eq!(a.len(), angles.len());
    for (x, y) in a.iter().zip(&b) {
        assert!(y.1 >= x.1, "angle {}: P=30 {} < P=0 {}", x.0, y.1, x.1);
    }
}
