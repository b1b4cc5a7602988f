use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fvret_core::dsift::DenseSiftParams;
use fvret_core::fisher::{read_gmm_file, read_pca_file, write_gmm_file, write_pca_file, FvOptions, GmmParams};
use fvret_core::imaging::{load_grayscale, GrayImage, DEFAULT_FILL, SCALE_RATIOS};
use fvret_core::pipeline::{describe_transforms, train_models, Extractor, FvPipeline, GlobalDescriber, TrainParams};
use fvret_core::pooling::{
    pooled_database, read_index_file, write_index_file, Index, IndexEntry, PoolOptions, PoolingStrategy,
    TransformGrid, GIDX_MAGIC,
};
use fvret_core::retrieval::{
    best_row, evaluate, fusion_sweep, per_query_csv, rank_queries, sweep_csv, sweep_rotation, sweep_scale, write_csv,
    EvalReport,
};
use fvret_core::store::{
    decode_descriptor_set, parse_manifest, read_descriptor_file, write_descriptor_file, DatasetManifest,
    DescriptorSet, LocalDescriptorSet, GDSC_MAGIC,
};
use rayon::prelude::*;

use crate::config::RunConfig;

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "pgm", "ppm", "pnm"];

/// Files of `dir` with one of `extensions`, keyed by file stem, sorted by
/// stem.
fn list_inputs(dir: &Path, extensions: &[&str]) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        if !path.is_file() || !extensions.contains(&ext.as_str()) {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| anyhow!("{} has no UTF-8 file name", path.display()))?
            .to_string();
        out.push((stem, path));
    }
    out.sort();
    if let Some(w) = out.windows(2).find(|w| w[0].0 == w[1].0) {
        bail!("two inputs share the id {:?}", w[0].0);
    }
    if out.is_empty() {
        bail!("no inputs in {}", dir.display());
    }
    Ok(out)
}

fn load_images(dir: &Path) -> Result<Vec<(String, GrayImage)>> {
    let files = list_inputs(dir, IMAGE_EXTENSIONS)?;
    let loaded: Vec<_> = files
        .par_iter()
        .map(|(id, path)| load_grayscale(path).map(|img| (id.clone(), img)))
        .collect();
    let mut images = Vec::with_capacity(loaded.len());
    let mut failed = 0;
    for (r, (_, path)) in loaded.into_iter().zip(&files) {
        match r {
            Ok(x) => images.push(x),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                failed += 1;
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} images could not be read", files.len());
    }
    Ok(images)
}

fn extractor(cfg: &RunConfig) -> Result<Extractor> {
    let defaults = DenseSiftParams::default();
    let sift = DenseSiftParams {
        stride: cfg.parsed_or("stride", defaults.stride)?,
        magnification: cfg.parsed_or("magnification", defaults.magnification)?,
        scales: cfg.list_f64("sift_scales")?.unwrap_or(defaults.scales),
        ..defaults
    };
    sift.validate()?;
    Ok(Extractor {
        max_side: cfg.parsed_or("max_side", fvret_core::pipeline::DEFAULT_MAX_SIDE)?,
        sift,
    })
}

fn pipeline(cfg: &RunConfig) -> Result<FvPipeline> {
    let pca = read_pca_file(cfg.input("pca")?)?;
    let gmm = read_gmm_file(cfg.input("gmm")?)?;
    let mut p = FvPipeline::new(extractor(cfg)?, pca, gmm)?;
    p.power_alpha = cfg.parsed_or("power_alpha", p.power_alpha)?;
    p.fv = match cfg.parsed::<f64>("posterior_floor")? {
        Some(f) if f <= 0.0 => FvOptions::exact(),
        Some(f) => FvOptions { posterior_floor: Some(f) },
        None => FvOptions::default(),
    };
    Ok(p)
}

pub fn extract(cfg: &RunConfig) -> Result<()> {
    let files = list_inputs(&cfg.input("images")?, IMAGE_EXTENSIONS)?;
    let out = cfg.path("descriptors")?;
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let ex = extractor(cfg)?;
    let results: Vec<Result<usize>> = files
        .par_iter()
        .map(|(id, path)| {
            let img = load_grayscale(path)?;
            let local = ex.extract(&img, id)?;
            write_descriptor_file(&local.to_descriptor_set(), out.join(format!("{id}.gdsc")))?;
            Ok(local.len())
        })
        .collect();
    let mut total = 0;
    let mut failed = 0;
    for (r, (_, path)) in results.into_iter().zip(&files) {
        match r {
            Ok(n) => total += n,
            Err(e) => {
                eprintln!("error: {}: {e:#}", path.display());
                failed += 1;
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} images could not be processed", files.len());
    }
    println!(
        "extracted {} descriptor sets ({total} descriptors) into {}",
        files.len(),
        out.display()
    );
    Ok(())
}

fn read_local_sets(dir: &Path) -> Result<Vec<LocalDescriptorSet>> {
    list_inputs(dir, &["gdsc"])?
        .par_iter()
        .map(|(_, path)| {
            let set = read_descriptor_file(path)?;
            LocalDescriptorSet::from_descriptor_set(&set).with_context(|| format!("in {}", path.display()))
        })
        .collect()
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let sets = read_local_sets(&cfg.input("descriptors")?)?;
    let defaults = GmmParams::default();
    let params = TrainParams {
        pca_dim: cfg.parsed_or("pca_dim", TrainParams::default().pca_dim)?,
        gmm: GmmParams {
            components: cfg.parsed_or("components", defaults.components)?,
            seed: cfg.parsed_or("seed", defaults.seed)?,
            max_iters: cfg.parsed_or("max_iters", defaults.max_iters)?,
            tol: cfg.parsed_or("tol", defaults.tol)?,
            ..defaults
        },
        sample_budget: cfg.parsed_or("sample_budget", fvret_core::pipeline::DEFAULT_SAMPLE_BUDGET)?,
    };
    let (pca_path, gmm_path) = (cfg.path("pca")?, cfg.path("gmm")?);
    let (pca, fit) = train_models(&sets, &params)?;
    for (i, ll) in fit.log_likelihood.iter().enumerate() {
        println!("iteration {:>3}: log-likelihood {ll:.9}", i + 1);
    }
    if fit.log_likelihood.windows(2).any(|w| w[1] < w[0] - 1e-9) {
        eprintln!("warning: log-likelihood decreased during EM");
    }
    write_pca_file(&pca, &pca_path)?;
    write_gmm_file(&fit.model, &gmm_path)?;
    println!(
        "final log-likelihood {:.9} after {} iterations ({}); PCA {} -> {}, K = {}",
        fit.log_likelihood.last().copied().unwrap_or(f64::NAN),
        fit.iterations,
        if fit.converged { "converged" } else { "iteration cap" },
        pca.input_dim,
        pca.output_dim,
        fit.model.num_components()
    );
    Ok(())
}

pub fn encode(cfg: &RunConfig) -> Result<()> {
    let p = pipeline(cfg)?;
    let out = cfg.path("global")?;
    let encoded: Vec<(String, fvret_core::Result<fvret_core::fisher::FisherVector>)> = if cfg.get("descriptors").is_some() {
        read_local_sets(&cfg.input("descriptors")?)?
            .par_iter()
            .map(|l| (l.image_id.clone(), p.encode_local(l)))
            .collect()
    } else {
        load_images(&cfg.input("images")?)?
            .par_iter()
            .map(|(id, img)| (id.clone(), p.encode_image(img)))
            .collect()
    };
    let mut set = DescriptorSet::new(p.dim())?
        .with_metadata("kind", "global")
        .with_metadata("source", "fv")
        .with_metadata("components", p.gmm.num_components().to_string())
        .with_metadata("pca_dim", p.pca.output_dim.to_string())
        .with_metadata("power_alpha", p.power_alpha.to_string());
    for (id, fv) in encoded {
        let fv = fv.with_context(|| format!("encoding {id}"))?;
        if fv.degenerate {
            eprintln!("warning: {id}: no local descriptors, stored a zero vector");
        }
        set.push(id, fv.to_f32())?;
    }
    write_descriptor_file(&set, &out)?;
    println!("encoded {} images, dim {} -> {}", set.len(), set.dim(), out.display());
    Ok(())
}

fn grid(cfg: &RunConfig) -> Result<TransformGrid> {
    let grid = match cfg.get("grid").unwrap_or("none") {
        "none" => TransformGrid::identity(),
        "rotation" => {
            if cfg.flag("circular_crop")? != Some(true) {
                bail!("config error: rotation grids need circular_crop=true; database and query images are cropped circularly");
            }
            TransformGrid::rotation(cfg.parsed("pool_limit")?.ok_or_else(|| anyhow!("config error: missing required key `pool_limit`"))?, cfg.parsed_or("step", 10)?)?
        }
        "scale" => TransformGrid::scale(
            cfg.parsed("extra_scales")?
                .ok_or_else(|| anyhow!("config error: missing required key `extra_scales`"))?,
        )?,
        other => bail!("config error: unknown grid {other:?}"),
    };
    Ok(grid)
}

fn pool_options(cfg: &RunConfig, grid: &TransformGrid) -> Result<PoolOptions> {
    let closed = cfg.flag("closed_loop")?;
    if closed == Some(true) && !grid.is_full_circle() {
        bail!("config error: closed_loop is only valid for a rotation grid with pool_limit=180");
    }
    Ok(PoolOptions {
        renormalize: cfg.flag("renormalize")?.unwrap_or(false),
        closed_loop: closed.unwrap_or(true),
    })
}

fn fill(cfg: &RunConfig) -> Result<f64> {
    let f = cfg.parsed_or("fill", DEFAULT_FILL)?;
    if !(0.0..=1.0).contains(&f) {
        bail!("config error: fill {f} outside [0, 1]");
    }
    Ok(f)
}

pub fn index(cfg: &RunConfig) -> Result<()> {
    let grid = grid(cfg)?;
    let strategy = PoolingStrategy::parse(cfg.get("pooling").unwrap_or("none"))?;
    let opts = pool_options(cfg, &grid)?;
    let out = cfg.path("index")?;
    let sets: Vec<DescriptorSet> = if cfg.get("global").is_some() {
        let paths = cfg.list_paths("global")?;
        if paths.len() != grid.size() {
            bail!(
                "config error: `global` lists {} files but the grid has {} transforms",
                paths.len(),
                grid.size()
            );
        }
        paths.iter().map(read_descriptor_file).collect::<fvret_core::Result<_>>()?
    } else {
        let images = load_images(&cfg.input("images")?)?;
        let p = pipeline(cfg)?;
        describe_transforms(&images, &grid, fill(cfg)?, &p)?
    };
    let entries = pooled_database(&sets, strategy, &grid, &opts)?;
    let index = Index::new(grid, strategy, entries)?;
    write_index_file(&index, &out)?;
    let per_entry = index.entries.first().map_or(0, |e| e.vectors.len());
    println!(
        "indexed {} entries, strategy {}, {} transforms, {per_entry} vectors per entry, dim {} -> {}",
        index.entries.len(),
        strategy.name(),
        grid.size(),
        index.dim,
        out.display()
    );
    Ok(())
}

fn manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let m = parse_manifest(cfg.input("manifest")?)?;
    m.validate()?;
    Ok(m)
}

fn check_database(m: &DatasetManifest, entries: &[IndexEntry]) -> Result<()> {
    let ids: HashSet<&str> = entries.iter().map(|e| e.image_id.as_str()).collect();
    if let Some(missing) = m.database_ids.iter().find(|id| !ids.contains(id.as_str())) {
        bail!("manifest database id {missing:?} is not in the database");
    }
    Ok(())
}

fn single_entries(set: &DescriptorSet) -> Vec<IndexEntry> {
    set.iter().map(|(id, v)| IndexEntry::single(id, v.to_vec())).collect()
}

fn summary(report: &EvalReport) -> String {
    format!(
        "{} {:.6} over {} queries",
        report.metric.name(),
        report.aggregate,
        report.per_query.len()
    )
}

pub fn evaluate_cmd(cfg: &RunConfig) -> Result<()> {
    let m = manifest(cfg)?;
    let entries = if cfg.get("index").is_some() {
        read_index_file(cfg.input("index")?)?.entries
    } else {
        single_entries(&read_descriptor_file(cfg.input("global")?)?)
    };
    check_database(&m, &entries)?;
    let queries = read_descriptor_file(cfg.input_or("queries", "global")?)?;
    let report = evaluate(&m, &rank_queries(&m, &queries, &entries)?)?;
    if let Some(out) = cfg.get("out") {
        write_csv(out, &per_query_csv(&report))?;
    }
    println!("{}", summary(&report));
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let m = manifest(cfg)?;
    let index = read_index_file(cfg.input("index")?)?;
    check_database(&m, &index.entries)?;
    let out = cfg.path("out")?;
    let p = pipeline(cfg)?;
    let queries = load_images(&cfg.input_or("query_images", "images")?)?;
    let report = match cfg.require("kind")? {
        "rotation" => {
            if cfg.flag("circular_crop")? != Some(true) {
                bail!("config error: rotation sweeps need circular_crop=true; database and query images are cropped circularly");
            }
            if !matches!(index.grid, TransformGrid::Rotation { .. }) {
                bail!("config error: rotation sweeps need an index built on a rotation grid");
            }
            let angles = cfg
                .list_f64("angles")?
                .unwrap_or_else(|| (-18..=18).map(|i| f64::from(i) * 10.0).collect());
            sweep_rotation(&m, &queries, &index.entries, &angles, &p, fill(cfg)?)?
        }
        "scale" => {
            let ratios = cfg.list_f64("ratios")?.unwrap_or_else(|| SCALE_RATIOS.to_vec());
            sweep_scale(&m, &queries, &index.entries, &ratios, &p)?
        }
        other => bail!("config error: unknown sweep kind {other:?}"),
    };
    let rows = report.sweep.clone().unwrap_or_default();
    write_csv(&out, &sweep_csv(&rows))?;
    for (param, score) in &rows {
        println!("{param:>8} {score:.6}");
    }
    println!("{} rows -> {}", rows.len(), out.display());
    Ok(())
}

pub fn fuse(cfg: &RunConfig) -> Result<()> {
    let m = manifest(cfg)?;
    let db_a = read_descriptor_file(cfg.input("global_a")?)?;
    let db_b = read_descriptor_file(cfg.input("global_b")?)?;
    let q_a = read_descriptor_file(cfg.input_or("queries_a", "global_a")?)?;
    let q_b = read_descriptor_file(cfg.input_or("queries_b", "global_b")?)?;
    let (ea, eb) = (single_entries(&db_a), single_entries(&db_b));
    check_database(&m, &ea)?;
    check_database(&m, &eb)?;
    let (_, rows) = fusion_sweep(&m, &q_a, &q_b, &ea, &eb)?;
    let best = best_row(&rows);
    for &(alpha, score) in &rows {
        let mark = if Some((alpha, score)) == best { "  <- best" } else { "" };
        println!("alpha {alpha:.1}  {} {score:.6}{mark}", m.metric.name());
    }
    if let Some(out) = cfg.get("out") {
        write_csv(out, &sweep_csv(&rows))?;
    }
    Ok(())
}

pub fn import(input: &Path, cfg: &RunConfig) -> Result<()> {
    let bytes = fs::read(input).with_context(|| format!("cannot read {}", input.display()))?;
    let set = decode_descriptor_set(&bytes).with_context(|| format!("validating {}", input.display()))?;
    println!(
        "{}: {} records, dim {}, 0 validation errors",
        input.display(),
        set.len(),
        set.dim()
    );
    for (k, v) in set.metadata() {
        println!("  {k}={v}");
    }
    if let Some(out) = cfg.get("out") {
        fs::write(out, &bytes).with_context(|| format!("cannot write {out}"))?;
        println!("copied to {out}");
    }
    Ok(())
}

pub fn info(path: &Path) -> Result<()> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let magic = bytes.get(..4).ok_or_else(|| anyhow!("{}: file too short", path.display()))?;
    println!("{}", path.display());
    if magic == GDSC_MAGIC {
        let set = decode_descriptor_set(&bytes)?;
        println!("  descriptor set: {} records, dim {}", set.len(), set.dim());
        for (k, v) in set.metadata() {
            println!("  {k}={v}");
        }
    } else if magic == GIDX_MAGIC {
        let index = fvret_core::pooling::decode_index(&bytes)?;
        let per_entry = index.entries.first().map_or(0, |e| e.vectors.len());
        println!(
            "  index: {} entries, strategy {}, grid {:?}, {per_entry} vectors per entry, dim {}, {} stored floats",
            index.entries.len(),
            index.strategy.name(),
            index.grid,
            index.dim,
            index.stored_floats()
        );
    } else if magic == b"GPCA" {
        let pca = fvret_core::fisher::decode_pca(&bytes)?;
        println!("  PCA model: {} -> {}", pca.input_dim, pca.output_dim);
    } else if magic == b"GGMM" {
        let gmm = fvret_core::fisher::decode_gmm(&bytes)?;
        println!("  GMM: {} components, dim {}", gmm.num_components(), gmm.dim());
    } else {
        bail!("{}: unknown file type {:?}", path.display(), String::from_utf8_lossy(magic));
    }
    Ok(())
}
