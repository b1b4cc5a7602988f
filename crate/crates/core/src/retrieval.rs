//! Exact brute-force ranking, two-family fusion, metrics and sweeps.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{downscale, rotation_query_protocol, GrayImage, SCALE_RATIOS};
use crate::pipeline::GlobalDescriber;
use crate::pooling::{entry_squared_distance, IndexEntry};
use crate::store::{DatasetManifest, DescriptorSet, MetricKind, Query};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    /// `(image_id, distance)` by ascending distance, ties by id.
    pub ranked: Vec<(String, f64)>,
}

impl RankedList {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ranked.iter().map(|(id, _)| id.as_str())
    }

    fn without(mut self, id: &str) -> Self {
        self.ranked.retain(|(r, _)| r != id);
        self
    }
}

fn sort_ranked(scored: &mut [(f64, &str)]) {
    scored.par_sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
}

fn finish(query_id: &str, scored: Vec<(f64, &str)>, exclude_id: Option<&str>, map: fn(f64) -> f64) -> RankedList {
    RankedList {
        query_id: query_id.to_string(),
        ranked: scored
            .into_iter()
            .filter(|(_, id)| Some(*id) != exclude_id)
            .map(|(d, id)| (id.to_string(), map(d)))
            .collect(),
    }
}

/// Ranks every entry by its distance to `query`. Sorting happens on squared
/// distances so the order matches `fused_rank` at either endpoint.
pub fn rank(query_id: &str, query: &[f32], entries: &[IndexEntry], exclude_id: Option<&str>) -> Result<RankedList> {
    let mut scored: Vec<(f64, &str)> = entries
        .par_iter()
        .map(|e| Ok((entry_squared_distance(query, e)?, e.image_id.as_str())))
        .collect::<Result<_>>()?;
    sort_ranked(&mut scored);
    Ok(finish(query_id, scored, exclude_id, f64::sqrt))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    /// Weight on the squared distance of family a.
    pub alpha: f64,
    pub family_a: String,
    pub family_b: String,
}

impl FusionConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        let cfg = FusionConfig {
            alpha,
            family_a: "a".into(),
            family_b: "b".into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }
}

/// Both entry lists must hold the same ids; they are matched by id.
fn pair_entries<'a>(a: &'a [IndexEntry], b: &'a [IndexEntry]) -> Result<Vec<(&'a IndexEntry, &'a IndexEntry)>> {
    let by_id: HashMap<&str, &IndexEntry> = b.iter().map(|e| (e.image_id.as_str(), e)).collect();
    if a.len() != b.len() || by_id.len() != b.len() {
        return Err(Error::IdMismatch(format!(
            "fusion families hold {} and {} entries",
            a.len(),
            b.len()
        )));
    }
    a.iter()
        .map(|ea| match by_id.get(ea.image_id.as_str()) {
            Some(eb) => Ok((ea, *eb)),
            None => Err(Error::IdMismatch(format!("{:?} missing from the second family", ea.image_id))),
        })
        .collect()
}

/// Ranks by `alpha * d_a^2 + (1 - alpha) * d_b^2`.
pub fn fused_rank(
    query_id: &str,
    query_a: &[f32],
    query_b: &[f32],
    entries_a: &[IndexEntry],
    entries_b: &[IndexEntry],
    cfg: &FusionConfig,
    exclude_id: Option<&str>,
) -> Result<RankedList> {
    cfg.validate()?;
    let pairs = pair_entries(entries_a, entries_b)?;
    let mut scored: Vec<(f64, &str)> = pairs
        .par_iter()
        .map(|(ea, eb)| {
            let da = entry_squared_distance(query_a, ea)?;
            let db = entry_squared_distance(query_b, eb)?;
            Ok((cfg.alpha * da + (1.0 - cfg.alpha) * db, ea.image_id.as_str()))
        })
        .collect::<Result<_>>()?;
    sort_ranked(&mut scored);
    Ok(finish(query_id, scored, exclude_id, |d| d))
}

pub fn average_precision(ranked: &RankedList, relevant: &HashSet<&str>) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "query {:?} has no relevant ids",
            ranked.query_id
        )));
    }
    let mut hits = 0u128;
    let mut exact = Some((0u128, 1u128));
    let mut sum = 0.0;
    for (k, id) in ranked.ids().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            let rank = k as u128 + 1;
            sum += hits as f64 / rank as f64;
            exact = exact.and_then(|acc| add_fraction(acc, (hits, rank)));
        }
    }
    let n = relevant.len() as u128;
    if let Some((num, den)) = exact.and_then(|(num, den)| Some((num, den.checked_mul(n)?))) {
        if num < 1 << 53 && den < 1 << 53 {
            return Ok(num as f64 / den as f64);
        }
    }
    Ok(sum / relevant.len() as f64)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `a/b + c/d` in lowest terms, `None` on overflow.
fn add_fraction((a, b): (u128, u128), (c, d): (u128, u128)) -> Option<(u128, u128)> {
    let g = gcd(b, d);
    let den = (b / g).checked_mul(d)?;
    let num = a.checked_mul(d / g)?.checked_add(c.checked_mul(b / g)?)?;
    let r = gcd(num, den);
    Some((num / r, den / r))
}

pub fn four_times_recall_at_4(ranked: &RankedList, relevant: &HashSet<&str>) -> Result<f64> {
    if relevant.len() != 4 {
        return Err(Error::InvalidParameter(format!(
            "query {:?} has {} relevant ids, expected 4",
            ranked.query_id,
            relevant.len()
        )));
    }
    Ok(ranked.ids().take(4).filter(|id| relevant.contains(id)).count() as f64)
}

/// `(parameter, aggregate score)` rows.
pub type SweepRows = Vec<(f64, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metric: MetricKind,
    /// In manifest query order.
    pub per_query: Vec<(String, f64)>,
    pub aggregate: f64,
    pub sweep: Option<SweepRows>,
}

fn score_query(metric: MetricKind, q: &Query, list: &RankedList) -> Result<f64> {
    let list = if q.exclude_self { list.clone().without(&q.id) } else { list.clone() };
    let relevant: HashSet<&str> = q.relevant.iter().map(String::as_str).collect();
    match metric {
        MetricKind::MeanAveragePrecision => average_precision(&list, &relevant),
        MetricKind::FourTimesRecallAt4 => four_times_recall_at_4(&list, &relevant),
    }
}

pub fn evaluate(manifest: &DatasetManifest, lists: &[RankedList]) -> Result<EvalReport> {
    if manifest.queries.is_empty() {
        return Err(Error::ManifestValidation("manifest has no queries".into()));
    }
    let by_id: HashMap<&str, &RankedList> = lists.iter().map(|l| (l.query_id.as_str(), l)).collect();
    let per_query = manifest
        .queries
        .iter()
        .map(|q| {
            let list = by_id
                .get(q.id.as_str())
                .ok_or_else(|| Error::ManifestValidation(format!("no ranked list for query {:?}", q.id)))?;
            Ok((q.id.clone(), score_query(manifest.metric, q, list)?))
        })
        .collect::<Result<Vec<_>>>()?;
    // Summing in sorted order makes the mean independent of query order.
    let mut scores: Vec<f64> = per_query.iter().map(|(_, s)| *s).collect();
    scores.sort_by(f64::total_cmp);
    let aggregate = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(EvalReport {
        metric: manifest.metric,
        per_query,
        aggregate,
        sweep: None,
    })
}

fn query_vector<'a>(set: &'a DescriptorSet, id: &str) -> Result<&'a [f32]> {
    set.get(id)
        .ok_or_else(|| Error::ManifestValidation(format!("query {id:?} has no descriptor")))
}

/// One ranked list per manifest query, in manifest order. Self exclusion is
/// left to `evaluate`.
pub fn rank_queries(manifest: &DatasetManifest, queries: &DescriptorSet, entries: &[IndexEntry]) -> Result<Vec<RankedList>> {
    manifest
        .queries
        .par_iter()
        .map(|q| rank(&q.id, query_vector(queries, &q.id)?, entries, None))
        .collect()
}

pub fn rank_queries_fused(
    manifest: &DatasetManifest,
    queries_a: &DescriptorSet,
    queries_b: &DescriptorSet,
    entries_a: &[IndexEntry],
    entries_b: &[IndexEntry],
    cfg: &FusionConfig,
) -> Result<Vec<RankedList>> {
    manifest
        .queries
        .par_iter()
        .map(|q| {
            fused_rank(
                &q.id,
                query_vector(queries_a, &q.id)?,
                query_vector(queries_b, &q.id)?,
                entries_a,
                entries_b,
                cfg,
                None,
            )
        })
        .collect()
}

/// Evaluates `alpha` in 0, 0.1, ..., 1 and returns one report per value
/// with the grid in its sweep table.
pub fn fusion_sweep(
    manifest: &DatasetManifest,
    queries_a: &DescriptorSet,
    queries_b: &DescriptorSet,
    entries_a: &[IndexEntry],
    entries_b: &[IndexEntry],
) -> Result<(Vec<EvalReport>, SweepRows)> {
    let mut reports = Vec::with_capacity(11);
    let mut rows = Vec::with_capacity(11);
    for step in 0..=10 {
        let cfg = FusionConfig::new(f64::from(step) / 10.0)?;
        let lists = rank_queries_fused(manifest, queries_a, queries_b, entries_a, entries_b, &cfg)?;
        let report = evaluate(manifest, &lists)?;
        rows.push((cfg.alpha, report.aggregate));
        reports.push(report);
    }
    Ok((reports, rows))
}

/// Row with the highest score; the first one wins ties.
pub fn best_row(rows: &[(f64, f64)]) -> Option<(f64, f64)> {
    rows.iter()
        .copied()
        .fold(None, |best: Option<(f64, f64)>, r| match best {
            Some(b) if b.1.total_cmp(&r.1) != Ordering::Less => Some(b),
            _ => Some(r),
        })
}

fn lookup_images<'a>(manifest: &'a DatasetManifest, images: &'a [(String, GrayImage)]) -> Result<Vec<(&'a str, &'a GrayImage)>> {
    let by_id: HashMap<&str, &GrayImage> = images.iter().map(|(id, img)| (id.as_str(), img)).collect();
    manifest
        .queries
        .iter()
        .map(|q| {
            by_id
                .get(q.id.as_str())
                .map(|img| (q.id.as_str(), *img))
                .ok_or_else(|| Error::ManifestValidation(format!("no query image for {:?}", q.id)))
        })
        .collect()
}

fn sweep<F>(
    manifest: &DatasetManifest,
    images: &[(String, GrayImage)],
    entries: &[IndexEntry],
    params: &[f64],
    describer: &dyn GlobalDescriber,
    transform: F,
) -> Result<EvalReport>
where
    F: Fn(&GrayImage, f64) -> Result<GrayImage> + Sync,
{
    if params.is_empty() {
        return Err(Error::InvalidParameter("empty sweep parameter list".into()));
    }
    let queries = lookup_images(manifest, images)?;
    let mut rows = Vec::with_capacity(params.len());
    let mut last = None;
    for &p in params {
        let lists = queries
            .par_iter()
            .map(|(id, img)| {
                let v = describer.describe(&transform(img, p)?)?;
                rank(id, &v, entries, None)
            })
            .collect::<Result<Vec<_>>>()?;
        let report = evaluate(manifest, &lists)?;
        rows.push((p, report.aggregate));
        last = Some(report);
    }
    let mut report = last.expect("non-empty parameter list");
    report.sweep = Some(rows);
    Ok(report)
}

/// Rotates every query by each angle (degrees, counter-clockwise) under the
/// circular-crop protocol, re-encodes and evaluates. The per-query scores
/// of the returned report belong to the last angle.
pub fn sweep_rotation(
    manifest: &DatasetManifest,
    queries: &[(String, GrayImage)],
    entries: &[IndexEntry],
    angles: &[f64],
    describer: &dyn GlobalDescriber,
    fill: f64,
) -> Result<EvalReport> {
    if let Some(a) = angles.iter().find(|a| !a.is_finite() || a.abs() > 180.0) {
        return Err(Error::InvalidParameter(format!("rotation angle {a} outside [-180, 180]")));
    }
    sweep(manifest, queries, entries, angles, describer, |img, a| {
        Ok(rotation_query_protocol(img, a, fill))
    })
}

/// Downscales every query by each ratio, re-encodes (the describer brings
/// the image back to its canonical size) and evaluates.
pub fn sweep_scale(
    manifest: &DatasetManifest,
    queries: &[(String, GrayImage)],
    entries: &[IndexEntry],
    ratios: &[f64],
    describer: &dyn GlobalDescriber,
) -> Result<EvalReport> {
    if let Some(r) = ratios.iter().find(|r| !SCALE_RATIOS.contains(r)) {
        return Err(Error::InvalidParameter(format!(
            "scale ratio {r} is not one of {SCALE_RATIOS:?}"
        )));
    }
    sweep(manifest, queries, entries, ratios, describer, downscale)
}

/// `param,score` rows.
pub fn sweep_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("param,score\n");
    for (p, s) in rows {
        let _ = writeln!(out, "{p},{s}");
    }
    out
}

/// `query_id,score` rows.
pub fn per_query_csv(report: &EvalReport) -> String {
    let mut out = String::from("query_id,score\n");
    for (id, s) in &report.per_query {
        let _ = writeln!(out, "{id},{s}");
    }
    out
}

pub fn write_csv(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
