//! Database-side invariance: pooling or augmenting the descriptors of
//! rotated / downscaled renders of each database image.
//!
//! `Max` and `Avg` collapse the renders into one vector. `MinDist` keeps
//! every render and matches by the nearest one. `Pwl` keeps them in grid
//! order and matches by the distance to the polyline through them.

mod gidx;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::SCALE_RATIOS;
use crate::linalg::{squared_l2, squared_point_segment};
use crate::store::DescriptorSet;

pub use gidx::{decode_index, encode_index, read_index_file, write_index_file, GIDX_MAGIC};

/// The set of transforms rendered for each database image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformGrid {
    /// Angles `-P, -P + s, …, P` degrees.
    Rotation { pool_limit: u32, step: u32 },
    /// The first `extra_scales + 1` entries of [`SCALE_RATIOS`].
    Scale { extra_scales: u32 },
}

impl TransformGrid {
    pub fn rotation(pool_limit: u32, step: u32) -> Result<Self> {
        if pool_limit > 180 {
            return Err(Error::InvalidParameter(format!("rotation pool limit {pool_limit} exceeds 180")));
        }
        if pool_limit > 0 && (step == 0 || !(2 * pool_limit).is_multiple_of(step)) {
            return Err(Error::InvalidParameter(format!(
                "rotation step {step} does not divide 2·{pool_limit}"
            )));
        }
        Ok(TransformGrid::Rotation { pool_limit, step })
    }

    pub fn scale(extra_scales: u32) -> Result<Self> {
        if extra_scales as usize >= SCALE_RATIOS.len() {
            return Err(Error::InvalidParameter(format!(
                "scale pooling count {extra_scales} exceeds {}",
                SCALE_RATIOS.len() - 1
            )));
        }
        Ok(TransformGrid::Scale { extra_scales })
    }

    /// Grid of size one: no transforms beyond the original.
    pub fn identity() -> Self {
        TransformGrid::Rotation { pool_limit: 0, step: 10 }
    }

    pub fn size(&self) -> usize {
        match *self {
            TransformGrid::Rotation { pool_limit: 0, .. } => 1,
            TransformGrid::Rotation { pool_limit, step } => (2 * pool_limit / step) as usize + 1,
            TransformGrid::Scale { extra_scales } => extra_scales as usize + 1,
        }
    }

    /// Rotation angles in degrees, in grid order. Empty for scale grids.
    pub fn angles(&self) -> Vec<f64> {
        match *self {
            TransformGrid::Rotation { pool_limit, step } => (0..self.size())
                .map(|i| -(pool_limit as f64) + (i as u32 * step) as f64)
                .collect(),
            TransformGrid::Scale { .. } => Vec::new(),
        }
    }

    /// Downscale ratios in grid order. Empty for rotation grids.
    pub fn ratios(&self) -> Vec<f64> {
        match *self {
            TransformGrid::Scale { extra_scales } => SCALE_RATIOS[..=extra_scales as usize].to_vec(),
            TransformGrid::Rotation { .. } => Vec::new(),
        }
    }

    /// True for the full-circle rotation grid, whose descriptor manifold
    /// is a closed loop.
    pub fn is_full_circle(&self) -> bool {
        matches!(*self, TransformGrid::Rotation { pool_limit: 180, .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolingStrategy {
    None,
    Max,
    Avg,
    MinDist,
    Pwl,
}

impl PoolingStrategy {
    pub fn name(self) -> &'static str {
        match self {
            PoolingStrategy::None => "none",
            PoolingStrategy::Max => "max",
            PoolingStrategy::Avg => "avg",
            PoolingStrategy::MinDist => "mindist",
            PoolingStrategy::Pwl => "pwl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "none" => PoolingStrategy::None,
            "max" => PoolingStrategy::Max,
            "avg" | "average" => PoolingStrategy::Avg,
            "mindist" | "min-dist" => PoolingStrategy::MinDist,
            "pwl" => PoolingStrategy::Pwl,
            other => return Err(Error::InvalidParameter(format!("unknown pooling strategy {other:?}"))),
        })
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        [Self::None, Self::Max, Self::Avg, Self::MinDist, Self::Pwl]
            .get(c as usize)
            .copied()
    }
}

/// How an entry is matched. `MinDist` and `Pwl` entries hold one vector
/// per grid transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryMode {
    Single,
    MinDist,
    Pwl,
}

impl EntryMode {
    pub fn is_multi(self) -> bool {
        !matches!(self, EntryMode::Single)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub image_id: String,
    pub mode: EntryMode,
    pub vectors: Vec<Vec<f32>>,
    /// Adds the segment from the last vector back to the first (PWL only).
    pub closed_loop: bool,
}

impl IndexEntry {
    pub fn single(image_id: impl Into<String>, vector: Vec<f32>) -> Self {
        IndexEntry {
            image_id: image_id.into(),
            mode: EntryMode::Single,
            vectors: vec![vector],
            closed_loop: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolOptions {
    /// L2-normalize pooled `Max` / `Avg` vectors.
    pub renormalize: bool,
    /// Close the PWL polyline on full-circle rotation grids.
    pub closed_loop: bool,
}

impl Default for PoolOptions {
    fn default() -> Self {
        PoolOptions {
            renormalize: false,
            closed_loop: true,
        }
    }
}

pub fn build_entry(
    image_id: &str,
    vectors: &[&[f32]],
    strategy: PoolingStrategy,
    grid: &TransformGrid,
) -> Result<IndexEntry> {
    build_entry_with(image_id, vectors, strategy, grid, &PoolOptions::default())
}

/// Builds the index entry of one image from its per-transform descriptors,
/// given in grid order.
pub fn build_entry_with(
    image_id: &str,
    vectors: &[&[f32]],
    strategy: PoolingStrategy,
    grid: &TransformGrid,
    opts: &PoolOptions,
) -> Result<IndexEntry> {
    if vectors.len() != grid.size() {
        return Err(Error::InvalidParameter(format!(
            "{image_id}: {} descriptors for a grid of {}",
            vectors.len(),
            grid.size()
        )));
    }
    if strategy == PoolingStrategy::None && grid.size() != 1 {
        return Err(Error::InvalidParameter(
            "strategy `none` needs a grid of size 1".into(),
        ));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    let pooled = |reduce: &dyn Fn(usize) -> f64| -> Vec<f32> {
        let mut v: Vec<f64> = (0..dim).map(reduce).collect();
        if opts.renormalize {
            let n = crate::linalg::norm(&v);
            if n > 0.0 {
                v.iter_mut().for_each(|x| *x /= n);
            }
        }
        v.into_iter().map(|x| x as f32).collect()
    };
    let (mode, stored) = match strategy {
        PoolingStrategy::None => (EntryMode::Single, vec![vectors[0].to_vec()]),
        PoolingStrategy::Max => (
            EntryMode::Single,
            vec![pooled(&|j| {
                vectors
                    .iter()
                    .map(|v| f64::from(v[j]))
                    .fold(f64::NEG_INFINITY, f64::max)
            })],
        ),
        PoolingStrategy::Avg => (
            EntryMode::Single,
            vec![pooled(&|j| {
                vectors.iter().map(|v| f64::from(v[j])).sum::<f64>() / vectors.len() as f64
            })],
        ),
        PoolingStrategy::MinDist => (EntryMode::MinDist, vectors.iter().map(|v| v.to_vec()).collect()),
        PoolingStrategy::Pwl => (EntryMode::Pwl, vectors.iter().map(|v| v.to_vec()).collect()),
    };
    Ok(IndexEntry {
        image_id: image_id.to_string(),
        mode,
        vectors: stored,
        closed_loop: mode == EntryMode::Pwl && opts.closed_loop && grid.is_full_circle(),
    })
}

/// Squared distance from `query` to the entry's representation.
pub fn entry_squared_distance(query: &[f32], entry: &IndexEntry) -> Result<f64> {
    let dim = entry.dim();
    if query.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: query.len(),
        });
    }
    let vertex_min = || {
        entry
            .vectors
            .iter()
            .map(|v| squared_l2(query, v))
            .fold(f64::INFINITY, f64::min)
    };
    Ok(match entry.mode {
        EntryMode::Single => squared_l2(query, &entry.vectors[0]),
        EntryMode::MinDist => vertex_min(),
        EntryMode::Pwl => {
            // vertices are part of the polyline; including them explicitly
            // keeps PWL ≤ MinDist exact in floating point
            let mut best = vertex_min();
            let v = &entry.vectors;
            for w in v.windows(2) {
                best = best.min(squared_point_segment(query, &w[0], &w[1]));
            }
            if entry.closed_loop && v.len() > 2 {
                best = best.min(squared_point_segment(query, &v[v.len() - 1], &v[0]));
            }
            best
        }
    })
}

/// Euclidean distance from `query` to the entry: plain L2 for single
/// entries, nearest stored vector for `MinDist`, nearest point on the
/// polyline for `Pwl`.
pub fn entry_distance(query: &[f32], entry: &IndexEntry) -> Result<f64> {
    entry_squared_distance(query, entry).map(f64::sqrt)
}

/// Builds one entry per image from descriptor sets given in grid order.
/// Entry order follows the first set.
pub fn pooled_database(
    sets: &[DescriptorSet],
    strategy: PoolingStrategy,
    grid: &TransformGrid,
    opts: &PoolOptions,
) -> Result<Vec<IndexEntry>> {
    if sets.len() != grid.size() {
        return Err(Error::InvalidParameter(format!(
            "{} descriptor sets for a grid of {}",
            sets.len(),
            grid.size()
        )));
    }
    let first = &sets[0];
    for (i, s) in sets.iter().enumerate().skip(1) {
        if s.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                found: s.dim(),
            });
        }
        if s.len() != first.len() {
            return Err(Error::IdMismatch(format!(
                "set {i} has {} records, set 0 has {}",
                s.len(),
                first.len()
            )));
        }
    }
    first
        .ids()
        .par_iter()
        .map(|id| {
            let vectors = sets
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    s.get(id)
                        .ok_or_else(|| Error::IdMismatch(format!("image {id:?} missing from set {i}")))
                })
                .collect::<Result<Vec<_>>>()?;
            build_entry_with(id, &vectors, strategy, grid, opts)
        })
        .collect()
}

/// Keeps every `multiple`-th vector of a multi-vector entry, e.g. turning
/// a 10° grid into a 60° grid with `multiple = 6`.
pub fn pwl_step_subsample(entry: &IndexEntry, multiple: usize) -> Result<IndexEntry> {
    if !entry.mode.is_multi() {
        return Err(Error::InvalidParameter("only multi-vector entries can be subsampled".into()));
    }
    let n = entry.vectors.len();
    if multiple == 0 || !(n - 1).is_multiple_of(multiple) {
        return Err(Error::InvalidParameter(format!(
            "step multiple {multiple} does not divide the {} intervals of the grid",
            n - 1
        )));
    }
    Ok(IndexEntry {
        vectors: entry.vectors.iter().step_by(multiple).cloned().collect(),
        ..entry.clone()
    })
}

/// A pooled database together with how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    pub grid: TransformGrid,
    pub strategy: PoolingStrategy,
    pub dim: usize,
    pub entries: Vec<IndexEntry>,
}

impl Index {
    pub fn new(grid: TransformGrid, strategy: PoolingStrategy, entries: Vec<IndexEntry>) -> Result<Self> {
        let dim = entries.first().map_or(0, IndexEntry::dim);
        for e in &entries {
            if e.vectors.is_empty() || e.vectors.iter().any(|v| v.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.dim(),
                });
            }
            if e.mode.is_multi() && e.vectors.len() > grid.size() {
                return Err(Error::InvalidParameter(format!(
                    "entry {:?} holds {} vectors for a grid of {}",
                    e.image_id,
                    e.vectors.len(),
                    grid.size()
                )));
            }
        }
        Ok(Index {
            grid,
            strategy,
            dim,
            entries,
        })
    }

    /// Stored floats across all entries.
    pub fn stored_floats(&self) -> usize {
        self.entries.iter().map(|e| e.vectors.len() * self.dim).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TransformGrid {
        // rotation grids of size n with step 10
        let p = (n as u32 - 1) * 5;
        TransformGrid::rotation(p, 10).unwrap()
    }

    #[test]
    fn grid_sizes() {
        for (p, s, n) in [(30, 10, 7), (90, 10, 19), (180, 10, 37), (0, 10, 1), (180, 60, 7)] {
            assert_eq!(TransformGrid::rotation(p, s).unwrap().size(), n);
        }
        assert_eq!(TransformGrid::rotation(30, 10).unwrap().angles(), vec![-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0]);
        assert!(TransformGrid::rotation(30, 7).is_err());
        assert!(TransformGrid::rotation(190, 10).is_err());
        assert_eq!(TransformGrid::scale(0).unwrap().ratios(), vec![1.0]);
        assert_eq!(TransformGrid::scale(6).unwrap().size(), 7);
        assert_eq!(TransformGrid::scale(2).unwrap().ratios(), vec![1.0, 0.75, 0.5]);
        assert!(TransformGrid::scale(7).is_err());
    }

    #[test]
    fn max_and_avg_definitions() {
        let g = grid(2);
        let e1 = [1.0f32, 0.0];
        let e2 = [0.0f32, 1.0];
        let m = build_entry("a", &[&e1, &e2], PoolingStrategy::Max, &g).unwrap();
        assert_eq!(m.vectors, vec![vec![1.0, 1.0]]);
        assert_eq!(m.mode, EntryMode::Single);
        let a = build_entry("a", &[&e1, &e2], PoolingStrategy::Avg, &g).unwrap();
        assert_eq!(a.vectors, vec![vec![0.5, 0.5]]);
        let r = build_entry_with("a", &[&e1, &e2], PoolingStrategy::Max, &g, &PoolOptions { renormalize: true, ..Default::default() }).unwrap();
        let h = std::f32::consts::FRAC_1_SQRT_2;
        assert!((r.vectors[0][0] - h).abs() < 1e-7);
    }

    #[test]
    fn identical_inputs_pool_to_themselves() {
        let g = grid(3);
        let v = [0.3f32, -0.2, 0.9];
        for s in [PoolingStrategy::Max, PoolingStrategy::Avg] {
            let e = build_entry("a", &[&v, &v, &v], s, &g).unwrap();
            assert_eq!(e.vectors, vec![v.to_vec()]);
        }
    }

    #[test]
    fn multi_entry_sizes_and_closed_loop() {
        let g = TransformGrid::rotation(30, 10).unwrap();
        let vs: Vec<Vec<f32>> = (0..7).map(|i| vec![i as f32, 0.0]).collect();
        let refs: Vec<&[f32]> = vs.iter().map(|v| v.as_slice()).collect();
        let e = build_entry("a", &refs, PoolingStrategy::MinDist, &g).unwrap();
        assert_eq!(e.vectors.len(), 7);
        assert!(!e.closed_loop);
        let full = TransformGrid::rotation(180, 60).unwrap();
        let refs7 = &refs[..7];
        assert!(build_entry("a", refs7, PoolingStrategy::Pwl, &full).unwrap().closed_loop);
        assert!(!build_entry("a", refs7, PoolingStrategy::MinDist, &full).unwrap().closed_loop);
        let open = PoolOptions { closed_loop: false, ..Default::default() };
        assert!(!build_entry_with("a", refs7, PoolingStrategy::Pwl, &full, &open).unwrap().closed_loop);
    }

    #[test]
    fn build_errors() {
        let g = grid(2);
        let v = [1.0f32];
        assert!(build_entry("a", &[&v], PoolingStrategy::Max, &g).is_err());
        assert!(build_entry("a", &[&v, &v], PoolingStrategy::None, &g).is_err());
        assert!(build_entry("a", &[&v, &[1.0, 2.0]], PoolingStrategy::Max, &g).is_err());
    }

    #[test]
    fn planar_distances() {
        let g = grid(2);
        let a = [0.0f32, 0.0];
        let b = [2.0f32, 0.0];
        let md = build_entry("x", &[&a, &b], PoolingStrategy::MinDist, &g).unwrap();
        let pwl = build_entry("x", &[&a, &b], PoolingStrategy::Pwl, &g).unwrap();
        let q = [1.0f32, 1.0];
        assert!((entry_distance(&q, &md).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!((entry_distance(&q, &pwl).unwrap() - 1.0).abs() < 1e-12);
        for v in [&a, &b] {
            assert_eq!(entry_distance(v, &md).unwrap(), 0.0);
            assert_eq!(entry_distance(v, &pwl).unwrap(), 0.0);
        }
        assert!(entry_distance(&[1.0], &pwl).is_err());
    }

    #[test]
    fn closed_loop_adds_wrap_segment() {
        let vs = [[0.0f32, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]];
        let mut e = IndexEntry {
            image_id: "sq".into(),
            mode: EntryMode::Pwl,
            vectors: vs.iter().map(|v| v.to_vec()).collect(),
            closed_loop: false,
        };
        let q = [-1.0f32, 1.0];
        assert!((entry_distance(&q, &e).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        e.closed_loop = true;
        assert!((entry_distance(&q, &e).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pwl_depends_on_order_mindist_does_not() {
        let g = grid(3);
        let (a, b, c) = ([0.0f32, 0.0], [2.0f32, 0.0], [0.0f32, 2.0]);
        let q = [1.0f32, 0.0];
        let pwl1 = build_entry("x", &[&a, &b, &c], PoolingStrategy::Pwl, &g).unwrap();
        let pwl2 = build_entry("x", &[&b, &a, &c], PoolingStrategy::Pwl, &g).unwrap();
        let md1 = build_entry("x", &[&a, &b, &c], PoolingStrategy::MinDist, &g).unwrap();
        let md2 = build_entry("x", &[&c, &a, &b], PoolingStrategy::MinDist, &g).unwrap();
        assert_eq!(entry_distance(&q, &md1).unwrap(), entry_distance(&q, &md2).unwrap());
        // (1,0) lies on segment a-b, which the second ordering still has
        assert_eq!(entry_distance(&q, &pwl1).unwrap(), 0.0);
        let q2 = [1.0f32, 1.0];
        // on segment b-c in the first ordering only
        assert!(entry_distance(&q2, &pwl1).unwrap() < 1e-7);
        assert!(entry_distance(&q2, &pwl2).unwrap() > 0.5);
        for s in [PoolingStrategy::Max, PoolingStrategy::Avg] {
            let x = build_entry("x", &[&a, &b, &c], s, &g).unwrap();
            let y = build_entry("x", &[&c, &b, &a], s, &g).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn subsampling() {
        let g = TransformGrid::rotation(180, 10).unwrap();
        let vs: Vec<Vec<f32>> = (0..37).map(|i| vec![(i as f32).sin(), (i as f32).cos()]).collect();
        let refs: Vec<&[f32]> = vs.iter().map(|v| v.as_slice()).collect();
        let e = build_entry("a", &refs, PoolingStrategy::Pwl, &g).unwrap();
        let s = pwl_step_subsample(&e, 6).unwrap();
        assert_eq!(s.vectors.len(), 7);
        assert!(s.closed_loop);
        assert_eq!(s.vectors[1], vs[6]);
        assert_eq!(pwl_step_subsample(&e, 1).unwrap(), e);
        assert!(pwl_step_subsample(&e, 5).is_err());
        assert!(pwl_step_subsample(&e, 0).is_err());
        for kept in s.vectors.iter() {
            assert_eq!(entry_distance(kept, &s).unwrap(), 0.0);
            assert_eq!(entry_distance(kept, &e).unwrap(), 0.0);
        }
        let single = IndexEntry::single("b", vec![1.0]);
        assert!(pwl_step_subsample(&single, 1).is_err());
    }

    fn set(ids: &[&str], vals: &[[f32; 2]]) -> DescriptorSet {
        let mut s = DescriptorSet::new(2).unwrap();
        for (id, v) in ids.iter().zip(vals) {
            s.push(*id, v.to_vec()).unwrap();
        }
        s
    }

    #[test]
    fn pooled_database_behaviour() {
        let g1 = TransformGrid::identity();
        let s = set(&["a", "b"], &[[1.0, 2.0], [3.0, 4.0]]);
        let entries = pooled_database(std::slice::from_ref(&s), PoolingStrategy::None, &g1, &PoolOptions::default()).unwrap();
        assert_eq!(entries[0], IndexEntry::single("a", vec![1.0, 2.0]));
        assert_eq!(entries[1], IndexEntry::single("b", vec![3.0, 4.0]));

        let g3 = grid(3);
        let sets = vec![
            set(&["a", "b"], &[[1.0, 0.0], [0.0, 0.0]]),
            set(&["b", "a"], &[[5.0, -1.0], [0.0, 2.0]]),
            set(&["a", "b"], &[[-1.0, 1.0], [1.0, 1.0]]),
        ];
        let e = pooled_database(&sets, PoolingStrategy::Max, &g3, &PoolOptions::default()).unwrap();
        assert_eq!(e[0].vectors, vec![vec![1.0, 2.0]]);
        assert_eq!(e[1].vectors, vec![vec![5.0, 1.0]]);

        let md = pooled_database(&sets, PoolingStrategy::MinDist, &g3, &PoolOptions::default()).unwrap();
        let idx = Index::new(g3, PoolingStrategy::MinDist, md).unwrap();
        assert_eq!(idx.stored_floats(), 2 * 3 * 2);

        let bad = vec![sets[0].clone(), set(&["a", "c"], &[[0.0, 0.0], [0.0, 0.0]]), sets[2].clone()];
        assert!(matches!(pooled_database(&bad, PoolingStrategy::Max, &g3, &PoolOptions::default()), Err(Error::IdMismatch(_))));
        assert!(pooled_database(&sets[..2], PoolingStrategy::Max, &g3, &PoolOptions::default()).is_err());
    }

    #[test]
    fn single_grid_strategies_agree() {
        let g = TransformGrid::identity();
        let v = [0.5f32, -0.25, 1.0];
        let q = [0.1f32, 0.2, 0.3];
        let d: Vec<f64> = [PoolingStrategy::None, PoolingStrategy::Max, PoolingStrategy::Avg, PoolingStrategy::MinDist, PoolingStrategy::Pwl]
            .iter()
            .map(|&s| entry_distance(&q, &build_entry("a", &[&v], s, &g).unwrap()).unwrap())
            .collect();
        assert!(d.windows(2).all(|w| w[0] == w[1]), "{d:?}");
    }

    proptest::proptest! {
        #[test]
        fn pwl_le_mindist_le_vertices(
            vs in proptest::collection::vec(proptest::collection::vec(-2.0f32..2.0, 5), 1..6),
            q in proptest::collection::vec(-2.0f32..2.0, 5),
        ) {
            let g = grid(vs.len());
            let refs: Vec<&[f32]> = vs.iter().map(|v| v.as_slice()).collect();
            let md = build_entry("x", &refs, PoolingStrategy::MinDist, &g).unwrap();
            let pwl = build_entry("x", &refs, PoolingStrategy::Pwl, &g).unwrap();
            let dm = entry_distance(&q, &md).unwrap();
            let dp = entry_distance(&q, &pwl).unwrap();
            proptest::prop_assert!(dp <= dm);
            for v in &vs {
                proptest::prop_assert!(dm <= crate::linalg::l2(&q, v));
            }
            proptest::prop_assert!(dp >= 0.0);
        }

        #[test]
        fn max_pooling_is_monotone(
            vs in proptest::collection::vec(proptest::collection::vec(-2.0f32..2.0, 4), 2..6),
        ) {
            let n = vs.len();
            let refs: Vec<&[f32]> = vs.iter().map(|v| v.as_slice()).collect();
            let fewer = build_entry("x", &refs[..n - 1], PoolingStrategy::Max, &grid(n - 1)).unwrap();
            let more = build_entry("x", &refs, PoolingStrategy::Max, &grid(n)).unwrap();
            for (a, b) in fewer.vectors[0].iter().zip(&more.vectors[0]) {
                proptest::prop_assert!(b >= a);
            }
        }
    }
}
