//! Small dense vector kernels. Inputs are stored as `f32`, all arithmetic
//! accumulates in `f64`.

#[inline]
pub(crate) fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

#[cfg(test)]
pub(crate) fn l2(a: &[f32], b: &[f32]) -> f64 {
    squared_l2(a, b).sqrt()
}

/// Squared Euclidean distance from `q` to the segment `[a, b]`.
///
/// The closest point is `a + t (b - a)` with `t` the scalar projection
/// clamped to `[0, 1]`. A zero-length segment degenerates to the vertex.
pub(crate) fn squared_point_segment(q: &[f32], a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0;
    let mut len2 = 0.0;
    for i in 0..q.len() {
        let ab = f64::from(b[i]) - f64::from(a[i]);
        let aq = f64::from(q[i]) - f64::from(a[i]);
        dot += ab * aq;
        len2 += ab * ab;
    }
    if len2 <= 0.0 {
        return squared_l2(q, a);
    }
    let t = (dot / len2).clamp(0.0, 1.0);
    if t == 0.0 {
        return squared_l2(q, a);
    }
    if t == 1.0 {
        return squared_l2(q, b);
    }
    let mut acc = 0.0;
    for i in 0..q.len() {
        let ai = f64::from(a[i]);
        let p = ai + t * (f64::from(b[i]) - ai);
        let d = f64::from(q[i]) - p;
        acc += d * d;
    }
    acc
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_midpoint() {
        let d = squared_point_segment(&[1.0, 1.0], &[0.0, 0.0], &[2.0, 0.0]);
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn segment_clamps_to_endpoints() {
        let d = squared_point_segment(&[-3.0, 4.0], &[0.0, 0.0], &[2.0, 0.0]);
        assert_eq!(d, 25.0);
        let d = squared_point_segment(&[5.0, 4.0], &[0.0, 0.0], &[2.0, 0.0]);
        assert_eq!(d, 25.0);
    }

    #[test]
    fn degenerate_segment() {
        let d = squared_point_segment(&[3.0, 4.0], &[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(d, 25.0);
    }
}
