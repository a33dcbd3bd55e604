//! Partition of surface points into slices coherent in position and normal.

use crate::shading::SurfacePoint;

/// Default weight of the normal relative to the scene-diagonal-scaled position.
pub const DEFAULT_NORMAL_WEIGHT: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    /// Indices into the surface-point list; their order defines matrix rows.
    pub points: Vec<usize>,
    /// Mean 6D feature (scaled position, weighted normal).
    pub centroid: [f64; 6],
}

impl Slice {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// 6D feature used for clustering: `position / diagonal` and `normal * normal_weight`.
pub fn feature(p: &SurfacePoint, diagonal: f64, normal_weight: f64) -> [f64; 6] {
    let s = 1.0 / diagonal;
    [
        p.position.x * s,
        p.position.y * s,
        p.position.z * s,
        p.normal.x * normal_weight,
        p.normal.y * normal_weight,
        p.normal.z * normal_weight,
    ]
}

/// Recursive median split along the feature dimension of largest variance,
/// stopping at `target_size` points or fewer.
pub fn slice_points(points: &[SurfacePoint], target_size: usize, diagonal: f64, normal_weight: f64) -> Vec<Slice> {
    assert!(target_size >= 1, "target slice size must be >= 1");
    if points.is_empty() {
        return Vec::new();
    }
    let features: Vec<[f64; 6]> = points.iter().map(|p| feature(p, diagonal, normal_weight)).collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    let mut out = Vec::new();
    split(&features, &mut order, target_size, &mut out);
    out
}

fn split(features: &[[f64; 6]], members: &mut [usize], target: usize, out: &mut Vec<Slice>) {
    let mean = centroid(features, members);
    if members.len() <= target {
        out.push(Slice {
            points: members.to_vec(),
            centroid: mean,
        });
        return;
    }
    let mut var = [0.0; 6];
    for &i in members.iter() {
        for d in 0..6 {
            let e = features[i][d] - mean[d];
            var[d] += e * e;
        }
    }
    let dim = (0..6)
        .max_by(|&a, &b| var[a].total_cmp(&var[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    members.sort_by(|&a, &b| features[a][dim].total_cmp(&features[b][dim]).then(a.cmp(&b)));
    // The lower half keeps the median element.
    let mid = members.len().div_ceil(2);
    let (lo, hi) = members.split_at_mut(mid);
    split(features, lo, target, out);
    split(features, hi, target, out);
}

fn centroid(features: &[[f64; 6]], members: &[usize]) -> [f64; 6] {
    let mut c = [0.0; 6];
    for &i in members {
        for d in 0..6 {
            c[d] += features[i][d];
        }
    }
    let n = members.len().max(1) as f64;
    c.map(|v| v / n)
}
