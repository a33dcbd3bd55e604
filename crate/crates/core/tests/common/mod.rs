//! Oracles shared by the integration tests. Each one recomputes its answer
//! by the most direct means available, without the crate's accelerated paths.
#![allow(dead_code)]

use std::f64::consts::PI;

use manylight::bvh::Ray;
use manylight::coarsen::EntryEvaluator;
use manylight::scene::Triangle;
use manylight::shading::Shader;
use manylight::{Color, LightTree, Scene, Vec3, Vpl};
use nalgebra::DMatrix;
use rand::Rng;

pub fn random_vec<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    )
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = random_vec(rng, -1.0, 1.0);
        let l = v.length();
        if l > 1e-3 && l <= 1.0 {
            return v / l;
        }
    }
}

/// Triangles with a random corner in the unit cube and edges up to `size`.
pub fn random_triangles<R: Rng>(rng: &mut R, n: usize, size: f64) -> Vec<Triangle> {
    (0..n)
        .map(|_| {
            let a = random_vec(rng, 0.0, 1.0);
            let b = a + random_vec(rng, -size, size);
            let c = a + random_vec(rng, -size, size);
            Triangle::new(a, b, c, 0)
        })
        .collect()
}

/// Nearest hit by testing every triangle: `(triangle, t)`.
pub fn linear_intersect(tris: &[Triangle], ray: &Ray) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in tris.iter().enumerate() {
        if let Some((d, _, _)) = t.intersect(ray) {
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((i, d));
            }
        }
    }
    best
}

pub fn linear_visible(tris: &[Triangle], p: Vec3, q: Vec3, eps: f64) -> bool {
    let d = q - p;
    let len = d.length();
    if len <= 2.0 * eps {
        return true;
    }
    let ray = Ray::segment(p, d / len, eps, len - eps);
    tris.iter().all(|t| t.intersect(&ray).is_none())
}

/// Nonnegative `rows x cols` matrix of rank at most `rank`, factors uniform on [0, 1).
pub fn low_rank<R: Rng>(rng: &mut R, rows: usize, cols: usize, rank: usize) -> DMatrix<f64> {
    let x = DMatrix::from_fn(rows, rank, |_, _| rng.random::<f64>());
    let y = DMatrix::from_fn(rank, cols, |_, _| rng.random::<f64>());
    x * y
}

/// Observes a uniformly random `rate` fraction of entries of `a`. Returns the
/// observed triples and a mask.
pub fn observe<R: Rng>(rng: &mut R, a: &DMatrix<f64>, rate: f64) -> (Vec<(usize, usize, f64)>, Vec<bool>) {
    let (m, n) = a.shape();
    let k = (rate * (m * n) as f64).round() as usize;
    let mut mask = vec![false; m * n];
    let entries = rand::seq::index::sample(rng, m * n, k)
        .into_iter()
        .map(|e| {
            mask[e] = true;
            (e / n, e % n, a[(e / n, e % n)])
        })
        .collect();
    (entries, mask)
}

/// `||P_unobserved(b - a)||_F / ||P_unobserved(a)||_F`.
pub fn held_out_error(a: &DMatrix<f64>, b: &DMatrix<f64>, mask: &[bool]) -> f64 {
    let n = a.ncols();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..n {
            if !mask[i * n + j] {
                num += (b[(i, j)] - a[(i, j)]).powi(2);
                den += a[(i, j)].powi(2);
            }
        }
    }
    (num / den).sqrt()
}

/// Lighting-matrix source backed by a dense table of geometry terms.
pub struct Table {
    pub g: Vec<Vec<f64>>,
}

impl EntryEvaluator for Table {
    fn rows(&self) -> usize {
        self.g.len()
    }
    fn albedo(&self, _row: usize) -> Color {
        Color::gray(1.0)
    }
    fn geometry(&self, row: usize, vpl: usize) -> (f64, bool) {
        (self.g[row][vpl], false)
    }
}

/// A merge found by exhaustive search: `(parent, cost)`.
pub type OracleMerge = (usize, f64);

/// Replays greedy coarsening from the leaves of `tree` by scoring every
/// mergeable sibling pair from scratch at each step, with every row sampled.
/// Ties go to the lower parent index.
pub fn exhaustive_merge_order(tree: &LightTree, table: &Table, steps: usize) -> Vec<OracleMerge> {
    let rows = table.g.len();
    let column = |node: usize| -> Vec<f64> {
        let n = tree.node(node);
        (0..rows)
            .map(|r| (n.intensity * table.g[r][n.representative]).luminance())
            .collect()
    };
    let mut cut: Vec<usize> = (0..tree.leaf_count()).map(|v| tree.leaf_of(v)).collect();
    let mut cost = vec![0.0; tree.nodes().len()];
    let mut order = Vec::new();
    for _ in 0..steps {
        let mut best: Option<OracleMerge> = None;
        for p in 0..tree.nodes().len() {
            let Some((l, r)) = tree.node(p).children else { continue };
            if !(cut.contains(&l) && cut.contains(&r)) {
                continue;
            }
            let (a, b) = if tree.node(l).representative == tree.node(p).representative {
                (l, r)
            } else {
                (r, l)
            };
            let (va, vb) = (column(a), column(b));
            let (ia, ib) = (tree.node(a).intensity.luminance(), tree.node(b).intensity.luminance());
            let eps = if ia == 0.0 {
                vb.iter().map(|v| v.abs()).fold(0.0, f64::max)
            } else {
                va.iter()
                    .zip(&vb)
                    .map(|(x, y)| (y - x * ib / ia).abs())
                    .fold(0.0, f64::max)
            };
            let c = eps + cost[b];
            if best.is_none_or(|(bp, bc)| c < bc || (c == bc && p < bp)) {
                best = Some((p, c));
            }
        }
        let Some((p, c)) = best else { break };
        let (l, r) = tree.node(p).children.unwrap();
        cut.retain(|&n| n != l && n != r);
        cut.push(p);
        cost[p] = c;
        order.push((p, c));
    }
    order
}

/// Random VPLs in the unit cube with random orientation and intensity.
pub fn random_vpls<R: Rng>(rng: &mut R, n: usize) -> Vec<Vpl> {
    (0..n)
        .map(|_| Vpl {
            position: random_vec(rng, 0.0, 1.0),
            normal: random_unit(rng),
            intensity: Color::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) + Color::gray(0.01),
        })
        .collect()
}

/// Irradiance-times-albedo at the first surface seen through each pixel
/// center, estimated by path tracing with next-event estimation on the area
/// lights. `indirect_levels` bounces of indirect light are followed. Lights are
/// one-sided Lambertian emitters of radiance `power / (pi area)`.
pub fn path_trace<R: Rng>(
    scene: &Scene,
    width: usize,
    height: usize,
    samples: usize,
    indirect_levels: usize,
    rng: &mut R,
) -> Vec<Option<Color>> {
    let eps = 1e-4 * scene.diagonal();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let ray = scene.camera().primary_ray(x, y, width, height);
            let Some(hit) = scene.bvh().intersect(&ray) else {
                out.push(None);
                continue;
            };
            let n = if hit.normal.dot(ray.dir) > 0.0 {
                -hit.normal
            } else {
                hit.normal
            };
            let mut sum = Color::BLACK;
            for _ in 0..samples {
                sum += irradiance(scene, hit.position, n, indirect_levels, eps, rng);
            }
            out.push(Some(scene.albedo(hit.triangle) * (sum / samples as f64)));
        }
    }
    out
}

fn irradiance<R: Rng>(scene: &Scene, p: Vec3, n: Vec3, levels: usize, eps: f64, rng: &mut R) -> Color {
    let mut e = Color::BLACK;
    for light in scene.lights() {
        let q = light.point_at(rng.random(), rng.random());
        let d = q - p;
        let d2 = d.length_squared();
        let w = d / d2.sqrt();
        let (ci, cj) = (n.dot(w), -light.normal().dot(w));
        if ci > 0.0 && cj > 0.0 && scene.bvh().visible(p, q, eps) {
            let radiance = light.power / (PI * light.area());
            e += radiance * (ci * cj * light.area() / d2);
        }
    }
    if levels > 0 {
        // Cosine sampling: E_indirect = pi * E[L_in], and L_in = albedo E / pi.
        let (t, b) = n.orthonormal_basis();
        let (u1, u2): (f64, f64) = (rng.random(), rng.random());
        let r = u1.sqrt();
        let phi = 2.0 * PI * u2;
        let dir = (t * (r * phi.cos()) + b * (r * phi.sin()) + n * (1.0 - u1).max(0.0).sqrt()).normalized();
        if let Some(h) = scene.bvh().intersect(&Ray::segment(p, dir, eps, f64::INFINITY)) {
            let hn = if h.normal.dot(dir) > 0.0 { -h.normal } else { h.normal };
            e += scene.albedo(h.triangle) * irradiance(scene, h.position, hn, levels - 1, eps, rng);
        }
    }
    e
}

/// Relative RMS difference over the pixels both images cover.
pub fn relative_rms(test: &[Option<Color>], reference: &[Option<Color>]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (t, r) in test.iter().zip(reference) {
        if let (Some(t), Some(r)) = (t, r) {
            num += (t.luminance() - r.luminance()).powi(2);
            den += r.luminance().powi(2);
        }
    }
    (num / den).sqrt()
}

/// Brute-force sum over `vpls` at the points the camera sees.
pub fn vpl_image(scene: &Scene, vpls: &[Vpl], width: usize, height: usize, clamp: f64) -> Vec<Option<Color>> {
    let shader = Shader::for_scene(scene, clamp);
    let points = manylight::shading::generate_surface_points(scene, width, height);
    let mut img = vec![None; width * height];
    for p in &points {
        img[p.pixel] = Some(vpls.iter().map(|v| shader.shade(p, v)).sum());
    }
    img
}
