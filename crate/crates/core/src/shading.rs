//! Surface points (matrix rows) and evaluation of single lighting-matrix entries.

use std::f64::consts::FRAC_1_PI;

use crate::bvh::Bvh;
use crate::math::{Color, Vec3};
use crate::scene::Scene;
use crate::vpl::Vpl;

/// Default distance clamp as a fraction of the scene diagonal.
pub const DEFAULT_CLAMP_FACTOR: f64 = 0.01;
/// Shadow-ray endpoint offset as a fraction of the scene diagonal.
pub const SHADOW_EPS_FACTOR: f64 = 1e-4;

/// A shaded point seen through one pixel. One row of the lighting matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub pixel: usize,
    pub position: Vec3,
    /// Unit normal facing the camera.
    pub normal: Vec3,
    pub albedo: Color,
}

/// Everything needed to evaluate `A(i, j)` besides the point and the light.
#[derive(Clone, Copy, Debug)]
pub struct Shader<'a> {
    pub bvh: &'a Bvh,
    pub clamp_dist: f64,
    pub shadow_eps: f64,
}

impl<'a> Shader<'a> {
    pub fn new(bvh: &'a Bvh, clamp_dist: f64, shadow_eps: f64) -> Self {
        assert!(clamp_dist > 0.0, "clamp distance must be positive");
        Shader {
            bvh,
            clamp_dist,
            shadow_eps,
        }
    }

    /// Shader with the distance clamp given as a fraction of the scene diagonal.
    pub fn for_scene(scene: &'a Scene, clamp_factor: f64) -> Self {
        let diag = scene.diagonal();
        Shader::new(scene.bvh(), clamp_factor * diag, SHADOW_EPS_FACTOR * diag)
    }

    /// `max(cos_i, 0) max(cos_j, 0) V / (pi max(d^2, c^2))`: the entry with albedo
    /// and intensity factored out. The flag reports whether a shadow ray was cast.
    pub fn geometry(&self, position: Vec3, normal: Vec3, vpl: &Vpl) -> (f64, bool) {
        let d = vpl.position - position;
        let d2 = d.length_squared();
        if d2 == 0.0 {
            return (0.0, false);
        }
        let dist = d2.sqrt();
        let w = d / dist;
        let cos_i = normal.dot(w);
        let cos_j = -vpl.normal.dot(w);
        if cos_i <= 0.0 || cos_j <= 0.0 {
            return (0.0, false);
        }
        if !self.bvh.visible(position, vpl.position, self.shadow_eps) {
            return (0.0, true);
        }
        let clamp2 = self.clamp_dist * self.clamp_dist;
        (cos_i * cos_j * FRAC_1_PI / d2.max(clamp2), true)
    }

    /// `A(i, j)` for surface point `point` and light `vpl`.
    pub fn shade(&self, point: &SurfacePoint, vpl: &Vpl) -> Color {
        let (g, _) = self.geometry(point.position, point.normal, vpl);
        entry_value(point.albedo, vpl.intensity, g)
    }
}

/// Combines the factored terms of an entry. Every entry in the crate is
/// assembled through here so cached geometry reproduces `shade` bit for bit.
#[inline]
pub fn entry_value(albedo: Color, intensity: Color, geometry: f64) -> Color {
    albedo * intensity * geometry
}

/// Casts one primary ray per pixel center. Pixels whose ray escapes are
/// background and produce no point.
pub fn generate_surface_points(scene: &Scene, width: usize, height: usize) -> Vec<SurfacePoint> {
    let camera = scene.camera();
    let mut points = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let ray = camera.primary_ray(x, y, width, height);
            if let Some(hit) = scene.bvh().intersect(&ray) {
                let mut n = hit.normal;
                if n.dot(ray.dir) > 0.0 {
                    n = -n;
                }
                points.push(SurfacePoint {
                    pixel: y * width + x,
                    position: hit.position,
                    normal: n,
                    albedo: scene.albedo(hit.triangle),
                });
            }
        }
    }
    points
}
