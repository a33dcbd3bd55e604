//! Scene description: triangles, diffuse materials, parallelogram area lights
//! and a pinhole camera.

use crate::bvh::{Bvh, Ray};
use crate::error::{Error, Result};
use crate::math::{Aabb, Color, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub v: [Vec3; 3],
    pub material: usize,
}

impl Triangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3, material: usize) -> Self {
        Triangle { v: [a, b, c], material }
    }

    /// Unnormalized geometric normal, `(v1 - v0) x (v2 - v0)`.
    pub fn cross(&self) -> Vec3 {
        (self.v[1] - self.v[0]).cross(self.v[2] - self.v[0])
    }

    pub fn normal(&self) -> Vec3 {
        self.cross().normalized()
    }

    pub fn area(&self) -> f64 {
        0.5 * self.cross().length()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.v)
    }

    pub fn centroid(&self) -> Vec3 {
        (self.v[0] + self.v[1] + self.v[2]) / 3.0
    }

    /// Moller-Trumbore. Returns `(t, u, v)` for a hit with `t_min < t < t_max`.
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, f64, f64)> {
        let e1 = self.v[1] - self.v[0];
        let e2 = self.v[2] - self.v[0];
        let p = ray.dir.cross(e2);
        let det = e1.dot(p);
        if det.abs() < 1e-15 {
            return None;
        }
        let inv_det = 1.0 / det;
        let s = ray.origin - self.v[0];
        let u = s.dot(p) * inv_det;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(e1);
        let v = ray.dir.dot(q) * inv_det;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(q) * inv_det;
        if t > ray.t_min && t < ray.t_max {
            Some((t, u, v))
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    /// Diffuse reflectance, each component in `[0, 1]`.
    pub albedo: Color,
    pub emission: Color,
}

impl Material {
    pub fn diffuse(albedo: Color) -> Self {
        Material {
            albedo,
            emission: Color::BLACK,
        }
    }
}

/// One-sided parallelogram emitter spanned by `edge_u` and `edge_v` from `corner`.
///
/// `power` is the emitter's on-axis radiant intensity (radiance times area),
/// the same unit that VPL intensities carry. Emitted radiance is `power / area`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AreaLight {
    pub corner: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
    pub power: Color,
}

impl AreaLight {
    /// Builds a light from four corners given in order around the quad.
    /// The emitting side is the one `(c1 - c0) x (c3 - c0)` points to.
    pub fn from_corners(corners: [Vec3; 4], power: Color) -> Result<Self> {
        let [c0, c1, c2, c3] = corners;
        let edge_u = c1 - c0;
        let edge_v = c3 - c0;
        let scale = edge_u.length().max(edge_v.length());
        if (c0 + edge_u + edge_v - c2).length() > 1e-6 * scale.max(1.0) {
            return Err(Error::InvalidParameter(
                "area light corners do not form a parallelogram".into(),
            ));
        }
        if !power.is_nonnegative() || !power.is_finite() {
            return Err(Error::InvalidParameter("area light power must be >= 0".into()));
        }
        let light = AreaLight {
            corner: c0,
            edge_u,
            edge_v,
            power,
        };
        if light.area() <= 0.0 {
            return Err(Error::InvalidParameter("area light has zero area".into()));
        }
        Ok(light)
    }

    pub fn normal(&self) -> Vec3 {
        self.edge_u.cross(self.edge_v).normalized()
    }

    pub fn area(&self) -> f64 {
        self.edge_u.cross(self.edge_v).length()
    }

    /// Maps `(s, t)` in the unit square uniformly onto the light.
    pub fn point_at(&self, s: f64, t: f64) -> Vec3 {
        self.corner + self.edge_u * s + self.edge_v * t
    }

    pub fn corners(&self) -> [Vec3; 4] {
        [
            self.corner,
            self.corner + self.edge_u,
            self.corner + self.edge_u + self.edge_v,
            self.corner + self.edge_v,
        ]
    }

    /// Radiance leaving the emitting side.
    pub fn radiance(&self) -> Color {
        self.power / self.area()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    pub vfov_degrees: f64,
}

impl Camera {
    pub fn look_at(position: Vec3, target: Vec3, up: Vec3, vfov_degrees: f64) -> Result<Self> {
        let forward = target - position;
        if forward.length() == 0.0 {
            return Err(Error::InvalidParameter("camera target equals position".into()));
        }
        let forward = forward.normalized();
        let right = forward.cross(up);
        if right.length() < 1e-12 {
            return Err(Error::InvalidParameter(
                "camera up is parallel to view direction".into(),
            ));
        }
        let right = right.normalized();
        if !(vfov_degrees > 0.0 && vfov_degrees < 180.0) {
            return Err(Error::InvalidParameter(format!(
                "field of view {vfov_degrees} outside (0, 180)"
            )));
        }
        Ok(Camera {
            position,
            forward,
            right,
            up: right.cross(forward),
            vfov_degrees,
        })
    }

    pub fn forward(&self) -> Vec3 {
        self.forward
    }

    pub fn up(&self) -> Vec3 {
        self.up
    }

    /// Primary ray through the center of pixel `(x, y)`, row 0 at the top.
    pub fn primary_ray(&self, x: usize, y: usize, width: usize, height: usize) -> Ray {
        let tan_half = (self.vfov_degrees.to_radians() * 0.5).tan();
        let aspect = width as f64 / height as f64;
        let sx = (2.0 * (x as f64 + 0.5) / width as f64 - 1.0) * tan_half * aspect;
        let sy = (1.0 - 2.0 * (y as f64 + 0.5) / height as f64) * tan_half;
        let dir = (self.forward + self.right * sx + self.up * sy).normalized();
        Ray::new(self.position, dir)
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    triangles: Vec<Triangle>,
    materials: Vec<Material>,
    lights: Vec<AreaLight>,
    camera: Camera,
    bvh: Bvh,
    bounds: Aabb,
}

impl Scene {
    pub fn new(
        triangles: Vec<Triangle>,
        materials: Vec<Material>,
        lights: Vec<AreaLight>,
        camera: Camera,
    ) -> Result<Self> {
        for (i, m) in materials.iter().enumerate() {
            let a = m.albedo;
            if !(a.is_nonnegative() && a.max_component() <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "material {i}: albedo must lie in [0, 1]"
                )));
            }
            if !m.emission.is_nonnegative() {
                return Err(Error::InvalidParameter(format!("material {i}: emission must be >= 0")));
            }
        }
        for (i, t) in triangles.iter().enumerate() {
            if t.material >= materials.len() {
                return Err(Error::InvalidParameter(format!(
                    "triangle {i}: material index {} out of range",
                    t.material
                )));
            }
            if !(t.area() > 0.0) {
                return Err(Error::DegenerateTriangle(i));
            }
        }
        let bvh = Bvh::build(&triangles)?;
        let bounds = lights
            .iter()
            .flat_map(|l| l.corners())
            .fold(bvh.bounds(), |b, p| b.grow_point(p));
        Ok(Scene {
            triangles,
            materials,
            lights,
            camera,
            bvh,
            bounds,
        })
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    pub fn lights(&self) -> &[AreaLight] {
        &self.lights
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn diagonal(&self) -> f64 {
        self.bounds.diagonal()
    }

    pub fn albedo(&self, triangle: usize) -> Color {
        self.materials[self.triangles[triangle].material].albedo
    }

    /// Sum of the emitters' `power`.
    pub fn total_power(&self) -> Color {
        self.lights.iter().map(|l| l.power).sum()
    }

    /// Returns a copy with every light's power scaled by `s`.
    pub fn with_light_scale(&self, s: f64) -> Scene {
        let mut scene = self.clone();
        for l in &mut scene.lights {
            l.power = l.power * s;
        }
        scene
    }

    /// The Cornell box (original measurements, scaled to meters-ish units),
    /// with the light quad just below the ceiling and an open front.
    pub fn cornell_box() -> Scene {
        let s = 0.01;
        let p = |x: f64, y: f64, z: f64| Vec3::new(x * s, y * s, z * s);
        let materials = vec![
            Material::diffuse(Color::new(0.73, 0.73, 0.73)),
            Material::diffuse(Color::new(0.63, 0.065, 0.05)),
            Material::diffuse(Color::new(0.14, 0.45, 0.091)),
        ];
        let (white, red, green) = (0, 1, 2);
        let mut tris = Vec::new();
        // floor, ceiling, back wall
        push_quad(
            &mut tris,
            [
                p(552.8, 0.0, 0.0),
                p(0.0, 0.0, 0.0),
                p(0.0, 0.0, 559.2),
                p(549.6, 0.0, 559.2),
            ],
            white,
        );
        push_quad(
            &mut tris,
            [
                p(556.0, 548.8, 0.0),
                p(556.0, 548.8, 559.2),
                p(0.0, 548.8, 559.2),
                p(0.0, 548.8, 0.0),
            ],
            white,
        );
        push_quad(
            &mut tris,
            [
                p(549.6, 0.0, 559.2),
                p(0.0, 0.0, 559.2),
                p(0.0, 548.8, 559.2),
                p(556.0, 548.8, 559.2),
            ],
            white,
        );
        // right (green) and left (red) walls as seen from the camera
        push_quad(
            &mut tris,
            [
                p(0.0, 0.0, 559.2),
                p(0.0, 0.0, 0.0),
                p(0.0, 548.8, 0.0),
                p(0.0, 548.8, 559.2),
            ],
            green,
        );
        push_quad(
            &mut tris,
            [
                p(552.8, 0.0, 0.0),
                p(549.6, 0.0, 559.2),
                p(556.0, 548.8, 559.2),
                p(556.0, 548.8, 0.0),
            ],
            red,
        );
        push_block(
            &mut tris,
            [
                p(130.0, 165.0, 65.0),
                p(82.0, 165.0, 225.0),
                p(240.0, 165.0, 272.0),
                p(290.0, 165.0, 114.0),
            ],
            white,
        );
        push_block(
            &mut tris,
            [
                p(423.0, 330.0, 247.0),
                p(265.0, 330.0, 296.0),
                p(314.0, 330.0, 456.0),
                p(472.0, 330.0, 406.0),
            ],
            white,
        );

        let light = AreaLight::from_corners(
            [
                p(343.0, 548.0, 227.0),
                p(343.0, 548.0, 332.0),
                p(213.0, 548.0, 332.0),
                p(213.0, 548.0, 227.0),
            ],
            Color::new(18.4, 15.6, 8.0) * 4.0,
        )
        .expect("valid light");
        let camera = Camera::look_at(
            p(278.0, 273.0, -800.0),
            p(278.0, 273.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            39.3,
        )
        .expect("valid camera");
        Scene::new(tris, materials, vec![light], camera).expect("valid scene")
    }

    /// A closed unit cube with white walls, a ceiling light and the camera inside.
    pub fn white_box() -> Scene {
        let materials = vec![Material::diffuse(Color::gray(0.8))];
        let p = Vec3::new;
        let mut tris = Vec::new();
        let c = [
            p(0.0, 0.0, 0.0),
            p(1.0, 0.0, 0.0),
            p(1.0, 1.0, 0.0),
            p(0.0, 1.0, 0.0),
            p(0.0, 0.0, 1.0),
            p(1.0, 0.0, 1.0),
            p(1.0, 1.0, 1.0),
            p(0.0, 1.0, 1.0),
        ];
        for f in [
            [0, 1, 2, 3],
            [5, 4, 7, 6],
            [4, 0, 3, 7],
            [1, 5, 6, 2],
            [4, 5, 1, 0],
            [3, 2, 6, 7],
        ] {
            push_quad(&mut tris, [c[f[0]], c[f[1]], c[f[2]], c[f[3]]], 0);
        }
        let light = AreaLight::from_corners(
            [
                p(0.35, 0.99, 0.35),
                p(0.65, 0.99, 0.35),
                p(0.65, 0.99, 0.65),
                p(0.35, 0.99, 0.65),
            ],
            Color::gray(1.0),
        )
        .expect("valid light");
        let camera = Camera::look_at(p(0.5, 0.5, 0.02), p(0.5, 0.45, 1.0), Vec3::new(0.0, 1.0, 0.0), 70.0)
            .expect("valid camera");
        Scene::new(tris, materials, vec![light], camera).expect("valid scene")
    }
}

fn push_quad(tris: &mut Vec<Triangle>, q: [Vec3; 4], material: usize) {
    tris.push(Triangle::new(q[0], q[1], q[2], material));
    tris.push(Triangle::new(q[0], q[2], q[3], material));
}

/// A prism from a top quad down to y = 0.
fn push_block(tris: &mut Vec<Triangle>, top: [Vec3; 4], material: usize) {
    push_quad(tris, top, material);
    for i in 0..4 {
        let a = top[i];
        let b = top[(i + 1) % 4];
        let a0 = Vec3::new(a.x, 0.0, a.z);
        let b0 = Vec3::new(b.x, 0.0, b.z);
        push_quad(tris, [a, b, b0, a0], material);
    }
}
