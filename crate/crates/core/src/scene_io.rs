//! Scene files.
//!
//! A scene is a TOML config plus a triangle mesh in a line-based text format.
//!
//! Config:
//!
//! ```toml
//! mesh = "room.mesh"            # relative to the config file
//!
//! [camera]
//! position = [2.78, 2.73, -8.0]
//! look_at = [2.78, 2.73, 0.0]
//! up = [0.0, 1.0, 0.0]          # optional, default +y
//! fov_degrees = 39.3
//!
//! [[materials]]
//! albedo = [0.73, 0.73, 0.73]
//! emission = [0.0, 0.0, 0.0]    # optional
//!
//! [[lights]]                    # parallelogram, normal = (c1 - c0) x (c3 - c0)
//! corners = [[x, y, z], [x, y, z], [x, y, z], [x, y, z]]
//! power = [73.6, 62.4, 32.0]
//! ```
//!
//! Mesh, one record per line, `#` starts a comment:
//!
//! ```text
//! v x y z          vertex
//! f a b c m        triangle on 1-based vertices a, b, c with 0-based material m
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Color, Vec3};
use crate::scene::{AreaLight, Camera, Material, Scene, Triangle};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneConfig {
    mesh: String,
    camera: CameraConfig,
    materials: Vec<MaterialConfig>,
    #[serde(default)]
    lights: Vec<LightConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraConfig {
    position: [f64; 3],
    look_at: [f64; 3],
    #[serde(default = "default_up")]
    up: [f64; 3],
    fov_degrees: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialConfig {
    albedo: [f64; 3],
    #[serde(default)]
    emission: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LightConfig {
    corners: [[f64; 3]; 4],
    power: [f64; 3],
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn c3(a: [f64; 3]) -> Color {
    Color::new(a[0], a[1], a[2])
}

/// Loads `builtin:cornell`, `builtin:white-box`, or a TOML scene config path.
pub fn load_scene(spec: &str) -> Result<Scene> {
    match spec {
        "builtin:cornell" => Ok(Scene::cornell_box()),
        "builtin:white-box" => Ok(Scene::white_box()),
        s if s.starts_with("builtin:") => Err(Error::InvalidParameter(format!(
            "unknown builtin scene {s:?} (known: builtin:cornell, builtin:white-box)"
        ))),
        path => read_scene(Path::new(path)),
    }
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let src = path.display().to_string();
    let cfg: SceneConfig = toml::from_str(&text).map_err(|e| {
        let line = e.span().map_or(0, |s| line_of(&text, s.start));
        Error::parse(&src, line, e.message().to_string())
    })?;
    let mesh_path = path.parent().unwrap_or(Path::new(".")).join(&cfg.mesh);
    let mesh_text = fs::read_to_string(&mesh_path).map_err(|e| Error::io(&mesh_path, e))?;
    let triangles = parse_mesh(&mesh_text, &mesh_path.display().to_string())?;

    let materials = cfg
        .materials
        .iter()
        .map(|m| Material {
            albedo: c3(m.albedo),
            emission: c3(m.emission),
        })
        .collect();
    let lights = cfg
        .lights
        .iter()
        .map(|l| AreaLight::from_corners(l.corners.map(v3), c3(l.power)))
        .collect::<Result<Vec<_>>>()?;
    let c = &cfg.camera;
    let camera = Camera::look_at(v3(c.position), v3(c.look_at), v3(c.up), c.fov_degrees)?;
    Scene::new(triangles, materials, lights, camera)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses the mesh format; `source` names the input in error messages.
pub fn parse_mesh(text: &str, source: &str) -> Result<Vec<Triangle>> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let tag = fields.next().unwrap_or("");
        let rest: Vec<&str> = fields.collect();
        let err = |m: String| Error::parse(source, line_no, m);
        match tag {
            "v" => {
                if rest.len() != 3 {
                    return Err(err(format!("vertex needs 3 coordinates, got {}", rest.len())));
                }
                let mut p = [0.0; 3];
                for (slot, s) in p.iter_mut().zip(&rest) {
                    let v: f64 = s.parse().map_err(|_| err(format!("bad coordinate {s:?}")))?;
                    if !v.is_finite() {
                        return Err(err(format!("non-finite coordinate {s:?}")));
                    }
                    *slot = v;
                }
                vertices.push(v3(p));
            }
            "f" => {
                if rest.len() != 4 {
                    return Err(err(format!(
                        "face needs 3 vertex indices and a material, got {} fields",
                        rest.len()
                    )));
                }
                let mut idx = [0usize; 3];
                for (slot, s) in idx.iter_mut().zip(&rest[..3]) {
                    let i: usize = s.parse().map_err(|_| err(format!("bad vertex index {s:?}")))?;
                    if i == 0 || i > vertices.len() {
                        return Err(err(format!("vertex index {i} out of range 1..={}", vertices.len())));
                    }
                    *slot = i - 1;
                }
                let m: usize = rest[3]
                    .parse()
                    .map_err(|_| err(format!("bad material index {:?}", rest[3])))?;
                triangles.push(Triangle::new(vertices[idx[0]], vertices[idx[1]], vertices[idx[2]], m));
            }
            other => return Err(err(format!("unknown record {other:?}"))),
        }
    }
    Ok(triangles)
}

/// Serializes triangles in the mesh format, one vertex line per corner.
pub fn mesh_to_string(triangles: &[Triangle]) -> String {
    let mut out = String::new();
    for (t, tri) in triangles.iter().enumerate() {
        for v in &tri.v {
            out.push_str(&format!("v {:?} {:?} {:?}\n", v.x, v.y, v.z));
        }
        let b = 3 * t;
        out.push_str(&format!("f {} {} {} {}\n", b + 1, b + 2, b + 3, tri.material));
    }
    out
}

/// Writes `scene` as a config at `config_path` plus a mesh named `mesh_name`
/// beside it.
pub fn write_scene(scene: &Scene, config_path: &Path, mesh_name: &str) -> Result<()> {
    let cam = scene.camera();
    let arr = |v: Vec3| [v.x, v.y, v.z];
    let col = |c: Color| [c.r, c.g, c.b];
    let cfg = SceneConfig {
        mesh: mesh_name.to_string(),
        camera: CameraConfig {
            position: arr(cam.position),
            look_at: arr(cam.position + cam.forward()),
            up: arr(cam.up()),
            fov_degrees: cam.vfov_degrees,
        },
        materials: scene
            .materials()
            .iter()
            .map(|m| MaterialConfig {
                albedo: col(m.albedo),
                emission: col(m.emission),
            })
            .collect(),
        lights: scene
            .lights()
            .iter()
            .map(|l| LightConfig {
                corners: l.corners().map(arr),
                power: col(l.power),
            })
            .collect(),
    };
    let text = toml::to_string(&cfg).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    fs::write(config_path, text).map_err(|e| Error::io(config_path, e))?;
    let mesh_path = config_path.parent().unwrap_or(Path::new(".")).join(mesh_name);
    fs::write(&mesh_path, mesh_to_string(scene.triangles())).map_err(|e| Error::io(&mesh_path, e))
}
