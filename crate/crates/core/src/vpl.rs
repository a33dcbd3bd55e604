//! Virtual point lights traced from the area emitters.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::bvh::Ray;
use crate::error::{Error, Result};
use crate::math::{Color, Vec3};
use crate::rng::stream_rng;
use crate::scene::Scene;
use crate::shading::SHADOW_EPS_FACTOR;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vpl {
    pub position: Vec3,
    /// Unit normal of the emitting hemisphere.
    pub normal: Vec3,
    /// On-axis radiant intensity, componentwise >= 0.
    pub intensity: Color,
}

/// A traced VPL plus the bookkeeping the tracer's invariants are stated in.
#[derive(Clone, Copy, Debug)]
pub struct TracedVpl {
    pub vpl: Vpl,
    pub bounce: usize,
    pub path: usize,
}

/// Traces light paths until exactly `count` VPLs are deposited. Each path
/// leaves one VPL on its emitter and one per diffuse bounce up to `max_bounces`.
pub fn trace_vpls(scene: &Scene, count: usize, max_bounces: usize, seed: u64) -> Result<Vec<Vpl>> {
    Ok(trace_vpls_detailed(scene, count, max_bounces, seed)?
        .into_iter()
        .map(|t| t.vpl)
        .collect())
}

pub fn trace_vpls_detailed(scene: &Scene, count: usize, max_bounces: usize, seed: u64) -> Result<Vec<TracedVpl>> {
    let lights = scene.lights();
    if lights.is_empty() {
        return Err(Error::NoEmitters);
    }
    if count == 0 {
        return Err(Error::InvalidParameter("VPL count must be >= 1".into()));
    }
    let mut shares: Vec<f64> = lights.iter().map(|l| l.power.luminance().max(0.0)).collect();
    let total: f64 = shares.iter().sum();
    if total > 0.0 {
        shares.iter_mut().for_each(|s| *s /= total);
    } else {
        shares.fill(1.0 / lights.len() as f64);
    }

    let eps = SHADOW_EPS_FACTOR * scene.diagonal();
    let mut out: Vec<TracedVpl> = Vec::with_capacity(count);
    let mut path_light: Vec<usize> = Vec::new();
    let mut paths_per_light = vec![0usize; lights.len()];

    while out.len() < count {
        let path = path_light.len();
        // Deterministic proportional schedule: the light furthest behind its share.
        let li = (0..lights.len())
            .max_by(|&a, &b| {
                let da = shares[a] * (path + 1) as f64 - paths_per_light[a] as f64;
                let db = shares[b] * (path + 1) as f64 - paths_per_light[b] as f64;
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("at least one light");
        path_light.push(li);
        paths_per_light[li] += 1;

        let light = &lights[li];
        let mut rng = stream_rng(seed, path as u64);
        let mut pos = light.point_at(rng.random(), rng.random());
        let mut normal = light.normal();
        // Unnormalized until all paths are known; divided by the path count below.
        let mut throughput = light.power;
        out.push(TracedVpl {
            vpl: Vpl {
                position: pos,
                normal,
                intensity: throughput,
            },
            bounce: 0,
            path,
        });

        for bounce in 1..=max_bounces {
            if out.len() >= count {
                break;
            }
            let dir = cosine_direction(normal, rng.random(), rng.random());
            let ray = Ray::segment(pos, dir, eps, f64::INFINITY);
            let Some(hit) = scene.bvh().intersect(&ray) else {
                break;
            };
            throughput = throughput * scene.albedo(hit.triangle);
            pos = hit.position;
            normal = if hit.normal.dot(dir) > 0.0 {
                -hit.normal
            } else {
                hit.normal
            };
            out.push(TracedVpl {
                vpl: Vpl {
                    position: pos,
                    normal,
                    intensity: throughput,
                },
                bounce,
                path,
            });
        }
    }

    for t in &mut out {
        let n = paths_per_light[path_light[t.path]] as f64;
        t.vpl.intensity = t.vpl.intensity / n;
    }
    Ok(out)
}

/// Cosine-weighted direction about the unit vector `n`.
pub fn cosine_direction(n: Vec3, u1: f64, u2: f64) -> Vec3 {
    let r = u1.sqrt();
    let phi = 2.0 * PI * u2;
    let (t, b) = n.orthonormal_basis();
    let z = (1.0 - u1).max(0.0).sqrt();
    (t * (r * phi.cos()) + b * (r * phi.sin()) + n * z).normalized()
}

const RECORD_BYTES: usize = 9 * 4;

/// Writes VPLs as flat records of nine little-endian `f32`:
/// position xyz, normal xyz, intensity rgb.
pub fn write_vpls(path: &Path, vpls: &[Vpl]) -> Result<()> {
    let mut buf = Vec::with_capacity(vpls.len() * RECORD_BYTES);
    for v in vpls {
        for x in [
            v.position.x,
            v.position.y,
            v.position.z,
            v.normal.x,
            v.normal.y,
            v.normal.z,
            v.intensity.r,
            v.intensity.g,
            v.intensity.b,
        ] {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

pub fn read_vpls(path: &Path) -> Result<Vec<Vpl>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    if buf.len() % RECORD_BYTES != 0 {
        return Err(Error::parse(
            path.display().to_string(),
            0,
            format!("length {} is not a multiple of {RECORD_BYTES}", buf.len()),
        ));
    }
    buf.chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, rec)| {
            let f: Vec<f64> = rec
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            let vpl = Vpl {
                position: Vec3::new(f[0], f[1], f[2]),
                normal: Vec3::new(f[3], f[4], f[5]),
                intensity: Color::new(f[6], f[7], f[8]),
            };
            if !vpl.intensity.is_nonnegative() || !vpl.position.is_finite() {
                return Err(Error::parse(
                    path.display().to_string(),
                    i + 1,
                    "record has negative intensity or non-finite position",
                ));
            }
            Ok(vpl)
        })
        .collect()
}
