//! Float images, error metrics and file formats.
//!
//! Raw sidecar layout: `u32` width, `u32` height, then `width * height` RGB
//! triples of `f32`, row-major, all little-endian.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::math::Color;

const GAMMA: f64 = 2.2;

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<Color>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![Color::BLACK; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Color>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Color] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Color] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Color {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: Color) {
        self.pixels[y * self.width + x] = c;
    }

    pub fn scaled(&self, s: f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&c| c * s).collect(),
        }
    }

    /// True when both images hold the same dimensions and bitwise equal values.
    pub fn bit_identical(&self, other: &Image) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.pixels.iter().zip(&other.pixels).all(|(a, b)| {
                a.r.to_bits() == b.r.to_bits() && a.g.to_bits() == b.g.to_bits() && a.b.to_bits() == b.b.to_bits()
            })
    }

    /// Raw sidecar bytes; values are narrowed to `f32`.
    pub fn to_raw_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 12 * self.pixels.len());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for c in &self.pixels {
            for v in [c.r, c.g, c.b] {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_raw_bytes(bytes: &[u8], source: &str) -> Result<Image> {
        if bytes.len() < 8 {
            return Err(Error::parse(source, 0, "raw image shorter than its header"));
        }
        let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if body.len() != w * h * 12 {
            return Err(Error::parse(
                source,
                0,
                format!(
                    "expected {} payload bytes for {w}x{h}, found {}",
                    w * h * 12,
                    body.len()
                ),
            ));
        }
        let f = |i: usize| f32::from_le_bytes(body[4 * i..4 * i + 4].try_into().unwrap()) as f64;
        let pixels = (0..w * h)
            .map(|p| Color::new(f(3 * p), f(3 * p + 1), f(3 * p + 2)))
            .collect();
        Ok(Image {
            width: w,
            height: h,
            pixels,
        })
    }

    pub fn write_raw(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_raw_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_raw(path: &Path) -> Result<Image> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Image::from_raw_bytes(&bytes, &path.display().to_string())
    }

    /// 8-bit RGB payload: `255 * clamp(v * exposure, 0, 1)^(1/2.2)`, rounded.
    pub fn to_rgb8(&self, exposure: f64) -> Vec<u8> {
        let tone = |v: f64| {
            let v = (v * exposure).clamp(0.0, 1.0);
            let v = if v.is_nan() { 0.0 } else { v };
            (255.0 * v.powf(1.0 / GAMMA)).round() as u8
        };
        self.pixels
            .iter()
            .flat_map(|c| [tone(c.r), tone(c.g), tone(c.b)])
            .collect()
    }

    /// Binary portable pixmap (P6).
    pub fn write_ppm(&self, path: &Path, exposure: f64) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write!(f, "P6\n{} {}\n255\n", self.width, self.height).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_rgb8(exposure)).map_err(|e| Error::io(path, e))
    }

    /// Writes the pixmap to `path` and the raw sidecar next to it; returns the sidecar path.
    pub fn write(&self, path: &Path, exposure: f64) -> Result<PathBuf> {
        self.write_ppm(path, exposure)?;
        let raw = raw_sidecar_path(path);
        self.write_raw(&raw)?;
        Ok(raw)
    }
}

/// `image.ppm` -> `image.raw`.
pub fn raw_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("raw")
}

/// Reads the header and payload of a P6 pixmap with maxval 255.
pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let src = path.display().to_string();
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(&src, 1, "truncated pixmap header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(Error::parse(&src, 1, "expected a P6 pixmap with maxval 255"));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::parse(&src, 1, format!("bad dimension {s:?}")))
    };
    let (w, h) = (num(&fields[1])?, num(&fields[2])?);
    let payload = bytes.get(pos..).unwrap_or(&[]).to_vec();
    if payload.len() != 3 * w * h {
        return Err(Error::parse(&src, 1, "pixmap payload size does not match header"));
    }
    Ok((w, h, payload))
}

/// Relative RMS error of luminance in percent:
/// `100 sqrt(mean (lum(t) - lum(r))^2) / sqrt(mean lum(r)^2)`.
pub fn image_error(test: &Image, reference: &Image) -> Result<f64> {
    if test.width != reference.width || test.height != reference.height {
        return Err(Error::DimensionMismatch(format!(
            "test image is {}x{}, reference {}x{}",
            test.width, test.height, reference.width, reference.height
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, r) in test.pixels.iter().zip(&reference.pixels) {
        let d = t.luminance() - r.luminance();
        num += d * d;
        den += r.luminance() * r.luminance();
    }
    Ok(if den > 0.0 {
        100.0 * (num / den).sqrt()
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    })
}

/// RMS over pixels of the per-channel difference, in absolute units.
pub fn rms_difference(a: &Image, b: &Image) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch("images differ in size".into()));
    }
    let n = a.pixels.len().max(1) as f64;
    let s: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| {
            let d = *x - *y;
            (d.r * d.r + d.g * d.g + d.b * d.b) / 3.0
        })
        .sum();
    Ok((s / n).sqrt())
}

/// False-color map of slice membership, one hashed color per slice.
pub fn slice_map(width: usize, height: usize, pixel_slices: &[(usize, usize)]) -> Image {
    let mut img = Image::new(width, height);
    for &(pixel, slice) in pixel_slices {
        let h = crate::rng::derive_seed(slice as u64, 0x51ce);
        let c = |s: u32| 0.2 + 0.8 * ((h >> s) & 0xff) as f64 / 255.0;
        img.pixels[pixel] = Color::new(c(0), c(8), c(16));
    }
    img
}
