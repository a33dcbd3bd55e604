//! Many-light rendering by sparse sampling and low-rank completion of the
//! per-slice lighting matrix.
//!
//! The image is the row sum of a pixels x lights matrix whose entries are
//! VPL contributions. Lights are clustered by a global cut of a light tree,
//! pixels are grouped into slices, each slice's cut is coarsened from a few
//! exact entries, more entries are importance sampled, and the rest of the
//! matrix is filled in by nonnegative factorization `X Y`. Pixel values are
//! then `X (Y e)` with the known entries kept exact.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bvh;
pub mod coarsen;
pub mod completion;
pub mod error;
pub mod image;
pub mod light_tree;
pub mod math;
pub mod pipeline;
pub mod rng;
pub mod scene;
pub mod scene_io;
pub mod shading;
pub mod slicing;
pub mod vpl;

pub use error::{Error, Result};
pub use image::{image_error, Image};
pub use light_tree::{global_cut, Cut, LightTree};
pub use math::{Aabb, Color, Vec3};
pub use pipeline::{render, render_scene, Mode, Prepared, RenderConfig, RunReport};
pub use scene::Scene;
pub use vpl::{trace_vpls, Vpl};
