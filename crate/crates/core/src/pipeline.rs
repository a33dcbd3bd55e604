//! End-to-end rendering: VPLs, light tree, global cut, slices, per-slice
//! coarsening, sampling and completion, plus the two exact reference renderers.
//!
//! Slices are processed in parallel; each writes only its own pixels and all
//! randomness is derived from `(seed, slice, stage)`, so output does not
//! depend on the thread count.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::coarsen::{coarsen_cut, CoarsenParams, EntryEvaluator, GeometryCache, StopRule};
use crate::completion::{
    admm_nmf, build_pdf, fill_empty_columns, sample_entries, AdmmParams, ColorFactors, SparseObservations,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::light_tree::{global_cut, Cut, LightTree};
use crate::math::{Aabb, Color};
use crate::rng::{derive_seed, stream_rng};
use crate::scene::Scene;
use crate::scene_io::load_scene;
use crate::shading::{generate_surface_points, Shader, SurfacePoint, DEFAULT_CLAMP_FACTOR};
use crate::slicing::{slice_points, Slice, DEFAULT_NORMAL_WEIGHT};
use crate::vpl::{trace_vpls, Vpl};

const STAGE_VPL: u64 = 1;
const STAGE_COARSEN: u64 = 2;
const STAGE_SAMPLE: u64 = 3;
const STAGE_ADMM: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Pipeline,
    Bruteforce,
    Fullcut,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "pipeline" => Ok(Mode::Pipeline),
            "bruteforce" => Ok(Mode::Bruteforce),
            "fullcut" => Ok(Mode::Fullcut),
            _ => Err(Error::InvalidParameter(format!(
                "unknown mode {s:?} (expected pipeline, bruteforce or fullcut)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Pipeline => "pipeline",
            Mode::Bruteforce => "bruteforce",
            Mode::Fullcut => "fullcut",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderConfig {
    /// Scene config path or `builtin:<name>`.
    pub scene: String,
    pub width: usize,
    pub height: usize,
    pub vpls: usize,
    pub max_bounces: usize,
    pub seed: u64,
    /// Global-cut threshold relative to the cut's summed contribution bounds.
    pub cut_error: f64,
    pub max_cut_nodes: usize,
    pub slice_size: usize,
    pub normal_weight: f64,
    pub coarsen: CoarsenParams,
    /// Fraction of each slice matrix observed before completion, in `(0, 1]`.
    pub rate: f64,
    /// Additive floor on column importance, relative to the mean importance.
    pub importance_floor: f64,
    pub admm: AdmmParams,
    pub mode: Mode,
    /// Distance clamp as a fraction of the scene diagonal.
    pub clamp: f64,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            scene: "builtin:cornell".into(),
            width: 128,
            height: 128,
            vpls: 2000,
            max_bounces: 3,
            seed: 0,
            cut_error: 0.02,
            max_cut_nodes: 1024,
            slice_size: 800,
            normal_weight: DEFAULT_NORMAL_WEIGHT,
            coarsen: CoarsenParams::default(),
            rate: 0.10,
            importance_floor: 0.05,
            admm: AdmmParams::default(),
            mode: Mode::Pipeline,
            clamp: DEFAULT_CLAMP_FACTOR,
            threads: 0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("image size {}x{} is empty", self.width, self.height));
        }
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return bad(format!("sampling rate {} outside (0, 1]", self.rate));
        }
        if !(self.cut_error >= 0.0) {
            return bad("cut error must be >= 0".into());
        }
        if self.max_cut_nodes == 0 || self.slice_size == 0 {
            return bad("max cut nodes and slice size must be >= 1".into());
        }
        if !(self.clamp > 0.0) {
            return bad("clamp factor must be > 0".into());
        }
        if !(self.importance_floor >= 0.0) {
            return bad("importance floor must be >= 0".into());
        }
        self.admm.validate()
    }
}

/// Per-slice record of the run report.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceReport {
    pub id: usize,
    pub rows: usize,
    pub cut_size: usize,
    pub merges: usize,
    /// Entries evaluated during coarsening.
    pub coarsen_observations: usize,
    /// Entries known when the slice was completed.
    pub observations: usize,
    pub iterations: usize,
    /// Relative observed-entry residual of the factorization.
    pub residual: f64,
    /// Rendered by direct evaluation after the factorization diverged.
    pub fallback: bool,
    pub shadow_rays: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub mode: Mode,
    pub vpls: usize,
    pub global_cut_size: usize,
    pub surface_points: usize,
    pub pixels: usize,
    pub shadow_rays: usize,
    pub seconds: f64,
    pub slices: Vec<SliceReport>,
}

/// Column header of [`RunReport::to_csv`].
pub const REPORT_CSV_HEADER: &str =
    "slice,rows,cut_size,merges,coarsen_observations,observations,iterations,residual,fallback,shadow_rays";

impl RunReport {
    /// Shadow rays cast per image pixel.
    pub fn rays_per_pixel(&self) -> f64 {
        self.shadow_rays as f64 / self.pixels.max(1) as f64
    }

    pub fn fallbacks(&self) -> usize {
        self.slices.iter().filter(|s| s.fallback).count()
    }

    /// One line per slice under [`REPORT_CSV_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for s in &self.slices {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.6e},{},{}",
                s.id,
                s.rows,
                s.cut_size,
                s.merges,
                s.coarsen_observations,
                s.observations,
                s.iterations,
                s.residual,
                s.fallback as u8,
                s.shadow_rays
            );
        }
        out
    }
}

/// Geometry terms for the rows of one slice.
struct SliceEvaluator<'a> {
    shader: &'a Shader<'a>,
    points: Vec<&'a SurfacePoint>,
    vpls: &'a [Vpl],
}

impl EntryEvaluator for SliceEvaluator<'_> {
    fn rows(&self) -> usize {
        self.points.len()
    }

    fn albedo(&self, row: usize) -> Color {
        self.points[row].albedo
    }

    fn geometry(&self, row: usize, vpl: usize) -> (f64, bool) {
        let p = self.points[row];
        self.shader.geometry(p.position, p.normal, &self.vpls[vpl])
    }
}

/// Everything shared by the per-slice stages.
pub struct Prepared {
    pub scene: Scene,
    pub config: RenderConfig,
    pub tree: LightTree,
    pub points: Vec<SurfacePoint>,
    pub cut: Cut,
    pub slices: Vec<Slice>,
    pub clamp_dist: f64,
}

struct SliceOutput {
    values: Vec<Color>,
    report: SliceReport,
}

impl Prepared {
    /// Traces VPLs, builds the light tree, finds visible surface points, the
    /// global cut over their bounds, and the slices.
    pub fn new(scene: Scene, config: &RenderConfig) -> Result<Prepared> {
        config.validate()?;
        let vpls = trace_vpls(
            &scene,
            config.vpls,
            config.max_bounces,
            derive_seed(config.seed, STAGE_VPL),
        )?;
        let tree = LightTree::build(&vpls)?;
        let points = generate_surface_points(&scene, config.width, config.height);
        let clamp_dist = config.clamp * scene.diagonal();
        let receivers = Aabb::from_points(points.iter().map(|p| p.position));
        let cut = if points.is_empty() {
            Cut::new(vec![tree.root()])
        } else {
            global_cut(&tree, &receivers, clamp_dist, config.cut_error, config.max_cut_nodes)
        };
        let slices = slice_points(&points, config.slice_size, scene.diagonal(), config.normal_weight);
        Ok(Prepared {
            scene,
            config: config.clone(),
            tree,
            points,
            cut,
            slices,
            clamp_dist,
        })
    }

    pub fn shader(&self) -> Shader<'_> {
        Shader::for_scene(&self.scene, self.config.clamp)
    }

    /// Completes every slice from sampled entries and sums `X (Y e)`, keeping
    /// known entries exact.
    pub fn render_pipeline(&self) -> Result<(Image, RunReport)> {
        self.run(Mode::Pipeline)
    }

    /// Sums every entry of every slice's coarsened matrix exactly.
    pub fn render_fullcut(&self) -> Result<(Image, RunReport)> {
        self.run(Mode::Fullcut)
    }

    /// Sums the contributions of all VPLs at every pixel.
    pub fn render_bruteforce(&self) -> Result<(Image, RunReport)> {
        let start = Instant::now();
        let shader = self.shader();
        let vpls = self.tree.vpls();
        let results: Vec<(Color, usize)> = self
            .points
            .par_iter()
            .map(|p| {
                let mut sum = Color::BLACK;
                let mut rays = 0;
                for v in vpls {
                    let (g, traced) = shader.geometry(p.position, p.normal, v);
                    rays += traced as usize;
                    sum += crate::shading::entry_value(p.albedo, v.intensity, g);
                }
                (sum, rays)
            })
            .collect();
        let mut img = Image::new(self.config.width, self.config.height);
        let mut rays = 0;
        for (p, (c, r)) in self.points.iter().zip(results) {
            img.pixels_mut()[p.pixel] = c;
            rays += r;
        }
        let report = self.report(Mode::Bruteforce, rays, Vec::new(), start);
        Ok((img, report))
    }

    pub fn render(&self) -> Result<(Image, RunReport)> {
        match self.config.mode {
            Mode::Pipeline => self.render_pipeline(),
            Mode::Fullcut => self.render_fullcut(),
            Mode::Bruteforce => self.render_bruteforce(),
        }
    }

    fn report(&self, mode: Mode, shadow_rays: usize, slices: Vec<SliceReport>, start: Instant) -> RunReport {
        RunReport {
            mode,
            vpls: self.tree.leaf_count(),
            global_cut_size: self.cut.len(),
            surface_points: self.points.len(),
            pixels: self.config.width * self.config.height,
            shadow_rays,
            seconds: start.elapsed().as_secs_f64(),
            slices,
        }
    }

    fn run(&self, mode: Mode) -> Result<(Image, RunReport)> {
        let start = Instant::now();
        let shader = self.shader();
        let outputs: Vec<SliceOutput> = self
            .slices
            .par_iter()
            .enumerate()
            .map(|(id, slice)| self.render_slice(&shader, id, slice, mode))
            .collect::<Result<_>>()?;
        let mut img = Image::new(self.config.width, self.config.height);
        let mut reports = Vec::with_capacity(outputs.len());
        let mut rays = 0;
        for (slice, out) in self.slices.iter().zip(outputs) {
            for (&point, value) in slice.points.iter().zip(out.values) {
                img.pixels_mut()[self.points[point].pixel] = value;
            }
            rays += out.report.shadow_rays;
            reports.push(out.report);
        }
        Ok((img, self.report(mode, rays, reports, start)))
    }

    /// Coarsened cut of one slice, as used by both slice renderers.
    pub fn coarsened_cut(&self, id: usize) -> Cut {
        let shader = self.shader();
        let eval = self.evaluator(&shader, &self.slices[id]);
        let mut cache = GeometryCache::new(&eval);
        let mut rng = stream_rng(derive_seed(self.config.seed, STAGE_COARSEN), id as u64);
        coarsen_cut(&self.tree, &self.cut, &mut cache, &self.config.coarsen, &mut rng).cut
    }

    fn evaluator<'a>(&'a self, shader: &'a Shader<'a>, slice: &Slice) -> SliceEvaluator<'a> {
        SliceEvaluator {
            shader,
            points: slice.points.iter().map(|&i| &self.points[i]).collect(),
            vpls: self.tree.vpls(),
        }
    }

    fn render_slice(&self, shader: &Shader<'_>, id: usize, slice: &Slice, mode: Mode) -> Result<SliceOutput> {
        let cfg = &self.config;
        let tree = &self.tree;
        let eval = self.evaluator(shader, slice);
        let mut cache = GeometryCache::new(&eval);
        let mut rng = stream_rng(derive_seed(cfg.seed, STAGE_COARSEN), id as u64);
        let outcome = coarsen_cut(tree, &self.cut, &mut cache, &cfg.coarsen, &mut rng);
        let cut = outcome.cut;
        let coarsen_observations = cache.evaluations();
        let (m, n) = (slice.len(), cut.len());
        let mut report = SliceReport {
            id,
            rows: m,
            cut_size: n,
            merges: outcome.merges.len(),
            coarsen_observations,
            observations: 0,
            iterations: 0,
            residual: 0.0,
            fallback: false,
            shadow_rays: 0,
        };

        let exact = |cache: &mut GeometryCache<'_, SliceEvaluator<'_>>| -> Vec<Color> {
            (0..m)
                .map(|i| cut.nodes.iter().map(|&node| cache.entry(tree, i, node)).sum())
                .collect()
        };

        if mode == Mode::Fullcut {
            let values = exact(&mut cache);
            report.observations = m * n;
            report.shadow_rays = cache.shadow_rays();
            return Ok(SliceOutput { values, report });
        }

        let mut obs = cache.observations(tree, &cut)?;
        let pdf = build_pdf(&obs, cfg.importance_floor * mean_importance(&obs));
        let mut rng = stream_rng(derive_seed(cfg.seed, STAGE_SAMPLE), id as u64);
        sample_entries(&mut obs, cfg.rate, &pdf, &mut rng, |i, j| {
            cache.entry(tree, i, cut.nodes[j])
        })?;
        fill_empty_columns(&mut obs, &mut rng, |i, j| cache.entry(tree, i, cut.nodes[j]))?;
        report.observations = obs.len();

        let values = if obs.is_full() {
            assemble(&obs, None)
        } else {
            let q = cfg.admm.rank.min(m).min(n);
            let params = AdmmParams {
                rank: q,
                seed: derive_seed(derive_seed(cfg.seed, STAGE_ADMM), id as u64),
                ..cfg.admm
            };
            match admm_nmf(&obs, &params) {
                Ok(factors) => {
                    report.iterations = factors.iterations();
                    report.residual = crate::completion::completion_residual(&obs, &factors)?;
                    assemble(&obs, Some(&factors))
                }
                Err(Error::Diverged { .. }) => {
                    report.fallback = true;
                    exact(&mut cache)
                }
                Err(e) => return Err(e),
            }
        };
        report.shadow_rays = cache.shadow_rays();
        Ok(SliceOutput { values, report })
    }
}

fn mean_importance(obs: &SparseObservations) -> f64 {
    let g: Vec<f64> = (0..obs.cols())
        .filter_map(|j| crate::completion::light_importance(obs, j))
        .collect();
    if g.is_empty() {
        0.0
    } else {
        g.iter().sum::<f64>() / g.len() as f64
    }
}

/// Row sums of the slice matrix with known entries taken verbatim and the
/// rest from `factors`. Mostly observed rows are summed entry by entry in
/// column order; sparse rows start from `X (Y e)` and swap in the known
/// entries.
fn assemble(obs: &SparseObservations, factors: Option<&ColorFactors>) -> Vec<Color> {
    let n = obs.cols();
    let totals = factors.map(ColorFactors::row_sums);
    obs.by_row()
        .into_iter()
        .enumerate()
        .map(|(i, known)| {
            let Some(f) = factors else {
                return known.iter().map(|&(_, v)| v).sum();
            };
            if 2 * known.len() >= n {
                let mut sum = Color::BLACK;
                let mut k = known.iter().peekable();
                for j in 0..n {
                    match k.peek() {
                        Some(&&(c, v)) if c == j => {
                            sum += v;
                            k.next();
                        }
                        _ => sum += f.entry(i, j),
                    }
                }
                sum
            } else {
                let mut sum = totals.as_ref().expect("factors present")[i];
                for &(j, v) in &known {
                    sum = sum - f.entry(i, j) + v;
                }
                Color::new(sum.r.max(0.0), sum.g.max(0.0), sum.b.max(0.0))
            }
        })
        .collect()
}

/// Loads the configured scene and renders it in the configured mode.
pub fn render(config: &RenderConfig) -> Result<(Image, RunReport)> {
    let scene = load_scene(&config.scene)?;
    render_scene(scene, config)
}

/// Renders `scene`, honoring `config.threads`.
pub fn render_scene(scene: Scene, config: &RenderConfig) -> Result<(Image, RunReport)> {
    if config.mode == Mode::Bruteforce && config.vpls == 0 {
        config.validate()?;
        let report = RunReport {
            mode: Mode::Bruteforce,
            vpls: 0,
            global_cut_size: 0,
            surface_points: 0,
            pixels: config.width * config.height,
            shadow_rays: 0,
            seconds: 0.0,
            slices: Vec::new(),
        };
        return Ok((Image::new(config.width, config.height), report));
    }
    with_threads(config.threads, || {
        let start = Instant::now();
        let prepared = Prepared::new(scene, config)?;
        let (img, mut report) = prepared.render()?;
        report.seconds = start.elapsed().as_secs_f64();
        Ok((img, report))
    })
}

/// Runs `f` on a pool of `threads` workers, or on the global pool for 0.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(f)
}

/// Relative coarsening bound helper for callers that pick a stop rule by name.
pub fn stop_rule(coarsen_error: Option<f64>, target_lights: Option<usize>) -> StopRule {
    match (coarsen_error, target_lights) {
        (_, Some(t)) => StopRule::TargetLights(t),
        (Some(e), None) => StopRule::Relative(e),
        (None, None) => CoarsenParams::default().stop,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RenderConfig {
        RenderConfig {
            scene: "builtin:cornell".into(),
            width: 16,
            height: 16,
            vpls: 60,
            slice_size: 64,
            ..Default::default()
        }
    }

    #[test]
    fn mode_parses() {
        assert_eq!("fullcut".parse::<Mode>().unwrap(), Mode::Fullcut);
        assert!("fast".parse::<Mode>().is_err());
    }

    #[test]
    fn rate_one_equals_fullcut_exactly() {
        let cfg = RenderConfig { rate: 1.0, ..small() };
        let p = Prepared::new(Scene::cornell_box(), &cfg).unwrap();
        let (a, _) = p.render_pipeline().unwrap();
        let (b, _) = p.render_fullcut().unwrap();
        assert!(a.bit_identical(&b));
    }

    #[test]
    fn zero_vpl_bruteforce_is_black() {
        let cfg = RenderConfig {
            vpls: 0,
            mode: Mode::Bruteforce,
            ..small()
        };
        let (img, _) = render(&cfg).unwrap();
        assert!(img.pixels().iter().all(|&c| c == Color::BLACK));
    }

    #[test]
    fn report_csv_has_one_line_per_slice() {
        let p = Prepared::new(Scene::cornell_box(), &small()).unwrap();
        let (_, r) = p.render_pipeline().unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), r.slices.len() + 1);
        assert!(csv.starts_with(REPORT_CSV_HEADER));
    }

    #[test]
    fn assemble_prefers_known_entries() {
        let mut obs = SparseObservations::new(2, 2);
        obs.insert(0, 0, Color::gray(1.0)).unwrap();
        obs.insert(0, 1, Color::gray(2.0)).unwrap();
        obs.insert(1, 1, Color::gray(4.0)).unwrap();
        let f = crate::completion::ChannelFactors {
            x: nalgebra::DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            y: nalgebra::DMatrix::from_row_slice(1, 2, &[10.0, 10.0]),
        };
        let factors = ColorFactors {
            channels: [f.clone(), f.clone(), f],
            stats: Default::default(),
        };
        let v = assemble(&obs, Some(&factors));
        assert_eq!(v[0], Color::gray(3.0));
        assert_eq!(v[1], Color::gray(14.0));
    }
}
