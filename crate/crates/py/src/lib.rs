//! Python bindings: scenes, render configuration, rendering and standalone
//! matrix completion.

use std::path::PathBuf;

use manylight::completion::{admm_nmf, AdmmParams, SparseObservations};
use manylight::pipeline::stop_rule;
use manylight::scene_io::{load_scene, write_scene};
use manylight::{Color, Error, Mode};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Rgb = (f64, f64, f64);

fn rgb(c: Color) -> Rgb {
    (c.r, c.g, c.b)
}

#[pyclass(name = "Scene", module = "manylight_py", skip_from_py_object)]
#[derive(Clone)]
struct PyScene(manylight::Scene);

#[pymethods]
impl PyScene {
    /// Loads a scene config file or a `builtin:` name.
    #[staticmethod]
    fn load(spec: &str) -> PyResult<Self> {
        load_scene(spec).map(PyScene).map_err(to_py)
    }

    #[staticmethod]
    fn cornell_box() -> Self {
        PyScene(manylight::Scene::cornell_box())
    }

    #[staticmethod]
    fn white_box() -> Self {
        PyScene(manylight::Scene::white_box())
    }

    fn with_light_scale(&self, s: f64) -> Self {
        PyScene(self.0.with_light_scale(s))
    }

    /// Writes the config to `path` and the triangles to `mesh_name` beside it.
    fn save(&self, path: PathBuf, mesh_name: &str) -> PyResult<()> {
        write_scene(&self.0, &path, mesh_name).map_err(to_py)
    }

    #[getter]
    fn triangle_count(&self) -> usize {
        self.0.triangles().len()
    }

    #[getter]
    fn light_count(&self) -> usize {
        self.0.lights().len()
    }

    #[getter]
    fn diagonal(&self) -> f64 {
        self.0.diagonal()
    }

    #[getter]
    fn total_power(&self) -> Rgb {
        rgb(self.0.total_power())
    }

    fn __repr__(&self) -> String {
        format!(
            "Scene(triangles={}, lights={})",
            self.0.triangles().len(),
            self.0.lights().len()
        )
    }
}

#[pyclass(name = "RenderConfig", module = "manylight_py", skip_from_py_object)]
#[derive(Clone)]
struct PyRenderConfig(manylight::RenderConfig);

macro_rules! config_fields {
    ($($name:ident, $set:ident: $ty:ty => $($path:ident).+;)* {$($methods:tt)*}) => {
        #[pymethods]
        impl PyRenderConfig {
            $($methods)*

            $(
                #[getter]
                fn $name(&self) -> $ty {
                    self.0.$($path).+.clone()
                }

                #[setter]
                fn $set(&mut self, v: $ty) {
                    self.0.$($path).+ = v;
                }
            )*
        }
    };
}

config_fields! {
    scene, set_scene: String => scene;
    width, set_width: usize => width;
    height, set_height: usize => height;
    vpls, set_vpls: usize => vpls;
    max_bounces, set_max_bounces: usize => max_bounces;
    seed, set_seed: u64 => seed;
    cut_error, set_cut_error: f64 => cut_error;
    max_cut_nodes, set_max_cut_nodes: usize => max_cut_nodes;
    slice_size, set_slice_size: usize => slice_size;
    rate, set_rate: f64 => rate;
    rank, set_rank: usize => admm.rank;
    max_iter, set_max_iter: usize => admm.max_iter;
    tol, set_tol: f64 => admm.tol;
    alpha, set_alpha: f64 => admm.alpha;
    beta, set_beta: f64 => admm.beta;
    gamma, set_gamma: f64 => admm.gamma;
    clamp, set_clamp: f64 => clamp;
    threads, set_threads: usize => threads;
    {
        /// Library defaults, with `mode` one of pipeline, bruteforce or fullcut.
        /// `coarsen_error` and `target_lights` pick the coarsening stop rule.
        #[new]
        #[pyo3(signature = (scene = None, mode = None, coarsen_error = None, target_lights = None))]
        fn new(
            scene: Option<String>,
            mode: Option<&str>,
            coarsen_error: Option<f64>,
            target_lights: Option<usize>,
        ) -> PyResult<Self> {
            let mut c = manylight::RenderConfig::default();
            if let Some(s) = scene {
                c.scene = s;
            }
            if let Some(m) = mode {
                c.mode = m.parse::<Mode>().map_err(to_py)?;
            }
            if coarsen_error.is_some() || target_lights.is_some() {
                c.coarsen.stop = stop_rule(coarsen_error, target_lights);
            }
            Ok(PyRenderConfig(c))
        }

        #[getter]
        fn mode(&self) -> String {
            self.0.mode.to_string()
        }

        #[setter]
        fn set_mode(&mut self, mode: &str) -> PyResult<()> {
            self.0.mode = mode.parse::<Mode>().map_err(to_py)?;
            Ok(())
        }

        fn validate(&self) -> PyResult<()> {
            self.0.validate().map_err(to_py)
        }

        fn __repr__(&self) -> String {
            format!("{:?}", self.0)
        }
    }
}

#[pyclass(name = "Image", module = "manylight_py", skip_from_py_object)]
#[derive(Clone)]
struct PyImage(manylight::Image);

#[pymethods]
impl PyImage {
    /// Reads the float sidecar written next to a rendered pixmap.
    #[staticmethod]
    fn read_raw(path: PathBuf) -> PyResult<Self> {
        manylight::Image::read_raw(&path).map(PyImage).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<Rgb> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err(format!("pixel ({x}, {y}) outside the image")));
        }
        Ok(rgb(self.0.get(x, y)))
    }

    /// Rows of `(r, g, b)` tuples, top row first.
    fn pixels(&self) -> Vec<Vec<Rgb>> {
        self.0
            .pixels()
            .chunks(self.0.width())
            .map(|row| row.iter().copied().map(rgb).collect())
            .collect()
    }

    fn scaled(&self, s: f64) -> Self {
        PyImage(self.0.scaled(s))
    }

    /// Writes a pixmap plus float sidecar; returns the sidecar path.
    fn write(&self, path: PathBuf, exposure: f64) -> PyResult<PathBuf> {
        self.0.write(&path, exposure).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.0.width(), self.0.height())
    }
}

#[pyclass(name = "RunReport", module = "manylight_py")]
struct PyRunReport(manylight::RunReport);

#[pymethods]
impl PyRunReport {
    #[getter]
    fn mode(&self) -> String {
        self.0.mode.to_string()
    }

    #[getter]
    fn vpls(&self) -> usize {
        self.0.vpls
    }

    #[getter]
    fn global_cut_size(&self) -> usize {
        self.0.global_cut_size
    }

    #[getter]
    fn shadow_rays(&self) -> usize {
        self.0.shadow_rays
    }

    #[getter]
    fn seconds(&self) -> f64 {
        self.0.seconds
    }

    #[getter]
    fn slices(&self) -> usize {
        self.0.slices.len()
    }

    #[getter]
    fn fallbacks(&self) -> usize {
        self.0.fallbacks()
    }

    fn rays_per_pixel(&self) -> f64 {
        self.0.rays_per_pixel()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }
}

/// Renders `scene` (or the one named by `config.scene`) and returns the image
/// with its run report.
#[pyfunction]
#[pyo3(signature = (config, scene = None))]
fn render(
    py: Python<'_>,
    config: PyRef<'_, PyRenderConfig>,
    scene: Option<PyRef<'_, PyScene>>,
) -> PyResult<(PyImage, PyRunReport)> {
    let cfg = config.0.clone();
    let scene = match scene {
        Some(s) => s.0.clone(),
        None => load_scene(&cfg.scene).map_err(to_py)?,
    };
    let (img, report) = py.detach(|| manylight::render_scene(scene, &cfg)).map_err(to_py)?;
    Ok((PyImage(img), PyRunReport(report)))
}

/// Relative error of `test` against `reference`, in percent.
#[pyfunction]
fn image_error(test: PyRef<'_, PyImage>, reference: PyRef<'_, PyImage>) -> PyResult<f64> {
    manylight::image_error(&test.0, &reference.0).map_err(to_py)
}

/// Completes a nonnegative color matrix from `(row, col, (r, g, b))` entries
/// and returns the full reconstruction as rows of `(r, g, b)`.
#[pyfunction]
#[pyo3(signature = (rows, cols, entries, rank = 16, max_iter = 100, tol = 1e-4, alpha = 1.0, beta = 1.0, gamma = 1.6, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn complete_matrix(
    py: Python<'_>,
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, Rgb)>,
    rank: usize,
    max_iter: usize,
    tol: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    seed: u64,
) -> PyResult<Vec<Vec<Rgb>>> {
    let mut obs = SparseObservations::new(rows, cols);
    for (i, j, (r, g, b)) in entries {
        obs.insert(i, j, Color::new(r, g, b)).map_err(to_py)?;
    }
    let params = AdmmParams {
        rank,
        alpha,
        beta,
        gamma,
        max_iter,
        tol,
        seed,
    };
    let f = py.detach(|| admm_nmf(&obs, &params)).map_err(to_py)?;
    Ok((0..rows)
        .map(|i| (0..cols).map(|j| rgb(f.entry(i, j))).collect())
        .collect())
}

#[pymodule]
fn manylight_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScene>()?;
    m.add_class::<PyRenderConfig>()?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyRunReport>()?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(image_error, m)?)?;
    m.add_function(wrap_pyfunction!(complete_matrix, m)?)?;
    Ok(())
}
