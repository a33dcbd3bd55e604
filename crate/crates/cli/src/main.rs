use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use manylight::pipeline::stop_rule;
use manylight::scene_io::{load_scene, write_scene};
use manylight::{image_error, render_scene, Image, Mode, RenderConfig, RunReport};

#[derive(Parser)]
#[command(
    name = "manylight",
    version,
    about = "Many-light renderer with sparse sampling and matrix completion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render one image.
    Render {
        #[command(flatten)]
        opts: RenderOpts,
        /// Output pixmap (.ppm); a float `.raw` sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "pipeline")]
        mode: Mode,
        /// Per-slice run report as CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render brute force plus one pipeline image per rate; print a CSV summary.
    Sweep {
        #[command(flatten)]
        opts: RenderOpts,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.10,0.25,1.0")]
        rates: Vec<f64>,
        /// Directory for the rendered images; omitted images are not written.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a scene (for instance a builtin) as a config plus mesh file.
    ExportScene {
        #[arg(long, default_value = "builtin:cornell")]
        scene: String,
        /// Config path; the mesh goes next to it with the `.mesh` extension.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Every flag left unset keeps the library default.
#[derive(Args)]
struct RenderOpts {
    /// Scene config path or builtin:cornell / builtin:white-box.
    #[arg(long, default_value = "builtin:cornell")]
    scene: String,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    vpls: Option<usize>,
    #[arg(long)]
    bounces: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cut_error: Option<f64>,
    #[arg(long)]
    max_cut_nodes: Option<usize>,
    #[arg(long)]
    slice_size: Option<usize>,
    /// Coarsening bound as a fraction of the slice's mean pixel luminance.
    #[arg(long, conflicts_with = "target_lights")]
    coarsen_error: Option<f64>,
    /// Coarsen each slice down to this many lights instead.
    #[arg(long)]
    target_lights: Option<usize>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Distance clamp as a fraction of the scene diagonal.
    #[arg(long)]
    clamp: Option<f64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Pixmap exposure; by default the 99th percentile luminance maps to white.
    #[arg(long)]
    exposure: Option<f64>,
}

impl RenderOpts {
    fn config(&self, mode: Mode) -> RenderConfig {
        let mut c = RenderConfig {
            scene: self.scene.clone(),
            mode,
            ..Default::default()
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set! {
            width => c.width,
            height => c.height,
            vpls => c.vpls,
            bounces => c.max_bounces,
            seed => c.seed,
            cut_error => c.cut_error,
            max_cut_nodes => c.max_cut_nodes,
            slice_size => c.slice_size,
            rate => c.rate,
            rank => c.admm.rank,
            max_iter => c.admm.max_iter,
            tol => c.admm.tol,
            alpha => c.admm.alpha,
            beta => c.admm.beta,
            gamma => c.admm.gamma,
            clamp => c.clamp,
            threads => c.threads,
        }
        if self.coarsen_error.is_some() || self.target_lights.is_some() {
            c.coarsen.stop = stop_rule(self.coarsen_error, self.target_lights);
        }
        c
    }
}

fn auto_exposure(img: &Image) -> f64 {
    let mut lum: Vec<f64> = img
        .pixels()
        .iter()
        .map(|c| c.luminance())
        .filter(|&l| l > 0.0)
        .collect();
    if lum.is_empty() {
        return 1.0;
    }
    lum.sort_by(f64::total_cmp);
    1.0 / lum[(lum.len() - 1) * 99 / 100]
}

fn save(img: &Image, path: &Path, exposure: Option<f64>) -> Result<()> {
    let e = exposure.unwrap_or_else(|| auto_exposure(img));
    img.write(path, e)?;
    Ok(())
}

fn run_render(opts: &RenderOpts, out: &Path, mode: Mode, report: Option<&Path>) -> Result<()> {
    let cfg = opts.config(mode);
    let scene = load_scene(&cfg.scene)?;
    let (img, run) = render_scene(scene, &cfg)?;
    save(&img, out, opts.exposure)?;
    if let Some(path) = report {
        fs::write(path, run.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!("{}", summary(&run));
    Ok(())
}

fn summary(r: &RunReport) -> String {
    format!(
        "{} render: {} VPLs, global cut {}, {} slices, {:.1} shadow rays/pixel, {} fallbacks, {:.2} s",
        r.mode,
        r.vpls,
        r.global_cut_size,
        r.slices.len(),
        r.rays_per_pixel(),
        r.fallbacks(),
        r.seconds
    )
}

fn run_sweep(opts: &RenderOpts, rates: &[f64], out_dir: Option<&Path>, csv_path: Option<&Path>) -> Result<()> {
    if rates.is_empty() {
        bail!("no rates given");
    }
    if let Some(d) = out_dir {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let scene = load_scene(&opts.scene)?;
    let (reference, bf) = render_scene(scene.clone(), &opts.config(Mode::Bruteforce))?;
    let exposure = opts.exposure.unwrap_or_else(|| auto_exposure(&reference));
    let mut csv = String::from("rate,error_percent,seconds,rays_per_pixel\n");
    writeln!(csv, "bruteforce,0,{:.3},{:.2}", bf.seconds, bf.rays_per_pixel())?;
    if let Some(d) = out_dir {
        save(&reference, &d.join("bruteforce.ppm"), Some(exposure))?;
    }
    for &rate in rates {
        let cfg = RenderConfig {
            rate,
            ..opts.config(Mode::Pipeline)
        };
        let (img, run) = render_scene(scene.clone(), &cfg)?;
        let err = image_error(&img, &reference)?;
        writeln!(csv, "{rate},{err:.4},{:.3},{:.2}", run.seconds, run.rays_per_pixel())?;
        if let Some(d) = out_dir {
            save(&img, &d.join(format!("rate_{rate}.ppm")), Some(exposure))?;
        }
    }
    match csv_path {
        Some(p) => fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn run_export(scene: &str, out: &Path) -> Result<()> {
    let s = load_scene(scene)?;
    let mesh = out.with_extension("mesh");
    let name = mesh.file_name().context("output path has no file name")?;
    write_scene(&s, out, &name.to_string_lossy())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Render {
            opts,
            out,
            mode,
            report,
        } => run_render(opts, out, *mode, report.as_deref()),
        Command::Sweep {
            opts,
            rates,
            out_dir,
            csv,
        } => run_sweep(opts, rates, out_dir.as_deref(), csv.as_deref()),
        Command::ExportScene { scene, out } => run_export(scene, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("manylight: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}

/// Joins the error chain, skipping causes a message already spells out.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}
