//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{DataSource, RunConfig, RunOverrides};
use crate::error::{Error, Result};
use crate::fsutil::{ensure_dir, write_atomic};
use crate::geometry;
use crate::net::PhaseFieldNet;
use crate::objective::{Estimator, Objective, ObjectiveSpec};
use crate::rng::{derive_seed, Stage};
use crate::slice_data::{assign_phases, load_stack, save_stack, ImageFormat, PhaseLabels, SliceStack, StackMetadata};
use crate::trainer::{self, parse_sweep_table, SweepBase, TrainConfig, TrainLog};
use crate::volume::{cross_section, extract_isosurface, Axis, ComponentReport, InterfaceWidth, ProbeGrid, VolumeMesh, ISO};

/// Heights of the cross-sections measured in every report.
pub const REPORT_SECTIONS: [f64; 5] = [0.05, 0.2, 0.5, 0.8, 0.95];
const SECTION_RESOLUTION: usize = 200;

#[derive(Parser, Debug)]
#[command(name = "phasefield", version, about = "Reconstruct volumes from sparse slices with a neural phase field")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write synthetic slices of a catalog geometry.
    Generate(GenerateArgs),
    /// Train a phase field on slice data and export net, log, report and mesh.
    Reconstruct(ReconstructArgs),
    /// Export a planar cross-section of a trained field.
    Slice(SliceArgs),
    /// Export the ½-isosurface of a trained field as OBJ.
    Mesh(MeshArgs),
    /// Train Monte Carlo and fixed-grid variants on the same data and compare them.
    CompareIntegration(CompareArgs),
    /// Run one reconstruction per row of a parameter table.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Pgm,
    Csv,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Catalog geometry (hourglass, cylinder, sideways_cylinder, two_way_branch, four_way_branch, hollow_tilted_cylinder).
    #[arg(long)]
    pub geometry: String,
    /// Number of slice planes S [default: per geometry].
    #[arg(long)]
    pub slices: Option<usize>,
    /// Points per plane N, a perfect square [default: per geometry].
    #[arg(long = "n")]
    pub points_per_plane: Option<usize>,
    /// Noise magnitude σ in [0, 1) [default: per geometry].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Comma-separated slice heights [default: equally spaced over [0, 1]].
    #[arg(long, value_delimiter = ',')]
    pub z_planes: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FormatArg::Pgm)]
    pub format: FormatArg,
    /// Output directory; receives manifest.toml and one image per plane.
    #[arg(long)]
    pub out: PathBuf,
}

/// Run settings shared by the training commands. Each flag overrides the
/// same key of the `--config` file.
#[derive(Args, Debug, Default)]
pub struct RunFlags {
    /// TOML file with any of the settings below (keys use underscores).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generate slices from this catalog geometry.
    #[arg(long)]
    pub geometry: Option<String>,
    /// Read slices from this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Slice planes S for generated data [default: per geometry].
    #[arg(long)]
    pub slices: Option<usize>,
    /// Points per plane N for generated data [default: per geometry].
    #[arg(long = "n")]
    pub points_per_plane: Option<usize>,
    /// Noise magnitude σ for generated data [default: per geometry].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Comma-separated slice heights for generated data.
    #[arg(long, value_delimiter = ',')]
    pub z_planes: Option<Vec<f64>>,
    /// Labeling cutoff c in [0.5, 1) [default: per geometry, else 0.75].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Comma-separated layer widths [default: per geometry, else 3,30,30,1].
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    /// Data penalty p [default: 1000].
    #[arg(long)]
    pub penalty: Option<f64>,
    /// In-plane diffusion ε_x [default: 1].
    #[arg(long)]
    pub eps_x: Option<f64>,
    /// In-plane diffusion ε_y [default: 1].
    #[arg(long)]
    pub eps_y: Option<f64>,
    /// Out-of-plane diffusion ε_z [default: per geometry, else 5].
    #[arg(long)]
    pub eps_z: Option<f64>,
    /// Monte Carlo batch size B [default: 5000].
    #[arg(long = "batch")]
    pub batch_size: Option<usize>,
    /// Energy estimator: `mc` or `grid:<points per axis>` [default: mc].
    #[arg(long)]
    pub estimator: Option<String>,
    /// ADAM epochs [default: 5000].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// ADAM learning rate [default: 0.005].
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    /// ADAM β1 [default: 0.9].
    #[arg(long)]
    pub adam_beta1: Option<f64>,
    /// ADAM β2 [default: 0.999].
    #[arg(long)]
    pub adam_beta2: Option<f64>,
    /// ADAM ε [default: 1e-8].
    #[arg(long)]
    pub adam_eps: Option<f64>,
    /// Log every this many epochs [default: 10].
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Checkpoint every this many epochs; 0 writes only at the end [default: 0].
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Omit wall-clock times from logs so repeated runs are byte-identical.
    #[arg(long)]
    pub reproducible: bool,
    /// Top-level seed for data, initialization and batches [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Probe grid per axis for component counts [default: 50].
    #[arg(long)]
    pub probe_resolution: Option<usize>,
    /// Probe grid per axis for meshes [default: 100].
    #[arg(long)]
    pub mesh_resolution: Option<usize>,
}

impl RunFlags {
    fn overrides(&self) -> Result<RunOverrides> {
        let mut o = match &self.config {
            Some(path) => RunOverrides::load(path)?,
            None => RunOverrides::default(),
        };
        o.overlay(&RunOverrides {
            geometry: self.geometry.clone(),
            manifest: self.manifest.clone(),
            slices: self.slices,
            points_per_plane: self.points_per_plane,
            sigma: self.sigma,
            z_planes: self.z_planes.clone(),
            threshold: self.threshold,
            widths: self.widths.clone(),
            penalty: self.penalty,
            eps_x: self.eps_x,
            eps_y: self.eps_y,
            eps_z: self.eps_z,
            batch_size: self.batch_size,
            estimator: self.estimator.clone(),
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            log_every: self.log_every,
            checkpoint_every: self.checkpoint_every,
            reproducible: self.reproducible.then_some(true),
            seed: self.seed,
            probe_resolution: self.probe_resolution,
            mesh_resolution: self.mesh_resolution,
        });
        Ok(o)
    }

    fn resolve(&self) -> Result<RunConfig> {
        RunConfig::resolve(&self.overrides()?)
    }
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SliceArgs {
    /// Net checkpoint written by `reconstruct`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "z")]
    pub axis: String,
    /// Plane coordinate along the axis.
    #[arg(long, default_value_t = 0.5)]
    pub at: f64,
    /// Pixels per side.
    #[arg(long, default_value_t = SECTION_RESOLUTION)]
    pub resolution: usize,
    /// Image path; `.csv` writes floats, anything else an 8-bit graymap.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MeshArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Probe grid points per axis.
    #[arg(long, default_value_t = crate::config::DEFAULT_MESH)]
    pub resolution: usize,
    #[arg(long, default_value_t = ISO)]
    pub iso: f64,
    /// OBJ output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Fixed-grid points per axis.
    #[arg(long, default_value_t = 75)]
    pub grid: usize,
    /// Epochs of the fixed-grid arm [default: twice the Monte Carlo epochs].
    #[arg(long)]
    pub grid_epochs: Option<usize>,
    /// Batch size of a Monte Carlo arm; repeat for several arms [default: the run's batch size].
    #[arg(long = "mc-batch")]
    pub mc_batches: Vec<usize>,
    /// Comma-separated z heights at which interface widths are measured.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub sections: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// TOML file of `[[setting]]` rows (id, eps_xy, eps_z, penalty, batch_size, epochs).
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Reconstruct(a) => cmd_reconstruct(&a),
        Command::Slice(a) => cmd_slice(&a),
        Command::Mesh(a) => cmd_mesh(&a),
        Command::CompareIntegration(a) => cmd_compare_integration(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

/// Slices of a catalog geometry; noisy when `sigma > 0` or the geometry has a band.
pub fn generate_stack(name: &str, slices: usize, points_per_plane: usize, sigma: f64, z_planes: &[f64], seed: u64) -> Result<SliceStack> {
    let g = geometry::lookup(name)?;
    if sigma > 0.0 || g.outer.is_some() {
        geometry::sample_noisy(&g.noisy(sigma), slices, points_per_plane, z_planes, derive_seed(seed, Stage::Data))
    } else {
        geometry::sample_noiseless(g.inner, slices, points_per_plane, z_planes)
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let g = geometry::lookup(&a.geometry)?;
    let slices = a.slices.unwrap_or(g.defaults.slices);
    let n = a.points_per_plane.unwrap_or(g.defaults.points_per_plane);
    let sigma = a.sigma.unwrap_or(g.defaults.sigma);
    let z = a.z_planes.clone().unwrap_or_else(|| geometry::default_z_planes(slices));
    let stack = generate_stack(&a.geometry, slices, n, sigma, &z, a.seed)?;
    ensure_dir(&a.out)?;
    let manifest = a.out.join("manifest.toml");
    let format = match a.format {
        FormatArg::Pgm => ImageFormat::Pgm,
        FormatArg::Csv => ImageFormat::Csv,
    };
    let meta = StackMetadata {
        geometry: Some(a.geometry.clone()),
        seed: Some(a.seed),
        sigma: Some(sigma),
    };
    save_stack(&stack, &manifest, format, &meta)?;
    println!("wrote {} planes of {n} points to {}", slices, manifest.display());
    Ok(())
}

fn load_data(cfg: &RunConfig) -> Result<SliceStack> {
    match &cfg.source {
        DataSource::Manifest(path) => Ok(load_stack(path)?.0),
        DataSource::Geometry {
            name,
            slices,
            points_per_plane,
            sigma,
            z_planes,
        } => generate_stack(name, *slices, *points_per_plane, *sigma, z_planes, cfg.train.seed),
    }
}

fn label(stack: &SliceStack, threshold: f64) -> Result<PhaseLabels> {
    let labels = assign_phases(stack, threshold)?;
    println!(
        "labels: {} inside, {} outside, {} unassigned of {}",
        labels.inside.len(),
        labels.outside.len(),
        labels.unassigned,
        labels.total()
    );
    Ok(labels)
}

/// Train into `dir`, always leaving the log and last finite net behind.
fn train_into(dir: &Path, labels: &PhaseLabels, widths: &[usize], spec: &ObjectiveSpec, tc: &TrainConfig, tag: &str) -> Result<(PhaseFieldNet, TrainLog)> {
    ensure_dir(dir)?;
    let tc = TrainConfig {
        checkpoint: Some(dir.join("net.txt")),
        ..tc.clone()
    };
    let mut objective = Objective::new(labels, *spec)?;
    let mut net = PhaseFieldNet::init(widths, trainer::init_seed(tc.seed))?;
    let mut log = TrainLog::default();
    let every = (tc.epochs / 10).max(1);
    let result = trainer::train(&mut net, &mut objective, &tc, &mut log, |r| {
        if r.epoch % every == 0 || r.epoch == tc.epochs {
            eprintln!(
                "{tag}epoch {:>6}/{}  objective {:.6}  (regression {:.6}, energy {:.6})",
                r.epoch, tc.epochs, r.total, r.regression, r.energy
            );
        }
    });
    log.save_csv(&dir.join("log.csv"))?;
    result?;
    Ok((net, log))
}

fn write_report(dir: &Path, report: &ComponentReport) -> Result<()> {
    write_atomic(&dir.join("report.txt"), report.to_text().as_bytes())?;
    write_atomic(&dir.join("report.kv"), report.to_key_values().as_bytes())
}

fn write_mesh(path: &Path, net: &PhaseFieldNet, resolution: usize) -> Result<VolumeMesh> {
    let grid = ProbeGrid::probe(net, resolution)?;
    let mesh = match extract_isosurface(&grid, ISO) {
        Ok(mesh) => mesh,
        Err(Error::EmptySurface(_)) => {
            eprintln!("warning: the field does not cross {ISO}; writing an empty mesh");
            VolumeMesh::default()
        }
        Err(e) => return Err(e),
    };
    mesh.save_obj(path)?;
    Ok(mesh)
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    ensure_dir(&a.out)?;
    write_atomic(&a.out.join("config.toml"), cfg.to_toml().as_bytes())?;
    let stack = load_data(&cfg)?;
    let labels = label(&stack, cfg.threshold)?;
    let started = Instant::now();
    let (net, _) = train_into(&a.out, &labels, &cfg.widths, &cfg.objective, &cfg.train, "")?;
    let seconds = started.elapsed().as_secs_f64();
    let report = ComponentReport::analyze(&net, cfg.probe_resolution, &REPORT_SECTIONS, SECTION_RESOLUTION)?;
    write_report(&a.out, &report)?;
    let mesh = write_mesh(&a.out.join("mesh.obj"), &net, cfg.mesh_resolution)?;
    println!("wall-clock: {seconds:.1} s");
    println!("components: {}", report.component_count);
    println!("mesh: {} vertices, {} triangles", mesh.vertices.len(), mesh.triangles.len());
    Ok(())
}

fn cmd_slice(a: &SliceArgs) -> Result<()> {
    let net = PhaseFieldNet::load(&a.checkpoint)?;
    let axis: Axis = a.axis.parse()?;
    let section = cross_section(&net, axis, a.at, a.resolution)?;
    section.save(&a.out)?;
    println!("area fraction: {:.6}", section.area(ISO));
    match section.interface_width(0.1, 0.9) {
        Some(w) => println!(
            "interface width: {:.6} ({} crossings, {} censored)",
            w.mean, w.crossings, w.censored
        ),
        None => println!("interface width: n/a"),
    }
    Ok(())
}

fn cmd_mesh(a: &MeshArgs) -> Result<()> {
    let net = PhaseFieldNet::load(&a.checkpoint)?;
    let grid = ProbeGrid::probe(&net, a.resolution)?;
    let mesh = extract_isosurface(&grid, a.iso)?;
    mesh.save_obj(&a.out)?;
    println!("mesh: {} vertices, {} triangles", mesh.vertices.len(), mesh.triangles.len());
    Ok(())
}

/// Outcome of one arm of an integration comparison.
#[derive(Clone, Debug)]
pub struct ArmSummary {
    pub name: String,
    pub estimator: Estimator,
    pub batch_size: usize,
    pub epochs: usize,
    pub seconds: f64,
    pub components: usize,
    /// Interface width at each requested section, if measurable.
    pub widths: Vec<Option<InterfaceWidth>>,
}

fn cmd_compare_integration(a: &CompareArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    if a.grid < 2 {
        return Err(Error::Config(format!("fixed grid needs at least 2 points per axis, got {}", a.grid)));
    }
    ensure_dir(&a.out)?;
    write_atomic(&a.out.join("config.toml"), cfg.to_toml().as_bytes())?;
    let stack = load_data(&cfg)?;
    let labels = label(&stack, cfg.threshold)?;

    let batches = if a.mc_batches.is_empty() { vec![cfg.objective.batch_size] } else { a.mc_batches.clone() };
    let mut arms: Vec<(String, ObjectiveSpec, usize)> = batches
        .iter()
        .map(|&b| {
            let spec = ObjectiveSpec {
                batch_size: b,
                estimator: Estimator::MonteCarlo,
                ..cfg.objective
            };
            (format!("mc_b{b}"), spec, cfg.train.epochs)
        })
        .collect();
    let grid_spec = ObjectiveSpec {
        estimator: Estimator::FixedGrid(a.grid),
        ..cfg.objective
    };
    arms.push((format!("grid_{}", a.grid), grid_spec, a.grid_epochs.unwrap_or(2 * cfg.train.epochs)));

    let mut summaries = Vec::new();
    for (name, spec, epochs) in arms {
        spec.validate()?;
        let dir = a.out.join(&name);
        let tc = TrainConfig { epochs, ..cfg.train.clone() };
        let started = Instant::now();
        let (net, _) = train_into(&dir, &labels, &cfg.widths, &spec, &tc, &format!("[{name}] "))?;
        let seconds = started.elapsed().as_secs_f64();
        let report = ComponentReport::analyze(&net, cfg.probe_resolution, &a.sections, SECTION_RESOLUTION)?;
        write_report(&dir, &report)?;
        let widths = a
            .sections
            .iter()
            .map(|&z| Ok(cross_section(&net, Axis::Z, z, SECTION_RESOLUTION)?.interface_width(0.1, 0.9)))
            .collect::<Result<Vec<_>>>()?;
        summaries.push(ArmSummary {
            name,
            estimator: spec.estimator,
            batch_size: spec.batch_size,
            epochs,
            seconds,
            components: report.component_count,
            widths,
        });
    }
    let (text, kv) = comparison_tables(&summaries, &a.sections);
    write_atomic(&a.out.join("comparison.txt"), text.as_bytes())?;
    write_atomic(&a.out.join("comparison.kv"), kv.as_bytes())?;
    print!("{text}");
    Ok(())
}

/// Human-readable and key-value renderings of a comparison.
pub fn comparison_tables(arms: &[ArmSummary], sections: &[f64]) -> (String, String) {
    let fmt_width = |w: &Option<InterfaceWidth>| match w {
        Some(w) if w.censored > 0 => format!("{:.4} ({}/{} censored)", w.mean, w.censored, w.crossings),
        Some(w) => format!("{:.4}", w.mean),
        None => "n/a".to_string(),
    };
    let mut text = String::from("arm\testimator\tbatch\tepochs\tseconds\tcomponents");
    for z in sections {
        let _ = write!(text, "\twidth@z={z}");
    }
    text.push('\n');
    let mut kv = String::new();
    for arm in arms {
        let batch = match arm.estimator {
            Estimator::MonteCarlo => arm.batch_size.to_string(),
            Estimator::FixedGrid(n) => (n * n * n).to_string(),
        };
        let _ = write!(
            text,
            "{}\t{}\t{}\t{}\t{:.1}\t{}",
            arm.name, arm.estimator, batch, arm.epochs, arm.seconds, arm.components
        );
        for w in &arm.widths {
            let _ = write!(text, "\t{}", fmt_width(w));
        }
        text.push('\n');
        let _ = writeln!(kv, "{}.estimator={}", arm.name, arm.estimator);
        let _ = writeln!(kv, "{}.epochs={}", arm.name, arm.epochs);
        let _ = writeln!(kv, "{}.seconds={}", arm.name, arm.seconds);
        let _ = writeln!(kv, "{}.components={}", arm.name, arm.components);
        for (z, w) in sections.iter().zip(&arm.widths) {
            let _ = writeln!(kv, "{}.width.z{}={}", arm.name, z, w.map_or(f64::NAN, |w| w.mean));
            let _ = writeln!(kv, "{}.width_crossings.z{}={}", arm.name, z, w.map_or(0, |w| w.crossings));
            let _ = writeln!(kv, "{}.width_censored.z{}={}", arm.name, z, w.map_or(0, |w| w.censored));
        }
    }
    let mc = arms.iter().find(|a| a.estimator == Estimator::MonteCarlo);
    let grid = arms.iter().find(|a| matches!(a.estimator, Estimator::FixedGrid(_)));
    if let (Some(mc), Some(grid)) = (mc, grid) {
        let ratio = grid.seconds / mc.seconds;
        let _ = writeln!(text, "wall-clock ratio {} / {}: {ratio:.1}x", grid.name, mc.name);
        let _ = writeln!(kv, "wall_clock_ratio={ratio}");
    }
    (text, kv)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.table).map_err(|e| Error::io(&a.table, e))?;
    let table = parse_sweep_table(&text)?;
    ensure_dir(&a.out)?;
    if table.is_empty() {
        println!("empty sweep table; nothing to do");
        return Ok(());
    }
    let cfg = a.run.resolve()?;
    let stack = load_data(&cfg)?;
    let labels = label(&stack, cfg.threshold)?;
    let base = SweepBase {
        widths: cfg.widths.clone(),
        estimator: cfg.objective.estimator,
        train: cfg.train.clone(),
        probe_resolution: cfg.probe_resolution,
        section_zs: REPORT_SECTIONS.to_vec(),
        section_resolution: SECTION_RESOLUTION,
    };
    let mut write_error = None;
    let mut first_failure = None;
    trainer::sweep(&labels, &base, &table, |outcome| {
        let s = outcome.setting;
        let dir = a.out.join(format!("setting_{}", s.id));
        let written = (|| {
            ensure_dir(&dir)?;
            let mut o = cfg.to_overrides();
            o.overlay(&RunOverrides {
                eps_x: Some(s.eps_xy),
                eps_y: Some(s.eps_xy),
                eps_z: Some(s.eps_z),
                penalty: Some(s.penalty),
                batch_size: Some(s.batch_size),
                epochs: Some(s.epochs),
                seed: Some(trainer::setting_seed(cfg.train.seed, s.id)),
                ..Default::default()
            });
            write_atomic(&dir.join("config.toml"), toml::to_string(&o).expect("config serializes").as_bytes())?;
            match &outcome.result {
                Ok(run) => {
                    run.net.save(&dir.join("net.txt"))?;
                    run.log.save_csv(&dir.join("log.csv"))?;
                    write_report(&dir, &run.report)?;
                    println!(
                        "setting {}: {} component(s), {:.1} s",
                        s.id, run.report.component_count, run.log.seconds
                    );
                }
                Err(e) => {
                    write_atomic(&dir.join("error.txt"), format!("{e}\n").as_bytes())?;
                    eprintln!("setting {} failed: {e}", s.id);
                }
            }
            Ok::<_, Error>(())
        })();
        if let Err(e) = written {
            write_error.get_or_insert(e);
        }
    })
    .into_iter()
    .for_each(|o| {
        if let Err(e) = o.result {
            first_failure.get_or_insert(e);
        }
    });
    if let Some(e) = write_error.or(first_failure) {
        return Err(e);
    }
    Ok(())
}
