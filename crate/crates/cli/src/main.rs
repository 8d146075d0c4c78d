//! `synthforge`: generate procedural mesh, deformed mesh and fractal image
//! databases, render them, and mix them into pre-training datasets.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use synthforge_core::dataset::{self, DatasetSpec};
use synthforge_core::fractal2d::{self, FractalConfig};
use synthforge_core::geometry::obj;
use synthforge_core::morphgen::{self, GpDeformParams};
use synthforge_core::procgen::{self, ProcGenConfig};
use synthforge_core::renderer::{self, AnisoMode, ColorChoice, RenderConfig};
use synthforge_core::Error;

const SPEC_FILE: &str = "spec.json";

#[derive(Parser)]
#[command(name = "synthforge", version, about = "Synthetic pre-training dataset generator")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, env = "SYNTHFORGE_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Emit JSON-lines progress events on standard error.
    #[arg(long, global = true)]
    progress_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate procedural class meshes.
    GenProc(GenProcArgs),
    /// Deform base meshes with Gaussian-process fields.
    GenMorph(GenMorphArgs),
    /// Generate an IFS fractal image database.
    GenFractal(GenFractalArgs),
    /// Render a mesh database to images.
    Render(RenderArgs),
    /// Mix source image databases into one dataset.
    Mix(MixArgs),
    /// Check a dataset's manifest and files.
    Validate(ValidateArgs),
    /// Print dataset statistics as JSON.
    Stats(StatsArgs),
    /// Write a contact sheet of the first classes.
    Preview(PreviewArgs),
}

#[derive(Args)]
struct GenProcArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    v: u32,
    #[arg(long, default_value_t = 5)]
    w: u32,
    #[arg(long, default_value_t = 10.0)]
    max_size: f64,
    #[command(flatten)]
    io: OutArgs,
}

#[derive(Args)]
struct GenMorphArgs {
    /// Procedural mesh database supplying the base meshes.
    #[arg(long, required_unless_present = "config")]
    base: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    n_base: usize,
    #[arg(long, default_value_t = 10)]
    variants: usize,
    #[arg(long, default_value_t = 50.0)]
    b_s: f64,
    #[arg(long, default_value_t = 300.0)]
    c_s: f64,
    #[arg(long, default_value_t = 0.05)]
    b_a: f64,
    #[arg(long, default_value_t = 0.2)]
    c_a: f64,
    #[command(flatten)]
    io: OutArgs,
}

#[derive(Args)]
struct GenFractalArgs {
    #[arg(long, default_value_t = 1000)]
    classes: usize,
    #[arg(long, default_value_t = 1000)]
    images: usize,
    #[arg(long, default_value_t = 0.2)]
    min_fill: f64,
    #[arg(long, default_value_t = 100_000)]
    points: usize,
    #[arg(long, default_value_t = 256)]
    res: usize,
    #[command(flatten)]
    io: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ColorArg {
    Auto,
    Gray,
    Rgb,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnisoArg {
    /// Factor uniform in [0.5, 2].
    Uniform,
    /// Factor fixed at 2.
    Factor2,
}

#[derive(Args)]
struct RenderArgs {
    /// Mesh database (containing `meshes/`).
    #[arg(long, required_unless_present = "config")]
    meshes: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    images_per_class: usize,
    /// Remove pose and illumination variation.
    #[arg(long)]
    flat: bool,
    #[arg(long, default_value_t = 256)]
    res: usize,
    #[arg(long, value_enum, default_value_t = ColorArg::Auto)]
    color: ColorArg,
    #[arg(long, value_enum, default_value_t = AnisoArg::Uniform)]
    aniso: AnisoArg,
    #[arg(long, default_value_t = 40.0)]
    fov: f64,
    #[command(flatten)]
    io: OutArgs,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long, required_unless_present = "config")]
    out: Option<PathBuf>,
    /// Re-run from a `spec.json` written by an earlier run; other options are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct MixArgs {
    /// JSON dataset spec (components, images_per_class, seed, pad_to).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Pad the class count to this total (overrides the spec file).
    #[arg(long)]
    pad_to: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    root: PathBuf,
    /// Fraction of entries regenerated from their seed chain and compared byte-wise.
    #[arg(long, default_value_t = 0.01)]
    replay_fraction: f64,
}

#[derive(Args)]
struct StatsArgs {
    root: PathBuf,
}

#[derive(Args)]
struct PreviewArgs {
    root: PathBuf,
    /// Number of classes (rows).
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Output PNG path.
    #[arg(long)]
    out: PathBuf,
}

/// Effective configuration echoed into every output directory.
#[derive(Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum RunSpec {
    GenProc {
        config: ProcGenConfig,
    },
    GenMorph {
        base: PathBuf,
        n_base: usize,
        variants: usize,
        params: GpDeformParams,
    },
    GenFractal {
        seed: u64,
        classes: usize,
        images: usize,
        config: FractalConfig,
    },
    Render {
        meshes: PathBuf,
        seed: u64,
        images_per_class: usize,
        flat: bool,
        config: RenderConfig,
    },
}

impl RunSpec {
    fn name(&self) -> &'static str {
        match self {
            RunSpec::GenProc { .. } => "gen-proc",
            RunSpec::GenMorph { .. } => "gen-morph",
            RunSpec::GenFractal { .. } => "gen-fractal",
            RunSpec::Render { .. } => "render",
        }
    }
}

struct Progress {
    json: bool,
}

impl Progress {
    fn event(&self, command: &str, event: &str, extra: serde_json::Value) {
        if self.json {
            let mut v = serde_json::json!({ "command": command, "event": event });
            if let (Some(o), serde_json::Value::Object(e)) = (v.as_object_mut(), extra) {
                o.extend(e);
            }
            eprintln!("{v}");
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn canonical(path: &Path) -> Result<PathBuf, Error> {
    std::fs::canonicalize(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn seed_or_default(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        log::warn!("no --seed or SYNTHFORGE_SEED given; using 0");
        0
    })
}

/// Loads a replay spec, checking it was written by `command`.
fn load_spec(path: &Path, command: &str) -> Result<RunSpec, Error> {
    let spec: RunSpec = read_json(path)?;
    if spec.name() != command {
        return Err(Error::InvalidParameter(format!(
            "{} was written by `{}`, not `{command}`",
            path.display(),
            spec.name()
        )));
    }
    Ok(spec)
}

/// Output directory: explicit `--out`, else the directory holding the replayed spec.
fn out_dir(io: &OutArgs) -> PathBuf {
    match (&io.out, &io.config) {
        (Some(o), _) => o.clone(),
        (None, Some(c)) => c.parent().map(Path::to_path_buf).unwrap_or_default(),
        (None, None) => unreachable!("clap requires --out or --config"),
    }
}

fn execute(spec: &RunSpec, out: &Path, progress: &Progress) -> Result<(), Error> {
    let name = spec.name();
    let t0 = Instant::now();
    progress.event(name, "start", serde_json::json!({ "out": out }));
    std::fs::create_dir_all(out).map_err(|source| Error::Io { path: out.to_path_buf(), source })?;
    let items = match spec {
        RunSpec::GenProc { config } => {
            let classes = procgen::generate_db(config)?;
            progress.event(name, "generated", serde_json::json!({ "classes": classes.len() }));
            procgen::write_db(out, &classes)?;
            classes.len()
        }
        RunSpec::GenMorph { base, n_base, variants, params } => {
            let bases = (0..*n_base)
                .map(|i| {
                    let p = procgen::mesh_path(base, i);
                    if !p.is_file() {
                        return Err(Error::Capacity {
                            source_db: base.display().to_string(),
                            what: "base meshes",
                            requested: *n_base,
                            available: i,
                        });
                    }
                    obj::read_obj(&p)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let classes = morphgen::generate_morph_db(&bases, params, *variants)?;
            progress.event(name, "generated", serde_json::json!({ "classes": classes.len() }));
            morphgen::write_db(out, &classes)?;
            classes.len()
        }
        RunSpec::GenFractal { seed, classes, images, config } => {
            let db = fractal2d::generate_db(config, *seed, *classes, *images)?;
            progress.event(name, "generated", serde_json::json!({ "classes": db.len() }));
            fractal2d::write_db(out, config, &db)?;
            db.len()
        }
        RunSpec::Render { meshes, seed, images_per_class, flat, config } => {
            renderer::render_db(meshes, out, *seed, *images_per_class, *flat, config)?.len()
        }
    };
    write_json(&out.join(SPEC_FILE), spec)?;
    log::info!("{name}: {items} items in {:.2?}", t0.elapsed());
    progress.event(
        name,
        "done",
        serde_json::json!({ "items": items, "seconds": t0.elapsed().as_secs_f64() }),
    );
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let progress = Progress { json: cli.progress_json };
    let seed = cli.seed;
    let (spec, io) = match cli.command {
        Command::GenProc(a) => {
            let spec = match &a.io.config {
                Some(c) => load_spec(c, "gen-proc")?,
                None => RunSpec::GenProc {
                    config: ProcGenConfig {
                        n: a.n,
                        v: a.v,
                        w: a.w,
                        max_size: a.max_size,
                        seed: seed_or_default(seed),
                        ..Default::default()
                    },
                },
            };
            (spec, a.io)
        }
        Command::GenMorph(a) => {
            let spec = match &a.io.config {
                Some(c) => load_spec(c, "gen-morph")?,
                None => RunSpec::GenMorph {
                    base: canonical(a.base.as_deref().expect("clap requires --base"))?,
                    n_base: a.n_base,
                    variants: a.variants,
                    params: GpDeformParams {
                        b_s: a.b_s,
                        c_s: a.c_s,
                        b_a: a.b_a,
                        c_a: a.c_a,
                        seed: seed_or_default(seed),
                        ..Default::default()
                    },
                },
            };
            (spec, a.io)
        }
        Command::GenFractal(a) => {
            let spec = match &a.io.config {
                Some(c) => load_spec(c, "gen-fractal")?,
                None => RunSpec::GenFractal {
                    seed: seed_or_default(seed),
                    classes: a.classes,
                    images: a.images,
                    config: FractalConfig {
                        min_fill: a.min_fill,
                        points: a.points,
                        resolution: a.res,
                        ..Default::default()
                    },
                },
            };
            (spec, a.io)
        }
        Command::Render(a) => {
            let spec = match &a.io.config {
                Some(c) => load_spec(c, "render")?,
                None => RunSpec::Render {
                    meshes: canonical(a.meshes.as_deref().expect("clap requires --meshes"))?,
                    seed: seed_or_default(seed),
                    images_per_class: a.images_per_class,
                    flat: a.flat,
                    config: RenderConfig {
                        resolution: a.res,
                        fov_deg: a.fov,
                        color: match a.color {
                            ColorArg::Auto => ColorChoice::Auto,
                            ColorArg::Gray => ColorChoice::Gray,
                            ColorArg::Rgb => ColorChoice::Rgb,
                        },
                        aniso_mode: match a.aniso {
                            AnisoArg::Uniform => AnisoMode::UniformRange,
                            AnisoArg::Factor2 => AnisoMode::Factor2,
                        },
                        ..Default::default()
                    },
                },
            };
            (spec, a.io)
        }
        Command::Mix(a) => {
            let mut spec: DatasetSpec = read_json(&a.spec)?;
            // Relative source paths are relative to the spec file.
            let base = a.spec.parent().unwrap_or(Path::new(""));
            for c in &mut spec.components {
                c.path = canonical(&base.join(&c.path))?;
            }
            if a.pad_to.is_some() {
                spec.pad_to = a.pad_to;
            }
            let t0 = Instant::now();
            progress.event("mix", "start", serde_json::json!({ "out": a.out }));
            let entries = dataset::build_combination(&spec, &a.out)?;
            log::info!("mix: {} entries in {:.2?}", entries.len(), t0.elapsed());
            progress.event("mix", "done", serde_json::json!({ "items": entries.len() }));
            return Ok(ExitCode::SUCCESS);
        }
        Command::Validate(a) => {
            let report = dataset::validate_manifest(&a.root)?;
            for f in &report.findings {
                println!("{f}");
            }
            let mut clean = report.is_clean();
            if clean && a.replay_fraction > 0.0 {
                let (checked, bad) = dataset::spot_check(&a.root, a.replay_fraction, 0)?;
                for p in &bad {
                    println!("replay mismatch {p}");
                }
                log::info!("replayed {checked} entries, {} mismatched", bad.len());
                clean = bad.is_empty();
            }
            println!(
                "{} entries, {} classes, {}",
                report.entries,
                report.classes,
                if clean { "ok" } else { "FAILED" }
            );
            return Ok(if clean { ExitCode::SUCCESS } else { ExitCode::from(2) });
        }
        Command::Stats(a) => {
            let stats = dataset::dataset_stats(&a.root)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
            return Ok(ExitCode::SUCCESS);
        }
        Command::Preview(a) => {
            let sheet = dataset::preview(&a.root, a.n as usize)?;
            if sheet.classes < a.n as usize {
                log::warn!("dataset has {} classes; showing all of them", sheet.classes);
            }
            if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
            }
            std::fs::write(&a.out, sheet.to_png()?).map_err(|source| Error::Io { path: a.out.clone(), source })?;
            return Ok(ExitCode::SUCCESS);
        }
    };
    execute(&spec, &out_dir(&io), &progress)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            log::warn!("could not size worker pool: {e}");
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
