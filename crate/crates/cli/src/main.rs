use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affnorm::adaptive::{DepthScope, StarConfig, StopRule};
use affnorm::eval::{angular_error_map, summarize, ComparisonTable, StatsRecord};
use affnorm::io::{self, OrientedCloud, Png16Encoding};
use affnorm::kernel::{build_kernels, format_kernel_dump, KernelSpec};
use affnorm::synth::{add_gaussian_noise, raycast, SceneSpec};
use affnorm::timing::{time_frames, with_threads};
use affnorm::{Error, Method, ScalarField, StereoRig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

const EXIT_IO: u8 = 3;
const EXIT_FORMAT: u8 = 4;
const EXIT_CONFIG: u8 = 5;

#[derive(Parser)]
#[command(name = "affnorm", version, about = "Surface normals from rectified stereo disparity maps")]
struct Cli {
    /// Worker threads; 0 uses all available cores, 1 runs sequentially.
    #[arg(long, global = true, env = "AFFNORM_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Raycast a scene file into ground-truth maps.
    Synth(SynthArgs),
    /// Estimate normals from a disparity map.
    Estimate(EstimateArgs),
    /// Angular error between estimated and ground-truth normal maps.
    Eval(EvalArgs),
    /// Time repeated estimation runs (file I/O excluded).
    Bench(BenchArgs),
    /// Print the least-squares weights of a square kernel.
    Kernel(KernelArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Standard deviation of the Gaussian disparity noise, in pixels.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodName {
    AffineFixed,
    AffineAdaptiveSt,
    AffineAdaptiveCd,
    Pca,
    Cross,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeName {
    PerRay,
    PerPixel,
}

#[derive(Args)]
struct MethodArgs {
    #[arg(long, value_enum)]
    method: MethodName,
    /// Square kernel (affine-fixed) or window (pca) size.
    #[arg(long, default_value_t = 9)]
    kernel: usize,
    /// Number of star directions.
    #[arg(long, default_value_t = 8)]
    directions: usize,
    /// Maximum steps per star direction.
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Edge threshold of affine-adaptive-st.
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    /// Depth-range ratio of affine-adaptive-cd.
    #[arg(long, default_value_t = 0.1)]
    ratio: f64,
    #[arg(long, value_enum, default_value = "per-ray")]
    depth_scope: ScopeName,
}

impl MethodArgs {
    fn method(&self) -> Result<Method, Error> {
        Ok(match self.method {
            MethodName::AffineFixed => Method::AffineFixed { kernel: self.kernel },
            MethodName::Pca => Method::Pca { window: self.kernel },
            MethodName::Cross => Method::Cross,
            MethodName::AffineAdaptiveSt => {
                Method::Adaptive(StarConfig::threshold(self.directions, self.steps, self.threshold)?)
            }
            MethodName::AffineAdaptiveCd => {
                let mut c = StarConfig::covered_depth(self.directions, self.steps, self.ratio)?;
                if let (StopRule::CoveredDepth { scope, .. }, ScopeName::PerPixel) = (&mut c.stop, self.depth_scope) {
                    *scope = DepthScope::PerPixel;
                }
                Method::Adaptive(c)
            }
        })
    }
}

#[derive(Args)]
struct InputArgs {
    /// Disparity map: PFM, or 16-bit PNG (`raw = 256 d + 1`, 0 invalid).
    #[arg(long)]
    disparity: PathBuf,
    /// Rig file with `fx`, `baseline` and optional `fy`, `u0`, `v0`.
    #[arg(long)]
    rig: Option<PathBuf>,
    #[arg(long)]
    fx: Option<f64>,
    #[arg(long)]
    fy: Option<f64>,
    #[arg(long)]
    u0: Option<f64>,
    #[arg(long)]
    v0: Option<f64>,
    #[arg(long)]
    baseline: Option<f64>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Normal map output (3-channel PFM).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Oriented point cloud output.
    #[arg(long)]
    ply: Option<PathBuf>,
    /// Write the PLY as binary little-endian.
    #[arg(long)]
    binary: bool,
    /// Color-coded normal map output.
    #[arg(long)]
    normals_png: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, default_value = "estimate")]
    label: String,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value_t = 3)]
    warmup: usize,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, default_value_t = 3)]
    size: usize,
}

#[derive(Debug)]
enum Failure {
    Io(PathBuf, std::io::Error),
    Lib(Error),
    Config(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(..) | Failure::Lib(Error::Io(_)) => EXIT_IO,
            Failure::Lib(Error::Format { .. }) => EXIT_FORMAT,
            _ => EXIT_CONFIG,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Io(p, e) => format!("{}: {e}", p.display()),
            Failure::Lib(e) => e.to_string(),
            Failure::Config(m) => m.clone(),
        }
    }

    fn at(path: &Path, e: Error) -> Self {
        match e {
            Error::Format { offset, message } => Failure::Lib(Error::Format {
                offset,
                message: format!("{}: {message}", path.display()),
            }),
            other => Failure::Lib(other),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn load_disparity(path: &Path) -> CliResult<ScalarField> {
    let bytes = read(path)?;
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let field = if is_png {
        io::read_disparity_png16(&bytes, &Png16Encoding::default())
    } else {
        io::read_pfm(&bytes)
    };
    field.map_err(|e| Failure::at(path, e))
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigFile {
    fx: Option<f64>,
    fy: Option<f64>,
    u0: Option<f64>,
    v0: Option<f64>,
    baseline: Option<f64>,
}

/// File values first, then flag overrides; `fy` defaults to `fx` and the
/// principal point to the image center.
fn resolve_rig(args: &InputArgs, width: usize, height: usize) -> CliResult<StereoRig> {
    let file = match &args.rig {
        Some(p) => {
            let text = String::from_utf8(read(p)?)
                .map_err(|_| Failure::Config(format!("{}: not UTF-8", p.display())))?;
            toml::from_str::<RigFile>(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => RigFile::default(),
    };
    let fx = args
        .fx
        .or(file.fx)
        .ok_or_else(|| Failure::Config("focal length missing: pass --fx or a rig file".into()))?;
    let baseline = args
        .baseline
        .or(file.baseline)
        .ok_or_else(|| Failure::Config("baseline missing: pass --baseline or a rig file".into()))?;
    let fy = args.fy.or(file.fy).unwrap_or(fx);
    let u0 = args.u0.or(file.u0).unwrap_or((width as f64 - 1.0) / 2.0);
    let v0 = args.v0.or(file.v0).unwrap_or((height as f64 - 1.0) / 2.0);
    Ok(StereoRig::new(fx, fy, u0, v0, baseline)?)
}

fn rig_file(rig: &StereoRig) -> String {
    format!(
        "fx = {:?}\nfy = {:?}\nu0 = {:?}\nv0 = {:?}\nbaseline = {:?}\n",
        rig.fx, rig.fy, rig.u0, rig.v0, rig.baseline
    )
}

fn synth(args: &SynthArgs) -> CliResult<()> {
    let text = String::from_utf8(read(&args.scene)?)
        .map_err(|_| Failure::Config(format!("{}: not UTF-8", args.scene.display())))?;
    let scene = SceneSpec::from_toml(&text)?;
    let gt = raycast(&scene)?;
    let disparity = if args.sigma > 0.0 {
        add_gaussian_noise(&gt.disparity, args.sigma, args.seed)?
    } else {
        gt.disparity.clone()
    };
    fs::create_dir_all(&args.out).map_err(|e| Failure::Io(args.out.clone(), e))?;
    let out = |name: &str| args.out.join(name);
    write(&out("depth.pfm"), &io::write_pfm(&gt.depth))?;
    write(&out("disparity.pfm"), &io::write_pfm(&disparity))?;
    write(&out("normals.pfm"), &io::write_pfm_normals(&gt.normals))?;
    write(&out("normals.png"), &io::write_normal_png(&gt.normals)?)?;
    write(&out("mask.png"), &io::write_mask_png(scene.width, scene.height, gt.mask())?)?;
    write(&out("rig.cfg"), rig_file(&scene.rig).as_bytes())?;
    println!(
        "{}x{} scene, {} valid pixels, sigma {} seed {} -> {}",
        scene.width,
        scene.height,
        gt.disparity.valid_count(),
        args.sigma,
        args.seed,
        args.out.display()
    );
    Ok(())
}

fn estimate(args: &EstimateArgs, threads: usize) -> CliResult<()> {
    let method = args.method.method()?;
    let disparity = load_disparity(&args.input.disparity)?;
    let rig = resolve_rig(&args.input, disparity.width(), disparity.height())?;
    let normals = with_threads(threads, || method.estimate(&disparity, &rig))??;
    if let Some(p) = &args.out {
        write(p, &io::write_pfm_normals(&normals))?;
    }
    if let Some(p) = &args.ply {
        let cloud = OrientedCloud::from_maps(&disparity, &normals, &rig)?;
        write(p, &io::write_ply_oriented(&cloud, args.binary))?;
    }
    if let Some(p) = &args.normals_png {
        write(p, &io::write_normal_png(&normals)?)?;
    }
    println!(
        "{}: {} of {} pixels estimated",
        method.label(),
        normals.valid_count(),
        normals.len()
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> CliResult<()> {
    let est = io::read_pfm_normals(&read(&args.est)?).map_err(|e| Failure::at(&args.est, e))?;
    let gt = io::read_pfm_normals(&read(&args.gt)?).map_err(|e| Failure::at(&args.gt, e))?;
    let stats = summarize(&angular_error_map(&est, &gt, None)?)?;
    let table = ComparisonTable {
        records: vec![StatsRecord {
            label: args.label.clone(),
            stats,
            config: serde_json::Value::Null,
        }],
    };
    print!("{}", table.render());
    if let Some(p) = &args.json {
        write(p, &io::write_stats_json(&table.records))?;
    }
    Ok(())
}

fn bench(args: &BenchArgs, threads: usize) -> CliResult<()> {
    if args.frames == 0 {
        return Err(Failure::Config("--frames must be positive".into()));
    }
    let method = args.method.method()?;
    let disparity = load_disparity(&args.input.disparity)?;
    let rig = resolve_rig(&args.input, disparity.width(), disparity.height())?;
    let stats = with_threads(threads, || {
        time_frames(args.warmup, args.frames, || method.estimate(&disparity, &rig))
    })??;
    println!(
        "{} on {}x{}: {} frames, avg {:.3} ms, min {:.3} ms, max {:.3} ms, std {:.3} ms",
        method.label(),
        disparity.width(),
        disparity.height(),
        stats.frames,
        stats.avg_ms,
        stats.min_ms,
        stats.max_ms,
        stats.std_ms
    );
    Ok(())
}

fn kernel(args: &KernelArgs) -> CliResult<()> {
    let k = build_kernels(&KernelSpec::square(args.size)?)?;
    print!("{}", format_kernel_dump(&k));
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Estimate(a) => estimate(a, cli.threads),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a, cli.threads),
        Command::Kernel(a) => kernel(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
