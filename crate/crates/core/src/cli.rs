//! Command-line front end: `dehaze`, `fogsim` and `bench`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;

use crate::airlight::Airlight;
use crate::darkchannel::{normalized_dark_channel_with, ChannelAttribution};
use crate::error::{DefogError, Result};
use crate::fogsim::{checker_scene, synthesize, FogScene};
use crate::image::{load_image, save_image, save_scalar_map, Image, ScalarMap};
use crate::matting::SolverOptions;
use crate::metrics::{bench_pipeline, reports_to_csv, reports_to_table, BenchReport};
use crate::pipeline::dehaze;
use crate::transmittance::{parse_triple, BetaRatios, DehazeParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "DEFOG_THREADS";

#[derive(Debug, Parser)]
#[command(name = "defog", version, about = "Single-image dehazing with per-channel transmittance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Remove haze from one or more images.
    Dehaze(DehazeArgs),
    /// Add synthetic haze to a clear image.
    Fogsim(FogsimArgs),
    /// Time full-resolution against down-sampled refinement.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Per-channel transmittance with down-sampled refinement.
    Improved,
    /// Single shared transmittance, full-resolution refinement.
    He,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Fog retention factor, 0 < omega <= 1.
    #[arg(long, default_value_t = 0.95)]
    omega: f64,
    /// Dark-channel window size (odd).
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Down-sampling factor applied before matting refinement.
    #[arg(long, default_value_t = 4)]
    downsample: usize,
    /// Data-term weight of the matting solve.
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    /// Matting Laplacian covariance regularizer.
    #[arg(long, default_value_t = 1e-7)]
    eps: f64,
    /// Transmittance floor used in restoration.
    #[arg(long, default_value_t = 0.1)]
    t0: f64,
    /// Attenuation ratios r,g,b.
    #[arg(long, default_value = "1,1.28,1.61")]
    betas: String,
    /// Relative residual tolerance of the conjugate-gradient solve.
    #[arg(long = "cg-tol", default_value_t = 1e-6)]
    cg_tol: f64,
    /// Iteration cap of the conjugate-gradient solve.
    #[arg(long = "cg-maxiter", default_value_t = 2000)]
    cg_maxiter: usize,
    /// Attribute the dark channel to the center pixel's minimum channel
    /// instead of the window's.
    #[arg(long)]
    center_attribution: bool,
    #[arg(long, value_enum, default_value_t = Mode::Improved)]
    mode: Mode,
}

impl PipelineArgs {
    fn params(&self) -> Result<DehazeParams> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(DefogError::InvalidParameter(format!(
                "window size must be odd and positive, got {}",
                self.window
            )));
        }
        let params = DehazeParams {
            omega: self.omega,
            window_radius: (self.window - 1) / 2,
            lambda: self.lambda,
            eps: self.eps,
            t0: self.t0,
            betas: self.betas.parse()?,
            downsample_factor: self.downsample,
            solver: SolverOptions {
                tolerance: self.cg_tol,
                max_iterations: self.cg_maxiter,
            },
            attribution: if self.center_attribution {
                ChannelAttribution::Center
            } else {
                ChannelAttribution::Window
            },
        };
        let params = match self.mode {
            Mode::Improved => params,
            Mode::He => params.he_mode(),
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Args)]
struct DehazeArgs {
    /// Input images (PNG or PPM).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output file (single input only).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Output directory (required for several inputs).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Atmospheric light override r,g,b.
    #[arg(long)]
    airlight: Option<String>,
    /// Directory receiving t_dark and per-channel transmittance maps.
    #[arg(long)]
    dump_t: Option<PathBuf>,
    /// Directory receiving the normalized dark channel and its channel labels.
    #[arg(long)]
    dump_dark: Option<PathBuf>,
    /// Fail with exit code 3 when the matting solve does not converge.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
struct FogsimArgs {
    /// Clear input image.
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Depth map image, or `const:<value>` for a constant depth.
    #[arg(long)]
    depth: String,
    /// Multiplier applied to depth-map samples.
    #[arg(long, default_value_t = 1.0)]
    depth_scale: f64,
    /// Absolute attenuation coefficients r,g,b.
    #[arg(long, default_value = "0.5,0.64,0.805")]
    betas: String,
    /// Atmospheric light r,g,b.
    #[arg(long, default_value = "1,1,1")]
    airlight: String,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Input images.
    inputs: Vec<PathBuf>,
    /// Add a generated hazy scene of the given size, e.g. 600x455.
    #[arg(long)]
    synthetic: Vec<String>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Write CSV here (`-` for stdout).
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    NotConverged(String),
}

impl From<DefogError> for Failure {
    fn from(e: DefogError) -> Failure {
        match e {
            DefogError::InvalidParameter(_) => Failure::Usage(e.to_string()),
            _ => Failure::Io(e.to_string()),
        }
    }
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    configure_threads();
    let result = match cli.command {
        Command::Dehaze(a) => cmd_dehaze(a),
        Command::Fogsim(a) => cmd_fogsim(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            EXIT_IO
        }
        Err(Failure::NotConverged(m)) => {
            eprintln!("error: {m}");
            EXIT_NOT_CONVERGED
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // fails harmlessly if a pool already exists in this process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn parse_airlight(s: &str) -> Result<Airlight> {
    let [r, g, b] = parse_triple(s)?;
    Airlight::new(r, g, b)
}

fn output_path_for(input: &Path, dir: &Path) -> PathBuf {
    let stem = input.file_stem().unwrap_or_default();
    let ext = match input.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ppm") => "ppm",
        _ => "png",
    };
    dir.join(stem).with_extension(ext)
}

fn cmd_dehaze(args: DehazeArgs) -> std::result::Result<(), Failure> {
    let params = args.pipeline.params()?;
    let airlight = args.airlight.as_deref().map(parse_airlight).transpose()?;

    let jobs: Vec<(PathBuf, PathBuf)> = match (&args.output, &args.out_dir) {
        (Some(_), Some(_)) => return Err(Failure::Usage("use either --output or --out-dir".into())),
        (Some(out), None) if args.inputs.len() == 1 => vec![(args.inputs[0].clone(), out.clone())],
        (Some(_), None) => return Err(Failure::Usage("several inputs need --out-dir".into())),
        (None, Some(dir)) => {
            fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
            args.inputs
                .iter()
                .map(|i| (i.clone(), output_path_for(i, dir)))
                .collect()
        }
        (None, None) => return Err(Failure::Usage("missing --output or --out-dir".into())),
    };

    let multi = jobs.len() > 1;
    let results: Vec<std::result::Result<(), Failure>> = jobs
        .par_iter()
        .map(|(input, output)| {
            let img = load_image(input)?;
            let out = dehaze(&img, &params, airlight)?;
            info!(
                "{}: airlight {}, {} solver iterations",
                input.display(),
                out.airlight,
                out.report.iterations
            );
            if args.strict && !out.report.converged {
                return Err(Failure::NotConverged(format!(
                    "{}: matting solve did not converge ({} iterations, residual {:.3e})",
                    input.display(),
                    out.report.iterations,
                    out.report.relative_residual
                )));
            }
            save_image(&out.image, output)?;
            let stem = input.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let prefix = if multi { format!("{stem}_") } else { String::new() };
            if let Some(dir) = &args.dump_t {
                fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
                save_scalar_map(&out.t_dark, dir.join(format!("{prefix}t_dark.png")))?;
                save_scalar_map(&out.transmittances.r, dir.join(format!("{prefix}t_r.png")))?;
                save_scalar_map(&out.transmittances.g, dir.join(format!("{prefix}t_g.png")))?;
                save_scalar_map(&out.transmittances.b, dir.join(format!("{prefix}t_b.png")))?;
            }
            if let Some(dir) = &args.dump_dark {
                fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
                let dark = normalized_dark_channel_with(&img, &out.airlight, params.window_radius, params.attribution)?;
                save_scalar_map(&dark.values.clamp01(), dir.join(format!("{prefix}dark.png")))?;
                save_image(&dark.channel.to_image(), dir.join(format!("{prefix}dark_channel.png")))?;
            }
            Ok(())
        })
        .collect();

    // report every failure, exit with the first one's class
    let mut first = None;
    for r in results {
        if let Err(f) = r {
            if first.is_some() {
                let m = match &f {
                    Failure::Usage(m) | Failure::Io(m) | Failure::NotConverged(m) => m,
                };
                eprintln!("error: {m}");
            } else {
                first = Some(f);
            }
        }
    }
    match first {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn load_depth(spec: &str, scale: f64, dims: (usize, usize)) -> Result<ScalarMap> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(DefogError::InvalidParameter(format!("depth scale must be non-negative, got {scale}")));
    }
    if let Some(v) = spec.strip_prefix("const:") {
        let d: f64 = v
            .parse()
            .map_err(|_| DefogError::InvalidParameter(format!("bad constant depth {v:?}")))?;
        return ScalarMap::filled(dims.0, dims.1, d * scale);
    }
    let img = load_image(spec)?;
    crate::error::check_dims(img.dims(), dims)?;
    // gray files decode identically in every plane; take red
    let values = img
        .plane(crate::image::Channel::R)
        .iter()
        .map(|&v| v * scale)
        .collect();
    ScalarMap::new(dims.0, dims.1, values)
}

fn cmd_fogsim(args: FogsimArgs) -> std::result::Result<(), Failure> {
    let radiance = load_image(&args.input)?;
    let depth = load_depth(&args.depth, args.depth_scale, radiance.dims())?;
    let scene = FogScene::new(radiance, depth, parse_airlight(&args.airlight)?, args.betas.parse()?)?;
    save_image(&synthesize(&scene)?, &args.output)?;
    Ok(())
}

/// Hazy version of [`checker_scene`] used by `bench --synthetic`.
pub fn synthetic_hazy(width: usize, height: usize) -> Result<Image> {
    let radiance = checker_scene(width, height, 8, 1)?;
    let scene = FogScene::new(
        radiance,
        ScalarMap::filled(width, height, 1.0)?,
        Airlight::gray(0.9)?,
        BetaRatios::new(0.5, 0.64, 0.805)?,
    )?;
    synthesize(&scene)
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || DefogError::InvalidParameter(format!("expected WIDTHxHEIGHT, got {s:?}"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?))
}

fn cmd_bench(args: BenchArgs) -> std::result::Result<(), Failure> {
    let params = args.pipeline.params()?;
    if args.inputs.is_empty() && args.synthetic.is_empty() {
        return Err(Failure::Usage("give input images or --synthetic WxH".into()));
    }
    let mut cases: Vec<(String, Image)> = Vec::new();
    for s in &args.synthetic {
        let (w, h) = parse_size(s)?;
        cases.push((format!("synthetic_{w}x{h}"), synthetic_hazy(w, h)?));
    }
    for p in &args.inputs {
        let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        cases.push((name, load_image(p)?));
    }
    // serial on purpose: concurrent runs would distort each other's timings
    let mut reports: Vec<BenchReport> = Vec::with_capacity(cases.len());
    for (name, img) in &cases {
        reports.push(bench_pipeline(name, img, &params, args.repeats)?);
    }
    print!("{}", reports_to_table(&reports));
    if let Some(path) = &args.csv {
        let csv = reports_to_csv(&reports);
        if path.as_os_str() == "-" {
            print!("{csv}");
        } else {
            fs::write(path, csv).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_must_be_odd() {
        let cli = Cli::try_parse_from(["defog", "dehaze", "a.png", "-o", "b.png", "--window", "4"]).unwrap();
        let Command::Dehaze(a) = cli.command else { panic!() };
        assert!(a.pipeline.params().is_err());
    }

    #[test]
    fn he_mode_overrides() {
        let cli = Cli::try_parse_from(["defog", "dehaze", "a.png", "-o", "b.png", "--mode", "he"]).unwrap();
        let Command::Dehaze(a) = cli.command else { panic!() };
        let p = a.pipeline.params().unwrap();
        assert_eq!(p.betas, BetaRatios::UNIFORM);
        assert_eq!(p.downsample_factor, 1);
        assert_eq!(p.window_radius, 2);
    }

    #[test]
    fn defaults() {
        let cli = Cli::try_parse_from(["defog", "dehaze", "a.png", "-o", "b.png"]).unwrap();
        let Command::Dehaze(a) = cli.command else { panic!() };
        assert_eq!(a.pipeline.params().unwrap(), DehazeParams::default());
    }

    #[test]
    fn sizes() {
        assert_eq!(parse_size("600x455").unwrap(), (600, 455));
        assert!(parse_size("600").is_err());
    }

    #[test]
    fn batch_output_names() {
        assert_eq!(output_path_for(Path::new("/a/b/foggy.ppm"), Path::new("out")), PathBuf::from("out/foggy.ppm"));
        assert_eq!(output_path_for(Path::new("x.PNG"), Path::new("out")), PathBuf::from("out/x.png"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["defog", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["defog", "dehaze"]), EXIT_USAGE);
        assert_eq!(run(["defog", "--help"]), EXIT_OK);
    }
}
