use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use slicereg::config::{read_config, PipelineConfig};
use slicereg::error::Error;
use slicereg::geom::{MaskStack, TransformParams};
use slicereg::hull::{intersection_test, per_slice_transforms, IntersectionReport};
use slicereg::io;
use slicereg::metrics::{aggregate_metrics, ipced, ipced_all, seg_metrics};
use slicereg::phantom::{generate_phantom, Phantom, PhantomSpec};
use slicereg::render::{overlay, resample_slice, to_gray8};
use slicereg::segment::{average_otsu, segment_ct};
use slicereg::workflow::{register, register_separate, register_subset, SeparateInit};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "slicereg", version, about = "Register parallel slice masks to a CT segmentation")]
struct Cli {
    /// Seed for phantom generation (overrides the config value).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Pixel stride for cost sampling (overrides the config value).
    #[arg(long, global = true)]
    stride: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitKind {
    Profile,
    Joint,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic volume, photo masks, landmarks and ground truth.
    Phantom {
        /// Config file whose [phantom] section describes the phantom.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Draw rotations, scaling, spacing and offsets from the seed.
        #[arg(long)]
        random_truth: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold CT volumes at their average Otsu level and clean up the masks.
    SegmentCt {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long = "out", num_args = 1.., required = true)]
        outputs: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Profile initialization followed by joint optimization.
    Register {
        #[arg(long)]
        ct: PathBuf,
        #[arg(long)]
        photos: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Keep only this many slices grown outward from the center slice.
        #[arg(long)]
        subset: Option<usize>,
        /// Slice index the subset grows from; defaults to the middle slice.
        #[arg(long)]
        center: Option<i64>,
        /// Write the per-iteration cost as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Register every slice on its own.
    RegisterSeparate {
        #[arg(long)]
        ct: PathBuf,
        #[arg(long)]
        photos: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        init: InitKind,
        #[arg(long)]
        out: PathBuf,
        /// Also run the intersection test and write its CSV here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Flag slices that cut into the hulls of their neighbours.
    Intersect {
        #[arg(long)]
        photos: PathBuf,
        /// θ document: one joint transform or one transform per slice.
        #[arg(long = "theta-per-slice")]
        theta: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the CT on the pixel grid of one registered slice.
    Resample {
        #[arg(long)]
        ct: PathBuf,
        #[arg(long)]
        theta: PathBuf,
        /// Slice index.
        #[arg(long)]
        slice: i64,
        /// Photo directory that sets the output size.
        #[arg(long, conflicts_with = "size")]
        photos: Option<PathBuf>,
        /// Output size as WIDTHxHEIGHT.
        #[arg(long)]
        size: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine a photo and a registered CT slice into one RGB image.
    Overlay {
        #[arg(long)]
        photo: PathBuf,
        #[arg(long)]
        ctslice: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean distance between annotated point pairs, in mm.
    Ipced {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long = "pixel-size")]
        pixel_size: f64,
    },
    /// Pixel-wise and edge metrics of predicted masks against reference masks.
    SegMetrics {
        #[arg(long, num_args = 1.., required = true)]
        pred: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        truth: Vec<PathBuf>,
        #[arg(long = "pixel-size")]
        pixel_size: f64,
        /// Write the reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Landmark annotations for a phantom directory under a registration result.
    AnnotatePhantom {
        #[arg(long)]
        phantom: PathBuf,
        #[arg(long)]
        theta: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn load_config(path: Option<&Path>, cli: &Cli) -> CliResult<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => read_config(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.stride {
        if s == 0 {
            return Err(CliError::Usage("--stride must be at least 1".into()));
        }
        cfg.joint.stride = s;
        cfg.separate.stride = s;
    }
    if let Some(seed) = cli.seed {
        cfg.phantom.seed = seed;
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e }.into())
}

fn create_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e }.into())
}

/// Single-slice transforms for every slice of `stack` from a θ document.
fn transforms_for(stack: &MaskStack, transforms: Vec<TransformParams>) -> CliResult<Vec<TransformParams>> {
    if transforms.len() == 1 && transforms[0].per_slice_offsets.len() == stack.len() {
        transforms[0].check_bound(stack)?;
        return Ok(per_slice_transforms(&transforms[0]));
    }
    if transforms.len() != stack.len() {
        return Err(Error::ParameterBinding(format!("{} transforms for {} slices", transforms.len(), stack.len())).into());
    }
    Ok(transforms)
}

/// Transform and ordinal that place slice index `slice`.
fn locate_slice(transforms: &[TransformParams], slice: i64) -> CliResult<(&TransformParams, usize)> {
    transforms
        .iter()
        .find_map(|t| t.per_slice_offsets.iter().position(|o| o.index == slice).map(|k| (t, k)))
        .ok_or_else(|| Error::ParameterBinding(format!("no transform for slice index {slice}")).into())
}

fn write_report(path: Option<&Path>, report: &IntersectionReport) -> CliResult {
    let csv = report.to_csv();
    match path {
        Some(p) => write_text(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run_phantom(cli: &Cli, spec_path: Option<&Path>, random_truth: bool, out: &Path) -> CliResult {
    let cfg = load_config(spec_path, cli)?;
    let mut spec = cfg.phantom;
    if random_truth {
        let drawn = PhantomSpec::random(spec.seed);
        spec.truth = drawn.truth;
        if spec.n_slices != drawn.n_slices {
            return Err(CliError::Usage("--random-truth draws offsets for the default slice count".into()));
        }
    }
    let ph = generate_phantom(&spec)?;
    create_dir(out)?;
    io::write_volume(&out.join("volume.mhd"), &ph.volume)?;
    io::write_volume(&out.join("occupancy.mhd"), &ph.occupancy)?;
    io::write_mask_dir(&out.join("photos"), &ph.stack)?;
    io::write_theta(&out.join("theta_truth.json"), std::slice::from_ref(&ph.theta))?;
    io::write_theta(&out.join("slice_truth.json"), &ph.slice_truth)?;
    write_text(&out.join("landmarks.json"), &(serde_json::to_string_pretty(&ph.landmarks).expect("landmarks serialize") + "\n"))?;
    let saved = PipelineConfig { phantom: spec, ..PipelineConfig::default() };
    write_text(&out.join("phantom.toml"), &saved.to_toml())?;
    println!("wrote phantom with {} slices to {}", ph.stack.len(), out.display());
    Ok(())
}

fn load_phantom(dir: &Path) -> CliResult<Phantom> {
    let cfg = read_config(&dir.join("phantom.toml"))?;
    Ok(generate_phantom(&cfg.phantom)?)
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Phantom { spec, random_truth, out } => run_phantom(cli, spec.as_deref(), *random_truth, out),
        Command::SegmentCt { inputs, outputs, config } => {
            if inputs.len() != outputs.len() {
                return Err(CliError::Usage(format!("{} inputs but {} outputs", inputs.len(), outputs.len())));
            }
            let cfg = load_config(config.as_deref(), cli)?;
            let vols = inputs.iter().map(|p| io::read_scalar_volume(p)).collect::<slicereg::Result<Vec<_>>>()?;
            let t = average_otsu(&vols)?;
            println!("threshold {t}");
            for (vol, out) in vols.iter().zip(outputs) {
                io::write_volume(out, &segment_ct(vol, t, &cfg.segment)?)?;
            }
            Ok(())
        }
        Command::Register { ct, photos, config, out, subset, center, trace } => {
            let cfg = load_config(config.as_deref(), cli)?;
            let mask = io::read_binary_volume(ct)?;
            let stack = io::read_mask_dir(photos)?;
            let reg = match subset {
                Some(k) => {
                    let c = match center {
                        Some(idx) => stack
                            .slice_indices()
                            .iter()
                            .position(|i| i == idx)
                            .ok_or_else(|| CliError::Usage(format!("--center {idx} is not a slice index in {}", photos.display())))?,
                        None => stack.len() / 2,
                    };
                    if *k == 0 || *k > stack.len() {
                        return Err(CliError::Usage(format!("--subset must be in 1..={}", stack.len())));
                    }
                    register_subset(&stack, &mask, c, *k, &cfg)?.1
                }
                None => register(&stack, &mask, &cfg)?,
            };
            io::write_theta(out, std::slice::from_ref(reg.theta()))?;
            if let Some(p) = trace {
                write_text(p, &reg.trace.to_csv())?;
            }
            println!(
                "{:?} after {} iterations, cost {:.6e}",
                reg.trace.stop_reason,
                reg.trace.iterations,
                reg.trace.final_cost().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::RegisterSeparate { ct, photos, config, init, out, report } => {
            let cfg = load_config(config.as_deref(), cli)?;
            let mask = io::read_binary_volume(ct)?;
            let stack = io::read_mask_dir(photos)?;
            let kind = match init {
                InitKind::Profile => SeparateInit::Profile,
                InitKind::Joint => SeparateInit::Joint,
            };
            let traces = register_separate(&stack, &mask, kind, &cfg)?;
            let transforms: Vec<TransformParams> = traces.into_iter().map(|t| t.final_theta).collect();
            io::write_theta(out, &transforms)?;
            if let Some(p) = report {
                let r = intersection_test(&stack, &transforms, &cfg.intersect)?;
                write_report(Some(p), &r)?;
                println!("{} of {} slices intersecting: {}", r.flagged(), stack.len(), r.classification.name());
            }
            Ok(())
        }
        Command::Intersect { photos, theta, config, out } => {
            let cfg = load_config(config.as_deref(), cli)?;
            let stack = io::read_mask_dir(photos)?;
            let transforms = transforms_for(&stack, io::read_theta(theta)?)?;
            let r = intersection_test(&stack, &transforms, &cfg.intersect)?;
            write_report(out.as_deref(), &r)
        }
        Command::Resample { ct, theta, slice, photos, size, out } => {
            let (w, h) = match (photos, size) {
                (Some(dir), _) => {
                    let stack = io::read_mask_dir(dir)?;
                    (stack.width(), stack.height())
                }
                (None, Some(s)) => {
                    let parsed = s.split_once('x').and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)));
                    parsed.ok_or_else(|| CliError::Usage(format!("--size must look like 96x96, got `{s}`")))?
                }
                (None, None) => return Err(CliError::Usage("give --photos or --size".into())),
            };
            let vol = io::read_scalar_volume(ct)?;
            let transforms = io::read_theta(theta)?;
            let (t, ord) = locate_slice(&transforms, *slice)?;
            let img = resample_slice(&vol, t, ord, w, h)?;
            let (lo, hi) = vol.min_max();
            io::write_gray_png(out, w, h, to_gray8(&img, lo, hi))?;
            Ok(())
        }
        Command::Overlay { photo, ctslice, out } => {
            let img = overlay(&io::read_gray(photo)?, &io::read_gray(ctslice)?)?;
            img.save_with_format(out, image::ImageFormat::Png).map_err(|e| Error::Format { path: out.clone(), message: e.to_string() })?;
            Ok(())
        }
        Command::Ipced { annotations, pixel_size } => {
            if !(*pixel_size > 0.0) {
                return Err(CliError::Usage("--pixel-size must be positive".into()));
            }
            let sets = io::read_annotations(annotations, *pixel_size)?;
            for s in &sets {
                println!("slice {}: {:.6} mm over {} pairs", s.slice, ipced(s)?, s.pairs.len());
            }
            println!("ipced_mm {}", ipced_all(&sets)?);
            Ok(())
        }
        Command::SegMetrics { pred, truth, pixel_size, out } => {
            if pred.len() != truth.len() {
                return Err(CliError::Usage(format!("{} predictions but {} truth masks", pred.len(), truth.len())));
            }
            if !(*pixel_size > 0.0) {
                return Err(CliError::Usage("--pixel-size must be positive".into()));
            }
            let mut reports = Vec::new();
            for (p, t) in pred.iter().zip(truth) {
                let (pm, tm) = (io::read_mask(p)?, io::read_mask(t)?);
                let r = seg_metrics(&pm, &tm, *pixel_size).map_err(|e| match e {
                    Error::DimensionMismatch(m) => Error::DimensionMismatch(format!("{} vs {}: {m}", p.display(), t.display())),
                    other => other,
                })?;
                reports.push(r);
            }
            let agg = aggregate_metrics(&reports)?;
            let doc = serde_json::json!({ "reports": reports, "aggregate": agg });
            let text = serde_json::to_string_pretty(&doc).expect("reports serialize") + "\n";
            match out {
                Some(p) => write_text(p, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::AnnotatePhantom { phantom, theta, out } => {
            let ph = load_phantom(phantom)?;
            let transforms = io::read_theta(theta)?;
            let (t, _) = locate_slice(&transforms, ph.landmarks.slice_index)?;
            let ann = ph.landmark_annotations(t)?;
            io::write_annotations(out, std::slice::from_ref(&ann))?;
            println!("pixel size {} mm", ann.pixel_size_mm);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Diverged { .. }) { EXIT_DIVERGED } else { EXIT_DATA })
        }
    }
}
