//! `tshift` — inference, streaming replay, profiling, shift-overhead
//! benching and CAM dissection for temporal-shift video models.
//!
//! Exit codes: 0 success, 1 runtime error (message on stderr), 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tshift_core::dissect::{dissect, write_mask_pgms, argmax};
use tshift_core::fixture::seeded_tensor;
use tshift_core::io::{read_tnsr_file, write_tnsr_file};
use tshift_core::model::{forward_offline, sample_frames, Model, ModelSpec};
use tshift_core::profile::{
    bench_csv_header, bench_csv_row, bench_shift_overhead, default_bench_fractions, profile_model,
    ProfileReport,
};
use tshift_core::shift::{Fraction, ShiftDirection, ShiftPadding, ShiftPlacement};
use tshift_core::stream::StreamState;
use tshift_core::tensor::frame_slice;
use tshift_core::{ops, Tensor};

#[derive(Parser)]
#[command(name = "tshift", version, about = "Temporal-shift video network toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Offline clip inference: print averaged logits and the argmax class.
    Infer(InferArgs),
    /// Replay a clip frame by frame with per-frame and running predictions.
    Stream(StreamArgs),
    /// Cost report: FLOPs, params, bytes moved, compute/IO ratio.
    Profile(ProfileArgs),
    /// Forward-latency overhead of shifting, across shift proportions.
    Bench(BenchArgs),
    /// Class activation maps: raw CAM, foreground mask, optional PGM dump.
    Dissect(DissectArgs),
    /// Emit deterministic seeded fixtures (clips, specs, weight archives).
    MakeFixture(MakeFixtureArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Bidirectional,
    Unidirectional,
}

#[derive(Clone, Copy, ValueEnum)]
enum PaddingArg {
    Zero,
    Circulant,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Residual,
    InPlace,
}

fn parse_fraction(s: &str) -> std::result::Result<Fraction, String> {
    s.parse::<Fraction>().map_err(|e| e.to_string())
}

/// Model selection plus spec overrides, shared by every model-bound command.
#[derive(Args)]
struct ModelArgs {
    /// Model spec JSON.
    #[arg(long, value_name = "SPEC.json")]
    model: PathBuf,

    /// Weight archive to load instead of seeded init.
    #[arg(long, value_name = "ARCHIVE", conflicts_with = "seed")]
    weights: Option<PathBuf>,

    /// Seed for deterministic weight init.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Override the spec's shift fraction per direction (e.g. "1/8").
    #[arg(long, value_parser = parse_fraction)]
    fraction: Option<Fraction>,

    /// Override the spec's shift direction.
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,

    /// Override the spec's shift padding mode.
    #[arg(long, value_enum)]
    padding: Option<PaddingArg>,

    /// Override the spec's shift placement.
    #[arg(long, value_enum)]
    placement: Option<PlacementArg>,

    /// Override the spec's sampled frame count.
    #[arg(long)]
    frames: Option<usize>,

    /// Override the spec's temporal-pool flag.
    #[arg(long, value_name = "BOOL")]
    temporal_pool: Option<bool>,

    /// Worker threads for convolution (results are identical for any value).
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl ModelArgs {
    fn spec(&self) -> Result<ModelSpec> {
        let text = std::fs::read_to_string(&self.model)
            .with_context(|| format!("reading {}", self.model.display()))?;
        let mut spec = ModelSpec::from_json(&text)
            .with_context(|| format!("parsing {}", self.model.display()))?;
        if let Some(frames) = self.frames {
            spec.frames = frames;
        }
        if let Some(pool) = self.temporal_pool {
            spec.temporal_pool = pool;
        }
        if self.fraction.is_some()
            || self.direction.is_some()
            || self.padding.is_some()
            || self.placement.is_some()
        {
            let mut cfg = spec.shift.unwrap_or_default();
            if let Some(f) = self.fraction {
                cfg.fraction_per_direction = f;
            }
            if let Some(d) = self.direction {
                cfg.direction = match d {
                    DirectionArg::Bidirectional => ShiftDirection::Bidirectional,
                    DirectionArg::Unidirectional => ShiftDirection::Unidirectional,
                };
            }
            if let Some(p) = self.padding {
                cfg.padding = match p {
                    PaddingArg::Zero => ShiftPadding::Zero,
                    PaddingArg::Circulant => ShiftPadding::Circulant,
                };
            }
            if let Some(p) = self.placement {
                cfg.placement = match p {
                    PlacementArg::Residual => ShiftPlacement::Residual,
                    PlacementArg::InPlace => ShiftPlacement::InPlace,
                };
            }
            spec.shift = Some(cfg);
        }
        spec.validate()?;
        Ok(spec)
    }

    fn load(&self, spec: &ModelSpec) -> Result<Model> {
        ops::set_threads(self.threads);
        match &self.weights {
            Some(path) => {
                let mut reader = std::io::BufReader::new(
                    std::fs::File::open(path)
                        .with_context(|| format!("opening {}", path.display()))?,
                );
                Ok(Model::load_archive(spec, &mut reader)?)
            }
            None => Ok(Model::build(spec, self.seed)?),
        }
    }
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Input clip (rank-5 TNSR).
    #[arg(long, value_name = "CLIP.tnsr")]
    input: PathBuf,
    /// Write the averaged logits as TNSR.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StreamArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_name = "CLIP.tnsr")]
    input: PathBuf,
    /// Write the final running prediction as TNSR.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Clip whose geometry the report is computed for.
    #[arg(long, value_name = "CLIP.tnsr")]
    input: PathBuf,
    /// Write the report CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Baseline spec JSON; defaults to the built-in reference backbone.
    #[arg(long, value_name = "SPEC.json")]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 32)]
    width: usize,
    /// Timed passes per shift proportion.
    #[arg(long, default_value_t = 25)]
    repeats: usize,
    /// Untimed passes discarded before measuring.
    #[arg(long, default_value_t = 5)]
    warmup: usize,
    /// Write the overhead table CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DissectArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_name = "CLIP.tnsr")]
    input: PathBuf,
    /// Fraction of pixels kept as attention foreground.
    #[arg(long, default_value_t = 0.2)]
    keep_fraction: f64,
    /// Output prefix: writes <out>_cam.tnsr and <out>_mask.tnsr.
    #[arg(long)]
    out: PathBuf,
    /// Also dump one PGM per frame next to the outputs.
    #[arg(long)]
    pgm: bool,
}

#[derive(Args)]
struct MakeFixtureArgs {
    #[command(subcommand)]
    kind: FixtureKind,
}

#[derive(Subcommand)]
enum FixtureKind {
    /// Random clip in [0, 1): rank-5 TNSR [1, C, T, H, W].
    Clip {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        #[arg(long, default_value_t = 8)]
        frames: usize,
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Model spec JSON from a built-in preset.
    Spec {
        #[arg(long, value_enum, default_value_t = SpecPreset::Tiny)]
        preset: SpecPreset,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, value_parser = parse_fraction)]
        fraction: Option<Fraction>,
        #[arg(long, value_enum)]
        direction: Option<DirectionArg>,
        #[arg(long, value_enum)]
        padding: Option<PaddingArg>,
        #[arg(long, value_enum)]
        placement: Option<PlacementArg>,
        #[arg(long, value_name = "BOOL")]
        temporal_pool: Option<bool>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded weight archive for a spec.
    Weights {
        #[arg(long, value_name = "SPEC.json")]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SpecPreset {
    Tiny,
    Reference,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Infer(args) => infer(args),
        Command::Stream(args) => stream(args),
        Command::Profile(args) => profile(args),
        Command::Bench(args) => bench(args),
        Command::Dissect(args) => run_dissect(args),
        Command::MakeFixture(args) => make_fixture(args),
    }
}

fn fmt_logits(t: &Tensor) -> String {
    t.data()
        .iter()
        .map(|v| format!("{v:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn read_clip(path: &Path) -> Result<Tensor> {
    let clip = read_tnsr_file(path).with_context(|| format!("reading {}", path.display()))?;
    if clip.rank() != 5 {
        bail!("clip {} must be rank 5, got rank {}", path.display(), clip.rank());
    }
    Ok(clip)
}

fn infer(args: InferArgs) -> Result<()> {
    let spec = args.model.spec()?;
    let model = args.model.load(&spec)?;
    let video = read_clip(&args.input)?;
    let clip = sample_frames(&video, spec.frames)?;
    let logits = forward_offline(&model, &clip)?;
    println!("logits: {}", fmt_logits(&logits));
    println!("argmax: {}", argmax(logits.data()));
    if let Some(out) = &args.out {
        write_tnsr_file(out, &logits)?;
    }
    Ok(())
}

fn stream(args: StreamArgs) -> Result<()> {
    let spec = args.model.spec()?;
    let model = args.model.load(&spec)?;
    let video = read_clip(&args.input)?;
    let clip = sample_frames(&video, spec.frames)?;
    let (_, _, t, h, w) = clip.tensor.dims5()?;
    let mut state = StreamState::init(&model, h, w)?;
    for ti in 0..t {
        let frame = frame_slice(&clip.tensor, ti)?;
        let logits = state.step(&frame)?;
        let running = state.running_prediction()?;
        println!("frame {ti:03} logits: {}", fmt_logits(&logits));
        println!("frame {ti:03} running: {}", fmt_logits(&running));
    }
    let final_pred = state.running_prediction()?;
    println!("final: {}", fmt_logits(&final_pred));
    println!("argmax: {}", argmax(final_pred.data()));
    if let Some(out) = &args.out {
        write_tnsr_file(out, &final_pred)?;
    }
    Ok(())
}

fn profile(args: ProfileArgs) -> Result<()> {
    let spec = args.model.spec()?;
    let model = args.model.load(&spec)?;
    let video = read_clip(&args.input)?;
    let clip = sample_frames(&video, spec.frames)?;
    let (n, c, t, h, w) = clip.tensor.dims5()?;
    let report = profile_model(&model, [n, c, t, h, w])?;
    let name = args
        .model
        .model
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    print!("{}", report.to_text(&name));
    if let Some(out) = &args.out {
        let csv = format!("{}\n{}\n", ProfileReport::csv_header(), report.to_csv_row(&name));
        std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let base = match &args.model {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let spec = ModelSpec::from_json(&text)?;
            if spec.shift.is_some() {
                bail!("bench baseline spec must not carry a shift config");
            }
            ModelSpec { frames: args.frames, ..spec }
        }
        None => ModelSpec::preset_reference(args.frames),
    };
    let rows = bench_shift_overhead(
        &base,
        &default_bench_fractions(),
        [1, base.in_channels, args.frames, args.height, args.width],
        args.repeats,
        args.warmup,
        args.seed,
    )?;
    println!("{:>10} {:>16} {:>12}", "fraction", "median_ms", "overhead_%");
    for row in &rows {
        println!(
            "{:>10} {:>16.3} {:>12.2}",
            row.total_fraction.to_string(),
            row.median.as_secs_f64() * 1e3,
            row.overhead_pct
        );
    }
    if let Some(out) = &args.out {
        let mut csv = String::from(bench_csv_header());
        csv.push('\n');
        for row in &rows {
            csv.push_str(&bench_csv_row(row));
            csv.push('\n');
        }
        std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn run_dissect(args: DissectArgs) -> Result<()> {
    let spec = args.model.spec()?;
    let model = args.model.load(&spec)?;
    let video = read_clip(&args.input)?;
    let clip = sample_frames(&video, spec.frames)?;
    let map = dissect(&model, &clip, args.keep_fraction)?;

    let file_name = |suffix: &str| -> PathBuf {
        let mut name = args
            .out
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dissect".into());
        name.push_str(suffix);
        args.out.with_file_name(name)
    };
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let cam_path = file_name("_cam.tnsr");
    let mask_path = file_name("_mask.tnsr");
    write_tnsr_file(&cam_path, &map.raw)?;
    write_tnsr_file(&mask_path, &map.mask)?;
    let kept = map.mask.data().iter().filter(|&&v| v == 1.0).count();
    println!("predicted_class: {}", map.predicted_class);
    println!("foreground_pixels: {kept}");
    println!("cam: {}", cam_path.display());
    println!("mask: {}", mask_path.display());
    if args.pgm {
        let dir = args.out.parent().unwrap_or_else(|| Path::new("."));
        let stem = mask_path.file_stem().unwrap().to_string_lossy().into_owned();
        for path in write_mask_pgms(&map.mask, dir, &stem)? {
            println!("pgm: {}", path.display());
        }
    }
    Ok(())
}

fn make_fixture(args: MakeFixtureArgs) -> Result<()> {
    match args.kind {
        FixtureKind::Clip { seed, channels, frames, height, width, out } => {
            let clip = seeded_tensor(seed, &[1, channels, frames, height, width]);
            write_tnsr_file(&out, &clip)?;
            println!("clip: {}", out.display());
        }
        FixtureKind::Spec {
            preset,
            frames,
            fraction,
            direction,
            padding,
            placement,
            temporal_pool,
            out,
        } => {
            let mut spec = match preset {
                SpecPreset::Tiny => ModelSpec::preset_tiny(),
                SpecPreset::Reference => ModelSpec::preset_reference(8),
            };
            if let Some(f) = frames {
                spec.frames = f;
            }
            if let Some(p) = temporal_pool {
                spec.temporal_pool = p;
            }
            if fraction.is_some() || direction.is_some() || padding.is_some() || placement.is_some()
            {
                let mut cfg = spec.shift.unwrap_or_default();
                if let Some(f) = fraction {
                    cfg.fraction_per_direction = f;
                }
                if let Some(d) = direction {
                    cfg.direction = match d {
                        DirectionArg::Bidirectional => ShiftDirection::Bidirectional,
                        DirectionArg::Unidirectional => ShiftDirection::Unidirectional,
                    };
                }
                if let Some(p) = padding {
                    cfg.padding = match p {
                        PaddingArg::Zero => ShiftPadding::Zero,
                        PaddingArg::Circulant => ShiftPadding::Circulant,
                    };
                }
                if let Some(p) = placement {
                    cfg.placement = match p {
                        PlacementArg::Residual => ShiftPlacement::Residual,
                        PlacementArg::InPlace => ShiftPlacement::InPlace,
                    };
                }
                spec.shift = Some(cfg);
            }
            spec.validate()?;
            std::fs::write(&out, spec.to_json_pretty()? + "\n")
                .with_context(|| format!("writing {}", out.display()))?;
            println!("spec: {}", out.display());
        }
        FixtureKind::Weights { model, seed, out } => {
            let text = std::fs::read_to_string(&model)
                .with_context(|| format!("reading {}", model.display()))?;
            let spec = ModelSpec::from_json(&text)?;
            let built = Model::build(&spec, seed)?;
            let mut writer = std::io::BufWriter::new(
                std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?,
            );
            built.write_archive(&mut writer)?;
            use std::io::Write;
            writer.flush()?;
            println!("weights: {}", out.display());
        }
    }
    Ok(())
}
