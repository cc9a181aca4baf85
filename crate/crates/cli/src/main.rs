use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use vnlnet::bench::{self, BenchGrid};
use vnlnet::denoise::{denoise_video_with, nl_mean_video};
use vnlnet::metrics::MetricReport;
use vnlnet::network::{load_weights, save_weights};
use vnlnet::noise::NoiseSpec;
use vnlnet::search::{search_frames, write_match_table, SearchConfig, SearchImpl, SearchMode};
use vnlnet::train::{synthetic, train_with, TrainFile};
use vnlnet::video::{read_sequence_dir, write_sequence};

/// Non-local video denoising.
#[derive(Debug, Parser)]
#[command(name = "vnlnet", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Add synthetic noise to a frame sequence.
    AddNoise(AddNoiseArgs),
    /// Run the patch search and write the match table.
    Search(SearchArgs),
    /// Denoise a frame sequence with trained weights or the non-local mean.
    Denoise(DenoiseArgs),
    /// Train a network from a configuration file.
    Train(TrainArgs),
    /// Compare a sequence against a clean reference (PSNR, SSIM).
    Eval(EvalArgs),
    /// Time the naive and fast searches over a grid of patch sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NoiseArg {
    Awgn,
    Box,
    Sp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Free,
    OnePerFrame,
}

impl From<ModeArg> for SearchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Free => SearchMode::Free,
            ModeArg::OnePerFrame => SearchMode::OnePerFrame,
        }
    }
}

#[derive(Debug, Args)]
struct AddNoiseArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, value_enum, default_value = "awgn")]
    noise: NoiseArg,
    /// Standard deviation for awgn and box.
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    sigma: f64,
    /// Replaced fraction of pixels for sp.
    #[arg(long, default_value_t = 0.25, allow_negative_numbers = true)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SearchFlags {
    /// Patch side.
    #[arg(long = "patch-size", default_value_t = 41)]
    patch_size: usize,
    /// Side of the spatial search window.
    #[arg(long = "spatial-window", default_value_t = 41)]
    spatial_window: usize,
    /// Frames in the temporal search window.
    #[arg(long = "temporal-window", default_value_t = 15)]
    temporal_window: usize,
    /// Matches per pixel (default: the temporal window).
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long, value_enum, default_value = "one-per-frame")]
    mode: ModeArg,
    /// Clean sequence used for distances only.
    #[arg(long)]
    oracle: Option<PathBuf>,
}

impl SearchFlags {
    fn config(&self) -> Result<SearchConfig> {
        let mut cfg = SearchConfig::new(
            self.patch_size,
            self.spatial_window,
            self.temporal_window,
            self.neighbors.unwrap_or(self.temporal_window),
            self.mode.into(),
        );
        cfg.validate()?;
        if let Some(dir) = &self.oracle {
            cfg = cfg.with_guide(read_sequence_dir(dir)?);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct SearchArgs {
    input: PathBuf,
    /// Match table file to write.
    output: PathBuf,
    #[command(flatten)]
    search: SearchFlags,
    /// Use the brute-force search.
    #[arg(long)]
    naive: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ImplArg {
    Fast,
    Naive,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Baseline {
    NlMean,
}

#[derive(Debug, Args)]
struct DenoiseArgs {
    input: PathBuf,
    output: PathBuf,
    /// Weight file from `train`.
    #[arg(long, required_unless_present = "baseline")]
    weights: Option<PathBuf>,
    /// Output a network-free baseline instead.
    #[arg(long, value_enum, conflicts_with = "weights")]
    baseline: Option<Baseline>,
    #[command(flatten)]
    search: SearchFlags,
}

#[derive(Debug, Args)]
struct TrainArgs {
    config: PathBuf,
    /// Overrides the weight file named in the configuration.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Overrides the CSV log named in the configuration.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    clean: PathBuf,
    test: PathBuf,
    /// Also write per-frame values as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Sequence to search (default: a synthetic clip).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Side of the synthetic clip.
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Frames of the synthetic clip.
    #[arg(long, default_value_t = 15)]
    frames: usize,
    #[arg(long = "patch-sizes", value_delimiter = ',', default_value = "9,21,41")]
    patch_sizes: Vec<usize>,
    #[arg(long = "spatial-window", default_value_t = 41)]
    spatial_window: usize,
    #[arg(long = "temporal-window", default_value_t = 15)]
    temporal_window: usize,
    #[arg(long, value_enum, default_value = "one-per-frame")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    /// Rows of the central frame timed for the fast search.
    #[arg(long, default_value_t = 8)]
    rows: usize,
    /// Pixels timed for the naive search.
    #[arg(long, default_value_t = 4)]
    pixels: usize,
    /// Time only one implementation.
    #[arg(long, value_enum)]
    only: Option<ImplArg>,
    /// Write the timing table here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let head = msg.split("\n\nUsage").next().unwrap_or_default();
            eprintln!("{}", head.split_whitespace().collect::<Vec<_>>().join(" "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    match cli.command {
        Command::AddNoise(a) => add_noise(a),
        Command::Search(a) => search(a),
        Command::Denoise(a) => denoise(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => run_bench(a),
    }
}

fn add_noise(a: AddNoiseArgs) -> Result<()> {
    let spec = match a.noise {
        NoiseArg::Awgn => NoiseSpec::awgn(a.sigma, a.seed),
        NoiseArg::Box => NoiseSpec::box_correlated(a.sigma, a.seed),
        NoiseArg::Sp => NoiseSpec::salt_pepper(a.fraction, a.seed),
    };
    spec.validate()?;
    let clean = read_sequence_dir(&a.input)?;
    let noisy = spec.apply(&clean)?;
    write_sequence(&noisy, &a.output)?;
    let sidecar = a.output.join("noise.txt");
    std::fs::write(&sidecar, format!("{spec}\n")).with_context(|| format!("writing {}", sidecar.display()))?;
    Ok(())
}

fn search(a: SearchArgs) -> Result<()> {
    let cfg = a.search.config()?;
    let v = read_sequence_dir(&a.input)?;
    let imp = if a.naive { SearchImpl::Naive } else { SearchImpl::Fast };
    let start = Instant::now();
    let table = search_frames(&v, &cfg, 0..v.frames(), imp)?;
    write_match_table(&table, &a.output)?;
    eprintln!("{imp} search of {} in {:.2}s", v.shape(), start.elapsed().as_secs_f64());
    Ok(())
}

fn denoise(a: DenoiseArgs) -> Result<()> {
    let cfg = a.search.config()?;
    let net = a.weights.as_deref().map(load_weights).transpose()?;
    let noisy = read_sequence_dir(&a.input)?;
    let out = match (net, a.baseline) {
        (_, Some(Baseline::NlMean)) => nl_mean_video(&noisy, &cfg)?,
        (Some(net), None) => {
            let frames = noisy.frames();
            denoise_video_with(&net, &noisy, &cfg, |t| eprintln!("frame {}/{frames}", t + 1))?
        }
        (None, None) => bail!("either --weights or --baseline is required"),
    };
    write_sequence(&out, &a.output)?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let file = TrainFile::load(&a.config)?;
    let (train_videos, val_videos) = file.load_videos()?;
    let channels = train_videos[0].channels();
    let cfg = file.train_config(channels)?;
    let weights = a.weights.unwrap_or(file.weights.clone());
    let log_path = a.log.unwrap_or(file.log.clone());
    let start = Instant::now();
    let trained = train_with(&train_videos, &val_videos, &cfg, |e| {
        eprintln!(
            "epoch {} lr {:e} loss {:.4} val_psnr {:.2} ({:.0}s)",
            e.epoch,
            e.lr,
            e.train_loss,
            e.val_psnr,
            start.elapsed().as_secs_f64()
        )
    })?;
    if let Some(dir) = weights.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    save_weights(&trained.network, &weights)?;
    write_file(&log_path, &trained.log.to_csv())?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let clean = read_sequence_dir(&a.clean)?;
    let test = read_sequence_dir(&a.test)?;
    let report = MetricReport::compute(&clean, &test)?;
    print!("{report}");
    if let Some(path) = a.csv {
        write_file(&path, &report.to_csv())?;
    }
    Ok(())
}

fn run_bench(a: BenchArgs) -> Result<()> {
    let v = match &a.input {
        Some(dir) => read_sequence_dir(dir)?,
        None => synthetic::translating_clip(1, a.frames, 1, a.size, a.size)?,
    };
    let grid = BenchGrid {
        patch_sizes: a.patch_sizes,
        spatial_window: a.spatial_window,
        temporal_window: a.temporal_window,
        mode: a.mode.into(),
        repetitions: a.repetitions,
        fast_rows: a.rows,
        naive_pixels: a.pixels,
        implementations: match a.only {
            Some(ImplArg::Fast) => vec![SearchImpl::Fast],
            Some(ImplArg::Naive) => vec![SearchImpl::Naive],
            None => vec![SearchImpl::Fast, SearchImpl::Naive],
        },
    };
    let points = bench::run_with(&v, &grid, |p| {
        eprintln!("{} s={} {:.3e} s/pixel", p.implementation, p.patch_size, p.seconds_per_pixel)
    })?;
    let csv = bench::to_csv(&points);
    match &a.csv {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    for &imp in &grid.implementations {
        match bench::loglog_slope(&points, imp) {
            Some(s) => println!("slope {imp} {s:.3}"),
            None => println!("slope {imp} n/a"),
        }
    }
    if let Some(&s) = grid.patch_sizes.iter().max() {
        if let Some(x) = bench::speedup(&points, s) {
            println!("speedup at s={s} {x:.1}x");
        }
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
