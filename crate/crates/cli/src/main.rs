use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gridtok::budget::{budget_for_plan, compare_budgets, write_csv, BaselineSpec};
use gridtok::corpus::{ingest, run_report};
use gridtok::pipeline::grad::{grad_check, GradCheckOptions, Loss, SquaredNormLoss, SumLoss};
use gridtok::pipeline::{checkpoint, forward, prepare, ModelParams, Segment};
use gridtok::{make_plan, ImageDims, PipelineConfig, ResampleKernel, TokenGrouping};
use image::{ImageReader, Rgb, Rgb32FImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Parser)]
#[command(name = "gridtok", version, about = "Adaptive grid partitioning and visual-token budgeting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Largest grid side in cells.
    #[arg(long, default_value_t = 3)]
    max_grid: u32,
    /// Cell side in pixels (the encoder input size).
    #[arg(long = "cell", default_value_t = 336)]
    cell: u32,
    #[arg(long, value_enum, default_value_t = Kernel::Bilinear)]
    resample: Kernel,
}

#[derive(Args, Clone)]
struct BaselineArgs {
    /// Comma-separated fixed-resolution baselines.
    #[arg(long, default_value = "llava,monkey")]
    baselines: String,
    /// Tokens per window for the monkey baseline.
    #[arg(long, default_value_t = 256)]
    monkey_tokens: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kernel {
    Nearest,
    Bilinear,
    CatmullRom,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grouping {
    Spatial,
    Sequential,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossKind {
    Sum,
    Sqnorm,
}

#[derive(Subcommand)]
enum Command {
    /// Print the partition plan of an image as JSON.
    Plan {
        image: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Print the visual-token budget of an image as JSON.
    Budget {
        image: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Compare the adaptive plan with fixed-resolution baselines (CSV).
    Compare {
        image: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        baselines: BaselineArgs,
    },
    /// Report budgets for every PNG/JPEG in a directory.
    Batch {
        dir: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        baselines: BaselineArgs,
        /// Directory for per_image.csv and aggregates.json; CSV goes to
        /// stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run the toy pipeline on an image and summarise the sequence.
    Forward {
        image: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 32)]
        encoder_dim: usize,
        #[arg(long, default_value_t = 64)]
        embed_dim: usize,
        #[arg(long, value_enum, default_value_t = Grouping::Spatial)]
        grouping: Grouping,
        /// Parameter initialisation seed (ignored with --checkpoint).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Load parameters (.json or binary).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        save_checkpoint: Option<PathBuf>,
        /// Write the full token sequence as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check backpropagated gradients against central differences.
    Gradcheck {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        encoder_dim: usize,
        #[arg(long, default_value_t = 16)]
        embed_dim: usize,
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        /// Coordinates sampled per parameter group.
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long, value_enum, default_value_t = LossKind::Sqnorm)]
        loss: LossKind,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

impl GridArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let config = PipelineConfig {
            max_grid: self.max_grid,
            cell_size_px: self.cell,
            resample: match self.resample {
                Kernel::Nearest => ResampleKernel::Nearest,
                Kernel::Bilinear => ResampleKernel::Bilinear,
                Kernel::CatmullRom => ResampleKernel::CatmullRom,
            },
            ..PipelineConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

impl BaselineArgs {
    fn specs(&self) -> Result<Vec<BaselineSpec>> {
        let mut specs = BaselineSpec::parse_list(&self.baselines)?;
        for s in &mut specs {
            if s.name == "monkey" {
                *s = BaselineSpec::monkey_with_tokens(self.monkey_tokens);
            }
        }
        Ok(specs)
    }
}

/// Image size from the file header.
fn read_dims(path: &Path) -> Result<ImageDims> {
    let (w, h) = ImageReader::open(path)
        .with_context(|| format!("cannot open {}", path.display()))?
        .with_guessed_format()?
        .into_dimensions()
        .with_context(|| format!("cannot read image header of {}", path.display()))?;
    Ok(ImageDims::new(w, h)?)
}

fn image_id(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct ForwardSummary {
    plan: gridtok::PartitionPlan,
    length: usize,
    dim: usize,
    budget_total: usize,
    segments: Vec<Segment>,
    checksum: f64,
}

#[derive(Serialize)]
struct SequenceDump<'a> {
    roles: &'a [gridtok::pipeline::TokenRole],
    source_position_id: &'a [u32],
    tokens: Vec<Vec<f32>>,
}

/// Random-size, random-content image for gradient checks.
fn synthetic_image(seed: u64) -> Rgb32FImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(1..=1100);
    let h = rng.random_range(1..=1100);
    let mut img = Rgb32FImage::new(w, h);
    for px in img.pixels_mut() {
        *px = Rgb([rng.random(), rng.random(), rng.random()]);
    }
    img
}

/// Runs a command; `Ok(false)` means a check failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Plan { image, grid } => {
            let config = grid.config()?;
            print_json(&make_plan(read_dims(&image)?, &config))?;
        }
        Command::Budget { image, grid } => {
            let config = grid.config()?;
            let plan = make_plan(read_dims(&image)?, &config);
            print_json(&budget_for_plan(&plan, &config))?;
        }
        Command::Compare { image, grid, baselines } => {
            let config = grid.config()?;
            let rows = compare_budgets(&image_id(&image), read_dims(&image)?, &baselines.specs()?, &config);
            write_csv(&rows, io::stdout().lock())?;
        }
        Command::Batch {
            dir,
            grid,
            baselines,
            out,
            workers,
        } => {
            let config = grid.config()?;
            let specs = baselines.specs()?;
            let corpus = ingest(&dir, workers)?;
            let report = run_report(&corpus.records(), &specs, &config, workers)?;
            match out {
                Some(out) => {
                    fs::create_dir_all(&out)?;
                    let csv = fs::File::create(out.join("per_image.csv"))?;
                    report.write_csv(io::BufWriter::new(csv))?;
                    fs::write(out.join("aggregates.json"), report.aggregates_json())?;
                    io::stdout().write_all(report.aggregates_json().as_bytes())?;
                }
                None => report.write_csv(io::stdout().lock())?,
            }
        }
        Command::Forward {
            image,
            grid,
            encoder_dim,
            embed_dim,
            grouping,
            seed,
            checkpoint: ckpt,
            save_checkpoint,
            out,
        } => {
            let config = PipelineConfig {
                grouping: match grouping {
                    Grouping::Spatial => TokenGrouping::Spatial2x2,
                    Grouping::Sequential => TokenGrouping::Sequential4,
                },
                ..grid.config()?.with_dims(encoder_dim, embed_dim)
            };
            let params = match &ckpt {
                Some(path) => checkpoint::load(&config, path)?,
                None => ModelParams::<f32>::init(&config, seed)?,
            };
            if let Some(path) = &save_checkpoint {
                checkpoint::save(&params, &config, path)?;
            }
            let img = image::open(&image)
                .with_context(|| format!("cannot decode {}", image.display()))?
                .to_rgb32f();
            let seq = forward(&img, &params, &config)?;
            let plan = make_plan(ImageDims::new(img.width(), img.height())?, &config);
            let budget_total = budget_for_plan(&plan, &config).total;
            if let Some(path) = &out {
                let dump = SequenceDump {
                    roles: &seq.roles,
                    source_position_id: &seq.source_position_id,
                    tokens: seq.tokens.rows().into_iter().map(|r| r.to_vec()).collect(),
                };
                fs::write(path, serde_json::to_string(&dump)?)?;
            }
            print_json(&ForwardSummary {
                length: seq.len(),
                dim: seq.dim(),
                budget_total,
                segments: seq.segments(),
                checksum: seq.tokens.iter().map(|&v| f64::from(v)).sum(),
                plan,
            })?;
        }
        Command::Gradcheck {
            grid,
            seed,
            encoder_dim,
            embed_dim,
            epsilon,
            samples,
            loss,
            corrupt_gradient,
        } => {
            let config = grid.config()?.with_dims(encoder_dim, embed_dim);
            let img = synthetic_image(seed);
            let input = prepare(&img, &config)?;
            let params = ModelParams::<f64>::uniform(&config, seed, 0.1)?;
            let loss: &dyn Loss = match loss {
                LossKind::Sum => &SumLoss,
                LossKind::Sqnorm => &SquaredNormLoss,
            };
            let opts = GradCheckOptions {
                epsilon,
                samples_per_group: samples,
                seed,
                corrupt_analytic: corrupt_gradient,
                ..GradCheckOptions::default()
            };
            let report = grad_check(loss, &params, &input, &config, &opts)?;
            eprintln!(
                "image {}x{}, grid {}x{}",
                img.width(),
                img.height(),
                input.plan.grid.rows,
                input.plan.grid.cols
            );
            for g in &report.groups {
                eprintln!("{:>15}: {} coords, max_rel_err={:e}", g.group, g.checked, g.max_rel_err);
            }
            println!("max_rel_err={:e}", report.max_rel_err);
            return Ok(report.max_rel_err <= GRADCHECK_TOLERANCE);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
