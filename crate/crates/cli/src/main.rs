mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ddseg::decoder::Preset;
use ddseg::diagnostics::SweepPoint;
use ddseg::foreground::ThresholdMode;

use commands::SuperpixelOutputs;
use config::{Defaults, RunConfig, TuningArgs};

/// Superpixels from the activation maps of under-parameterized deep decoders.
#[derive(Debug, Parser)]
#[command(name = "ddseg", version)]
struct Cli {
    /// Worker threads (default: DDSEG_THREADS, else one per core). Results
    /// do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the decoder ensemble and write a 16-bit PGM label map.
    Superpixels {
        image: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// PNG/PPM copy of the image with boundaries in red.
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Labels as x,y,label CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Per-decoder training loss CSV.
        #[arg(long)]
        loss_history: Option<PathBuf>,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Score a label map against one or more ground-truth label maps.
    Evaluate {
        labels: PathBuf,
        #[arg(required = true)]
        gt: Vec<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Foreground masks for every slice in a directory.
    SegmentVessels {
        slices: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Directory of reference masks named like the slices.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        threshold_mode: Option<ThresholdMode>,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Activated-region counts over a blur sweep (`b:0.0001,0.0002` or `sigma:1,3`).
    Diagnose {
        image: PathBuf,
        #[arg(long, value_parser = commands::parse_sweep)]
        sweep: Option<commands::Sweep>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        tuning: TuningArgs,
    },
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("DDSEG_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            let n = v
                .trim()
                .parse()
                .with_context(|| format!("DDSEG_THREADS={v} is not a thread count"))?;
            Ok(Some(n))
        }
        _ => Ok(None),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Superpixels {
            image,
            output,
            overlay,
            csv,
            loss_history,
            tuning,
        } => {
            let defaults = Defaults {
                preset: Preset::Natural,
                clusters: 200,
                steps: None,
            };
            let run = RunConfig::resolve("superpixels", defaults, &tuning, None)?;
            let outs = SuperpixelOutputs {
                labels: &output,
                overlay: overlay.as_deref(),
                csv: csv.as_deref(),
                loss_history: loss_history.as_deref(),
            };
            commands::superpixels(&image, &run, &outs)?;
        }
        Command::Evaluate { labels, gt, csv } => commands::evaluate_labels(&labels, &gt, csv.as_deref())?,
        Command::SegmentVessels {
            slices,
            output,
            gold,
            threshold_mode,
            tuning,
        } => {
            let defaults = Defaults {
                preset: Preset::Downsized,
                clusters: 600,
                steps: None,
            };
            let run = RunConfig::resolve("segment-vessels", defaults, &tuning, threshold_mode)?;
            let failures = commands::segment_vessels(&slices, &output, gold.as_deref(), &run)?;
            if !failures.is_empty() {
                eprintln!("{} slice(s) failed:", failures.len());
                for f in &failures {
                    eprintln!("  {f}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Diagnose {
            image,
            sweep,
            csv,
            tuning,
        } => {
            let defaults = Defaults {
                preset: Preset::Natural,
                clusters: 200,
                steps: Some(400),
            };
            let run = RunConfig::resolve("diagnose", defaults, &tuning, None)?;
            let points = match sweep {
                Some(s) => s.0,
                None => vec![SweepPoint::BlurFactor(run.decoder.blur_factor)],
            };
            commands::diagnose(&image, &points, &run, csv.as_deref())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
