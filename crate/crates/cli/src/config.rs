//! Run configuration: preset, then config file, then flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ddseg::decoder::{DecoderConfig, Preset};
use ddseg::foreground::ThresholdMode;

/// Hyperparameter flags shared by every fitting command. `None` keeps the
/// value from the config file or preset.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct TuningArgs {
    /// Hyperparameter preset (natural | downsized).
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Requested number of superpixels.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub clusters: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight of the spatial loss term.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Blur factor b; the input blur is 2*floor(b*w*h/2)+1.
    #[arg(long)]
    pub blur_factor: Option<f64>,
    /// Hidden channels per decoder.
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Ensemble size.
    #[arg(long)]
    pub decoders: Option<usize>,
    /// Optimizer steps; the dropout/decay switch moves proportionally.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// key=value file; flags override it, it overrides the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub preset: Preset,
    pub clusters: usize,
    pub decoder: DecoderConfig,
    pub threshold_mode: ThresholdMode,
}

/// Per-command defaults applied before the config file.
#[derive(Debug, Clone, Copy)]
pub struct Defaults {
    pub preset: Preset,
    pub clusters: usize,
    pub steps: Option<usize>,
}

fn read_pairs(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut pairs = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), n + 1);
        };
        pairs.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(pairs)
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| anyhow::anyhow!("config value {key}={v} is not valid"))
}

impl RunConfig {
    pub fn resolve(
        command: &str,
        defaults: Defaults,
        args: &TuningArgs,
        threshold_mode: Option<ThresholdMode>,
    ) -> Result<Self> {
        let pairs = match &args.config {
            Some(p) => read_pairs(p)?,
            None => BTreeMap::new(),
        };
        let preset = match (args.preset, pairs.get("preset")) {
            (Some(p), _) => p,
            (None, Some(v)) => parse("preset", v)?,
            (None, None) => defaults.preset,
        };
        let mut cfg = DecoderConfig::preset(preset);
        if let Some(s) = defaults.steps {
            cfg = cfg.with_steps(s);
        }
        let mut run = RunConfig {
            command: command.to_string(),
            preset,
            clusters: defaults.clusters,
            decoder: cfg,
            threshold_mode: ThresholdMode::default(),
        };
        // `steps` rescales the decay step, so an explicit decay step must come after it.
        if let Some(v) = pairs.get("steps") {
            run.decoder = run.decoder.clone().with_steps(parse("steps", v)?);
        }
        for (k, v) in &pairs {
            let d = &mut run.decoder;
            match k.as_str() {
                "preset" | "steps" | "command" | "version" | "input" | "output" => {}
                "clusters" => run.clusters = parse(k, v)?,
                "seed" => d.seed = parse(k, v)?,
                "lambda" => d.lambda = parse(k, v)?,
                "blur_factor" => d.blur_factor = parse(k, v)?,
                "sigma" => d.sigma_override = if v == "auto" { None } else { Some(parse(k, v)?) },
                "channels" => d.channels = parse(k, v)?,
                "blocks" => d.blocks = parse(k, v)?,
                "frequencies" => d.frequencies = parse(k, v)?,
                "decoders" => d.decoders = parse(k, v)?,
                "lr_decay_step" => d.lr_decay_step = parse(k, v)?,
                "lr_decay_factor" => d.lr_decay_factor = parse(k, v)?,
                "dropout" => d.dropout = parse(k, v)?,
                "lr" => d.lr = parse(k, v)?,
                "threshold_mode" => run.threshold_mode = parse(k, v)?,
                other => bail!("unknown config key `{other}`"),
            }
        }

        let d = &mut run.decoder;
        if let Some(n) = args.steps {
            *d = d.clone().with_steps(n);
        }
        if let Some(v) = args.clusters {
            run.clusters = usize::try_from(v)?;
        }
        set(&mut d.seed, args.seed);
        set(&mut d.lambda, args.lambda);
        set(&mut d.blur_factor, args.blur_factor);
        set(&mut d.channels, args.channels);
        set(&mut d.blocks, args.blocks);
        set(&mut d.decoders, args.decoders);
        set(&mut d.dropout, args.dropout);
        set(&mut d.lr, args.lr);
        if let Some(m) = threshold_mode {
            run.threshold_mode = m;
        }
        if run.clusters == 0 {
            bail!("clusters must be at least 1");
        }
        run.decoder.validate()?;
        Ok(run)
    }

    /// key=value text that `--config` reads back.
    pub fn to_text(&self, extra: &[(&str, String)]) -> String {
        let d = &self.decoder;
        let mut s = String::new();
        writeln!(s, "# ddseg {}", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(s, "command={}", self.command).unwrap();
        for (k, v) in extra {
            writeln!(s, "{k}={v}").unwrap();
        }
        let sigma = d.sigma_override.map_or("auto".to_string(), |v| v.to_string());
        let rows: [(&str, String); 16] = [
            ("preset", self.preset.to_string()),
            ("clusters", self.clusters.to_string()),
            ("seed", d.seed.to_string()),
            ("lambda", d.lambda.to_string()),
            ("blur_factor", d.blur_factor.to_string()),
            ("sigma", sigma),
            ("channels", d.channels.to_string()),
            ("blocks", d.blocks.to_string()),
            ("frequencies", d.frequencies.to_string()),
            ("decoders", d.decoders.to_string()),
            ("steps", d.steps.to_string()),
            ("lr_decay_step", d.lr_decay_step.to_string()),
            ("lr_decay_factor", d.lr_decay_factor.to_string()),
            ("dropout", d.dropout.to_string()),
            ("lr", d.lr.to_string()),
            ("threshold_mode", self.threshold_mode.to_string()),
        ];
        for (k, v) in &rows {
            writeln!(s, "{k}={v}").unwrap();
        }
        s
    }
}

/// Path of the metadata file written next to `output`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".cfg");
    output.with_file_name(name)
}
