use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::DecoderConfig;
use super::network::{forward, record_forward, stage_sizes, DecoderParams};
use crate::autodiff::{AdamConfig, AdamState, Graph};
use crate::encoding::{blur_sigma, make_decoder_input, make_fit_target_with_lightness, FitTarget, PositionalEncoding};
use crate::error::{Error, Result};
use crate::imaging::{rgb_to_lightness, GrayImage, Image, RgbImage};
use crate::tensor::Tensor;

/// RGB channels plus the lightness used to modulate the encodings.
#[derive(Debug, Clone, PartialEq)]
pub struct FitImage {
    pub rgb: RgbImage,
    pub lightness: GrayImage,
}

impl FitImage {
    pub fn from_rgb(rgb: RgbImage) -> Self {
        let lightness = rgb_to_lightness(&rgb);
        FitImage { rgb, lightness }
    }

    /// Gray input replicated to RGB; its raw intensity serves as lightness.
    pub fn from_gray(gray: &GrayImage) -> Result<Self> {
        Ok(FitImage {
            rgb: gray.to_rgb()?,
            lightness: gray.clone(),
        })
    }

    pub fn from_image(img: &Image) -> Result<Self> {
        match img {
            Image::Rgb(rgb) => Ok(Self::from_rgb(rgb.clone())),
            Image::Gray(g) => Self::from_gray(g),
        }
    }

    pub fn width(&self) -> usize {
        self.rgb.width()
    }

    pub fn height(&self) -> usize {
        self.rgb.height()
    }
}

/// Independent random streams of one ensemble member.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Input = 0,
    Encoding = 1,
    Init = 2,
    Dropout = 3,
}

fn member_rng(seed: u64, decoder_index: usize, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(decoder_index as u64 * 4 + stream as u64);
    rng
}

/// Losses recorded before the update of `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub total: f64,
    pub recon: f64,
    pub spatial: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub decoder_index: usize,
    pub params: DecoderParams,
    /// Final block activation, dropout disabled.
    pub last_hidden: Tensor,
    pub reconstruction: Tensor,
    pub history: Vec<LossRecord>,
    pub sigma: f64,
}

/// Everything a fit consumes besides the weights.
#[derive(Debug, Clone)]
pub struct FitSetup {
    pub input: Tensor,
    pub encoding: PositionalEncoding,
    pub target: FitTarget,
    pub params: DecoderParams,
    pub sizes: Vec<(usize, usize)>,
    pub sigma: f64,
}

impl FitSetup {
    pub fn new(img: &FitImage, cfg: &DecoderConfig, decoder_index: usize) -> Result<Self> {
        cfg.validate()?;
        let (w, h) = (img.width(), img.height());
        let sizes = stage_sizes(w, h, cfg.blocks)?;
        let sigma = cfg.sigma_override.unwrap_or_else(|| blur_sigma(cfg.blur_factor, w, h));
        let (w0, h0) = sizes[0];
        let input = make_decoder_input(
            cfg.channels,
            w0,
            h0,
            sigma,
            &mut member_rng(cfg.seed, decoder_index, Stream::Input),
        )?;
        let encoding = PositionalEncoding::random(
            cfg.frequencies,
            w,
            h,
            &mut member_rng(cfg.seed, decoder_index, Stream::Encoding),
        )?;
        let target = make_fit_target_with_lightness(&img.rgb, &img.lightness, &encoding)?;
        let params = DecoderParams::init(
            cfg.channels,
            cfg.blocks,
            cfg.output_channels(),
            &mut member_rng(cfg.seed, decoder_index, Stream::Init),
        );
        Ok(FitSetup {
            input,
            encoding,
            target,
            params,
            sizes,
            sigma,
        })
    }
}

/// Fits one decoder to `img` with Adam, minimizing
/// `(1 - λ)·MSE(RGB) + λ·MSE(spatial)`.
///
/// From `cfg.lr_decay_step` on, dropout is off and the learning rate is
/// multiplied by `cfg.lr_decay_factor`. Deterministic in
/// `(cfg, decoder_index)`.
pub fn fit(img: &FitImage, cfg: &DecoderConfig, decoder_index: usize) -> Result<FitResult> {
    let setup = FitSetup::new(img, cfg, decoder_index)?;
    let FitSetup {
        input,
        target,
        params,
        sizes,
        sigma,
        ..
    } = setup;
    let mut dropout_rng = member_rng(cfg.seed, decoder_index, Stream::Dropout);

    let mut tensors = params.to_tensors();
    let names = params.tensor_names();
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &tensors,
    )
    .with_names(names);

    let rgb = target.rgb_range();
    let spatial = target.spatial_range();
    let mut history = Vec::with_capacity(cfg.steps);
    let mut dropout_on = true;
    let mut current = params;

    for step in 0..cfg.steps {
        if step == cfg.lr_decay_step {
            dropout_on = false;
            adam.config.lr *= cfg.lr_decay_factor;
        }
        let mut graph = Graph::new();
        let iv = graph.constant(input.clone());
        let tv = graph.constant(target.tensor().clone());
        let rec = record_forward(
            &mut graph,
            &current,
            iv,
            &sizes,
            cfg.dropout,
            dropout_on,
            &mut dropout_rng,
        )?;
        let l_rgb = graph.mse_subset(rec.reconstruction, tv, rgb.clone())?;
        let l_sp = graph.mse_subset(rec.reconstruction, tv, spatial.clone())?;
        let loss = graph.weighted_sum(&[(l_rgb, 1.0 - cfg.lambda), (l_sp, cfg.lambda)])?;
        let record = LossRecord {
            step,
            total: graph.value(loss).data()[0],
            recon: graph.value(l_rgb).data()[0],
            spatial: graph.value(l_sp).data()[0],
        };
        if !record.total.is_finite() {
            return Err(Error::NumericFailure(format!("loss is not finite at step {step}")));
        }
        history.push(record);
        graph.backward(loss).map_err(|e| match e {
            Error::NumericFailure(m) => Error::NumericFailure(format!("{m} at step {step}")),
            other => other,
        })?;
        let grads: Vec<Tensor> = rec
            .params
            .iter()
            .zip(&tensors)
            .map(|(&v, t)| {
                graph
                    .take_grad(v)
                    .unwrap_or_else(|| Tensor::zeros(t.channels(), t.height(), t.width()))
            })
            .collect();
        adam.update(&mut tensors, &grads)
            .map_err(|e| Error::NumericFailure(format!("{e} at step {step}")))?;
        current = DecoderParams::from_tensors(tensors.clone())?;
    }

    let (w, h) = (img.width(), img.height());
    let out = forward(&current, &input, w, h, cfg.dropout, false, &mut dropout_rng)?;
    if !out.last_hidden.is_finite() {
        return Err(Error::NumericFailure("final activations are not finite".into()));
    }
    Ok(FitResult {
        decoder_index,
        params: current,
        last_hidden: out.last_hidden,
        reconstruction: out.reconstruction,
        history,
        sigma,
    })
}
