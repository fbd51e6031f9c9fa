use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Spatial sizes `(width, height)` from the decoder input (index 0) to the
/// output (index `blocks`). Each earlier stage is the ceiling half of the
/// next, so the chain ends exactly at `(width, height)`.
pub fn stage_sizes(width: usize, height: usize, blocks: usize) -> Result<Vec<(usize, usize)>> {
    if blocks == 0 {
        return Err(Error::InvalidParameter("blocks must be at least 1".into()));
    }
    let mut sizes = vec![(width, height)];
    for _ in 0..blocks {
        let (w, h) = *sizes.last().unwrap();
        sizes.push((w.div_ceil(2), h.div_ceil(2)));
    }
    sizes.reverse();
    if sizes.iter().any(|&(w, h)| w < 2 || h < 2) {
        return Err(Error::InvalidParameter(format!(
            "{width}x{height} is too small for {blocks} blocks (a stage falls below 2 pixels); use fewer blocks"
        )));
    }
    Ok(sizes)
}

/// Weights of one block: channel mixing then normalization affine.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub mixing: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// All trainable weights of one decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub blocks: Vec<BlockParams>,
    /// `out_channels × k` readout.
    pub head: Tensor,
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, 1.0 / (cols as f64).sqrt()).expect("valid std");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

impl DecoderParams {
    /// Mixing entries `N(0, 1/k_in)`, `gamma = 1`, `beta = 0`.
    pub fn init<R: Rng + ?Sized>(channels: usize, blocks: usize, out_channels: usize, rng: &mut R) -> Self {
        let blocks = (0..blocks)
            .map(|_| BlockParams {
                mixing: gaussian_matrix(channels, channels, rng),
                gamma: Tensor::vector(vec![1.0; channels]),
                beta: Tensor::vector(vec![0.0; channels]),
            })
            .collect();
        DecoderParams {
            blocks,
            head: gaussian_matrix(out_channels, channels, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.head.width()
    }

    /// Flattened in optimizer order: per block (mixing, gamma, beta), then head.
    pub fn to_tensors(&self) -> Vec<Tensor> {
        let mut v: Vec<Tensor> = self
            .blocks
            .iter()
            .flat_map(|b| [b.mixing.clone(), b.gamma.clone(), b.beta.clone()])
            .collect();
        v.push(self.head.clone());
        v
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.blocks.len())
            .flat_map(|i| {
                [
                    format!("block{i}.mixing"),
                    format!("block{i}.gamma"),
                    format!("block{i}.beta"),
                ]
            })
            .collect();
        v.push("head".into());
        v
    }

    pub fn from_tensors(mut tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.is_empty() || !(tensors.len() - 1).is_multiple_of(3) {
            return Err(Error::InvalidShape(format!(
                "{} tensors do not form a decoder",
                tensors.len()
            )));
        }
        let head = tensors.pop().unwrap();
        let mut it = tensors.into_iter();
        let mut blocks = Vec::new();
        while let (Some(mixing), Some(gamma), Some(beta)) = (it.next(), it.next(), it.next()) {
            blocks.push(BlockParams { mixing, gamma, beta });
        }
        Ok(DecoderParams { blocks, head })
    }

    pub fn is_finite(&self) -> bool {
        self.head.is_finite()
            && self
                .blocks
                .iter()
                .all(|b| b.mixing.is_finite() && b.gamma.is_finite() && b.beta.is_finite())
    }
}

/// Graph handles for a recorded forward pass.
#[derive(Debug, Clone)]
pub struct RecordedForward {
    pub params: Vec<Var>,
    pub reconstruction: Var,
    pub last_hidden: Var,
}

/// Records one forward pass on `graph`:
/// per block mix → upsample → ReLU → normalize → dropout, then head → sigmoid.
/// `last_hidden` is the final block's normalized activation before dropout.
pub fn record_forward<R: Rng + ?Sized>(
    graph: &mut Graph,
    params: &DecoderParams,
    input: Var,
    sizes: &[(usize, usize)],
    dropout: f64,
    dropout_enabled: bool,
    rng: &mut R,
) -> Result<RecordedForward> {
    if sizes.len() != params.blocks.len() + 1 {
        return Err(Error::InvalidShape(format!(
            "{} stage sizes for {} blocks",
            sizes.len(),
            params.blocks.len()
        )));
    }
    let iv = graph.value(input);
    if (iv.width(), iv.height()) != sizes[0] {
        return Err(Error::InvalidShape(format!(
            "input is {}x{}, first stage is {}x{}",
            iv.width(),
            iv.height(),
            sizes[0].0,
            sizes[0].1
        )));
    }
    let mut vars = Vec::with_capacity(3 * params.blocks.len() + 1);
    let mut x = input;
    let mut last_hidden = input;
    for (block, &(w, h)) in params.blocks.iter().zip(&sizes[1..]) {
        let m = graph.param(block.mixing.clone());
        let g = graph.param(block.gamma.clone());
        let b = graph.param(block.beta.clone());
        vars.extend([m, g, b]);
        let mixed = graph.linear(x, m)?;
        let up = graph.upsample(mixed, h, w)?;
        let act = graph.relu(up);
        let normed = graph.channel_norm(act, g, b)?;
        last_hidden = normed;
        x = graph.channel_dropout(normed, dropout, rng, dropout_enabled)?;
    }
    let head = graph.param(params.head.clone());
    vars.push(head);
    let out = graph.linear(x, head)?;
    let reconstruction = graph.sigmoid(out);
    Ok(RecordedForward {
        params: vars,
        reconstruction,
        last_hidden,
    })
}

/// Reconstruction and last hidden activation of a decoder.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub reconstruction: Tensor,
    pub last_hidden: Tensor,
}

/// Forward pass producing a `(width, height)` output.
pub fn forward<R: Rng + ?Sized>(
    params: &DecoderParams,
    input: &Tensor,
    width: usize,
    height: usize,
    dropout: f64,
    dropout_enabled: bool,
    rng: &mut R,
) -> Result<ForwardOutput> {
    let sizes = stage_sizes(width, height, params.blocks.len())?;
    let mut graph = Graph::new();
    let iv = graph.constant(input.clone());
    let rec = record_forward(&mut graph, params, iv, &sizes, dropout, dropout_enabled, rng)?;
    Ok(ForwardOutput {
        reconstruction: graph.value(rec.reconstruction).clone(),
        last_hidden: graph.value(rec.last_hidden).clone(),
    })
}
