//! Finite-difference checks of every graph op and of a small decoder.

use ddseg::autodiff::{Graph, Var};
use ddseg::decoder::{record_forward, stage_sizes, DecoderParams};
use ddseg::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gradient_check, gradient_check_with, random_tensor, rng, smooth_within};

pub const STEP: f64 = 1e-3;

/// Scalar probe: mean squared distance to a fixed random target.
fn probe(g: &mut Graph, x: Var, target: &Tensor) -> Var {
    let t = g.constant(target.clone());
    let c = target.channels();
    g.mse_subset(x, t, 0..c).unwrap()
}

/// Values bounded away from the ReLU kink so central differences stay on
/// one side of it.
fn away_from_zero(r: &mut impl Rng, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(c, h, w, |_, _, _| {
        let m = r.random_range(0.05..1.0);
        if r.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

pub fn linear(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (ki, ko) = (r.random_range(1..5), r.random_range(1..5));
    let (h, w) = (r.random_range(1..5), r.random_range(1..5));
    let x = random_tensor(&mut r, ki, h, w, -1.0, 1.0);
    let wt = Tensor::from_fn(ko, 1, ki, |_, _, _| r.random_range(-1.0..1.0));
    let target = random_tensor(&mut r, ko, h, w, -1.0, 1.0);
    gradient_check(&[x, wt], STEP, |g, v| {
        let y = g.linear(v[0], v[1]).unwrap();
        probe(g, y, &target)
    })
}

pub fn upsample(seed: u64) -> f64 {
    let mut r = rng(seed);
    let c = r.random_range(1..4);
    let (h, w) = (r.random_range(1..5), r.random_range(1..5));
    let (oh, ow) = (r.random_range(h..2 * h + 2), r.random_range(w..2 * w + 2));
    let x = random_tensor(&mut r, c, h, w, -1.0, 1.0);
    let target = random_tensor(&mut r, c, oh, ow, -1.0, 1.0);
    gradient_check(&[x], STEP, |g, v| {
        let y = g.upsample(v[0], oh, ow).unwrap();
        probe(g, y, &target)
    })
}

pub fn relu(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = away_from_zero(&mut r, 2, 3, 4);
    let target = random_tensor(&mut r, 2, 3, 4, -1.0, 1.0);
    gradient_check(&[x], STEP, |g, v| {
        let y = g.relu(v[0]);
        probe(g, y, &target)
    })
}

pub fn sigmoid(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = random_tensor(&mut r, 3, 3, 3, -3.0, 3.0);
    let target = random_tensor(&mut r, 3, 3, 3, 0.0, 1.0);
    gradient_check(&[x], STEP, |g, v| {
        let y = g.sigmoid(v[0]);
        probe(g, y, &target)
    })
}

pub fn channel_norm(seed: u64) -> f64 {
    let mut r = rng(seed);
    let c = r.random_range(1..4);
    let (h, w) = (r.random_range(2..5), r.random_range(2..5));
    let x = random_tensor(&mut r, c, h, w, -1.0, 1.0);
    let gamma = Tensor::from_fn(c, 1, 1, |_, _, _| r.random_range(0.5..1.5));
    let beta = Tensor::from_fn(c, 1, 1, |_, _, _| r.random_range(-0.5..0.5));
    let target = random_tensor(&mut r, c, h, w, -1.0, 1.0);
    gradient_check(&[x, gamma, beta], STEP, |g, v| {
        let y = g.channel_norm(v[0], v[1], v[2]).unwrap();
        probe(g, y, &target)
    })
}

pub fn dropout(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = random_tensor(&mut r, 6, 2, 3, -1.0, 1.0);
    let target = random_tensor(&mut r, 6, 2, 3, -1.0, 1.0);
    gradient_check(&[x], STEP, |g, v| {
        // Same mask on every evaluation.
        let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
        let y = g.channel_dropout(v[0], 0.3, &mut mask_rng, true).unwrap();
        probe(g, y, &target)
    })
}

pub fn mse_subset(seed: u64) -> f64 {
    let mut r = rng(seed);
    let c = r.random_range(2..6);
    let lo = r.random_range(0..c - 1);
    let hi = r.random_range(lo + 1..=c);
    let x = random_tensor(&mut r, c, 3, 2, 0.0, 1.0);
    let target = random_tensor(&mut r, c, 3, 2, 0.0, 1.0);
    gradient_check(&[x], STEP, |g, v| {
        let t = g.constant(target.clone());
        g.mse_subset(v[0], t, lo..hi).unwrap()
    })
}

pub fn weighted_sum(seed: u64) -> f64 {
    let mut r = rng(seed);
    let a = random_tensor(&mut r, 2, 2, 2, 0.0, 1.0);
    let b = random_tensor(&mut r, 2, 2, 2, 0.0, 1.0);
    let target = random_tensor(&mut r, 2, 2, 2, 0.0, 1.0);
    let (wa, wb) = (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    gradient_check(&[a, b], STEP, |g, v| {
        let la = probe(g, v[0], &target);
        let lb = probe(g, v[1], &target);
        g.weighted_sum(&[(la, wa), (lb, wb)]).unwrap()
    })
}

/// Two-block decoder with 4 channels on an 8×8 output and one encoding
/// frequency, dropout on, loss split as in fitting. Instances whose loss
/// has a ReLU kink within `±STEP` of the parameters are redrawn from the
/// same seeded stream, since finite differences are meaningless there.
pub fn toy_decoder(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (k, blocks, out) = (4, 2, 3 + 8);
    let sizes = stage_sizes(8, 8, blocks).unwrap();
    loop {
        let params = DecoderParams::init(k, blocks, out, &mut r);
        let (w0, h0) = sizes[0];
        let input = random_tensor(&mut r, k, h0, w0, -1.0, 1.0);
        let target = random_tensor(&mut r, out, 8, 8, 0.0, 1.0);
        let lambda = r.random_range(0.0..1.0);
        let build = |g: &mut Graph, ps: &[Tensor]| {
            let p = DecoderParams::from_tensors(ps.to_vec()).unwrap();
            let iv = g.constant(input.clone());
            let tv = g.constant(target.clone());
            let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
            let rec = record_forward(g, &p, iv, &sizes, 0.3, true, &mut mask_rng).unwrap();
            let l1 = g.mse_subset(rec.reconstruction, tv, 0..3).unwrap();
            let l2 = g.mse_subset(rec.reconstruction, tv, 3..out).unwrap();
            (g.weighted_sum(&[(l1, 1.0 - lambda), (l2, lambda)]).unwrap(), rec.params)
        };
        let tensors = params.to_tensors();
        if smooth_within(&tensors, STEP, build) {
            return gradient_check_with(&tensors, STEP, build);
        }
    }
}

pub const OP_TOLERANCE: f64 = 1e-4;
pub const END_TO_END_TOLERANCE: f64 = 1e-3;

/// Worst error of each check over `instances` seeds, with its tolerance.
pub fn run_all(instances: u64) -> Vec<(&'static str, f64, f64)> {
    type Check = (&'static str, fn(u64) -> f64, f64);
    let checks: [Check; 9] = [
        ("linear", linear, OP_TOLERANCE),
        ("upsample", upsample, OP_TOLERANCE),
        ("relu", relu, OP_TOLERANCE),
        ("sigmoid", sigmoid, OP_TOLERANCE),
        ("channel_norm", channel_norm, OP_TOLERANCE),
        ("dropout", dropout, OP_TOLERANCE),
        ("mse_subset", mse_subset, OP_TOLERANCE),
        ("weighted_sum", weighted_sum, OP_TOLERANCE),
        ("toy_decoder", toy_decoder, END_TO_END_TOLERANCE),
    ];
    checks
        .iter()
        .map(|&(name, f, tol)| {
            let worst = (0..instances).map(f).fold(0.0, f64::max);
            (name, worst, tol)
        })
        .collect()
}
