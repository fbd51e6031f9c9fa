//! The deep decoder: architecture, per-image fitting and ensemble
//! embeddings.

mod config;
mod embedding;
mod fit;
mod network;

pub use config::{DecoderConfig, Preset};
pub use embedding::{extract_embeddings, fit_ensemble, EmbeddingMap};
pub use fit::{fit, FitImage, FitResult, FitSetup, LossRecord};
pub use network::{forward, record_forward, stage_sizes, BlockParams, DecoderParams, ForwardOutput, RecordedForward};

use std::io::Write;

/// Loss history as CSV with header `step,total,recon,spatial`.
pub fn loss_history_csv(history: &[LossRecord]) -> String {
    let mut out = Vec::new();
    writeln!(out, "step,total,recon,spatial").unwrap();
    for r in history {
        writeln!(out, "{},{},{},{}", r.step, r.total, r.recon, r.spatial).unwrap();
    }
    String::from_utf8(out).unwrap()
}
