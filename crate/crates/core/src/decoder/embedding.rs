use super::config::DecoderConfig;
use super::fit::{fit, FitImage, FitResult};
use crate::error::{Error, Result};
use crate::parallel::Exec;
use crate::tensor::Tensor;

/// Per-pixel feature vectors: the last hidden maps of every ensemble
/// member stacked along the channel axis.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMap {
    features: Tensor,
}

impl EmbeddingMap {
    pub fn new(features: Tensor) -> Result<Self> {
        if !features.is_finite() {
            return Err(Error::NumericFailure("embedding has non-finite values".into()));
        }
        if features.channels() == 0 {
            return Err(Error::InvalidShape("embedding needs at least one dimension".into()));
        }
        Ok(EmbeddingMap { features })
    }

    pub fn from_fits(fits: &[FitResult]) -> Result<Self> {
        let maps: Vec<Tensor> = fits.iter().map(|f| f.last_hidden.clone()).collect();
        Self::new(Tensor::concat_channels(&maps)?)
    }

    pub fn dims(&self) -> usize {
        self.features.channels()
    }

    pub fn width(&self) -> usize {
        self.features.width()
    }

    pub fn height(&self) -> usize {
        self.features.height()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    /// The feature vector of pixel `(x, y)`.
    pub fn feature(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.dims()).map(|c| self.features.get(c, y, x)).collect()
    }

    /// Features transposed to one contiguous vector per pixel (row-major).
    pub fn pixel_major(&self) -> Vec<f64> {
        let (d, h, w) = self.features.shape();
        let n = h * w;
        let mut out = vec![0.0; n * d];
        for c in 0..d {
            for (i, &v) in self.features.channel(c).iter().enumerate() {
                out[i * d + c] = v;
            }
        }
        out
    }
}

/// Fits `cfg.decoders` decoders (indices `0..nd`) to the same image.
pub fn fit_ensemble(img: &FitImage, cfg: &DecoderConfig, exec: Exec) -> Result<Vec<FitResult>> {
    cfg.validate()?;
    exec.map_range(cfg.decoders, |i| fit(img, cfg, i)).into_iter().collect()
}

/// Ensemble embeddings with `cfg.decoders · cfg.channels` dimensions.
pub fn extract_embeddings(img: &FitImage, cfg: &DecoderConfig, exec: Exec) -> Result<EmbeddingMap> {
    EmbeddingMap::from_fits(&fit_ensemble(img, cfg, exec)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_major_transposes() {
        let t = Tensor::from_fn(3, 2, 2, |c, y, x| (c * 100 + y * 10 + x) as f64);
        let e = EmbeddingMap::new(t).unwrap();
        let pm = e.pixel_major();
        assert_eq!(&pm[3..6], &[1.0, 101.0, 201.0]);
        assert_eq!(e.feature(1, 0), vec![1.0, 101.0, 201.0]);
    }

    #[test]
    fn rejects_nan() {
        let t = Tensor::filled(1, 2, 2, f64::NAN);
        assert!(EmbeddingMap::new(t).is_err());
    }
}
