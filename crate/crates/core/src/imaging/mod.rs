//! Image containers, file I/O, lightness conversion, Gaussian blurring and
//! gradient magnitudes.

mod blur;
mod color;
mod gradient;
pub mod io;

pub use blur::{gaussian_blur, gaussian_blur_with, gaussian_kernel, Boundary};
pub use color::{rgb_to_lightness, srgb_to_linear};
pub use gradient::mean_gradient_magnitude;
pub use io::{load_image, save_image};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Three-channel image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage(Tensor);

impl RgbImage {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.channels() != 3 {
            return Err(Error::InvalidShape(format!(
                "RGB image needs 3 channels, got {}",
                tensor.channels()
            )));
        }
        if !tensor.data().iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("RGB values must lie in [0, 1]".into()));
        }
        Ok(RgbImage(tensor))
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut t = Tensor::zeros(3, height, width);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for (c, v) in px.into_iter().enumerate() {
                    t.set(c, y, x, v);
                }
            }
        }
        Self::new(t)
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        [self.0.get(0, y, x), self.0.get(1, y, x), self.0.get(2, y, x)]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

/// Single-channel image with finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage(Tensor);

impl GrayImage {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.channels() != 1 {
            return Err(Error::InvalidShape(format!(
                "gray image needs 1 channel, got {}",
                tensor.channels()
            )));
        }
        if !tensor.is_finite() {
            return Err(Error::InvalidParameter("gray image has non-finite values".into()));
        }
        Ok(GrayImage(tensor))
    }

    pub fn from_vec(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(Tensor::from_vec(1, height, width, values)?)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(Tensor::from_fn(1, height, width, |_, y, x| f(x, y)))
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(0, y, x)
    }

    pub fn values(&self) -> &[f64] {
        self.0.data()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    /// Grayscale replicated into three identical channels. Values must be
    /// in `[0, 1]`.
    pub fn to_rgb(&self) -> Result<RgbImage> {
        let t = &self.0;
        RgbImage::new(Tensor::concat_channels(&[t.clone(), t.clone(), t.clone()])?)
    }
}

/// Either kind of decoded image.
#[derive(Debug, Clone, PartialEq)]
pub enum Image {
    Rgb(RgbImage),
    Gray(GrayImage),
}

impl Image {
    pub fn width(&self) -> usize {
        match self {
            Image::Rgb(i) => i.width(),
            Image::Gray(i) => i.width(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            Image::Rgb(i) => i.height(),
            Image::Gray(i) => i.height(),
        }
    }
}
