//! Binary PPM (P6), PGM (P5, 8- and 16-bit) and PNG.
//!
//! Files decode into [`RawImage`] (integer samples plus `maxval`), which
//! label maps use directly and [`load_image`] normalizes to `[0, 1]`.
//! 16-bit PNM samples are big-endian.

use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use super::{GrayImage, Image, RgbImage};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Integer samples as stored in a file, interleaved per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB).
    pub channels: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl RawImage {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("zero-sized image".into());
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(format!("unsupported channel count {}", self.channels));
        }
        if self.maxval == 0 {
            return Err("maxval must be positive".into());
        }
        if self.samples.len() != self.width * self.height * self.channels {
            return Err("sample count does not match dimensions".into());
        }
        if let Some(s) = self.samples.iter().find(|&&s| s > self.maxval) {
            return Err(format!("sample {s} exceeds maxval {}", self.maxval));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Pnm,
    Png,
}

fn format_for_path(path: &Path) -> Result<Format> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm" | "ppm" | "pnm") => Ok(Format::Pnm),
        Some("png") => Ok(Format::Png),
        _ => Err(Error::io(path, "unsupported file extension (use .pgm, .ppm or .png)")),
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format!("malformed header: missing {what}"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("malformed header: bad {what}"))
    }
}

pub fn decode_pnm(bytes: &[u8]) -> std::result::Result<RawImage, String> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err("not a binary PGM/PPM (expected P5 or P6)".into()),
    };
    let mut hr = HeaderReader { bytes, pos: 2 };
    let width = hr.number("width")?;
    let height = hr.number("height")?;
    let maxval = hr.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("malformed header: maxval {maxval} outside 1..=65535"));
    }
    if !bytes.get(hr.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("malformed header: no separator before raster".into());
    }
    let data = &bytes[hr.pos + 1..];
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or("image dimensions overflow")?;
    let wide = maxval > 255;
    let need = if wide { 2 * n } else { n };
    if data.len() < need {
        return Err(format!("truncated raster: {} of {need} bytes", data.len()));
    }
    let samples = if wide {
        data[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        data[..n].iter().map(|&b| b as u16).collect()
    };
    let raw = RawImage {
        width,
        height,
        channels,
        maxval: maxval as u16,
        samples,
    };
    raw.validate()?;
    Ok(raw)
}

pub fn encode_pnm(raw: &RawImage) -> Vec<u8> {
    let magic = if raw.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n{}\n", raw.width, raw.height, raw.maxval).into_bytes();
    if raw.maxval > 255 {
        for s in &raw.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(raw.samples.iter().map(|&s| s as u8));
    }
    out
}

fn decode_png(bytes: &[u8]) -> std::result::Result<RawImage, String> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| e.to_string())?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let color = img.color();
    let wide = color.bytes_per_pixel() / color.channel_count() > 1;
    let (channels, maxval, samples): (usize, u16, Vec<u16>) = match (color.has_color(), wide) {
        (false, false) => (1, 255, img.to_luma8().into_raw().into_iter().map(u16::from).collect()),
        (false, true) => (1, 65535, img.to_luma16().into_raw()),
        (true, false) => (3, 255, img.to_rgb8().into_raw().into_iter().map(u16::from).collect()),
        (true, true) => (3, 65535, img.to_rgb16().into_raw()),
    };
    let raw = RawImage {
        width,
        height,
        channels,
        maxval,
        samples,
    };
    raw.validate()?;
    Ok(raw)
}

fn encode_png(raw: &RawImage) -> std::result::Result<Vec<u8>, String> {
    let (w, h) = (raw.width as u32, raw.height as u32);
    let bad = || "buffer size mismatch".to_string();
    let dynimg = match (raw.channels, raw.maxval > 255) {
        (1, false) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw.samples.iter().map(|&s| s as u8).collect())
                .ok_or_else(bad)?,
        ),
        (1, true) => {
            DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw.samples.clone()).ok_or_else(bad)?)
        }
        (3, false) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw.samples.iter().map(|&s| s as u8).collect())
                .ok_or_else(bad)?,
        ),
        (3, true) => {
            DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw.samples.clone()).ok_or_else(bad)?)
        }
        (c, _) => return Err(format!("unsupported channel count {c}")),
    };
    let mut buf = Cursor::new(Vec::new());
    dynimg.write_to(&mut buf, ImageFormat::Png).map_err(|e| e.to_string())?;
    Ok(buf.into_inner())
}

/// Decodes a PNM or PNG file, sniffing the format from its first bytes.
pub fn read_raw(path: impl AsRef<Path>) -> Result<RawImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else {
        decode_pnm(&bytes)
    };
    decoded.map_err(|reason| Error::io(path, reason))
}

/// Encodes by file extension and writes atomically.
pub fn write_raw(raw: &RawImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    raw.validate().map_err(|r| Error::io(path, r))?;
    let bytes = match format_for_path(path)? {
        Format::Pnm => {
            let ext_ok = match path.extension().and_then(|e| e.to_str()) {
                Some(e) if e.eq_ignore_ascii_case("pgm") => raw.channels == 1,
                Some(e) if e.eq_ignore_ascii_case("ppm") => raw.channels == 3,
                _ => true,
            };
            if !ext_ok {
                return Err(Error::io(path, "channel count does not match PGM/PPM extension"));
            }
            encode_pnm(raw)
        }
        Format::Png => encode_png(raw).map_err(|r| Error::io(path, r))?,
    };
    write_atomic(path, &bytes)
}

/// Writes through a temporary sibling file and renames it into place, so
/// readers never observe a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::io(path, "not a file path"))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.{}.partial", std::process::id()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Loads an image and normalizes samples by `maxval`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let raw = read_raw(path.as_ref())?;
    let scale = raw.maxval as f64;
    let (w, h) = (raw.width, raw.height);
    if raw.channels == 1 {
        let values = raw.samples.iter().map(|&s| s as f64 / scale).collect();
        Ok(Image::Gray(GrayImage::from_vec(w, h, values)?))
    } else {
        let t = Tensor::from_fn(3, h, w, |c, y, x| raw.samples[(y * w + x) * 3 + c] as f64 / scale);
        Ok(Image::Rgb(RgbImage::new(t)?))
    }
}

fn quantize(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u16
}

/// Saves as 8-bit PGM/PPM/PNG according to the extension. Gray values are
/// clamped to `[0, 1]` before quantization.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let raw = match img {
        Image::Gray(g) => RawImage {
            width: g.width(),
            height: g.height(),
            channels: 1,
            maxval: 255,
            samples: g.values().iter().map(|&v| quantize(v)).collect(),
        },
        Image::Rgb(rgb) => {
            let (w, h) = (rgb.width(), rgb.height());
            let mut samples = Vec::with_capacity(w * h * 3);
            for y in 0..h {
                for x in 0..w {
                    samples.extend(rgb.pixel(x, y).map(quantize));
                }
            }
            RawImage {
                width: w,
                height: h,
                channels: 3,
                maxval: 255,
                samples,
            }
        }
    };
    write_raw(&raw, path)
}
