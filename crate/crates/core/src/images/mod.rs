//! Image-valued sensors: grayscale conversion and square cropping, PCA
//! compression, a synthetic rotating-pattern corpus, and level-set sampling.

pub mod corpus;
pub mod levelset;
pub mod pca;

use std::path::Path;

use image::{imageops, GrayImage, ImageFormat, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use pca::{back_project, fit_pca, project, PcaModel};

pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];
pub const SQUARE_SIDE: u32 = 240;

/// Grayscale images flattened row-major, one image per row, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    pub width: u32,
    pub height: u32,
    pub pixels: Matrix,
    pub sources: Vec<String>,
}

impl ImageBatch {
    pub fn len(&self) -> usize {
        self.pixels.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image(&self, i: usize) -> GrayImage {
        to_gray_image(self.width, self.height, self.pixels.row(i))
    }
}

pub fn luminance(rgb: [u8; 3]) -> f64 {
    (LUMA_WEIGHTS[0] * rgb[0] as f64 + LUMA_WEIGHTS[1] * rgb[1] as f64 + LUMA_WEIGHTS[2] * rgb[2] as f64) / 255.0
}

/// Center-crop to the largest square, resize to `side × side` if needed,
/// and convert to luminance in `[0, 1]`.
pub fn preprocess_one(img: &RgbImage, side: u32) -> Result<Vec<f64>> {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 || side == 0 {
        return Err(Error::InvalidSpec(format!("cannot preprocess a {w}×{h} image to side {side}")));
    }
    let s = w.min(h);
    let cropped = imageops::crop_imm(img, (w - s) / 2, (h - s) / 2, s, s).to_image();
    let square = if s == side {
        cropped
    } else {
        imageops::resize(&cropped, side, side, imageops::FilterType::Triangle)
    };
    Ok(square.pixels().map(|p| luminance(p.0).clamp(0.0, 1.0)).collect())
}

/// Every image must share the dimensions of the first.
pub fn preprocess(images: &[RgbImage], side: u32, sources: Vec<String>) -> Result<ImageBatch> {
    let Some(first) = images.first() else {
        return Err(Error::EmptyBatch);
    };
    let dims = first.dimensions();
    let mut data = Vec::with_capacity(images.len() * (side * side) as usize);
    for (i, img) in images.iter().enumerate() {
        if img.dimensions() != dims {
            return Err(Error::InvalidSpec(format!(
                "image {i} is {:?}, expected {dims:?}",
                img.dimensions()
            )));
        }
        data.extend(preprocess_one(img, side)?);
    }
    Ok(ImageBatch {
        width: side,
        height: side,
        pixels: Matrix::from_vec(images.len(), (side * side) as usize, data)?,
        sources,
    })
}

pub fn to_gray_image(width: u32, height: u32, pixels: &[f64]) -> GrayImage {
    GrayImage::from_fn(width, height, |x, y| {
        let v = pixels[(y * width + x) as usize];
        Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
    })
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

/// Writes PNG or PGM depending on the extension.
pub fn save_gray(path: &Path, img: &GrayImage) -> Result<()> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    };
    img.save_with_format(path, format)?;
    Ok(())
}
