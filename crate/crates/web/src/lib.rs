//! Browser bindings for the interactive demo page.
//!
//! Three operations: preview an undersampling mask, simulate a low-field
//! slice with its zero-filled reconstruction, and reconstruct the same slice
//! with a trained checkpoint. Images come back as 8-bit grayscale buffers;
//! seeds cross the boundary as `u32` so JavaScript passes plain numbers.

use std::path::Path;

use kiqt::config::RunConfig;
use kiqt::eval::{self, MagnitudeImage};
use kiqt::kspace::{self, ComplexGrid};
use kiqt::lfsim;
use kiqt::sampling::{self, Mask, Pattern};
use kiqt::unet::Checkpoint;
use wasm_bindgen::prelude::*;

/// Row-major 8-bit grayscale image.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    /// Scales by the image maximum, like the PGM writer.
    pub fn from_values(height: usize, width: usize, values: &[f64]) -> Self {
        let max = values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
        let pixels = values
            .iter()
            .map(|&v| {
                if max > 0.0 && v.is_finite() {
                    (v / max * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                }
            })
            .collect();
        Self { height, width, pixels }
    }

    fn from_magnitude(img: &MagnitudeImage) -> Self {
        Self::from_values(img.height(), img.width(), img.data())
    }
}

#[wasm_bindgen]
impl GrayImage {
    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> Vec<u8> {
        self.pixels.clone()
    }

    /// Opaque RGBA bytes, ready for `ImageData`.
    pub fn rgba(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|&p| [p, p, p, 255]).collect()
    }
}

#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct MaskPreview {
    image: GrayImage,
    samples: usize,
    achieved_rate: f64,
}

#[wasm_bindgen]
impl MaskPreview {
    #[wasm_bindgen(getter)]
    pub fn image(&self) -> GrayImage {
        self.image.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn samples(&self) -> usize {
        self.samples
    }

    #[wasm_bindgen(getter)]
    pub fn achieved_rate(&self) -> f64 {
        self.achieved_rate
    }
}

/// A high-field reference, one reconstruction of its undersampled low-field
/// counterpart, and the metrics between them.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct SliceView {
    reference: GrayImage,
    recon: GrayImage,
    error: GrayImage,
    kspace: GrayImage,
    ssim: f64,
    psnr: f64,
}

#[wasm_bindgen]
impl SliceView {
    #[wasm_bindgen(getter)]
    pub fn reference(&self) -> GrayImage {
        self.reference.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn recon(&self) -> GrayImage {
        self.recon.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn error(&self) -> GrayImage {
        self.error.clone()
    }

    /// Log-magnitude of the undersampled k-space.
    #[wasm_bindgen(getter)]
    pub fn kspace(&self) -> GrayImage {
        self.kspace.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn ssim(&self) -> f64 {
        self.ssim
    }

    #[wasm_bindgen(getter)]
    pub fn psnr(&self) -> f64 {
        self.psnr
    }
}

fn make_mask(pattern: Pattern, rate: f64, size: usize, seed: u64) -> kiqt::Result<Mask> {
    if rate >= 1.0 {
        return Ok(Mask::full(size, size));
    }
    let cfg = RunConfig::default();
    sampling::generate(&cfg.mask_spec(pattern, rate, seed), size, size)
}

pub fn preview_mask(pattern: &str, rate: f64, size: usize, seed: u64) -> kiqt::Result<MaskPreview> {
    let mask = make_mask(pattern.parse()?, rate, size, seed)?;
    let values: Vec<f64> = mask.bits().iter().map(|&b| f64::from(u8::from(b))).collect();
    Ok(MaskPreview {
        image: GrayImage::from_values(size, size, &values),
        samples: mask.count_ones(),
        achieved_rate: mask.achieved_rate(),
    })
}

/// Reference magnitude and undersampled low-field k-space for one phantom.
fn undersampled_slice(
    seed: u64,
    size: usize,
    pattern: &str,
    rate: f64,
    noise_sigma: f64,
) -> kiqt::Result<(MagnitudeImage, ComplexGrid)> {
    let cfg = RunConfig {
        size,
        noise_sigma,
        ..RunConfig::default()
    };
    let hf = lfsim::gen_phantom(seed, size, size)?;
    let lf = lfsim::degrade_to_lf(&hf, &cfg.prior()?, &cfg.degradation(seed))?;
    let mask = make_mask(pattern.parse()?, rate, size, seed)?;
    let us = sampling::apply_mask(&kspace::fft2c(&lf)?, &mask)?;
    Ok((MagnitudeImage::from_grid(&hf.image), us))
}

fn view(reference: &MagnitudeImage, us: &ComplexGrid, recon: &MagnitudeImage) -> kiqt::Result<SliceView> {
    let log_k: Vec<f64> = us.magnitude().iter().map(|m| m.ln_1p()).collect();
    Ok(SliceView {
        reference: GrayImage::from_magnitude(reference),
        recon: GrayImage::from_magnitude(recon),
        error: GrayImage::from_magnitude(&eval::error_map(recon, reference)?),
        kspace: GrayImage::from_values(us.height(), us.width(), &log_k),
        ssim: eval::ssim(recon, reference)?,
        psnr: eval::psnr(recon, reference)?,
    })
}

pub fn zero_filled_slice(seed: u64, size: usize, pattern: &str, rate: f64, noise_sigma: f64) -> kiqt::Result<SliceView> {
    let (reference, us) = undersampled_slice(seed, size, pattern, rate, noise_sigma)?;
    view(&reference, &us, &eval::zero_fill_recon(&us)?)
}

/// Runs a CKPT1 network (k-space or spatial, by channel count) on the slice.
pub fn checkpoint_slice(
    ckpt: &[u8],
    seed: u64,
    size: usize,
    pattern: &str,
    rate: f64,
    noise_sigma: f64,
) -> kiqt::Result<SliceView> {
    let ckpt = Checkpoint::from_bytes(ckpt, Path::new("uploaded checkpoint"))?;
    let (reference, us) = undersampled_slice(seed, size, pattern, rate, noise_sigma)?;
    let recon = match ckpt.params.in_channels {
        2 => eval::kspace_iqt_recon(&ckpt.params, &us)?,
        _ => eval::spatial_iqt_recon(&ckpt.params, &us)?,
    };
    view(&reference, &us, &recon)
}

fn js(e: kiqt::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = maskPreview)]
pub fn mask_preview(pattern: &str, rate: f64, size: usize, seed: u32) -> Result<MaskPreview, JsError> {
    preview_mask(pattern, rate, size, seed.into()).map_err(js)
}

#[wasm_bindgen(js_name = simulateSlice)]
pub fn simulate_slice(seed: u32, size: usize, pattern: &str, rate: f64, noise_sigma: f64) -> Result<SliceView, JsError> {
    zero_filled_slice(seed.into(), size, pattern, rate, noise_sigma).map_err(js)
}

#[wasm_bindgen(js_name = reconstructSlice)]
pub fn reconstruct_slice(
    ckpt: &[u8],
    seed: u32,
    size: usize,
    pattern: &str,
    rate: f64,
    noise_sigma: f64,
) -> Result<SliceView, JsError> {
    checkpoint_slice(ckpt, seed.into(), size, pattern, rate, noise_sigma).map_err(js)
}
