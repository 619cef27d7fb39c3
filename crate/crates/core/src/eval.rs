//! Reconstructions, PSNR/SSIM and per-condition summaries.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kspace::{self, ComplexGrid, Domain};
use crate::sampling::Pattern;
use crate::tensor::Tensor;
use crate::unet::{self, UNetParams};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Real-valued image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl MagnitudeImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image"));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_grid(grid: &ComplexGrid) -> Self {
        Self {
            height: grid.height(),
            width: grid.width(),
            data: grid.magnitude(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    fn check_pair(&self, other: &Self, what: &str) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::Dimension(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// Inverse FFT of the undersampled k-space, magnitude only.
pub fn zero_fill_recon(kspace: &ComplexGrid) -> Result<MagnitudeImage> {
    Ok(MagnitudeImage::from_grid(&kspace::ifft2c(kspace)?))
}

fn expect_channels(params: &UNetParams<f32>, channels: usize, what: &str) -> Result<()> {
    if params.in_channels != channels || params.out_channels != channels {
        return Err(Error::Usage(format!(
            "{what} reconstruction needs a {channels}-channel checkpoint, got {}->{}",
            params.in_channels, params.out_channels
        )));
    }
    Ok(())
}

/// Normalize, run the k-space network, restore scale, inverse FFT.
pub fn kspace_iqt_recon(params: &UNetParams<f32>, kspace: &ComplexGrid) -> Result<MagnitudeImage> {
    expect_channels(params, 2, "k-space")?;
    let (norm, record) = kspace::normalize(kspace)?;
    let input = kspace::split_complex(&norm).cast::<f32>();
    let out = unet::unet_forward(params, &input)?.cast::<f64>();
    if !out.is_finite() {
        return Err(Error::NonFinite("network output"));
    }
    let pred = kspace::denormalize(&kspace::merge_complex(&out, Domain::Frequency)?, record)?;
    zero_fill_recon(&pred)
}

/// Input and target images for the image-domain baseline: zero-filled and
/// reference magnitudes, both divided by the zero-filled maximum.
pub fn spatial_sample(kspace: &ComplexGrid, target_kspace: &ComplexGrid) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let zf = zero_fill_recon(kspace)?;
    let scale = zf.max();
    if scale <= 0.0 {
        return Err(Error::Degenerate("zero-filled image is all zero".into()));
    }
    let reference = zero_fill_recon(target_kspace)?;
    zf.check_pair(&reference, "spatial sample")?;
    let to_tensor = |img: &MagnitudeImage| {
        let data = img.data.iter().map(|v| (v / scale) as f32).collect();
        Tensor::from_vec(1, img.height, img.width, data)
    };
    Ok((to_tensor(&zf)?, to_tensor(&reference)?))
}

/// Image-domain network applied to the zero-filled magnitude; negative
/// predictions are clipped to zero.
pub fn spatial_iqt_recon(params: &UNetParams<f32>, kspace: &ComplexGrid) -> Result<MagnitudeImage> {
    expect_channels(params, 1, "spatial")?;
    let zf = zero_fill_recon(kspace)?;
    let scale = zf.max();
    if scale <= 0.0 {
        return Err(Error::Degenerate("zero-filled image is all zero".into()));
    }
    let input = Tensor::from_vec(
        1,
        zf.height,
        zf.width,
        zf.data.iter().map(|v| (v / scale) as f32).collect(),
    )?;
    let out = unet::unet_forward(params, &input)?;
    if !out.is_finite() {
        return Err(Error::NonFinite("network output"));
    }
    MagnitudeImage::new(
        zf.height,
        zf.width,
        out.data().iter().map(|&v| (v as f64 * scale).max(0.0)).collect(),
    )
}

fn peak(reference: &MagnitudeImage) -> Result<f64> {
    let l = reference.max();
    if l > 0.0 {
        Ok(l)
    } else {
        Err(Error::Degenerate("reference image has no positive values".into()))
    }
}

/// Peak signal-to-noise ratio in dB with `L = max(reference)`.
pub fn psnr(x: &MagnitudeImage, reference: &MagnitudeImage) -> Result<f64> {
    x.check_pair(reference, "psnr")?;
    let l = peak(reference)?;
    let mse = x
        .data
        .iter()
        .zip(&reference.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (l * l / mse).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable weighted average over every full window position.
fn filter_valid(img: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| g[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity: 11×11 Gaussian window (σ 1.5), K1 0.01,
/// K2 0.03, `L = max(reference)`, averaged over the valid region.
pub fn ssim(x: &MagnitudeImage, reference: &MagnitudeImage) -> Result<f64> {
    x.check_pair(reference, "ssim")?;
    if x.height < SSIM_WINDOW || x.width < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            x.height, x.width
        )));
    }
    let l = peak(reference)?;
    let (c1, c2) = ((SSIM_K1 * l).powi(2), (SSIM_K2 * l).powi(2));
    let g = gaussian_window();
    let (h, w) = (x.height, x.width);
    let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p * q).collect() };
    let mu_x = filter_valid(&x.data, h, w, &g);
    let mu_y = filter_valid(&reference.data, h, w, &g);
    let xx = filter_valid(&prod(&x.data, &x.data), h, w, &g);
    let yy = filter_valid(&prod(&reference.data, &reference.data), h, w, &g);
    let xy = filter_valid(&prod(&x.data, &reference.data), h, w, &g);
    let total: f64 = (0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let sx = xx[i] - mx * mx;
            let sy = yy[i] - my * my;
            let sxy = xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2))
        })
        .sum();
    Ok(total / mu_x.len() as f64)
}

/// Absolute difference image.
pub fn error_map(x: &MagnitudeImage, reference: &MagnitudeImage) -> Result<MagnitudeImage> {
    x.check_pair(reference, "error map")?;
    Ok(MagnitudeImage {
        height: x.height,
        width: x.width,
        data: x.data.iter().zip(&reference.data).map(|(a, b)| (a - b).abs()).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    ZeroFill,
    SpatialIqt,
    KspaceIqt,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::ZeroFill, Method::SpatialIqt, Method::KspaceIqt];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::ZeroFill => "zero-fill",
            Method::SpatialIqt => "spatial-iqt",
            Method::KspaceIqt => "kspace-iqt",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Method::ZeroFill => "Zero-filled",
            Method::SpatialIqt => "Spatial IQT",
            Method::KspaceIqt => "k-space IQT",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown method {s:?}")))
    }
}

/// Metrics for one reconstructed test slice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub method: Method,
    pub pattern: Pattern,
    pub rate: f64,
    pub slice: usize,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// All per-slice metrics of an evaluation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    /// Distinct (pattern, rate) conditions in first-seen order.
    pub fn conditions(&self) -> Vec<(Pattern, f64)> {
        let mut out: Vec<(Pattern, f64)> = Vec::new();
        for r in &self.rows {
            if !out.iter().any(|&(p, q)| p == r.pattern && q == r.rate) {
                out.push((r.pattern, r.rate));
            }
        }
        out
    }

    /// Mean and population standard deviation for one condition.
    pub fn summary(&self, method: Method, pattern: Pattern, rate: f64) -> Option<Summary> {
        let rows: Vec<&MetricRow> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.pattern == pattern && r.rate == rate)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let psnr: Vec<f64> = rows.iter().map(|r| r.psnr_db).collect();
        let ssim: Vec<f64> = rows.iter().map(|r| r.ssim).collect();
        let (psnr_mean, psnr_std) = mean_std(&psnr);
        let (ssim_mean, ssim_std) = mean_std(&ssim);
        Some(Summary {
            count: rows.len(),
            psnr_mean,
            psnr_std,
            ssim_mean,
            ssim_std,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,pattern,rate,slice,psnr_db,ssim\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6}",
                r.method, r.pattern, r.rate, r.slice, r.psnr_db, r.ssim
            );
        }
        s
    }

    /// Fixed-width table: one row per method and pattern, one column group per rate.
    pub fn to_table(&self) -> String {
        let mut rates: Vec<f64> = self.rows.iter().map(|r| r.rate).collect();
        rates.sort_by(|a, b| b.partial_cmp(a).expect("finite rates"));
        rates.dedup();
        let mut s = String::new();
        let _ = write!(s, "{:<14} {:<10}", "Method", "Pattern");
        for r in &rates {
            let _ = write!(s, " | {:^27}", format!("{:.0}% sampled", r * 100.0));
        }
        s.push('\n');
        let _ = write!(s, "{:<14} {:<10}", "", "");
        for _ in &rates {
            let _ = write!(s, " | {:>13} {:>13}", "PSNR (dB)", "SSIM");
        }
        s.push('\n');
        let rule_len = s.lines().next().map_or(0, str::len);
        s.push_str(&"-".repeat(rule_len));
        s.push('\n');
        for method in Method::ALL {
            for pattern in Pattern::ALL {
                if !self.rows.iter().any(|r| r.method == method && r.pattern == pattern) {
                    continue;
                }
                let _ = write!(s, "{:<14} {:<10}", method.label(), pattern.as_str());
                for &rate in &rates {
                    match self.summary(method, pattern, rate) {
                        Some(m) => {
                            let _ = write!(
                                s,
                                " | {:>13} {:>13}",
                                format!("{:.2}±{:.2}", m.psnr_mean, m.psnr_std),
                                format!("{:.3}±{:.3}", m.ssim_mean, m.ssim_std)
                            );
                        }
                        None => {
                            let _ = write!(s, " | {:>13} {:>13}", "-", "-");
                        }
                    }
                }
                s.push('\n');
            }
        }
        s
    }
}
