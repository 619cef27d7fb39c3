//! Complex grids, the centered orthonormal 2-D Fourier pair, real/imaginary
//! channel packing and per-slice magnitude normalization.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type DualChannelTensor = Tensor<f64>;

/// Smallest supported grid edge.
pub const MIN_EDGE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Spatial,
    Frequency,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Spatial => "spatial",
            Domain::Frequency => "frequency",
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            Domain::Spatial => 0,
            Domain::Frequency => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Domain::Spatial),
            1 => Some(Domain::Frequency),
            _ => None,
        }
    }
}

/// `H×W` complex array tagged with the domain it lives in.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    height: usize,
    width: usize,
    domain: Domain,
    data: Vec<Complex64>,
}

pub(crate) fn check_dims(height: usize, width: usize) -> Result<()> {
    for (name, v) in [("height", height), ("width", width)] {
        if v < MIN_EDGE || !v.is_power_of_two() {
            return Err(Error::Dimension(format!(
                "{name} {v} must be a power of two >= {MIN_EDGE}"
            )));
        }
    }
    Ok(())
}

impl ComplexGrid {
    pub fn new(height: usize, width: usize, domain: Domain, data: Vec<Complex64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width} grid",
                data.len()
            )));
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("complex grid"));
        }
        Ok(Self {
            height,
            width,
            domain,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, domain: Domain) -> Result<Self> {
        Self::new(height, width, domain, vec![Complex64::default(); height * width])
    }

    /// Real-valued grid with zero imaginary part.
    pub fn from_real(height: usize, width: usize, domain: Domain, values: &[f64]) -> Result<Self> {
        Self::new(
            height,
            width,
            domain,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> Complex64 {
        self.data[y * self.width + x]
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    /// Elementwise map that keeps shape and domain; the result is re-validated.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.domain,
            self.data.iter().map(|&z| f(z)).collect(),
        )
    }

    pub(crate) fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain != expected {
            return Err(Error::Domain {
                expected: expected.name(),
                found: self.domain.name(),
            });
        }
        Ok(())
    }
}

/// Swap quadrants so index `(0,0)` moves to `(H/2, W/2)`. For even edges this is
/// its own inverse, so it serves as both fftshift and ifftshift.
fn shift_quadrants(data: &[Complex64], height: usize, width: usize) -> Vec<Complex64> {
    let (hh, hw) = (height / 2, width / 2);
    let mut out = vec![Complex64::default(); data.len()];
    for y in 0..height {
        let ty = (y + hh) % height;
        let src = &data[y * width..(y + 1) * width];
        let dst = &mut out[ty * width..(ty + 1) * width];
        dst[hw..].copy_from_slice(&src[..width - hw]);
        dst[..hw].copy_from_slice(&src[width - hw..]);
    }
    out
}

fn transpose(data: &[Complex64], height: usize, width: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); data.len()];
    for y in 0..height {
        for x in 0..width {
            out[x * height + y] = data[y * width + x];
        }
    }
    out
}

fn centered_transform(grid: &ComplexGrid, inverse: bool) -> Vec<Complex64> {
    let (h, w) = (grid.height, grid.width);
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };

    let mut buf = shift_quadrants(&grid.data, h, w);
    row_fft.process(&mut buf);
    let mut cols = transpose(&buf, h, w);
    col_fft.process(&mut cols);
    let buf = transpose(&cols, w, h);

    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut out = shift_quadrants(&buf, h, w);
    for z in &mut out {
        *z *= scale;
    }
    out
}

/// Centered orthonormal forward transform: DC lands at `(H/2, W/2)` and energy
/// is preserved.
pub fn fft2c(grid: &ComplexGrid) -> Result<ComplexGrid> {
    grid.expect_domain(Domain::Spatial)?;
    check_dims(grid.height, grid.width)?;
    ComplexGrid::new(
        grid.height,
        grid.width,
        Domain::Frequency,
        centered_transform(grid, false),
    )
}

/// Inverse of [`fft2c`].
pub fn ifft2c(grid: &ComplexGrid) -> Result<ComplexGrid> {
    grid.expect_domain(Domain::Frequency)?;
    check_dims(grid.height, grid.width)?;
    ComplexGrid::new(
        grid.height,
        grid.width,
        Domain::Spatial,
        centered_transform(grid, true),
    )
}

/// Pack a complex grid as two real channels: 0 = real part, 1 = imaginary part.
pub fn split_complex(grid: &ComplexGrid) -> DualChannelTensor {
    let n = grid.len();
    let mut data = Vec::with_capacity(2 * n);
    data.extend(grid.data.iter().map(|z| z.re));
    data.extend(grid.data.iter().map(|z| z.im));
    Tensor::from_vec(2, grid.height, grid.width, data).expect("2*H*W values")
}

pub fn merge_complex(t: &DualChannelTensor, domain: Domain) -> Result<ComplexGrid> {
    if t.channels() != 2 {
        return Err(Error::Channels {
            expected: 2,
            found: t.channels(),
        });
    }
    let data = t
        .channel(0)
        .iter()
        .zip(t.channel(1))
        .map(|(&re, &im)| Complex64::new(re, im))
        .collect();
    ComplexGrid::new(t.height(), t.width(), domain, data)
}

/// Per-slice divisor applied before the network sees the data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationRecord {
    scale: f64,
}

impl NormalizationRecord {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Degenerate(format!(
                "normalization scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Divide by the largest element magnitude so the output peaks at exactly 1.
pub fn normalize(grid: &ComplexGrid) -> Result<(ComplexGrid, NormalizationRecord)> {
    let scale = grid.max_magnitude();
    if scale == 0.0 {
        return Err(Error::Degenerate("cannot normalize an all-zero grid".into()));
    }
    let record = NormalizationRecord::new(scale)?;
    Ok((normalize_with(grid, record)?, record))
}

/// Divide by an existing record's scale (used to put targets on the input's scale).
pub fn normalize_with(grid: &ComplexGrid, record: NormalizationRecord) -> Result<ComplexGrid> {
    let inv = record.scale;
    grid.map(|z| z / inv)
}

pub fn denormalize(grid: &ComplexGrid, record: NormalizationRecord) -> Result<ComplexGrid> {
    let s = record.scale;
    grid.map(|z| z * s)
}
