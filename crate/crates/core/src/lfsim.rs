//! Synthetic high-field phantoms and their stochastic low-field counterparts.
//!
//! Phantoms are nested ellipses with one thin ring. Low-field degradation
//! perturbs tissue contrast, truncates k-space and adds complex Gaussian noise.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kspace::{self, ComplexGrid, Domain, NormalizationRecord};
use crate::sampling::{self, Mask, MaskSpec};

pub const MIN_PHANTOM_EDGE: usize = 32;

const PHANTOM_STREAM: u64 = 0x7068_616e;
const CONTRAST_STREAM: u64 = 0x636f_6e74;
const NOISE_STREAM: u64 = 0x6e6f_6973;

/// Smallest separation between two tissues' base intensities.
const MIN_INTENSITY_GAP: f64 = 0.08;

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub image: ComplexGrid,
    /// Tissue label per pixel, 0 is background.
    pub labels: Vec<u8>,
}

impl Phantom {
    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn distinct_labels(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (1..=255u8).filter(|&l| seen[l as usize]).collect()
    }
}

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    angle: f64,
}

impl Ellipse {
    /// Normalized radius: `< 1` inside.
    fn radius(&self, y: f64, x: f64, shrink: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        let (ax, ay) = (self.ax - shrink, self.ay - shrink);
        (u / ax).powi(2) + (v / ay).powi(2)
    }
}

enum Shape {
    Filled(Ellipse),
    Ring { outer: Ellipse, thickness: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match self {
            Shape::Filled(e) => e.radius(y, x, 0.0) <= 1.0,
            Shape::Ring { outer, thickness } => {
                outer.radius(y, x, 0.0) <= 1.0 && outer.radius(y, x, *thickness) > 1.0
            }
        }
    }
}

fn draw_intensities(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(n);
    while out.len() < n {
        let v: f64 = rng.random_range(0.2..=1.0);
        if out.iter().all(|u| (u - v).abs() >= MIN_INTENSITY_GAP) {
            out.push(v);
        }
    }
    out
}

fn draw_shapes(rng: &mut ChaCha8Rng, height: usize, width: usize) -> Vec<Shape> {
    let (h, w) = (height as f64, width as f64);
    let n = rng.random_range(3..=5usize);
    let outer = Ellipse {
        cy: h / 2.0 + rng.random_range(-0.03..0.03) * h,
        cx: w / 2.0 + rng.random_range(-0.03..0.03) * w,
        ay: rng.random_range(0.34..0.44) * h,
        ax: rng.random_range(0.28..0.40) * w,
        angle: rng.random_range(-0.3..0.3),
    };
    let mut shapes = vec![Shape::Filled(outer)];
    for _ in 2..n {
        let scale = rng.random_range(0.18..0.45);
        let inner = Ellipse {
            cy: outer.cy + rng.random_range(-0.35..0.35) * outer.ay,
            cx: outer.cx + rng.random_range(-0.35..0.35) * outer.ax,
            ay: scale * outer.ay * rng.random_range(0.6..1.0),
            ax: scale * outer.ax * rng.random_range(0.6..1.0),
            angle: rng.random_range(0.0..std::f64::consts::PI),
        };
        shapes.push(Shape::Filled(inner));
    }
    // Thin ring drawn last so it stays visible over the blobs.
    let ring_scale = rng.random_range(0.55..0.8);
    let ring = Ellipse {
        cy: outer.cy + rng.random_range(-0.08..0.08) * outer.ay,
        cx: outer.cx + rng.random_range(-0.08..0.08) * outer.ax,
        ay: ring_scale * outer.ay,
        ax: ring_scale * outer.ax * rng.random_range(0.85..1.0),
        angle: rng.random_range(-0.5..0.5),
    };
    shapes.push(Shape::Ring {
        outer: ring,
        thickness: rng.random_range(2.0..3.5),
    });
    shapes
}

/// Deterministic nested-ellipse phantom with intensities in `[0.2, 1]`.
pub fn gen_phantom(seed: u64, height: usize, width: usize) -> Result<Phantom> {
    kspace::check_dims(height, width)?;
    if height < MIN_PHANTOM_EDGE || width < MIN_PHANTOM_EDGE {
        return Err(Error::Dimension(format!(
            "phantoms need at least {MIN_PHANTOM_EDGE}x{MIN_PHANTOM_EDGE}, got {height}x{width}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PHANTOM_STREAM);

    // Redraw until every tissue keeps a visible footprint; the loop continues the
    // same stream so the result is still a pure function of the seed.
    loop {
        let shapes = draw_shapes(&mut rng, height, width);
        let intensities = draw_intensities(&mut rng, shapes.len());
        let mut labels = vec![0u8; height * width];
        for y in 0..height {
            for x in 0..width {
                let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
                for (i, s) in shapes.iter().enumerate() {
                    if s.contains(py, px) {
                        labels[y * width + x] = i as u8 + 1;
                    }
                }
            }
        }
        let mut counts = vec![0usize; shapes.len() + 1];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        if counts[1..].iter().any(|&c| c < 8) {
            continue;
        }
        let values: Vec<f64> = labels
            .iter()
            .map(|&l| if l == 0 { 0.0 } else { intensities[l as usize - 1] })
            .collect();
        let image = ComplexGrid::from_real(height, width, Domain::Spatial, &values)?;
        return Ok(Phantom { image, labels });
    }
}

/// Per-tissue multiplier ranges. Background is never rescaled.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastPrior {
    ranges: BTreeMap<u8, (f64, f64)>,
}

impl ContrastPrior {
    pub fn new(ranges: BTreeMap<u8, (f64, f64)>) -> Result<Self> {
        for (&label, &(lo, hi)) in &ranges {
            if label == 0 {
                return Err(Error::Config("background multiplier is fixed at 1".into()));
            }
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::Config(format!(
                    "tissue {label}: multiplier range ({lo}, {hi}) must satisfy 0 < low <= high"
                )));
            }
        }
        Ok(Self { ranges })
    }

    /// Same range for tissues `1..=max_label`.
    pub fn uniform(low: f64, high: f64, max_label: u8) -> Result<Self> {
        Self::new((1..=max_label).map(|l| (l, (low, high))).collect())
    }

    pub fn range(&self, label: u8) -> Option<(f64, f64)> {
        self.ranges.get(&label).copied()
    }
}

impl Default for ContrastPrior {
    fn default() -> Self {
        Self::uniform(0.7, 1.3, 8).expect("valid default prior")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegradationConfig {
    /// Per-component std of the complex Gaussian noise, relative to a unit-max image.
    pub noise_sigma: f64,
    /// Retained central k-space band per axis.
    pub lowpass_fraction: f64,
    pub seed: u64,
}

/// Keeps the fully sampled zero-filled SSIM mid-range; heavier noise makes
/// background noise dominate SSIM so that undersampling appears to help.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.01;

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            noise_sigma: DEFAULT_NOISE_SIGMA,
            lowpass_fraction: 0.75,
            seed: 0,
        }
    }
}

impl DegradationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise sigma {} must be finite and >= 0",
                self.noise_sigma
            )));
        }
        if !(self.lowpass_fraction > 0.0 && self.lowpass_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "low-pass fraction {} outside (0, 1]",
                self.lowpass_fraction
            )));
        }
        Ok(())
    }
}

/// Half-open index band `[lo, hi)` of the retained central frequencies.
pub fn lowpass_band(edge: usize, fraction: f64) -> (usize, usize) {
    let half = ((fraction * edge as f64 / 2.0).round() as usize).clamp(1, edge / 2);
    (edge / 2 - half, edge / 2 + half)
}

fn lowpass(grid: &ComplexGrid, fraction: f64) -> Result<ComplexGrid> {
    let k = kspace::fft2c(grid)?;
    let (h, w) = (k.height(), k.width());
    let (y0, y1) = lowpass_band(h, fraction);
    let (x0, x1) = lowpass_band(w, fraction);
    let data = k
        .data()
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let (y, x) = (i / w, i % w);
            if (y0..y1).contains(&y) && (x0..x1).contains(&x) {
                z
            } else {
                Complex64::default()
            }
        })
        .collect();
    kspace::ifft2c(&ComplexGrid::new(h, w, Domain::Frequency, data)?)
}

/// Contrast perturbation and k-space truncation, without noise.
pub fn degrade_noiseless(
    hf: &Phantom,
    prior: &ContrastPrior,
    cfg: &DegradationConfig,
) -> Result<ComplexGrid> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(CONTRAST_STREAM);
    let mut multiplier = [1.0f64; 256];
    for label in hf.distinct_labels() {
        let (lo, hi) = prior.range(label).ok_or(Error::Prior(label))?;
        // `lo + u·(hi − lo)` keeps degenerate ranges exact.
        multiplier[label as usize] = lo + (hi - lo) * rng.random::<f64>();
    }
    let scaled = ComplexGrid::new(
        hf.height(),
        hf.width(),
        Domain::Spatial,
        hf.image
            .data()
            .iter()
            .zip(&hf.labels)
            .map(|(&z, &l)| z * multiplier[l as usize])
            .collect(),
    )?;
    if cfg.lowpass_fraction >= 1.0 {
        Ok(scaled)
    } else {
        lowpass(&scaled, cfg.lowpass_fraction)
    }
}

/// Synthetic low-field image of `hf`: contrast, resolution and SNR loss.
pub fn degrade_to_lf(
    hf: &Phantom,
    prior: &ContrastPrior,
    cfg: &DegradationConfig,
) -> Result<ComplexGrid> {
    let clean = degrade_noiseless(hf, prior, cfg)?;
    if cfg.noise_sigma == 0.0 {
        return Ok(clean);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(NOISE_STREAM);
    let normal = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated");
    let noisy: Vec<Complex64> = clean
        .data()
        .iter()
        .map(|&z| {
            let n = Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            let v = z + n;
            if v.re.is_finite() && v.im.is_finite() {
                v
            } else {
                Complex64::default()
            }
        })
        .collect();
    ComplexGrid::new(clean.height(), clean.width(), Domain::Spatial, noisy)
}

/// Seeds and mask spec that regenerate a slice exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Provenance {
    pub phantom_seed: u64,
    pub degrade_seed: u64,
    pub mask: MaskSpec,
}

/// One training example: undersampled normalized low-field k-space and the
/// high-field k-space on the same scale.
#[derive(Clone, Debug, PartialEq)]
pub struct SlicePair {
    pub input: ComplexGrid,
    pub target: ComplexGrid,
    pub record: NormalizationRecord,
    /// Fully sampled low-field k-space before masking and normalization.
    pub lf_kspace: ComplexGrid,
    pub mask: Mask,
    pub provenance: Provenance,
}

pub fn build_pair(
    hf: &Phantom,
    prior: &ContrastPrior,
    cfg: &DegradationConfig,
    mask_spec: &MaskSpec,
    phantom_seed: u64,
) -> Result<SlicePair> {
    let lf = degrade_to_lf(hf, prior, cfg)?;
    let lf_kspace = kspace::fft2c(&lf)?;
    let mask = sampling::generate(mask_spec, hf.height(), hf.width())?;
    let (input, record) = kspace::normalize(&sampling::apply_mask(&lf_kspace, &mask)?)?;
    let target = kspace::normalize_with(&kspace::fft2c(&hf.image)?, record)?;
    Ok(SlicePair {
        input,
        target,
        record,
        lf_kspace,
        mask,
        provenance: Provenance {
            phantom_seed,
            degrade_seed: cfg.seed,
            mask: *mask_spec,
        },
    })
}

/// Regenerate a pair from its provenance.
pub fn rebuild_pair(
    provenance: &Provenance,
    size: usize,
    prior: &ContrastPrior,
    noise_sigma: f64,
    lowpass_fraction: f64,
) -> Result<SlicePair> {
    let hf = gen_phantom(provenance.phantom_seed, size, size)?;
    let cfg = DegradationConfig {
        noise_sigma,
        lowpass_fraction,
        seed: provenance.degrade_seed,
    };
    build_pair(&hf, prior, &cfg, &provenance.mask, provenance.phantom_seed)
}
