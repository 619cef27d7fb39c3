//! Binary k-space undersampling masks.
//!
//! Pseudo-radial masks are unions of digital spokes through DC; Cartesian masks
//! select whole phase-encode rows around an always-on center band.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kspace::{check_dims, ComplexGrid, Domain};
use crate::tensor::Tensor;

/// Allowed gap between achieved and requested sampling rate.
pub const RATE_TOLERANCE: f64 = 0.01;
pub const DEFAULT_CENTER_FRACTION: f64 = 0.08;

const RADIAL_STREAM: u64 = 0x7261_6469_616c;
const CARTESIAN_STREAM: u64 = 0x6361_7274;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pattern {
    PseudoRadial,
    Cartesian,
}

impl Pattern {
    pub const ALL: [Pattern; 2] = [Pattern::PseudoRadial, Pattern::Cartesian];

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::PseudoRadial => "radial",
            Pattern::Cartesian => "cartesian",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "radial" | "pseudo-radial" | "pseudoradial" => Ok(Pattern::PseudoRadial),
            "cartesian" => Ok(Pattern::Cartesian),
            other => Err(Error::MaskSpec(format!(
                "unknown pattern `{other}` (expected radial or cartesian)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskSpec {
    pub pattern: Pattern,
    pub target_rate: f64,
    pub seed: u64,
    /// Fraction of rows around DC that are always acquired. Cartesian only.
    pub center_fraction: f64,
}

impl MaskSpec {
    pub fn new(pattern: Pattern, target_rate: f64, seed: u64) -> Self {
        Self {
            pattern,
            target_rate,
            seed,
            center_fraction: DEFAULT_CENTER_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_rate > 0.0 && self.target_rate <= 1.0) {
            return Err(Error::MaskSpec(format!(
                "target rate {} outside (0, 1]",
                self.target_rate
            )));
        }
        if self.pattern == Pattern::Cartesian
            && self.target_rate < 1.0
            && !(self.center_fraction >= 0.0 && self.center_fraction < self.target_rate)
        {
            return Err(Error::MaskSpec(format!(
                "center fraction {} must lie in [0, target rate {})",
                self.center_fraction, self.target_rate
            )));
        }
        Ok(())
    }
}

/// `H×W` binary sampling pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
    ones: usize,
}

impl Mask {
    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} mask bits for a {height}x{width} grid",
                bits.len()
            )));
        }
        let ones = bits.iter().filter(|&&b| b).count();
        Ok(Self {
            height,
            width,
            bits,
            ones,
        })
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![true; height * width],
            ones: height * width,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count_ones(&self) -> usize {
        self.ones
    }

    pub fn achieved_rate(&self) -> f64 {
        self.ones as f64 / (self.height * self.width) as f64
    }

    /// Single-channel `{0.0, 1.0}` tensor for serialization.
    pub fn to_tensor(&self) -> Tensor<f64> {
        let data = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Tensor::from_vec(1, self.height, self.width, data).expect("H*W values")
    }

    pub fn from_tensor(t: &Tensor<f64>) -> Result<Self> {
        if t.channels() != 1 {
            return Err(Error::Channels {
                expected: 1,
                found: t.channels(),
            });
        }
        let mut bits = Vec::with_capacity(t.data().len());
        for &v in t.data() {
            match v {
                0.0 => bits.push(false),
                1.0 => bits.push(true),
                other => {
                    return Err(Error::MaskSpec(format!("mask value {other} is not 0 or 1")))
                }
            }
        }
        Self::from_bits(t.height(), t.width(), bits)
    }
}

/// Generate the mask described by `spec`, dispatching on its pattern.
pub fn generate(spec: &MaskSpec, height: usize, width: usize) -> Result<Mask> {
    match spec.pattern {
        Pattern::PseudoRadial => gen_pseudo_radial(spec, height, width),
        Pattern::Cartesian => gen_cartesian(spec, height, width),
    }
}

fn check_rate(mask: &Mask, target: f64) -> Result<()> {
    let achieved = mask.achieved_rate();
    if (achieved - target).abs() > RATE_TOLERANCE + 1e-12 {
        return Err(Error::MaskSpec(format!(
            "target rate {target} unreachable on a {}x{} grid (best {achieved:.4})",
            mask.height, mask.width
        )));
    }
    Ok(())
}

/// Index of the prefix whose count is closest to `target_count` without going
/// over `ceiling`; ties go to the shorter prefix.
fn best_prefix(counts: &[usize], target_count: f64, ceiling: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &c) in counts.iter().enumerate() {
        if c as f64 > ceiling {
            continue;
        }
        let dev = (c as f64 - target_count).abs();
        if best.is_none_or(|(_, d)| dev < d) {
            best = Some((i, dev));
        }
    }
    best.map(|(i, _)| i)
}

/// Digital line through the grid center at angle `theta`, clipped to the grid.
/// Both half-rays are traced outward with Bresenham's algorithm so the two
/// halves are exact point reflections of each other.
fn rasterize_spoke(theta: f64, height: usize, width: usize, out: &mut [bool]) {
    let (cy, cx) = ((height / 2) as i64, (width / 2) as i64);
    let reach = 2.0 * height.max(width) as f64;
    let dy = (reach * theta.sin()).round() as i64;
    let dx = (reach * theta.cos()).round() as i64;
    for sign in [1i64, -1] {
        bresenham_ray(cy, cx, sign * dy, sign * dx, height, width, out);
    }
}

fn bresenham_ray(
    y0: i64,
    x0: i64,
    dy: i64,
    dx: i64,
    height: usize,
    width: usize,
    out: &mut [bool],
) {
    let (ady, adx) = (dy.abs(), dx.abs());
    let (sy, sx) = (dy.signum(), dx.signum());
    let (mut y, mut x) = (y0, x0);
    let mut err = adx - ady;
    loop {
        if y < 0 || x < 0 || y >= height as i64 || x >= width as i64 {
            break;
        }
        out[y as usize * width + x as usize] = true;
        if y == y0 + dy && x == x0 + dx {
            break;
        }
        let e2 = 2 * err;
        if e2 > -ady {
            err -= ady;
            x += sx;
        }
        if e2 < adx {
            err += adx;
            y += sy;
        }
    }
}

fn uniform_spokes_count(n: usize, height: usize, width: usize) -> usize {
    let mut bits = vec![false; height * width];
    for k in 0..n {
        rasterize_spoke(k as f64 * std::f64::consts::PI / n as f64, height, width, &mut bits);
    }
    bits.iter().filter(|&&b| b).count()
}

pub fn gen_pseudo_radial(spec: &MaskSpec, height: usize, width: usize) -> Result<Mask> {
    if spec.pattern != Pattern::PseudoRadial {
        return Err(Error::MaskSpec("expected a pseudo-radial spec".into()));
    }
    spec.validate()?;
    check_dims(height, width)?;
    if spec.target_rate >= 1.0 {
        return Ok(Mask::full(height, width));
    }

    let total = (height * width) as f64;
    let target_count = spec.target_rate * total;
    let max_spokes = 4 * height.max(width);
    let n = (1..=max_spokes)
        .find(|&n| uniform_spokes_count(n, height, width) as f64 >= target_count)
        .ok_or_else(|| {
            Error::MaskSpec(format!(
                "target rate {} unreachable with up to {max_spokes} spokes",
                spec.target_rate
            ))
        })?;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(RADIAL_STREAM);
    order.shuffle(&mut rng);

    // Grow the mask spoke by spoke, recording each prefix's union size.
    let mut bits = vec![false; height * width];
    bits[(height / 2) * width + width / 2] = true;
    let mut prefixes = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    for &k in &order {
        rasterize_spoke(k as f64 * std::f64::consts::PI / n as f64, height, width, &mut bits);
        counts.push(bits.iter().filter(|&&b| b).count());
        prefixes.push(k);
    }
    let ceiling = (spec.target_rate + RATE_TOLERANCE) * total;
    let keep = best_prefix(&counts, target_count, ceiling).ok_or_else(|| {
        Error::MaskSpec(format!(
            "a single spoke already exceeds target rate {}",
            spec.target_rate
        ))
    })?;

    let mut bits = vec![false; height * width];
    bits[(height / 2) * width + width / 2] = true;
    for &k in &prefixes[..=keep] {
        rasterize_spoke(k as f64 * std::f64::consts::PI / n as f64, height, width, &mut bits);
    }
    let mask = Mask::from_bits(height, width, bits)?;
    check_rate(&mask, spec.target_rate)?;
    Ok(mask)
}

/// Row indices ordered by distance from the DC row, lower index first on ties.
fn rows_by_center_distance(height: usize) -> Vec<usize> {
    let c = height / 2;
    let mut rows: Vec<usize> = (0..height).collect();
    rows.sort_by_key(|&r| (r.abs_diff(c), r));
    rows
}

pub fn gen_cartesian(spec: &MaskSpec, height: usize, width: usize) -> Result<Mask> {
    if spec.pattern != Pattern::Cartesian {
        return Err(Error::MaskSpec("expected a Cartesian spec".into()));
    }
    spec.validate()?;
    check_dims(height, width)?;
    if spec.target_rate >= 1.0 {
        return Ok(Mask::full(height, width));
    }

    let counts: Vec<usize> = (1..=height).collect();
    let target_rows = spec.target_rate * height as f64;
    let ceiling = (spec.target_rate + RATE_TOLERANCE) * height as f64;
    let n_rows = best_prefix(&counts, target_rows, ceiling)
        .map(|i| counts[i])
        .ok_or_else(|| {
            Error::MaskSpec(format!(
                "target rate {} is below one row of {height}",
                spec.target_rate
            ))
        })?;
    let n_center = ((spec.center_fraction * height as f64).round() as usize).clamp(1, n_rows);

    let by_distance = rows_by_center_distance(height);
    let mut selected = vec![false; height];
    for &r in &by_distance[..n_center] {
        selected[r] = true;
    }
    let mut rest: Vec<usize> = (0..height).filter(|&r| !selected[r]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(CARTESIAN_STREAM);
    rest.shuffle(&mut rng);
    for &r in &rest[..n_rows - n_center] {
        selected[r] = true;
    }

    let bits = (0..height)
        .flat_map(|r| std::iter::repeat_n(selected[r], width))
        .collect();
    let mask = Mask::from_bits(height, width, bits)?;
    check_rate(&mask, spec.target_rate)?;
    Ok(mask)
}

/// Zero every k-space coefficient outside the mask.
pub fn apply_mask(kspace: &ComplexGrid, mask: &Mask) -> Result<ComplexGrid> {
    kspace.expect_domain(Domain::Frequency)?;
    if (kspace.height(), kspace.width()) != (mask.height, mask.width) {
        return Err(Error::Dimension(format!(
            "mask {}x{} does not match k-space {}x{}",
            mask.height,
            mask.width,
            kspace.height(),
            kspace.width()
        )));
    }
    let data = kspace
        .data()
        .iter()
        .zip(&mask.bits)
        .map(|(&z, &b)| if b { z } else { Complex64::default() })
        .collect();
    ComplexGrid::new(kspace.height(), kspace.width(), Domain::Frequency, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radial(rate: f64, seed: u64) -> MaskSpec {
        MaskSpec::new(Pattern::PseudoRadial, rate, seed)
    }

    fn cartesian(rate: f64, seed: u64) -> MaskSpec {
        MaskSpec::new(Pattern::Cartesian, rate, seed)
    }

    #[test]
    fn full_rate_is_all_ones() {
        for spec in [radial(1.0, 3), cartesian(1.0, 3)] {
            let m = generate(&spec, 128, 128).unwrap();
            assert_eq!(m.count_ones(), 128 * 128);
            assert_eq!(m.achieved_rate(), 1.0);
        }
    }

    #[test]
    fn radial_thirty_percent_seed_seven() {
        let m = gen_pseudo_radial(&radial(0.30, 7), 128, 128).unwrap();
        let ones = m.bits().iter().filter(|&&b| b).count();
        assert_eq!(ones, m.count_ones());
        assert!((4752..=5079).contains(&ones), "ones = {ones}");
        assert!(m.get(64, 64));
    }

    #[test]
    fn cartesian_half_rate_has_64_rows() {
        let m = gen_cartesian(&cartesian(0.5, 1), 128, 128).unwrap();
        let rows_on = (0..128).filter(|&r| m.get(r, 0)).count();
        assert_eq!(rows_on, 64);
        assert_eq!(m.achieved_rate(), 0.5);
        assert!((0..128).all(|x| m.get(64, x)));
        for r in 59..=68 {
            assert!(m.get(r, 0), "center row {r} missing");
        }
    }

    #[test]
    fn cartesian_rows_all_or_nothing() {
        for seed in 0..10 {
            let m = gen_cartesian(&cartesian(0.3, seed), 128, 128).unwrap();
            for r in 0..128 {
                let first = m.get(r, 0);
                assert!((0..128).all(|x| m.get(r, x) == first));
            }
        }
    }

    #[test]
    fn deterministic() {
        for spec in [radial(0.5, 9), cartesian(0.5, 9)] {
            assert_eq!(generate(&spec, 128, 128).unwrap(), generate(&spec, 128, 128).unwrap());
        }
        assert_ne!(
            generate(&cartesian(0.3, 1), 128, 128).unwrap(),
            generate(&cartesian(0.3, 2), 128, 128).unwrap()
        );
    }

    #[test]
    fn rates_within_tolerance() {
        for size in [128, 256] {
            for rate in [0.3, 0.5, 1.0] {
                for pattern in Pattern::ALL {
                    let m = generate(&MaskSpec::new(pattern, rate, 5), size, size).unwrap();
                    assert!(
                        (m.achieved_rate() - rate).abs() <= RATE_TOLERANCE,
                        "{pattern} {rate} {size}: {}",
                        m.achieved_rate()
                    );
                    assert!(m.get(size / 2, size / 2));
                }
            }
        }
    }

    #[test]
    fn radial_is_point_symmetric() {
        let n = 128;
        for rate in [0.3, 0.5] {
            let m = gen_pseudo_radial(&radial(rate, 4), n, n).unwrap();
            let mut disagree = 0;
            for y in 1..n {
                for x in 1..n {
                    if m.get(y, x) != m.get(n - y, n - x) {
                        disagree += 1;
                    }
                }
            }
            assert!(disagree as f64 <= 0.005 * (n * n) as f64, "{disagree}");
        }
    }

    #[test]
    fn every_spoke_passes_through_dc() {
        let mut bits = vec![false; 64 * 64];
        rasterize_spoke(0.7, 64, 64, &mut bits);
        assert!(bits[32 * 64 + 32]);
        let count = bits.iter().filter(|&&b| b).count();
        assert!((60..=66).contains(&count), "{count}");
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(generate(&radial(1.5, 0), 64, 64), Err(Error::MaskSpec(_))));
        assert!(matches!(generate(&radial(0.0, 0), 64, 64), Err(Error::MaskSpec(_))));
        let mut spec = cartesian(0.05, 0);
        spec.center_fraction = 0.08;
        assert!(matches!(generate(&spec, 64, 64), Err(Error::MaskSpec(_))));
        assert!(matches!(
            gen_cartesian(&radial(0.3, 0), 64, 64),
            Err(Error::MaskSpec(_))
        ));
        // 0.3 of 8 rows cannot be hit within one percent
        assert!(matches!(generate(&cartesian(0.3, 0), 8, 8), Err(Error::MaskSpec(_))));
    }

    #[test]
    fn apply_mask_behaviour() {
        let data: Vec<Complex64> = (0..256).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let k = ComplexGrid::new(16, 16, Domain::Frequency, data).unwrap();
        assert_eq!(apply_mask(&k, &Mask::full(16, 16)).unwrap(), k);

        let mut bits = vec![false; 256];
        bits[8 * 16 + 8] = true;
        let dc = Mask::from_bits(16, 16, bits).unwrap();
        let out = apply_mask(&k, &dc).unwrap();
        assert_eq!(out.data().iter().filter(|z| z.norm() > 0.0).count(), 1);
        assert_eq!(out.get(8, 8), k.get(8, 8));

        let m = gen_cartesian(&cartesian(0.5, 2), 16, 16).unwrap();
        let once = apply_mask(&k, &m).unwrap();
        assert_eq!(apply_mask(&once, &m).unwrap(), once);

        assert!(apply_mask(&k, &Mask::full(8, 8)).is_err());
        let x = k.clone().with_domain(Domain::Spatial);
        assert!(matches!(apply_mask(&x, &m), Err(Error::Domain { .. })));
    }

    #[test]
    fn tensor_roundtrip() {
        let m = gen_pseudo_radial(&radial(0.3, 1), 64, 64).unwrap();
        assert_eq!(Mask::from_tensor(&m.to_tensor()).unwrap(), m);
    }
}
