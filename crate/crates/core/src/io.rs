//! On-disk formats: `KSD1` tensors, 8-bit PGM images and the dataset manifest.
//!
//! `KSD1` layout (little-endian):
//!
//! ```text
//! b"KSD1", u32 channels, u32 height, u32 width, u32 domain (0 spatial, 1 frequency)
//! channels·height·width f32 values, channel-major then row-major
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kspace::{ComplexGrid, Domain};
use crate::sampling::{MaskSpec, Pattern};
use crate::tensor::Tensor;

pub const KSD_MAGIC: &[u8; 4] = b"KSD1";
const KSD_HEADER: usize = 20;

pub fn encode_ksd1(t: &Tensor<f32>, domain: Domain) -> Vec<u8> {
    let mut out = Vec::with_capacity(KSD_HEADER + 4 * t.data().len());
    out.extend_from_slice(KSD_MAGIC);
    for v in [t.channels() as u32, t.height() as u32, t.width() as u32, domain.tag()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_ksd1(bytes: &[u8], origin: &Path) -> Result<(Tensor<f32>, Domain)> {
    if bytes.len() < KSD_HEADER || &bytes[..4] != KSD_MAGIC {
        return Err(Error::format(origin, "missing KSD1 header"));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (c, h, w) = (field(0), field(1), field(2));
    let domain = Domain::from_tag(field(3) as u32)
        .ok_or_else(|| Error::format(origin, format!("unknown domain tag {}", field(3))))?;
    let n = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::format(origin, format!("invalid shape {c}x{h}x{w}")))?;
    if bytes.len() != KSD_HEADER + 4 * n {
        return Err(Error::format(
            origin,
            format!("expected {} data bytes, found {}", 4 * n, bytes.len() - KSD_HEADER),
        ));
    }
    let data = bytes[KSD_HEADER..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    let t = Tensor::from_vec(c, h, w, data).map_err(|e| Error::format(origin, e.to_string()))?;
    Ok((t, domain))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_ksd1(path: &Path, t: &Tensor<f32>, domain: Domain) -> Result<()> {
    write_bytes(path, &encode_ksd1(t, domain))
}

pub fn read_ksd1(path: &Path) -> Result<(Tensor<f32>, Domain)> {
    decode_ksd1(&read_bytes(path)?, path)
}

/// Stores a complex grid as a 2-channel (real, imaginary) `KSD1` file.
pub fn write_grid(path: &Path, grid: &ComplexGrid) -> Result<()> {
    write_ksd1(path, &crate::kspace::split_complex(grid).cast(), grid.domain())
}

pub fn read_grid(path: &Path) -> Result<ComplexGrid> {
    let (t, domain) = read_ksd1(path)?;
    if t.channels() != 2 {
        return Err(Error::format(
            path,
            format!("complex grid needs 2 channels, found {}", t.channels()),
        ));
    }
    let (re, im) = (t.channel(0), t.channel(1));
    let data = re
        .iter()
        .zip(im)
        .map(|(&a, &b)| Complex64::new(a as f64, b as f64))
        .collect();
    ComplexGrid::new(t.height(), t.width(), domain, data).map_err(|e| Error::format(path, e.to_string()))
}

/// Binary 8-bit PGM, scaled so the maximum maps to 255.
pub fn encode_pgm(height: usize, width: usize, values: &[f64]) -> Vec<u8> {
    let max = values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if max > 0.0 && v.is_finite() {
            (v.max(0.0) / max * 255.0).round().min(255.0) as u8
        } else {
            0
        }
    }));
    out
}

pub fn write_pgm(path: &Path, height: usize, width: usize, values: &[f64]) -> Result<()> {
    write_bytes(path, &encode_pgm(height, width, values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

/// One simulated slice: seeds, degradation settings, mask, scale and files.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceRecord {
    pub index: usize,
    pub split: Split,
    pub size: usize,
    pub phantom_seed: u64,
    pub degrade_seed: u64,
    pub noise_sigma: f64,
    pub lowpass_fraction: f64,
    pub mask: MaskSpec,
    /// Normalization scale of the undersampled input.
    pub scale: f64,
    /// Normalized undersampled low-field k-space.
    pub input: PathBuf,
    /// High-field k-space on the input's scale.
    pub target: PathBuf,
    /// Fully sampled low-field k-space, unnormalized.
    pub lf: PathBuf,
}

impl fmt::Display for SliceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "index={} split={} size={} phantom_seed={} degrade_seed={} noise_sigma={} lowpass_fraction={} \
             pattern={} rate={} mask_seed={} center_fraction={} scale={} input={} target={} lf={}",
            self.index,
            self.split.as_str(),
            self.size,
            self.phantom_seed,
            self.degrade_seed,
            self.noise_sigma,
            self.lowpass_fraction,
            self.mask.pattern,
            self.mask.target_rate,
            self.mask.seed,
            self.mask.center_fraction,
            self.scale,
            self.input.display(),
            self.target.display(),
            self.lf.display()
        )
    }
}

impl SliceRecord {
    pub fn parse(line: &str) -> std::result::Result<Self, String> {
        let mut fields = std::collections::HashMap::new();
        for token in line.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| format!("field {token:?} is not key=value"))?;
            if fields.insert(k, v).is_some() {
                return Err(format!("duplicate field {k}"));
            }
        }
        fn get<'a>(fields: &std::collections::HashMap<&str, &'a str>, k: &str) -> std::result::Result<&'a str, String> {
            fields.get(k).copied().ok_or_else(|| format!("missing field {k}"))
        }
        fn num<T: FromStr>(fields: &std::collections::HashMap<&str, &str>, k: &str) -> std::result::Result<T, String> {
            let v = get(fields, k)?;
            v.parse().map_err(|_| format!("bad value {v:?} for {k}"))
        }
        let pattern: Pattern = get(&fields, "pattern")?.parse().map_err(|e: Error| e.to_string())?;
        let rec = Self {
            index: num(&fields, "index")?,
            split: get(&fields, "split")?.parse().map_err(|e: Error| e.to_string())?,
            size: num(&fields, "size")?,
            phantom_seed: num(&fields, "phantom_seed")?,
            degrade_seed: num(&fields, "degrade_seed")?,
            noise_sigma: num(&fields, "noise_sigma")?,
            lowpass_fraction: num(&fields, "lowpass_fraction")?,
            mask: MaskSpec {
                pattern,
                target_rate: num(&fields, "rate")?,
                seed: num(&fields, "mask_seed")?,
                center_fraction: num(&fields, "center_fraction")?,
            },
            scale: num(&fields, "scale")?,
            input: get(&fields, "input")?.into(),
            target: get(&fields, "target")?.into(),
            lf: get(&fields, "lf")?.into(),
        };
        let known = [
            "index", "split", "size", "phantom_seed", "degrade_seed", "noise_sigma", "lowpass_fraction", "pattern",
            "rate", "mask_seed", "center_fraction", "scale", "input", "target", "lf",
        ];
        if let Some(k) = fields.keys().find(|k| !known.contains(k)) {
            return Err(format!("unknown field {k}"));
        }
        Ok(rec)
    }
}

/// One [`SliceRecord`] per line; file paths are relative to the manifest's directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<SliceRecord>,
}

impl Manifest {
    pub const FILE_NAME: &'static str = "manifest.txt";

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SliceRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn to_text(&self) -> String {
        self.records.iter().map(|r| format!("{r}\n")).collect()
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| SliceRecord::parse(l).map_err(|e| Error::format(origin, format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { records })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(Self::FILE_NAME);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text, &path)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_bytes(&dir.join(Self::FILE_NAME), self.to_text().as_bytes())
    }
}
