//! CIFAR binary batches: c10 records are `label, 3072 pixels`; c100 records
//! are `coarse, fine, 3072 pixels`. Pixels are R, G, B planes of 32×32.

use std::path::{Path, PathBuf};

use crate::data::{Dataset, Normalization};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CIFAR_PIXELS: usize = 3 * 32 * 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarVariant {
    C10,
    C100,
}

impl CifarVariant {
    fn label_bytes(self) -> usize {
        match self {
            CifarVariant::C10 => 1,
            CifarVariant::C100 => 2,
        }
    }

    pub fn record_len(self) -> usize {
        self.label_bytes() + CIFAR_PIXELS
    }

    pub fn classes(self) -> usize {
        match self {
            CifarVariant::C10 => 10,
            CifarVariant::C100 => 100,
        }
    }

    /// Directory under the data root holding the binary batches.
    pub fn dir(self) -> &'static str {
        match self {
            CifarVariant::C10 => "cifar10",
            CifarVariant::C100 => "cifar100",
        }
    }

    fn files(self, train: bool) -> Vec<String> {
        match (self, train) {
            (CifarVariant::C10, true) => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
            (CifarVariant::C10, false) => vec!["test_batch.bin".into()],
            (CifarVariant::C100, true) => vec!["train.bin".into()],
            (CifarVariant::C100, false) => vec!["test.bin".into()],
        }
    }
}

/// Raw pixels and labels (the fine label for c100).
pub fn parse_cifar(bytes: &[u8], variant: CifarVariant) -> Result<(Vec<u8>, Vec<usize>)> {
    let rec = variant.record_len();
    if !bytes.len().is_multiple_of(rec) {
        let whole = bytes.len() / rec * rec;
        return Err(Error::Parse {
            offset: whole as u64,
            msg: format!("{} bytes is not a multiple of the {rec}-byte record", bytes.len()),
        });
    }
    let n = bytes.len() / rec;
    let mut pixels = Vec::with_capacity(n * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for (r, chunk) in bytes.chunks_exact(rec).enumerate() {
        let label = chunk[variant.label_bytes() - 1] as usize;
        if label >= variant.classes() {
            return Err(Error::Parse {
                offset: (r * rec + variant.label_bytes() - 1) as u64,
                msg: format!("label {label} outside 0..{}", variant.classes()),
            });
        }
        labels.push(label);
        pixels.extend_from_slice(&chunk[variant.label_bytes()..]);
    }
    Ok((pixels, labels))
}

fn channel_stats(pixels: &[u8]) -> (Vec<f64>, Vec<f64>) {
    let plane = 32 * 32;
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut count = 0usize;
    for img in pixels.chunks_exact(CIFAR_PIXELS) {
        for c in 0..3 {
            for &p in &img[c * plane..(c + 1) * plane] {
                let v = p as f64 / 255.0;
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        count += plane;
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let std = (0..3)
        .map(|c| (sq[c] / count as f64 - mean[c] * mean[c]).max(0.0).sqrt().max(1e-8))
        .collect();
    (mean, std)
}

fn build(
    name: &str,
    pixels: &[u8],
    labels: Vec<usize>,
    variant: CifarVariant,
    mean: &[f64],
    std: &[f64],
) -> Result<Dataset> {
    if labels.is_empty() {
        return Err(Error::Empty(format!("{name} holds no records")));
    }
    let plane = 32 * 32;
    let data = pixels
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let c = (i % CIFAR_PIXELS) / plane;
            (p as f64 / 255.0 - mean[c]) / std[c]
        })
        .collect();
    Dataset::new(
        name,
        Tensor::new(vec![labels.len(), CIFAR_PIXELS], data)?,
        labels,
        [3, 32, 32],
        variant.classes(),
        Normalization::Standardized {
            mean: mean.to_vec(),
            std: std.to_vec(),
        },
    )
}

fn read_all(paths: &[PathBuf], variant: CifarVariant) -> Result<(Vec<u8>, Vec<usize>)> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        if !p.exists() {
            return Err(Error::DataMissing { path: p.clone() });
        }
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        let (px, lb) = parse_cifar(&bytes, variant)?;
        pixels.extend(px);
        labels.extend(lb);
    }
    Ok((pixels, labels))
}

/// Concatenates the given batch files and standardizes each channel with
/// the statistics of those files.
pub fn load_cifar(paths: &[PathBuf], variant: CifarVariant) -> Result<Dataset> {
    let (pixels, labels) = read_all(paths, variant)?;
    let (mean, std) = channel_stats(&pixels);
    build(variant.dir(), &pixels, labels, variant, &mean, &std)
}

/// Train and test splits from `<root>/cifar10/` or `<root>/cifar100/`,
/// both standardized with the training statistics.
pub fn load_cifar_split(root: &Path, variant: CifarVariant) -> Result<(Dataset, Dataset)> {
    let dir = root.join(variant.dir());
    let paths = |train| {
        variant
            .files(train)
            .into_iter()
            .map(|f| dir.join(f))
            .collect::<Vec<_>>()
    };
    let (tp, tl) = read_all(&paths(true), variant)?;
    let (mean, std) = channel_stats(&tp);
    let train = build(&format!("{}-train", variant.dir()), &tp, tl, variant, &mean, &std)?;
    let (ep, el) = read_all(&paths(false), variant)?;
    let test = build(&format!("{}-test", variant.dir()), &ep, el, variant, &mean, &std)?;
    Ok((train, test))
}
