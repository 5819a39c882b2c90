//! Big-endian IDX containers (MNIST).

use std::path::Path;

use crate::data::{Dataset, Normalization};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Parse {
            offset: bytes.len() as u64,
            msg: format!("header truncated, wanted 4 bytes at offset {offset}"),
        })
}

/// `(count, rows, cols, pixels)` of an image file.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = 16 + n * rows * cols;
    if bytes.len() < need {
        return Err(Error::Parse {
            offset: bytes.len() as u64,
            msg: format!("image payload truncated: {} bytes, header promises {need}", bytes.len()),
        });
    }
    Ok((n, rows, cols, &bytes[16..need]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let n = be_u32(bytes, 4)? as usize;
    if bytes.len() < 8 + n {
        return Err(Error::Parse {
            offset: bytes.len() as u64,
            msg: format!(
                "label payload truncated: {} bytes, header promises {}",
                bytes.len(),
                8 + n
            ),
        });
    }
    Ok(&bytes[8..8 + n])
}

pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::DataMissing {
            path: path.to_path_buf(),
        });
    }
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an image/label IDX pair with pixels mapped onto `[-1, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = read(images_path)?;
    let lbl_bytes = read(labels_path)?;
    let (n, rows, cols, pixels) = parse_idx_images(&img_bytes)?;
    let labels = parse_idx_labels(&lbl_bytes)?;
    if labels.len() != n {
        return Err(Error::Parse {
            offset: 4,
            msg: format!("{n} images but {} labels", labels.len()),
        });
    }
    if n == 0 {
        return Err(Error::Empty(format!("{} holds no images", images_path.display())));
    }
    let data = pixels.iter().map(|&p| p as f64 / 255.0 * 2.0 - 1.0).collect();
    let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1).max(10);
    Dataset::new(
        images_path
            .file_name()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
        Tensor::new(vec![n, rows * cols], data)?,
        labels.iter().map(|&l| l as usize).collect(),
        [1, rows, cols],
        classes,
        Normalization::UnitInterval,
    )
}

/// MNIST train or test split from `<root>/mnist/`.
pub fn load_mnist(root: &Path, train: bool) -> Result<Dataset> {
    let dir = root.join("mnist");
    let (img, lbl) = if train {
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
    } else {
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    };
    let mut ds = load_idx(&dir.join(img), &dir.join(lbl))?;
    ds.name = if train { "mnist-train" } else { "mnist-test" }.into();
    Ok(ds)
}
