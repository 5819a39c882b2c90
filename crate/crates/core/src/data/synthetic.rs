//! Seeded procedural images in the CIFAR-10 binary record layout, for
//! exercising the CIFAR pipeline when the real batches are unavailable.
//!
//! Four classes: 0/1 differ by stripe orientation (horizontal/vertical) with
//! a random tint, 2/3 differ by tint (red/blue) with a random orientation.
//! A model that learns 2-vs-3 is pushed to ignore orientation, which is what
//! 0-vs-1 relies on.

use std::path::Path;

use crate::data::CIFAR_PIXELS;
use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const PROCEDURAL_CLASSES: usize = 4;

fn image(class: usize, rng: &mut Rng, out: &mut Vec<u8>) {
    let vertical = match class {
        0 => false,
        1 => true,
        _ => rng.below(2) == 1,
    };
    let tint: [f64; 3] = match class {
        2 => [0.85, 0.3, 0.25],
        3 => [0.25, 0.3, 0.85],
        _ => {
            let g = rng.uniform_in(0.35, 0.65);
            [g + rng.uniform_in(-0.1, 0.1), g, g + rng.uniform_in(-0.1, 0.1)]
        }
    };
    let period = 4.0 + rng.uniform_in(0.0, 4.0);
    let phase = rng.uniform_in(0.0, std::f64::consts::TAU);
    let mut plane = [0.0f64; 1024];
    for y in 0..32 {
        for x in 0..32 {
            let t = if vertical { x } else { y } as f64;
            plane[y * 32 + x] = 0.5 + 0.35 * (std::f64::consts::TAU * t / period + phase).sin();
        }
    }
    for tc in tint {
        for &p in &plane {
            let v = tc * p + 0.08 * rng.normal();
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
}

/// `per_class` records of each procedural class, interleaved by class.
pub fn procedural_cifar10_records(per_class: usize, seed: u64) -> Vec<u8> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(per_class * PROCEDURAL_CLASSES * (CIFAR_PIXELS + 1));
    for _ in 0..per_class {
        for class in 0..PROCEDURAL_CLASSES {
            out.push(class as u8);
            image(class, &mut rng, &mut out);
        }
    }
    out
}

/// Writes `data_batch_{1..5}.bin` and `test_batch.bin` under `dir`.
pub fn write_procedural_cifar10(dir: &Path, train_per_class: usize, test_per_class: usize, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rec = CIFAR_PIXELS + 1;
    let train = procedural_cifar10_records(train_per_class, seed);
    let records: Vec<&[u8]> = train.chunks(rec).collect();
    for b in 0..5 {
        let bytes: Vec<u8> = records
            .iter()
            .skip(b)
            .step_by(5)
            .flat_map(|r| r.iter().copied())
            .collect();
        let p = dir.join(format!("data_batch_{}.bin", b + 1));
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }
    let p = dir.join("test_batch.bin");
    std::fs::write(&p, procedural_cifar10_records(test_per_class, seed ^ 0x5eed)).map_err(|e| Error::io(&p, e))
}
