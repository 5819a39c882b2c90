use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

/// Feature permutation; `None` is the identity (first permuted task).
pub fn pixel_permutation(features: usize, seed: Option<u64>) -> Vec<usize> {
    match seed {
        None => (0..features).collect(),
        Some(s) => Rng::new(s).permutation(features),
    }
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (j, &p) in perm.iter().enumerate() {
        inv[p] = j;
    }
    inv
}

/// Output feature `j` takes input feature `perm[j]`.
pub fn permute_pixels(ds: &Dataset, perm: &[usize]) -> Result<Dataset> {
    let f = ds.features();
    let mut seen = vec![false; f];
    if perm.len() != f || !perm.iter().all(|&p| p < f && !std::mem::replace(&mut seen[p], true)) {
        return Err(Error::Contract(format!("not a permutation of {f} features")));
    }
    let mut data = Vec::with_capacity(ds.images.len());
    for r in 0..ds.len() {
        let row = ds.images.row(r);
        data.extend(perm.iter().map(|&p| row[p]));
    }
    Ok(Dataset {
        images: Tensor::new(ds.images.shape().to_vec(), data)?,
        labels: ds.labels.clone(),
        ..ds.clone_meta()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

/// Rotates every channel counter-clockwise by `degrees` about the image
/// centre. Pixels that sample outside the image get the value of a raw
/// zero byte.
pub fn rotate_images(ds: &Dataset, degrees: f64, interp: Interpolation) -> Result<Dataset> {
    if !degrees.is_finite() {
        return Err(Error::NonFinite(format!("rotation angle {degrees}")));
    }
    let [ch, h, w] = ds.image_shape;
    let (s, c) = degrees.to_radians().sin_cos();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    // Source coordinate of each output pixel, shared across images.
    let src: Vec<(f64, f64)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            (cx + c * dx - s * dy, cy + s * dx + c * dy)
        })
        .collect();
    let pads: Vec<f64> = (0..ch).map(|k| ds.normalization.zero_value(k)).collect();
    let mut data = Vec::with_capacity(ds.images.len());
    for r in 0..ds.len() {
        let img = ds.images.row(r);
        for k in 0..ch {
            let plane = &img[k * h * w..(k + 1) * h * w];
            let at = |x: isize, y: isize| -> f64 {
                if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
                    pads[k]
                } else {
                    plane[y as usize * w + x as usize]
                }
            };
            for &(sx, sy) in &src {
                let v = match interp {
                    Interpolation::Nearest => at(sx.round() as isize, sy.round() as isize),
                    Interpolation::Bilinear => {
                        let (x0, y0) = (sx.floor(), sy.floor());
                        let (fx, fy) = (sx - x0, sy - y0);
                        let (x0, y0) = (x0 as isize, y0 as isize);
                        (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x0 + 1, y0))
                            + fy * ((1.0 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1))
                    }
                };
                data.push(v);
            }
        }
    }
    Ok(Dataset {
        images: Tensor::new(ds.images.shape().to_vec(), data)?,
        labels: ds.labels.clone(),
        ..ds.clone_meta()
    })
}

/// Keeps examples whose label is in `class_set`; with `remap`, labels become
/// their position in `class_set` and the class count shrinks accordingly.
pub fn filter_classes(ds: &Dataset, class_set: &[usize], remap: bool) -> Result<Dataset> {
    if class_set.is_empty() {
        return Err(Error::Config("empty class set".into()));
    }
    let idx: Vec<usize> = (0..ds.len()).filter(|&i| class_set.contains(&ds.labels[i])).collect();
    let mut out = ds.subset(&idx)?;
    if remap {
        for l in &mut out.labels {
            *l = class_set.iter().position(|c| c == l).expect("filtered label");
        }
        out.classes = class_set.len();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Normalization;

    fn ds(images: Vec<f64>, shape: [usize; 3], labels: Vec<usize>) -> Dataset {
        let f = shape.iter().product();
        let n = labels.len();
        Dataset::new(
            "t",
            Tensor::new(vec![n, f], images).unwrap(),
            labels,
            shape,
            10,
            Normalization::UnitInterval,
        )
        .unwrap()
    }

    #[test]
    fn identity_permutation_is_noop_and_inverse_restores() {
        let mut rng = Rng::new(0);
        let d = ds((0..24).map(|_| rng.normal()).collect(), [1, 3, 4], vec![0, 1]);
        assert_eq!(permute_pixels(&d, &pixel_permutation(12, None)).unwrap(), d);
        let p = pixel_permutation(12, Some(9));
        let there = permute_pixels(&d, &p).unwrap();
        assert_ne!(there, d);
        assert_eq!(permute_pixels(&there, &inverse_permutation(&p)).unwrap(), d);
        assert!(permute_pixels(&d, &[0; 12]).is_err());
    }

    #[test]
    fn rotate_zero_is_identity() {
        let mut rng = Rng::new(1);
        let d = ds((0..50).map(|_| rng.uniform_in(-1.0, 1.0)).collect(), [2, 5, 5], vec![3]);
        let r = rotate_images(&d, 0.0, Interpolation::Bilinear).unwrap();
        for (a, b) in r.images.data().iter().zip(d.images.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rotate_90_two_by_two() {
        // [[a, b], [c, d]] turned a quarter counter-clockwise is [[b, d], [a, c]].
        let (a, b, c, d) = (0.1, 0.2, 0.3, 0.4);
        let img = ds(vec![a, b, c, d], [1, 2, 2], vec![0]);
        for interp in [Interpolation::Bilinear, Interpolation::Nearest] {
            let r = rotate_images(&img, 90.0, interp).unwrap();
            for (got, want) in r.images.data().iter().zip([b, d, a, c]) {
                assert!((got - want).abs() < 1e-12, "{interp:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn rotation_pads_with_black() {
        let img = ds(vec![1.0; 9], [1, 3, 3], vec![0]);
        let r = rotate_images(&img, 45.0, Interpolation::Nearest).unwrap();
        assert_eq!(r.images.data()[4], 1.0);
        let r = rotate_images(&img, 45.0, Interpolation::Bilinear).unwrap();
        assert!(r.images.data()[0] < 1.0);
    }

    #[test]
    fn filter_preserves_class_counts() {
        let d = ds(vec![0.0; 6], [1, 1, 1], vec![4, 2, 4, 7, 2, 4]);
        let f = filter_classes(&d, &[4, 7], false).unwrap();
        assert_eq!(f.class_counts()[4], 3);
        assert_eq!(f.class_counts()[7], 1);
        assert_eq!(f.len(), 4);
        let r = filter_classes(&d, &[4, 7], true).unwrap();
        assert_eq!(r.labels, vec![0, 0, 1, 0]);
        assert!(filter_classes(&d, &[], false).is_err());
    }
}
