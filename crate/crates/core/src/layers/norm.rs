//! Per-sample layer normalization followed by `tanh`, which keeps features
//! fed to a spline head inside the open interval `(-1, 1)`.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureNormalizer {
    pub gamma: Tensor,
    pub beta: Tensor,
}

#[derive(Clone, Debug)]
pub struct NormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    output: Tensor,
}

#[derive(Clone, Debug)]
pub struct NormGrads {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub input: Tensor,
}

impl FeatureNormalizer {
    /// Unit scale, zero shift.
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Tensor::full(&[dim], 1.0),
            beta: Tensor::zeros(&[dim]),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, z: &Tensor) -> Result<(Tensor, NormCache)> {
        let d = self.dim();
        if z.ndim() != 2 || z.shape()[1] != d {
            return Err(Error::Dimension(format!(
                "feature normalizer expects [batch, {d}], got {:?}",
                z.shape()
            )));
        }
        let batch = z.shape()[0];
        let mut xhat = vec![0.0; batch * d];
        let mut out = vec![0.0; batch * d];
        let mut inv_std = Vec::with_capacity(batch);
        let (g, b) = (self.gamma.data(), self.beta.data());
        for (r, row) in z.data().chunks(d).enumerate() {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for c in 0..d {
                let xh = (row[c] - mean) * is;
                xhat[r * d + c] = xh;
                out[r * d + c] = (g[c] * xh + b[c]).tanh();
            }
        }
        let output = Tensor::new(vec![batch, d], out)?;
        Ok((
            output.clone(),
            NormCache {
                xhat: Tensor::new(vec![batch, d], xhat)?,
                inv_std,
                output,
            },
        ))
    }

    pub fn backward(&self, cache: &NormCache, upstream: &Tensor) -> Result<NormGrads> {
        let d = self.dim();
        if upstream.shape() != cache.output.shape() || cache.xhat.shape()[1] != d {
            return Err(Error::Contract(format!(
                "feature normalizer backward: upstream {:?} vs cached {:?}",
                upstream.shape(),
                cache.output.shape()
            )));
        }
        let batch = upstream.shape()[0];
        let mut dg = vec![0.0; d];
        let mut db = vec![0.0; d];
        let mut dz = vec![0.0; batch * d];
        let g = self.gamma.data();
        let mut dxhat = vec![0.0; d];
        for r in 0..batch {
            let xh = cache.xhat.row(r);
            let y = cache.output.row(r);
            let up = upstream.row(r);
            let (mut mean_dx, mut mean_dx_xh) = (0.0, 0.0);
            for c in 0..d {
                let da = up[c] * (1.0 - y[c] * y[c]);
                dg[c] += da * xh[c];
                db[c] += da;
                dxhat[c] = da * g[c];
                mean_dx += dxhat[c];
                mean_dx_xh += dxhat[c] * xh[c];
            }
            mean_dx /= d as f64;
            mean_dx_xh /= d as f64;
            let is = cache.inv_std[r];
            for c in 0..d {
                dz[r * d + c] = is * (dxhat[c] - mean_dx - xh[c] * mean_dx_xh);
            }
        }
        Ok(NormGrads {
            gamma: Tensor::new(vec![d], dg)?,
            beta: Tensor::new(vec![d], db)?,
            input: Tensor::new(vec![batch, d], dz)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, Rng};

    #[test]
    fn output_strictly_inside_unit_interval() {
        let mut rng = Rng::new(2);
        let n = FeatureNormalizer::new(16);
        let z = Tensor::from_fn(&[32, 16], |_| 50.0 * rng.normal());
        let (y, _) = n.forward(&z).unwrap();
        assert!(y.max_abs() < 1.0);
    }

    #[test]
    fn gradients_pass_grad_check() {
        for seed in 0..5 {
            let mut rng = Rng::new(seed);
            let mut base = FeatureNormalizer::new(6);
            base.gamma = Tensor::from_fn(&[6], |_| 1.0 + 0.3 * rng.normal());
            base.beta = Tensor::from_fn(&[6], |_| 0.2 * rng.normal());
            let z = Tensor::from_fn(&[4, 6], |_| rng.normal());
            let r = Tensor::from_fn(&[4, 6], |_| rng.normal());
            let run = |n: &FeatureNormalizer, z: &Tensor| -> Result<(f64, NormGrads)> {
                let (y, c) = n.forward(z)?;
                Ok((y.dot(&r)?, n.backward(&c, &r)?))
            };
            let ez = grad_check(|zz| run(&base, zz).map(|(v, g)| (v, g.input)), &z, 1e-5).unwrap();
            let eg = grad_check(
                |gg| {
                    let mut n = base.clone();
                    n.gamma = gg.clone();
                    run(&n, &z).map(|(v, g)| (v, g.gamma))
                },
                &base.gamma,
                1e-5,
            )
            .unwrap();
            let eb = grad_check(
                |bb| {
                    let mut n = base.clone();
                    n.beta = bb.clone();
                    run(&n, &z).map(|(v, g)| (v, g.beta))
                },
                &base.beta,
                1e-5,
            )
            .unwrap();
            assert!(ez < 1e-4 && eg < 1e-4 && eb < 1e-4, "{ez} {eg} {eb}");
        }
    }
}
