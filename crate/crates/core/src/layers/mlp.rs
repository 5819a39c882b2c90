use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gemm, Layout, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Dense layer `y = act(x Wᵀ + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpLayer {
    /// `[out, in]`
    pub weights: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    input: Tensor,
    output: Tensor,
}

#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub weights: Tensor,
    pub bias: Tensor,
    pub input: Tensor,
}

impl MlpLayer {
    /// Weights ~ N(0, 1/in), zero bias.
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Rng) -> Self {
        let std = 1.0 / (in_dim as f64).sqrt();
        Self {
            weights: Tensor::from_fn(&[out_dim, in_dim], |_| std * rng.normal()),
            bias: Tensor::zeros(&[out_dim]),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, MlpCache)> {
        let (n_in, n_out) = (self.in_dim(), self.out_dim());
        if x.ndim() != 2 || x.shape()[1] != n_in {
            return Err(Error::Dimension(format!(
                "dense layer expects [batch, {n_in}], got {:?}",
                x.shape()
            )));
        }
        let batch = x.shape()[0];
        let mut z = vec![0.0; batch * n_out];
        for row in z.chunks_mut(n_out) {
            row.copy_from_slice(self.bias.data());
        }
        gemm(
            batch,
            n_in,
            n_out,
            1.0,
            x.data(),
            Layout::Normal,
            self.weights.data(),
            Layout::Transposed,
            1.0,
            &mut z,
        );
        let act = self.activation;
        z.iter_mut().for_each(|v| *v = act.apply(*v));
        let y = Tensor::new(vec![batch, n_out], z)?;
        Ok((
            y.clone(),
            MlpCache {
                input: x.clone(),
                output: y,
            },
        ))
    }

    pub fn backward(&self, cache: &MlpCache, upstream: &Tensor) -> Result<MlpGrads> {
        let (n_in, n_out) = (self.in_dim(), self.out_dim());
        if upstream.shape() != cache.output.shape() || cache.input.shape()[1] != n_in {
            return Err(Error::Contract(format!(
                "dense backward: upstream {:?} vs cached output {:?}",
                upstream.shape(),
                cache.output.shape()
            )));
        }
        let batch = upstream.shape()[0];
        let act = self.activation;
        let dz: Vec<f64> = upstream
            .data()
            .iter()
            .zip(cache.output.data())
            .map(|(g, y)| g * act.deriv_from_output(*y))
            .collect();
        let mut dw = vec![0.0; n_out * n_in];
        gemm(
            n_out,
            batch,
            n_in,
            1.0,
            &dz,
            Layout::Transposed,
            cache.input.data(),
            Layout::Normal,
            0.0,
            &mut dw,
        );
        let mut db = vec![0.0; n_out];
        for row in dz.chunks(n_out) {
            for (a, b) in db.iter_mut().zip(row) {
                *a += b;
            }
        }
        let mut dx = vec![0.0; batch * n_in];
        gemm(
            batch,
            n_out,
            n_in,
            1.0,
            &dz,
            Layout::Normal,
            self.weights.data(),
            Layout::Normal,
            0.0,
            &mut dx,
        );
        Ok(MlpGrads {
            weights: Tensor::new(vec![n_out, n_in], dw)?,
            bias: Tensor::new(vec![n_out], db)?,
            input: Tensor::new(vec![batch, n_in], dx)?,
        })
    }
}
