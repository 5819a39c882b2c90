//! KAN layer: every edge `i → j` computes
//! `φ_ij(x) = w_ij · silu(x) + Σ_k c_ijk · B_k(x)` and node `j` sums its
//! incoming edges.

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};
use crate::spline::{silu, silu_deriv, SplineGrid};

#[derive(Clone, Debug, PartialEq)]
pub struct KanLayer {
    in_dim: usize,
    out_dim: usize,
    grid: SplineGrid,
    /// `[out, in]`
    pub base: Tensor,
    /// `[out, in, K]`
    pub coeffs: Tensor,
}

/// Forward state kept for the backward pass and for activation-mass
/// accounting.
#[derive(Clone, Debug)]
pub struct KanCache {
    batch: usize,
    in_dim: usize,
    width: usize,
    starts: Vec<usize>,
    basis: Vec<f64>,
    dbasis: Vec<f64>,
    silu: Vec<f64>,
    dsilu: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct KanGrads {
    pub base: Tensor,
    pub coeffs: Tensor,
    pub input: Tensor,
}

impl KanCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    /// First active basis index and the active values for sample `b`, input `i`.
    pub fn active(&self, b: usize, i: usize) -> (usize, &[f64]) {
        let cell = b * self.in_dim + i;
        (
            self.starts[cell],
            &self.basis[cell * self.width..(cell + 1) * self.width],
        )
    }

    /// Sum over the batch of `|B_k(x_i)|`, shape `[in, K]`.
    pub fn basis_abs_sum(&self, basis_count: usize) -> Tensor {
        let mut out = Tensor::zeros(&[self.in_dim, basis_count]);
        let data = out.data_mut();
        for b in 0..self.batch {
            for i in 0..self.in_dim {
                let (start, vals) = self.active(b, i);
                for (r, v) in vals.iter().enumerate() {
                    data[i * basis_count + start + r] += v.abs();
                }
            }
        }
        out
    }
}

impl KanLayer {
    /// Spline coefficients ~ N(0, (0.1/√(d+1))²), base weights ~ N(0, 1/in).
    pub fn new(in_dim: usize, out_dim: usize, grid: SplineGrid, rng: &mut Rng) -> Self {
        let k = grid.basis_count();
        let coeff_std = 0.1 / ((grid.order() + 1) as f64).sqrt();
        let base_std = 1.0 / (in_dim as f64).sqrt();
        let base = Tensor::from_fn(&[out_dim, in_dim], |_| base_std * rng.normal());
        let coeffs = Tensor::from_fn(&[out_dim, in_dim, k], |_| coeff_std * rng.normal());
        Self {
            in_dim,
            out_dim,
            grid,
            base,
            coeffs,
        }
    }

    pub fn from_parts(grid: SplineGrid, base: Tensor, coeffs: Tensor) -> Result<Self> {
        if base.ndim() != 2 {
            return Err(Error::Dimension(format!(
                "KAN base weights must be [out,in], got {:?}",
                base.shape()
            )));
        }
        let (out_dim, in_dim) = (base.shape()[0], base.shape()[1]);
        if coeffs.shape() != [out_dim, in_dim, grid.basis_count()] {
            return Err(Error::Dimension(format!(
                "KAN coefficients {:?} do not match [{out_dim}, {in_dim}, {}]",
                coeffs.shape(),
                grid.basis_count()
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            grid,
            base,
            coeffs,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn grid(&self) -> &SplineGrid {
        &self.grid
    }

    pub fn param_count(&self) -> usize {
        self.base.len() + self.coeffs.len()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, KanCache)> {
        if x.ndim() != 2 || x.shape()[1] != self.in_dim {
            return Err(Error::Dimension(format!(
                "KAN layer expects [batch, {}], got {:?}",
                self.in_dim,
                x.shape()
            )));
        }
        x.ensure_finite("KAN input")?;
        let batch = x.shape()[0];
        let width = self.grid.active_count();
        let k = self.grid.basis_count();
        let cells = batch * self.in_dim;
        let mut cache = KanCache {
            batch,
            in_dim: self.in_dim,
            width,
            starts: vec![0; cells],
            basis: vec![0.0; cells * width],
            dbasis: vec![0.0; cells * width],
            silu: vec![0.0; cells],
            dsilu: vec![0.0; cells],
        };
        for (cell, &v) in x.data().iter().enumerate() {
            let span = cell * width..(cell + 1) * width;
            cache.starts[cell] =
                self.grid
                    .eval_active_with_deriv(v, &mut cache.basis[span.clone()], &mut cache.dbasis[span]);
            cache.silu[cell] = silu(v);
            cache.dsilu[cell] = silu_deriv(v);
        }

        let mut y = Tensor::zeros(&[batch, self.out_dim]);
        let base = self.base.data();
        let coeffs = self.coeffs.data();
        for b in 0..batch {
            let row = b * self.in_dim;
            for j in 0..self.out_dim {
                let mut acc = 0.0;
                for i in 0..self.in_dim {
                    let cell = row + i;
                    acc += base[j * self.in_dim + i] * cache.silu[cell];
                    let c0 = (j * self.in_dim + i) * k + cache.starts[cell];
                    let vals = &cache.basis[cell * width..(cell + 1) * width];
                    for (c, v) in coeffs[c0..c0 + width].iter().zip(vals) {
                        acc += c * v;
                    }
                }
                y.data_mut()[b * self.out_dim + j] = acc;
            }
        }
        Ok((y, cache))
    }

    pub fn backward(&self, cache: &KanCache, upstream: &Tensor) -> Result<KanGrads> {
        if cache.in_dim != self.in_dim
            || cache.width != self.grid.active_count()
            || upstream.shape() != [cache.batch, self.out_dim]
        {
            return Err(Error::Contract(format!(
                "KAN backward: cache for [{}, {}] and upstream {:?} do not match layer {}→{}",
                cache.batch,
                cache.in_dim,
                upstream.shape(),
                self.in_dim,
                self.out_dim
            )));
        }
        let k = self.grid.basis_count();
        let width = cache.width;
        let mut d_base = Tensor::zeros(self.base.shape());
        let mut d_coeffs = Tensor::zeros(self.coeffs.shape());
        let mut d_input = Tensor::zeros(&[cache.batch, self.in_dim]);
        let base = self.base.data();
        let coeffs = self.coeffs.data();
        let up = upstream.data();
        {
            let db = d_base.data_mut();
            let dc = d_coeffs.data_mut();
            let dx = d_input.data_mut();
            for b in 0..cache.batch {
                let row = b * self.in_dim;
                for j in 0..self.out_dim {
                    let g = up[b * self.out_dim + j];
                    if g == 0.0 {
                        continue;
                    }
                    for i in 0..self.in_dim {
                        let cell = row + i;
                        let edge = j * self.in_dim + i;
                        db[edge] += g * cache.silu[cell];
                        let c0 = edge * k + cache.starts[cell];
                        let vals = &cache.basis[cell * width..(cell + 1) * width];
                        let ders = &cache.dbasis[cell * width..(cell + 1) * width];
                        let mut slope = base[edge] * cache.dsilu[cell];
                        for r in 0..width {
                            dc[c0 + r] += g * vals[r];
                            slope += coeffs[c0 + r] * ders[r];
                        }
                        dx[cell] += g * slope;
                    }
                }
            }
        }
        Ok(KanGrads {
            base: d_base,
            coeffs: d_coeffs,
            input: d_input,
        })
    }
}
