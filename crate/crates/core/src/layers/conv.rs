//! Convolutional backbone pieces: 2-D convolution, residual block, global
//! average pooling and the small CIFAR-style backbone built from them.
//!
//! Feature maps are `[batch, channels, height, width]`, row-major.

use crate::error::{Error, Result};
use crate::layers::mlp::{Activation, MlpCache, MlpLayer};
use crate::numerics::{gemm, Layout, Rng, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    /// `[out, in, k, k]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Debug)]
pub struct ConvCache {
    input: Tensor,
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub weight: Tensor,
    pub bias: Tensor,
    pub input: Tensor,
}

impl Conv2d {
    /// He-normal weights, zero bias.
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize, rng: &mut Rng) -> Self {
        let fan_in = (in_ch * kernel * kernel) as f64;
        let std = (2.0 / fan_in).sqrt();
        Self {
            weight: Tensor::from_fn(&[out_ch, in_ch, kernel, kernel], |_| std * rng.normal()),
            bias: Tensor::zeros(&[out_ch]),
            stride,
            pad,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel();
        (
            (h + 2 * self.pad - k) / self.stride + 1,
            (w + 2 * self.pad - k) / self.stride + 1,
        )
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        if x.ndim() != 4 || x.shape()[1] != self.in_channels() {
            return Err(Error::Dimension(format!(
                "conv expects [batch, {}, h, w], got {:?}",
                self.in_channels(),
                x.shape()
            )));
        }
        let (h, w) = (x.shape()[2], x.shape()[3]);
        if h + 2 * self.pad < self.kernel() || w + 2 * self.pad < self.kernel() {
            return Err(Error::Dimension(format!(
                "conv kernel larger than padded input {h}x{w}"
            )));
        }
        Ok((x.shape()[0], h, w))
    }

    fn im2col(&self, sample: &[f64], h: usize, w: usize, cols: &mut [f64]) {
        let (k, s, p) = (self.kernel(), self.stride, self.pad as isize);
        let (oh, ow) = self.output_hw(h, w);
        for c in 0..self.in_channels() {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * oh * ow;
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        for ox in 0..ow {
                            let ix = (ox * s + kx) as isize - p;
                            cols[row + oy * ow + ox] = if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                sample[(c * h + iy as usize) * w + ix as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[f64], h: usize, w: usize, sample: &mut [f64]) {
        let (k, s, p) = (self.kernel(), self.stride, self.pad as isize);
        let (oh, ow) = self.output_hw(h, w);
        for c in 0..self.in_channels() {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * oh * ow;
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && (ix as usize) < w {
                                sample[(c * h + iy as usize) * w + ix as usize] += cols[row + oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ConvCache)> {
        let (batch, h, w) = self.check_input(x)?;
        let (oh, ow) = self.output_hw(h, w);
        let (cin, cout, k) = (self.in_channels(), self.out_channels(), self.kernel());
        let ckk = cin * k * k;
        let in_len = cin * h * w;
        let out_len = cout * oh * ow;
        let mut out = vec![0.0; batch * out_len];
        let mut cols = vec![0.0; ckk * oh * ow];
        for b in 0..batch {
            self.im2col(&x.data()[b * in_len..(b + 1) * in_len], h, w, &mut cols);
            let dst = &mut out[b * out_len..(b + 1) * out_len];
            for (o, chunk) in dst.chunks_mut(oh * ow).enumerate() {
                chunk.fill(self.bias.data()[o]);
            }
            gemm(
                cout,
                ckk,
                oh * ow,
                1.0,
                self.weight.data(),
                Layout::Normal,
                &cols,
                Layout::Normal,
                1.0,
                dst,
            );
        }
        Ok((
            Tensor::new(vec![batch, cout, oh, ow], out)?,
            ConvCache { input: x.clone() },
        ))
    }

    pub fn backward(&self, cache: &ConvCache, upstream: &Tensor) -> Result<ConvGrads> {
        let x = &cache.input;
        let (batch, h, w) = self.check_input(x)?;
        let (oh, ow) = self.output_hw(h, w);
        let (cin, cout, k) = (self.in_channels(), self.out_channels(), self.kernel());
        if upstream.shape() != [batch, cout, oh, ow] {
            return Err(Error::Contract(format!(
                "conv backward: upstream {:?}, expected [{batch}, {cout}, {oh}, {ow}]",
                upstream.shape()
            )));
        }
        let ckk = cin * k * k;
        let in_len = cin * h * w;
        let out_len = cout * oh * ow;
        let mut dw = vec![0.0; cout * ckk];
        let mut db = vec![0.0; cout];
        let mut dx = vec![0.0; batch * in_len];
        let mut cols = vec![0.0; ckk * oh * ow];
        let mut dcols = vec![0.0; ckk * oh * ow];
        for b in 0..batch {
            let g = &upstream.data()[b * out_len..(b + 1) * out_len];
            for (o, chunk) in g.chunks(oh * ow).enumerate() {
                db[o] += chunk.iter().sum::<f64>();
            }
            self.im2col(&x.data()[b * in_len..(b + 1) * in_len], h, w, &mut cols);
            gemm(
                cout,
                oh * ow,
                ckk,
                1.0,
                g,
                Layout::Normal,
                &cols,
                Layout::Transposed,
                1.0,
                &mut dw,
            );
            gemm(
                ckk,
                cout,
                oh * ow,
                1.0,
                self.weight.data(),
                Layout::Transposed,
                g,
                Layout::Normal,
                0.0,
                &mut dcols,
            );
            self.col2im_add(&dcols, h, w, &mut dx[b * in_len..(b + 1) * in_len]);
        }
        Ok(ConvGrads {
            weight: Tensor::new(self.weight.shape().to_vec(), dw)?,
            bias: Tensor::new(vec![cout], db)?,
            input: Tensor::new(x.shape().to_vec(), dx)?,
        })
    }
}

fn relu(t: &Tensor) -> Tensor {
    t.map(|v| v.max(0.0))
}

/// Multiplies `upstream` by the ReLU derivative recovered from the ReLU output.
fn relu_back(output: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    upstream.zip_map(output, |g, y| if y > 0.0 { g } else { 0.0 })
}

/// `relu(conv2(relu(conv1(x))) + shortcut(x))`; the shortcut is a strided
/// 1×1 convolution when the block changes resolution or width.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub shortcut: Option<Conv2d>,
}

#[derive(Clone, Debug)]
pub struct ResidualCache {
    c1: ConvCache,
    a1: Tensor,
    c2: ConvCache,
    sc: Option<ConvCache>,
    out: Tensor,
}

#[derive(Clone, Debug)]
pub struct ResidualGrads {
    pub conv1: ConvGrads,
    pub conv2: ConvGrads,
    pub shortcut: Option<ConvGrads>,
    pub input: Tensor,
}

impl ResidualBlock {
    pub fn new(in_ch: usize, out_ch: usize, stride: usize, rng: &mut Rng) -> Self {
        let conv1 = Conv2d::new(in_ch, out_ch, 3, stride, 1, rng);
        let conv2 = Conv2d::new(out_ch, out_ch, 3, 1, 1, rng);
        let shortcut = (stride != 1 || in_ch != out_ch).then(|| Conv2d::new(in_ch, out_ch, 1, stride, 0, rng));
        Self { conv1, conv2, shortcut }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ResidualCache)> {
        let (z1, c1) = self.conv1.forward(x)?;
        let a1 = relu(&z1);
        let (z2, c2) = self.conv2.forward(&a1)?;
        let (skip, sc) = match &self.shortcut {
            Some(conv) => {
                let (s, c) = conv.forward(x)?;
                (s, Some(c))
            }
            None => (x.clone(), None),
        };
        let out = relu(&z2.add(&skip)?);
        Ok((out.clone(), ResidualCache { c1, a1, c2, sc, out }))
    }

    pub fn backward(&self, cache: &ResidualCache, upstream: &Tensor) -> Result<ResidualGrads> {
        let dsum = relu_back(&cache.out, upstream)?;
        let g2 = self.conv2.backward(&cache.c2, &dsum)?;
        let da1 = relu_back(&cache.a1, &g2.input)?;
        let g1 = self.conv1.backward(&cache.c1, &da1)?;
        let mut input = g1.input.clone();
        let shortcut = match (&self.shortcut, &cache.sc) {
            (Some(conv), Some(sc)) => {
                let gs = conv.backward(sc, &dsum)?;
                input.add_assign(&gs.input)?;
                Some(gs)
            }
            (None, None) => {
                input.add_assign(&dsum)?;
                None
            }
            _ => return Err(Error::Contract("residual cache/shortcut mismatch".into())),
        };
        Ok(ResidualGrads {
            conv1: g1,
            conv2: g2,
            shortcut,
            input,
        })
    }
}

/// Global average pooling `[b, c, h, w] → [b, c]`.
pub fn gap_forward(x: &Tensor) -> Result<Tensor> {
    if x.ndim() != 4 {
        return Err(Error::Dimension(format!("GAP expects [b,c,h,w], got {:?}", x.shape())));
    }
    let (b, c) = (x.shape()[0], x.shape()[1]);
    let hw = x.shape()[2] * x.shape()[3];
    let data = x
        .data()
        .chunks(hw)
        .map(|ch| ch.iter().sum::<f64>() / hw as f64)
        .collect();
    Tensor::new(vec![b, c], data)
}

pub fn gap_backward(input_shape: &[usize], upstream: &Tensor) -> Result<Tensor> {
    if input_shape.len() != 4 || upstream.shape() != [input_shape[0], input_shape[1]] {
        return Err(Error::Contract(format!(
            "GAP backward: upstream {:?} vs input {:?}",
            upstream.shape(),
            input_shape
        )));
    }
    let hw = input_shape[2] * input_shape[3];
    let mut data = Vec::with_capacity(upstream.len() * hw);
    for &g in upstream.data() {
        data.extend(std::iter::repeat_n(g / hw as f64, hw));
    }
    Tensor::new(input_shape.to_vec(), data)
}

/// Stem conv, residual stages with stride-2 transitions, GAP, linear
/// projection to the feature width.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnBackbone {
    pub input_shape: [usize; 3],
    pub stem: Conv2d,
    pub stages: Vec<ResidualBlock>,
    pub proj: MlpLayer,
}

#[derive(Clone, Debug)]
pub struct BackboneCache {
    stem: ConvCache,
    stem_out: Tensor,
    stages: Vec<ResidualCache>,
    pooled_shape: Vec<usize>,
    proj: MlpCache,
}

#[derive(Clone, Debug)]
pub struct BackboneGrads {
    pub stem: ConvGrads,
    pub stages: Vec<ResidualGrads>,
    pub proj_weights: Tensor,
    pub proj_bias: Tensor,
}

impl CnnBackbone {
    pub fn new(input_shape: [usize; 3], widths: &[usize], feature_dim: usize, rng: &mut Rng) -> Result<Self> {
        let first = *widths
            .first()
            .ok_or_else(|| Error::Config("backbone needs at least one stage width".into()))?;
        let stem = Conv2d::new(input_shape[0], first, 3, 1, 1, rng);
        let mut stages = Vec::with_capacity(widths.len());
        let mut prev = first;
        for (s, &w) in widths.iter().enumerate() {
            let stride = if s == 0 { 1 } else { 2 };
            stages.push(ResidualBlock::new(prev, w, stride, rng));
            prev = w;
        }
        let proj = MlpLayer::new(prev, feature_dim, Activation::Identity, rng);
        Ok(Self {
            input_shape,
            stem,
            stages,
            proj,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.proj.out_dim()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, BackboneCache)> {
        let [c, h, w] = self.input_shape;
        if x.ndim() != 2 || x.shape()[1] != c * h * w {
            return Err(Error::Dimension(format!(
                "backbone expects [batch, {}], got {:?}",
                c * h * w,
                x.shape()
            )));
        }
        let img = x.clone().reshape(&[x.shape()[0], c, h, w])?;
        let (z, stem) = self.stem.forward(&img)?;
        let stem_out = relu(&z);
        let mut cur = stem_out.clone();
        let mut stages = Vec::with_capacity(self.stages.len());
        for block in &self.stages {
            let (next, cache) = block.forward(&cur)?;
            stages.push(cache);
            cur = next;
        }
        let pooled_shape = cur.shape().to_vec();
        let pooled = gap_forward(&cur)?;
        let (feat, proj) = self.proj.forward(&pooled)?;
        Ok((
            feat,
            BackboneCache {
                stem,
                stem_out,
                stages,
                pooled_shape,
                proj,
            },
        ))
    }

    pub fn backward(&self, cache: &BackboneCache, upstream: &Tensor) -> Result<BackboneGrads> {
        let gp = self.proj.backward(&cache.proj, upstream)?;
        let mut g = gap_backward(&cache.pooled_shape, &gp.input)?;
        let mut stage_grads = Vec::with_capacity(self.stages.len());
        for (block, bc) in self.stages.iter().zip(&cache.stages).rev() {
            let gb = block.backward(bc, &g)?;
            g = gb.input.clone();
            stage_grads.push(gb);
        }
        stage_grads.reverse();
        let g = relu_back(&cache.stem_out, &g)?;
        let stem = self.stem.backward(&cache.stem, &g)?;
        Ok(BackboneGrads {
            stem,
            stages: stage_grads,
            proj_weights: gp.weights,
            proj_bias: gp.bias,
        })
    }
}
