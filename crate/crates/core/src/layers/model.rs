//! Composed classifiers and their path-named parameter registry.
//!
//! Every trainable tensor has exactly one path under `backbone.*`,
//! `feat_norm.*` or `head.*`. Gradients are returned as a `Vec<Tensor>`
//! aligned with [`Model::paths`].

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::conv::{BackboneCache, CnnBackbone};
use crate::layers::kan::{KanCache, KanLayer};
use crate::layers::mlp::{Activation, MlpCache, MlpLayer};
use crate::layers::norm::{FeatureNormalizer, NormCache};
use crate::numerics::{Rng, Tensor};
use crate::spline::SplineGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    PureKan,
    PureMlp,
    CnnKan,
    CnnMlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [Self::PureKan, Self::PureMlp, Self::CnnKan, Self::CnnMlp];

    pub fn name(self) -> &'static str {
        match self {
            Self::PureKan => "pure_kan",
            Self::PureMlp => "pure_mlp",
            Self::CnnKan => "cnn_kan",
            Self::CnnMlp => "cnn_mlp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }

    pub fn is_kan(self) -> bool {
        matches!(self, Self::PureKan | Self::CnnKan)
    }

    pub fn has_backbone(self) -> bool {
        matches!(self, Self::CnnKan | Self::CnnMlp)
    }

    /// The same trunk with the other head family.
    pub fn counterpart(self) -> Self {
        match self {
            Self::PureKan => Self::PureMlp,
            Self::PureMlp => Self::PureKan,
            Self::CnnKan => Self::CnnMlp,
            Self::CnnMlp => Self::CnnKan,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub kind: ModelKind,
    /// `[channels, height, width]` of one input example.
    pub input_shape: [usize; 3],
    /// Hidden widths of the head; the output layer has `classes` units.
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub grid: usize,
    pub order: usize,
    pub backbone_widths: Vec<usize>,
    pub feature_dim: usize,
    /// Widen MLP hidden layers so the head matches the KAN head's
    /// parameter count.
    pub match_params: bool,
}

impl ArchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.input_shape.contains(&0) {
            return Err(Error::Config(format!(
                "input shape {:?} has a zero axis",
                self.input_shape
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.grid == 0 {
            return Err(Error::Config("grid needs at least one interval".into()));
        }
        if self.kind.has_backbone() {
            if self.backbone_widths.is_empty() || self.backbone_widths.contains(&0) {
                return Err(Error::Config("backbone widths must be non-empty and positive".into()));
            }
            if self.feature_dim < 2 {
                return Err(Error::Config("feature_dim must be at least 2".into()));
            }
        }
        Ok(())
    }

    pub fn head_input_dim(&self) -> usize {
        if self.kind.has_backbone() {
            self.feature_dim
        } else {
            self.input_shape.iter().product()
        }
    }

    fn head_dims(&self, hidden: &[usize]) -> Vec<usize> {
        let mut dims = vec![self.head_input_dim()];
        dims.extend_from_slice(hidden);
        dims.push(self.classes);
        dims
    }

    /// Head parameter count of the KAN variant of this spec.
    pub fn kan_head_params(&self) -> usize {
        let k = self.grid + self.order;
        self.head_dims(&self.hidden)
            .windows(2)
            .map(|w| w[0] * w[1] * (k + 1))
            .sum()
    }

    pub fn mlp_head_params(&self, hidden: &[usize]) -> usize {
        self.head_dims(hidden).windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Hidden widths for an MLP head whose parameter count is closest to the
    /// KAN head of this spec, scaling every hidden layer by a common factor.
    pub fn matched_mlp_hidden(&self) -> Vec<usize> {
        if self.hidden.is_empty() {
            return Vec::new();
        }
        let target = self.kan_head_params() as f64;
        let widths = |s: f64| -> Vec<usize> {
            self.hidden
                .iter()
                .map(|&h| ((h as f64 * s).round() as usize).max(1))
                .collect()
        };
        let (mut lo, mut hi) = (1e-3f64, 1e4f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if (self.mlp_head_params(&widths(mid)) as f64) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let gap = |w: &Vec<usize>| (self.mlp_head_params(w) as f64 - target).abs();
        let mut best = widths(hi);
        if gap(&widths(lo)) < gap(&best) {
            best = widths(lo);
        }
        // Fine-tune the last hidden layer one unit at a time.
        let last = best.len() - 1;
        loop {
            let mut improved = false;
            for delta in [-1isize, 1] {
                let mut cand = best.clone();
                let w = cand[last] as isize + delta;
                if w < 1 {
                    continue;
                }
                cand[last] = w as usize;
                if gap(&cand) < gap(&best) {
                    best = cand;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Head {
    Kan(Vec<KanLayer>),
    Mlp(Vec<MlpLayer>),
}

#[derive(Clone, Debug)]
pub enum HeadCache {
    Kan(Vec<KanCache>),
    Mlp(Vec<MlpCache>),
}

impl HeadCache {
    pub fn kan(&self) -> Option<&[KanCache]> {
        match self {
            HeadCache::Kan(c) => Some(c),
            HeadCache::Mlp(_) => None,
        }
    }
}

impl Head {
    pub fn param_count(&self) -> usize {
        match self {
            Head::Kan(ls) => ls.iter().map(KanLayer::param_count).sum(),
            Head::Mlp(ls) => ls.iter().map(MlpLayer::param_count).sum(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, HeadCache)> {
        let mut cur = x.clone();
        match self {
            Head::Kan(layers) => {
                let mut caches = Vec::with_capacity(layers.len());
                for l in layers {
                    let (y, c) = l.forward(&cur)?;
                    caches.push(c);
                    cur = y;
                }
                Ok((cur, HeadCache::Kan(caches)))
            }
            Head::Mlp(layers) => {
                let mut caches = Vec::with_capacity(layers.len());
                for l in layers {
                    let (y, c) = l.forward(&cur)?;
                    caches.push(c);
                    cur = y;
                }
                Ok((cur, HeadCache::Mlp(caches)))
            }
        }
    }

    /// Head parameter gradients in registry order, plus the input gradient.
    pub fn backward(&self, cache: &HeadCache, upstream: &Tensor) -> Result<(Vec<Tensor>, Tensor)> {
        let mut g = upstream.clone();
        let mut out = Vec::new();
        match (self, cache) {
            (Head::Kan(layers), HeadCache::Kan(caches)) if layers.len() == caches.len() => {
                for (l, c) in layers.iter().zip(caches).rev() {
                    let gr = l.backward(c, &g)?;
                    out.push(gr.coeffs);
                    out.push(gr.base);
                    g = gr.input;
                }
            }
            (Head::Mlp(layers), HeadCache::Mlp(caches)) if layers.len() == caches.len() => {
                for (l, c) in layers.iter().zip(caches).rev() {
                    let gr = l.backward(c, &g)?;
                    out.push(gr.bias);
                    out.push(gr.weights);
                    g = gr.input;
                }
            }
            _ => return Err(Error::Contract("head cache does not belong to this head".into())),
        }
        out.reverse();
        Ok((out, g))
    }

    fn params(&self) -> Vec<&Tensor> {
        match self {
            Head::Kan(ls) => ls.iter().flat_map(|l| [&l.base, &l.coeffs]).collect(),
            Head::Mlp(ls) => ls.iter().flat_map(|l| [&l.weights, &l.bias]).collect(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Head::Kan(ls) => ls.iter_mut().flat_map(|l| [&mut l.base, &mut l.coeffs]).collect(),
            Head::Mlp(ls) => ls.iter_mut().flat_map(|l| [&mut l.weights, &mut l.bias]).collect(),
        }
    }

    fn paths(&self) -> Vec<String> {
        match self {
            Head::Kan(ls) => (0..ls.len())
                .flat_map(|l| [format!("head.kan{l}.base"), format!("head.kan{l}.coeffs")])
                .collect(),
            Head::Mlp(ls) => (0..ls.len())
                .flat_map(|l| [format!("head.fc{l}.weight"), format!("head.fc{l}.bias")])
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ArchSpec,
    pub backbone: Option<CnnBackbone>,
    pub feat_norm: Option<FeatureNormalizer>,
    pub head: Head,
    paths: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ModelCache {
    backbone: Option<BackboneCache>,
    norm: Option<NormCache>,
    pub head: HeadCache,
}

pub fn build_model(spec: &ArchSpec, rng: &mut Rng) -> Result<Model> {
    spec.validate()?;
    let mut spec = spec.clone();
    let grid = SplineGrid::uniform(spec.grid, spec.order)?;
    let (backbone, feat_norm) = if spec.kind.has_backbone() {
        let [c, h, w] = spec.input_shape;
        let bb = CnnBackbone::new([c, h, w], &spec.backbone_widths, spec.feature_dim, rng)?;
        (Some(bb), Some(FeatureNormalizer::new(spec.feature_dim)))
    } else {
        (None, None)
    };
    let head = if spec.kind.is_kan() {
        let dims = spec.head_dims(&spec.hidden);
        Head::Kan(
            dims.windows(2)
                .map(|w| KanLayer::new(w[0], w[1], grid.clone(), rng))
                .collect(),
        )
    } else {
        if spec.match_params {
            spec.hidden = spec.matched_mlp_hidden();
        }
        let dims = spec.head_dims(&spec.hidden);
        let n = dims.len() - 1;
        Head::Mlp(
            dims.windows(2)
                .enumerate()
                .map(|(l, w)| {
                    let act = if l + 1 == n {
                        Activation::Identity
                    } else {
                        Activation::Tanh
                    };
                    MlpLayer::new(w[0], w[1], act, rng)
                })
                .collect(),
        )
    };
    let mut model = Model {
        spec,
        backbone,
        feat_norm,
        head,
        paths: Vec::new(),
    };
    model.paths = model.compute_paths();
    Ok(model)
}

impl Model {
    /// The spec the model was built from, with MLP widths as realised.
    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn paths(&self) -> &[String] {
        &self.paths
    }

    fn compute_paths(&self) -> Vec<String> {
        let mut p = Vec::new();
        if let Some(bb) = &self.backbone {
            p.push("backbone.stem.weight".to_string());
            p.push("backbone.stem.bias".to_string());
            for (s, blk) in bb.stages.iter().enumerate() {
                for conv in ["conv1", "conv2"] {
                    p.push(format!("backbone.stage{s}.{conv}.weight"));
                    p.push(format!("backbone.stage{s}.{conv}.bias"));
                }
                if blk.shortcut.is_some() {
                    p.push(format!("backbone.stage{s}.shortcut.weight"));
                    p.push(format!("backbone.stage{s}.shortcut.bias"));
                }
            }
            p.push("backbone.proj.weight".to_string());
            p.push("backbone.proj.bias".to_string());
        }
        if self.feat_norm.is_some() {
            p.push("feat_norm.gamma".to_string());
            p.push("feat_norm.beta".to_string());
        }
        p.extend(self.head.paths());
        p
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(self.paths.len());
        if let Some(bb) = &self.backbone {
            out.push(&bb.stem.weight);
            out.push(&bb.stem.bias);
            for blk in &bb.stages {
                out.extend([&blk.conv1.weight, &blk.conv1.bias, &blk.conv2.weight, &blk.conv2.bias]);
                if let Some(sc) = &blk.shortcut {
                    out.extend([&sc.weight, &sc.bias]);
                }
            }
            out.push(&bb.proj.weights);
            out.push(&bb.proj.bias);
        }
        if let Some(n) = &self.feat_norm {
            out.push(&n.gamma);
            out.push(&n.beta);
        }
        out.extend(self.head.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(self.paths.len());
        if let Some(bb) = &mut self.backbone {
            out.push(&mut bb.stem.weight);
            out.push(&mut bb.stem.bias);
            for blk in &mut bb.stages {
                out.push(&mut blk.conv1.weight);
                out.push(&mut blk.conv1.bias);
                out.push(&mut blk.conv2.weight);
                out.push(&mut blk.conv2.bias);
                if let Some(sc) = &mut blk.shortcut {
                    out.push(&mut sc.weight);
                    out.push(&mut sc.bias);
                }
            }
            out.push(&mut bb.proj.weights);
            out.push(&mut bb.proj.bias);
        }
        if let Some(n) = &mut self.feat_norm {
            out.push(&mut n.gamma);
            out.push(&mut n.beta);
        }
        out.extend(self.head.params_mut());
        out
    }

    pub fn param(&self, path: &str) -> Option<&Tensor> {
        let i = self.paths.iter().position(|p| p == path)?;
        Some(self.params()[i])
    }

    pub fn param_index(&self, path: &str) -> Option<usize> {
        self.paths.iter().position(|p| p == path)
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Registry indices of `head.*` parameters (always a suffix).
    pub fn head_range(&self) -> Range<usize> {
        let n = self.paths.len();
        let h = self.paths.iter().filter(|p| p.starts_with("head.")).count();
        n - h..n
    }

    pub fn kan_layers(&self) -> Option<&[KanLayer]> {
        match &self.head {
            Head::Kan(ls) => Some(ls),
            Head::Mlp(_) => None,
        }
    }

    /// Registry index of `head.kan{l}.coeffs`.
    pub fn kan_coeff_index(&self, layer: usize) -> Option<usize> {
        self.param_index(&format!("head.kan{layer}.coeffs"))
    }

    pub fn kan_base_index(&self, layer: usize) -> Option<usize> {
        self.param_index(&format!("head.kan{layer}.base"))
    }

    /// Head input for a batch of flattened examples.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        match (&self.backbone, &self.feat_norm) {
            (Some(bb), Some(n)) => {
                let (f, _) = bb.forward(x)?;
                Ok(n.forward(&f)?.0)
            }
            _ => Ok(x.clone()),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ModelCache)> {
        let want: usize = self.spec.input_shape.iter().product();
        if x.ndim() != 2 || x.shape()[1] != want {
            return Err(Error::Dimension(format!(
                "model expects [batch, {want}], got {:?}",
                x.shape()
            )));
        }
        let (feat, backbone, norm) = match (&self.backbone, &self.feat_norm) {
            (Some(bb), Some(n)) => {
                let (f, bc) = bb.forward(x)?;
                let (z, nc) = n.forward(&f)?;
                if self.spec.kind.is_kan() && z.max_abs() >= 1.0 {
                    return Err(Error::Contract(
                        "normalized features left the open spline domain (-1, 1)".into(),
                    ));
                }
                (z, Some(bc), Some(nc))
            }
            _ => (x.clone(), None, None),
        };
        let (logits, head) = self.head.forward(&feat)?;
        Ok((logits, ModelCache { backbone, norm, head }))
    }

    /// Parameter gradients aligned with [`paths`](Self::paths).
    pub fn backward(&self, cache: &ModelCache, dlogits: &Tensor) -> Result<Vec<Tensor>> {
        let (head_grads, dfeat) = self.head.backward(&cache.head, dlogits)?;
        let mut out = Vec::with_capacity(self.paths.len());
        match (&self.backbone, &self.feat_norm, &cache.backbone, &cache.norm) {
            (Some(bb), Some(n), Some(bc), Some(nc)) => {
                let ng = n.backward(nc, &dfeat)?;
                let bg = bb.backward(bc, &ng.input)?;
                out.push(bg.stem.weight);
                out.push(bg.stem.bias);
                for sg in bg.stages {
                    out.extend([sg.conv1.weight, sg.conv1.bias, sg.conv2.weight, sg.conv2.bias]);
                    if let Some(sc) = sg.shortcut {
                        out.extend([sc.weight, sc.bias]);
                    }
                }
                out.push(bg.proj_weights);
                out.push(bg.proj_bias);
                out.push(ng.gamma);
                out.push(ng.beta);
            }
            (None, None, None, None) => {}
            _ => return Err(Error::Contract("model cache does not match the model".into())),
        }
        out.extend(head_grads);
        debug_assert_eq!(out.len(), self.paths.len());
        Ok(out)
    }
}
