//! Per-knot importance for spline heads: Fisher per coefficient, activation
//! mass per basis, their combination, gradient masking and the importance
//! weighted anchor.

use crate::cl::fisher::squared_grad_sums;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::Model;
use crate::numerics::Tensor;

fn kan_coeff_indices(model: &Model) -> Result<Vec<usize>> {
    let layers = model
        .kan_layers()
        .ok_or_else(|| Error::Config("per-knot statistics need a KAN head".into()))?;
    Ok((0..layers.len())
        .map(|l| model.kan_coeff_index(l).expect("registered KAN layer"))
        .collect())
}

/// `F_ijk = mean over samples of (∂ log p(y|x) / ∂c_ijk)²`, one
/// `[out, in, K]` tensor per head layer.
pub fn knot_fisher(model: &Model, data: &Dataset, mask: &[bool], cap: usize) -> Result<Vec<Tensor>> {
    let idx = kan_coeff_indices(model)?;
    let (sums, n) = squared_grad_sums(model, data, mask, &idx, cap, None)?;
    Ok(sums.into_iter().map(|s| s.scale(1.0 / n as f64)).collect())
}

/// `A_ik = mean |B_k(x_i)|` over each head layer's realised inputs, shape
/// `[in, K]` per layer.
pub fn activation_mass(model: &Model, data: &Dataset, cap: usize) -> Result<Vec<Tensor>> {
    let layers = model
        .kan_layers()
        .ok_or_else(|| Error::Config("activation mass needs a KAN head".into()))?;
    if data.is_empty() || cap == 0 {
        return Err(Error::Empty("activation mass needs at least one sample".into()));
    }
    let n = data.len().min(cap);
    let mut sums: Vec<Tensor> = layers
        .iter()
        .map(|l| Tensor::zeros(&[l.in_dim(), l.grid().basis_count()]))
        .collect();
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(256) {
        let x = data.images.select_rows(chunk);
        let (_, cache) = model.forward(&x)?;
        let caches = cache.head.kan().expect("KAN head cache");
        for ((sum, c), l) in sums.iter_mut().zip(caches).zip(layers) {
            sum.add_assign(&c.basis_abs_sum(l.grid().basis_count()))?;
        }
    }
    Ok(sums.into_iter().map(|s| s.scale(1.0 / n as f64)).collect())
}

fn normalized(t: &Tensor) -> Tensor {
    let m = t.max();
    if m > 0.0 {
        t.scale(1.0 / m)
    } else {
        Tensor::zeros(t.shape())
    }
}

/// `s = α_F F̃ + α_A Ã`, each normalized by its own maximum; `A` is
/// broadcast over the output dimension.
pub fn combine_importance(f: &Tensor, a: &Tensor, alpha_f: f64, alpha_a: f64) -> Result<Tensor> {
    if !(alpha_f >= 0.0 && alpha_a >= 0.0) {
        return Err(Error::Config(format!(
            "importance weights must be ≥ 0, got {alpha_f}, {alpha_a}"
        )));
    }
    if f.ndim() != 3 || a.ndim() != 2 || f.shape()[1..] != *a.shape() {
        return Err(Error::Dimension(format!(
            "F {:?} and A {:?} do not align",
            f.shape(),
            a.shape()
        )));
    }
    let (ft, at) = (normalized(f), normalized(a));
    let plane = at.len();
    let data = ft
        .data()
        .iter()
        .enumerate()
        .map(|(e, &fv)| alpha_f * fv + alpha_a * at.data()[e % plane])
        .collect();
    Tensor::new(f.shape().to_vec(), data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerImportance {
    /// Accumulated `S`, `[out, in, K]`.
    pub s: Tensor,
    /// Coefficient anchor `c*`.
    pub c_star: Tensor,
    /// Base-weight anchor, used when base weights are regularized too.
    pub base_star: Tensor,
}

impl LayerImportance {
    /// Per-edge mean of `S` over the basis index, `[out, in]`.
    pub fn edge_mean(&self) -> Tensor {
        let k = self.s.shape()[2];
        let data = self
            .s
            .data()
            .chunks(k)
            .map(|c| c.iter().sum::<f64>() / k as f64)
            .collect();
        Tensor::new(self.s.shape()[..2].to_vec(), data).expect("edge shape")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceStore {
    pub layers: Vec<LayerImportance>,
}

impl ImportanceStore {
    /// Zero importance, anchors at the current head.
    pub fn new(model: &Model) -> Result<Self> {
        let layers = model
            .kan_layers()
            .ok_or_else(|| Error::Config("KAN-CL needs a KAN head".into()))?;
        Ok(Self {
            layers: layers
                .iter()
                .map(|l| LayerImportance {
                    s: Tensor::zeros(l.coeffs.shape()),
                    c_star: l.coeffs.clone(),
                    base_star: l.base.clone(),
                })
                .collect(),
        })
    }

    /// `S += s` then `c* ← c`.
    pub fn accumulate_and_snapshot(&mut self, s: &[Tensor], model: &Model) -> Result<()> {
        let layers = model
            .kan_layers()
            .ok_or_else(|| Error::Config("KAN-CL needs a KAN head".into()))?;
        if s.len() != self.layers.len() || layers.len() != self.layers.len() {
            return Err(Error::Dimension("importance layers do not match the head".into()));
        }
        for ((st, si), l) in self.layers.iter_mut().zip(s).zip(layers) {
            if si.data().iter().any(|&v| v.is_nan() || v < 0.0) {
                return Err(Error::Contract("importance increments must be ≥ 0".into()));
            }
            st.s.add_assign(si)?;
            st.c_star = l.coeffs.clone();
            st.base_star = l.base.clone();
        }
        Ok(())
    }
}

/// `∇ ← ∇ · exp(−β S)`.
pub fn mask_gradient(grad: &mut Tensor, s: &Tensor, beta: f64) -> Result<()> {
    grad.require_same_shape(s)?;
    for (g, &sv) in grad.data_mut().iter_mut().zip(s.data()) {
        *g *= (-beta * sv).exp();
    }
    Ok(())
}

/// `λ Σ S (c − c*)²` over every head layer; adds `2λS(c − c*)` to the
/// coefficient gradients. With `include_base`, base weights are anchored
/// with the per-edge mean of `S`.
pub fn anchor_penalty(
    model: &Model,
    store: &ImportanceStore,
    lambda: f64,
    include_base: bool,
    grads: &mut [Tensor],
) -> Result<f64> {
    let layers = model
        .kan_layers()
        .ok_or_else(|| Error::Config("anchor needs a KAN head".into()))?;
    let mut loss = 0.0;
    for (l, (layer, imp)) in layers.iter().zip(&store.layers).enumerate() {
        let ci = model.kan_coeff_index(l).expect("registered");
        loss += weighted_quadratic(&layer.coeffs, &imp.c_star, &imp.s, lambda, &mut grads[ci])?;
        if include_base {
            let bi = model.kan_base_index(l).expect("registered");
            loss += weighted_quadratic(&layer.base, &imp.base_star, &imp.edge_mean(), lambda, &mut grads[bi])?;
        }
    }
    Ok(loss)
}

fn weighted_quadratic(p: &Tensor, star: &Tensor, w: &Tensor, lambda: f64, grad: &mut Tensor) -> Result<f64> {
    p.require_same_shape(star)?;
    p.require_same_shape(w)?;
    p.require_same_shape(grad)?;
    let mut loss = 0.0;
    for (((g, &c), &cs), &s) in grad.data_mut().iter_mut().zip(p.data()).zip(star.data()).zip(w.data()) {
        let d = c - cs;
        loss += s * d * d;
        *g += 2.0 * lambda * s * d;
    }
    Ok(lambda * loss)
}

/// Anchor multiplier `ρ · max(0, 1 − δ · progress)`.
pub fn anneal_scale(rho: f64, delta: f64, progress: f64) -> f64 {
    rho * (1.0 - delta * progress).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Normalization;
    use crate::layers::{build_model, ArchSpec, ModelKind};
    use crate::numerics::Rng;
    use crate::spline::SplineGrid;

    fn tiny(hidden: Vec<usize>, seed: u64) -> Model {
        let spec = ArchSpec {
            kind: ModelKind::PureKan,
            input_shape: [1, 1, 2],
            hidden,
            classes: 2,
            grid: 5,
            order: 3,
            backbone_widths: vec![],
            feature_dim: 2,
            match_params: false,
        };
        build_model(&spec, &mut Rng::new(seed)).unwrap()
    }

    fn dataset(xs: &[[f64; 2]], ys: &[usize]) -> Dataset {
        let data = xs.iter().flatten().copied().collect();
        Dataset::new(
            "d",
            Tensor::new(vec![xs.len(), 2], data).unwrap(),
            ys.to_vec(),
            [1, 1, 2],
            2,
            Normalization::UnitInterval,
        )
        .unwrap()
    }

    #[test]
    fn fisher_is_zero_outside_support() {
        let m = tiny(vec![], 3);
        // Inputs on dimension 0 in [0.5, 0.9]: bases 0..=3 miss the data.
        let ds = dataset(&[[0.55, 0.1], [0.8, -0.3], [0.62, 0.9]], &[0, 1, 1]);
        let f = knot_fisher(&m, &ds, &[true, true], 100).unwrap();
        let g = SplineGrid::uniform(5, 3).unwrap();
        for k in 0..8 {
            let (_, hi) = g.basis_support(k).unwrap();
            if hi <= 0.5 {
                for j in 0..2 {
                    assert_eq!(f[0].data()[(j * 2) * 8 + k], 0.0);
                }
            }
        }
    }

    #[test]
    fn knot_fisher_matches_log_likelihood_differences() {
        let m = tiny(vec![], 7);
        let ds = dataset(&[[0.3, -0.4], [-0.7, 0.2]], &[1, 0]);
        let f = knot_fisher(&m, &ds, &[true, true], 100).unwrap();
        let eps = 1e-6;
        let log_p = |mm: &Model, a: usize| -> f64 {
            let x = ds.images.select_rows(&[a]);
            let (z, _) = mm.forward(&x).unwrap();
            let zz = z.row(0);
            let lse = (zz[0].exp() + zz[1].exp()).ln();
            zz[ds.labels[a]] - lse
        };
        for e in [0, 5, 9, 17, 30] {
            let mut oracle = 0.0;
            for a in 0..2 {
                let mut up = m.clone();
                let mut dn = m.clone();
                if let crate::layers::Head::Kan(ls) = &mut up.head {
                    ls[0].coeffs.data_mut()[e] += eps;
                }
                if let crate::layers::Head::Kan(ls) = &mut dn.head {
                    ls[0].coeffs.data_mut()[e] -= eps;
                }
                let d = (log_p(&up, a) - log_p(&dn, a)) / (2.0 * eps);
                oracle += d * d / 2.0;
            }
            assert!(
                (f[0].data()[e] - oracle).abs() < 1e-8,
                "{e}: {} vs {oracle}",
                f[0].data()[e]
            );
        }
    }

    #[test]
    fn activation_mass_single_point_and_unity() {
        let m = tiny(vec![3], 1);
        let ds = dataset(&[[0.25, -0.6]; 4], &[0, 1, 0, 1]);
        let a = activation_mass(&m, &ds, 100).unwrap();
        let g = SplineGrid::uniform(5, 3).unwrap();
        let b0 = g.basis_eval(0.25);
        for k in 0..8 {
            assert_eq!(a[0].data()[k], b0[k].abs());
        }
        for row in a[0].data().chunks(8) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        assert_eq!(a[1].shape(), &[3, 8]);
    }

    #[test]
    fn combine_cases() {
        let f = Tensor::full(&[2, 1, 2], 3.0);
        let a = Tensor::zeros(&[1, 2]);
        let s = combine_importance(&f, &a, 1.0, 0.0).unwrap();
        assert!(s.data().iter().all(|&v| v == 1.0));
        let z = combine_importance(&Tensor::zeros(&[2, 1, 2]), &a, 1.0, 0.5).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        // Hand case: F = [[0.2, 0.8]] on one edge, A = [0.5, 0.25].
        let f = Tensor::new(vec![1, 1, 2], vec![0.2, 0.8]).unwrap();
        let a = Tensor::new(vec![1, 2], vec![0.5, 0.25]).unwrap();
        let s = combine_importance(&f, &a, 1.0, 0.5).unwrap();
        // F̃ = [0.25, 1], Ã = [1, 0.5] → s = [0.25 + 0.5, 1 + 0.25].
        assert!((s.data()[0] - 0.75).abs() < 1e-15);
        assert!((s.data()[1] - 1.25).abs() < 1e-15);
        assert!(combine_importance(&f, &a, -1.0, 0.5).is_err());
    }

    #[test]
    fn accumulate_twice_doubles() {
        let m = tiny(vec![], 2);
        let mut st = ImportanceStore::new(&m).unwrap();
        let s = vec![Tensor::from_fn(&[2, 2, 8], |i| (i % 5) as f64 * 0.1)];
        st.accumulate_and_snapshot(&s, &m).unwrap();
        assert_eq!(st.layers[0].s, s[0]);
        st.accumulate_and_snapshot(&s, &m).unwrap();
        assert_eq!(st.layers[0].s, s[0].scale(2.0));
        assert!(st.accumulate_and_snapshot(&[s[0].scale(-1.0)], &m).is_err());
    }

    #[test]
    fn mask_and_anchor_values() {
        let mut g = Tensor::full(&[3], 2.0);
        mask_gradient(&mut g, &Tensor::new(vec![3], vec![0.0, 1.0, 1.0]).unwrap(), 5.0).unwrap();
        assert_eq!(g.data()[0], 2.0);
        assert!((g.data()[1] / 2.0 - 6.737_946_999_085_467e-3).abs() < 1e-15);
        let mut g = Tensor::full(&[2], 2.0);
        mask_gradient(&mut g, &Tensor::full(&[2], 3.0), 0.0).unwrap();
        assert_eq!(g.data(), &[2.0, 2.0]);

        let m = tiny(vec![], 4);
        let mut st = ImportanceStore::new(&m).unwrap();
        let mut grads: Vec<Tensor> = m.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        assert_eq!(anchor_penalty(&m, &st, 500.0, false, &mut grads).unwrap(), 0.0);
        st.layers[0].s.data_mut()[0] = 1.0;
        st.layers[0].c_star.data_mut()[0] -= 0.1;
        st.layers[0].c_star.data_mut()[1] += 3.0; // S = 0 here: no contribution
        let loss = anchor_penalty(&m, &st, 500.0, false, &mut grads).unwrap();
        assert!((loss - 5.0).abs() < 1e-12);
        let ci = m.kan_coeff_index(0).unwrap();
        assert!((grads[ci].data()[0] - 100.0).abs() < 1e-9);
        assert_eq!(grads[ci].data()[1], 0.0);
    }

    #[test]
    fn anneal_values() {
        assert_eq!(anneal_scale(0.0, 0.3, 0.5), 0.0);
        assert_eq!(anneal_scale(1.0, 0.0, 0.9), 1.0);
        assert!((anneal_scale(0.1, 1.0, 0.5) - 0.05).abs() < 1e-15);
        assert_eq!(anneal_scale(1.0, 2.0, 0.9), 0.0);
    }
}
