//! Synaptic intelligence: path-integral importance over all parameters.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::layers::Model;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SiState {
    /// Running credit `ω` since the last consolidation.
    pub omega: BTreeMap<String, Tensor>,
    /// Consolidated importance `Ω`.
    pub big_omega: BTreeMap<String, Tensor>,
    /// Parameters at the last consolidation (the anchor).
    pub theta_star: BTreeMap<String, Tensor>,
    pub xi: f64,
}

impl SiState {
    pub fn new(model: &Model, xi: f64) -> Result<Self> {
        if xi.is_nan() || xi <= 0.0 {
            return Err(Error::Config(format!("SI damping must be > 0, got {xi}")));
        }
        let zeros = model
            .paths()
            .iter()
            .zip(model.params())
            .map(|(p, t)| (p.clone(), Tensor::zeros(t.shape())))
            .collect::<BTreeMap<_, _>>();
        Ok(Self {
            omega: zeros.clone(),
            big_omega: zeros,
            theta_star: model
                .paths()
                .iter()
                .cloned()
                .zip(model.params().into_iter().cloned())
                .collect(),
            xi,
        })
    }

    /// `ω += −g · Δθ` for one optimizer step.
    pub fn accumulate(
        &mut self,
        paths: &[String],
        grads: &[Tensor],
        before: &[Tensor],
        after: &[&Tensor],
    ) -> Result<()> {
        for (((path, g), b), a) in paths.iter().zip(grads).zip(before).zip(after) {
            let w = self
                .omega
                .get_mut(path)
                .ok_or_else(|| Error::Contract(format!("SI state lacks `{path}`")))?;
            for (((wv, &gv), &bv), &av) in w.data_mut().iter_mut().zip(g.data()).zip(b.data()).zip(a.data()) {
                *wv -= gv * (av - bv);
            }
        }
        Ok(())
    }

    /// `Ω += max(0, ω / (Δθ² + ξ))`, then resets `ω` and moves the anchor.
    pub fn consolidate(&mut self, model: &Model) -> Result<()> {
        for (path, p) in model.paths().iter().zip(model.params()) {
            let star = &self.theta_star[path];
            let w = self.omega.get_mut(path).expect("path registered at construction");
            let big = self.big_omega.get_mut(path).expect("path registered at construction");
            for (((bo, wv), &pv), &sv) in big
                .data_mut()
                .iter_mut()
                .zip(w.data_mut())
                .zip(p.data())
                .zip(star.data())
            {
                let d = pv - sv;
                *bo += (*wv / (d * d + self.xi)).max(0.0);
                *wv = 0.0;
            }
            self.theta_star.insert(path.clone(), p.clone());
        }
        Ok(())
    }

    /// `λ Σ Ω (θ − θ*)²`, gradient added into `grads`.
    pub fn penalty(&self, model: &Model, lambda: f64, grads: &mut [Tensor]) -> Result<f64> {
        let mut loss = 0.0;
        for (i, (path, p)) in model.paths().iter().zip(model.params()).enumerate() {
            let (Some(big), Some(star)) = (self.big_omega.get(path), self.theta_star.get(path)) else {
                return Err(Error::Contract(format!("SI state lacks `{path}`")));
            };
            for (((g, &o), &pv), &sv) in grads[i]
                .data_mut()
                .iter_mut()
                .zip(big.data())
                .zip(p.data())
                .zip(star.data())
            {
                let d = pv - sv;
                loss += o * d * d;
                *g += 2.0 * lambda * o * d;
            }
        }
        Ok(lambda * loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{build_model, ArchSpec, Head, ModelKind};
    use crate::numerics::Rng;

    fn scalar_model() -> Model {
        let spec = ArchSpec {
            kind: ModelKind::PureMlp,
            input_shape: [1, 1, 1],
            hidden: vec![],
            classes: 2,
            grid: 5,
            order: 3,
            backbone_widths: vec![],
            feature_dim: 2,
            match_params: false,
        };
        build_model(&spec, &mut Rng::new(0)).unwrap()
    }

    #[test]
    fn no_movement_leaves_omega_unchanged() {
        let m = scalar_model();
        let mut si = SiState::new(&m, 0.1).unwrap();
        let grads: Vec<Tensor> = m.params().iter().map(|p| p.map(|_| 1.0)).collect();
        let before: Vec<Tensor> = m.params().into_iter().cloned().collect();
        si.accumulate(m.paths(), &grads, &before, &m.params()).unwrap();
        si.consolidate(&m).unwrap();
        assert!(si.big_omega.values().all(|t| t.max_abs() == 0.0));
        let mut g: Vec<Tensor> = m.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        assert_eq!(si.penalty(&m, 1.0, &mut g).unwrap(), 0.0);
        assert!(SiState::new(&m, 0.0).is_err());
    }

    #[test]
    fn omega_tracks_loss_decrease_on_quadratic() {
        // L(θ) = θ²/2 on the first bias; plain gradient descent from θ = 1.
        let mut m = scalar_model();
        let mut si = SiState::new(&m, 0.1).unwrap();
        let bias = m.param_index("head.fc0.bias").unwrap();
        let set = |m: &mut Model, v: f64| {
            if let Head::Mlp(ls) = &mut m.head {
                ls[0].bias.data_mut()[0] = v;
            }
        };
        set(&mut m, 1.0);
        si.theta_star.insert("head.fc0.bias".into(), m.params()[bias].clone());
        let mut theta: f64 = 1.0;
        let lr = 1e-3;
        for _ in 0..2000 {
            let before: Vec<Tensor> = m.params().into_iter().cloned().collect();
            let mut grads: Vec<Tensor> = m.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
            grads[bias].data_mut()[0] = theta;
            theta -= lr * theta;
            set(&mut m, theta);
            si.accumulate(m.paths(), &grads, &before, &m.params()).unwrap();
        }
        let drop = 0.5 - 0.5 * theta * theta;
        let w = si.omega["head.fc0.bias"].data()[0];
        assert!((w - drop).abs() < 1e-3 * drop, "{w} vs {drop}");
        si.consolidate(&m).unwrap();
        let expect = w / ((theta - 1.0).powi(2) + 0.1);
        assert!((si.big_omega["head.fc0.bias"].data()[0] - expect).abs() < 1e-12);
    }
}
