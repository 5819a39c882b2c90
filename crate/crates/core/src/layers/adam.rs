use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Adam with first/second moments keyed by parameter path.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update over `(path, param, grad)` triples. Every gradient is
    /// checked before any parameter moves, so a NaN aborts cleanly.
    pub fn step(&mut self, paths: &[String], params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if paths.len() != params.len() || params.len() != grads.len() {
            return Err(Error::Dimension(format!(
                "adam: {} paths, {} params, {} grads",
                paths.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((path, p), g) in paths.iter().zip(&params).zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Dimension(format!(
                    "adam: `{path}` has shape {:?}, gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of `{path}` is {} at flat index {pos} (step {})",
                    g.data()[pos],
                    self.step + 1
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((path, p), g) in paths.iter().zip(params).zip(grads) {
            let (m, v) = self
                .moments
                .entry(path.clone())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Tensor {
        Tensor::full(&[1], v)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut opt = Adam::new(1e-3);
        let mut p = Tensor::from_fn(&[3], |i| i as f64);
        let before = p.clone();
        opt.step(&["w".into()], vec![&mut p], &[Tensor::zeros(&[3])]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn single_step_descends() {
        let mut opt = Adam::new(1e-3);
        let mut p = one(1.0);
        let g = p.clone();
        opt.step(&["theta".into()], vec![&mut p], &[g]).unwrap();
        assert!(p.data()[0] < 1.0);
    }

    #[test]
    fn converges_on_quadratic() {
        // f(θ) = (θ − 3)² / 2 + (φ + 1)², optimum (3, −1).
        let mut opt = Adam::new(0.05);
        let paths = vec!["theta".to_string(), "phi".to_string()];
        let (mut a, mut b) = (one(0.0), one(0.0));
        for _ in 0..1000 {
            let ga = one(a.data()[0] - 3.0);
            let gb = one(2.0 * (b.data()[0] + 1.0));
            opt.step(&paths, vec![&mut a, &mut b], &[ga, gb]).unwrap();
        }
        assert!((a.data()[0] - 3.0).abs() < 1e-3);
        assert!((b.data()[0] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut opt = Adam::new(1e-3);
        let mut p = one(1.0);
        let err = opt
            .step(&["head.x".into()], vec![&mut p], &[one(f64::NAN)])
            .unwrap_err();
        assert!(err.to_string().contains("head.x"));
        assert_eq!(p.data()[0], 1.0);
        assert_eq!(opt.steps_taken(), 0);
    }
}
