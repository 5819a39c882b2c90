//! Softmax cross-entropy with per-sample class masks. Logits outside a
//! sample's mask are treated as `-∞`.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

fn check(logits: &Tensor, labels: &[usize], masks: &[&[bool]]) -> Result<usize> {
    logits.require_2d("cross_entropy")?;
    let (batch, classes) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != batch || masks.len() != batch {
        return Err(Error::Dimension(format!(
            "{batch} logit rows, {} labels, {} masks",
            labels.len(),
            masks.len()
        )));
    }
    for (b, (&y, m)) in labels.iter().zip(masks).enumerate() {
        if m.len() != classes || y >= classes || !m[y] {
            return Err(Error::Contract(format!(
                "sample {b}: label {y} not inside its {}-class mask",
                m.len()
            )));
        }
    }
    Ok(classes)
}

/// Masked softmax of one row into `out`; masked entries become 0.
fn masked_softmax(row: &[f64], mask: &[bool], out: &mut [f64]) {
    let max = row
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for ((o, v), &m) in out.iter_mut().zip(row).zip(mask) {
        *o = if m { (v - max).exp() } else { 0.0 };
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &Tensor, labels: &[usize], masks: &[&[bool]]) -> Result<(f64, Tensor)> {
    let classes = check(logits, labels, masks)?;
    let batch = labels.len();
    let mut grad = vec![0.0; batch * classes];
    let mut loss = 0.0;
    for b in 0..batch {
        let g = &mut grad[b * classes..(b + 1) * classes];
        masked_softmax(logits.row(b), masks[b], g);
        loss -= g[labels[b]].ln();
        g[labels[b]] -= 1.0;
        g.iter_mut().for_each(|v| *v /= batch as f64);
    }
    Ok((loss / batch as f64, Tensor::new(vec![batch, classes], grad)?))
}

/// Per-sample gradient of `log p(y | x)` w.r.t. the logits: `onehot(y) − p`
/// on the mask, 0 elsewhere. Row `b` belongs to sample `b`.
pub fn log_prob_grad(logits: &Tensor, labels: &[usize], masks: &[&[bool]]) -> Result<Tensor> {
    let classes = check(logits, labels, masks)?;
    let batch = labels.len();
    let mut grad = vec![0.0; batch * classes];
    for b in 0..batch {
        let g = &mut grad[b * classes..(b + 1) * classes];
        masked_softmax(logits.row(b), masks[b], g);
        g.iter_mut().for_each(|v| *v = -*v);
        g[labels[b]] += 1.0;
    }
    Tensor::new(vec![batch, classes], grad)
}

/// Arg-max over the masked logits (lowest index wins ties).
pub fn predict(logits: &Tensor, masks: &[&[bool]]) -> Result<Vec<usize>> {
    logits.require_2d("predict")?;
    if masks.len() != logits.shape()[0] {
        return Err(Error::Dimension("one mask per logit row required".into()));
    }
    Ok((0..logits.shape()[0])
        .map(|b| {
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for (c, (&v, &m)) in logits.row(b).iter().zip(masks[b]).enumerate() {
                if m && (best.0 == usize::MAX || v > best.1) {
                    best = (c, v);
                }
            }
            best.0
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, Rng};

    #[test]
    fn uniform_logits_give_log_class_count() {
        let logits = Tensor::zeros(&[1, 4]);
        let mask = [true; 4];
        let (l, _) = cross_entropy(&logits, &[2], &[&mask]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn masked_logits_are_ignored() {
        let mask = [false, true, true, false];
        let a = Tensor::from_rows(&[vec![9.0, 0.3, -0.2, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![-5.0, 0.3, -0.2, 100.0]]).unwrap();
        let (la, ga) = cross_entropy(&a, &[1], &[&mask]).unwrap();
        let (lb, gb) = cross_entropy(&b, &[1], &[&mask]).unwrap();
        assert_eq!(la, lb);
        assert_eq!(ga, gb);
        assert_eq!(ga.data()[0], 0.0);
        assert_eq!(predict(&b, &[&mask]).unwrap(), vec![1]);
    }

    #[test]
    fn label_outside_mask_is_rejected() {
        let mask = [true, false];
        assert!(cross_entropy(&Tensor::zeros(&[1, 2]), &[1], &[&mask]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let logits = Tensor::from_fn(&[3, 5], |_| rng.normal());
        let m1 = [true, true, false, true, true];
        let m2 = [true; 5];
        let masks: [&[bool]; 3] = [&m1, &m2, &m1];
        let labels = [0, 2, 4];
        let e = grad_check(|z| cross_entropy(z, &labels, &masks), &logits, 1e-5).unwrap();
        assert!(e < 1e-7);
        let lp = log_prob_grad(&logits, &labels, &masks).unwrap();
        let (_, g) = cross_entropy(&logits, &labels, &masks).unwrap();
        for (a, b) in lp.data().iter().zip(g.data()) {
            assert!((a + 3.0 * b).abs() < 1e-14);
        }
    }
}
