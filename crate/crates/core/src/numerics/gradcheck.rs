use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Central-difference gradient check.
///
/// `f` returns the scalar value and its analytic gradient at the given
/// point. The result is `max_i |g_i − fd_i| / max(1, |g_i|)`.
pub fn grad_check<F>(mut f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<(f64, Tensor)>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Config(format!("grad_check eps {eps} outside [1e-7, 1e-3]")));
    }
    let (value, analytic) = f(x)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("grad_check: f(x) is not finite".into()));
    }
    x.require_same_shape(&analytic)?;
    let mut probe = x.clone();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let (plus, _) = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let (minus, _) = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "grad_check: f not finite near coordinate {i}"
            )));
        }
        let fd = (plus - minus) / (2.0 * eps);
        let g = analytic.data()[i];
        worst = worst.max((g - fd).abs() / g.abs().max(1.0));
    }
    Ok(worst)
}
