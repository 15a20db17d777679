use super::ParamSet;
use crate::error::{Error, Result};

/// Compares analytic gradients against central finite differences.
///
/// `loss_and_grad` must return the loss and accumulate its gradient into the
/// parameter set's gradient slots. Gradients are cleared before every call.
/// Returns `max |analytic − numeric| / max(1, |numeric|)` over all coordinates.
pub fn grad_check<F>(params: &mut ParamSet, step: f64, mut loss_and_grad: F) -> Result<f64>
where
    F: FnMut(&mut ParamSet) -> Result<f64>,
{
    let mut eval = |p: &mut ParamSet| -> Result<f64> {
        p.zero_grad();
        let l = loss_and_grad(p)?;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(Error::Numeric(format!("grad_check: loss is {l}")))
        }
    };
    eval(params)?;
    let analytic: Vec<(String, Vec<f64>)> = params
        .names()
        .map(|n| (n.to_string(), params.grad(n).data().to_vec()))
        .collect::<Vec<_>>();
    let mut worst = 0.0f64;
    for (name, grad) in &analytic {
        for (i, &a) in grad.iter().enumerate() {
            let orig = params.get(name).data()[i];
            params.value_mut(name)[i] = orig + step;
            let up = eval(params)?;
            params.value_mut(name)[i] = orig - step;
            let down = eval(params)?;
            params.value_mut(name)[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    params.zero_grad();
    Ok(worst)
}
