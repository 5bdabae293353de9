use super::{LearnError, Params};

/// Denominator floor for the relative error at unit loss scale, so
/// parameters with near-zero gradients are judged on absolute error instead.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `loss_and_grad` against central differences over every
/// parameter and returns the worst relative error. The floor grows with
/// `|loss|` above 1, so the result is unchanged by rescaling the loss.
pub fn grad_check<P, F>(params: &P, loss_and_grad: F, eps: f64) -> Result<f64, LearnError>
where
    P: Params,
    F: Fn(&P) -> (f64, P),
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(LearnError::Invalid(format!("epsilon {eps} outside [1e-7, 1e-3]")));
    }
    let (loss, grad) = loss_and_grad(params);
    let floor = GRAD_CHECK_FLOOR * loss.abs().max(1.0);
    let analytic = grad.flatten();
    let base = params.flatten();
    if analytic.len() != base.len() {
        return Err(LearnError::Shape { expected: base.len(), got: analytic.len() });
    }
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        flat[i] = base[i] + eps;
        probe.assign(&flat);
        let up = loss_and_grad(&probe).0;
        flat[i] = base[i] - eps;
        probe.assign(&flat);
        let down = loss_and_grad(&probe).0;
        flat[i] = base[i];
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric, floor));
    }
    Ok(worst)
}
