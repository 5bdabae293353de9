use super::LearnError;

pub enum Target<'a> {
    Index(usize),
    /// A probability distribution over the same support as the logits.
    Dist(&'a [f64]),
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Cross-entropy of `softmax(logits)` against `target`; the gradient is
/// with respect to the logits.
pub fn softmax_ce(logits: &[f64], target: Target<'_>) -> Result<(f64, Vec<f64>), LearnError> {
    if logits.is_empty() {
        return Err(LearnError::EmptyLogits);
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(LearnError::NonFinite("logits"));
    }
    let logp = log_softmax(logits);
    let p = softmax(logits);
    match target {
        Target::Index(t) => {
            if t >= logits.len() {
                return Err(LearnError::OutOfRange { index: t, len: logits.len() });
            }
            let mut g = p;
            g[t] -= 1.0;
            Ok((-logp[t], g))
        }
        Target::Dist(q) => {
            super::check_len(logits.len(), q.len())?;
            let mass: f64 = q.iter().sum();
            let loss = -q.iter().zip(&logp).filter(|(qi, _)| **qi != 0.0).map(|(qi, l)| qi * l).sum::<f64>();
            let g = p.iter().zip(q).map(|(pi, qi)| mass * pi - qi).collect();
            Ok((loss, g))
        }
    }
}
