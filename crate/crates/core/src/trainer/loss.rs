//! Listwise and contrastive objectives over similarity vectors, with their
//! derivatives with respect to the similarities.

use crate::error::{Error, Result};

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax of `scores / alpha`.
pub fn target_distribution(scores: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("empty score list".into()));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("target score {bad}")));
    }
    let scaled: Vec<f64> = scores.iter().map(|r| r / alpha).collect();
    if scaled.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("scores overflow at alpha {alpha}")));
    }
    Ok(softmax(&scaled))
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Rescale to [0, 1]; a constant list maps to zeros.
pub fn min_max(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        scores.iter().map(|s| (s - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; scores.len()]
    }
}

/// Cross-entropy between `target` and softmax(`sims`).
pub fn listnet_loss_with_target(sims: &[f64], target: &[f64]) -> f64 {
    let lse = log_sum_exp(sims);
    -target.iter().zip(sims).map(|(p, s)| p * (s - lse)).sum::<f64>()
}

pub fn listnet_loss(sims: &[f64], scores: &[f64], alpha: f64) -> Result<f64> {
    check_lengths(sims, scores)?;
    Ok(listnet_loss_with_target(sims, &target_distribution(scores, alpha)?))
}

/// dL/ds for ListNet: p^s - p^r.
pub fn listnet_grad(sims: &[f64], target: &[f64]) -> Vec<f64> {
    softmax(sims).iter().zip(target).map(|(ps, pr)| ps - pr).collect()
}

/// Indices of `scores` in descending order, ties by position.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn listmle_loss(sims: &[f64], scores: &[f64]) -> Result<f64> {
    check_lengths(sims, scores)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN target score".into()));
    }
    let ordered: Vec<f64> = descending_order(scores).into_iter().map(|i| sims[i]).collect();
    Ok((0..ordered.len()).map(|i| log_sum_exp(&ordered[i..]) - ordered[i]).sum())
}

pub fn listmle_grad(sims: &[f64], scores: &[f64]) -> Vec<f64> {
    let order = descending_order(scores);
    let ordered: Vec<f64> = order.iter().map(|&i| sims[i]).collect();
    let mut grad = vec![0.0; sims.len()];
    for i in 0..order.len() {
        grad[order[i]] -= 1.0;
        for (offset, p) in softmax(&ordered[i..]).into_iter().enumerate() {
            grad[order[i + offset]] += p;
        }
    }
    grad
}

/// InfoNCE over one similarity row whose entry 0 is the positive.
pub fn infonce_loss(sims: &[f64], tau: f64) -> Result<f64> {
    if sims.len() < 2 {
        return Err(Error::InvalidArgument("InfoNCE needs at least one negative".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let scaled: Vec<f64> = sims.iter().map(|s| s / tau).collect();
    Ok(log_sum_exp(&scaled) - scaled[0])
}

pub fn infonce_grad(sims: &[f64], tau: f64) -> Vec<f64> {
    let scaled: Vec<f64> = sims.iter().map(|s| s / tau).collect();
    let mut g = softmax(&scaled);
    g[0] -= 1.0;
    g.iter_mut().for_each(|v| *v /= tau);
    g
}

fn check_lengths(sims: &[f64], scores: &[f64]) -> Result<()> {
    if sims.is_empty() || sims.len() != scores.len() {
        return Err(Error::InvalidArgument(format!(
            "{} similarities for {} scores",
            sims.len(),
            scores.len()
        )));
    }
    Ok(())
}
