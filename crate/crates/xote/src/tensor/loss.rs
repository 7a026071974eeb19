//! Categorical cross-entropy and L1 regularization.

use log::warn;

/// Floor applied to predicted probabilities inside the log; prevents NaN when
/// a saturated softmax rounds the gold tag's probability to exactly zero.
pub const LOG_CLAMP: f64 = 1e-12;

/// Cross-entropy `-sum_t p_t log q_t` for a one-hot expected distribution.
///
/// `p` must be one-hot, `q` a probability vector of the same length. A zero
/// predicted probability at the gold position is clamped to [`LOG_CLAMP`] and
/// logged as a numeric warning.
pub fn cross_entropy(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    debug_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let mut loss = 0.0;
    for (&pt, &qt) in p.iter().zip(q) {
        if pt == 0.0 {
            continue;
        }
        let qt = if qt <= 0.0 {
            warn!("cross-entropy: predicted probability {qt} at gold tag clamped to {LOG_CLAMP}");
            LOG_CLAMP
        } else {
            qt.max(LOG_CLAMP)
        };
        loss -= pt * qt.ln();
    }
    loss
}

/// Gradient of the cross-entropy with respect to the pre-softmax logits:
/// `q - p`.
pub fn cross_entropy_logit_grad(p: &[f64], q: &[f64]) -> Vec<f64> {
    p.iter().zip(q).map(|(&pt, &qt)| qt - pt).collect()
}

/// L1 penalty `lambda * sum |w|` and its subgradient `lambda * sign(w)`
/// (with `sign(0) = 0`).
pub fn l1_penalty(weights: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    if lambda == 0.0 {
        return (0.0, vec![0.0; weights.len()]);
    }
    let loss = lambda * weights.iter().map(|w| w.abs()).sum::<f64>();
    let grad = weights.iter().map(|&w| lambda * sign(w)).collect();
    (loss, grad)
}

#[inline]
fn sign(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}
