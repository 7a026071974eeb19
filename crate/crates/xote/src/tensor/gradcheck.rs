//! Finite-difference gradient verification.

/// Step size for central differences on double precision.
pub const FD_STEP: f64 = 1e-5;

/// Compare an analytic gradient against central finite differences of a
/// deterministic loss function.
///
/// For every coordinate in `coords` the loss is evaluated at `param[i] +- h`
/// and the relative error `|analytic - numeric| / max(|analytic|, |numeric|,
/// 1e-8)` is computed; the maximum over all checked coordinates is returned.
/// `params` is restored to its original values before returning.
pub fn gradient_check<F>(
    mut loss_fn: F,
    params: &mut [f64],
    analytic: &[f64],
    coords: &[usize],
) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut max_rel = 0.0f64;
    for &i in coords {
        let orig = params[i];
        params[i] = orig + FD_STEP;
        let up = loss_fn(params);
        params[i] = orig - FD_STEP;
        let down = loss_fn(params);
        params[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max((analytic[i] - numeric).abs() / denom);
    }
    max_rel
}
