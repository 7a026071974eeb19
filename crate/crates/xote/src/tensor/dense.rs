//! Feed-forward layer with ReLU / softmax activations.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Softmax,
}

/// `y = f(x W + b)` applied independently to every row of `x`.
///
/// Returns the activated output and the pre-activation values (needed by the
/// backward pass).
pub fn dense(x: &Matrix, w: &Matrix, b: &[f64], act: Activation) -> Result<(Matrix, Matrix)> {
    if x.cols() != w.rows() || b.len() != w.cols() {
        return Err(Error::Config(format!(
            "dense shape mismatch: x {}x{}, W {}x{}, b {}",
            x.rows(),
            x.cols(),
            w.rows(),
            w.cols(),
            b.len()
        )));
    }
    let mut z = x.matmul(w)?;
    for r in 0..z.rows() {
        for (zv, bv) in z.row_mut(r).iter_mut().zip(b) {
            *zv += bv;
        }
    }
    let mut y = z.clone();
    match act {
        Activation::None => {}
        Activation::Relu => y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Softmax => {
            for r in 0..y.rows() {
                softmax_in_place(y.row_mut(r));
            }
        }
    }
    Ok((y, z))
}

/// Numerically stable softmax (max subtraction). The result sums to 1.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

/// ReLU derivative; the subgradient at exactly 0 is 0.
#[inline]
pub fn relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub struct DenseGrads {
    pub grad_x: Matrix,
    pub grad_w: Matrix,
    pub grad_b: Vec<f64>,
}

/// Backward pass for [`dense`] with `None` or `Relu` activation.
///
/// `grad_y` is the loss gradient at the activated output; `z` is the
/// pre-activation cache returned by the forward pass. Softmax is not handled
/// here: the model fuses it with cross-entropy, whose logit gradient is
/// `q - p` (see [`crate::tensor::loss`]); for a standalone softmax Jacobian
/// use [`softmax_backward`].
pub fn dense_backward(
    x: &Matrix,
    w: &Matrix,
    z: &Matrix,
    grad_y: &Matrix,
    act: Activation,
) -> Result<DenseGrads> {
    if act == Activation::Softmax {
        return Err(Error::Config(
            "dense_backward does not support softmax; use the fused cross-entropy gradient".into(),
        ));
    }
    let mut grad_z = grad_y.clone();
    if act == Activation::Relu {
        for (g, &zv) in grad_z.data_mut().iter_mut().zip(z.data()) {
            *g *= relu_grad(zv);
        }
    }
    let grad_w = x.t_matmul(&grad_z)?;
    let mut grad_b = vec![0.0; w.cols()];
    for r in 0..grad_z.rows() {
        for (gb, &g) in grad_b.iter_mut().zip(grad_z.row(r)) {
            *gb += g;
        }
    }
    let grad_x = grad_z.matmul_t(w)?;
    Ok(DenseGrads {
        grad_x,
        grad_w,
        grad_b,
    })
}

/// Jacobian-vector product of softmax: given `q = softmax(z)` and `dL/dq`,
/// returns `dL/dz` with `dz_i = q_i (dq_i - sum_j dq_j q_j)`.
pub fn softmax_backward(q: &[f64], grad_q: &[f64]) -> Vec<f64> {
    let dot: f64 = q.iter().zip(grad_q).map(|(&qi, &gi)| qi * gi).sum();
    q.iter()
        .zip(grad_q)
        .map(|(&qi, &gi)| qi * (gi - dot))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradient_check;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let q = softmax(&[0.0, 0.0, 0.0]);
        for v in &q {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_exact_exponent_arithmetic() {
        let q = softmax(&[2.0f64.ln(), 0.0, 0.0]);
        assert!((q[0] - 0.5).abs() < 1e-12);
        assert!((q[1] - 0.25).abs() < 1e-12);
        assert!((q[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one_and_is_positive() {
        let q = softmax(&[12.3, -4.0, 0.7, 300.0, 299.0]);
        let sum: f64 = q.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(q.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        assert_eq!(relu_grad(0.0), 0.0);
        assert_eq!(relu_grad(-1e-300), 0.0);
        assert_eq!(relu_grad(1e-300), 1.0);
    }

    #[test]
    fn dense_shape_mismatch_is_config_error() {
        let x = Matrix::zeros(1, 3);
        let w = Matrix::zeros(2, 4);
        assert!(matches!(
            dense(&x, &w, &[0.0; 4], Activation::None),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let x = Matrix::from_rows(&[vec![0.3, -1.2], vec![2.0, 0.0]]).unwrap();
        let w = Matrix::from_rows(&[vec![0.5, -0.7, 0.1], vec![1.5, 0.2, -0.4]]).unwrap();
        let b = vec![0.1, -0.2, 0.3];
        let (y, z) = dense(&x, &w, &b, Activation::Relu).unwrap();
        // Loss: sum of outputs.
        let grad_y = {
            let mut g = y.clone();
            g.data_mut().iter_mut().for_each(|v| *v = 1.0);
            g
        };
        let grads = dense_backward(&x, &w, &z, &grad_y, Activation::Relu).unwrap();

        let loss_w = |vals: &[f64]| {
            let ww = Matrix::from_vec(2, 3, vals.to_vec()).unwrap();
            let (y, _) = dense(&x, &ww, &b, Activation::Relu).unwrap();
            y.data().iter().sum::<f64>()
        };
        let mut wp = w.data().to_vec();
        let all: Vec<usize> = (0..wp.len()).collect();
        let err = gradient_check(loss_w, &mut wp, grads.grad_w.data(), &all);
        assert!(err < 1e-6, "dense W grad rel err {err}");

        let loss_x = |vals: &[f64]| {
            let xx = Matrix::from_vec(2, 2, vals.to_vec()).unwrap();
            let (y, _) = dense(&xx, &w, &b, Activation::Relu).unwrap();
            y.data().iter().sum::<f64>()
        };
        let mut xp = x.data().to_vec();
        let all: Vec<usize> = (0..xp.len()).collect();
        let err = gradient_check(loss_x, &mut xp, grads.grad_x.data(), &all);
        assert!(err < 1e-6, "dense x grad rel err {err}");
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let z = vec![0.2, -0.5, 1.3];
        let grad_q = vec![0.7, -0.3, 0.1];
        let q = softmax(&z);
        let analytic = softmax_backward(&q, &grad_q);
        let loss = |zv: &[f64]| {
            let q = softmax(zv);
            q.iter().zip(&grad_q).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut params = z.clone();
        let all: Vec<usize> = (0..3).collect();
        let err = gradient_check(loss, &mut params, &analytic, &all);
        assert!(err < 1e-6, "softmax grad rel err {err}");
    }
}
