//! 1D convolution over token sequences with same-padding.

use crate::error::{Error, Result};
use crate::rng::XRng;
use crate::tensor::Matrix;
use rand::Rng;

/// A 1D convolution kernel.
///
/// `weights[tap][i][o]` is stored flat as `tap * in_dim * out_dim + i * out_dim + o`,
/// where tap `t` corresponds to sequence offset `t - (width-1)/2`. The width
/// must be odd so same-padding is symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub width: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvKernel {
    pub fn zeros(width: usize, in_dim: usize, out_dim: usize) -> Result<ConvKernel> {
        if width.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "conv kernel width must be odd, got {width}"
            )));
        }
        Ok(ConvKernel {
            width,
            in_dim,
            out_dim,
            weights: vec![0.0; width * in_dim * out_dim],
            bias: vec![0.0; out_dim],
        })
    }

    /// Glorot-uniform weights, zero bias. Fan counts follow the usual conv
    /// convention: fan_in = width*in_dim, fan_out = width*out_dim.
    pub fn glorot(
        width: usize,
        in_dim: usize,
        out_dim: usize,
        rng: &mut XRng,
    ) -> Result<ConvKernel> {
        let mut k = ConvKernel::zeros(width, in_dim, out_dim)?;
        let limit = (6.0 / ((width * in_dim + width * out_dim) as f64)).sqrt();
        for w in k.weights.iter_mut() {
            *w = rng.gen_range(-limit..limit);
        }
        Ok(k)
    }

    pub fn glorot_limit(&self) -> f64 {
        (6.0 / ((self.width * self.in_dim + self.width * self.out_dim) as f64)).sqrt()
    }
}

/// Same-padded 1D convolution: `out[p] = bias + sum_j x[p+j] . weights[j]`
/// with `j` ranging over `-(w-1)/2 ..= (w-1)/2` and out-of-range positions
/// reading as zero vectors. Output length equals input length for any n >= 1.
pub fn conv1d(x: &Matrix, k: &ConvKernel) -> Result<Matrix> {
    if x.cols() != k.in_dim {
        return Err(Error::Config(format!(
            "conv1d input dim {} does not match kernel in_dim {}",
            x.cols(),
            k.in_dim
        )));
    }
    if x.rows() == 0 {
        return Err(Error::Config(
            "conv1d requires at least one position".into(),
        ));
    }
    if !x.is_finite() {
        return Err(Error::Numeric(
            "conv1d input contains non-finite values".into(),
        ));
    }
    let n = x.rows();
    let half = (k.width - 1) / 2;
    let mut out = Matrix::zeros(n, k.out_dim);
    for p in 0..n {
        let orow = out.row_mut(p);
        orow.copy_from_slice(&k.bias);
        for tap in 0..k.width {
            let src = p as isize + tap as isize - half as isize;
            if src < 0 || src >= n as isize {
                continue; // zero padding contributes nothing
            }
            let xrow = x.row(src as usize);
            for (i, &xv) in xrow.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let wbase = (tap * k.in_dim + i) * k.out_dim;
                for (o, ov) in orow.iter_mut().enumerate() {
                    *ov += xv * k.weights[wbase + o];
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv1d`] with respect to input, weights and bias.
pub struct ConvGrads {
    pub grad_x: Matrix,
    pub grad_weights: Vec<f64>,
    pub grad_bias: Vec<f64>,
}

/// Backward pass of the same-padded convolution.
pub fn conv1d_backward(x: &Matrix, k: &ConvKernel, grad_out: &Matrix) -> Result<ConvGrads> {
    if grad_out.rows() != x.rows() || grad_out.cols() != k.out_dim {
        return Err(Error::Config(format!(
            "conv1d_backward grad shape {}x{} does not match output {}x{}",
            grad_out.rows(),
            grad_out.cols(),
            x.rows(),
            k.out_dim
        )));
    }
    let n = x.rows();
    let half = (k.width - 1) / 2;
    let mut grad_x = Matrix::zeros(n, k.in_dim);
    let mut grad_w = vec![0.0; k.weights.len()];
    let mut grad_b = vec![0.0; k.out_dim];

    for p in 0..n {
        let grow = grad_out.row(p);
        for (o, &g) in grow.iter().enumerate() {
            grad_b[o] += g;
        }
        for tap in 0..k.width {
            let src = p as isize + tap as isize - half as isize;
            if src < 0 || src >= n as isize {
                continue;
            }
            let src = src as usize;
            let xrow = x.row(src);
            let gxrow = grad_x.row_mut(src);
            for i in 0..k.in_dim {
                let wbase = (tap * k.in_dim + i) * k.out_dim;
                let mut gx = 0.0;
                let xv = xrow[i];
                for (o, &g) in grow.iter().enumerate() {
                    gx += g * k.weights[wbase + o];
                    grad_w[wbase + o] += g * xv;
                }
                gxrow[i] += gx;
            }
        }
    }
    Ok(ConvGrads {
        grad_x,
        grad_weights: grad_w,
        grad_bias: grad_b,
    })
}
