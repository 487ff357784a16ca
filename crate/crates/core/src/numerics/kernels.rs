//! Forward kernels shared by the tape and by tape-free callers.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;

use super::tensor::Tensor2D;
use crate::error::{Error, Result};

/// Whether stochastic layers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor2D) -> Tensor2D {
    let mut out = x.detached();
    for r in 0..x.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Row-wise log-softmax, `x - max - ln Σ exp(x - max)`.
pub fn log_softmax_rows(x: &Tensor2D) -> Tensor2D {
    let mut out = x.detached();
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

/// Standard normal CDF via the error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub(crate) fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu_scalar(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub(crate) fn gelu_derivative(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

pub fn gelu(x: &Tensor2D) -> Tensor2D {
    x.map(gelu_scalar)
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub(crate) fn dropout_mask<R: Rng>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout. Identity in [`Mode::Infer`] or when `rate == 0`.
pub fn dropout<R: Rng>(x: &Tensor2D, rate: f64, mode: Mode, rng: &mut R) -> Result<Tensor2D> {
    check_dropout_rate(rate)?;
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(x.detached());
    }
    let mask = dropout_mask(x.len(), rate, rng);
    let mut out = x.detached();
    out.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    Ok(out)
}
