//! Discrete-signal operators on complex vectors.
//!
//! Conventions, fixed once and relied on everywhere else:
//!
//! * DFT: forward is unnormalized, `(dft x)_k = sum_n x_n exp(-2*pi*i*n*k/d)`;
//!   the inverse carries the `1/d` factor. Hence `dft(dft(x)) = d * reverse(x)`
//!   and `||dft(x)||^2 = d * ||x||^2`.
//! * Indices are zero-based and reduce modulo `d`: `shift(x, k)_n = x_{n-k}`,
//!   `reverse(x)_n = x_{-n}` (so `reverse(x)_0 = x_0`),
//!   `modulate(x, k)_n = x_n exp(2*pi*i*k*n/d)`.
//! * `autocorr_diag(v, p)_n = v_n * conj(v_{n+p})` is the p-th diagonal of the
//!   rank-1 Gram matrix `v v^*` read along the signal index.

use std::cell::RefCell;
use std::f64::consts::PI;

use ndarray::Array1;
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CVec = Array1<C64>;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT.
pub fn dft(x: &CVec) -> CVec {
    let mut buf: Vec<C64> = x.to_vec();
    PLANNER.with(|p| {
        let fft = p.borrow_mut().plan_fft_forward(buf.len());
        fft.process(&mut buf);
    });
    Array1::from_vec(buf)
}

/// Inverse DFT, carrying the 1/d normalization.
pub fn idft(x: &CVec) -> CVec {
    let d = x.len();
    let mut buf: Vec<C64> = x.to_vec();
    PLANNER.with(|p| {
        let fft = p.borrow_mut().plan_fft_inverse(buf.len());
        fft.process(&mut buf);
    });
    let scale = 1.0 / d as f64;
    Array1::from_vec(buf.into_iter().map(|z| z * scale).collect())
}

/// Circular shift: `shift(x, k)_n = x_{(n-k) mod d}`. Any integer `k` is reduced mod d.
pub fn shift(x: &CVec, k: i64) -> CVec {
    let d = x.len() as i64;
    let k = k.rem_euclid(d);
    Array1::from_shape_fn(x.len(), |n| x[((n as i64 - k).rem_euclid(d)) as usize])
}

/// Reversal about the first entry: `reverse(x)_n = x_{(-n) mod d}`.
pub fn reverse(x: &CVec) -> CVec {
    let d = x.len() as i64;
    Array1::from_shape_fn(x.len(), |n| x[((-(n as i64)).rem_euclid(d)) as usize])
}

/// Modulation: `modulate(x, k)_n = x_n exp(2 pi i k n / d)`.
pub fn modulate(x: &CVec, k: i64) -> CVec {
    let d = x.len() as f64;
    Array1::from_shape_fn(x.len(), |n| {
        x[n] * C64::from_polar(1.0, 2.0 * PI * k as f64 * n as f64 / d)
    })
}

/// Entrywise complex conjugate.
pub fn conj(x: &CVec) -> CVec {
    x.mapv(|z| z.conj())
}

/// Hadamard (entrywise) product.
pub fn hadamard(x: &CVec, y: &CVec) -> Result<CVec> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    Ok(x * y)
}

/// Circular convolution `(x * y)_k = sum_n x_n y_{(k-n) mod d}`, computed via FFT.
pub fn circ_conv(x: &CVec, y: &CVec) -> Result<CVec> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    let prod = dft(x) * dft(y);
    Ok(idft(&prod))
}

/// Sub-sampling operator `(Z_s x)_n = x_{n s}`; requires `s | d`.
pub fn subsample(x: &CVec, s: usize) -> Result<CVec> {
    let d = x.len();
    if s == 0 || d % s != 0 {
        return Err(Error::NonDivisor { factor: s, dim: d });
    }
    Ok(Array1::from_shape_fn(d / s, |n| x[n * s]))
}

/// The p-th Gram diagonal `autocorr_diag(v, p)_n = v_n conj(v_{(n+p) mod d})`.
pub fn autocorr_diag(v: &CVec, p: i64) -> CVec {
    let d = v.len() as i64;
    Array1::from_shape_fn(v.len(), |n| {
        v[n] * v[((n as i64 + p).rem_euclid(d)) as usize].conj()
    })
}

/// Euclidean norm.
pub fn norm(x: &CVec) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Inner product `<x, y> = sum_n x_n conj(y_n)`.
pub fn inner(x: &CVec, y: &CVec) -> C64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b.conj()).sum()
}

/// True when every entry is finite.
pub fn all_finite(x: &CVec) -> bool {
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Standard basis vector `e_i` of length `d`.
pub fn unit_vector(d: usize, i: usize) -> CVec {
    let mut v = Array1::zeros(d);
    v[i] = C64::new(1.0, 0.0);
    v
}
