//! Complex matrix products and deterministic power-iteration factorizations.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::signal::{C64, CVec};

pub type CMat = Array2<C64>;

/// Kronecker product `A (x) B` of an (m x n) and (p x q) matrix, giving (mp x nq).
pub fn kronecker(a: &CMat, b: &CMat) -> CMat {
    let (m, n) = a.dim();
    let (p, q) = b.dim();
    Array2::from_shape_fn((m * p, n * q), |(i, j)| {
        a[(i / p, j / q)] * b[(i % p, j % q)]
    })
}

/// Khatri-Rao product: column j of the result is `a_j (x) b_j`; needs equal column counts.
pub fn khatri_rao(a: &CMat, b: &CMat) -> Result<CMat> {
    let (m, n) = a.dim();
    let (p, nb) = b.dim();
    if n != nb {
        return Err(Error::DimensionMismatch(format!(
            "khatri_rao needs equal column counts, got {n} and {nb}"
        )));
    }
    Ok(Array2::from_shape_fn((m * p, n), |(i, j)| {
        a[(i / p, j)] * b[(i % p, j)]
    }))
}

/// Face-splitting (transposed Khatri-Rao) product: row i is `a_i (x) b_i`;
/// needs equal row counts. For A (m x n) and B (m x p) the result is m x np.
pub fn face_split(a: &CMat, b: &CMat) -> Result<CMat> {
    let (m, n) = a.dim();
    let (mb, p) = b.dim();
    if m != mb {
        return Err(Error::DimensionMismatch(format!(
            "face_split needs equal row counts, got {m} and {mb}"
        )));
    }
    Ok(Array2::from_shape_fn((m, n * p), |(i, j)| {
        a[(i, j / p)] * b[(i, j % p)]
    }))
}

/// Circularly shift the rows: row n of the result is row (n-k) mod m of the input.
pub fn shift_rows(a: &CMat, k: i64) -> CMat {
    let (m, n) = a.dim();
    let k = k.rem_euclid(m as i64);
    Array2::from_shape_fn((m, n), |(i, j)| {
        a[(((i as i64 - k).rem_euclid(m as i64)) as usize, j)]
    })
}

/// Reverse the rows about row zero: row n of the result is row (-n) mod m of the input.
pub fn reverse_rows(a: &CMat) -> CMat {
    let (m, n) = a.dim();
    Array2::from_shape_fn((m, n), |(i, j)| {
        a[(((-(i as i64)).rem_euclid(m as i64)) as usize, j)]
    })
}

/// Entrywise conjugate.
pub fn conj_mat(a: &CMat) -> CMat {
    a.mapv(|z| z.conj())
}

/// Conjugate transpose.
pub fn adjoint(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

pub fn frobenius_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Deterministic start vector for the power iterations: a golden-ratio phase
/// ramp, which has no alignment with any symmetric structure in the data.
pub fn power_start(n: usize) -> CVec {
    let phi = 0.618_033_988_749_894_9;
    let mut v: CVec = Array1::from_shape_fn(n, |i| {
        C64::from_polar(1.0, 2.0 * std::f64::consts::PI * phi * i as f64)
    });
    let nrm = (n as f64).sqrt();
    v.mapv_inplace(|z| z / nrm);
    v
}

fn vec_norm(x: &CVec) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Leading eigenpair of a Hermitian matrix by power iteration.
///
/// Converges to the eigenvalue of largest magnitude. Deterministic (fixed
/// start vector), tolerance 1e-10 on the phase-aligned iterate difference,
/// at most `max_iters` sweeps.
pub fn leading_eigvec_hermitian(h: &CMat, max_iters: usize) -> Result<(f64, CVec)> {
    let (m, n) = h.dim();
    if m != n {
        return Err(Error::DimensionMismatch(format!("eigvec needs square, got {m} x {n}")));
    }
    let mut v = power_start(n);
    let mut lambda = 0.0;
    for _ in 0..max_iters {
        let mut w = h.dot(&v);
        let nw = vec_norm(&w);
        if nw == 0.0 {
            return Err(Error::ZeroInput("matrix annihilates the start vector".into()));
        }
        w.mapv_inplace(|z| z / nw);
        // align global phase before measuring progress
        let ip: C64 = w.iter().zip(v.iter()).map(|(a, b)| a * b.conj()).sum();
        if ip.norm() > 0.0 {
            let rot = ip.conj() / ip.norm();
            w.mapv_inplace(|z| z * rot);
        }
        let delta = vec_norm(&(&w - &v));
        v = w;
        lambda = nw;
        if delta < 1e-10 {
            break;
        }
    }
    // Rayleigh quotient carries the eigenvalue sign.
    let hv = h.dot(&v);
    let rq: C64 = v.iter().zip(hv.iter()).map(|(a, b)| b * a.conj()).sum();
    let _ = lambda;
    Ok((rq.re, v))
}

/// Leading singular triple (sigma, u, v) of a rectangular complex matrix,
/// by power iteration on `M^* M`. Errors on the zero matrix.
pub fn leading_singular_triple(m: &CMat) -> Result<(f64, CVec, CVec)> {
    let (rows, cols) = m.dim();
    if frobenius_norm(m) == 0.0 {
        return Err(Error::ZeroInput("singular triple of zero matrix".into()));
    }
    let mh = adjoint(m);
    let mut v = power_start(cols);
    for _ in 0..(30 * cols.max(rows) + 300) {
        let mut w = mh.dot(&m.dot(&v));
        let nw = vec_norm(&w);
        if nw == 0.0 {
            // start vector in the null space; perturb deterministically
            v = power_start(cols).mapv(|z| z * C64::new(0.3, 0.7));
            continue;
        }
        w.mapv_inplace(|z| z / nw);
        let ip: C64 = w.iter().zip(v.iter()).map(|(a, b)| a * b.conj()).sum();
        if ip.norm() > 0.0 {
            let rot = ip.conj() / ip.norm();
            w.mapv_inplace(|z| z * rot);
        }
        let delta = vec_norm(&(&w - &v));
        v = w;
        if delta < 1e-13 {
            break;
        }
    }
    let mv = m.dot(&v);
    let sigma = vec_norm(&mv);
    if sigma == 0.0 {
        return Err(Error::ZeroInput("zero leading singular value".into()));
    }
    let u = mv.mapv(|z| z / sigma);
    Ok((sigma, u, v))
}
