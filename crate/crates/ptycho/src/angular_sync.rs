//! Angular synchronization: recover a vector, up to one global phase, from
//! noisy banded diagonals of its rank-1 Gram matrix.
//!
//! Diagonal convention: `diag(p)_n ~ v_n * conj(v_{n+p})` for offsets
//! `p in -(kappa-1) ..= kappa-1`. Magnitudes come from the clipped offset-0
//! diagonal; phases come from the leading eigenvector of the Hermitian matrix
//! holding the normalized off-diagonal phase data.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::signal::{C64, CVec};

/// Which Gram matrix the diagonals describe: the spatial signal `x x^*` or its
/// Fourier transform `xhat xhat^*`. Purely a bookkeeping tag for callers that
/// must remember to invert a DFT afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagDomain {
    Spatial,
    Fourier,
}

/// Estimated diagonals of a rank-1 Gram matrix, offsets `|p| <= kappa-1`.
#[derive(Debug, Clone)]
pub struct BandedDiagonals {
    diags: Vec<CVec>,
    kappa: usize,
    d: usize,
    pub domain: DiagDomain,
}

impl BandedDiagonals {
    /// `diags[i]` is the offset `i - (kappa-1)` diagonal; all must have length d.
    pub fn new(diags: Vec<CVec>, kappa: usize, domain: DiagDomain) -> Result<Self> {
        if kappa == 0 || diags.len() != 2 * kappa - 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} diagonals for kappa = {kappa}, got {}",
                2 * kappa.max(1) - 1,
                diags.len()
            )));
        }
        let d = diags[0].len();
        if diags.iter().any(|v| v.len() != d) {
            return Err(Error::DimensionMismatch("diagonal lengths differ".into()));
        }
        Ok(Self { diags, kappa, d, domain })
    }

    /// Build the exact diagonals of `v v^*` (testing and oracle construction).
    pub fn from_vector(v: &CVec, kappa: usize, domain: DiagDomain) -> Self {
        let diags = (-(kappa as i64 - 1)..=(kappa as i64 - 1))
            .map(|p| crate::signal::autocorr_diag(v, p))
            .collect();
        Self { diags, kappa, d: v.len(), domain }
    }

    pub fn diag(&self, p: i64) -> &CVec {
        let idx = (p + self.kappa as i64 - 1) as usize;
        &self.diags[idx]
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn offsets(&self) -> impl Iterator<Item = i64> {
        let k = self.kappa as i64;
        -(k - 1)..=(k - 1)
    }

    /// Largest diagonal magnitude, used for relative thresholds.
    pub fn max_abs(&self) -> f64 {
        self.diags
            .iter()
            .flat_map(|v| v.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Worst relative violation of `diag(-p) = conj(shift(diag(p), p))`.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.max_abs().max(1e-300);
        let mut worst: f64 = 0.0;
        for p in 1..self.kappa as i64 {
            let neg = self.diag(-p);
            let pos = self.diag(p);
            for n in 0..self.d {
                let transported = pos[((n as i64 - p).rem_euclid(self.d as i64)) as usize].conj();
                worst = worst.max((neg[n] - transported).norm() / scale);
            }
        }
        worst
    }
}

/// A synchronization problem: banded Gram diagonals plus dimensions.
#[derive(Debug, Clone)]
pub struct SyncProblem {
    pub diags: BandedDiagonals,
}

impl SyncProblem {
    pub fn new(diags: BandedDiagonals) -> Self {
        Self { diags }
    }
}

/// Entrywise magnitudes: sqrt of the offset-0 diagonal with negative real
/// parts clipped to zero.
pub fn magnitudes(p: &SyncProblem) -> CVec {
    p.diags.diag(0).mapv(|z| C64::new(z.re.max(0.0).sqrt(), 0.0))
}

/// Recover `v` up to a global phase from its banded Gram diagonals.
///
/// Method: place `diag(p)_n / |diag(p)_n|` at matrix position `(n, n+p)`
/// (zero where the magnitude is below a relative threshold), Hermitize, take
/// the leading eigenvector by power iteration (at most `10 d` sweeps), read
/// phases off it, and attach the magnitudes. The reported vector is rotated so
/// its largest-magnitude entry is real positive.
pub fn angular_sync(p: &SyncProblem) -> Result<CVec> {
    let d = p.diags.dim();
    let kappa = p.diags.kappa();
    if kappa < 2 {
        return Err(Error::BandTooNarrow { kappa });
    }
    let mag = magnitudes(p);
    if mag.iter().all(|z| z.re == 0.0) {
        return Err(Error::ZeroInput("all-zero offset-0 diagonal".into()));
    }
    let eps = 1e-10 * p.diags.max_abs();
    let mut h: CMat = Array2::zeros((d, d));
    for off in p.diags.offsets() {
        let diag = p.diags.diag(off);
        for n in 0..d {
            let z = diag[n];
            if z.norm() > eps {
                h[(n, ((n as i64 + off).rem_euclid(d as i64)) as usize)] += z / z.norm();
            }
        }
    }
    // The unit diagonal from offset 0 keeps the top eigenvalue strictly
    // dominant; without it a two-offset band on even d is bipartite and the
    // extreme eigenvalues tie up to sign.
    // Hermitize: both offsets +-p contribute estimates of the same entries.
    let hh = linalg::adjoint(&h);
    let h = (&h + &hh).mapv(|z| z * 0.5);
    // Narrow bands have a thin spectral gap (ratio ~ 1 - O(kappa^2/d^2)), so
    // the iteration cap needs a floor well above 10*d for small kappa.
    let (_, eigvec) = linalg::leading_eigvec_hermitian(&h, (10 * d).max(4000))?;

    let phase_floor = 1e-10
        * eigvec
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
    let mut out: CVec = Array1::from_shape_fn(d, |n| {
        let e = eigvec[n];
        if e.norm() > phase_floor && e.norm() > 0.0 {
            mag[n].re * (e / e.norm())
        } else {
            // phase of a (near-)zero eigenvector entry carries no information
            C64::new(mag[n].re, 0.0)
        }
    });
    // global phase fix: largest-magnitude entry real positive
    let mut imax = 0;
    for n in 0..d {
        if out[n].norm() > out[imax].norm() {
            imax = n;
        }
    }
    if out[imax].norm() > 0.0 {
        let rot = out[imax].conj() / out[imax].norm();
        out.mapv_inplace(|z| z * rot);
    }
    Ok(out)
}
