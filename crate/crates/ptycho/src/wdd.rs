//! Known-mask Wigner distribution deconvolution.
//!
//! Write `T = (F Y)^T`, so column k of `T` is the k-th DFT coefficient of
//! every shifted spectrum, as a vector over shifts. Noise-free,
//!
//! ```text
//! T_k = d * autocorr_diag(x, k) (conv) autocorr_diag(reverse(m), -k)
//! ```
//!
//! so a pointwise Fourier division by the mask term frees the Gram diagonals
//! of the specimen:
//!
//! ```text
//! autocorr_diag(x, k) = idft( dft(T_k) / (d * dft(autocorr_diag(reverse(m), -k))) )
//! ```
//!
//! The divisions are only stable when the mask constant `mu` (the smallest
//! denominator modulus over the band) is bounded away from zero; degenerate
//! masks are rejected rather than regularized.
//!
//! The same machinery covers masks with compact spatial support (diagonals of
//! `x x^*`) and band-limited masks with compact Fourier support (diagonals of
//! `xhat xhat^*`), the latter through an exact reindexing duality of the
//! measurement matrix; see [`MaskDomain`].

use ndarray::{Array1, Array2};

use crate::angular_sync::{self, BandedDiagonals, DiagDomain, SyncProblem};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::measurement::MeasurementMatrix;
use crate::signal::{self, C64, CVec};

/// Relative division guard: denominator entries with modulus below
/// `EPS_DIV * max |denominator|` abort the division.
pub const EPS_DIV: f64 = 1e-12;

/// Which domain the mask is compactly supported in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskDomain {
    /// `supp(m) inside [delta]_0`: diagonals of `x x^*` are estimated.
    Spatial,
    /// `supp(dft(m)) inside [delta]_0`: diagonals of `dft(x) dft(x)^*` are
    /// estimated and one inverse DFT finishes the reconstruction.
    Fourier,
}

/// Pointwise-division denominators for one mask, plus the mask constant mu.
#[derive(Debug, Clone)]
pub struct MaskSpectra {
    /// `denom[i] = dft(autocorr_diag(reverse(m), -p))` for offset `p = i - (kappa-1)`.
    denom: Vec<CVec>,
    pub mu: f64,
    pub kappa: usize,
    pub delta: usize,
    d: usize,
}

impl MaskSpectra {
    pub fn denom(&self, p: i64) -> &CVec {
        &self.denom[(p + self.kappa as i64 - 1) as usize]
    }

    pub fn dim(&self) -> usize {
        self.d
    }
}

/// Division denominators and mask constant for offsets `|p| <= kappa-1`.
///
/// `delta` is the declared support size of `m` (entries at and beyond index
/// `delta` must vanish); it bounds the usable band and feeds the sub-sampling
/// separation guard.
pub fn mask_spectra(m: &CVec, delta: usize, kappa: usize) -> Result<MaskSpectra> {
    if kappa == 0 {
        return Err(Error::DimensionMismatch("kappa must be at least 1".into()));
    }
    if kappa > delta {
        return Err(Error::DimensionMismatch(format!(
            "kappa = {kappa} exceeds mask support delta = {delta}"
        )));
    }
    if signal::norm(m) == 0.0 {
        return Err(Error::ZeroInput("zero mask".into()));
    }
    let d = m.len();
    let m_rev = signal::reverse(m);
    let mut denom = Vec::with_capacity(2 * kappa - 1);
    let mut mu = f64::INFINITY;
    let mut dmax: f64 = 0.0;
    for p in -(kappa as i64 - 1)..=(kappa as i64 - 1) {
        let spec = signal::dft(&signal::autocorr_diag(&m_rev, -p));
        for z in spec.iter() {
            mu = mu.min(z.norm());
            dmax = dmax.max(z.norm());
        }
        denom.push(spec);
    }
    let spectra = MaskSpectra { denom, mu, kappa, delta, d };
    if mu < EPS_DIV * dmax || dmax == 0.0 {
        return Err(Error::IllConditionedMask { mu, threshold: EPS_DIV * dmax });
    }
    Ok(spectra)
}

/// The transformed measurement matrix `T = (F Y)^T`: DFT every column of Y,
/// then transpose, so that `T[(shift l, mode k)] = dft(y_l)_k`. Requires a
/// full square (d x d) measurement matrix.
pub fn lhs_transform(y: &MeasurementMatrix) -> Result<CMat> {
    if y.modes != y.d || y.shifts != y.d {
        return Err(Error::DimensionMismatch(format!(
            "lhs_transform needs full d x d measurements, got {} x {}",
            y.modes, y.shifts
        )));
    }
    Ok(transform_columns(&y.data))
}

/// DFT each column of a real matrix and transpose. Rows of the result are
/// indexed by the input's columns (shifts); columns by the DFT coefficient.
fn transform_columns(data: &Array2<f64>) -> CMat {
    let (rows, cols) = data.dim();
    let mut out: CMat = Array2::zeros((cols, rows));
    for c in 0..cols {
        let col: CVec = Array1::from_shape_fn(rows, |r| C64::new(data[(r, c)], 0.0));
        let spec = signal::dft(&col);
        for r in 0..rows {
            out[(c, r)] = spec[r];
        }
    }
    out
}

fn column(t: &CMat, idx: usize) -> CVec {
    t.column(idx).to_owned()
}

/// One guarded pointwise division: `idft(dft(num_col) / (scale * denom))`.
fn divide_one(num_col: &CVec, denom: &CVec, scale: f64, offset: i64) -> Result<CVec> {
    let dmax = denom.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let dmin = denom.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let threshold = EPS_DIV * dmax;
    if dmin < threshold || dmax == 0.0 {
        return Err(Error::DivisionBlowup { offset, min_abs: dmin, threshold });
    }
    let num = signal::dft(num_col);
    let quotient: CVec =
        Array1::from_shape_fn(num.len(), |i| num[i] / (denom[i] * scale));
    Ok(signal::idft(&quotient))
}

/// Divide out the mask term from the full transformed matrix, returning the
/// estimated Gram diagonals `autocorr_diag(x, p)` for `|p| <= kappa-1`.
pub fn wdd_divide(t: &CMat, spectra: &MaskSpectra, kappa: usize) -> Result<BandedDiagonals> {
    let (rows, cols) = t.dim();
    if rows != spectra.dim() || cols != spectra.dim() {
        return Err(Error::DimensionMismatch(format!(
            "transformed matrix is {rows} x {cols}, mask lives in dimension {}",
            spectra.dim()
        )));
    }
    if kappa > spectra.kappa {
        return Err(Error::DimensionMismatch(format!(
            "kappa = {kappa} exceeds prepared band {}",
            spectra.kappa
        )));
    }
    let d = spectra.dim() as i64;
    let scale = spectra.dim() as f64;
    let mut diags = Vec::with_capacity(2 * kappa - 1);
    for p in -(kappa as i64 - 1)..=(kappa as i64 - 1) {
        let col = column(t, p.rem_euclid(d) as usize);
        diags.push(divide_one(&col, spectra.denom(p), scale, p)?);
    }
    BandedDiagonals::new(diags, kappa, DiagDomain::Spatial)
}

/// Divide out the mask term from frequency-sub-sampled measurements.
///
/// `t_sub` must be the transform of a `K x d` measurement matrix (K equally
/// spaced modes, all d shifts): a `d x K` complex matrix. Offsets alias modulo
/// K, so the band is recoverable only when no other offset with a nonvanishing
/// mask autocorrelation shares a residue class: `K >= delta + kappa - 1`.
pub fn wdd_divide_subsampled(
    t_sub: &CMat,
    spectra: &MaskSpectra,
    kappa: usize,
    k_modes: usize,
    l_shifts: usize,
) -> Result<BandedDiagonals> {
    let d = spectra.dim();
    if l_shifts != d {
        return Err(Error::AliasOverlap(format!(
            "shift sub-sampling (L = {l_shifts} < d = {d}) folds the convolution output; \
             only the band-limited mask variant supports it"
        )));
    }
    if k_modes == d {
        return wdd_divide(t_sub, spectra, kappa);
    }
    if k_modes == 0 || d % k_modes != 0 {
        return Err(Error::NonDivisor { factor: k_modes, dim: d });
    }
    if k_modes < spectra.delta + kappa - 1 {
        return Err(Error::AliasOverlap(format!(
            "K = {k_modes} < delta + kappa - 1 = {}; aliased bands overlap",
            spectra.delta + kappa - 1
        )));
    }
    let (rows, cols) = t_sub.dim();
    if rows != d || cols != k_modes {
        return Err(Error::DimensionMismatch(format!(
            "sub-sampled transform is {rows} x {cols}, expected {d} x {k_modes}"
        )));
    }
    let mut diags = Vec::with_capacity(2 * kappa - 1);
    for p in -(kappa as i64 - 1)..=(kappa as i64 - 1) {
        let w = p.rem_euclid(k_modes as i64) as usize;
        let col = column(t_sub, w);
        diags.push(divide_one(&col, spectra.denom(p), k_modes as f64, p)?);
    }
    BandedDiagonals::new(diags, kappa, DiagDomain::Spatial)
}

/// Transform a (possibly frequency-sub-sampled) measurement matrix: DFT over
/// the measured modes of each column, transpose. For full sampling this is
/// [`lhs_transform`].
pub fn transform_measurements(y: &MeasurementMatrix) -> CMat {
    transform_columns(&y.data)
}

/// End-to-end known-mask recovery: transform, divide, synchronize.
///
/// `domain` selects the mask model. [`MaskDomain::Spatial`] expects
/// `supp(m) in [delta]_0` and tolerates frequency sub-sampling (`K < d`, all
/// shifts present). [`MaskDomain::Fourier`] expects `supp(dft(m)) in
/// [delta]_0`, requires full measurements, and recovers through the dual
/// reindexing `Y_dual[-k mod d, (l - (delta-1)) mod d] = d^2 Y[l, k]` with the
/// dual mask `shift(reverse(dft(m)), delta-1)`.
pub fn wdd_recover(
    y: &MeasurementMatrix,
    m: &CVec,
    kappa: usize,
    domain: MaskDomain,
) -> Result<CVec> {
    match domain {
        MaskDomain::Spatial => {
            let delta = mask_support(m)?;
            let spectra = mask_spectra(m, delta, kappa)?;
            let t = transform_measurements(y);
            let diags = if y.modes == y.d && y.shifts == y.d {
                wdd_divide(&t, &spectra, kappa)?
            } else {
                wdd_divide_subsampled(&t, &spectra, kappa, y.modes, y.shifts)?
            };
            angular_sync::angular_sync(&SyncProblem::new(diags))
        }
        MaskDomain::Fourier => {
            if y.modes != y.d || y.shifts != y.d {
                return Err(Error::AliasOverlap(
                    "band-limited mask recovery from sub-sampled data reduces to the \
                     spatial variant of the transposed problem; pass the full matrix"
                        .into(),
                ));
            }
            let d = y.d;
            let m_hat = signal::dft(m);
            let delta = mask_support(&m_hat)?;
            let dual_mask = signal::shift(&signal::reverse(&m_hat), delta as i64 - 1);
            let mut dual = Array2::zeros((d, d));
            let scale = (d * d) as f64;
            for l in 0..d {
                for k in 0..d {
                    let a = (d - k) % d;
                    let b = (l as i64 - (delta as i64 - 1)).rem_euclid(d as i64) as usize;
                    dual[(a, b)] = y.data[(l, k)] * scale;
                }
            }
            let dual_y = MeasurementMatrix {
                data: dual,
                d,
                delta,
                modes: d,
                shifts: d,
                snr_db: y.snr_db,
                seed: y.seed,
            };
            let xhat = wdd_recover(&dual_y, &dual_mask, kappa, MaskDomain::Spatial)?;
            Ok(signal::idft(&xhat))
        }
    }
}

/// Smallest `delta` with all entries at index >= delta below a relative floor.
fn mask_support(m: &CVec) -> Result<usize> {
    let mmax = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if mmax == 0.0 {
        return Err(Error::ZeroInput("zero mask".into()));
    }
    let floor = 1e-12 * mmax;
    let mut delta = 0;
    for (i, z) in m.iter().enumerate() {
        if z.norm() > floor {
            delta = i + 1;
        }
    }
    Ok(delta)
}

/// Per-offset condition diagnostics of the division denominators: the ratio
/// `max |denom| / min |denom|` for each offset, plus mu. CSV-formatted lines.
pub fn division_diagnostics(spectra: &MaskSpectra) -> String {
    let mut s = String::from("offset,min_abs,max_abs,cond\n");
    for p in -(spectra.kappa as i64 - 1)..=(spectra.kappa as i64 - 1) {
        let d = spectra.denom(p);
        let mn = d.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        let mx = d.iter().map(|z| z.norm()).fold(0.0, f64::max);
        s.push_str(&format!("{p},{mn:.6e},{mx:.6e},{:.6e}\n", mx / mn.max(1e-300)));
    }
    s.push_str(&format!("# mu={:.6e}\n", spectra.mu));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{forward_full, forward_subsampled_freq, PtychoScene};
    use crate::signal::{autocorr_diag, inner, norm, reverse, unit_vector};

    fn phase_aligned_error(a: &CVec, b: &CVec) -> f64 {
        let ip = inner(a, b);
        let theta = -ip.arg();
        let rotated = a.mapv(|z| z * C64::from_polar(1.0, theta));
        norm(&(&rotated - b)) / norm(b)
    }

    fn rel_err(a: &CVec, b: &CVec) -> f64 {
        norm(&(a - b)) / norm(b).max(1e-300)
    }

    #[test]
    fn transform_columns_match_convolution_oracle() {
        // column k of (F Y)^T = d * diag_k(x) conv diag_{-k}(m~), noiseless
        let scene = PtychoScene::random(8, 3, 20);
        let t = lhs_transform(&forward_full(&scene)).unwrap();
        let m_rev = reverse(scene.m());
        let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for k in 0..8i64 {
            let g = autocorr_diag(scene.x(), k);
            let f = autocorr_diag(&m_rev, -k);
            let want = signal::circ_conv(&g, &f).unwrap().mapv(|z| z * 8.0);
            let got = column(&t, k as usize);
            // columns outside the mask band vanish on both sides
            assert!(norm(&(&got - &want)) < 1e-8 * scale, "k = {k}");
        }
    }

    #[test]
    fn zero_specimen_transforms_to_zero() {
        let d = 8;
        let zeros: CVec = ndarray::Array1::zeros(d);
        let mut m: CVec = ndarray::Array1::zeros(d);
        m[0] = C64::new(1.0, 0.0);
        m[1] = C64::new(0.5, -0.25);
        let scene = PtychoScene::new(zeros, m, 2).unwrap();
        let t = lhs_transform(&forward_full(&scene)).unwrap();
        assert!(t.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn delta_mask_zero_offset_column_reduces_to_autocorrelation() {
        // m = e_0: T_0 = d * (x o conj(x)) conv e_0 = d * |x|^2
        let d = 8;
        let mut r = crate::rng::rng_from_seed(21);
        let x = crate::rng::complex_gaussian_vec(&mut r, d);
        let scene = PtychoScene::new(x.clone(), unit_vector(d, 0), 1).unwrap();
        let t = lhs_transform(&forward_full(&scene)).unwrap();
        let want = autocorr_diag(&x, 0).mapv(|z| z * d as f64);
        assert!(rel_err(&column(&t, 0), &want) < 1e-8);
    }

    #[test]
    fn lhs_transform_rejects_non_square() {
        let scene = PtychoScene::random(8, 3, 22);
        let sub = forward_subsampled_freq(&scene, 4).unwrap();
        assert!(lhs_transform(&sub).is_err());
    }

    #[test]
    fn flat_mask_is_ill_conditioned() {
        let d = 4;
        let ones = ndarray::Array1::from_elem(d, C64::new(1.0, 0.0));
        // dft(ones) = (4, 0, 0, 0): mu = 0
        assert!(matches!(
            mask_spectra(&ones, d, 1),
            Err(Error::IllConditionedMask { .. })
        ));
    }

    #[test]
    fn mask_spectra_match_direct_oracle() {
        let d = 8;
        let delta = 4;
        let scene = PtychoScene::random(d, delta, 23);
        let spectra = mask_spectra(scene.m(), delta, delta).unwrap();
        let m_rev = reverse(scene.m());
        let mut mu = f64::INFINITY;
        for p in -(delta as i64 - 1)..=(delta as i64 - 1) {
            let want = signal::dft(&autocorr_diag(&m_rev, -p));
            assert!(rel_err(spectra.denom(p), &want) < 1e-10);
            mu = mu.min(want.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min));
        }
        assert!((spectra.mu - mu).abs() < 1e-12);
    }

    #[test]
    fn noiseless_division_is_exact() {
        for (d, delta) in [(8usize, 4usize), (16, 4), (64, 6)] {
            let scene = PtychoScene::random(d, delta, 24 + d as u64);
            let spectra = mask_spectra(scene.m(), delta, delta).unwrap();
            let t = lhs_transform(&forward_full(&scene)).unwrap();
            let diags = wdd_divide(&t, &spectra, delta).unwrap();
            for p in -(delta as i64 - 1)..=(delta as i64 - 1) {
                let want = autocorr_diag(scene.x(), p);
                assert!(
                    rel_err(diags.diag(p), &want) < 1e-6,
                    "d = {d}, offset {p}"
                );
            }
            // offset-0 diagonal is |x|^2
            let want0: CVec = scene.x().mapv(|z| C64::new(z.norm_sqr(), 0.0));
            assert!(rel_err(diags.diag(0), &want0) < 1e-6);
        }
    }

    #[test]
    fn near_degenerate_mask_divides_with_error() {
        // A flat mask on its support has a vanishing denominator entry.
        let d = 8;
        let mut m: CVec = ndarray::Array1::zeros(d);
        for i in 0..4 {
            m[i] = C64::new(1.0, 0.0);
        }
        match mask_spectra(&m, 4, 4) {
            Err(Error::IllConditionedMask { .. }) => {}
            Ok(spectra) => {
                let scene = PtychoScene::new(
                    crate::rng::complex_gaussian_vec(&mut crate::rng::rng_from_seed(1), d),
                    m,
                    4,
                )
                .unwrap();
                let t = lhs_transform(&forward_full(&scene)).unwrap();
                assert!(wdd_divide(&t, &spectra, 4).is_err());
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn recover_noiseless_specimen() {
        let d = 64;
        let delta = 6;
        let scene = PtychoScene::random(d, delta, 25);
        let y = forward_full(&scene);
        let got = wdd_recover(&y, scene.m(), delta, MaskDomain::Spatial).unwrap();
        assert!(phase_aligned_error(&got, scene.x()) < 1e-4);
    }

    #[test]
    fn recover_real_positive_specimen_with_delta_mask() {
        // x real positive, m = e_0 window: magnitudes carry everything.
        let d = 16;
        let mut r = crate::rng::rng_from_seed(26);
        let x: CVec = ndarray::Array1::from_shape_fn(d, |_| {
            C64::new(crate::rng::standard_normal(&mut r).abs() + 0.2, 0.0)
        });
        let mut m: CVec = ndarray::Array1::zeros(d);
        m[0] = C64::new(1.0, 0.0);
        m[1] = C64::new(0.4, 0.3);
        let scene = PtychoScene::new(x.clone(), m, 2).unwrap();
        let y = forward_full(&scene);
        let got = wdd_recover(&y, scene.m(), 2, MaskDomain::Spatial).unwrap();
        assert!(phase_aligned_error(&got, &x) < 1e-6);
    }

    #[test]
    fn noise_monotonicity_spot_check() {
        let d = 64;
        let delta = 6;
        let scene = PtychoScene::random(d, delta, 27);
        let y = forward_full(&scene);
        let y40 = crate::measurement::add_noise(&y, 40.0, 99).unwrap();
        let y20 = crate::measurement::add_noise(&y, 20.0, 99).unwrap();
        let e40 =
            phase_aligned_error(&wdd_recover(&y40, scene.m(), delta, MaskDomain::Spatial).unwrap(), scene.x());
        let e20 =
            phase_aligned_error(&wdd_recover(&y20, scene.m(), delta, MaskDomain::Spatial).unwrap(), scene.x());
        assert!(e40 <= e20, "e40 = {e40}, e20 = {e20}");
    }

    #[test]
    fn subsampled_full_factors_reduce_to_plain_division() {
        let d = 16;
        let delta = 4;
        let scene = PtychoScene::random(d, delta, 28);
        let spectra = mask_spectra(scene.m(), delta, delta).unwrap();
        let t = lhs_transform(&forward_full(&scene)).unwrap();
        let a = wdd_divide(&t, &spectra, delta).unwrap();
        let b = wdd_divide_subsampled(&t, &spectra, delta, d, d).unwrap();
        for p in a.offsets() {
            assert!(rel_err(b.diag(p), a.diag(p)) < 1e-12);
        }
    }

    #[test]
    fn subsampled_recovery_exact_when_separated() {
        let d = 16;
        let delta = 4;
        let scene = PtychoScene::random(d, delta, 29);
        let y = forward_subsampled_freq(&scene, 8).unwrap(); // 8 >= 4 + 4 - 1
        let got = wdd_recover(&y, scene.m(), delta, MaskDomain::Spatial).unwrap();
        assert!(phase_aligned_error(&got, scene.x()) < 1e-5);
    }

    #[test]
    fn subsampled_overlap_is_rejected() {
        let d = 16;
        let delta = 4;
        let scene = PtychoScene::random(d, delta, 30);
        let y = forward_subsampled_freq(&scene, 4).unwrap(); // 4 < 4 + 4 - 1
        assert!(matches!(
            wdd_recover(&y, scene.m(), delta, MaskDomain::Spatial),
            Err(Error::AliasOverlap(_))
        ));
    }

    #[test]
    fn fourier_supported_mask_recovers_through_duality() {
        let d = 16;
        let delta = 4;
        let mut r = crate::rng::rng_from_seed(31);
        let x = crate::rng::complex_gaussian_vec(&mut r, d);
        let mut m_hat: CVec = ndarray::Array1::zeros(d);
        for i in 0..delta {
            m_hat[i] = crate::rng::complex_gaussian(&mut r);
        }
        let m = signal::idft(&m_hat);
        let scene = PtychoScene::new(x.clone(), m.clone(), d).unwrap();
        let y = forward_full(&scene);
        let got = wdd_recover(&y, &m, delta, MaskDomain::Fourier).unwrap();
        assert!(phase_aligned_error(&got, &x) < 1e-6);
    }

    #[test]
    fn hermitian_consistency_within_noise() {
        let d = 32;
        let delta = 4;
        let scene = PtychoScene::random(d, delta, 32);
        let y = crate::measurement::add_noise(&forward_full(&scene), 50.0, 7).unwrap();
        let spectra = mask_spectra(scene.m(), delta, delta).unwrap();
        let t = lhs_transform(&y).unwrap();
        let diags = wdd_divide(&t, &spectra, delta).unwrap();
        assert!(diags.hermitian_defect() < 0.05);
    }

    #[test]
    fn doubling_noise_does_not_shrink_error() {
        let d = 32;
        let delta = 4;
        let scene = PtychoScene::random(d, delta, 33);
        let y = forward_full(&scene);
        let mut worse = 0;
        for seed in 0..8u64 {
            let y1 = crate::measurement::add_noise(&y, 30.0, seed).unwrap();
            let y2 = crate::measurement::add_noise(&y, 30.0 - 6.02, seed).unwrap(); // double noise norm
            let e1 = phase_aligned_error(
                &wdd_recover(&y1, scene.m(), delta, MaskDomain::Spatial).unwrap(),
                scene.x(),
            );
            let e2 = phase_aligned_error(
                &wdd_recover(&y2, scene.m(), delta, MaskDomain::Spatial).unwrap(),
                scene.x(),
            );
            if e2 >= e1 {
                worse += 1;
            }
        }
        assert!(worse >= 7, "doubling noise shrank the error too often");
    }
}
