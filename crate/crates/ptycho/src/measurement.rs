//! Forward model: far-field intensity spectrograms of a masked specimen.
//!
//! A scene is a specimen `x` and a mask `m`, both length d, with the mask
//! supported on the first `delta` indices. The full measurement matrix is
//!
//! ```text
//! Y[mode l, shift k] = | dft(x o shift(m, k))_l |^2
//! ```
//!
//! optionally restricted to K equally spaced Fourier modes and L equally
//! spaced shifts, and optionally corrupted by additive real Gaussian noise on
//! the intensities (which may drive entries negative; downstream code must
//! tolerate that).

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{self, CVec};

/// Specimen plus compactly supported mask.
#[derive(Debug, Clone)]
pub struct PtychoScene {
    x: CVec,
    m: CVec,
    delta: usize,
}

impl PtychoScene {
    /// Validates: equal nonzero lengths, finite entries, `delta <= d`,
    /// `m` exactly zero outside `[delta]_0`, and `||m|| > 0`.
    pub fn new(x: CVec, m: CVec, delta: usize) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::ZeroInput("empty specimen".into()));
        }
        if x.len() != m.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: m.len() });
        }
        if !signal::all_finite(&x) || !signal::all_finite(&m) {
            return Err(Error::NonFinite);
        }
        if delta == 0 || delta > x.len() {
            return Err(Error::DimensionMismatch(format!(
                "mask support {delta} outside 1..={}",
                x.len()
            )));
        }
        if m.iter().skip(delta).any(|z| z.norm() != 0.0) {
            return Err(Error::DimensionMismatch(format!(
                "mask has support outside the first {delta} entries"
            )));
        }
        if signal::norm(&m) == 0.0 {
            return Err(Error::ZeroInput("zero mask".into()));
        }
        Ok(Self { x, m, delta })
    }

    /// Random scene: complex Gaussian specimen and complex Gaussian mask on `[delta]_0`.
    pub fn random(d: usize, delta: usize, seed: u64) -> Self {
        let mut r = rng::rng_from_seed(seed);
        let x = rng::complex_gaussian_vec(&mut r, d);
        let mut m: CVec = Array1::zeros(d);
        for i in 0..delta {
            m[i] = rng::complex_gaussian(&mut r);
        }
        Self { x, m, delta }
    }

    pub fn x(&self) -> &CVec {
        &self.x
    }

    pub fn m(&self) -> &CVec {
        &self.m
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Intensity spectrogram, possibly sub-sampled and/or noisy.
///
/// `data[(row, col)]`: row = Fourier-mode sample index (mode `row * d/K`),
/// col = shift sample index (shift `col * d/L`).
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    pub data: Array2<f64>,
    /// Ambient dimension d of the underlying scene.
    pub d: usize,
    /// Mask support size of the underlying scene.
    pub delta: usize,
    /// Number of measured Fourier modes (rows), a divisor of d.
    pub modes: usize,
    /// Number of measured shifts (columns), a divisor of d.
    pub shifts: usize,
    /// SNR in dB of added noise, if any (`None` = noiseless).
    pub snr_db: Option<f64>,
    /// Seed used for the noise draw, if any.
    pub seed: Option<u64>,
}

impl MeasurementMatrix {
    pub fn is_full(&self) -> bool {
        self.modes == self.d && self.shifts == self.d
    }
}

/// Full d x d forward model, noise-free.
pub fn forward_full(scene: &PtychoScene) -> MeasurementMatrix {
    let d = scene.dim();
    let mut data = Array2::zeros((d, d));
    for k in 0..d {
        let masked = scene.x() * &signal::shift(scene.m(), k as i64);
        let spec = signal::dft(&masked);
        for l in 0..d {
            data[(l, k)] = spec[l].norm_sqr();
        }
    }
    MeasurementMatrix {
        data,
        d,
        delta: scene.delta(),
        modes: d,
        shifts: d,
        snr_db: None,
        seed: None,
    }
}

/// Rows of the full matrix at the K equally spaced modes `(d/K) * [K]_0`.
pub fn forward_subsampled_freq(scene: &PtychoScene, k_modes: usize) -> Result<MeasurementMatrix> {
    forward_subsampled_freq_space(scene, k_modes, scene.dim())
}

/// K equally spaced modes and L equally spaced shifts.
pub fn forward_subsampled_freq_space(
    scene: &PtychoScene,
    k_modes: usize,
    l_shifts: usize,
) -> Result<MeasurementMatrix> {
    let d = scene.dim();
    if k_modes == 0 || d % k_modes != 0 {
        return Err(Error::NonDivisor { factor: k_modes, dim: d });
    }
    if l_shifts == 0 || d % l_shifts != 0 {
        return Err(Error::NonDivisor { factor: l_shifts, dim: d });
    }
    let mode_step = d / k_modes;
    let shift_step = d / l_shifts;
    let mut data = Array2::zeros((k_modes, l_shifts));
    for col in 0..l_shifts {
        let k = col * shift_step;
        let masked = scene.x() * &signal::shift(scene.m(), k as i64);
        let spec = signal::dft(&masked);
        for row in 0..k_modes {
            data[(row, col)] = spec[row * mode_step].norm_sqr();
        }
    }
    Ok(MeasurementMatrix {
        data,
        d,
        delta: scene.delta(),
        modes: k_modes,
        shifts: l_shifts,
        snr_db: None,
        seed: None,
    })
}

/// Add i.i.d. real Gaussian noise scaled so the expected Frobenius SNR is
/// `snr_db`: `sigma = ||Y||_F * 10^(-snr/20) / sqrt(#entries)`. Deterministic
/// given `seed`; `snr_db = +inf` returns the input unchanged.
pub fn add_noise(y: &MeasurementMatrix, snr_db: f64, seed: u64) -> Result<MeasurementMatrix> {
    if snr_db.is_nan() {
        return Err(Error::NonFinite);
    }
    let mut out = y.clone();
    out.snr_db = Some(snr_db);
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(out);
    }
    if snr_db.is_infinite() {
        return Err(Error::NonFinite);
    }
    let fro: f64 = y.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n_entries = y.data.len() as f64;
    let sigma = fro * 10f64.powf(-snr_db / 20.0) / n_entries.sqrt();
    let mut r = rng::rng_from_seed(seed);
    out.data.mapv_inplace(|v| v); // keep layout
    for v in out.data.iter_mut() {
        *v += sigma * rng::standard_normal(&mut r);
    }
    out.seed = Some(seed);
    Ok(out)
}

/// Spectrum magnitudes as a complex matrix column: helper for oracles/tests.
pub fn column_spectrum(scene: &PtychoScene, shift_k: usize) -> CVec {
    let masked = scene.x() * &signal::shift(scene.m(), shift_k as i64);
    signal::dft(&masked)
}

/// Serialize row-major with a `# key=value` metadata header.
pub fn write_csv(y: &MeasurementMatrix, path: &Path) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "# schema=measurement-v1");
    let _ = writeln!(s, "# d={}", y.d);
    let _ = writeln!(s, "# delta={}", y.delta);
    let _ = writeln!(s, "# K={}", y.modes);
    let _ = writeln!(s, "# L={}", y.shifts);
    let _ = writeln!(s, "# snr_db={}", y.snr_db.map_or("inf".into(), fmt_f64));
    let _ = writeln!(s, "# seed={}", y.seed.map_or("none".into(), |v| v.to_string()));
    for row in y.data.rows() {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.17e}")
    }
}

/// Planted blind scene: subspace matrix C, coefficients x', specimen x = C x',
/// and a compact mask. The subspace entries are CN(0, 1/d) so that `F C` has
/// unit-variance entries.
#[derive(Debug, Clone)]
pub struct BlindScene {
    pub scene: PtychoScene,
    pub c: crate::linalg::CMat,
    pub x_coef: CVec,
}

impl BlindScene {
    pub fn random(d: usize, delta: usize, n: usize, seed: u64) -> Result<Self> {
        if n * 4 > d {
            return Err(Error::InvalidConfig(vec![format!(
                "subspace dimension {n} too large for d = {d} (need n <= d/4)"
            )]));
        }
        let mut r = rng::rng_from_seed(seed);
        let scale = 1.0 / (d as f64).sqrt();
        let c = rng::complex_gaussian_mat(&mut r, d, n).mapv(|z| z * scale);
        let x_coef = rng::complex_gaussian_vec(&mut r, n);
        let x = c.dot(&x_coef);
        let mut m: CVec = Array1::zeros(d);
        for i in 0..delta {
            m[i] = rng::complex_gaussian(&mut r);
        }
        Ok(Self { scene: PtychoScene::new(x, m, delta)?, c, x_coef })
    }
}
