//! Blind deconvolution of `y = Bh o conj(Ax) + e` by lifting.
//!
//! `B` (d x K) holds orthonormal partial-DFT columns for the compactly
//! supported blur, `A` (d x N) the known signal subspace. The bilinear
//! measurements are linear in the rank-1 lifted matrix `h x^*`:
//!
//! ```text
//! lift_apply(Z)_l   = b_l^* Z a_l          (rows of B and A)
//! lift_adjoint(z)   = sum_l z_l b_l a_l^*
//! ```
//!
//! Recovery runs in two stages: a spectral initialization from the leading
//! singular triple of `lift_adjoint(y)`, then gradient descent on the
//! regularized objective
//!
//! ```text
//! F~(u, v) = ||lift_apply(u v^*) - y||^2
//!          + rho * [ G0(||u||^2 / 2L) + G0(||v||^2 / 2L)
//!                    + sum_l G0( d |b_l^* u|^2 / (8 L mu^2) ) ]
//! ```
//!
//! with `G0(z) = max(z - 1, 0)^2`, using Wirtinger derivatives with respect
//! to conj(u) and conj(v). The recovered pair carries the usual scale
//! ambiguity `(alpha u, v / conj(alpha))`; report errors in the lifted space.
//!
//! The solver normalizes the problem internally so the working scale estimate
//! is 1 (divide y by the leading singular value); all defaults below are
//! stated against that working scale.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::signal::{self, C64, CVec};

/// Measurement operator data: `B` is d x K with orthonormal columns, `A` is
/// d x N, `y` the transformed measurements.
#[derive(Debug, Clone)]
pub struct LiftedModel {
    pub b: CMat,
    pub a: CMat,
    pub y: CVec,
}

impl LiftedModel {
    pub fn new(b: CMat, a: CMat, y: CVec) -> Result<Self> {
        let (db, _k) = b.dim();
        let (da, _n) = a.dim();
        if db != da || db != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "B has {db} rows, A has {da}, y has length {}",
                y.len()
            )));
        }
        Ok(Self { b, a, y })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.b.nrows(), self.b.ncols(), self.a.ncols())
    }

    /// Orthonormality defect `||B^* B - I||_F` (should be ~1e-15 for DFT columns).
    pub fn b_orthonormality_defect(&self) -> f64 {
        let k = self.b.ncols();
        let gram = linalg::adjoint(&self.b).dot(&self.b);
        let eye: CMat = Array2::eye(k);
        linalg::frobenius_norm(&(&gram - &eye))
    }
}

/// The first `k` columns of the DFT matrix, scaled by 1/sqrt(d) so they are
/// orthonormal. Row norms are then all `sqrt(k/d)`.
pub fn partial_dft(d: usize, k: usize) -> CMat {
    let scale = 1.0 / (d as f64).sqrt();
    Array2::from_shape_fn((d, k), |(l, s)| {
        C64::from_polar(
            scale,
            -2.0 * std::f64::consts::PI * (l * s) as f64 / d as f64,
        )
    })
}

/// Apply the lifted operator to a full K x N matrix.
pub fn lift_apply(model: &LiftedModel, z: &CMat) -> Result<CVec> {
    let (d, k, n) = model.dims();
    if z.dim() != (k, n) {
        return Err(Error::DimensionMismatch(format!(
            "lifted matrix is {:?}, model wants ({k}, {n})",
            z.dim()
        )));
    }
    // entry l: (row l of B) . Z . conj(row l of A)
    let bz = model.b.dot(z); // d x N
    let mut out: CVec = Array1::zeros(d);
    for l in 0..d {
        out[l] = bz
            .row(l)
            .iter()
            .zip(model.a.row(l).iter())
            .map(|(p, q)| p * q.conj())
            .sum();
    }
    Ok(out)
}

/// Rank-1 fast path: `lift_apply(u v^*) = (B u) o conj(A v)`.
pub fn lift_apply_rank1(model: &LiftedModel, u: &CVec, v: &CVec) -> CVec {
    let bu = model.b.dot(u);
    let av = model.a.dot(v);
    Array1::from_shape_fn(bu.len(), |l| bu[l] * av[l].conj())
}

/// Adjoint: `lift_adjoint(z) = B^* diag(z) A = sum_l z_l b_l a_l^*`.
pub fn lift_adjoint(model: &LiftedModel, z: &CVec) -> Result<CMat> {
    let (d, _k, n) = model.dims();
    if z.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "vector length {} does not match d = {d}",
            z.len()
        )));
    }
    let scaled = Array2::from_shape_fn((d, n), |(l, j)| model.a[(l, j)] * z[l]);
    Ok(linalg::adjoint(&model.b).dot(&scaled))
}

/// Exact projection of `z0` onto `{ z : sqrt(d) ||B z||_inf <= cap }`.
///
/// Dykstra's alternating projection between the column space of `B` (an
/// isometry on coefficients, so distances agree) and the per-row modulus box;
/// for the tight-frame `B` used here the limit is the exact minimizer of
/// `||z - z0||`. Phase-preserving clipping realizes the box projection.
pub fn project_infnorm(z0: &CVec, b: &CMat, cap: f64) -> CVec {
    let d = b.nrows() as f64;
    let row_cap = cap / d.sqrt();
    let bh = linalg::adjoint(b);
    let mut w = b.dot(z0);
    let mut correction: CVec = Array1::zeros(b.nrows());
    for _ in 0..200 {
        let shifted = &w + &correction;
        let clipped = shifted.mapv(|zl| {
            let m = zl.norm();
            if m > row_cap && m > 0.0 {
                zl * (row_cap / m)
            } else {
                zl
            }
        });
        correction = &shifted - &clipped;
        let z = bh.dot(&clipped);
        let w_next = b.dot(&z);
        let worst = w_next.iter().map(|zl| zl.norm()).fold(0.0, f64::max);
        let moved = signal::norm(&(&w_next - &w));
        w = w_next;
        if worst <= row_cap * (1.0 + 1e-12) && moved < 1e-13 * row_cap.max(1.0) {
            break;
        }
    }
    bh.dot(&w)
}

/// Iteration snapshot for history export.
#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub iter: usize,
    pub fidelity: f64,
    pub penalty: f64,
    pub step: f64,
}

/// Solver state: iterates, working-scale estimate, parameters, history.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Blur-coefficient iterate (length K), original problem scale.
    pub u: CVec,
    /// Signal-coefficient iterate (length N), original problem scale.
    pub v: CVec,
    /// Leading singular value of `lift_adjoint(y)`: the scale estimate.
    pub l_hat: f64,
    pub rho: f64,
    pub mu: f64,
    pub eta: f64,
    pub iters_run: usize,
    pub converged: bool,
    pub history: Vec<IterRecord>,
}

impl SolverState {
    /// The lifted rank-1 estimate `u v^*`.
    pub fn lifted(&self) -> CMat {
        outer(&self.u, &self.v)
    }
}

pub fn outer(u: &CVec, v: &CVec) -> CMat {
    Array2::from_shape_fn((u.len(), v.len()), |(i, j)| u[i] * v[j].conj())
}

/// Solver configuration. `None` fields take the documented defaults, which
/// are stated against the internally normalized problem (working L = 1).
#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Step size; default `1 / (2 L^2 (K + N))` at working scale L = 1.
    pub eta: Option<f64>,
    /// Penalty weight; default `1.1 * L^2` at working scale.
    pub rho: Option<f64>,
    /// Incoherence bound; default `6 sqrt(K ln(d) / d)` (blind heuristic).
    pub mu: Option<f64>,
    /// Multiplies the scale fed to the penalty thresholds. 1.0 trusts the
    /// spectral scale estimate; structured subspaces (the shift-lifted model)
    /// underestimate the true scale and need generous headroom.
    pub penalty_scale: f64,
    pub max_iters: usize,
    /// Stop when the relative iterate change drops below this.
    pub tol: f64,
    /// Halve the step on objective increase (restores monotone descent).
    pub backtracking: bool,
    pub record_history: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            eta: None,
            rho: None,
            mu: None,
            penalty_scale: 1.0,
            max_iters: 1000,
            tol: 1e-9,
            backtracking: true,
            record_history: false,
        }
    }
}

/// Internal fixed parameters after defaults are resolved.
struct Params {
    rho: f64,
    mu: f64,
    l_pen: f64,
    d: usize,
}

fn penalty_g0(z: f64) -> f64 {
    let t = (z - 1.0).max(0.0);
    t * t
}

fn penalty_g0_prime(z: f64) -> f64 {
    2.0 * (z - 1.0).max(0.0)
}

/// Objective on the working scale: (fidelity, penalty).
fn objective(model: &LiftedModel, y: &CVec, u: &CVec, v: &CVec, p: &Params) -> (f64, f64) {
    let r = &lift_apply_rank1(model, u, v) - y;
    let fid = r.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let nu = signal::norm(u).powi(2);
    let nv = signal::norm(v).powi(2);
    let bu = model.b.dot(u);
    let mut pen = penalty_g0(nu / (2.0 * p.l_pen)) + penalty_g0(nv / (2.0 * p.l_pen));
    let coef = p.d as f64 / (8.0 * p.l_pen * p.mu * p.mu);
    for z in bu.iter() {
        pen += penalty_g0(coef * z.norm_sqr());
    }
    (fid, p.rho * pen)
}

/// Wirtinger gradients of the regularized objective with respect to conj(u)
/// and conj(v), at the given point.
fn gradients(model: &LiftedModel, y: &CVec, u: &CVec, v: &CVec, p: &Params) -> (CVec, CVec) {
    let r = &lift_apply_rank1(model, u, v) - y;
    let ar = lift_adjoint(model, &r).expect("dims fixed by model");
    // fidelity parts: grad_u = A*(r) v ; grad_v = (A*(r))^H u
    let mut gu = ar.dot(v);
    let mut gv = linalg::adjoint(&ar).dot(u);
    // norm-ball penalties
    let nu = signal::norm(u).powi(2);
    let nv = signal::norm(v).powi(2);
    let su = p.rho * penalty_g0_prime(nu / (2.0 * p.l_pen)) / (2.0 * p.l_pen);
    let sv = p.rho * penalty_g0_prime(nv / (2.0 * p.l_pen)) / (2.0 * p.l_pen);
    gu = &gu + &u.mapv(|z| z * su);
    gv = &gv + &v.mapv(|z| z * sv);
    // incoherence penalty: sum_l G0(coef |b_l^* u|^2) has gradient
    // coef * G0'(.) * b_l (b_l^* u), accumulated as B^H (c o Bu)
    let bu = model.b.dot(u);
    let coef = p.d as f64 / (8.0 * p.l_pen * p.mu * p.mu);
    let weighted: CVec = Array1::from_shape_fn(bu.len(), |l| {
        bu[l] * (p.rho * coef * penalty_g0_prime(coef * bu[l].norm_sqr()))
    });
    gu = &gu + &linalg::adjoint(&model.b).dot(&weighted);
    (gu, gv)
}

/// Default blind-mode incoherence bound: `3 * 2 * sqrt(K ln(d) / d)`.
pub fn default_mu(d: usize, k: usize) -> f64 {
    6.0 * (k as f64 * (d as f64).ln() / d as f64).sqrt()
}

/// Spectral initialization: leading singular triple of `lift_adjoint(y)`,
/// scale estimate `L = sigma_1`, blur guess projected onto the incoherence
/// cap, signal guess along the right singular vector. The returned iterates
/// live on the working (normalized) scale; [`solve`] rescales at the end.
pub fn spectral_init(model: &LiftedModel, cfg: &SolveConfig) -> Result<SolverState> {
    let (d, k, n) = model.dims();
    let m = lift_adjoint(model, &model.y)?;
    let (sigma, h_dir, x_dir) = linalg::leading_singular_triple(&m)?;
    let mu = cfg.mu.unwrap_or_else(|| default_mu(d, k));
    let l_pen = cfg.penalty_scale;
    // working scale after dividing y by sigma: L = 1, iterates near unit norm
    let cap = 2.0 * l_pen.sqrt() * mu;
    let u0 = project_infnorm(&h_dir, &model.b, cap);
    Ok(SolverState {
        u: u0,
        v: x_dir,
        l_hat: sigma,
        rho: cfg.rho.unwrap_or(1.1),
        mu,
        eta: cfg.eta.unwrap_or(1.0 / (2.0 * (k + n) as f64)),
        iters_run: 0,
        converged: false,
        history: Vec::new(),
    })
}

/// Wirtinger gradients at the state's iterate, using the state's parameters
/// and penalty thresholds at the estimated scale (for gradient checking).
pub fn wirtinger_gradients(model: &LiftedModel, state: &SolverState) -> Result<(CVec, CVec)> {
    let (d, _, _) = model.dims();
    let p = Params { rho: state.rho, mu: state.mu, l_pen: state.l_hat, d };
    Ok(gradients(model, &model.y, &state.u, &state.v, &p))
}

/// Objective at arbitrary iterates against the model's own measurements,
/// using the state's parameters. Exposed for finite-difference tests.
pub fn objective_at(model: &LiftedModel, state: &SolverState, u: &CVec, v: &CVec) -> (f64, f64) {
    let (d, _, _) = model.dims();
    let p = Params { rho: state.rho, mu: state.mu, l_pen: state.l_hat, d };
    objective(model, &model.y, u, v, &p)
}

/// Run spectral initialization followed by regularized Wirtinger descent.
pub fn solve(model: &LiftedModel, cfg: &SolveConfig) -> Result<SolverState> {
    let (d, k, n) = model.dims();
    let mut state = spectral_init(model, cfg)?;
    let sigma = state.l_hat;
    // normalized problem: y / sigma, working L = 1
    let y = model.y.mapv(|z| z / sigma);
    let p = Params { rho: state.rho, mu: state.mu, l_pen: cfg.penalty_scale, d };
    let mut u = state.u.clone();
    let mut v = state.v.clone();
    let mut eta = cfg.eta.unwrap_or(1.0 / (2.0 * (k + n) as f64));
    let eta0 = eta;

    let (f0, g0) = objective(model, &y, &u, &v, &p);
    let guard = 1e6 * (f0 + g0).max(1e-12);
    if cfg.record_history {
        state.history.push(IterRecord { iter: 0, fidelity: f0, penalty: g0, step: eta });
    }

    let mut iters = 0;
    let mut converged = false;
    for t in 1..=cfg.max_iters {
        let (gu, gv) = gradients(model, &y, &u, &v, &p);
        let mut un = &u - &gu.mapv(|z| z * eta);
        let mut vn = &v - &gv.mapv(|z| z * eta);
        if cfg.backtracking {
            let (fc, gc) = objective(model, &y, &u, &v, &p);
            let mut tries = 0;
            while tries < 40 {
                let (fnx, gn) = objective(model, &y, &un, &vn, &p);
                if fnx + gn <= fc + gc || eta == 0.0 {
                    break;
                }
                eta *= 0.5;
                un = &u - &gu.mapv(|z| z * eta);
                vn = &v - &gv.mapv(|z| z * eta);
                tries += 1;
            }
            // slow regrowth back toward the nominal step
            eta = (eta * 1.05).min(eta0);
        }
        let delta = signal::norm(&(&un - &u)) + signal::norm(&(&vn - &v));
        let scale = signal::norm(&un) + signal::norm(&vn);
        u = un;
        v = vn;
        iters = t;
        let (fc, gc) = objective(model, &y, &u, &v, &p);
        if cfg.record_history {
            state.history.push(IterRecord { iter: t, fidelity: fc, penalty: gc, step: eta });
        }
        if fc + gc > guard || !fc.is_finite() {
            return Err(Error::Divergence { iter: t, objective: fc + gc });
        }
        if delta < cfg.tol * scale.max(1e-300) {
            converged = true;
            break;
        }
    }
    // undo the normalization: (u v^*) * sigma estimates h0 x0^*
    let root = sigma.sqrt();
    state.u = u.mapv(|z| z * root);
    state.v = v.mapv(|z| z * root);
    state.eta = eta;
    state.iters_run = iters;
    state.converged = converged;
    Ok(state)
}

/// Relative lifted error `||u v^* - h0 x0^*||_F / ||h0 x0^*||_F`.
pub fn lifted_error(u: &CVec, v: &CVec, h0: &CVec, x0: &CVec) -> f64 {
    let est = outer(u, v);
    let truth = outer(h0, x0);
    linalg::frobenius_norm(&(&est - &truth)) / linalg::frobenius_norm(&truth).max(1e-300)
}

/// Diagnostic report of the conditions behind the convergence guarantees,
/// evaluated against a known planted truth.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    /// `||A(uv^* - h0 x0^*)||^2 / ||uv^* - h0 x0^*||_F^2` (expect near 1);
    /// `None` when the state sits exactly at the truth.
    pub rip_ratio: Option<f64>,
    /// Operator norm of `lift_adjoint(e)` for the residual noise `e`.
    pub adjoint_noise_norm: f64,
    /// The bound `eps L0 / (10 sqrt(2))` with eps = 1/15.
    pub adjoint_noise_bound: f64,
    /// `||grad F~||^2 / (F~ - c)_+`; `None` when the excess objective is ~0.
    pub regularity_ratio: Option<f64>,
    /// Max of `||grad(z + t dz) - grad(z)|| / (t ||dz||)` over sampled segments.
    pub smoothness_quotient: f64,
}

/// Evaluate the diagnostic conditions at `state` against the planted truth.
pub fn check_key_conditions(
    model: &LiftedModel,
    state: &SolverState,
    h0: &CVec,
    x0: &CVec,
) -> Result<ConditionReport> {
    let diff = &outer(&state.u, &state.v) - &outer(h0, x0);
    let diff_norm = linalg::frobenius_norm(&diff);
    let rip_ratio = if diff_norm > 1e-12 {
        let az = lift_apply(model, &diff)?;
        Some(signal::norm(&az).powi(2) / diff_norm.powi(2))
    } else {
        None
    };

    let e = &model.y - &lift_apply_rank1(model, h0, x0);
    let ae = lift_adjoint(model, &e)?;
    let adjoint_noise_norm = match linalg::leading_singular_triple(&ae) {
        Ok((s, _, _)) => s,
        Err(_) => 0.0,
    };
    let l0 = signal::norm(h0) * signal::norm(x0);
    let adjoint_noise_bound = (1.0 / 15.0) * l0 / (10.0 * 2f64.sqrt());

    let (gu, gv) = wirtinger_gradients(model, state)?;
    let grad_sq = signal::norm(&gu).powi(2) + signal::norm(&gv).powi(2);
    let (f, g) = objective_at(model, state, &state.u, &state.v);
    let c = signal::norm(&e).powi(2);
    let excess = (f + g - c).max(0.0);
    let regularity_ratio = if excess > 1e-12 { Some(grad_sq / excess) } else { None };

    // smoothness along a few deterministic segments toward the truth
    let mut smoothness_quotient: f64 = 0.0;
    let du = h0 - &state.u;
    let dv = x0 - &state.v;
    let dz = (signal::norm(&du).powi(2) + signal::norm(&dv).powi(2)).sqrt();
    if dz > 1e-12 {
        for step in [0.25, 0.5, 1.0] {
            let ut = &state.u + &du.mapv(|z| z * step);
            let vt = &state.v + &dv.mapv(|z| z * step);
            let probe = SolverState { u: ut, v: vt, ..state.clone() };
            let (gut, gvt) = wirtinger_gradients(model, &probe)?;
            let dg = (signal::norm(&(&gut - &gu)).powi(2)
                + signal::norm(&(&gvt - &gv)).powi(2))
            .sqrt();
            smoothness_quotient = smoothness_quotient.max(dg / (step * dz));
        }
    }
    Ok(ConditionReport {
        rip_ratio,
        adjoint_noise_norm,
        adjoint_noise_bound,
        regularity_ratio,
        smoothness_quotient,
    })
}

/// Planted Gaussian test instance: `B` = orthonormal partial DFT, `A` with
/// i.i.d. CN(0,1) entries, unit-norm planted factors (so L0 = 1), noiseless
/// measurements.
pub fn gaussian_instance(d: usize, k: usize, n: usize, seed: u64) -> (LiftedModel, CVec, CVec) {
    let mut r = crate::rng::rng_from_seed(seed);
    let b = partial_dft(d, k);
    let a = crate::rng::complex_gaussian_mat(&mut r, d, n);
    let mut h0 = crate::rng::complex_gaussian_vec(&mut r, k);
    let mut x0 = crate::rng::complex_gaussian_vec(&mut r, n);
    let nh = signal::norm(&h0);
    let nx = signal::norm(&x0);
    h0.mapv_inplace(|z| z / nh);
    x0.mapv_inplace(|z| z / nx);
    let bu = b.dot(&h0);
    let av = a.dot(&x0);
    let y = Array1::from_shape_fn(d, |l| bu[l] * av[l].conj());
    (LiftedModel { b, a, y }, h0, x0)
}

/// Incoherence of a planted blur against the rows of `B`:
/// `mu_h = sqrt(d) ||B h||_inf / ||h||`.
pub fn planted_mu(b: &CMat, h0: &CVec) -> f64 {
    let bu = b.dot(h0);
    let peak = bu.iter().map(|z| z.norm()).fold(0.0, f64::max);
    (b.nrows() as f64).sqrt() * peak / signal::norm(h0).max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn partial_dft_is_orthonormal_with_uniform_row_norms() {
        let b = partial_dft(16, 5);
        let model = LiftedModel::new(b.clone(), partial_dft(16, 3), Array1::zeros(16)).unwrap();
        assert!(model.b_orthonormality_defect() < 1e-10);
        for l in 0..16 {
            let row_sq: f64 = b.row(l).iter().map(|z| z.norm_sqr()).sum();
            assert!((row_sq - 5.0 / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lift_apply_zero_and_linearity() {
        let (model, _, _) = gaussian_instance(16, 4, 3, 1);
        let z0: CMat = Array2::zeros((4, 3));
        assert!(signal::norm(&lift_apply(&model, &z0).unwrap()) < 1e-15);

        let mut r = rng::rng_from_seed(2);
        let z1 = rng::complex_gaussian_mat(&mut r, 4, 3);
        let z2 = rng::complex_gaussian_mat(&mut r, 4, 3);
        let alpha = C64::new(0.3, -1.2);
        let lhs = lift_apply(&model, &(&z1.mapv(|z| z * alpha) + &z2)).unwrap();
        let rhs = &lift_apply(&model, &z1).unwrap().mapv(|z| z * alpha)
            + &lift_apply(&model, &z2).unwrap();
        assert!(signal::norm(&(&lhs - &rhs)) < 1e-10);
    }

    #[test]
    fn rank1_fast_path_matches_matrix_path() {
        let (model, _, _) = gaussian_instance(16, 4, 3, 3);
        let mut r = rng::rng_from_seed(4);
        let u = rng::complex_gaussian_vec(&mut r, 4);
        let v = rng::complex_gaussian_vec(&mut r, 3);
        let fast = lift_apply_rank1(&model, &u, &v);
        let slow = lift_apply(&model, &outer(&u, &v)).unwrap();
        assert!(signal::norm(&(&fast - &slow)) < 1e-10);
    }

    #[test]
    fn adjoint_identity() {
        // <lift_apply(Z), z> = <Z, lift_adjoint(z)> to 1e-10
        let (model, _, _) = gaussian_instance(16, 4, 3, 5);
        let mut r = rng::rng_from_seed(6);
        for _ in 0..5 {
            let z_mat = rng::complex_gaussian_mat(&mut r, 4, 3);
            let z_vec = rng::complex_gaussian_vec(&mut r, 16);
            let lhs: C64 = lift_apply(&model, &z_mat)
                .unwrap()
                .iter()
                .zip(z_vec.iter())
                .map(|(a, b)| a * b.conj())
                .sum();
            let adj = lift_adjoint(&model, &z_vec).unwrap();
            let rhs: C64 = z_mat.iter().zip(adj.iter()).map(|(a, b)| a * b.conj()).sum();
            assert!((lhs - rhs).norm() < 1e-10);
        }
        let zero: CVec = Array1::zeros(16);
        assert!(linalg::frobenius_norm(&lift_adjoint(&model, &zero).unwrap()) < 1e-15);
    }

    #[test]
    fn adjoint_apply_is_identity_in_expectation() {
        // Monte-Carlo over Gaussian A draws; 5% Frobenius at 2000 draws.
        let d = 64;
        let (k, n) = (3, 3);
        let mut r = rng::rng_from_seed(7);
        let z = rng::complex_gaussian_mat(&mut r, k, n);
        let b = partial_dft(d, k);
        let mut acc: CMat = Array2::zeros((k, n));
        let draws = 2000;
        for _ in 0..draws {
            let a = rng::complex_gaussian_mat(&mut r, d, n);
            let model = LiftedModel::new(b.clone(), a, Array1::zeros(d)).unwrap();
            let az = lift_apply(&model, &z).unwrap();
            acc = &acc + &lift_adjoint(&model, &az).unwrap();
        }
        acc.mapv_inplace(|v| v / draws as f64);
        let rel = linalg::frobenius_norm(&(&acc - &z)) / linalg::frobenius_norm(&z);
        assert!(rel < 0.05, "E[A*A(Z)] off by {rel}");
    }

    #[test]
    fn projection_noop_when_feasible() {
        let (model, _, _) = gaussian_instance(16, 4, 3, 8);
        let mut r = rng::rng_from_seed(9);
        let z0 = rng::complex_gaussian_vec(&mut r, 4);
        let loose = project_infnorm(&z0, &model.b, 1e9);
        assert!(signal::norm(&(&loose - &z0)) < 1e-9);
        let bu = model.b.dot(&z0);
        let peak = bu.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let cap = peak * 4.0 + 1.0;
        let same = project_infnorm(&z0, &model.b, cap);
        assert!(signal::norm(&(&same - &z0)) < 1e-9);
    }

    #[test]
    fn projection_matches_local_search_small_case() {
        // K = 2, d = 4: the projection must beat every feasible perturbation.
        let d = 4;
        let b = partial_dft(d, 2);
        let z0: CVec = Array1::from_vec(vec![C64::new(2.0, 0.5), C64::new(-1.0, 1.5)]);
        let bu = b.dot(&z0);
        let peak = bu.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let cap = 0.6 * peak * (d as f64).sqrt(); // infeasible: forces clipping
        let got = project_infnorm(&z0, &b, cap);
        let w = b.dot(&got);
        let worst = w.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(worst * (d as f64).sqrt() <= cap * (1.0 + 1e-6));
        let d_got = signal::norm(&(&got - &z0));
        let mut r = rng::rng_from_seed(10);
        for _ in 0..3000 {
            let cand = &got + &rng::complex_gaussian_vec(&mut r, 2).mapv(|z| z * 0.2);
            let wc = b.dot(&cand);
            let feas = wc.iter().map(|z| z.norm()).fold(0.0, f64::max) * (d as f64).sqrt()
                <= cap * (1.0 + 1e-9);
            if feas {
                assert!(signal::norm(&(&cand - &z0)) >= d_got - 1e-7);
            }
        }
    }

    #[test]
    fn gradients_vanish_at_noiseless_truth() {
        let (model, h0, x0) = gaussian_instance(32, 4, 3, 11);
        let state = SolverState {
            u: h0.clone(),
            v: x0.clone(),
            l_hat: 1.0,
            rho: 1.1,
            mu: planted_mu(&model.b, &h0).max(1.0) * 2.0,
            eta: 0.1,
            iters_run: 0,
            converged: false,
            history: Vec::new(),
        };
        let (gu, gv) = wirtinger_gradients(&model, &state).unwrap();
        assert!(signal::norm(&gu) < 1e-8);
        assert!(signal::norm(&gv) < 1e-8);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (model, h0, _x0) = gaussian_instance(16, 4, 3, 12);
        let mut r = rng::rng_from_seed(13);
        for trial in 0..20 {
            let u = rng::complex_gaussian_vec(&mut r, 4);
            let v = rng::complex_gaussian_vec(&mut r, 3);
            let state = SolverState {
                u: u.clone(),
                v: v.clone(),
                l_hat: 0.8,
                rho: 1.3,
                mu: planted_mu(&model.b, &h0).max(0.5),
                eta: 0.1,
                iters_run: 0,
                converged: false,
                history: Vec::new(),
            };
            let (gu, gv) = wirtinger_gradients(&model, &state).unwrap();
            // directional derivative along a complex direction:
            // d/dt F~(u + t du, v + t dv) = 2 Re(<gu, du> + <gv, dv>)
            let du = rng::complex_gaussian_vec(&mut r, 4);
            let dv = rng::complex_gaussian_vec(&mut r, 3);
            let h = 1e-6;
            let eval = |t: f64| {
                let ut = &u + &du.mapv(|z| z * t);
                let vt = &v + &dv.mapv(|z| z * t);
                let (f, g) = objective_at(&model, &state, &ut, &vt);
                f + g
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = 2.0 * (signal::inner(&gu, &du) + signal::inner(&gv, &dv)).re;
            let scale = numeric.abs().max(analytic.abs()).max(1e-6);
            assert!(
                (numeric - analytic).abs() / scale < 1e-5,
                "trial {trial}: numeric {numeric} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn penalty_gradient_zero_inside_neighborhoods() {
        let (model, h0, x0) = gaussian_instance(16, 4, 3, 14);
        // small iterates keep all penalty arguments below 1
        let u = h0.mapv(|z| z * 0.3);
        let v = x0.mapv(|z| z * 0.3);
        let state = SolverState {
            u: u.clone(),
            v: v.clone(),
            l_hat: 1.0,
            rho: 5.0,
            mu: 4.0,
            eta: 0.1,
            iters_run: 0,
            converged: false,
            history: Vec::new(),
        };
        let (_, g) = objective_at(&model, &state, &u, &v);
        assert_eq!(g, 0.0);
        let r = &lift_apply_rank1(&model, &u, &v) - &model.y;
        let ar = lift_adjoint(&model, &r).unwrap();
        let (gu, gv) = wirtinger_gradients(&model, &state).unwrap();
        assert!(signal::norm(&(&gu - &ar.dot(&v))) < 1e-12);
        assert!(signal::norm(&(&gv - &linalg::adjoint(&ar).dot(&u))) < 1e-12);
    }

    #[test]
    fn spectral_init_lands_near_planted_blur() {
        let mut hits = 0;
        for seed in 0..100 {
            let (model, h0, _) = gaussian_instance(64, 6, 4, 1000 + seed);
            let state = spectral_init(&model, &SolveConfig::default()).unwrap();
            let cos = signal::inner(&state.u, &h0).norm()
                / (signal::norm(&state.u) * signal::norm(&h0)).max(1e-300);
            let angle = cos.min(1.0).acos().to_degrees();
            if angle <= 30.0 {
                hits += 1;
            }
        }
        assert!(hits >= 90, "only {hits}/100 inits within 30 degrees");
    }

    #[test]
    fn zero_measurements_rejected() {
        let (mut model, _, _) = gaussian_instance(16, 4, 3, 15);
        model.y = Array1::zeros(16);
        assert!(spectral_init(&model, &SolveConfig::default()).is_err());
    }

    #[test]
    fn eta_zero_keeps_iterates_constant() {
        let (model, _, _) = gaussian_instance(16, 4, 3, 16);
        let cfg = SolveConfig {
            eta: Some(0.0),
            max_iters: 5,
            backtracking: false,
            ..Default::default()
        };
        let init = spectral_init(&model, &cfg).unwrap();
        let out = solve(&model, &cfg).unwrap();
        // iterates never moved from the (rescaled) init
        let root = out.l_hat.sqrt();
        let u0 = init.u.mapv(|z| z * root);
        assert!(signal::norm(&(&out.u - &u0)) < 1e-12);
        assert!(out.converged);
    }

    #[test]
    fn solve_recovers_planted_instance() {
        let (model, h0, x0) = gaussian_instance(64, 6, 4, 17);
        let out = solve(&model, &SolveConfig::default()).unwrap();
        let err = lifted_error(&out.u, &out.v, &h0, &x0);
        assert!(err <= 1e-3, "lifted error {err}");
    }

    #[test]
    fn objective_history_mostly_non_increasing() {
        let (model, _, _) = gaussian_instance(64, 6, 4, 18);
        let cfg = SolveConfig { record_history: true, ..Default::default() };
        let out = solve(&model, &cfg).unwrap();
        let total: Vec<f64> = out.history.iter().map(|r| r.fidelity + r.penalty).collect();
        let increases = total.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-12)).count();
        assert!(
            (increases as f64) < 0.05 * total.len() as f64,
            "{increases} increases in {} steps",
            total.len()
        );
    }

    #[test]
    fn scale_ambiguity_yields_same_lifted_product() {
        // planted (alpha h0, x0 / conj(alpha)) gives identical measurements,
        // and the lifted error is blind to the split
        let (model, h0, x0) = gaussian_instance(64, 6, 4, 19);
        let alpha = C64::new(1.7, -0.4);
        let h_scaled = h0.mapv(|z| z * alpha);
        let x_scaled = x0.mapv(|z| z / alpha.conj());
        let bu = model.b.dot(&h_scaled);
        let av = model.a.dot(&x_scaled);
        let y2: CVec = Array1::from_shape_fn(64, |l| bu[l] * av[l].conj());
        assert!(signal::norm(&(&y2 - &model.y)) < 1e-10);
        let out = solve(&model, &SolveConfig::default()).unwrap();
        let e1 = lifted_error(&out.u, &out.v, &h0, &x0);
        let e2 = lifted_error(&out.u, &out.v, &h_scaled, &x_scaled);
        assert!((e1 - e2).abs() < 1e-9);
    }

    #[test]
    fn conditions_report_on_noiseless_instance() {
        let (model, h0, x0) = gaussian_instance(64, 6, 4, 20);
        let out = solve(&model, &SolveConfig::default()).unwrap();
        let report = check_key_conditions(&model, &out, &h0, &x0).unwrap();
        // noiseless: adjoint of the (zero) noise is far below the bound
        assert!(report.adjoint_noise_norm <= report.adjoint_noise_bound);
        assert!(report.smoothness_quotient.is_finite());
    }

    #[test]
    fn conditions_at_truth_report_not_applicable() {
        let (model, h0, x0) = gaussian_instance(32, 4, 3, 21);
        let state = SolverState {
            u: h0.clone(),
            v: x0.clone(),
            l_hat: 1.0,
            rho: 1.1,
            mu: planted_mu(&model.b, &h0).max(1.0),
            eta: 0.1,
            iters_run: 0,
            converged: true,
            history: Vec::new(),
        };
        let report = check_key_conditions(&model, &state, &h0, &x0).unwrap();
        assert!(report.rip_ratio.is_none());
        assert!(report.regularity_ratio.is_none());
    }
}
