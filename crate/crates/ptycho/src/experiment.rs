//! Seeded Monte-Carlo experiment harness with CSV output.
//!
//! A sweep runs `trials` independent scenes per SNR value, recovers with the
//! selected pipeline, and writes:
//!
//! * `trials.csv`    - one row per (snr, trial, estimator, target)
//! * `summary.csv`   - mean/median error per (snr, estimator, target)
//! * `histogram.csv` - how often each shift index was chosen (multi-shift)
//! * `timing.csv`    - wall times; the only non-deterministic output file
//!
//! All CSV files start with a `# key=value` metadata block. Given the same
//! config and seed the three data files are byte-identical across runs;
//! trials parallelize over a work pool and are re-assembled in index order.
//!
//! Seed derivation: trial t uses `derive_seed(master, 2 t)` for the scene and
//! `derive_seed(master, 2 t + 1)` for the noise, so any trial can be replayed
//! alone, and trials are paired across SNR values (same scene, same noise
//! shape, different level).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::blind_ptycho::{self, PipelineConfig};
use crate::error::{Error, Result};
use crate::measurement::{self, BlindScene, PtychoScene};
use crate::rng::derive_seed;
use crate::signal::norm;
use crate::wdd::{self, MaskDomain};

/// Which pipeline a sweep exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Known mask, full sampling (Wigner distribution deconvolution).
    WddKnownMask,
    /// Known mask, K modes and/or L shifts measured.
    Subsampled,
    /// Blind recovery from the zero-shift instance only.
    BlindZeroShift,
    /// Full blind pipeline over all admissible shifts.
    BlindMultiShift,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "wdd-known-mask" => Ok(Mode::WddKnownMask),
            "subsampled" => Ok(Mode::Subsampled),
            "blind-zero-shift" => Ok(Mode::BlindZeroShift),
            "blind-multi-shift" => Ok(Mode::BlindMultiShift),
            other => Err(Error::InvalidConfig(vec![format!("unknown mode '{other}'")])),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::WddKnownMask => "wdd-known-mask",
            Mode::Subsampled => "subsampled",
            Mode::BlindZeroShift => "blind-zero-shift",
            Mode::BlindMultiShift => "blind-multi-shift",
        }
    }
}

/// Sweep parameters. Defaults mirror the reference simulation setup:
/// d = 64, delta = 6, N = 4, 100 trials, 1000 iterations.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub d: usize,
    pub delta: usize,
    pub n: usize,
    pub kappa: usize,
    /// SNR grid in dB; `f64::INFINITY` means noiseless.
    pub snr_grid: Vec<f64>,
    pub trials: usize,
    /// Per-deconvolution iteration budget.
    pub iters: usize,
    pub seed: u64,
    pub mode: Mode,
    pub out_dir: PathBuf,
    /// Measured Fourier modes (subsampled mode); `None` = all d.
    pub k_modes: Option<usize>,
    /// Measured shifts (subsampled mode); `None` = all d.
    pub l_shifts: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            d: 64,
            delta: 6,
            n: 4,
            kappa: 6,
            snr_grid: vec![10.0, 20.0, 30.0, 40.0, 50.0],
            trials: 100,
            iters: 1000,
            seed: 1,
            mode: Mode::BlindMultiShift,
            out_dir: PathBuf::from("runs"),
            k_modes: None,
            l_shifts: None,
        }
    }
}

/// Check every invariant, naming each violation.
pub fn validate_config(cfg: &ExperimentConfig) -> Result<()> {
    let mut problems = Vec::new();
    if cfg.d == 0 {
        problems.push("d must be positive".into());
    }
    if cfg.delta == 0 || cfg.delta > cfg.d {
        problems.push(format!("delta = {} outside 1..=d", cfg.delta));
    }
    if cfg.kappa == 0 || cfg.kappa > cfg.delta {
        problems.push(format!("kappa = {} outside 1..=delta", cfg.kappa));
    }
    if cfg.snr_grid.is_empty() {
        problems.push("snr grid is empty".into());
    }
    if cfg.snr_grid.iter().any(|s| s.is_nan()) {
        problems.push("snr grid contains NaN".into());
    }
    if cfg.iters == 0 {
        problems.push("iteration budget must be positive".into());
    }
    match cfg.mode {
        Mode::BlindZeroShift | Mode::BlindMultiShift => {
            if cfg.n == 0 || 4 * cfg.n > cfg.d {
                problems.push(format!("subspace dimension n = {} outside 1..=d/4", cfg.n));
            }
        }
        Mode::Subsampled => {
            let k = cfg.k_modes.unwrap_or(cfg.d);
            let l = cfg.l_shifts.unwrap_or(cfg.d);
            if k == 0 || cfg.d % k != 0 {
                problems.push(format!("K = {k} does not divide d = {}", cfg.d));
            }
            if l == 0 || cfg.d % l != 0 {
                problems.push(format!("L = {l} does not divide d = {}", cfg.d));
            }
        }
        Mode::WddKnownMask => {}
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(problems))
    }
}

/// One row of `trials.csv`.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    /// max-shift, min-shift, argmin-shift or no-shift.
    pub estimator: &'static str,
    /// specimen or mask.
    pub target: &'static str,
    pub error: f64,
    pub residual: f64,
    pub chosen_i: i64,
    pub chosen_j: i64,
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.12e}")
    }
}

fn metadata_block(cfg: &ExperimentConfig, schema: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# schema={schema}");
    let _ = writeln!(s, "# mode={}", cfg.mode.name());
    let _ = writeln!(s, "# d={}", cfg.d);
    let _ = writeln!(s, "# delta={}", cfg.delta);
    let _ = writeln!(s, "# n={}", cfg.n);
    let _ = writeln!(s, "# kappa={}", cfg.kappa);
    let _ = writeln!(s, "# trials={}", cfg.trials);
    let _ = writeln!(s, "# iters={}", cfg.iters);
    let _ = writeln!(s, "# seed={}", cfg.seed);
    let _ = writeln!(
        s,
        "# snr_grid={}",
        cfg.snr_grid.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";")
    );
    let _ = writeln!(s, "# K={}", cfg.k_modes.unwrap_or(cfg.d));
    let _ = writeln!(s, "# L={}", cfg.l_shifts.unwrap_or(cfg.d));
    s
}

struct TrialOutput {
    records: Vec<TrialRecord>,
    /// (kind, shift index) counters for the histogram.
    chosen: Vec<(&'static str, usize)>,
    wall_ms: f64,
    failure: Option<String>,
}

/// Run one blind trial at one SNR.
fn blind_trial(
    cfg: &ExperimentConfig,
    snr_db: f64,
    trial: usize,
) -> TrialOutput {
    let t0 = std::time::Instant::now();
    let scene_seed = derive_seed(cfg.seed, 2 * trial as u64);
    let noise_seed = derive_seed(cfg.seed, 2 * trial as u64 + 1);
    let mut records = Vec::new();
    let mut chosen = Vec::new();
    let mut failure = None;

    let run = || -> Result<(Vec<TrialRecord>, Vec<(&'static str, usize)>)> {
        let bs = BlindScene::random(cfg.d, cfg.delta, cfg.n, scene_seed)?;
        let y0 = measurement::forward_full(&bs.scene);
        let y = measurement::add_noise(&y0, snr_db, noise_seed)?;
        let m_norm = norm(bs.scene.m());
        let mut pipe = PipelineConfig::default();
        pipe.solver.max_iters = cfg.iters;

        let mut records = Vec::new();
        let mut chosen = Vec::new();
        match cfg.mode {
            Mode::BlindZeroShift => {
                let x_est =
                    blind_ptycho::recover_specimen_zero_shift(&y, &bs.c, cfg.delta, &pipe)?;
                let err = blind_ptycho::relative_error(&x_est, bs.scene.x())?;
                records.push(TrialRecord {
                    snr_db,
                    trial,
                    seed: scene_seed,
                    estimator: "no-shift",
                    target: "specimen",
                    error: err,
                    residual: f64::NAN,
                    chosen_i: 0,
                    chosen_j: 0,
                });
            }
            Mode::BlindMultiShift => {
                let out =
                    blind_ptycho::recover_multi_shift(&y, &bs.c, cfg.delta, m_norm, &pipe)?;
                let x_errs: Vec<Option<f64>> = out
                    .x_est
                    .iter()
                    .map(|xe| {
                        xe.as_ref()
                            .map(|v| blind_ptycho::relative_error(v, bs.scene.x()).unwrap())
                    })
                    .collect();
                let m_errs: Vec<Option<f64>> = out
                    .m_est
                    .iter()
                    .map(|me| {
                        me.as_ref()
                            .map(|v| blind_ptycho::relative_error(v, bs.scene.m()).unwrap())
                    })
                    .collect();
                let (ci, cj) = out.chosen;
                let residual = out.chosen_residual();
                let extremum = |errs: &[Option<f64>], max: bool| -> (usize, f64) {
                    let mut best = (0usize, if max { f64::NEG_INFINITY } else { f64::INFINITY });
                    for (i, e) in errs.iter().enumerate() {
                        if let Some(e) = e {
                            if (max && *e > best.1) || (!max && *e < best.1) {
                                best = (i, *e);
                            }
                        }
                    }
                    best
                };
                let (min_xi, min_xe) = extremum(&x_errs, false);
                let (max_xi, max_xe) = extremum(&x_errs, true);
                let (min_mj, min_me) = extremum(&m_errs, false);
                let (max_mj, max_me) = extremum(&m_errs, true);
                let mut push = |estimator, target, error| {
                    records.push(TrialRecord {
                        snr_db,
                        trial,
                        seed: scene_seed,
                        estimator,
                        target,
                        error,
                        residual,
                        chosen_i: ci as i64,
                        chosen_j: cj as i64,
                    });
                };
                push("argmin-shift", "specimen", x_errs[ci].unwrap_or(f64::NAN));
                push("argmin-shift", "mask", m_errs[cj].unwrap_or(f64::NAN));
                push("min-shift", "specimen", min_xe);
                push("min-shift", "mask", min_me);
                push("max-shift", "specimen", max_xe);
                push("max-shift", "mask", max_me);
                if let (Some(xe), Some(me)) = (&x_errs[0], &m_errs[0]) {
                    push("no-shift", "specimen", *xe);
                    push("no-shift", "mask", *me);
                }
                chosen.push(("argmin-specimen", ci));
                chosen.push(("argmin-mask", cj));
                chosen.push(("min-specimen", min_xi));
                chosen.push(("min-mask", min_mj));
                let _ = (max_xi, max_mj);
            }
            _ => unreachable!("blind_trial only handles blind modes"),
        }
        Ok((records, chosen))
    };
    match run() {
        Ok((r, c)) => {
            records = r;
            chosen = c;
        }
        Err(e) => failure = Some(e.to_string()),
    }
    TrialOutput { records, chosen, wall_ms: t0.elapsed().as_secs_f64() * 1e3, failure }
}

/// Run one known-mask trial at one SNR.
fn wdd_trial(cfg: &ExperimentConfig, snr_db: f64, trial: usize) -> TrialOutput {
    let t0 = std::time::Instant::now();
    let scene_seed = derive_seed(cfg.seed, 2 * trial as u64);
    let noise_seed = derive_seed(cfg.seed, 2 * trial as u64 + 1);
    let run = || -> Result<Vec<TrialRecord>> {
        let scene = PtychoScene::random(cfg.d, cfg.delta, scene_seed);
        let y0 = match cfg.mode {
            Mode::Subsampled => measurement::forward_subsampled_freq_space(
                &scene,
                cfg.k_modes.unwrap_or(cfg.d),
                cfg.l_shifts.unwrap_or(cfg.d),
            )?,
            _ => measurement::forward_full(&scene),
        };
        let y = measurement::add_noise(&y0, snr_db, noise_seed)?;
        let x_est = wdd::wdd_recover(&y, scene.m(), cfg.kappa, MaskDomain::Spatial)?;
        let err = blind_ptycho::relative_error(&x_est, scene.x())?;
        Ok(vec![TrialRecord {
            snr_db,
            trial,
            seed: scene_seed,
            estimator: "wdd",
            target: "specimen",
            error: err,
            residual: f64::NAN,
            chosen_i: -1,
            chosen_j: -1,
        }])
    };
    match run() {
        Ok(records) => TrialOutput {
            records,
            chosen: Vec::new(),
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            failure: None,
        },
        Err(e) => TrialOutput {
            records: Vec::new(),
            chosen: Vec::new(),
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            failure: Some(e.to_string()),
        },
    }
}

fn write_outputs(
    cfg: &ExperimentConfig,
    outputs: &[(f64, usize, TrialOutput)],
) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir)?;

    // trials.csv
    let mut trials = metadata_block(cfg, "trials-v1");
    trials.push_str("snr_db,trial,seed,estimator,target,error,residual,chosen_i,chosen_j\n");
    for (_, _, out) in outputs {
        for r in &out.records {
            let _ = writeln!(
                trials,
                "{},{},{},{},{},{},{},{},{}",
                fmt_f64(r.snr_db),
                r.trial,
                r.seed,
                r.estimator,
                r.target,
                fmt_f64(r.error),
                fmt_f64(r.residual),
                r.chosen_i,
                r.chosen_j
            );
        }
    }
    std::fs::write(cfg.out_dir.join("trials.csv"), trials)?;

    // summary.csv: mean and median per (snr, estimator, target)
    let mut summary = metadata_block(cfg, "summary-v1");
    summary.push_str("snr_db,estimator,target,count,mean_error,median_error\n");
    let mut keys: Vec<(f64, &str, &str)> = Vec::new();
    for (_, _, out) in outputs {
        for r in &out.records {
            let key = (r.snr_db, r.estimator, r.target);
            if !keys.iter().any(|k| k.0.total_cmp(&key.0).is_eq() && k.1 == key.1 && k.2 == key.2)
            {
                keys.push(key);
            }
        }
    }
    for (snr, estimator, target) in keys {
        let mut errs: Vec<f64> = outputs
            .iter()
            .flat_map(|(_, _, out)| out.records.iter())
            .filter(|r| {
                r.snr_db.total_cmp(&snr).is_eq()
                    && r.estimator == estimator
                    && r.target == target
                    && r.error.is_finite()
            })
            .map(|r| r.error)
            .collect();
        errs.sort_by(f64::total_cmp);
        if errs.is_empty() {
            continue;
        }
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let median = errs[errs.len() / 2];
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{}",
            fmt_f64(snr),
            estimator,
            target,
            errs.len(),
            fmt_f64(mean),
            fmt_f64(median)
        );
    }
    std::fs::write(cfg.out_dir.join("summary.csv"), summary)?;

    // histogram.csv: chosen-index frequencies per snr and kind
    let mut hist = metadata_block(cfg, "histogram-v1");
    hist.push_str("snr_db,kind,shift_index,count\n");
    let n_shifts = 2 * cfg.delta - 1;
    for snr in &cfg.snr_grid {
        for kind in ["argmin-specimen", "argmin-mask", "min-specimen", "min-mask"] {
            let mut counts = vec![0usize; n_shifts];
            for (s, _, out) in outputs {
                if !s.total_cmp(snr).is_eq() {
                    continue;
                }
                for (k, idx) in &out.chosen {
                    if *k == kind && *idx < n_shifts {
                        counts[*idx] += 1;
                    }
                }
            }
            for (idx, count) in counts.iter().enumerate() {
                let _ = writeln!(hist, "{},{},{},{}", fmt_f64(*snr), kind, idx, count);
            }
        }
    }
    std::fs::write(cfg.out_dir.join("histogram.csv"), hist)?;

    // timing.csv: wall clock, excluded from determinism guarantees
    let mut timing = metadata_block(cfg, "timing-v1");
    timing.push_str("snr_db,trial,wall_ms,failure\n");
    for (snr, trial, out) in outputs {
        let _ = writeln!(
            timing,
            "{},{},{:.3},{}",
            fmt_f64(*snr),
            trial,
            out.wall_ms,
            out.failure.as_deref().unwrap_or("")
        );
    }
    std::fs::write(cfg.out_dir.join("timing.csv"), timing)?;

    Ok(cfg.out_dir.clone())
}

/// Run a full sweep in the configured mode; returns the output directory.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<PathBuf> {
    validate_config(cfg)?;
    let jobs: Vec<(f64, usize)> = cfg
        .snr_grid
        .iter()
        .flat_map(|&snr| (0..cfg.trials).map(move |t| (snr, t)))
        .collect();
    let outputs: Vec<(f64, usize, TrialOutput)> = jobs
        .par_iter()
        .map(|&(snr, t)| {
            let out = match cfg.mode {
                Mode::WddKnownMask | Mode::Subsampled => wdd_trial(cfg, snr, t),
                Mode::BlindZeroShift | Mode::BlindMultiShift => blind_trial(cfg, snr, t),
            };
            (snr, t, out)
        })
        .collect();
    write_outputs(cfg, &outputs)
}

/// Known-mask demo: error-vs-SNR CSV for the WDD pipeline (full or
/// sub-sampled per the config). Returns the output directory.
pub fn run_wdd_demo(cfg: &ExperimentConfig) -> Result<PathBuf> {
    if !matches!(cfg.mode, Mode::WddKnownMask | Mode::Subsampled) {
        return Err(Error::InvalidConfig(vec![format!(
            "wdd demo requires mode wdd-known-mask or subsampled, got {}",
            cfg.mode.name()
        )]));
    }
    run_sweep(cfg)
}

/// Parse `key=value` lines (blank lines and `#` comments allowed) into an
/// [`ExperimentConfig`], starting from defaults.
pub fn config_from_text(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut problems = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push(format!("line {}: expected key=value", lineno + 1));
            continue;
        };
        if let Err(e) = apply_key(&mut cfg, key.trim(), value.trim()) {
            problems.push(format!("line {}: {e}", lineno + 1));
        }
    }
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::InvalidConfig(problems))
    }
}

/// Set one config field from its textual name. Shared by the config-file
/// parser and the CLI flag layer.
pub fn apply_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    let bad = |what: &str| Error::InvalidConfig(vec![format!("bad {what}: '{value}'")]);
    match key {
        "d" => cfg.d = value.parse().map_err(|_| bad("d"))?,
        "delta" => cfg.delta = value.parse().map_err(|_| bad("delta"))?,
        "n" => cfg.n = value.parse().map_err(|_| bad("n"))?,
        "kappa" => cfg.kappa = value.parse().map_err(|_| bad("kappa"))?,
        "trials" => cfg.trials = value.parse().map_err(|_| bad("trials"))?,
        "iters" => cfg.iters = value.parse().map_err(|_| bad("iters"))?,
        "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
        "mode" => cfg.mode = Mode::parse(value)?,
        "out_dir" => cfg.out_dir = PathBuf::from(value),
        "k_modes" => cfg.k_modes = Some(value.parse().map_err(|_| bad("k_modes"))?),
        "l_shifts" => cfg.l_shifts = Some(value.parse().map_err(|_| bad("l_shifts"))?),
        "snr_grid" => {
            let mut grid = Vec::new();
            for part in value.split(';').filter(|p| !p.is_empty()) {
                if part == "inf" {
                    grid.push(f64::INFINITY);
                } else {
                    grid.push(part.parse().map_err(|_| bad("snr_grid"))?);
                }
            }
            cfg.snr_grid = grid;
        }
        other => {
            return Err(Error::InvalidConfig(vec![format!("unknown key '{other}'")]));
        }
    }
    Ok(())
}

/// Load the trial error column back out of a trials.csv (test support).
pub fn read_errors_csv(path: &Path, estimator: &str, target: &str) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 9 || parts[3] != estimator || parts[4] != target {
            continue;
        }
        let snr = if parts[0] == "inf" { f64::INFINITY } else { parts[0].parse().unwrap_or(f64::NAN) };
        let err: f64 = parts[5].parse().unwrap_or(f64::NAN);
        out.push((snr, err));
    }
    Ok(out)
}
