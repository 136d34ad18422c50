//! Recovery of a specimen and an illumination mask from far-field
//! ptychographic intensity measurements.
//!
//! The measurements are first rewritten as circular deconvolutions of Gram
//! diagonals (spectrogram inversion). With a known mask the diagonals are
//! freed by pointwise division and the specimen is re-assembled by angular
//! synchronization. With an unknown mask each deconvolution is solved blind,
//! by lifting to a rank-1 matrix recovery problem attacked with spectral
//! initialization plus regularized Wirtinger gradient descent, and the final
//! specimen/mask pair is selected by measurement-domain residual over all
//! shift combinations.
//!
//! Modules, bottom up:
//!
//! * [`signal`] / [`linalg`] - discrete-signal operators, structured matrix
//!   products, power iterations.
//! * [`measurement`] - the forward intensity model, sub-sampling, noise.
//! * [`wdd`] - known-mask Wigner distribution deconvolution.
//! * [`angular_sync`] - eigenvector phase synchronization on banded Gram
//!   diagonals.
//! * [`blind_deconv`] - the lifted blind-deconvolution solver.
//! * [`blind_ptycho`] - the full blind pipeline over all admissible shifts.
//! * [`experiment`] - seeded Monte-Carlo sweeps with CSV output.

pub mod angular_sync;
pub mod blind_deconv;
pub mod blind_ptycho;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod measurement;
pub mod rng;
pub mod signal;
pub mod wdd;

pub use error::{Error, Result};
pub use linalg::CMat;
pub use signal::{C64, CVec};
