//! Learning physically consistent Markovian generators for a two-qubit
//! subsystem from noisy, randomly timed projective measurements.
//!
//! The pipeline is: exact reference dynamics ([`dynamics`], [`tebd`]) →
//! emulated shot-noise measurements ([`measurement`]) → training of the
//! Lindblad dynamics approximator ([`trainer`]) → out-of-sample validation
//! ([`evaluation`]) and interpretable readout ([`generator`]).

pub mod basis;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod expm;
pub mod generator;
pub mod io;
pub mod linalg;
pub mod measurement;
pub mod pipeline;
pub mod rng;
pub mod tebd;
pub mod trainer;

pub use error::{Error, Result};

pub use nalgebra;
pub use num_complex::Complex64 as C64;

/// Dense complex matrix used for operators and states.
pub type CMat = nalgebra::DMatrix<C64>;
/// Real 16×16 matrix acting on two-qubit coherence vectors.
pub type Mat16 = nalgebra::SMatrix<f64, 16, 16>;
/// Two-qubit coherence vector storage.
pub type Vec16 = nalgebra::SVector<f64, 16>;
