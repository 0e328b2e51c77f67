//! Wavelet-regularized SENSE reconstruction for parallel MRI.

pub mod acquisition;
pub mod constraints;
pub mod error;
pub mod image;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod priors;
pub mod simulate;
pub mod solvers;
pub mod special;
pub mod wavelet;

pub use acquisition::{build_covariance, AcquisitionModel, DataFidelity};
pub use constraints::ConstraintSet;
pub use error::{Error, Result};
pub use image::{ComplexImage, MultiCoilData, NoiseCovariance, SensitivityMaps};
pub use num_complex::Complex64;
pub use priors::{GaussianParams, Hyperparameters, SubbandParams};
pub use simulate::{simulate, Simulation, SimulationConfig};
pub use wavelet::{dwt2, idwt2, Orientation, Subband, WaveletBasis, WaveletCoefficients, WaveletKind};
