//! Correlation decay for linear dynamics that preserve a Gaussian measure.
//!
//! The crate builds T-eigenvector fields on the unit circle, the truncated
//! operators they diagonalise, and the Gaussian invariant measure they induce.
//! Correlations `I_n(f, g)` are computed three ways: Fourier quadrature over
//! the field (`spectral`), closed forms over Wick monomials (`chaos`), and
//! direct sampling (`mc`).
//!
//! Coordinates are 0-based: the field lives on `e_0 .. e_{N-1}`. Signed chaos
//! indices are 1-based labels, `+l` is the real direction of `e_{l-1}` and `-l`
//! the imaginary one. See [`chaos::SignedIndex`].

pub mod chaos;
pub mod correlate;
pub mod error;
pub mod field;
pub mod measure;
pub mod model;
pub mod tolerances;
mod util;

pub use chaos::{ChaosObservable, SignedIndex, SymmetricCoefficients, WickMonomial};
pub use correlate::{CorrelationSeries, DecayFit, Route};
pub use error::{Error, Result};
pub use field::{EigenvectorField, FieldSpec};
pub use measure::GaussianSampler;
pub use model::{CovarianceModel, OperatorModel};
pub use num_complex::Complex64;
