//! Heat kernels of `H = −Δ + V`: closed forms for quadratic potentials, an
//! ODE route to the same coefficients, spectral reference kernels for
//! general potentials, weight-class diagnostics and bound envelopes.

pub mod bounds;
pub mod error;
pub mod explicit;
pub mod hyperbolic;
pub mod kernel;
pub mod ode;
pub mod potentials;
pub mod quadrature;
pub mod spectral;
pub mod tridiag;

pub use error::{Error, Result};
pub use kernel::{KernelEvaluator, KernelValue};
