//! Trace regression with a positive semidefinite constraint.
//!
//! This crate implements least squares estimation of a symmetric positive
//! semidefinite matrix from trace measurements `y_i = tr(X_i M) + e_i`,
//! together with the regularized competitors it is usually compared against,
//! the geometric constants that govern when the constrained estimator works,
//! and the simulation protocols used to study all of the above.
//!
//! The main pieces:
//!
//! * [`symmat`] - symmetric matrix values, the `svec` isometry, eigenvalue
//!   based norms, and cone/ball/subspace projections.
//! * [`subspace`] - the tangent subspace attached to a low-rank target and
//!   its projectors.
//! * [`sampling`] - the sampling operator (measurement matrices plus a cached
//!   design matrix) and the random/deterministic measurement ensembles.
//! * [`solvers`] - the estimators: cone-constrained least squares, ordinary
//!   least squares, nuclear-norm and trace penalized variants, the
//!   constrained trace-minimization program, and the spiked reduction.
//! * [`geometry`] - computable design constants, dual certificates, and the
//!   error-bound evaluators built from them.
//! * [`experiments`] - replication harnesses for the phase transition sweep,
//!   the estimator comparison, and the spiked recovery study, plus the
//!   nonlinear model fit for the phase curve.

pub mod error;
pub mod experiments;
pub mod geometry;
pub mod rng;
pub mod sampling;
pub mod solvers;
pub mod subspace;
pub mod symmat;

mod fista;

pub use error::{Error, Result};
pub use rng::RngSeed;
pub use sampling::SamplingOperator;
pub use subspace::SubspaceT;
pub use symmat::{EigDecomp, SVec, SymMat};
