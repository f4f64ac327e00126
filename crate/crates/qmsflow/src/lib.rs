//! Numerical library for finite tower models of unital inclusions,
//! bimodule-symmetric quantum Markov semigroups, directional gradient
//! calculus, and entropy-inequality certification.
//!
//! Layer map (bottom to top):
//!
//! * [`matcore`] — dense complex-matrix kernel (Jacobi eigensolver, SVD,
//!   spectral functions, logarithmic means, seeded samplers).
//! * [`tower`] — concrete finite tower models of ℂⁿ ⊂ Mₙ (exact tensor
//!   representation + fast Schur representation) and ℂ ⊂ M_d, with Fourier
//!   transform, convolution and conditional expectations.
//! * [`semigroup`] — construction, decomposition and symmetry verification
//!   of bimodule Lindblad generators.
//! * [`directional`] — numerical block decomposition of the direction
//!   algebra, matched matrix units, derivations, gradient/divergence, the
//!   directional matrix and the weight transform.
//! * [`flow`] — hidden density, gradient-flow representation of the dual
//!   Laplacian, flow integration, entropy-decay / transport certificates.
//! * [`clifford`] — the two-generator Clifford model with its intertwining
//!   constants.

pub mod clifford;
pub mod directional;
pub mod error;
pub mod flow;
pub mod matcore;
pub mod semigroup;
pub mod tower;

pub use error::{Error, Result};
pub use matcore::{CMat, CVec, Rng};
