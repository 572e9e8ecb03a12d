//! Composite classical and quantum channel discrimination.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: distributions, density matrices, channels, POVMs and tests.
//! - [`optim`]: dense simplex LP, convex minimization over products of simplices,
//!   and ascent on the complex unit sphere.
//! - [`divergences`]: state divergences (KL, Umegaki, max-divergence,
//!   hypothesis-testing divergence, measured relative entropy lower bounds).
//! - [`channel_div`]: channel divergences and regularized brackets.
//! - [`exponents`]: Stein-exponent solvers for composite channel hypotheses.
//! - [`protocols`]: hypothesis families, exact strategy evaluation by dynamic
//!   programming, adversarial testing and the built-in two-channel example.
//! - [`cli`]: JSON configs in, JSON/CSV reports out.
//!
//! All logarithms are base two.

pub mod error;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod divergences;
pub mod channel_div;
pub mod exponents;
pub mod protocols;
pub mod cli;

pub use error::{Error, Result};
