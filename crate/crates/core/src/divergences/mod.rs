//! State divergences in bits.
//!
//! Everything here is reported in base 2. Support violations (`p(x) > 0` where
//! `q(x) = 0`, or `ρ` leaking out of the support of `σ`) give
//! [`ExtReal::Infinite`]; inputs are never smoothed to avoid them.

mod classical;
mod measured;
mod quantum;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TestOperator;

pub use classical::{dh_classical, kl_divergence};
pub use measured::{measured_relative_entropy_lower, measurement_value};
pub use quantum::{dh_quantum, dmax, quantum_relative_entropy};

/// Eigenvalues below this fraction of the largest one count as zero.
pub const SUPPORT_REL_TOL: f64 = 1e-10;
/// Weight of `ρ` on the kernel of `σ` above which `ρ ≪ σ` fails.
pub const LEAKAGE_TOL: f64 = 1e-9;
/// Classical probabilities at or below this count as zero for support checks.
pub const CLASSICAL_ZERO: f64 = 1e-12;

/// A real number or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(into = "Option<f64>", from = "Option<f64>")]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl From<ExtReal> for Option<f64> {
    fn from(v: ExtReal) -> Self {
        match v {
            ExtReal::Finite(x) => Some(x),
            ExtReal::Infinite => None,
        }
    }
}

impl From<Option<f64>> for ExtReal {
    fn from(v: Option<f64>) -> Self {
        v.map_or(ExtReal::Infinite, ExtReal::Finite)
    }
}

impl ExtReal {
    pub fn from_f64(x: f64) -> Self {
        if x == f64::INFINITY {
            ExtReal::Infinite
        } else {
            ExtReal::Finite(x)
        }
    }

    /// The value as an `f64`, with `+∞` for the infinite marker.
    pub fn value(self) -> f64 {
        match self {
            ExtReal::Finite(x) => x,
            ExtReal::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtReal::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            ExtReal::Infinite => None,
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Finite value, or `cap` in place of `+∞`.
    pub fn capped(self, cap: f64) -> f64 {
        self.finite().map_or(cap, |x| x.min(cap))
    }

    /// `−log₂ β`, infinite at `β = 0`.
    pub fn neg_log2(beta: f64) -> ExtReal {
        if beta <= 0.0 {
            ExtReal::Infinite
        } else {
            ExtReal::Finite(-beta.log2())
        }
    }
}

impl std::fmt::Display for ExtReal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::Infinite => write!(f, "inf"),
        }
    }
}

/// An optimal Neyman-Pearson test for one pair of hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct NpTest {
    /// Likelihood-ratio threshold: outcomes with ratio above it are accepted,
    /// those exactly at it with weight `inner_fraction`.
    pub threshold: f64,
    pub inner_fraction: f64,
    pub test: TestOperator,
    /// Type-I error `1 − Tr(Mρ)`.
    pub achieved_alpha: f64,
    /// Type-II error `Tr(Mσ)`.
    pub achieved_beta: f64,
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::invalid("eps", format!("{eps} is outside [0, 1]")));
    }
    Ok(())
}

/// `h(ε) = −ε log₂ ε − (1−ε) log₂(1−ε)`.
pub fn binary_entropy(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    Ok(term(eps) + term(1.0 - eps))
}
