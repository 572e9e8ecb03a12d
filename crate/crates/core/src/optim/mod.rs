//! Optimization kit: dense simplex LP, convex minimization over products of
//! simplices, and ascent on the complex unit sphere.

pub mod convex;
pub mod lp;
pub mod sphere;

pub use convex::{minimize_convex_on_simplices, ConvexOptions, SimplexProductDomain, Smoothness, StepRule};
pub use lp::{solve_lp, LinearProgram, Relation, Sense};
pub use sphere::{maximize_on_sphere, SphereOptions};

pub const DEFAULT_RESTARTS: usize = 32;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Evidence attached to an optimum.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// Final simplex basis (column indices) and one dual value per constraint row.
    LpBasis { basis: Vec<usize>, duals: Vec<f64> },
    /// Upper bound on the distance from the reported value to the true optimum.
    DualityGap(f64),
    None,
}

impl Certificate {
    pub fn gap(&self) -> Option<f64> {
        match self {
            Certificate::DualityGap(g) => Some(*g),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerReport<A = Vec<f64>> {
    pub value: f64,
    pub argument: A,
    pub iterations: usize,
    pub certificate: Certificate,
    pub converged: bool,
}

/// Builds an independent RNG for one restart of a seeded search.
pub fn restart_rng(seed: u64, restart: usize) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}
