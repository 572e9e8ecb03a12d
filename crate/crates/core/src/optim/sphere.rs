//! Riemannian gradient ascent on the unit sphere of `ℂ^d`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::CVec;

use super::{restart_rng, Certificate, OptimizerReport, DEFAULT_MAX_ITER, DEFAULT_RESTARTS, DEFAULT_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct SphereOptions {
    pub restarts: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    /// Extra deterministic starting points, tried before the random ones.
    pub starts: Vec<CVec>,
}

impl Default for SphereOptions {
    fn default() -> Self {
        SphereOptions {
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            starts: Vec::new(),
        }
    }
}

pub fn random_unit_vector(dim: usize, rng: &mut impl Rng) -> CVec {
    let v = DVector::from_fn(dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let n = v.norm();
    v / Complex64::new(n, 0.0)
}

fn normalize(v: CVec) -> CVec {
    let n = v.norm();
    v / Complex64::new(n, 0.0)
}

/// Real inner product on `ℂ^d` viewed as `ℝ^{2d}`.
fn real_dot(a: &CVec, b: &CVec) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

const STALL_WINDOW: usize = 25;
const STALL_GAIN: f64 = 1e-9;

struct Ascent {
    value: f64,
    point: CVec,
    iterations: usize,
    grad_norm: f64,
}

/// `f` returns the value and the real gradient, i.e. the vector `g` with
/// `df = Re⟨g, dψ⟩`. For `ψ ↦ ψ†Aψ` that is `2Aψ`.
///
/// Polak-Ribière conjugate directions projected onto the tangent space, with
/// Armijo backtracking and a reset to steepest ascent whenever the direction
/// stops being an ascent direction.
fn ascend(f: &dyn Fn(&CVec) -> (f64, CVec), start: CVec, tol: f64, max_iter: usize) -> Ascent {
    let tangent_at = |psi: &CVec, v: &CVec| v - psi * Complex64::new(real_dot(psi, v), 0.0);
    let mut psi = normalize(start);
    let (mut value, grad) = f(&psi);
    let mut tangent = tangent_at(&psi, &grad);
    let mut direction = tangent.clone();
    let mut step = 1.0;
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    let mut window_start = value;
    while iterations < max_iter && value.is_finite() {
        grad_norm = tangent.norm();
        if grad_norm <= tol {
            break;
        }
        if iterations > 0 && iterations % STALL_WINDOW == 0 {
            if value - window_start <= STALL_GAIN * value.abs().max(1.0) {
                break;
            }
            window_start = value;
        }
        let mut slope = real_dot(&tangent, &direction);
        if slope <= 0.0 {
            direction = tangent.clone();
            slope = grad_norm * grad_norm;
        }
        iterations += 1;
        let mut accepted = false;
        step *= 2.0;
        for _ in 0..60 {
            let cand = normalize(&psi + &direction * Complex64::new(step, 0.0));
            let (v, g) = f(&cand);
            if v.is_nan() {
                step *= 0.5;
                continue;
            }
            if v >= value + 1e-4 * step * slope {
                let gain = v - value;
                let next = tangent_at(&cand, &g);
                let carried = tangent_at(&cand, &direction);
                let prev = tangent_at(&cand, &tangent);
                let beta = (real_dot(&next, &(&next - &prev)) / (grad_norm * grad_norm)).max(0.0);
                direction = &next + carried * Complex64::new(beta, 0.0);
                tangent = next;
                psi = cand;
                value = v;
                accepted = true;
                if gain <= tol * 1e-3 * value.abs().max(1.0) {
                    // Progress has stalled at working precision.
                    return Ascent { value, point: psi, iterations, grad_norm };
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if direction == tangent {
                break;
            }
            direction = tangent.clone();
        }
    }
    Ascent { value, point: psi, iterations, grad_norm }
}

/// Best local maximum over the supplied starts and `restarts` random starts.
///
/// Restart `i` draws its start from the ChaCha stream `(seed, i)`, so results do
/// not depend on evaluation order. A start with value `+∞` ends the search.
pub fn maximize_on_sphere(
    f: &dyn Fn(&CVec) -> (f64, CVec),
    dim: usize,
    options: &SphereOptions,
) -> OptimizerReport<CVec> {
    let mut starts: Vec<CVec> = options.starts.iter().filter(|s| s.len() == dim).cloned().collect();
    for i in 0..options.restarts {
        starts.push(random_unit_vector(dim, &mut restart_rng(options.seed, i)));
    }
    if starts.is_empty() {
        starts.push(crate::linalg::unit_vector(dim, 0));
    }
    let mut best: Option<Ascent> = None;
    let mut iterations = 0;
    let mut all_converged = true;
    for s in starts {
        let run = ascend(f, s, options.tol, options.max_iter);
        iterations += run.iterations;
        all_converged &= run.iterations < options.max_iter;
        let infinite = run.value == f64::INFINITY;
        if best.as_ref().map_or(true, |b| run.value > b.value) {
            best = Some(run);
        }
        if infinite {
            break;
        }
    }
    let best = best.unwrap();
    OptimizerReport {
        value: best.value,
        argument: best.point,
        iterations,
        certificate: if best.grad_norm.is_finite() {
            Certificate::DualityGap(best.grad_norm)
        } else {
            Certificate::None
        },
        converged: all_converged,
    }
}
