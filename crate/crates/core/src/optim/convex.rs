//! Convex minimization over a product of probability simplices.
//!
//! Smooth objectives use pairwise Frank-Wolfe and report the Frank-Wolfe gap.
//! Nonsmooth objectives (pointwise maxima of convex functions) use entropic
//! mirror descent with averaging, followed by Kelley cutting planes whose
//! model minimum is a certified lower bound on the optimum.

use crate::error::{Error, Result};

use super::lp::{solve_lp, LinearProgram};
use super::{Certificate, OptimizerReport, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Gradient entries are clipped to this magnitude so that a −∞ partial
/// derivative at the boundary still points the right way.
const GRAD_CLIP: f64 = 1e200;
/// Cut points are pulled this far toward the barycenter so that they lie in the
/// relative interior, where the objective is finite and differentiable.
const INTERIOR_SHIFT: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexProductDomain {
    blocks: Vec<usize>,
    point: Vec<f64>,
}

impl SimplexProductDomain {
    /// Product of simplices of the given sizes, starting at the barycenter.
    pub fn new(blocks: Vec<usize>) -> Result<Self> {
        if blocks.is_empty() || blocks.contains(&0) {
            return Err(Error::invalid("simplex product", "every block needs at least one coordinate"));
        }
        let point = blocks
            .iter()
            .flat_map(|&k| std::iter::repeat(1.0 / k as f64).take(k))
            .collect();
        Ok(SimplexProductDomain { blocks, point })
    }

    pub fn with_point(mut self, point: Vec<f64>) -> Result<Self> {
        if point.len() != self.dim() {
            return Err(Error::dims(self.dim(), point.len()));
        }
        for r in self.ranges() {
            let block = &point[r];
            let sum: f64 = block.iter().sum();
            if block.iter().any(|&v| v < -1e-12) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("simplex product", "block is not a probability vector"));
            }
        }
        self.point = point;
        Ok(self)
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.blocks
            .iter()
            .map(|&k| {
                let r = start..start + k;
                start += k;
                r
            })
            .collect()
    }

    pub fn barycenter(&self) -> Vec<f64> {
        SimplexProductDomain::new(self.blocks.clone()).unwrap().point
    }

    /// Splits a concatenated point into its blocks.
    pub fn split<'a>(&self, w: &'a [f64]) -> Vec<&'a [f64]> {
        self.ranges().into_iter().map(|r| &w[r]).collect()
    }

    /// All vertices of the product (one unit vector per block).
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![]];
        for &k in &self.blocks {
            let mut next = Vec::with_capacity(out.len() * k);
            for prefix in &out {
                for i in 0..k {
                    let mut v = prefix.clone();
                    v.extend((0..k).map(|j| if j == i { 1.0 } else { 0.0 }));
                    next.push(v);
                }
            }
            out = next;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Smooth,
    /// Pointwise maximum of convex pieces; the callback returns one subgradient.
    Nonsmooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Exact line search along the pairwise direction.
    LineSearch,
    /// Classical open-loop step 2/(k+2) along the Frank-Wolfe direction.
    OpenLoop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub smoothness: Smoothness,
    pub step: StepRule,
}

impl Default for ConvexOptions {
    fn default() -> Self {
        ConvexOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            smoothness: Smoothness::Smooth,
            step: StepRule::LineSearch,
        }
    }
}

impl ConvexOptions {
    pub fn nonsmooth() -> Self {
        ConvexOptions { smoothness: Smoothness::Nonsmooth, ..Self::default() }
    }
}

fn eval(f: &dyn Fn(&[f64]) -> (f64, Vec<f64>), w: &[f64]) -> (f64, Vec<f64>) {
    let (v, mut g) = f(w);
    for gi in &mut g {
        *gi = if gi.is_nan() { 0.0 } else { gi.clamp(-GRAD_CLIP, GRAD_CLIP) };
    }
    (if v.is_nan() { f64::INFINITY } else { v }, g)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(w: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    w.iter().zip(d).map(|(a, b)| (a + t * b).max(0.0)).collect()
}

/// Minimizes a convex function over a product of simplices.
///
/// `f` returns the value and a (sub)gradient. Values may be `+∞` on the
/// boundary but must be finite on the relative interior.
pub fn minimize_convex_on_simplices(
    f: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    domain: &SimplexProductDomain,
    options: &ConvexOptions,
) -> Result<OptimizerReport> {
    let (v0, g0) = f(domain.point());
    if g0.len() != domain.dim() {
        return Err(Error::dims(domain.dim(), g0.len()));
    }
    if !v0.is_finite() {
        return Err(Error::Precondition("objective is not finite at the starting point".into()));
    }
    Ok(match options.smoothness {
        Smoothness::Smooth => frank_wolfe(f, domain, options),
        Smoothness::Nonsmooth => mirror_descent_with_cuts(f, domain, options),
    })
}

/// Minimizer of `g·s` over the product domain: one vertex per block.
fn linear_minimizer(domain: &SimplexProductDomain, g: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; g.len()];
    for r in domain.ranges() {
        let best = r
            .clone()
            .min_by(|&a, &b| g[a].total_cmp(&g[b]))
            .unwrap();
        s[best] = 1.0;
    }
    s
}

/// Golden-section minimization of a convex function of one variable on `[0, hi]`.
fn line_search(phi: impl Fn(f64) -> f64, hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..80 {
        if b - a <= 1e-15 * hi.max(1e-300) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = phi(d);
        }
    }
    let mid = 0.5 * (a + b);
    // endpoints matter for linear or boundary-optimal problems
    [(0.0, phi(0.0)), (hi, phi(hi)), (mid, phi(mid))]
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap()
        .0
}

fn frank_wolfe(
    f: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    domain: &SimplexProductDomain,
    options: &ConvexOptions,
) -> OptimizerReport {
    let mut w = domain.point().to_vec();
    let (mut value, mut grad) = eval(f, &w);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < options.max_iter {
        let s = linear_minimizer(domain, &grad);
        let fw_dir: Vec<f64> = s.iter().zip(&w).map(|(a, b)| a - b).collect();
        gap = -dot(&grad, &fw_dir);
        if gap <= options.tol {
            break;
        }
        iterations += 1;
        let next = match options.step {
            StepRule::OpenLoop => {
                // 2/(k+2) with k counted from zero
                let gamma = 2.0 / (iterations as f64 + 1.0);
                axpy(&w, gamma, &fw_dir)
            }
            StepRule::LineSearch => {
                // Pairwise direction: mass moves from the worst supported coordinate
                // to the Frank-Wolfe vertex, block by block.
                let mut dir = vec![0.0; w.len()];
                let mut hi = f64::INFINITY;
                for r in domain.ranges() {
                    let to = r.clone().find(|&i| s[i] == 1.0).unwrap();
                    let from = r
                        .clone()
                        .filter(|&i| w[i] > 0.0)
                        .max_by(|&a, &b| grad[a].total_cmp(&grad[b]))
                        .unwrap();
                    if from != to {
                        dir[to] += w[from];
                        dir[from] -= w[from];
                        hi = hi.min(1.0);
                    }
                }
                if !hi.is_finite() {
                    break;
                }
                let t = line_search(|t: f64| eval(f, &axpy(&w, t, &dir)).0, hi);
                let pair = axpy(&w, t, &dir);
                let t = line_search(|t: f64| eval(f, &axpy(&w, t, &fw_dir)).0, 1.0);
                let plain = axpy(&w, t, &fw_dir);
                // Keep whichever of the pairwise and plain Frank-Wolfe moves does better.
                if eval(f, &plain).0 <= eval(f, &pair).0 {
                    plain
                } else {
                    pair
                }
            }
        };
        let (nv, ng) = eval(f, &next);
        if options.step == StepRule::LineSearch && nv >= value {
            break;
        }
        w = next;
        value = nv;
        grad = ng;
    }
    if iterations >= options.max_iter || gap > options.tol {
        let s = linear_minimizer(domain, &grad);
        gap = w.iter().zip(&s).zip(&grad).map(|((a, b), g)| g * (a - b)).sum();
    }
    OptimizerReport {
        value,
        argument: w,
        iterations,
        certificate: Certificate::DualityGap(gap.max(0.0)),
        converged: gap <= options.tol,
    }
}

struct Cut {
    /// `value − grad·point`
    offset: f64,
    grad: Vec<f64>,
}

/// Minimum of the piecewise-linear model `max_k (offset_k + grad_k·w)` over the
/// domain, together with the minimizing point.
///
/// Solved through the LP dual: maximize `Σ λ_k offset_k + Σ_b μ_b` over
/// `λ` in the simplex and `μ_b ≤ Σ_k λ_k grad_{k,i}` for every `i` in block `b`.
/// The row duals of that LP are the model minimizer.
fn kelley_model_min(domain: &SimplexProductDomain, cuts: &[Cut]) -> Option<(f64, Vec<f64>)> {
    let k = cuts.len();
    let nb = domain.blocks().len();
    let nvars = k + 2 * nb;
    let mut objective = vec![0.0; nvars];
    for (j, c) in cuts.iter().enumerate() {
        objective[j] = c.offset;
    }
    for b in 0..nb {
        objective[k + 2 * b] = 1.0;
        objective[k + 2 * b + 1] = -1.0;
    }
    let mut lp = LinearProgram::maximize(objective);
    for (b, r) in domain.ranges().into_iter().enumerate() {
        for i in r {
            let mut row = vec![0.0; nvars];
            for (j, c) in cuts.iter().enumerate() {
                row[j] = -c.grad[i];
            }
            row[k + 2 * b] = 1.0;
            row[k + 2 * b + 1] = -1.0;
            lp.le(row, 0.0);
        }
    }
    let mut simplex_row = vec![0.0; nvars];
    for v in simplex_row.iter_mut().take(k) {
        *v = 1.0;
    }
    lp.eq(simplex_row, 1.0);
    let report = solve_lp(&lp).ok()?;
    let Certificate::LpBasis { duals, .. } = report.certificate else {
        return None;
    };
    let mut w: Vec<f64> = duals[..domain.dim()].iter().map(|d| d.max(0.0)).collect();
    for r in domain.ranges() {
        let s: f64 = w[r.clone()].iter().sum();
        if s <= 0.0 {
            let k = r.len() as f64;
            w[r].iter_mut().for_each(|v| *v = 1.0 / k);
        } else {
            w[r].iter_mut().for_each(|v| *v /= s);
        }
    }
    Some((report.value, w))
}

fn mirror_descent_with_cuts(
    f: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    domain: &SimplexProductDomain,
    options: &ConvexOptions,
) -> OptimizerReport {
    let center = domain.barycenter();
    let interior = |w: &[f64]| -> Vec<f64> {
        w.iter()
            .zip(&center)
            .map(|(a, c)| (1.0 - INTERIOR_SHIFT) * a + INTERIOR_SHIFT * c)
            .collect()
    };
    let mut cuts: Vec<Cut> = Vec::new();
    let mut best_w = interior(domain.point());
    let (mut best, g0) = eval(f, &best_w);
    let add_cut = |cuts: &mut Vec<Cut>, w: &[f64], v: f64, g: Vec<f64>| {
        if v.is_finite() {
            cuts.push(Cut { offset: v - dot(&g, w), grad: g });
        }
    };
    add_cut(&mut cuts, &best_w, best, g0);

    // Mirror descent phase.
    let md_iters = (options.max_iter / 2).min(2000);
    let mut w = best_w.clone();
    let mut avg = vec![0.0; w.len()];
    let mut avg_weight = 0.0;
    let mut iterations = 0;
    for k in 1..=md_iters {
        iterations += 1;
        let (v, g) = eval(f, &w);
        if v < best {
            best = v;
            best_w = w.clone();
        }
        let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-12);
        let eta = 1.0 / (gmax * (k as f64).sqrt());
        if k % 5 == 1 {
            add_cut(&mut cuts, &w, v, g.clone());
        }
        for r in domain.ranges() {
            let shift = r.clone().map(|i| -eta * g[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for i in r.clone() {
                w[i] *= (-eta * g[i] - shift).exp();
                s += w[i];
            }
            for i in r {
                w[i] = (w[i] / s).max(1e-300);
            }
        }
        for (a, x) in avg.iter_mut().zip(&w) {
            *a += x;
        }
        avg_weight += 1.0;
    }
    if avg_weight > 0.0 {
        let mean: Vec<f64> = avg.iter().map(|a| a / avg_weight).collect();
        let (v, g) = eval(f, &mean);
        if v < best {
            best = v;
            best_w = mean.clone();
        }
        add_cut(&mut cuts, &mean, v, g);
    }
    let (v, g) = eval(f, &best_w);
    add_cut(&mut cuts, &best_w, v, g);

    // Kelley phase: refine and certify.
    let mut lower = f64::NEG_INFINITY;
    let kelley_iters = options.max_iter.saturating_sub(iterations).min(400);
    for _ in 0..kelley_iters {
        let Some((model_min, w_model)) = kelley_model_min(domain, &cuts) else {
            break;
        };
        lower = lower.max(model_min);
        if best - lower <= options.tol {
            break;
        }
        iterations += 1;
        let p = interior(&w_model);
        let (v, g) = eval(f, &p);
        if v < best {
            best = v;
            best_w = p.clone();
        }
        add_cut(&mut cuts, &p, v, g);
    }
    let gap = (best - lower).max(0.0);
    OptimizerReport {
        value: best,
        argument: best_w,
        iterations,
        certificate: Certificate::DualityGap(gap),
        converged: gap <= options.tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kl(p: &[f64], q: &[f64]) -> f64 {
        p.iter()
            .zip(q)
            .filter(|(a, _)| **a > 0.0)
            .map(|(a, b)| a * (a / b).log2())
            .sum()
    }

    #[test]
    fn linear_objective_reaches_vertex_in_one_step() {
        let c = [0.3, -0.2, 0.5];
        let f = |w: &[f64]| (dot(&c, w), c.to_vec());
        let dom = SimplexProductDomain::new(vec![3]).unwrap();
        for step in [StepRule::OpenLoop, StepRule::LineSearch] {
            let opts = ConvexOptions { step, ..Default::default() };
            let r = minimize_convex_on_simplices(&f, &dom, &opts).unwrap();
            if step == StepRule::LineSearch {
                assert_eq!(r.iterations, 1);
                assert!((r.value + 0.2).abs() < 1e-12, "{}", r.value);
                assert!(r.converged);
            }
        }
        // Open loop with a first step of 1 also lands on the vertex.
        let opts = ConvexOptions { step: StepRule::OpenLoop, max_iter: 1, ..Default::default() };
        let r = minimize_convex_on_simplices(&f, &dom, &opts).unwrap();
        assert!((r.value + 0.2).abs() < 1e-12);
    }

    #[test]
    fn constant_objective_has_zero_gap() {
        let f = |w: &[f64]| (1.5, vec![0.0; w.len()]);
        let dom = SimplexProductDomain::new(vec![2, 3]).unwrap();
        let r = minimize_convex_on_simplices(&f, &dom, &ConvexOptions::default()).unwrap();
        assert_eq!(r.value, 1.5);
        assert_eq!(r.certificate, Certificate::DualityGap(0.0));
        assert!(r.converged);
        let r = minimize_convex_on_simplices(&f, &dom, &ConvexOptions::nonsmooth()).unwrap();
        assert_eq!(r.value, 1.5);
        assert!(r.converged);
    }

    /// KL(a·v1 + (1−a)·v2 ‖ q) over a ∈ [0,1].
    fn two_vertex_kl(v1: &[f64], v2: &[f64], q: &[f64], a: f64) -> f64 {
        let p: Vec<f64> = v1.iter().zip(v2).map(|(x, y)| a * x + (1.0 - a) * y).collect();
        kl(&p, q)
    }

    #[test]
    fn kl_over_two_vertex_hull_matches_grid() {
        let cases = [
            ([0.7, 0.2, 0.1], [0.1, 0.3, 0.6], [0.3, 0.3, 0.4]),
            ([0.9, 0.1, 0.0], [0.5, 0.5, 0.0], [0.2, 0.2, 0.6]),
            ([0.25, 0.25, 0.5], [0.6, 0.3, 0.1], [0.4, 0.35, 0.25]),
        ];
        for (v1, v2, q) in cases {
            let f = |w: &[f64]| {
                let p: Vec<f64> = (0..3).map(|y| w[0] * v1[y] + w[1] * v2[y]).collect();
                let dp: Vec<f64> = (0..3)
                    .map(|y| if p[y] > 0.0 { (p[y] / q[y]).log2() + 1.0 / std::f64::consts::LN_2 } else { 0.0 })
                    .collect();
                let g = vec![dot(&v1, &dp), dot(&v2, &dp)];
                (kl(&p, &q), g)
            };
            let grid = (0..=10_000)
                .map(|i| two_vertex_kl(&v1, &v2, &q, i as f64 * 1e-4))
                .fold(f64::INFINITY, f64::min);
            let dom = SimplexProductDomain::new(vec![2]).unwrap();
            let r = minimize_convex_on_simplices(&f, &dom, &ConvexOptions::default()).unwrap();
            assert!(r.value <= grid + 1e-9, "{} vs grid {}", r.value, grid);
            assert!(r.value >= grid - 1e-6, "{} vs grid {}", r.value, grid);
            let gap = r.certificate.gap().unwrap();
            assert!(r.value - gap <= grid + 1e-12);
            let rn = minimize_convex_on_simplices(&f, &dom, &ConvexOptions::nonsmooth()).unwrap();
            assert!((rn.value - grid).abs() < 1e-6, "{} vs {}", rn.value, grid);
            assert!(rn.value - rn.certificate.gap().unwrap() <= grid + 1e-9);
        }
    }

    #[test]
    fn nonsmooth_max_of_quadratics() {
        // max((w0 − 0.8)², (w0 − 0.2)²) on the 2-simplex, minimized at w0 = 0.5 with value 0.09.
        let f = |w: &[f64]| {
            let a = (w[0] - 0.8).powi(2);
            let b = (w[0] - 0.2).powi(2);
            if a >= b {
                (a, vec![2.0 * (w[0] - 0.8), 0.0])
            } else {
                (b, vec![2.0 * (w[0] - 0.2), 0.0])
            }
        };
        let dom = SimplexProductDomain::new(vec![2]).unwrap();
        let r = minimize_convex_on_simplices(&f, &dom, &ConvexOptions::nonsmooth()).unwrap();
        assert!((r.value - 0.09).abs() < 1e-7, "{}", r.value);
        assert!(r.certificate.gap().unwrap() < 1e-6);
        assert!(r.value - r.certificate.gap().unwrap() <= 0.09 + 1e-12);
    }

    #[test]
    fn output_never_exceeds_vertex_values() {
        let v = [[0.6, 0.4], [0.1, 0.9], [0.5, 0.5]];
        let q = [[0.3, 0.7], [0.8, 0.2]];
        let f = |w: &[f64]| {
            let p: Vec<f64> = (0..2).map(|y| (0..3).map(|i| w[i] * v[i][y]).sum()).collect();
            let r: Vec<f64> = (0..2).map(|y| (0..2).map(|j| w[3 + j] * q[j][y]).sum()).collect();
            let lp: Vec<f64> = (0..2).map(|y| (p[y] / r[y]).log2() + 1.0 / std::f64::consts::LN_2).collect();
            let lr: Vec<f64> = (0..2).map(|y| -p[y] / (r[y] * std::f64::consts::LN_2)).collect();
            let mut g = Vec::new();
            for vi in &v {
                g.push(dot(vi, &lp));
            }
            for qj in &q {
                g.push(dot(qj, &lr));
            }
            (kl(&p, &r), g)
        };
        let dom = SimplexProductDomain::new(vec![3, 2]).unwrap();
        let r = minimize_convex_on_simplices(&f, &dom, &ConvexOptions::default()).unwrap();
        for vert in dom.vertices() {
            assert!(r.value <= f(&vert).0 + 1e-8);
        }
        assert!(r.converged, "{:?}", r.certificate);
    }
}
