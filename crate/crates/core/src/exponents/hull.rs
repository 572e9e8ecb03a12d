//! Minimization of classical channel divergences over convex hulls.
//!
//! For hull weights `a` over `S` and `b` over `T` the mixed channels have rows
//! `P_x = Σ aᵢ Eᵢ(x)` and `Q_x = Σ bⱼ Fⱼ(x)`. Each `f_x(a, b) = D(P_x ‖ Q_x)`
//! is jointly convex; the channel divergence is `max_x f_x`.

use crate::channel_div::classical_channel_divergence;
use crate::divergences::ExtReal;
use crate::error::{Error, Result};
use crate::model::{ClassicalChannel, ProbVector};
use crate::optim::{
    minimize_convex_on_simplices, solve_lp, Certificate, ConvexOptions, LinearProgram, SimplexProductDomain,
};

use super::{check_compatible, ExponentReport, HypothesisSet, PairCertificate};

/// Agreement required between the primal value and the dual certificate.
pub const MINIMAX_GAP_TOL: f64 = 1e-3;
const DUAL_ROUNDS: usize = 60;
const DUAL_STOP: f64 = 1e-5;
/// Inner solves only need to resolve the dual to well below `DUAL_STOP`; the
/// bound they return is certified at any precision.
const INNER_OPTIONS: ConvexOptions = ConvexOptions {
    tol: 1e-7,
    max_iter: 2_000,
    smoothness: crate::optim::Smoothness::Smooth,
    step: crate::optim::StepRule::LineSearch,
};

/// Per-input divergences of hull mixtures, with gradients in `(a, b)`.
pub(crate) struct HullPieces<'a> {
    s: Vec<&'a ClassicalChannel>,
    t: Vec<&'a ClassicalChannel>,
}

impl<'a> HullPieces<'a> {
    pub(crate) fn new(s: Vec<&'a ClassicalChannel>, t: Vec<&'a ClassicalChannel>) -> Self {
        HullPieces { s, t }
    }

    pub(crate) fn inputs(&self) -> usize {
        self.s[0].input_size()
    }

    pub(crate) fn domain(&self) -> SimplexProductDomain {
        SimplexProductDomain::new(vec![self.s.len(), self.t.len()]).unwrap()
    }

    pub(crate) fn split<'w>(&self, w: &'w [f64]) -> (&'w [f64], &'w [f64]) {
        w.split_at(self.s.len())
    }

    /// `f_x(a, b)` and its gradient.
    pub(crate) fn piece(&self, w: &[f64], x: usize) -> (f64, Vec<f64>) {
        let (a, b) = self.split(w);
        let ny = self.s[0].output_size();
        let mut value = 0.0;
        let mut dp = vec![0.0; ny];
        let mut dq = vec![0.0; ny];
        for y in 0..ny {
            let p: f64 = a.iter().zip(&self.s).map(|(ai, e)| ai * e.prob(x, y)).sum();
            let q: f64 = b.iter().zip(&self.t).map(|(bj, f)| bj * f.prob(x, y)).sum();
            if p <= 0.0 {
                // d/dp of p log p is −∞ here; the clipped value keeps the direction.
                dp[y] = if q > 0.0 { -1e100 } else { 0.0 };
                continue;
            }
            if q <= 0.0 {
                return (f64::INFINITY, vec![0.0; w.len()]);
            }
            value += p * (p / q).log2();
            dp[y] = (p / q).log2() + std::f64::consts::LOG2_E;
            dq[y] = -p / q * std::f64::consts::LOG2_E;
        }
        let mut grad = Vec::with_capacity(w.len());
        for e in &self.s {
            grad.push((0..ny).map(|y| e.prob(x, y) * dp[y]).sum());
        }
        for f in &self.t {
            grad.push((0..ny).map(|y| f.prob(x, y) * dq[y]).sum());
        }
        (value, grad)
    }

    pub(crate) fn pieces(&self, w: &[f64]) -> Vec<f64> {
        (0..self.inputs()).map(|x| self.piece(w, x).0).collect()
    }

    /// `max_x f_x` with the gradient of the first maximizing piece.
    pub(crate) fn max_piece(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for x in 0..self.inputs() {
            let p = self.piece(w, x);
            if p.0 > best.0 {
                best = p;
            }
        }
        best
    }

    /// `Σ_x ν_x f_x` and its gradient.
    pub(crate) fn weighted(&self, w: &[f64], nu: &[f64]) -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let mut grad = vec![0.0; w.len()];
        for (x, &nx) in nu.iter().enumerate() {
            if nx <= 0.0 {
                continue;
            }
            let (v, g) = self.piece(w, x);
            value += nx * v;
            for (gi, pi) in grad.iter_mut().zip(g) {
                *gi += nx * pi;
            }
        }
        (value, grad)
    }
}

/// `S` vertices whose outputs stay inside the union support of `T` on every
/// input: outside that face every hull mixture with interior `T` weights has
/// infinite divergence.
pub(crate) fn finite_face<'a>(s: &[&'a ClassicalChannel], t: &[&ClassicalChannel]) -> Vec<usize> {
    let (nx, ny) = (s[0].input_size(), s[0].output_size());
    (0..s.len())
        .filter(|&i| {
            (0..nx).all(|x| (0..ny).all(|y| s[i].prob(x, y) <= 0.0 || t.iter().any(|f| f.prob(x, y) > 0.0)))
        })
        .collect()
}

fn embed_weights(face: &[usize], total: usize, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; total];
    for (k, &i) in face.iter().enumerate() {
        out[i] = w[k];
    }
    out
}

struct HullOptimum {
    value: f64,
    gap: f64,
    s_weights: Vec<f64>,
    t_weights: Vec<f64>,
}

/// `min over (a, b) of max_x D(P_x ‖ Q_x)` for two hulls.
fn minimize_over_hulls(s: &[&ClassicalChannel], t: &[&ClassicalChannel]) -> Result<Option<HullOptimum>> {
    let face = finite_face(s, t);
    if face.is_empty() {
        return Ok(None);
    }
    let sf: Vec<&ClassicalChannel> = face.iter().map(|&i| s[i]).collect();
    let pieces = HullPieces::new(sf, t.to_vec());
    let f = |w: &[f64]| pieces.max_piece(w);
    let report = minimize_convex_on_simplices(&f, &pieces.domain(), &ConvexOptions::nonsmooth())?;
    let (a, b) = pieces.split(&report.argument);
    Ok(Some(HullOptimum {
        value: report.value,
        gap: report.certificate.gap().unwrap_or(f64::INFINITY),
        s_weights: embed_weights(&face, s.len(), a),
        t_weights: b.to_vec(),
    }))
}

/// Minimum of the classical channel divergence over `S × T`, where each set is
/// taken as its hull when flagged and as its vertices otherwise.
pub fn hull_divergence(
    s: &[&ClassicalChannel],
    s_hull: bool,
    t: &[&ClassicalChannel],
    t_hull: bool,
) -> Result<ExponentReport> {
    // Vertex pairs bound the value from above and settle the no-hull case.
    let mut best_pair: Option<(ExtReal, usize, usize)> = None;
    for (i, e) in s.iter().enumerate() {
        for (j, f) in t.iter().enumerate() {
            let v = classical_channel_divergence(e, f)?;
            if best_pair.as_ref().map_or(true, |(b, ..)| v < *b) {
                best_pair = Some((v, i, j));
            }
        }
    }
    let (pair_value, pi, pj) = best_pair.unwrap();
    let vertex_report = ExponentReport {
        pair_certificate: Some(PairCertificate::vertices(pi, pj, s.len(), t.len())),
        ..ExponentReport::exact(pair_value)
    };
    if !s_hull && !t_hull {
        return Ok(vertex_report);
    }
    // A non-hull side is enumerated one vertex at a time.
    let s_groups: Vec<Vec<usize>> = if s_hull { vec![(0..s.len()).collect()] } else { (0..s.len()).map(|i| vec![i]).collect() };
    let t_groups: Vec<Vec<usize>> = if t_hull { vec![(0..t.len()).collect()] } else { (0..t.len()).map(|j| vec![j]).collect() };
    let mut best: Option<(f64, f64, PairCertificate)> = None;
    for sg in &s_groups {
        for tg in &t_groups {
            let sv: Vec<&ClassicalChannel> = sg.iter().map(|&i| s[i]).collect();
            let tv: Vec<&ClassicalChannel> = tg.iter().map(|&j| t[j]).collect();
            let Some(opt) = minimize_over_hulls(&sv, &tv)? else { continue };
            if best.as_ref().map_or(true, |(v, ..)| opt.value < *v) {
                let cert = PairCertificate {
                    s_weights: embed_weights(sg, s.len(), &opt.s_weights),
                    t_weights: embed_weights(tg, t.len(), &opt.t_weights),
                };
                best = Some((opt.value, opt.gap, cert));
            }
        }
    }
    let Some((value, gap, cert)) = best else {
        return Ok(vertex_report);
    };
    if ExtReal::Finite(value) >= pair_value {
        return Ok(vertex_report);
    }
    Ok(ExponentReport {
        value: ExtReal::Finite(value),
        lower: ExtReal::Finite((value - gap).max(0.0)),
        upper: ExtReal::Finite(value),
        pair_certificate: Some(cert),
        duality_gap: gap,
        ..ExponentReport::exact(ExtReal::Finite(value))
    })
}

/// Lower bound on `min over hulls of Σ_x ν_x f_x` from Frank-Wolfe, with the
/// minimizer.
fn inner_minimum(pieces: &HullPieces, nu: &[f64]) -> Result<(f64, Vec<f64>)> {
    let f = |w: &[f64]| pieces.weighted(w, nu);
    let report = minimize_convex_on_simplices(&f, &pieces.domain(), &INNER_OPTIONS)?;
    let gap = match report.certificate {
        Certificate::DualityGap(g) => g,
        _ => f64::INFINITY,
    };
    Ok((report.value - gap, report.argument))
}

/// Parallel exponent of two convex classical hypotheses: the minimum over both
/// hulls of the channel divergence, certified by the max-min dual.
///
/// The dual maximizes `φ(ν) = min over hulls of Σ_x ν_x D(P_x ‖ Q_x)`. Each
/// evaluation of `φ` gives a certified lower bound (Frank-Wolfe value minus
/// gap) and a minimizer whose per-input values cut the concave `φ` from above;
/// the next `ν` maximizes that cutting-plane model by LP.
pub fn convex_classical_exponent(s: &HypothesisSet, t: &HypothesisSet) -> Result<ExponentReport> {
    check_compatible(s, t)?;
    if !s.take_hull() || !t.take_hull() {
        return Err(Error::Precondition("convex exponent needs both sets flagged as hulls".into()));
    }
    let sv = s.classical_vertices()?;
    let tv = t.classical_vertices()?;
    let primal = hull_divergence(&sv, true, &tv, true)?;
    let Some(primal_value) = primal.value.finite() else {
        return Ok(primal);
    };
    let face = finite_face(&sv, &tv);
    let sf: Vec<&ClassicalChannel> = face.iter().map(|&i| sv[i]).collect();
    let pieces = HullPieces::new(sf, tv.clone());
    let nx = pieces.inputs();

    let mut best_primal = primal_value;
    let mut best_primal_w: Option<Vec<f64>> = None;
    let mut dual = f64::NEG_INFINITY;
    let mut best_nu = vec![1.0 / nx as f64; nx];
    let mut cuts: Vec<Vec<f64>> = Vec::new();
    let mut nu = best_nu.clone();
    let mut visited: Vec<Vec<f64>> = Vec::new();
    for _ in 0..DUAL_ROUNDS {
        let (lower, w) = inner_minimum(&pieces, &nu)?;
        if lower > dual {
            dual = lower;
            best_nu = nu.clone();
        }
        let values = pieces.pieces(&w);
        let g = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if g < best_primal {
            best_primal = g;
            best_primal_w = Some(w.clone());
        }
        cuts.push(values);
        if best_primal - dual <= DUAL_STOP {
            break;
        }
        // max s  s.t.  s ≤ Σ_x ν_x f_x(w_k) for every stored k,  ν in the simplex.
        let mut lp = LinearProgram::maximize([vec![0.0; nx], vec![1.0]].concat());
        for c in &cuts {
            let row: Vec<f64> = c.iter().map(|v| -v.min(1e6)).chain([1.0]).collect();
            lp.le(row, 0.0);
        }
        lp.eq([vec![1.0; nx], vec![0.0]].concat(), 1.0);
        let model = solve_lp(&lp)?;
        if model.value - dual <= DUAL_STOP {
            break;
        }
        visited.push(nu);
        nu = model.argument[..nx].to_vec();
        // A repeated proposal reproduces the same inexact cut.
        let repeats = visited
            .iter()
            .any(|v| v.iter().zip(&nu).all(|(a, b)| (a - b).abs() <= 1e-9));
        if repeats {
            break;
        }
    }
    let mut report = primal;
    if let Some(w) = best_primal_w {
        let (a, b) = pieces.split(&w);
        report.pair_certificate = Some(PairCertificate {
            s_weights: embed_weights(&face, sv.len(), a),
            t_weights: b.to_vec(),
        });
    }
    let dual = dual.max(0.0);
    report.value = ExtReal::Finite(best_primal);
    report.upper = ExtReal::Finite(best_primal);
    report.lower = ExtReal::Finite(dual.min(best_primal));
    report.duality_gap = best_primal - dual;
    report.input_certificate = Some(ProbVector::normalized(best_nu)?);
    Ok(report)
}
