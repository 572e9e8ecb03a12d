//! Hull divergences of `n`-fold vertex sets for `n ≤ 2`.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::channel_div::{
    divergence_with_gradients, dmax_channel, quantum_channel_divergence_lower, regularized_bracket, stabilized_lower,
};
use crate::divergences::{quantum_relative_entropy, ExtReal};
use crate::error::{Error, Result};
use crate::linalg::{outer, trace_product_re, CMat, CVec};
use crate::model::{ClassicalChannel, DensityMatrix, QuantumChannel};
use crate::optim::{minimize_convex_on_simplices, ConvexOptions, SimplexProductDomain, DEFAULT_RESTARTS};

use super::{check_compatible, hull_divergence, ExponentReport, HypothesisSet, PairCertificate};

/// Highest level computed.
pub const MAX_LEVEL: usize = 2;
/// Alternations between hull weights and the input state.
const ALTERNATIONS: usize = 4;

/// [`level_n_hull_bracket_seeded`] with default restarts and seed 0.
pub fn level_n_hull_bracket(s: &HypothesisSet, t: &HypothesisSet, n: usize) -> Result<ExponentReport> {
    level_n_hull_bracket_seeded(s, t, n, DEFAULT_RESTARTS, 0)
}

/// `(1/k) min D(E‖F)` over the hulls of `{Eᵢ^⊗k}` and `{Fⱼ^⊗k}` (or their
/// vertices when a set is not flagged as a hull), for every level `k ≤ n`.
///
/// The report's value and bracket are those of level `n`; lower levels are in
/// `per_level`. Classical levels are exact up to the minimizer's duality gap.
/// Quantum levels are brackets: the lower end is certified for the inputs
/// visited, the upper end is `D_max` at the best hull point found.
pub fn level_n_hull_bracket_seeded(
    s: &HypothesisSet,
    t: &HypothesisSet,
    n: usize,
    restarts: usize,
    seed: u64,
) -> Result<ExponentReport> {
    check_compatible(s, t)?;
    if n == 0 || n > MAX_LEVEL {
        return Err(Error::invalid("level", format!("{n} is outside 1..={MAX_LEVEL}")));
    }
    let mut per_level = BTreeMap::new();
    let mut last = None;
    for k in 1..=n {
        let report = if s.is_classical() {
            classical_level(s, t, k)?
        } else {
            quantum_level(s, t, k, restarts, seed)?
        };
        per_level.insert(k, report.value);
        last = Some(report);
    }
    let mut report = last.unwrap();
    report.per_level = per_level;
    Ok(report)
}

fn per_copy(v: ExtReal, k: usize) -> ExtReal {
    v.finite().map_or(ExtReal::Infinite, |x| ExtReal::Finite(x / k as f64))
}

fn classical_level(s: &HypothesisSet, t: &HypothesisSet, k: usize) -> Result<ExponentReport> {
    let power = |v: Vec<&ClassicalChannel>| -> Vec<ClassicalChannel> { v.into_iter().map(|c| c.tensor_power(k)).collect() };
    let sk = power(s.classical_vertices()?);
    let tk = power(t.classical_vertices()?);
    let sr: Vec<&ClassicalChannel> = sk.iter().collect();
    let tr: Vec<&ClassicalChannel> = tk.iter().collect();
    let mut r = hull_divergence(&sr, s.take_hull(), &tr, t.take_hull())?;
    r.value = per_copy(r.value, k);
    r.lower = per_copy(r.lower, k);
    r.upper = per_copy(r.upper, k);
    r.duality_gap /= k as f64;
    Ok(r)
}

fn quantum_level(s: &HypothesisSet, t: &HypothesisSet, k: usize, restarts: usize, seed: u64) -> Result<ExponentReport> {
    let sv = s.quantum_vertices();
    let tv = t.quantum_vertices();
    if !s.take_hull() && !t.take_hull() {
        return quantum_vertex_level(&sv, &tv, k, restarts, seed);
    }
    let sk: Vec<QuantumChannel> = sv.iter().map(|c| c.tensor_power(k)).collect();
    let tk: Vec<QuantumChannel> = tv.iter().map(|c| c.tensor_power(k)).collect();
    // A non-hull side is enumerated one vertex at a time.
    let groups = |len: usize, hull: bool| -> Vec<Vec<usize>> {
        if hull {
            vec![(0..len).collect()]
        } else {
            (0..len).map(|i| vec![i]).collect()
        }
    };
    let mut best: Option<ExponentReport> = None;
    for sg in groups(sk.len(), s.take_hull()) {
        for tg in groups(tk.len(), t.take_hull()) {
            let se: Vec<QuantumChannel> = sg.iter().map(|&i| sk[i].clone()).collect();
            let te: Vec<QuantumChannel> = tg.iter().map(|&j| tk[j].clone()).collect();
            let mut r = quantum_hull_minimax(&se, &te, restarts, seed)?;
            if let Some(c) = r.pair_certificate.take() {
                r.pair_certificate = Some(PairCertificate {
                    s_weights: spread(&sg, sk.len(), &c.s_weights),
                    t_weights: spread(&tg, tk.len(), &c.t_weights),
                });
            }
            if best.as_ref().map_or(true, |b| r.value < b.value) {
                best = Some(r);
            }
        }
    }
    let mut r = best.unwrap();
    r.value = per_copy(r.value, k);
    r.lower = per_copy(r.lower, k);
    r.upper = per_copy(r.upper, k);
    r.duality_gap /= k as f64;
    Ok(r)
}

fn spread(idx: &[usize], len: usize, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (k, &i) in idx.iter().enumerate() {
        out[i] = w[k];
    }
    out
}

/// Vertex pairs only: the per-level values of the regularized bracket.
fn quantum_vertex_level(
    sv: &[QuantumChannel],
    tv: &[QuantumChannel],
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<ExponentReport> {
    let mut best: Option<(ExtReal, ExtReal, usize, usize)> = None;
    for (i, e) in sv.iter().enumerate() {
        for (j, f) in tv.iter().enumerate() {
            let (value, upper) = if k == 1 {
                let r = quantum_channel_divergence_lower(e, f, restarts, seed)?;
                (r.lower, r.upper)
            } else {
                let r = regularized_bracket(e, f, restarts, seed)?;
                (r.per_n_values[&k], r.upper)
            };
            if best.as_ref().map_or(true, |(v, ..)| value < *v) {
                best = Some((value, upper, i, j));
            }
        }
    }
    let (value, upper, i, j) = best.unwrap();
    Ok(ExponentReport {
        value,
        lower: value,
        upper: upper.max(value),
        pair_certificate: Some(PairCertificate::vertices(i, j, sv.len(), tv.len())),
        duality_gap: (upper.value() - value.value()).max(0.0),
        ..ExponentReport::exact(value)
    })
}

/// Outputs of every channel on `ψ ⊗` reference, as matrices.
fn outputs(channels: &[QuantumChannel], psi: &CVec, ref_dim: usize) -> Vec<CMat> {
    let input = outer(psi, psi);
    channels.iter().map(|c| c.with_reference(ref_dim).apply_raw(&input)).collect()
}

fn mix(weights: &[f64], mats: &[CMat]) -> CMat {
    let mut out = CMat::zeros(mats[0].nrows(), mats[0].ncols());
    for (w, m) in weights.iter().zip(mats) {
        out += m * Complex64::new(*w, 0.0);
    }
    out
}

struct FixedInputMinimum {
    /// Certified lower bound on the minimum over hull weights.
    lower: f64,
    weights: Vec<f64>,
}

/// `min over (a, b) of D(Σ aᵢ ρᵢ ‖ Σ bⱼ σⱼ)` for fixed outputs.
fn minimize_for_input(rhos: &[CMat], sigmas: &[CMat]) -> Result<Option<FixedInputMinimum>> {
    let nt = sigmas.len();
    let bary = mix(&vec![1.0 / nt as f64; nt], sigmas);
    let sigma_bary = DensityMatrix::new(bary)?;
    // Outputs leaking out of every alternative's support force +∞.
    let mut face = Vec::new();
    for (i, r) in rhos.iter().enumerate() {
        if !quantum_relative_entropy(&DensityMatrix::new(r.clone())?, &sigma_bary)?.is_infinite() {
            face.push(i);
        }
    }
    if face.is_empty() {
        return Ok(None);
    }
    let rf: Vec<CMat> = face.iter().map(|&i| rhos[i].clone()).collect();
    let ns = rf.len();
    let objective = |w: &[f64]| -> (f64, Vec<f64>) {
        let (a, b) = w.split_at(ns);
        let rho = mix(a, &rf);
        let sigma = mix(b, sigmas);
        match divergence_with_gradients(&rho, &sigma, true) {
            None => (f64::INFINITY, vec![0.0; w.len()]),
            Some((v, ga, gb)) => {
                let grad = rf
                    .iter()
                    .map(|r| trace_product_re(r, &ga))
                    .chain(sigmas.iter().map(|s| trace_product_re(s, &gb)))
                    .collect();
                (v, grad)
            }
        }
    };
    let domain = SimplexProductDomain::new(vec![ns, nt])?;
    let options = ConvexOptions { max_iter: 500, ..ConvexOptions::default() };
    let report = minimize_convex_on_simplices(&objective, &domain, &options)?;
    let gap = report.certificate.gap().unwrap_or(f64::INFINITY);
    let (a, b) = report.argument.split_at(ns);
    Ok(Some(FixedInputMinimum {
        lower: (report.value - gap).max(0.0),
        weights: [spread(&face, rhos.len(), a), b.to_vec()].concat(),
    }))
}

/// Alternates a convex minimization over hull weights for a fixed input with
/// an input ascent for the fixed mixed channels.
fn quantum_hull_minimax(
    s: &[QuantumChannel],
    t: &[QuantumChannel],
    restarts: usize,
    seed: u64,
) -> Result<ExponentReport> {
    let d = s[0].in_dim();
    let (ns, nt) = (s.len(), t.len());
    let mut weights = [vec![1.0 / ns as f64; ns], vec![1.0 / nt as f64; nt]].concat();
    let mut lower = 0.0f64;
    let mut upper = ExtReal::Infinite;
    let mut value = ExtReal::Infinite;
    let mut best_weights = weights.clone();
    let mut extra: Vec<CVec> = Vec::new();
    for round in 0..ALTERNATIONS {
        let (a, b) = weights.split_at(ns);
        let e = QuantumChannel::mixture(a, s)?;
        let f = QuantumChannel::mixture(b, t)?;
        let (v, psi) = stabilized_lower(&e, &f, restarts, seed.wrapping_add(round as u64), extra.clone());
        let dm = dmax_channel(&e, &f)?;
        upper = upper.min(dm);
        if v < value {
            value = v;
            best_weights = weights.clone();
        }
        extra = vec![psi.clone()];
        match minimize_for_input(&outputs(s, &psi, d), &outputs(t, &psi, d))? {
            None => {
                lower = f64::INFINITY;
                break;
            }
            Some(m) => {
                lower = lower.max(m.lower);
                weights = m.weights;
            }
        }
    }
    let lower = ExtReal::from_f64(lower);
    let value = value.max(lower).min(upper.max(lower));
    let (a, b) = best_weights.split_at(ns);
    Ok(ExponentReport {
        value,
        lower,
        upper: upper.max(value),
        pair_certificate: Some(PairCertificate { s_weights: a.to_vec(), t_weights: b.to_vec() }),
        duality_gap: (upper.value() - lower.value()).max(0.0),
        ..ExponentReport::exact(value)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_div::classical_channel_divergence;
    use crate::model::testutil::{random_channel, random_quantum_channel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_sets_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let s = HypothesisSet::classical((0..2).map(|_| random_channel(2, 2, &mut rng)).collect(), true).unwrap();
        let r = level_n_hull_bracket(&s, &s, 2).unwrap();
        assert!(r.value.value().abs() < 1e-9);
        let q = HypothesisSet::quantum(vec![random_quantum_channel(2, 2, 4, &mut rng)], true).unwrap();
        let r = level_n_hull_bracket_seeded(&q, &q, 1, 2, 0).unwrap();
        assert!(r.value.value().abs() < 1e-9);
        assert!(r.lower.value() <= 1e-9);
    }

    #[test]
    fn classical_singletons_are_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let e = random_channel(2, 2, &mut rng);
        let f = random_channel(2, 2, &mut rng);
        let exact = classical_channel_divergence(&e, &f).unwrap().value();
        let s = HypothesisSet::classical(vec![e], true).unwrap();
        let t = HypothesisSet::classical(vec![f], true).unwrap();
        let r = level_n_hull_bracket(&s, &t, 2).unwrap();
        for v in r.per_level.values() {
            assert!((v.value() - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn quantum_singletons_reproduce_the_regularized_bracket() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let e = random_quantum_channel(2, 2, 4, &mut rng);
        let f = random_quantum_channel(2, 2, 4, &mut rng);
        let b = regularized_bracket(&e, &f, 4, 9).unwrap();
        let s = HypothesisSet::quantum(vec![e], false).unwrap();
        let t = HypothesisSet::quantum(vec![f], false).unwrap();
        let r = level_n_hull_bracket_seeded(&s, &t, 2, 4, 9).unwrap();
        assert_eq!(r.per_level[&1], b.per_n_values[&1]);
        assert_eq!(r.per_level[&2], b.per_n_values[&2]);
        assert_eq!(r.upper.value(), b.upper.value().max(r.value.value()));
    }

    #[test]
    fn quantum_hull_bracket_is_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(74);
        let s = HypothesisSet::quantum((0..2).map(|_| random_quantum_channel(2, 2, 4, &mut rng)).collect(), true).unwrap();
        let t = HypothesisSet::quantum((0..2).map(|_| random_quantum_channel(2, 2, 4, &mut rng)).collect(), true).unwrap();
        let r = level_n_hull_bracket_seeded(&s, &t, 1, 2, 3).unwrap();
        assert!(r.lower <= r.value && r.value <= r.upper, "{:?}", (r.lower, r.value, r.upper));
        // never above the best vertex pair's ascent value
        let pairs = level_n_hull_bracket_seeded(&s.with_hull(false), &t.with_hull(false), 1, 2, 3).unwrap();
        assert!(r.lower.value() <= pairs.value.value() + 1e-6);
    }

    #[test]
    fn classical_level_two_sits_between_data_processing_and_vertex_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(75);
        for _ in 0..10 {
            let sv: Vec<_> = (0..2).map(|_| random_channel(2, 2, &mut rng)).collect();
            let tv: Vec<_> = (0..2).map(|_| random_channel(2, 2, &mut rng)).collect();
            let vertex_min = sv
                .iter()
                .flat_map(|e| tv.iter().map(move |f| classical_channel_divergence(e, f).unwrap().value()))
                .fold(f64::INFINITY, f64::min);
            let s = HypothesisSet::classical(sv, true).unwrap();
            let t = HypothesisSet::classical(tv, true).unwrap();
            let r = level_n_hull_bracket(&s, &t, 2).unwrap();
            let (l1, l2) = (r.per_level[&1].value(), r.per_level[&2].value());
            // discarding one output copy cannot increase the divergence
            assert!(2.0 * l2 >= l1 - 1e-6, "{l1} {l2}");
            assert!(l2 <= vertex_min + 1e-9);
            assert!(l1 <= vertex_min + 1e-9);
        }
    }

    #[test]
    fn rejects_levels_outside_range() {
        let s = HypothesisSet::classical(vec![ClassicalChannel::identity(2)], false).unwrap();
        assert!(level_n_hull_bracket(&s, &s, 0).is_err());
        assert!(level_n_hull_bracket(&s, &s, 3).is_err());
    }
}
