//! Parallel exponent of two finite sets of classical channels.
//!
//! With a diagonal input `Σ q_x |xx⟩⟨xx|` the divergence of a pair is the
//! average `Σ q_x D(Eᵢ(x) ‖ Fⱼ(x))`, and the exponent is the best `q` against
//! the worst pair: an LP in `(q, t)`.

use crate::divergences::{kl_divergence, ExtReal};
use crate::error::{Error, Result};
use crate::model::{ClassicalChannel, ProbVector};
use crate::optim::{solve_lp, LinearProgram};

use super::{check_compatible, ExponentReport, HypothesisSet, PairCertificate};

/// Replacement value for infinite divergences in the LP.
pub const DEFAULT_CAP: f64 = 1e6;
/// Relative change of the optimum under a tenfold cap that counts as cap-dependent.
const CAP_STABILITY: f64 = 1e-6;
const TIGHT: f64 = 1e-9;
const POSITIVE_WEIGHT: f64 = 1e-12;

/// Divergence table `d[x][pair]`, pairs ordered `(i, j)` row-major.
fn divergence_table(s: &[&ClassicalChannel], t: &[&ClassicalChannel]) -> Result<Vec<Vec<ExtReal>>> {
    let nx = s[0].input_size();
    (0..nx)
        .map(|x| {
            let mut row = Vec::with_capacity(s.len() * t.len());
            for e in s {
                for f in t {
                    row.push(kl_divergence(e.row(x), f.row(x))?);
                }
            }
            Ok(row)
        })
        .collect()
}

struct LpOptimum {
    value: f64,
    weights: Vec<f64>,
}

/// `max t` s.t. `t ≤ Σ_x q_x d[x][k]` for the listed pairs `k`, `q` in the simplex.
fn solve_weights(table: &[Vec<ExtReal>], pairs: &[usize], cap: f64) -> Result<LpOptimum> {
    let nx = table.len();
    let mut objective = vec![0.0; nx + 1];
    objective[nx] = 1.0;
    let mut lp = LinearProgram::maximize(objective);
    for &k in pairs {
        let row: Vec<f64> = table.iter().map(|r| -r[k].capped(cap)).chain([1.0]).collect();
        lp.le(row, 0.0);
    }
    lp.eq([vec![1.0; nx], vec![0.0]].concat(), 1.0);
    let report = solve_lp(&lp)?;
    Ok(LpOptimum { value: report.value, weights: report.argument[..nx].to_vec() })
}

fn pair_value(table: &[Vec<ExtReal>], q: &[f64], k: usize, cap: f64) -> f64 {
    table.iter().zip(q).map(|(r, qx)| qx * r[k].capped(cap)).sum()
}

/// [`parallel_exponent_with_cap`] with [`DEFAULT_CAP`].
pub fn parallel_exponent_finite_classical(s: &HypothesisSet, t: &HypothesisSet) -> Result<ExponentReport> {
    parallel_exponent_with_cap(s, t, DEFAULT_CAP)
}

/// Parallel exponent of finite classical sets, with infinite divergences
/// replaced by `cap`.
///
/// The LP is re-solved with `10·cap`; `capped` is set when the optimum moves by
/// more than a relative `1e-6`, or when a tight pair uses a capped entry on an
/// input with positive weight. The capped optimum is always a lower bound; the
/// upper end of the bracket drops every pair with an infinite entry, and is
/// infinite when no pair is left.
pub fn parallel_exponent_with_cap(s: &HypothesisSet, t: &HypothesisSet, cap: f64) -> Result<ExponentReport> {
    check_compatible(s, t)?;
    if s.take_hull() || t.take_hull() {
        return Err(Error::Precondition("parallel LP needs finite sets, not hulls".into()));
    }
    if !(cap.is_finite() && cap > 0.0) {
        return Err(Error::invalid("cap", format!("{cap} is not a positive finite number")));
    }
    let sv = s.classical_vertices()?;
    let tv = t.classical_vertices()?;
    let table = divergence_table(&sv, &tv)?;
    let all: Vec<usize> = (0..sv.len() * tv.len()).collect();

    let opt = solve_weights(&table, &all, cap)?;
    let wider = solve_weights(&table, &all, 10.0 * cap)?;
    let moved = (wider.value - opt.value).abs() > CAP_STABILITY * opt.value.abs().max(1.0);

    let active: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&k| pair_value(&table, &opt.weights, k, cap) <= opt.value + TIGHT * opt.value.abs().max(1.0))
        .collect();
    let uses_cap = active.iter().any(|&k| {
        table
            .iter()
            .zip(&opt.weights)
            .any(|(r, &qx)| qx > POSITIVE_WEIGHT && r[k].is_infinite())
    });

    let finite_pairs: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&k| table.iter().all(|r| !r[k].is_infinite()))
        .collect();
    let upper = if finite_pairs.len() == all.len() {
        ExtReal::Finite(opt.value)
    } else if finite_pairs.is_empty() {
        ExtReal::Infinite
    } else {
        ExtReal::Finite(solve_weights(&table, &finite_pairs, cap)?.value.max(opt.value))
    };

    // Among tight pairs, point at the one with the smallest total divergence.
    let nt = tv.len();
    let witness = active
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let total = |k: usize| table.iter().map(|r| r[k].capped(cap)).sum::<f64>();
            total(a).total_cmp(&total(b)).then(a.cmp(&b))
        })
        .unwrap_or(0);
    let value = ExtReal::Finite(opt.value.max(0.0));
    Ok(ExponentReport {
        value,
        lower: value,
        upper: upper.max(value),
        input_certificate: Some(ProbVector::normalized(opt.weights.iter().map(|w| w.max(0.0)).collect())?),
        pair_certificate: Some(PairCertificate::vertices(witness / nt, witness % nt, sv.len(), nt)),
        active_pairs: active.iter().map(|&k| (k / nt, k % nt)).collect(),
        duality_gap: 0.0,
        capped: moved || uses_cap,
        ..ExponentReport::exact(value)
    })
}
