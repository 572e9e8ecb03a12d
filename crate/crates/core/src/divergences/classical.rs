
use crate::error::{Error, Result};
use crate::model::{ProbVector, TestOperator};

use super::{check_eps, ExtReal, NpTest, CLASSICAL_ZERO};

/// `Σ p(x) log₂(p(x)/q(x))`, infinite when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<ExtReal> {
    if p.len() != q.len() {
        return Err(Error::dims(p.len(), q.len()));
    }
    let mut acc = 0.0;
    for (a, b) in p.iter().zip(q.iter()) {
        if a <= 0.0 {
            continue;
        }
        if a > CLASSICAL_ZERO && b <= CLASSICAL_ZERO {
            return Ok(ExtReal::Infinite);
        }
        if b > 0.0 {
            acc += a * (a / b).log2();
        }
    }
    Ok(ExtReal::Finite(acc))
}

/// Order of symbols for the likelihood-ratio test: decreasing `p/q`, with
/// `q = 0 < p` first, ties by ascending index. Symbols with `p = 0` are never
/// useful and go last.
pub(crate) fn likelihood_order(p: &[f64], q: &[f64]) -> Vec<usize> {
    // Ratios as keys keep the comparison a total order; cross products do not.
    let ratio: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| if pi <= 0.0 { f64::NEG_INFINITY } else if qi <= 0.0 { f64::INFINITY } else { pi / qi })
        .collect();
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| ratio[b].total_cmp(&ratio[a]).then(a.cmp(&b)));
    idx
}

/// Exact Neyman-Pearson test: minimize `β = Σ q M` subject to `Σ p M ≥ 1 − ε`.
///
/// Returns `−log₂ β` and the optimal randomized test.
pub fn dh_classical(p: &ProbVector, q: &ProbVector, eps: f64) -> Result<(ExtReal, NpTest)> {
    if p.len() != q.len() {
        return Err(Error::dims(p.len(), q.len()));
    }
    check_eps(eps)?;
    let (ps, qs) = (p.as_slice(), q.as_slice());
    let need = 1.0 - eps;
    let mut m = vec![0.0; p.len()];
    let mut accepted = 0.0;
    let mut threshold = f64::INFINITY;
    let mut fraction = 1.0;
    if need > 0.0 {
        for x in likelihood_order(ps, qs) {
            if accepted >= need - 1e-15 || ps[x] <= 0.0 {
                break;
            }
            threshold = if qs[x] > 0.0 { ps[x] / qs[x] } else { f64::INFINITY };
            let take = ((need - accepted) / ps[x]).min(1.0);
            m[x] = take;
            fraction = take;
            accepted += take * ps[x];
        }
    }
    let beta: f64 = m.iter().zip(qs).map(|(a, b)| a * b).sum();
    let alpha = (1.0 - m.iter().zip(ps).map(|(a, b)| a * b).sum::<f64>()).max(0.0);
    Ok((
        ExtReal::neg_log2(beta),
        NpTest {
            threshold,
            inner_fraction: fraction,
            test: TestOperator::Classical(m),
            achieved_alpha: alpha,
            achieved_beta: beta,
        },
    ))
}
