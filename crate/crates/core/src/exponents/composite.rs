//! Exact composite hypothesis test for finite sets of distributions.

use crate::divergences::{check_eps, ExtReal};
use crate::error::{Error, Result};
use crate::model::{ProbVector, TestOperator};
use crate::optim::{solve_lp, LinearProgram};

/// Largest alphabet accepted by [`composite_test_exponent_exact`].
pub const MAX_ALPHABET: usize = 4096;
/// Optimal worst-case type-II errors at or below this are reported as zero.
const BETA_ZERO: f64 = 1e-13;

/// The LP behind [`composite_test_exponent_exact`].
///
/// Variables are the test `M(0..d)` followed by the worst type-II error `t`:
/// minimize `t` subject to `Σ σ(x) M(x) ≤ t` for every `σ` in `t_n`,
/// `Σ ρ(x) M(x) ≥ 1 − ε` for every `ρ` in `s_n`, and `0 ≤ M ≤ 1`.
pub fn composite_test_lp(s_n: &[ProbVector], t_n: &[ProbVector], eps: f64) -> Result<LinearProgram> {
    let d = s_n
        .first()
        .ok_or_else(|| Error::invalid("null hypotheses", "empty set"))?
        .len();
    if d > MAX_ALPHABET {
        return Err(Error::SizeLimit { what: "test alphabet", size: d, limit: MAX_ALPHABET });
    }
    let s: Vec<&[f64]> = s_n.iter().map(ProbVector::as_slice).collect();
    let t: Vec<&[f64]> = t_n.iter().map(ProbVector::as_slice).collect();
    build_lp(&s, &t, eps)
}

fn build_lp(s_n: &[&[f64]], t_n: &[&[f64]], eps: f64) -> Result<LinearProgram> {
    check_eps(eps)?;
    let d = s_n
        .first()
        .ok_or_else(|| Error::invalid("null hypotheses", "empty set"))?
        .len();
    if t_n.is_empty() {
        return Err(Error::invalid("alternative hypotheses", "empty set"));
    }
    if let Some(bad) = s_n.iter().chain(t_n).find(|p| p.len() != d) {
        return Err(Error::dims(d, bad.len()));
    }
    let mut objective = vec![0.0; d + 1];
    objective[d] = 1.0;
    let mut lp = LinearProgram::minimize(objective);
    for sigma in t_n {
        lp.le(sigma.iter().copied().chain([-1.0]).collect(), 0.0);
    }
    for rho in s_n {
        lp.ge(rho.iter().copied().chain([0.0]).collect(), 1.0 - eps);
    }
    for x in 0..d {
        lp.upper_bound(x, 1.0);
    }
    Ok(lp)
}

/// Optimal composite test on an arbitrary finite alphabet.
pub(crate) struct CompositeTest {
    /// Worst-case type-II error, with values below `1e-13` set to zero.
    pub beta: f64,
    pub test: Vec<f64>,
}

/// Solves the composite test LP without the alphabet limit. Inputs need not be
/// exactly normalized.
pub(crate) fn solve_composite(s_n: &[&[f64]], t_n: &[&[f64]], eps: f64) -> Result<CompositeTest> {
    let lp = build_lp(s_n, t_n, eps)?;
    let d = lp.num_vars() - 1;
    let report = solve_lp(&lp)?;
    let test: Vec<f64> = report.argument[..d].iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let beta = if report.value <= BETA_ZERO { 0.0 } else { report.value };
    Ok(CompositeTest { beta, test })
}

/// `−log₂` of the smallest worst-case type-II error over tests whose type-I
/// error is at most `ε` for every null hypothesis, and the optimal test.
pub fn composite_test_exponent_exact(
    s_n: &[ProbVector],
    t_n: &[ProbVector],
    eps: f64,
) -> Result<(ExtReal, TestOperator)> {
    composite_test_lp(s_n, t_n, eps)?;
    let s: Vec<&[f64]> = s_n.iter().map(ProbVector::as_slice).collect();
    let t: Vec<&[f64]> = t_n.iter().map(ProbVector::as_slice).collect();
    let r = solve_composite(&s, &t, eps)?;
    Ok((ExtReal::neg_log2(r.beta), TestOperator::Classical(r.test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::dh_classical;
    use crate::model::testutil::random_prob;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn singletons_match_neyman_pearson() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..100 {
            let d = rng.random_range(2..=6);
            let p = random_prob(d, &mut rng);
            let q = random_prob(d, &mut rng);
            for eps in [0.0, 0.1, 0.5] {
                let (lp, _) = composite_test_exponent_exact(&[p.clone()], &[q.clone()], eps).unwrap();
                let (np, _) = dh_classical(&p, &q, eps).unwrap();
                assert!((lp.value() - np.value()).abs() < 1e-9, "{lp} vs {np}");
            }
        }
    }

    #[test]
    fn identical_sets_give_log_of_acceptance() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let s: Vec<ProbVector> = (0..3).map(|_| random_prob(4, &mut rng)).collect();
        for eps in [0.0, 0.2, 0.7] {
            let (v, _) = composite_test_exponent_exact(&s, &s, eps).unwrap();
            assert!((v.value() + (1.0 - eps).log2()).abs() < 1e-9);
        }
        let (v, m) = composite_test_exponent_exact(&s, &s, 1.0).unwrap();
        assert!(v.is_infinite());
        assert_eq!(m, TestOperator::Classical(vec![0.0; 4]));
    }

    #[test]
    fn one_test_for_all_pairs_is_never_better_than_pairwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..50 {
            let d = rng.random_range(2..=5);
            let s: Vec<ProbVector> = (0..rng.random_range(1..=3)).map(|_| random_prob(d, &mut rng)).collect();
            let t: Vec<ProbVector> = (0..rng.random_range(1..=3)).map(|_| random_prob(d, &mut rng)).collect();
            let eps = rng.random_range(0.0..0.5);
            let (joint, m) = composite_test_exponent_exact(&s, &t, eps).unwrap();
            let pairwise = s
                .iter()
                .flat_map(|p| t.iter().map(move |q| dh_classical(p, q, eps).unwrap().0.value()))
                .fold(f64::INFINITY, f64::min);
            assert!(joint.value() <= pairwise + 1e-9);
            // the returned test is feasible with the reported error
            let TestOperator::Classical(m) = m else { panic!() };
            for p in &s {
                let acc: f64 = p.iter().zip(&m).map(|(a, b)| a * b).sum();
                assert!(acc >= 1.0 - eps - 1e-9);
            }
            let worst = t.iter().map(|q| q.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>()).fold(0.0, f64::max);
            assert!((-worst.log2() - joint.value()).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_large_alphabets_and_mismatches() {
        let big = ProbVector::uniform(MAX_ALPHABET + 1);
        assert!(matches!(
            composite_test_exponent_exact(&[big.clone()], &[big], 0.1),
            Err(Error::SizeLimit { .. })
        ));
        let a = ProbVector::uniform(2);
        let b = ProbVector::uniform(3);
        assert!(composite_test_exponent_exact(&[a], &[b], 0.1).is_err());
    }
}
