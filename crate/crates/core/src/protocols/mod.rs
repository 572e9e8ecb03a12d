//! Strategy evaluation for composite classical channel discrimination.
//!
//! Parallel and adaptive strategies are evaluated exactly by dynamic
//! programming over output histories. Under i.i.d. hypotheses a history's
//! probability depends only on how often each (input, output) pair occurred,
//! so histories are grouped by those counts; this keeps horizons of a few
//! dozen uses tractable where the raw history tree would not be.

mod adversary;
mod monte_carlo;
mod strategies;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponents::HypothesisSet;
use crate::model::{Channel, ClassicalChannel};
use crate::optim::{solve_lp, LinearProgram};

pub use adversary::{adversary_best_response, universal_adversarial_test, AdversaryPolicy, MAX_HISTORIES};
pub use monte_carlo::{monte_carlo_adaptive, wilson_interval, MonteCarloReport, DEFAULT_SAMPLES};
pub use strategies::{
    evaluate_adaptive_strategy, evaluate_parallel_strategy, AdaptivePolicy, FinalTest, MAX_CLASSES,
};

/// Type-I error allowed by default in simulations.
pub const DEFAULT_EPS: f64 = 0.05;
/// Smallest horizon used in slope fits by default.
pub const DEFAULT_N_MIN: usize = 8;

/// How the channels used in successive rounds may relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FamilyKind {
    /// The same channel from the set in every round.
    Iid,
    /// Any channel from the set in every round.
    ArbitrarilyVarying,
    /// Any channels from the set that are pairwise within `epsilon` in the
    /// largest row total-variation distance.
    SlightlyVarying { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisFamily {
    base: HypothesisSet,
    kind: FamilyKind,
}

impl HypothesisFamily {
    pub fn new(base: HypothesisSet, kind: FamilyKind) -> Result<Self> {
        if let FamilyKind::SlightlyVarying { epsilon } = kind {
            if !(0.0..=1.0).contains(&epsilon) {
                return Err(Error::invalid("slightly varying radius", format!("{epsilon} is outside [0, 1]")));
            }
            if !base.is_classical() {
                return Err(Error::KindMismatch("slightly varying families need classical channels".into()));
            }
        }
        Ok(HypothesisFamily { base, kind })
    }

    pub fn iid(base: HypothesisSet) -> Self {
        HypothesisFamily { base, kind: FamilyKind::Iid }
    }

    pub fn arbitrarily_varying(base: HypothesisSet) -> Self {
        HypothesisFamily { base, kind: FamilyKind::ArbitrarilyVarying }
    }

    pub fn base(&self) -> &HypothesisSet {
        &self.base
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }
}

/// Worst-case errors of a test against two families.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorPair {
    pub alpha: f64,
    pub beta: f64,
    /// Which channel or adversary attains each worst case.
    pub worst_case_witness: String,
}

impl ErrorPair {
    /// `−(1/n) log₂ β`.
    pub fn exponent(&self, n: usize) -> crate::divergences::ExtReal {
        match crate::divergences::ExtReal::neg_log2(self.beta) {
            crate::divergences::ExtReal::Finite(v) => crate::divergences::ExtReal::Finite(v / n as f64),
            inf => inf,
        }
    }
}

const MEMBER_TOL: f64 = 1e-12;

fn channels_equal(a: &ClassicalChannel, b: &ClassicalChannel) -> bool {
    a.rows()
        .iter()
        .zip(b.rows())
        .all(|(p, q)| p.iter().zip(q.iter()).all(|(x, y)| (x - y).abs() <= MEMBER_TOL))
}

/// Whether `ch` is a vertex of the set, or lies in its hull when the set is
/// flagged as one.
fn in_base(base: &HypothesisSet, ch: &ClassicalChannel) -> Result<bool> {
    let vertices = base.classical_vertices()?;
    if vertices.iter().any(|v| channels_equal(v, ch)) {
        return Ok(true);
    }
    if !base.take_hull() {
        return Ok(false);
    }
    // Feasibility of Σ aᵢ Vᵢ = ch entrywise with a in the simplex.
    let k = vertices.len();
    let mut lp = LinearProgram::minimize(vec![0.0; k]);
    lp.eq(vec![1.0; k], 1.0);
    for x in 0..ch.input_size() {
        for y in 0..ch.output_size() {
            lp.eq(vertices.iter().map(|v| v.prob(x, y)).collect(), ch.prob(x, y));
        }
    }
    match solve_lp(&lp) {
        Ok(_) => Ok(true),
        Err(Error::Infeasible) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Whether a sequence of channels can occur in one run under the family.
pub fn family_member_check(fam: &HypothesisFamily, seq: &[Channel]) -> Result<bool> {
    let base = fam.base();
    for ch in seq {
        if ch.in_dim() != base.in_dim() {
            return Err(Error::dims(base.in_dim(), ch.in_dim()));
        }
        if ch.out_dim() != base.out_dim() {
            return Err(Error::dims(base.out_dim(), ch.out_dim()));
        }
    }
    let classical: Vec<&ClassicalChannel> = seq
        .iter()
        .map(|c| c.as_classical().ok_or_else(|| Error::KindMismatch("membership checks need classical channels".into())))
        .collect::<Result<_>>()?;
    for ch in &classical {
        if !in_base(base, ch)? {
            return Ok(false);
        }
    }
    Ok(match fam.kind() {
        FamilyKind::Iid => classical.windows(2).all(|w| channels_equal(w[0], w[1])),
        FamilyKind::ArbitrarilyVarying => true,
        FamilyKind::SlightlyVarying { epsilon } => {
            for (i, a) in classical.iter().enumerate() {
                for b in &classical[i + 1..] {
                    if a.row_distance(b)? > epsilon + MEMBER_TOL {
                        return Ok(false);
                    }
                }
            }
            true
        }
    })
}

/// Least-squares slope of `−log₂ β` against `n` over `n_min..=n_max`, with the
/// coefficient of determination of the fit.
pub fn estimate_exponent(
    values: &std::collections::BTreeMap<usize, f64>,
    n_min: usize,
    n_max: usize,
) -> Result<(f64, f64)> {
    let points: Vec<(f64, f64)> = values
        .range(n_min..=n_max)
        .map(|(&n, &beta)| {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(Error::invalid("beta", format!("{beta} at n = {n} is outside (0, 1]")));
            }
            Ok((n as f64, -beta.log2()))
        })
        .collect::<Result<_>>()?;
    if points.len() < 3 {
        return Err(Error::Precondition(format!(
            "slope fit needs at least 3 points in [{n_min}, {n_max}], got {}",
            points.len()
        )));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    // A perfectly flat series is fit exactly.
    let r_squared = if syy <= 1e-24 { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    Ok((slope, r_squared))
}

/// The two-set example where adaptivity doubles the parallel exponent.
///
/// Inputs are bits and outputs are two bits, indexed `2·b₁ + b₂`. The second
/// output bit reveals which member of each set is in use; `E₁, F₁` are best
/// told apart with input 0 and `E₂, F₂` with input 1. The canonical policy
/// feeds input 0 first and thereafter the second output bit of the first use,
/// with the optimal composite test at `ε` = [`DEFAULT_EPS`].
pub fn example12(n: usize) -> (HypothesisSet, HypothesisSet, AdaptivePolicy) {
    let [e1, e2, f1, f2] = example12_channels();
    let s = HypothesisSet::classical(vec![e1, e2], false).unwrap();
    let t = HypothesisSet::classical(vec![f1, f2], false).unwrap();
    (s, t, AdaptivePolicy::second_bit_feedback(n, DEFAULT_EPS))
}

/// `[E₁, E₂, F₁, F₂]` of [`example12`].
pub fn example12_channels() -> [ClassicalChannel; 4] {
    let ch = |rows: [[f64; 4]; 2]| ClassicalChannel::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap();
    [
        ch([[0.5, 0.0, 0.5, 0.0], [0.5, 0.0, 0.5, 0.0]]),
        ch([[0.0, 0.5, 0.0, 0.5], [0.0, 0.5, 0.0, 0.5]]),
        ch([[0.75, 0.0, 0.25, 0.0], [0.5, 0.0, 0.5, 0.0]]),
        ch([[0.0, 0.5, 0.0, 0.5], [0.0, 0.75, 0.0, 0.25]]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_div::classical_channel_divergence;
    use crate::divergences::kl_divergence;
    use crate::model::testutil::random_channel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    #[test]
    fn example_channel_values() {
        let [e1, e2, f1, f2] = example12_channels();
        let d = classical_channel_divergence(&e1, &f1).unwrap().value();
        assert!((d - (4.0f64 / 3.0).log2() / 2.0).abs() < 1e-15);
        assert_eq!(kl_divergence(e2.row(0), f2.row(0)).unwrap().value(), 0.0);
        assert_eq!(kl_divergence(e1.row(1), f1.row(1)).unwrap().value(), 0.0);
        assert!(classical_channel_divergence(&e1, &f2).unwrap().is_infinite());
    }

    #[test]
    fn membership_by_kind() {
        let [e1, e2, ..] = example12_channels();
        let base = HypothesisSet::classical(vec![e1.clone(), e2.clone()], false).unwrap();
        let c = |ch: &ClassicalChannel| Channel::Classical(ch.clone());
        let iid = HypothesisFamily::iid(base.clone());
        let av = HypothesisFamily::arbitrarily_varying(base.clone());
        assert!(family_member_check(&iid, &[c(&e1), c(&e1), c(&e1)]).unwrap());
        assert!(!family_member_check(&iid, &[c(&e1), c(&e2)]).unwrap());
        assert!(family_member_check(&av, &[c(&e1), c(&e2)]).unwrap());
        let mid = ClassicalChannel::mixture(&[0.5, 0.5], &[e1.clone(), e2.clone()]).unwrap();
        assert!(!family_member_check(&av, &[c(&mid)]).unwrap());
        let hull = HypothesisFamily::arbitrarily_varying(base.with_hull(true));
        assert!(family_member_check(&hull, &[c(&mid), c(&e1)]).unwrap());
        let bad = ClassicalChannel::identity(3);
        assert!(family_member_check(&av, &[c(&bad)]).is_err());
    }

    #[test]
    fn slightly_varying_matches_pairwise_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for _ in 0..50 {
            let a = random_channel(2, 3, &mut rng);
            let b = random_channel(2, 3, &mut rng);
            let base = HypothesisSet::classical(vec![a.clone(), b.clone()], true).unwrap();
            let fam = HypothesisFamily::new(base, FamilyKind::SlightlyVarying { epsilon: 0.1 }).unwrap();
            let seq: Vec<ClassicalChannel> = (0..3)
                .map(|_| {
                    let w = rng.random_range(0.0..1.0);
                    ClassicalChannel::mixture(&[w, 1.0 - w], &[a.clone(), b.clone()]).unwrap()
                })
                .collect();
            let mut expected = true;
            for i in 0..3 {
                for j in i + 1..3 {
                    expected &= seq[i].row_distance(&seq[j]).unwrap() <= 0.1 + 1e-12;
                }
            }
            let wrapped: Vec<Channel> = seq.into_iter().map(Channel::Classical).collect();
            assert_eq!(family_member_check(&fam, &wrapped).unwrap(), expected);
        }
        let base = HypothesisSet::classical(vec![ClassicalChannel::identity(2)], false).unwrap();
        assert!(HypothesisFamily::new(base, FamilyKind::SlightlyVarying { epsilon: 1.5 }).is_err());
    }

    #[test]
    fn slope_fits() {
        let c = 0.8;
        let exact: BTreeMap<usize, f64> = (1..=20).map(|n| (n, 2f64.powf(-c * n as f64))).collect();
        let (slope, r2) = estimate_exponent(&exact, 8, 16).unwrap();
        assert!((slope - c).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        // β = n 2^{-cn}: the fitted slope approaches c as the window moves out
        let poly: BTreeMap<usize, f64> = (1..=400).map(|n| (n, (n as f64) * 2f64.powf(-c * n as f64))).collect();
        let near = estimate_exponent(&poly, 8, 16).unwrap().0;
        let far = estimate_exponent(&poly, 200, 400).unwrap().0;
        assert!((far - c).abs() < (near - c).abs());
        assert!((far - c).abs() < 0.01);
        let flat: BTreeMap<usize, f64> = (1..=20).map(|n| (n, 0.5)).collect();
        assert_eq!(estimate_exponent(&flat, 8, 16).unwrap().0, 0.0);
        assert!(estimate_exponent(&flat, 8, 9).is_err());
        let zero: BTreeMap<usize, f64> = (1..=20).map(|n| (n, 0.0)).collect();
        assert!(estimate_exponent(&zero, 8, 16).is_err());
    }
}
