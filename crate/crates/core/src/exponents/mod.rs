//! Stein-exponent solvers for composite channel hypotheses.
//!
//! - [`worst_case_iid_exponent`]: the hardest single pair, an upper bound for
//!   adaptive strategies.
//! - [`parallel_exponent_finite_classical`]: the LP for finite classical sets.
//! - [`convex_classical_exponent`]: the minimax for convex classical sets, with a
//!   dual certificate.
//! - [`composite_test_exponent_exact`]: the exact finite-n test LP.
//! - [`level_n_hull_bracket`]: per-level hull divergences for n ≤ 2.

pub(crate) mod composite;
mod hull;
mod levels;
mod parallel;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::channel_div::regularized_bracket;
use crate::divergences::ExtReal;
use crate::error::{Error, Result};
use crate::model::{Channel, ClassicalChannel, ProbVector, QuantumChannel};

pub use composite::{composite_test_exponent_exact, composite_test_lp, MAX_ALPHABET};
pub use hull::{convex_classical_exponent, hull_divergence, MINIMAX_GAP_TOL};
pub use levels::{level_n_hull_bracket, level_n_hull_bracket_seeded, MAX_LEVEL};
pub use parallel::{parallel_exponent_finite_classical, parallel_exponent_with_cap, DEFAULT_CAP};

/// A finite set of channels, optionally standing for its convex hull.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    vertices: Vec<Channel>,
    take_hull: bool,
}

impl HypothesisSet {
    pub fn new(vertices: Vec<Channel>, take_hull: bool) -> Result<Self> {
        let first = vertices
            .first()
            .ok_or_else(|| Error::invalid("hypothesis set", "no vertices"))?;
        for v in &vertices {
            if v.is_classical() != first.is_classical() {
                return Err(Error::KindMismatch("hypothesis set mixes classical and quantum channels".into()));
            }
            if v.in_dim() != first.in_dim() {
                return Err(Error::dims(first.in_dim(), v.in_dim()));
            }
            if v.out_dim() != first.out_dim() {
                return Err(Error::dims(first.out_dim(), v.out_dim()));
            }
        }
        Ok(HypothesisSet { vertices, take_hull })
    }

    pub fn classical(vertices: Vec<ClassicalChannel>, take_hull: bool) -> Result<Self> {
        Self::new(vertices.into_iter().map(Channel::Classical).collect(), take_hull)
    }

    pub fn quantum(vertices: Vec<QuantumChannel>, take_hull: bool) -> Result<Self> {
        Self::new(vertices.into_iter().map(Channel::Quantum).collect(), take_hull)
    }

    pub fn vertices(&self) -> &[Channel] {
        &self.vertices
    }

    pub fn take_hull(&self) -> bool {
        self.take_hull
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_classical(&self) -> bool {
        self.vertices[0].is_classical()
    }

    pub fn in_dim(&self) -> usize {
        self.vertices[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.vertices[0].out_dim()
    }

    pub fn classical_vertices(&self) -> Result<Vec<&ClassicalChannel>> {
        self.vertices
            .iter()
            .map(|v| {
                v.as_classical()
                    .ok_or_else(|| Error::KindMismatch("expected classical channels".into()))
            })
            .collect()
    }

    pub fn quantum_vertices(&self) -> Vec<QuantumChannel> {
        self.vertices.iter().map(Channel::to_quantum).collect()
    }

    pub fn with_hull(&self, take_hull: bool) -> Self {
        HypothesisSet { vertices: self.vertices.clone(), take_hull }
    }
}

pub(crate) fn check_compatible(s: &HypothesisSet, t: &HypothesisSet) -> Result<()> {
    if s.is_classical() != t.is_classical() {
        return Err(Error::KindMismatch("hypotheses mix classical and quantum channels".into()));
    }
    if s.in_dim() != t.in_dim() {
        return Err(Error::dims(s.in_dim(), t.in_dim()));
    }
    if s.out_dim() != t.out_dim() {
        return Err(Error::dims(s.out_dim(), t.out_dim()));
    }
    Ok(())
}

/// Hull weights of the minimizing channel pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCertificate {
    pub s_weights: Vec<f64>,
    pub t_weights: Vec<f64>,
}

impl PairCertificate {
    pub fn vertices(i: usize, j: usize, ns: usize, nt: usize) -> Self {
        let one_hot = |k: usize, n: usize| (0..n).map(|m| if m == k { 1.0 } else { 0.0 }).collect();
        PairCertificate { s_weights: one_hot(i, ns), t_weights: one_hot(j, nt) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentReport {
    pub value: ExtReal,
    pub lower: ExtReal,
    pub upper: ExtReal,
    /// Optimal input distribution: diagonal weights for the parallel LP, the
    /// dual input distribution for the convex minimax.
    pub input_certificate: Option<ProbVector>,
    pub pair_certificate: Option<PairCertificate>,
    /// Vertex pairs whose constraint is tight at the optimum.
    pub active_pairs: Vec<(usize, usize)>,
    pub duality_gap: f64,
    /// Whether an infinity cap influenced the optimum.
    pub capped: bool,
    /// Per-copy values by level, where levels were computed.
    pub per_level: BTreeMap<usize, ExtReal>,
}

impl ExponentReport {
    pub fn exact(value: ExtReal) -> Self {
        ExponentReport {
            value,
            lower: value,
            upper: value,
            input_certificate: None,
            pair_certificate: None,
            active_pairs: Vec::new(),
            duality_gap: 0.0,
            capped: false,
            per_level: BTreeMap::new(),
        }
    }
}

/// `min_{E∈S, F∈T} D_reg(E‖F)`: classical exactly (over hulls when flagged),
/// quantum as a bracket from the two-level regularization.
pub fn worst_case_iid_exponent(s: &HypothesisSet, t: &HypothesisSet) -> Result<ExponentReport> {
    worst_case_iid_exponent_seeded(s, t, crate::optim::DEFAULT_RESTARTS, 0)
}

pub fn worst_case_iid_exponent_seeded(
    s: &HypothesisSet,
    t: &HypothesisSet,
    restarts: usize,
    seed: u64,
) -> Result<ExponentReport> {
    check_compatible(s, t)?;
    if s.is_classical() {
        let sv = s.classical_vertices()?;
        let tv = t.classical_vertices()?;
        return hull_divergence(&sv, s.take_hull(), &tv, t.take_hull());
    }
    if s.take_hull() || t.take_hull() {
        return Err(Error::Precondition(
            "quantum hulls are only supported by the level-n bracket".into(),
        ));
    }
    let (sv, tv) = (s.quantum_vertices(), t.quantum_vertices());
    let mut best: Option<(ExtReal, ExtReal, usize, usize)> = None;
    let mut upper = ExtReal::Infinite;
    for (i, e) in sv.iter().enumerate() {
        for (j, f) in tv.iter().enumerate() {
            let b = regularized_bracket(e, f, restarts, seed)?;
            upper = upper.min(b.upper);
            if best.as_ref().map_or(true, |(l, ..)| b.lower < *l) {
                best = Some((b.lower, b.upper, i, j));
            }
        }
    }
    let (lower, _, i, j) = best.unwrap();
    Ok(ExponentReport {
        lower,
        upper,
        pair_certificate: Some(PairCertificate::vertices(i, j, sv.len(), tv.len())),
        duality_gap: (upper.value() - lower.value()).max(0.0),
        ..ExponentReport::exact(lower)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_div::classical_channel_divergence;
    use crate::channel_div::tests::example_channels;
    use crate::model::testutil::random_channel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example_sets(hull: bool) -> (HypothesisSet, HypothesisSet) {
        let [e1, e2, f1, f2] = example_channels();
        (
            HypothesisSet::classical(vec![e1, e2], hull).unwrap(),
            HypothesisSet::classical(vec![f1, f2], hull).unwrap(),
        )
    }

    #[test]
    fn example_worst_case_pair() {
        let (s, t) = example_sets(false);
        let r = worst_case_iid_exponent(&s, &t).unwrap();
        assert!((r.value.value() - (4.0f64 / 3.0).log2() / 2.0).abs() < 1e-12);
        let p = parallel_exponent_finite_classical(&s, &t).unwrap();
        assert!((r.value.value() / p.value.value() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn example_hulls_close_the_minimax_gap() {
        let (s, t) = example_sets(true);
        let r = convex_classical_exponent(&s, &t).unwrap();
        assert!(r.duality_gap <= MINIMAX_GAP_TOL, "{}", r.duality_gap);
        assert!(r.value.value() <= (4.0f64 / 3.0).log2() / 2.0 + 1e-9);
    }

    #[test]
    fn singleton_and_shared_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let e = random_channel(3, 2, &mut rng);
        let s = HypothesisSet::classical(vec![e], false).unwrap();
        assert_eq!(worst_case_iid_exponent(&s, &s).unwrap().value, ExtReal::Finite(0.0));
    }

    #[test]
    fn worst_case_matches_pair_enumeration_and_orders_parallel() {
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        for _ in 0..100 {
            let nx = rng.random_range(1..=3);
            let ny = rng.random_range(2..=3);
            let sv: Vec<_> = (0..rng.random_range(1..=3)).map(|_| random_channel(nx, ny, &mut rng)).collect();
            let tv: Vec<_> = (0..rng.random_range(1..=3)).map(|_| random_channel(nx, ny, &mut rng)).collect();
            let mut brute = f64::INFINITY;
            for e in &sv {
                for f in &tv {
                    brute = brute.min(classical_channel_divergence(e, f).unwrap().value());
                }
            }
            let s = HypothesisSet::classical(sv.clone(), false).unwrap();
            let t = HypothesisSet::classical(tv.clone(), false).unwrap();
            let worst = worst_case_iid_exponent(&s, &t).unwrap();
            assert_eq!(worst.value.value(), brute);
            let par = parallel_exponent_finite_classical(&s, &t).unwrap();
            assert!(par.value.value() <= worst.value.value() + 1e-9);
            if sv.len() == 1 && tv.len() == 1 {
                assert!((par.value.value() - worst.value.value()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_mixed_kinds_and_quantum_hulls() {
        let c = HypothesisSet::classical(vec![ClassicalChannel::identity(2)], false).unwrap();
        let q = HypothesisSet::quantum(vec![QuantumChannel::identity(2)], false).unwrap();
        assert!(matches!(worst_case_iid_exponent(&c, &q), Err(Error::KindMismatch(_))));
        assert!(matches!(worst_case_iid_exponent(&q.with_hull(true), &q), Err(Error::Precondition(_))));
        assert!(HypothesisSet::new(vec![], false).is_err());
    }
}
