//! Value types: distributions, density matrices, channels, measurements and tests.
//!
//! Classical objects are plain probability vectors and row-stochastic matrices;
//! quantum channels are stored in Kraus form. [`State`] and [`Channel`] erase the
//! classical/quantum distinction for callers that only know the kind at runtime.

mod classical;
mod quantum;

pub use classical::{ClassicalChannel, ProbVector, NORMALIZATION_TOL};
pub use quantum::{
    from_complex_rows, to_complex_rows, ComplexRows, DensityMatrix, Povm, QuantumChannel,
    TestOperator, COMPLETENESS_TOL, STATE_TOL,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum State {
    Classical(ProbVector),
    Quantum(DensityMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Classical(ClassicalChannel),
    Quantum(QuantumChannel),
}

impl State {
    pub fn dim(&self) -> usize {
        match self {
            State::Classical(p) => p.len(),
            State::Quantum(r) => r.dim(),
        }
    }

    pub fn tensor(&self, other: &State) -> Result<State> {
        match (self, other) {
            (State::Classical(a), State::Classical(b)) => Ok(State::Classical(a.tensor(b))),
            (State::Quantum(a), State::Quantum(b)) => Ok(State::Quantum(a.tensor(b))),
            _ => Err(Error::KindMismatch("cannot tensor classical and quantum states".into())),
        }
    }

    /// Quantum view; classical states become diagonal density matrices.
    pub fn to_quantum(&self) -> DensityMatrix {
        match self {
            State::Classical(p) => DensityMatrix::from_diagonal(p),
            State::Quantum(r) => r.clone(),
        }
    }
}

impl Channel {
    pub fn is_classical(&self) -> bool {
        matches!(self, Channel::Classical(_))
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Channel::Classical(c) => c.input_size(),
            Channel::Quantum(q) => q.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Channel::Classical(c) => c.output_size(),
            Channel::Quantum(q) => q.out_dim(),
        }
    }

    pub fn apply(&self, state: &State) -> Result<State> {
        match (self, state) {
            (Channel::Classical(c), State::Classical(p)) => Ok(State::Classical(c.apply(p)?)),
            (Channel::Quantum(q), State::Quantum(r)) => Ok(State::Quantum(q.apply(r)?)),
            _ => Err(Error::KindMismatch("channel and state kinds differ".into())),
        }
    }

    pub fn tensor(&self, other: &Channel) -> Result<Channel> {
        match (self, other) {
            (Channel::Classical(a), Channel::Classical(b)) => Ok(Channel::Classical(a.tensor(b))),
            (Channel::Quantum(a), Channel::Quantum(b)) => Ok(Channel::Quantum(a.tensor(b))),
            _ => Err(Error::KindMismatch("cannot tensor classical and quantum channels".into())),
        }
    }

    /// Quantum view; classical channels are embedded via [`QuantumChannel::embed_classical`].
    pub fn to_quantum(&self) -> QuantumChannel {
        match self {
            Channel::Classical(c) => QuantumChannel::embed_classical(c),
            Channel::Quantum(q) => q.clone(),
        }
    }

    pub fn as_classical(&self) -> Option<&ClassicalChannel> {
        match self {
            Channel::Classical(c) => Some(c),
            Channel::Quantum(_) => None,
        }
    }

    /// Constant channel on an `in_dim`-symbol input emitting `state`.
    pub fn replacer(state: &State, in_dim: usize) -> Channel {
        match state {
            State::Classical(p) => Channel::Classical(ClassicalChannel::replacer(p, in_dim)),
            State::Quantum(r) => Channel::Quantum(QuantumChannel::replacer(r, in_dim)),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use crate::linalg::{max_abs, CMat};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example_e1() -> ClassicalChannel {
        ClassicalChannel::from_rows(vec![vec![0.5, 0.0, 0.5, 0.0], vec![0.5, 0.0, 0.5, 0.0]]).unwrap()
    }

    #[test]
    fn e1_on_zero_input() {
        let out = example_e1().apply(&ProbVector::point(2, 0)).unwrap();
        assert_eq!(out.as_slice(), &[0.5, 0.0, 0.5, 0.0]);
        let q = QuantumChannel::embed_classical(&example_e1());
        let rho = q.apply(&DensityMatrix::basis(2, 0)).unwrap();
        let expected = crate::linalg::real_diag(&[0.5, 0.0, 0.5, 0.0]);
        assert!(max_abs(&(rho.matrix() - expected)) < 1e-15);
    }

    #[test]
    fn tensor_commutes_with_application() {
        let e = example_e1();
        let ee = e.tensor(&e);
        let x = ProbVector::point(2, 0);
        let lhs = ee.apply(&x.tensor(&x)).unwrap();
        let rhs = e.apply(&x).unwrap().tensor(&e.apply(&x).unwrap());
        assert_eq!(lhs, rhs);
        let tau = ProbVector::uniform(2);
        assert_eq!(tau.tensor(&tau), ProbVector::uniform(4));
    }

    #[test]
    fn embedded_identity_preserves_basis_states() {
        let q = QuantumChannel::embed_classical(&ClassicalChannel::identity(3));
        for i in 0..3 {
            let r = DensityMatrix::basis(3, i);
            assert!(max_abs(&(q.apply(&r).unwrap().matrix() - r.matrix())) < 1e-15);
        }
    }

    #[test]
    fn embedded_channel_matches_classical_on_diagonals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let ch = random_channel(3, 4, &mut rng);
            let p = random_prob(3, &mut rng);
            let classical = ch.apply(&p).unwrap();
            let quantum = QuantumChannel::embed_classical(&ch)
                .apply(&DensityMatrix::from_diagonal(&p))
                .unwrap();
            let expected = crate::linalg::real_diag(classical.as_slice());
            assert!(max_abs(&(quantum.matrix() - expected)) < 1e-10);
        }
    }

    #[test]
    fn application_preserves_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let ch = random_channel(3, 3, &mut rng);
            let out = ch.apply(&random_prob(3, &mut rng)).unwrap();
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let q = random_quantum_channel(2, 3, 2, &mut rng);
            let rho = q.apply(&random_density(2, &mut rng)).unwrap();
            assert!((crate::linalg::trace(rho.matrix()).re - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn quantum_tensor_then_apply_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = random_quantum_channel(2, 2, 2, &mut rng);
            let b = random_quantum_channel(2, 3, 2, &mut rng);
            let ra = random_density(2, &mut rng);
            let rb = random_density(2, &mut rng);
            let lhs = a.tensor(&b).apply(&ra.tensor(&rb)).unwrap();
            let rhs = a.apply(&ra).unwrap().tensor(&b.apply(&rb).unwrap());
            assert!(max_abs(&(lhs.matrix() - rhs.matrix())) < 1e-10);
        }
    }

    #[test]
    fn replacer_outputs_fixed_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let tau = DensityMatrix::maximally_mixed(2);
        let r = QuantumChannel::replacer(&tau, 3);
        for _ in 0..10 {
            let out = r.apply(&random_density(3, &mut rng)).unwrap();
            assert!(max_abs(&(out.matrix() - tau.matrix())) < 1e-12);
        }
        let c = Channel::replacer(&State::Classical(ProbVector::point(2, 0)), 2);
        let out = c.apply(&State::Classical(ProbVector::point(2, 1))).unwrap();
        assert_eq!(out, State::Classical(ProbVector::point(2, 0)));
    }

    #[test]
    fn povm_measurement_probabilities() {
        let rho = DensityMatrix::from_diagonal(&ProbVector::new(vec![0.3, 0.7]).unwrap());
        let p = Povm::computational(2).apply(&rho).unwrap();
        assert!((p.get(0) - 0.3).abs() < 1e-15 && (p.get(1) - 0.7).abs() < 1e-15);
        assert_eq!(Povm::trivial(2).apply(&rho).unwrap().as_slice(), &[1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let u = random_unitary(2, &mut rng);
            let rho = random_density(2, &mut rng);
            let p = Povm::from_basis(&u).unwrap().apply(&rho).unwrap();
            for i in 0..2 {
                let e = u.column(i).into_owned();
                let direct = (e.adjoint() * rho.matrix() * &e)[(0, 0)].re;
                assert!((p.get(i) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constructors_reject_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let rho = random_density(3, &mut rng);
            let mut bad = rho.matrix().clone();
            bad[(0, 1)] += num_complex::Complex64::new(1e-6, 0.0);
            assert!(DensityMatrix::new(bad).is_err());
            let scaled = rho.matrix().scale(1.0 + 1e-8);
            assert!(DensityMatrix::new(scaled).is_err());

            let q = random_quantum_channel(2, 2, 2, &mut rng);
            let mut kraus = q.kraus().to_vec();
            kraus[0] = kraus[0].scale(1.0 + 1e-6);
            assert!(QuantumChannel::new(kraus).is_err());

            let p = random_prob(4, &mut rng);
            let mut v: Vec<f64> = p.as_slice().to_vec();
            v[0] += 1e-9;
            assert!(ProbVector::new(v).is_err());
        }
        let mut neg = CMat::identity(2, 2);
        neg[(0, 0)] = crate::linalg::c(1.5);
        neg[(1, 1)] = crate::linalg::c(-0.5);
        assert!(DensityMatrix::new(neg).is_err());
    }

    #[test]
    fn kind_mismatch_is_reported() {
        let a = State::Classical(ProbVector::uniform(2));
        let b = State::Quantum(DensityMatrix::maximally_mixed(2));
        assert!(matches!(a.tensor(&b), Err(Error::KindMismatch(_))));
        let ch = Channel::Classical(ClassicalChannel::identity(2));
        assert!(matches!(ch.apply(&b), Err(Error::KindMismatch(_))));
    }

    #[test]
    fn choi_state_of_identity_is_maximally_entangled() {
        let choi = QuantumChannel::identity(2).choi_state();
        assert!((choi.matrix()[(0, 3)].re - 0.5).abs() < 1e-15);
        assert!((crate::linalg::trace(choi.matrix()).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn density_serde_uses_complex_pairs() {
        let rho = DensityMatrix::maximally_mixed(2);
        let s = serde_json::to_string(&rho).unwrap();
        assert_eq!(s, "[[[0.5,0.0],[0.0,0.0]],[[0.0,0.0],[0.5,0.0]]]");
        let back: DensityMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rho);
        let q = QuantumChannel::identity(2);
        let s = serde_json::to_string(&q).unwrap();
        let back: QuantumChannel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q);
    }
}
