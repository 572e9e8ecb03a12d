//! Channel divergences: exact for classical channels, bracketed for quantum ones.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::divergences::{dmax, kl_divergence, quantum_relative_entropy, ExtReal, LEAKAGE_TOL, SUPPORT_REL_TOL};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig_unchecked, unit_vector, CMat, CVec, HermitianEig};
use crate::model::{ClassicalChannel, DensityMatrix, ProbVector, QuantumChannel};
use crate::optim::{maximize_on_sphere, SphereOptions};

/// Largest `in_dim² · out_dim²` accepted by [`regularized_bracket`].
pub const REGULARIZATION_DIM_LIMIT: usize = 16;
/// Iteration budget per ascent run inside the quantum lower bound.
const ASCENT_MAX_ITER: usize = 500;

/// The input achieving a channel-divergence value.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    Classical(ProbVector),
    /// Pure state on `R ⊗ A`, reference first.
    Quantum(DensityMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDivReport {
    pub lower: ExtReal,
    pub upper: ExtReal,
    pub witness: Witness,
    /// Per-copy value `(1/n) D(E^⊗n ‖ F^⊗n)` found at each level `n`.
    pub per_n_values: BTreeMap<usize, ExtReal>,
}

fn same_shape_classical(e: &ClassicalChannel, f: &ClassicalChannel) -> Result<()> {
    if e.input_size() != f.input_size() {
        return Err(Error::dims(e.input_size(), f.input_size()));
    }
    if e.output_size() != f.output_size() {
        return Err(Error::dims(e.output_size(), f.output_size()));
    }
    Ok(())
}

fn same_shape_quantum(e: &QuantumChannel, f: &QuantumChannel) -> Result<()> {
    if e.in_dim() != f.in_dim() {
        return Err(Error::dims(e.in_dim(), f.in_dim()));
    }
    if e.out_dim() != f.out_dim() {
        return Err(Error::dims(e.out_dim(), f.out_dim()));
    }
    Ok(())
}

/// `max_x D(E(x) ‖ F(x))` and the maximizing input (lowest index on ties).
pub fn classical_channel_divergence_witness(e: &ClassicalChannel, f: &ClassicalChannel) -> Result<(ExtReal, usize)> {
    same_shape_classical(e, f)?;
    let mut best = (ExtReal::Finite(f64::NEG_INFINITY), 0);
    for x in 0..e.input_size() {
        let v = kl_divergence(e.row(x), f.row(x))?;
        if v > best.0 {
            best = (v, x);
        }
    }
    Ok(best)
}

/// Channel relative entropy of classical channels. Entangled or randomized
/// inputs never beat the best deterministic input, so this is also the
/// regularized and amortized value.
pub fn classical_channel_divergence(e: &ClassicalChannel, f: &ClassicalChannel) -> Result<ExtReal> {
    Ok(classical_channel_divergence_witness(e, f)?.0)
}

/// `X ↦ Σ K† X K`.
fn log2_floor(eig: &HermitianEig) -> Vec<f64> {
    let floor = SUPPORT_REL_TOL * eig.max_value().max(1e-300);
    eig.values.iter().map(|&l| l.max(floor).log2()).collect()
}

/// Fréchet derivative of `log₂` at `σ = V diag(μ) V†` applied to `x`.
fn dlog2(eig: &HermitianEig, logs: &[f64], x: &CMat) -> CMat {
    let v = &eig.vectors;
    let mut inner = v.adjoint() * x * v;
    let floor = SUPPORT_REL_TOL * eig.max_value().max(1e-300);
    let mu: Vec<f64> = eig.values.iter().map(|&l| l.max(floor)).collect();
    let n = mu.len();
    for i in 0..n {
        for j in 0..n {
            let gamma = if (mu[i] - mu[j]).abs() <= 1e-12 * mu[i].max(mu[j]) {
                std::f64::consts::LOG2_E / mu[i]
            } else {
                (logs[i] - logs[j]) / (mu[i] - mu[j])
            };
            inner[(i, j)] *= Complex64::new(gamma, 0.0);
        }
    }
    v * inner * v.adjoint()
}

/// `D(ρ ‖ σ)` with the matrices `A = log₂ρ + log₂e − log₂σ` and
/// `B = −Dlog₂(σ)[ρ]`, so that `dD = Tr(dρ A) + Tr(dσ B)`.
///
/// Returns `None` when `ρ` leaks out of the support of `σ` and
/// `detect_infinite` is set; otherwise the kernel of `σ` is simply dropped.
pub(crate) fn divergence_with_gradients(rho: &CMat, sigma: &CMat, detect_infinite: bool) -> Option<(f64, CMat, CMat)> {
    let se = hermitian_eig_unchecked(sigma);
    let cut = SUPPORT_REL_TOL * se.max_value().max(0.0);
    let leakage: f64 = (0..se.dim())
        .filter(|&i| se.values[i] <= cut)
        .map(|i| {
            let v = se.vector(i);
            v.dotc(&(rho * &v)).re
        })
        .sum();
    if detect_infinite && leakage > LEAKAGE_TOL {
        return None;
    }
    let re = hermitian_eig_unchecked(rho);
    let rho_logs = log2_floor(&re);
    let sigma_logs = log2_floor(&se);
    let mut value = 0.0;
    for (i, &l) in re.values.iter().enumerate() {
        if l > 0.0 {
            value += l * rho_logs[i];
        }
    }
    for i in 0..se.dim() {
        if se.values[i] > cut {
            let v = se.vector(i);
            value -= v.dotc(&(rho * &v)).re * sigma_logs[i];
        }
    }
    let a = re.map_indexed(|i, _| rho_logs[i] + std::f64::consts::LOG2_E) - se.map_indexed(|i, _| sigma_logs[i]);
    let b = -dlog2(&se, &sigma_logs, rho);
    Some((value, a, b))
}

/// `D(Ẽ(ψψ†) ‖ F̃(ψψ†))` and its real gradient in `ψ`, for channels that
/// already include the reference system.
///
/// Callers turn `detect_infinite` off when `D_max(E‖F)` is finite: no input
/// can then give `+∞`, and weight on numerically tiny eigenvalues is roundoff
/// rather than a support violation.
fn stabilized_objective(e: &QuantumChannel, f: &QuantumChannel, psi: &CVec, detect_infinite: bool) -> (f64, CVec) {
    // Pure input: each output is Σ_k (K_k ψ)(K_k ψ)†, built from matrix-vector products.
    let images = |ch: &QuantumChannel| -> Vec<CVec> { ch.kraus().iter().map(|k| k * psi).collect() };
    let (ev, fv) = (images(e), images(f));
    let output = |vs: &[CVec], dim: usize| {
        let mut out = CMat::zeros(dim, dim);
        for v in vs {
            out.ger(Complex64::new(1.0, 0.0), v, &v.conjugate(), Complex64::new(1.0, 0.0));
        }
        out
    };
    let rho = output(&ev, e.out_dim());
    let sigma = output(&fv, f.out_dim());
    let Some((value, a, b)) = divergence_with_gradients(&rho, &sigma, detect_infinite) else {
        return (f64::INFINITY, CVec::zeros(psi.len()));
    };
    let mut g = CVec::zeros(psi.len());
    for (k, v) in e.kraus().iter().zip(&ev) {
        g += k.adjoint() * (&a * v);
    }
    for (k, v) in f.kraus().iter().zip(&fv) {
        g += k.adjoint() * (&b * v);
    }
    (value, g * Complex64::new(2.0, 0.0))
}

trait MapIndexed {
    fn map_indexed(&self, f: impl Fn(usize, f64) -> f64) -> CMat;
}

impl MapIndexed for HermitianEig {
    fn map_indexed(&self, f: impl Fn(usize, f64) -> f64) -> CMat {
        let n = self.dim();
        let mut out = CMat::zeros(n, n);
        for k in 0..n {
            let w = f(k, self.values[k]);
            let v = self.vectors.column(k);
            out += &v * v.adjoint() * Complex64::new(w, 0.0);
        }
        out
    }
}

/// Stabilized ascent over pure inputs on `R ⊗ A` with `R ≅ A`.
pub(crate) fn stabilized_lower(
    e: &QuantumChannel,
    f: &QuantumChannel,
    restarts: usize,
    seed: u64,
    extra_starts: Vec<CVec>,
) -> (ExtReal, CVec) {
    let d = e.in_dim();
    let (er, fr) = (e.with_reference(d), f.with_reference(d));
    let dim = d * d;
    // Product inputs |0⟩|x⟩ make deterministic classical inputs feasible starts;
    // the maximally entangled input is the other natural candidate.
    let mut starts = extra_starts;
    for x in 0..d {
        starts.push(unit_vector(dim, x));
    }
    let mut omega = CVec::zeros(dim);
    for i in 0..d {
        omega[i * d + i] = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    }
    starts.push(omega);
    let detect_infinite = dmax_channel(e, f).map_or(true, |v| v.is_infinite());
    let objective = |psi: &CVec| stabilized_objective(&er, &fr, psi, detect_infinite);
    let options = SphereOptions {
        restarts,
        seed,
        max_iter: ASCENT_MAX_ITER,
        starts,
        ..SphereOptions::default()
    };
    let report = maximize_on_sphere(&objective, dim, &options);
    (ExtReal::from_f64(report.value.max(0.0)), report.argument)
}

/// Lower bound on the channel relative entropy by pure-state ascent, with
/// `dmax_channel` as the certified upper bound.
pub fn quantum_channel_divergence_lower(
    e: &QuantumChannel,
    f: &QuantumChannel,
    restarts: usize,
    seed: u64,
) -> Result<ChannelDivReport> {
    same_shape_quantum(e, f)?;
    let (lower, psi) = stabilized_lower(e, f, restarts, seed, Vec::new());
    let upper = dmax_channel(e, f)?;
    Ok(ChannelDivReport {
        lower,
        upper,
        witness: Witness::Quantum(DensityMatrix::pure(&psi)?),
        per_n_values: BTreeMap::from([(1, lower)]),
    })
}

/// Max-divergence of channels, evaluated on the normalized Choi states.
pub fn dmax_channel(e: &QuantumChannel, f: &QuantumChannel) -> Result<ExtReal> {
    same_shape_quantum(e, f)?;
    dmax(&e.choi_state(), &f.choi_state())
}

/// Reorders `ψ ⊗ ψ` from `R₁A₁R₂A₂` to `R₁R₂A₁A₂`.
fn doubled_input(psi: &CVec, d: usize) -> CVec {
    let mut out = CVec::zeros(d.pow(4));
    for r1 in 0..d {
        for a1 in 0..d {
            for r2 in 0..d {
                for a2 in 0..d {
                    let amp = psi[r1 * d + a1] * psi[r2 * d + a2];
                    out[((r1 * d + r2) * d + a1) * d + a2] = amp;
                }
            }
        }
    }
    out
}

/// Bracket on the regularized (equivalently amortized) channel relative
/// entropy: lower from levels 1 and 2 of the stabilized ascent, upper from
/// `dmax_channel`. Levels beyond two are not attempted.
pub fn regularized_bracket(
    e: &QuantumChannel,
    f: &QuantumChannel,
    restarts: usize,
    seed: u64,
) -> Result<ChannelDivReport> {
    same_shape_quantum(e, f)?;
    let size = e.in_dim().pow(2) * e.out_dim().pow(2);
    if size > REGULARIZATION_DIM_LIMIT {
        return Err(Error::SizeLimit {
            what: "two-copy output dimension",
            size,
            limit: REGULARIZATION_DIM_LIMIT,
        });
    }
    let (v1, psi1) = stabilized_lower(e, f, restarts, seed, Vec::new());
    let upper = dmax_channel(e, f)?;
    let mut per_n = BTreeMap::from([(1, v1)]);
    let (lower, witness) = if v1.is_infinite() {
        (v1, psi1)
    } else {
        let (e2, f2) = (e.tensor(e), f.tensor(f));
        let start = doubled_input(&psi1, e.in_dim());
        let (v2, psi2) = stabilized_lower(&e2, &f2, restarts, seed.wrapping_add(1), vec![start]);
        let per_copy = ExtReal::from_f64(v2.value() / 2.0);
        per_n.insert(2, per_copy);
        if per_copy > v1 {
            (per_copy, psi2)
        } else {
            (v1, psi1)
        }
    };
    Ok(ChannelDivReport {
        lower,
        upper,
        witness: Witness::Quantum(DensityMatrix::pure(&witness)?),
        per_n_values: per_n,
    })
}

/// Relative entropy of the outputs of `id_R ⊗ E` and `id_R ⊗ F` on a given input.
pub fn stabilized_divergence(e: &QuantumChannel, f: &QuantumChannel, input: &DensityMatrix) -> Result<ExtReal> {
    same_shape_quantum(e, f)?;
    let d = input.dim() / e.in_dim();
    if d * e.in_dim() != input.dim() {
        return Err(Error::dims(e.in_dim(), input.dim()));
    }
    let (er, fr) = (e.with_reference(d), f.with_reference(d));
    quantum_relative_entropy(&er.apply(input)?, &fr.apply(input)?)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::divergences::quantum_relative_entropy;
    use crate::model::testutil::{random_channel, random_density, random_quantum_channel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row(v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    pub(crate) fn example_channels() -> [ClassicalChannel; 4] {
        let e1 = ClassicalChannel::from_rows(vec![row(&[0.5, 0.0, 0.5, 0.0]), row(&[0.5, 0.0, 0.5, 0.0])]).unwrap();
        let e2 = ClassicalChannel::from_rows(vec![row(&[0.0, 0.5, 0.0, 0.5]), row(&[0.0, 0.5, 0.0, 0.5])]).unwrap();
        let f1 = ClassicalChannel::from_rows(vec![row(&[0.75, 0.0, 0.25, 0.0]), row(&[0.5, 0.0, 0.5, 0.0])]).unwrap();
        let f2 = ClassicalChannel::from_rows(vec![row(&[0.0, 0.5, 0.0, 0.5]), row(&[0.0, 0.75, 0.0, 0.25])]).unwrap();
        [e1, e2, f1, f2]
    }

    #[test]
    fn classical_examples() {
        let [e1, _, f1, f2] = example_channels();
        let half = (4.0f64 / 3.0).log2() / 2.0;
        let (v, x) = classical_channel_divergence_witness(&e1, &f1).unwrap();
        assert!((v.value() - half).abs() < 1e-15);
        assert_eq!(x, 0);
        assert!(classical_channel_divergence(&e1, &f2).unwrap().is_infinite());
        assert_eq!(classical_channel_divergence(&e1, &e1).unwrap(), ExtReal::Finite(0.0));
    }

    #[test]
    fn tensor_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let (a, b) = (random_channel(2, 3, &mut rng), random_channel(2, 3, &mut rng));
            let (c, d) = (random_channel(2, 2, &mut rng), random_channel(2, 2, &mut rng));
            let v1 = classical_channel_divergence(&a.tensor(&c), &b.tensor(&d)).unwrap();
            let v2 = classical_channel_divergence(&c.tensor(&a), &d.tensor(&b)).unwrap();
            assert!((v1.value() - v2.value()).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let e = random_quantum_channel(2, 2, 4, &mut rng).with_reference(2);
        let f = random_quantum_channel(2, 2, 4, &mut rng).with_reference(2);
        let psi = crate::optim::sphere::random_unit_vector(4, &mut rng);
        let (_, g) = stabilized_objective(&e, &f, &psi, true);
        let h = 1e-6;
        for i in 0..4 {
            for dir in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
                let mut dp = psi.clone();
                dp[i] += dir * h;
                let mut dm = psi.clone();
                dm[i] -= dir * h;
                let fd = (stabilized_objective(&e, &f, &dp, true).0 - stabilized_objective(&e, &f, &dm, true).0) / (2.0 * h);
                let an = (g[i].conj() * dir).re;
                assert!((fd - an).abs() < 1e-6, "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn replacer_pair_gives_state_divergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..5 {
            let rho = random_density(2, &mut rng);
            let sigma = random_density(2, &mut rng);
            let e = QuantumChannel::replacer(&rho, 2);
            let f = QuantumChannel::replacer(&sigma, 2);
            let d = quantum_relative_entropy(&rho, &sigma).unwrap().value();
            let r = quantum_channel_divergence_lower(&e, &f, 4, 1).unwrap();
            assert!((r.lower.value() - d).abs() < 1e-9);
            assert!((dmax_channel(&e, &f).unwrap().value() - dmax(&rho, &sigma).unwrap().value()).abs() < 1e-9);
            let b = regularized_bracket(&e, &f, 2, 1).unwrap();
            assert!((b.per_n_values[&1].value() - d).abs() < 1e-9);
            assert!(b.lower.value() <= b.upper.value() + 1e-9);
        }
    }

    #[test]
    fn identical_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let e = random_quantum_channel(2, 2, 2, &mut rng);
        let r = quantum_channel_divergence_lower(&e, &e, 4, 0).unwrap();
        assert!(r.lower.value().abs() < 1e-9);
        assert!(dmax_channel(&e, &e).unwrap().value().abs() < 1e-9);
        let b = regularized_bracket(&e, &e, 2, 0).unwrap();
        assert!(b.lower.value().abs() < 1e-9 && b.upper.value().abs() < 1e-9);
    }

    #[test]
    fn embedded_classical_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..10 {
            let a = random_channel(2, 2, &mut rng);
            let b = random_channel(2, 2, &mut rng);
            let exact = classical_channel_divergence(&a, &b).unwrap().value();
            let (qa, qb) = (QuantumChannel::embed_classical(&a), QuantumChannel::embed_classical(&b));
            let r = quantum_channel_divergence_lower(&qa, &qb, 4, 2).unwrap();
            assert!(r.lower.value() >= exact - 1e-6);
            assert!((r.lower.value() - exact).abs() < 1e-4, "{} vs {}", r.lower.value(), exact);
            // Choi diagonals: ratio of transition probabilities
            let ratio = (0..2)
                .flat_map(|x| (0..2).map(move |y| (x, y)))
                .map(|(x, y)| a.prob(x, y) / b.prob(x, y))
                .fold(0.0, f64::max);
            assert!((dmax_channel(&qa, &qb).unwrap().value() - ratio.log2()).abs() < 1e-9);
            let br = regularized_bracket(&qa, &qb, 2, 2).unwrap();
            assert!(br.lower.value() >= exact - 1e-4);
            assert!(br.upper >= br.lower, "{br:?} exact {exact}");
        }
    }

    #[test]
    fn two_copies_never_below_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for _ in 0..3 {
            let e = random_quantum_channel(2, 2, 4, &mut rng);
            let f = random_quantum_channel(2, 2, 4, &mut rng);
            let b = regularized_bracket(&e, &f, 2, 5).unwrap();
            assert!(b.per_n_values[&2].value() >= b.per_n_values[&1].value() - 1e-6);
            assert!(b.upper.value() >= b.lower.value() - 1e-9);
        }
    }

    #[test]
    fn refuses_large_regularization() {
        let [e1, _, f1, _] = example_channels();
        let (qe, qf) = (QuantumChannel::embed_classical(&e1), QuantumChannel::embed_classical(&f1));
        assert!(matches!(regularized_bracket(&qe, &qf, 1, 0), Err(Error::SizeLimit { .. })));
    }
}
