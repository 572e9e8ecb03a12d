use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::classical::{ClassicalChannel, ProbVector};
use crate::error::{Error, Result};
use crate::linalg::{
    c, hermitian_eig, hermitian_eig_unchecked, is_hermitian, kron, max_abs, outer, trace, unit_vector,
    CMat, CVec, HermitianEig,
};

/// Tolerance on negative eigenvalues and on the trace of a density matrix.
pub const STATE_TOL: f64 = 1e-10;
/// Tolerance on trace preservation and POVM completeness.
pub const COMPLETENESS_TOL: f64 = 1e-9;

/// Serialized form of a complex matrix: rows of `[re, im]` pairs.
pub type ComplexRows = Vec<Vec<[f64; 2]>>;

pub fn to_complex_rows(m: &CMat) -> ComplexRows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn from_complex_rows(rows: &ComplexRows) -> Result<CMat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::invalid("matrix", "empty"));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::dims(ncols, bad.len()));
    }
    Ok(CMat::from_fn(nrows, ncols, |i, j| {
        Complex64::new(rows[i][j][0], rows[i][j][1])
    }))
}

/// A positive semidefinite, unit-trace Hermitian matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexRows", into = "ComplexRows")]
pub struct DensityMatrix(CMat);

impl DensityMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dims(m.nrows(), m.ncols()));
        }
        if !is_hermitian(&m, STATE_TOL) {
            return Err(Error::invalid("density matrix", "not Hermitian"));
        }
        let tr = trace(&m);
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::invalid("density matrix", format!("trace is {tr}")));
        }
        let eig = hermitian_eig(&m)?;
        if eig.values[0] < -STATE_TOL {
            return Err(Error::invalid(
                "density matrix",
                format!("negative eigenvalue {}", eig.values[0]),
            ));
        }
        Ok(DensityMatrix((&m + m.adjoint()).scale(0.5)))
    }

    /// Wraps a matrix produced by a trace-preserving map; re-symmetrizes and
    /// renormalizes the trace without re-running the spectral check.
    pub(crate) fn from_trusted(m: CMat) -> Self {
        let herm = (&m + m.adjoint()).scale(0.5);
        let tr = trace(&herm).re;
        DensityMatrix(if tr > 0.0 { herm.unscale(tr) } else { herm })
    }

    pub fn from_diagonal(p: &ProbVector) -> Self {
        DensityMatrix(crate::linalg::real_diag(p.as_slice()))
    }

    /// |ψ⟩⟨ψ| for a (not necessarily normalized) nonzero vector.
    pub fn pure(psi: &CVec) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::invalid("pure state", "zero vector"));
        }
        let v = psi.unscale(norm);
        Ok(DensityMatrix(outer(&v, &v)))
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let v = unit_vector(dim, i);
        DensityMatrix(outer(&v, &v))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(CMat::identity(dim, dim).unscale(dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn eig(&self) -> HermitianEig {
        hermitian_eig_unchecked(&self.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix(kron(&self.0, &other.0))
    }

    /// Convex combination of states of equal dimension.
    pub fn mixture(weights: &[f64], states: &[DensityMatrix]) -> Result<DensityMatrix> {
        let first = states
            .first()
            .ok_or_else(|| Error::invalid("mixture", "no components"))?;
        if weights.len() != states.len() {
            return Err(Error::dims(states.len(), weights.len()));
        }
        let mut acc = CMat::zeros(first.dim(), first.dim());
        for (w, s) in weights.iter().zip(states) {
            if s.dim() != first.dim() {
                return Err(Error::dims(first.dim(), s.dim()));
            }
            acc += s.0.scale(*w);
        }
        Ok(DensityMatrix::from_trusted(acc))
    }

    /// Block-diagonal direct sum `⊕ w_i ρ_i`.
    pub fn direct_sum(weights: &[f64], blocks: &[DensityMatrix]) -> Result<DensityMatrix> {
        if weights.len() != blocks.len() || blocks.is_empty() {
            return Err(Error::dims(blocks.len(), weights.len()));
        }
        let total: usize = blocks.iter().map(DensityMatrix::dim).sum();
        let mut m = CMat::zeros(total, total);
        let mut off = 0;
        for (w, b) in weights.iter().zip(blocks) {
            let d = b.dim();
            m.view_mut((off, off), (d, d)).copy_from(&b.0.scale(*w));
            off += d;
        }
        Ok(DensityMatrix::from_trusted(m))
    }
}

impl TryFrom<ComplexRows> for DensityMatrix {
    type Error = Error;
    fn try_from(rows: ComplexRows) -> Result<Self> {
        DensityMatrix::new(from_complex_rows(&rows)?)
    }
}

impl From<DensityMatrix> for ComplexRows {
    fn from(d: DensityMatrix) -> ComplexRows {
        to_complex_rows(&d.0)
    }
}

/// A CPTP map in Kraus form; each operator is `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KrausSerde", into = "KrausSerde")]
pub struct QuantumChannel {
    in_dim: usize,
    out_dim: usize,
    kraus: Vec<CMat>,
}

#[derive(Serialize, Deserialize)]
struct KrausSerde {
    kraus: Vec<ComplexRows>,
}

impl TryFrom<KrausSerde> for QuantumChannel {
    type Error = Error;
    fn try_from(k: KrausSerde) -> Result<Self> {
        QuantumChannel::new(k.kraus.iter().map(from_complex_rows).collect::<Result<_>>()?)
    }
}

impl From<QuantumChannel> for KrausSerde {
    fn from(q: QuantumChannel) -> KrausSerde {
        KrausSerde {
            kraus: q.kraus.iter().map(to_complex_rows).collect(),
        }
    }
}

impl QuantumChannel {
    pub fn new(kraus: Vec<CMat>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::invalid("quantum channel", "no Kraus operators"))?;
        let (out_dim, in_dim) = first.shape();
        let mut sum = CMat::zeros(in_dim, in_dim);
        for k in &kraus {
            if k.shape() != (out_dim, in_dim) {
                return Err(Error::dims(out_dim * in_dim, k.nrows() * k.ncols()));
            }
            sum += k.adjoint() * k;
        }
        let defect = max_abs(&(sum - CMat::identity(in_dim, in_dim)));
        if defect > COMPLETENESS_TOL {
            return Err(Error::invalid(
                "quantum channel",
                format!("Kraus operators are not trace preserving (defect {defect:e})"),
            ));
        }
        Ok(QuantumChannel {
            in_dim,
            out_dim,
            kraus,
        })
    }

    pub fn identity(dim: usize) -> Self {
        QuantumChannel {
            in_dim: dim,
            out_dim: dim,
            kraus: vec![CMat::identity(dim, dim)],
        }
    }

    pub fn unitary(u: CMat) -> Result<Self> {
        Self::new(vec![u])
    }

    /// Constant channel `X ↦ Tr(X) ρ` on an `in_dim`-dimensional input.
    pub fn replacer(rho: &DensityMatrix, in_dim: usize) -> Self {
        let eig = rho.eig();
        let mut kraus = Vec::new();
        for (k, &lam) in eig.values.iter().enumerate() {
            if lam <= 0.0 {
                continue;
            }
            let v = eig.vector(k).scale(lam.sqrt());
            for i in 0..in_dim {
                kraus.push(outer(&v, &unit_vector(in_dim, i)));
            }
        }
        QuantumChannel {
            in_dim,
            out_dim: rho.dim(),
            kraus,
        }
    }

    /// Kraus operators `√W(y|x) |y⟩⟨x|`.
    pub fn embed_classical(ch: &ClassicalChannel) -> Self {
        let (nx, ny) = (ch.input_size(), ch.output_size());
        let mut kraus = Vec::new();
        for x in 0..nx {
            for y in 0..ny {
                let w = ch.prob(x, y);
                if w > 0.0 {
                    let mut k = CMat::zeros(ny, nx);
                    k[(y, x)] = c(w.sqrt());
                    kraus.push(k);
                }
            }
        }
        QuantumChannel {
            in_dim: nx,
            out_dim: ny,
            kraus,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.in_dim {
            return Err(Error::dims(self.in_dim, rho.dim()));
        }
        Ok(DensityMatrix::from_trusted(self.apply_raw(rho.matrix())))
    }

    pub(crate) fn apply_raw(&self, rho: &CMat) -> CMat {
        let mut out = CMat::zeros(self.out_dim, self.out_dim);
        for k in &self.kraus {
            out += k * rho * k.adjoint();
        }
        out
    }

    /// `id_R ⊗ self`, acting on `R ⊗ A` with `R` of dimension `ref_dim`.
    pub fn with_reference(&self, ref_dim: usize) -> QuantumChannel {
        let id = CMat::identity(ref_dim, ref_dim);
        QuantumChannel {
            in_dim: ref_dim * self.in_dim,
            out_dim: ref_dim * self.out_dim,
            kraus: self.kraus.iter().map(|k| kron(&id, k)).collect(),
        }
    }

    pub fn tensor(&self, other: &QuantumChannel) -> QuantumChannel {
        let mut kraus = Vec::with_capacity(self.kraus.len() * other.kraus.len());
        for a in &self.kraus {
            for b in &other.kraus {
                kraus.push(kron(a, b));
            }
        }
        QuantumChannel {
            in_dim: self.in_dim * other.in_dim,
            out_dim: self.out_dim * other.out_dim,
            kraus,
        }
    }

    pub fn tensor_power(&self, n: usize) -> QuantumChannel {
        let mut out = self.clone();
        for _ in 1..n.max(1) {
            out = out.tensor(self);
        }
        out
    }

    /// Convex combination `Σ w_i E_i` as a Kraus family `{√w_i K}`.
    pub fn mixture(weights: &[f64], channels: &[QuantumChannel]) -> Result<QuantumChannel> {
        let first = channels
            .first()
            .ok_or_else(|| Error::invalid("mixture", "no components"))?;
        if weights.len() != channels.len() {
            return Err(Error::dims(channels.len(), weights.len()));
        }
        let total: f64 = weights.iter().sum();
        let mut kraus = Vec::new();
        for (w, ch) in weights.iter().zip(channels) {
            if ch.in_dim != first.in_dim || ch.out_dim != first.out_dim {
                return Err(Error::dims(first.in_dim * first.out_dim, ch.in_dim * ch.out_dim));
            }
            if *w <= 0.0 {
                continue;
            }
            let s = (w / total).sqrt();
            kraus.extend(ch.kraus.iter().map(|k| k.scale(s)));
        }
        Ok(QuantumChannel {
            in_dim: first.in_dim,
            out_dim: first.out_dim,
            kraus,
        })
    }

    /// Normalized Choi state `(id ⊗ E)(Ω)` with `Ω` maximally entangled on `A ⊗ A`.
    pub fn choi_state(&self) -> DensityMatrix {
        let d = self.in_dim;
        let mut omega = CVec::zeros(d * d);
        for i in 0..d {
            omega[i * d + i] = c(1.0 / (d as f64).sqrt());
        }
        let rho = outer(&omega, &omega);
        DensityMatrix::from_trusted(self.with_reference(d).apply_raw(&rho))
    }
}

/// A measurement `{M_i}` with `M_i ≥ 0`, `Σ M_i = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    elements: Vec<CMat>,
}

impl Povm {
    pub fn new(elements: Vec<CMat>) -> Result<Self> {
        let first = elements
            .first()
            .ok_or_else(|| Error::invalid("POVM", "no elements"))?;
        let d = first.nrows();
        let mut sum = CMat::zeros(d, d);
        for m in &elements {
            if m.shape() != (d, d) {
                return Err(Error::dims(d, m.nrows()));
            }
            let eig = hermitian_eig(m)?;
            if eig.values[0] < -STATE_TOL {
                return Err(Error::invalid("POVM", "element is not positive semidefinite"));
            }
            sum += m;
        }
        let defect = max_abs(&(sum - CMat::identity(d, d)));
        if defect > COMPLETENESS_TOL {
            return Err(Error::invalid(
                "POVM",
                format!("elements do not sum to identity (defect {defect:e})"),
            ));
        }
        Ok(Povm { elements })
    }

    pub fn trivial(dim: usize) -> Self {
        Povm {
            elements: vec![CMat::identity(dim, dim)],
        }
    }

    pub fn computational(dim: usize) -> Self {
        Povm {
            elements: (0..dim)
                .map(|i| {
                    let v = unit_vector(dim, i);
                    outer(&v, &v)
                })
                .collect(),
        }
    }

    /// Rank-one projective measurement onto the columns of a unitary.
    pub fn from_basis(u: &CMat) -> Result<Self> {
        let d = u.nrows();
        if !u.is_square() {
            return Err(Error::dims(d, u.ncols()));
        }
        Self::new(
            (0..d)
                .map(|i| {
                    let v = u.column(i).into_owned();
                    outer(&v, &v)
                })
                .collect(),
        )
    }

    /// Two-outcome measurement `{P, 1 − P}`.
    pub fn binary(p: &CMat) -> Result<Self> {
        let d = p.nrows();
        Self::new(vec![p.clone(), CMat::identity(d, d) - p])
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    pub fn elements(&self) -> &[CMat] {
        &self.elements
    }

    /// Entry i is `Tr(ρ M_i)`.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<ProbVector> {
        if rho.dim() != self.dim() {
            return Err(Error::dims(self.dim(), rho.dim()));
        }
        let probs = self
            .elements
            .iter()
            .map(|m| crate::linalg::trace_product_re(rho.matrix(), m).max(0.0))
            .collect();
        ProbVector::normalized(probs)
    }

    /// Block-diagonal POVM `⊕ M^{(b)}` from per-block POVMs; outcome
    /// `(b, i)` is indexed by concatenation.
    pub fn direct_sum(blocks: &[Povm]) -> Result<Povm> {
        let total: usize = blocks.iter().map(Povm::dim).sum();
        let mut elements = Vec::new();
        let mut off = 0;
        for b in blocks {
            let d = b.dim();
            for m in &b.elements {
                let mut big = CMat::zeros(total, total);
                big.view_mut((off, off), (d, d)).copy_from(m);
                elements.push(big);
            }
            off += d;
        }
        Povm::new(elements)
    }
}

/// A two-outcome test `0 ≤ M ≤ 1`, accepting the null hypothesis with weight `M`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestOperator {
    Classical(Vec<f64>),
    Quantum(CMat),
}

impl TestOperator {
    pub fn classical(m: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = m.iter().enumerate().find(|(_, &v)| !(-1e-12..=1.0 + 1e-12).contains(&v)) {
            return Err(Error::invalid("test", format!("entry {i} = {v} outside [0,1]")));
        }
        Ok(TestOperator::Classical(m.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()))
    }

    pub fn quantum(m: CMat) -> Result<Self> {
        let eig = hermitian_eig(&m)?;
        if eig.values[0] < -STATE_TOL || eig.max_value() > 1.0 + STATE_TOL {
            return Err(Error::invalid("test", "spectrum outside [0,1]"));
        }
        Ok(TestOperator::Quantum(m))
    }

    pub fn dim(&self) -> usize {
        match self {
            TestOperator::Classical(v) => v.len(),
            TestOperator::Quantum(m) => m.nrows(),
        }
    }

    /// Acceptance probability `Σ p(x) M(x)`.
    pub fn accept_classical(&self, p: &ProbVector) -> Result<f64> {
        match self {
            TestOperator::Classical(m) if m.len() == p.len() => {
                Ok(m.iter().zip(p.iter()).map(|(a, b)| a * b).sum())
            }
            TestOperator::Classical(m) => Err(Error::dims(m.len(), p.len())),
            TestOperator::Quantum(_) => Err(Error::KindMismatch("quantum test on classical state".into())),
        }
    }

    /// Acceptance probability `Tr(ρ M)`.
    pub fn accept_quantum(&self, rho: &DensityMatrix) -> Result<f64> {
        match self {
            TestOperator::Quantum(m) if m.nrows() == rho.dim() => {
                Ok(crate::linalg::trace_product_re(rho.matrix(), m))
            }
            TestOperator::Quantum(m) => Err(Error::dims(m.nrows(), rho.dim())),
            TestOperator::Classical(m) => {
                if m.len() != rho.dim() {
                    return Err(Error::dims(m.len(), rho.dim()));
                }
                Ok(m.iter().zip(rho.diagonal()).map(|(a, b)| a * b).sum())
            }
        }
    }

    pub fn as_classical(&self) -> Option<&[f64]> {
        match self {
            TestOperator::Classical(m) => Some(m),
            TestOperator::Quantum(_) => None,
        }
    }
}
