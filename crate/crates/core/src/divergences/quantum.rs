use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig_unchecked, trace_product_re, CMat, HermitianEig};
use crate::model::{DensityMatrix, TestOperator};

use super::{check_eps, ExtReal, NpTest, LEAKAGE_TOL, SUPPORT_REL_TOL};

fn same_dim(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<()> {
    if rho.dim() != sigma.dim() {
        return Err(Error::dims(rho.dim(), sigma.dim()));
    }
    Ok(())
}

pub(crate) fn support_cutoff(eig: &HermitianEig) -> f64 {
    SUPPORT_REL_TOL * eig.max_value().max(0.0)
}

/// Weight of `rho` on the numerical kernel of the decomposed `sigma`.
pub(crate) fn kernel_leakage(rho: &CMat, sigma: &HermitianEig) -> f64 {
    let cut = support_cutoff(sigma);
    (0..sigma.dim())
        .filter(|&i| sigma.values[i] <= cut)
        .map(|i| {
            let v = sigma.vector(i);
            v.dotc(&(rho * &v)).re
        })
        .sum()
}

/// Umegaki relative entropy `Tr ρ(log₂ ρ − log₂ σ)`.
pub fn quantum_relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<ExtReal> {
    same_dim(rho, sigma)?;
    let se = sigma.eig();
    if kernel_leakage(rho.matrix(), &se) > LEAKAGE_TOL {
        return Ok(ExtReal::Infinite);
    }
    let re = rho.eig();
    let neg_entropy: f64 = re
        .values
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| l * l.log2())
        .sum();
    let cut = support_cutoff(&se);
    let cross: f64 = (0..se.dim())
        .filter(|&i| se.values[i] > cut)
        .map(|i| {
            let v = se.vector(i);
            v.dotc(&(rho.matrix() * &v)).re * se.values[i].log2()
        })
        .sum();
    Ok(ExtReal::Finite(neg_entropy - cross))
}

/// `log₂ min{λ : ρ ≤ λσ}`.
pub fn dmax(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<ExtReal> {
    same_dim(rho, sigma)?;
    let se = sigma.eig();
    if kernel_leakage(rho.matrix(), &se) > LEAKAGE_TOL {
        return Ok(ExtReal::Infinite);
    }
    let cut = support_cutoff(&se);
    let inv_sqrt = se.map(|l| if l > cut { 1.0 / l.sqrt() } else { 0.0 });
    let m = &inv_sqrt * rho.matrix() * &inv_sqrt;
    // Unit traces force λ ≥ 1; smaller values are rounding.
    Ok(ExtReal::Finite(hermitian_eig_unchecked(&m).max_value().log2().max(0.0)))
}

/// Spectral pieces of `tρ − σ`.
struct Split {
    positive: CMat,
    zero: CMat,
}

fn split(rho: &CMat, sigma: &CMat, t: f64) -> Split {
    let m = rho * num_complex::Complex64::new(t, 0.0) - sigma;
    let eig = hermitian_eig_unchecked(&m);
    let tol = 1e-11 * (1.0 + t);
    Split {
        positive: eig.projector(|x| x > tol),
        zero: eig.projector(|x| x.abs() <= tol),
    }
}

/// Quantum Neyman-Pearson test: minimize `Tr σM` subject to `Tr ρM ≥ 1 − ε`,
/// `0 ≤ M ≤ 1`. Returns `−log₂ β` and the optimal test.
///
/// The optimum has the form `P₊ + γΠ₀` for the positive and null spectral
/// projectors of `tρ − σ` at the multiplier `t` where `Tr ρP₊(t)` first reaches
/// `1 − ε`. Since `t ↦ Tr ρ(P₊ + Π₀)(t)` is nondecreasing, `t` is found by
/// bisection; it may sit at a crossing of an eigenvalue through zero, where `γ`
/// absorbs the jump, or strictly between crossings.
pub fn dh_quantum(rho: &DensityMatrix, sigma: &DensityMatrix, eps: f64) -> Result<(ExtReal, NpTest)> {
    same_dim(rho, sigma)?;
    check_eps(eps)?;
    let d = rho.dim();
    let (r, s) = (rho.matrix(), sigma.matrix());
    let need = 1.0 - eps;
    let finish = |m: CMat, threshold: f64, fraction: f64| {
        let beta = trace_product_re(s, &m).clamp(0.0, 1.0);
        let alpha = (1.0 - trace_product_re(r, &m)).max(0.0);
        (
            ExtReal::neg_log2(beta),
            NpTest {
                threshold,
                inner_fraction: fraction,
                test: TestOperator::Quantum(m),
                achieved_alpha: alpha,
                achieved_beta: beta,
            },
        )
    };
    if need <= 0.0 {
        return Ok(finish(CMat::zeros(d, d), f64::INFINITY, 0.0));
    }
    if need >= 1.0 {
        let re = rho.eig();
        let cut = support_cutoff(&re);
        let support = re.projector(|l| l > cut);
        return Ok(finish(support, 0.0, 1.0));
    }
    let reach = |t: f64| {
        let sp = split(r, s, t);
        trace_product_re(r, &sp.positive) + trace_product_re(r, &sp.zero)
    };
    let mut hi = 1.0;
    while reach(hi) < need {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    let mut lo = 0.0;
    if reach(0.0) >= need {
        hi = 0.0;
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if reach(mid) >= need {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let sp = split(r, s, hi);
    let base = trace_product_re(r, &sp.positive);
    let extra = trace_product_re(r, &sp.zero);
    let gamma = if base >= need || extra <= 0.0 {
        0.0
    } else {
        ((need - base) / extra).clamp(0.0, 1.0)
    };
    let m = &sp.positive + &sp.zero * num_complex::Complex64::new(gamma, 0.0);
    let threshold = if hi > 0.0 { 1.0 / hi } else { f64::INFINITY };
    Ok(finish(m, threshold, gamma))
}
