//! Adversarial hypothesis testing on sample strings.
//!
//! Before each sample the adversary picks the distribution it is drawn from,
//! from a fixed set and based on all earlier samples.

use serde::Serialize;

use crate::divergences::{check_eps, kl_divergence};
use crate::error::{Error, Result};
use crate::model::{ProbVector, TestOperator};
use crate::optim::{minimize_convex_on_simplices, ConvexOptions, SimplexProductDomain};

/// Largest number of sample strings handled exactly.
pub const MAX_HISTORIES: usize = 4096;

/// A deterministic adversary: the vertex index chosen at step `k` after each
/// history of `k` earlier samples, histories encoded base `|Ω|` with the first
/// sample most significant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversaryPolicy {
    pub horizon: usize,
    pub alphabet: usize,
    pub choices: Vec<Vec<usize>>,
}

impl AdversaryPolicy {
    pub fn choice(&self, history: &[usize]) -> usize {
        let code = history.iter().fold(0, |c, &w| c * self.alphabet + w);
        self.choices[history.len()][code]
    }

    /// Probability the adversary puts on each full sample string.
    pub fn distribution(&self, vertices: &[ProbVector]) -> Vec<f64> {
        let mut dist = vec![1.0];
        for k in 0..self.horizon {
            let mut next = Vec::with_capacity(dist.len() * self.alphabet);
            for (code, d) in dist.iter().enumerate() {
                let v = &vertices[self.choices[k][code]];
                for w in 0..self.alphabet {
                    next.push(d * v.get(w));
                }
            }
            dist = next;
        }
        dist
    }
}

fn check_vertices(vertices: &[ProbVector]) -> Result<usize> {
    let first = vertices
        .first()
        .ok_or_else(|| Error::invalid("adversary vertices", "empty set"))?;
    if let Some(bad) = vertices.iter().find(|v| v.len() != first.len()) {
        return Err(Error::dims(first.len(), bad.len()));
    }
    Ok(first.len())
}

fn string_count(alphabet: usize, n: usize) -> Result<usize> {
    let size = alphabet.checked_pow(n as u32).unwrap_or(usize::MAX);
    if size > MAX_HISTORIES {
        return Err(Error::SizeLimit { what: "sample strings", size, limit: MAX_HISTORIES });
    }
    Ok(size)
}

/// `sup` over adaptive adversaries of the probability that the sample string
/// falls in the (randomized) region, and a deterministic adversary attaining it.
///
/// Acceptance is affine in each step's distribution, so choosing among the
/// vertices is enough even when the set is their convex hull.
pub fn adversary_best_response(
    test_region: &TestOperator,
    q_vertices: &[ProbVector],
    n: usize,
) -> Result<(f64, AdversaryPolicy)> {
    let alphabet = check_vertices(q_vertices)?;
    let size = string_count(alphabet, n)?;
    let region = test_region
        .as_classical()
        .ok_or_else(|| Error::KindMismatch("adversarial regions are classical".into()))?;
    if region.len() != size {
        return Err(Error::dims(size, region.len()));
    }
    let mut values = region.to_vec();
    let mut choices = vec![Vec::new(); n];
    for k in (0..n).rev() {
        let prefixes = alphabet.pow(k as u32);
        let mut current = Vec::with_capacity(prefixes);
        let mut chosen = Vec::with_capacity(prefixes);
        for code in 0..prefixes {
            let children = &values[code * alphabet..(code + 1) * alphabet];
            let mut best = (f64::NEG_INFINITY, 0);
            for (i, v) in q_vertices.iter().enumerate() {
                let p: f64 = v.iter().zip(children).map(|(a, b)| a * b).sum();
                if p > best.0 + 1e-15 {
                    best = (p, i);
                }
            }
            current.push(best.0);
            chosen.push(best.1);
        }
        values = current;
        choices[k] = chosen;
    }
    Ok((values[0], AdversaryPolicy { horizon: n, alphabet, choices }))
}

/// `min over the hull of KL(t ‖ Σ aᵢ pᵢ)`.
pub(crate) fn kl_to_hull(t: &ProbVector, vertices: &[ProbVector]) -> Result<f64> {
    if vertices.len() == 1 {
        return Ok(kl_divergence(t, &vertices[0])?.value());
    }
    let covered = (0..t.len()).all(|w| t.get(w) <= 0.0 || vertices.iter().any(|v| v.get(w) > 0.0));
    if !covered {
        return Ok(f64::INFINITY);
    }
    let f = |a: &[f64]| -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let mut grad = vec![0.0; a.len()];
        for w in 0..t.len() {
            let tw = t.get(w);
            if tw <= 0.0 {
                continue;
            }
            let m: f64 = a.iter().zip(vertices).map(|(ai, v)| ai * v.get(w)).sum();
            if m <= 0.0 {
                return (f64::INFINITY, grad);
            }
            value += tw * (tw / m).log2();
            for (g, v) in grad.iter_mut().zip(vertices) {
                *g -= tw * v.get(w) / m * std::f64::consts::LOG2_E;
            }
        }
        (value, grad)
    };
    let domain = SimplexProductDomain::new(vec![vertices.len()])?;
    let report = minimize_convex_on_simplices(&f, &domain, &ConvexOptions::default())?;
    Ok(report.value.max(0.0))
}

/// Empirical type (as counts) of each sample string.
fn type_of(mut code: usize, alphabet: usize, n: usize) -> Vec<u32> {
    let mut counts = vec![0u32; alphabet];
    for _ in 0..n {
        counts[code % alphabet] += 1;
        code /= alphabet;
    }
    counts
}

/// A method-of-types test for adversarial hypotheses: accept the null when the
/// empirical type lies within a KL radius of the null hull.
///
/// The radius is the smallest one whose worst-case type-I error over adaptive
/// null adversaries is at most `ε`. The region depends only on the null set;
/// the alternative set is checked for shape only.
pub fn universal_adversarial_test(
    p_vertices: &[ProbVector],
    q_vertices: &[ProbVector],
    n: usize,
    eps: f64,
) -> Result<TestOperator> {
    check_eps(eps)?;
    let alphabet = check_vertices(p_vertices)?;
    if check_vertices(q_vertices)? != alphabet {
        return Err(Error::dims(alphabet, q_vertices[0].len()));
    }
    let size = string_count(alphabet, n)?;
    // Distances per type, shared by all strings of that type.
    let mut by_type: std::collections::BTreeMap<Vec<u32>, f64> = std::collections::BTreeMap::new();
    let types: Vec<Vec<u32>> = (0..size).map(|c| type_of(c, alphabet, n)).collect();
    for ty in &types {
        if !by_type.contains_key(ty) {
            let t = ProbVector::normalized(ty.iter().map(|&c| c as f64).collect())?;
            by_type.insert(ty.clone(), kl_to_hull(&t, p_vertices)?);
        }
    }
    let mut radii: Vec<f64> = by_type.values().copied().filter(|d| d.is_finite()).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let region = |r: f64| -> Vec<f64> {
        types.iter().map(|ty| if by_type[ty] <= r { 1.0 } else { 0.0 }).collect()
    };
    let type_one = |r: f64| -> Result<f64> {
        let reject: Vec<f64> = region(r).iter().map(|m| 1.0 - m).collect();
        Ok(adversary_best_response(&TestOperator::Classical(reject), p_vertices, n)?.0)
    };
    // The type-I error falls as the radius grows; find the first feasible one.
    let (mut lo, mut hi) = (0usize, radii.len() - 1);
    if type_one(radii[lo])? <= eps + 1e-12 {
        hi = lo;
    }
    while hi > lo + 1 {
        let mid = (lo + hi) / 2;
        if type_one(radii[mid])? <= eps + 1e-12 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(TestOperator::Classical(region(radii[hi])))
}
