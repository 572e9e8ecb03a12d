//! Exact evaluation of parallel and adaptive strategies.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::divergences::{check_eps, ExtReal};
use crate::error::{Error, Result};
use crate::exponents::composite::solve_composite;
use crate::model::{ClassicalChannel, ProbVector};

use super::{ErrorPair, FamilyKind, HypothesisFamily};

/// Largest number of history classes (or explicit outcomes) evaluated exactly.
pub const MAX_CLASSES: usize = 1 << 16;
/// Largest explicit outcome alphabet for arbitrarily varying parallel evaluation.
const MAX_EXPLICIT: usize = 4096;

/// Count of each (input, output) cell, flattened as `x · |Y| + y`.
type Counts = Vec<u32>;

/// Acceptance rule applied after the last channel use.
#[derive(Clone)]
pub enum FinalTest {
    /// The optimal composite test with type-I error at most `eps` against the
    /// i.i.d. vertex channels.
    Optimal { eps: f64 },
    /// Acceptance probability as a function of the cell counts.
    Fixed(Arc<dyn Fn(&[u32]) -> f64 + Send + Sync>),
}

impl fmt::Debug for FinalTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FinalTest::Optimal { eps } => write!(f, "Optimal {{ eps: {eps} }}"),
            FinalTest::Fixed(_) => write!(f, "Fixed(..)"),
        }
    }
}

/// A finite-state adaptive strategy with classical memory.
///
/// Each state prescribes an input distribution; after the channel returns
/// `y` on input `x`, the state moves to `next[state][x·|Y| + y]`.
#[derive(Debug, Clone)]
pub struct AdaptivePolicy {
    horizon: usize,
    num_outputs: usize,
    inputs: Vec<ProbVector>,
    next: Vec<Vec<usize>>,
    initial: usize,
    final_test: FinalTest,
}

impl AdaptivePolicy {
    pub fn new(
        horizon: usize,
        num_outputs: usize,
        inputs: Vec<ProbVector>,
        next: Vec<Vec<usize>>,
        initial: usize,
        final_test: FinalTest,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        let states = inputs.len();
        if states == 0 || initial >= states || next.len() != states {
            return Err(Error::invalid("policy", "state tables are inconsistent"));
        }
        let nx = inputs[0].len();
        for (s, row) in next.iter().enumerate() {
            if inputs[s].len() != nx {
                return Err(Error::dims(nx, inputs[s].len()));
            }
            if row.len() != nx * num_outputs {
                return Err(Error::dims(nx * num_outputs, row.len()));
            }
            if let Some(bad) = row.iter().find(|&&t| t >= states) {
                return Err(Error::invalid("policy", format!("transition to unknown state {bad}")));
            }
        }
        if let FinalTest::Optimal { eps } = final_test {
            check_eps(eps)?;
        }
        Ok(AdaptivePolicy { horizon, num_outputs, inputs, next, initial, final_test })
    }

    /// The same input distribution in every round.
    pub fn constant(horizon: usize, input: ProbVector, num_outputs: usize, final_test: FinalTest) -> Result<Self> {
        let cells = input.len() * num_outputs;
        Self::new(horizon, num_outputs, vec![input], vec![vec![0; cells]], 0, final_test)
    }

    /// A fixed input schedule, one distribution per round: a parallel strategy.
    pub fn schedule(inputs: Vec<ProbVector>, num_outputs: usize, final_test: FinalTest) -> Result<Self> {
        let n = inputs.len();
        let nx = inputs.first().map_or(0, ProbVector::len);
        let next = (0..n).map(|k| vec![(k + 1).min(n - 1); nx * num_outputs]).collect();
        Self::new(n, num_outputs, inputs, next, 0, final_test)
    }

    /// A policy given as a map from output histories to input distributions.
    /// Every history shorter than the horizon becomes a state.
    pub fn from_history_map(
        horizon: usize,
        num_outputs: usize,
        input_map: impl Fn(&[usize]) -> ProbVector,
        final_test: FinalTest,
    ) -> Result<Self> {
        let total: usize = (0..horizon).map(|k| num_outputs.pow(k as u32)).sum();
        if total > super::MAX_HISTORIES {
            return Err(Error::SizeLimit { what: "policy histories", size: total, limit: super::MAX_HISTORIES });
        }
        // States are numbered level by level; history h at depth k has index
        // offset(k) + code(h).
        let offset = |k: usize| -> usize { (0..k).map(|j| num_outputs.pow(j as u32)).sum() };
        let mut inputs = Vec::with_capacity(total);
        let mut next = Vec::with_capacity(total);
        let mut nx = None;
        for k in 0..horizon {
            for code in 0..num_outputs.pow(k as u32) {
                let mut hist = vec![0; k];
                let mut c = code;
                for slot in hist.iter_mut().rev() {
                    *slot = c % num_outputs;
                    c /= num_outputs;
                }
                let input = input_map(&hist);
                let width = *nx.get_or_insert(input.len());
                let row = (0..width * num_outputs)
                    .map(|cell| {
                        let y = cell % num_outputs;
                        if k + 1 < horizon {
                            offset(k + 1) + code * num_outputs + y
                        } else {
                            offset(k) + code
                        }
                    })
                    .collect();
                inputs.push(input);
                next.push(row);
            }
        }
        Self::new(horizon, num_outputs, inputs, next, 0, final_test)
    }

    /// Input 0 first, then the second output bit of the first use in every
    /// later round. Outputs are two bits indexed `2·b₁ + b₂`.
    pub fn second_bit_feedback(horizon: usize, eps: f64) -> Self {
        let inputs = vec![ProbVector::point(2, 0), ProbVector::point(2, 0), ProbVector::point(2, 1)];
        let first: Vec<usize> = (0..8).map(|cell| 1 + (cell % 4) % 2).collect();
        let next = vec![first, vec![1; 8], vec![2; 8]];
        Self::new(horizon.max(1), 4, inputs, next, 0, FinalTest::Optimal { eps }).unwrap()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.inputs.len()
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::new(horizon, self.num_outputs, self.inputs.clone(), self.next.clone(), self.initial, self.final_test.clone())
    }

    pub fn with_final_test(&self, final_test: FinalTest) -> Result<Self> {
        Self::new(self.horizon, self.num_outputs, self.inputs.clone(), self.next.clone(), self.initial, final_test)
    }

    pub(crate) fn input(&self, state: usize) -> &ProbVector {
        &self.inputs[state]
    }

    pub(crate) fn next_state(&self, state: usize, cell: usize) -> usize {
        self.next[state][cell]
    }

    pub(crate) fn initial(&self) -> usize {
        self.initial
    }

    pub(crate) fn final_test(&self) -> &FinalTest {
        &self.final_test
    }

    pub(crate) fn num_outputs(&self) -> usize {
        self.num_outputs
    }
}

/// One side of the evaluation: vertex channels and how they may vary.
struct Side<'a> {
    vertices: Vec<&'a ClassicalChannel>,
    varying: bool,
}

fn side(fam: &HypothesisFamily) -> Result<Side<'_>> {
    let base = fam.base();
    if !base.is_classical() {
        return Err(Error::KindMismatch("strategy evaluation needs classical channels".into()));
    }
    let varying = match fam.kind() {
        FamilyKind::Iid => {
            if base.take_hull() {
                return Err(Error::Precondition(
                    "i.i.d. evaluation over a hull is not attained at vertices; pass the vertex set".into(),
                ));
            }
            false
        }
        FamilyKind::ArbitrarilyVarying => true,
        FamilyKind::SlightlyVarying { .. } => {
            return Err(Error::Precondition("slightly varying families only support membership checks".into()))
        }
    };
    Ok(Side { vertices: base.classical_vertices()?, varying })
}

fn check_shapes(s: &HypothesisFamily, t: &HypothesisFamily) -> Result<()> {
    crate::exponents::check_compatible(s.base(), t.base())
}

/// Cells that some vertex of either side can produce.
fn live_cells(s: &Side, t: &Side, nx: usize, ny: usize) -> Vec<bool> {
    (0..nx * ny)
        .map(|cell| s.vertices.iter().chain(&t.vertices).any(|v| v.prob(cell / ny, cell % ny) > 0.0))
        .collect()
}

/// Reachable (state, counts) pairs per round with their policy weight
/// `Σ_h Π π(x_k | s_k)` over the histories in each class.
type Layer = HashMap<(usize, Counts), f64>;

fn forward_layers(policy: &AdaptivePolicy, live: &[bool]) -> Result<Vec<Layer>> {
    let ny = policy.num_outputs();
    let cells = live.len();
    let mut layers = Vec::with_capacity(policy.horizon() + 1);
    layers.push(HashMap::from([((policy.initial(), vec![0u32; cells]), 1.0)]));
    for _ in 0..policy.horizon() {
        let mut next: Layer = HashMap::new();
        for ((state, counts), &w) in layers.last().unwrap() {
            for (x, px) in policy.input(*state).iter().enumerate() {
                if px <= 0.0 {
                    continue;
                }
                for y in 0..ny {
                    let cell = x * ny + y;
                    if !live[cell] {
                        continue;
                    }
                    let mut c = counts.clone();
                    c[cell] += 1;
                    *next.entry((policy.next_state(*state, cell), c)).or_insert(0.0) += w * px;
                }
            }
        }
        if next.len() > MAX_CLASSES {
            return Err(Error::SizeLimit { what: "history classes", size: next.len(), limit: MAX_CLASSES });
        }
        layers.push(next);
    }
    Ok(layers)
}

/// `Π V(x, y)^{N(x,y)}` over cells, zero if a used cell is impossible.
fn likelihood(v: &ClassicalChannel, counts: &[u32], ny: usize) -> f64 {
    let mut log = 0.0;
    for (cell, &n) in counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let p = v.prob(cell / ny, cell % ny);
        if p <= 0.0 {
            return 0.0;
        }
        log += n as f64 * p.ln();
    }
    log.exp()
}

/// Acceptance probability per final count class.
fn final_tests(
    test: &FinalTest,
    classes: &[(Counts, f64)],
    s: &Side,
    t: &Side,
    ny: usize,
) -> Result<Vec<f64>> {
    match test {
        FinalTest::Fixed(f) => Ok(classes.iter().map(|(c, _)| f(c).clamp(0.0, 1.0)).collect()),
        FinalTest::Optimal { eps } => {
            let dist = |v: &ClassicalChannel| -> Vec<f64> { classes.iter().map(|(c, w)| w * likelihood(v, c, ny)).collect() };
            let sd: Vec<Vec<f64>> = s.vertices.iter().map(|v| dist(v)).collect();
            let td: Vec<Vec<f64>> = t.vertices.iter().map(|v| dist(v)).collect();
            let sr: Vec<&[f64]> = sd.iter().map(Vec::as_slice).collect();
            let tr: Vec<&[f64]> = td.iter().map(Vec::as_slice).collect();
            Ok(solve_composite(&sr, &tr, *eps)?.test)
        }
    }
}

/// Worst case over an adaptive adversary of the probability of `payoff`,
/// by backward induction over the layers.
fn adversarial_value(
    policy: &AdaptivePolicy,
    layers: &[Layer],
    live: &[bool],
    vertices: &[&ClassicalChannel],
    payoff: &HashMap<Counts, f64>,
) -> f64 {
    let ny = policy.num_outputs();
    let n = policy.horizon();
    let mut values: HashMap<(usize, Counts), f64> =
        layers[n].keys().map(|k| (k.clone(), payoff[&k.1])).collect();
    for k in (0..n).rev() {
        let mut current = HashMap::with_capacity(layers[k].len());
        for (state, counts) in layers[k].keys() {
            let mut best = f64::NEG_INFINITY;
            for v in vertices {
                let mut total = 0.0;
                for (x, px) in policy.input(*state).iter().enumerate() {
                    if px <= 0.0 {
                        continue;
                    }
                    for y in 0..ny {
                        let cell = x * ny + y;
                        let p = v.prob(x, y);
                        if !live[cell] || p <= 0.0 {
                            continue;
                        }
                        let mut c = counts.clone();
                        c[cell] += 1;
                        total += px * p * values[&(policy.next_state(*state, cell), c)];
                    }
                }
                best = best.max(total);
            }
            current.insert((*state, counts.clone()), best);
        }
        values = current;
    }
    values[&(policy.initial(), vec![0; live.len()])]
}

/// Worst-case errors of an adaptive strategy.
///
/// For i.i.d. families the worst case is over the vertex channels. For
/// arbitrarily varying families it is over adaptive adversaries that choose
/// the next vertex after seeing the history, computed by backward induction.
/// With [`FinalTest::Optimal`] the test is optimized against the i.i.d. vertex
/// channels of both sides and then evaluated under the family's worst case.
pub fn evaluate_adaptive_strategy(
    policy: &AdaptivePolicy,
    s: &HypothesisFamily,
    t: &HypothesisFamily,
) -> Result<ErrorPair> {
    check_shapes(s, t)?;
    let (ss, ts) = (side(s)?, side(t)?);
    let (nx, ny) = (s.base().in_dim(), s.base().out_dim());
    if policy.input(0).len() != nx {
        return Err(Error::dims(nx, policy.input(0).len()));
    }
    if policy.num_outputs() != ny {
        return Err(Error::dims(ny, policy.num_outputs()));
    }
    let live = live_cells(&ss, &ts, nx, ny);
    let layers = forward_layers(policy, &live)?;
    let mut merged: BTreeMap<Counts, f64> = BTreeMap::new();
    for ((_, counts), w) in &layers[policy.horizon()] {
        *merged.entry(counts.clone()).or_insert(0.0) += w;
    }
    let classes: Vec<(Counts, f64)> = merged.into_iter().collect();
    let test = final_tests(policy.final_test(), &classes, &ss, &ts, ny)?;

    let side_worst = |side: &Side, accept_weight: f64, reject_weight: f64| -> (f64, String) {
        // accept_weight·M + reject_weight·(1 − M) summed over classes.
        if side.varying {
            let payoff: HashMap<Counts, f64> = classes
                .iter()
                .zip(&test)
                .map(|((c, _), m)| (c.clone(), accept_weight * m + reject_weight * (1.0 - m)))
                .collect();
            let v = adversarial_value(policy, &layers, &live, &side.vertices, &payoff);
            (v, "adaptive adversary".to_string())
        } else {
            let mut best = (f64::NEG_INFINITY, 0);
            for (i, v) in side.vertices.iter().enumerate() {
                let p: f64 = classes
                    .iter()
                    .zip(&test)
                    .map(|((c, w), m)| w * likelihood(v, c, ny) * (accept_weight * m + reject_weight * (1.0 - m)))
                    .sum();
                if p > best.0 {
                    best = (p, i);
                }
            }
            (best.0, format!("vertex {}", best.1))
        }
    };
    let (alpha, aw) = side_worst(&ss, 0.0, 1.0);
    let (beta, bw) = side_worst(&ts, 1.0, 0.0);
    Ok(ErrorPair {
        alpha: alpha.clamp(0.0, 1.0),
        beta: beta.clamp(0.0, 1.0),
        worst_case_witness: format!("null: {aw}; alternative: {bw}"),
    })
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// All ways to split `total` items over `parts` cells.
fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Rounds sharing one input distribution.
struct CopyGroup {
    input: ProbVector,
    copies: u32,
    /// Observed (input, output) cells that the input and some vertex allow.
    cells: Vec<(usize, usize)>,
}

fn copy_groups(inputs: &[ProbVector], live: &[bool], ny: usize) -> Vec<CopyGroup> {
    let mut groups: Vec<CopyGroup> = Vec::new();
    for nu in inputs {
        if let Some(g) = groups.iter_mut().find(|g| g.input == *nu) {
            g.copies += 1;
            continue;
        }
        let cells = (0..live.len())
            .filter(|&c| live[c] && nu.get(c / ny) > 0.0)
            .map(|c| (c / ny, c % ny))
            .collect();
        groups.push(CopyGroup { input: nu.clone(), copies: 1, cells });
    }
    groups
}

/// Log-probability of one group's count vector under one vertex.
fn group_log_prob(g: &CopyGroup, counts: &[u32], v: &ClassicalChannel, lnf: &[f64]) -> f64 {
    let mut log = lnf[g.copies as usize];
    for (&(x, y), &n) in g.cells.iter().zip(counts) {
        if n == 0 {
            continue;
        }
        let p = g.input.get(x) * v.prob(x, y);
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        log += n as f64 * p.ln() - lnf[n as usize];
    }
    log
}

/// Worst-case errors and exponent `−(1/n) log₂ β` of the optimal test for a
/// parallel strategy feeding `inputs[k]` (or `inputs[0]` to every copy) into
/// `n` channel uses.
///
/// For i.i.d. families the output sets are the vertex channels' product
/// distributions, grouped by type class. For arbitrarily varying families the
/// output sets hold every sequence of vertices, written out explicitly.
pub fn evaluate_parallel_strategy(
    s: &HypothesisFamily,
    t: &HypothesisFamily,
    inputs: &[ProbVector],
    n: usize,
    eps: f64,
) -> Result<(ErrorPair, ExtReal)> {
    check_shapes(s, t)?;
    check_eps(eps)?;
    let (ss, ts) = (side(s)?, side(t)?);
    let (nx, ny) = (s.base().in_dim(), s.base().out_dim());
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let inputs: Vec<ProbVector> = match inputs.len() {
        1 => vec![inputs[0].clone(); n],
        len if len == n => inputs.to_vec(),
        len => return Err(Error::dims(n, len)),
    };
    if let Some(bad) = inputs.iter().find(|p| p.len() != nx) {
        return Err(Error::dims(nx, bad.len()));
    }
    let live = live_cells(&ss, &ts, nx, ny);
    let (sd, td, labels) = if ss.varying || ts.varying {
        explicit_outputs(&ss, &ts, &inputs, &live, ny)?
    } else {
        type_class_outputs(&ss, &ts, &inputs, &live, ny)?
    };
    let sr: Vec<&[f64]> = sd.iter().map(Vec::as_slice).collect();
    let tr: Vec<&[f64]> = td.iter().map(Vec::as_slice).collect();
    let r = solve_composite(&sr, &tr, eps)?;
    let accept = |p: &[f64]| p.iter().zip(&r.test).map(|(a, b)| a * b).sum::<f64>();
    let worst = |d: &[Vec<f64>], f: &dyn Fn(&[f64]) -> f64| {
        d.iter().enumerate().map(|(i, p)| (f(p), i)).fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
    };
    let (alpha, ia) = worst(&sd, &|p| 1.0 - accept(p));
    let (beta, ib) = worst(&td, &|p| accept(p));
    let beta = if r.beta == 0.0 { 0.0 } else { beta.clamp(0.0, 1.0) };
    let pair = ErrorPair {
        alpha: alpha.clamp(0.0, 1.0),
        beta,
        worst_case_witness: format!("null: {}; alternative: {}", labels.0[ia], labels.1[ib]),
    };
    let exponent = pair.exponent(n);
    Ok((pair, exponent))
}

type Outputs = (Vec<Vec<f64>>, Vec<Vec<f64>>, (Vec<String>, Vec<String>));

fn type_class_outputs(s: &Side, t: &Side, inputs: &[ProbVector], live: &[bool], ny: usize) -> Result<Outputs> {
    let groups = copy_groups(inputs, live, ny);
    let lnf = ln_factorials(inputs.len());
    let all: Vec<&ClassicalChannel> = s.vertices.iter().chain(&t.vertices).copied().collect();
    // Per group, the count vectors some vertex can produce, with their log-probabilities.
    let mut per_group: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut size = 1usize;
    for g in &groups {
        let mut logs = Vec::new();
        for c in compositions(g.copies, g.cells.len().max(1)) {
            if g.cells.is_empty() {
                continue;
            }
            let l: Vec<f64> = all.iter().map(|v| group_log_prob(g, &c, v, &lnf)).collect();
            if l.iter().any(|x| x.is_finite()) {
                logs.push(l);
            }
        }
        size = size.saturating_mul(logs.len());
        per_group.push(logs);
    }
    if size > MAX_CLASSES {
        return Err(Error::SizeLimit { what: "type classes", size, limit: MAX_CLASSES });
    }
    // Cartesian product over groups, dropping classes no vertex can produce.
    let mut classes: Vec<Vec<f64>> = vec![vec![0.0; all.len()]];
    for logs in &per_group {
        let mut next = Vec::with_capacity(classes.len() * logs.len());
        for acc in &classes {
            for l in logs {
                let sum: Vec<f64> = acc.iter().zip(l).map(|(a, b)| a + b).collect();
                if sum.iter().any(|x| x.is_finite()) {
                    next.push(sum);
                }
            }
        }
        classes = next;
    }
    let column = |i: usize| -> Vec<f64> { classes.iter().map(|c| c[i].exp()).collect() };
    let ns = s.vertices.len();
    let sd = (0..ns).map(column).collect();
    let td = (ns..all.len()).map(column).collect();
    let labels = (
        (0..ns).map(|i| format!("vertex {i}")).collect(),
        (0..t.vertices.len()).map(|j| format!("vertex {j}")).collect(),
    );
    Ok((sd, td, labels))
}

/// Product distributions over the explicit outcome alphabet for every vertex
/// sequence (varying sides) or every repeated vertex (i.i.d. sides).
fn explicit_outputs(s: &Side, t: &Side, inputs: &[ProbVector], live: &[bool], ny: usize) -> Result<Outputs> {
    let groups = copy_groups(inputs, live, ny);
    let cells_per_copy: Vec<&[(usize, usize)]> = inputs
        .iter()
        .map(|nu| groups.iter().find(|g| g.input == *nu).unwrap().cells.as_slice())
        .collect();
    let outcomes = cells_per_copy.iter().fold(1usize, |a, c| a.saturating_mul(c.len()));
    if outcomes > MAX_EXPLICIT {
        return Err(Error::SizeLimit { what: "parallel outcome alphabet", size: outcomes, limit: MAX_EXPLICIT });
    }
    let n = inputs.len();
    let sequences = |side: &Side| -> Result<Vec<Vec<usize>>> {
        let k = side.vertices.len();
        if !side.varying {
            return Ok((0..k).map(|i| vec![i; n]).collect());
        }
        let count = k.saturating_pow(n as u32);
        if count > MAX_EXPLICIT {
            return Err(Error::SizeLimit { what: "vertex sequences", size: count, limit: MAX_EXPLICIT });
        }
        Ok((0..count)
            .map(|mut code| {
                let mut seq = vec![0; n];
                for slot in seq.iter_mut().rev() {
                    *slot = code % k;
                    code /= k;
                }
                seq
            })
            .collect())
    };
    let product = |side: &Side, seq: &[usize]| -> Vec<f64> {
        let mut dist = vec![1.0];
        for (k, cells) in cells_per_copy.iter().enumerate() {
            let v = side.vertices[seq[k]];
            let mut next = Vec::with_capacity(dist.len() * cells.len());
            for d in &dist {
                for &(x, y) in cells.iter() {
                    next.push(d * inputs[k].get(x) * v.prob(x, y));
                }
            }
            dist = next;
        }
        dist
    };
    let label = |seq: &[usize]| format!("sequence {seq:?}");
    let (sq, tq) = (sequences(s)?, sequences(t)?);
    Ok((
        sq.iter().map(|q| product(s, q)).collect(),
        tq.iter().map(|q| product(t, q)).collect(),
        (sq.iter().map(|q| label(q)).collect(), tq.iter().map(|q| label(q)).collect()),
    ))
}
