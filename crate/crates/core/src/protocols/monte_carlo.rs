//! Sampling estimates for horizons beyond exact evaluation.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::Serialize;

use crate::divergences::check_eps;
use crate::error::{Error, Result};
use crate::model::ClassicalChannel;
use crate::optim::restart_rng;

use super::strategies::{AdaptivePolicy, FinalTest};
use super::{FamilyKind, HypothesisFamily};

pub const DEFAULT_SAMPLES: usize = 1_000_000;
/// Normal quantile for 95% intervals.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_ci: (f64, f64),
    pub beta_ci: (f64, f64),
    pub samples: usize,
    /// Acceptance threshold on the likelihood-ratio statistic, when calibrated.
    pub threshold: Option<f64>,
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    if successes == 0 || successes == trials {
        // The interval is closed at the observed boundary.
        let (lo, hi) = wilson_bounds(successes, trials);
        return if successes == 0 { (0.0, hi) } else { (lo, 1.0) };
    }
    wilson_bounds(successes, trials)
}

fn wilson_bounds(successes: usize, trials: usize) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

struct Sampler<'a> {
    policy: &'a AdaptivePolicy,
    inputs: Vec<Option<WeightedIndex<f64>>>,
    ny: usize,
}

impl<'a> Sampler<'a> {
    fn new(policy: &'a AdaptivePolicy) -> Self {
        let inputs = (0..policy.num_states())
            .map(|s| WeightedIndex::new(policy.input(s).iter()).ok())
            .collect();
        Sampler { policy, inputs, ny: policy.num_outputs() }
    }

    /// Cell counts of one run against a fixed channel.
    fn run(&self, outputs: &[WeightedIndex<f64>], rng: &mut impl rand::Rng) -> Vec<u32> {
        let nx = outputs.len();
        let mut counts = vec![0u32; nx * self.ny];
        let mut state = self.policy.initial();
        for _ in 0..self.policy.horizon() {
            let x = self.inputs[state].as_ref().unwrap().sample(rng);
            let y = outputs[x].sample(rng);
            let cell = x * self.ny + y;
            counts[cell] += 1;
            state = self.policy.next_state(state, cell);
        }
        counts
    }
}

fn output_samplers(ch: &ClassicalChannel) -> Result<Vec<WeightedIndex<f64>>> {
    ch.rows()
        .iter()
        .map(|r| WeightedIndex::new(r.iter()).map_err(|e| Error::invalid("channel row", e.to_string())))
        .collect()
}

fn log_likelihood(ch: &ClassicalChannel, counts: &[u32], ny: usize) -> f64 {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(cell, &n)| n as f64 * ch.prob(cell / ny, cell % ny).ln())
        .sum()
}

/// Monte Carlo estimate of the worst-case errors of an adaptive strategy
/// against i.i.d. families, `samples` runs per vertex channel.
///
/// Run `k` against vertex `i` of side `σ` uses the RNG stream `k` of seed
/// `seed + 2·i + σ`. A fixed final test is applied as given. With
/// [`FinalTest::Optimal`] the test accepts when the generalized likelihood
/// ratio `max_S log L − max_T log L` reaches a threshold, set to the smallest
/// per-vertex `ε`-quantile of the null runs, so the reported type-I error is
/// at most `ε` on the samples used for calibration.
pub fn monte_carlo_adaptive(
    policy: &AdaptivePolicy,
    s: &HypothesisFamily,
    t: &HypothesisFamily,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloReport> {
    crate::exponents::check_compatible(s.base(), t.base())?;
    if s.kind() != FamilyKind::Iid || t.kind() != FamilyKind::Iid {
        return Err(Error::Precondition("Monte Carlo estimates cover i.i.d. families only".into()));
    }
    if samples == 0 {
        return Err(Error::invalid("samples", "must be positive"));
    }
    let sv = s.base().classical_vertices()?;
    let tv = t.base().classical_vertices()?;
    let ny = policy.num_outputs();
    if ny != s.base().out_dim() || policy.input(0).len() != s.base().in_dim() {
        return Err(Error::dims(s.base().out_dim(), ny));
    }
    let sampler = Sampler::new(policy);
    let simulate = |ch: &ClassicalChannel, stream_seed: u64| -> Result<Vec<Vec<u32>>> {
        let outputs = output_samplers(ch)?;
        Ok((0..samples)
            .map(|k| sampler.run(&outputs, &mut restart_rng(stream_seed, k)))
            .collect())
    };
    let null_runs: Vec<Vec<Vec<u32>>> = sv
        .iter()
        .enumerate()
        .map(|(i, ch)| simulate(ch, seed.wrapping_add(2 * i as u64)))
        .collect::<Result<_>>()?;
    let alt_runs: Vec<Vec<Vec<u32>>> = tv
        .iter()
        .enumerate()
        .map(|(j, ch)| simulate(ch, seed.wrapping_add(2 * j as u64 + 1)))
        .collect::<Result<_>>()?;

    let (accept, threshold): (Box<dyn Fn(&[u32]) -> bool>, Option<f64>) = match policy.final_test() {
        FinalTest::Fixed(f) => {
            // A randomized test is applied through its acceptance probability's expectation.
            let f = f.clone();
            (Box::new(move |c: &[u32]| f(c) >= 0.5), None)
        }
        FinalTest::Optimal { eps } => {
            check_eps(*eps)?;
            let stat = |c: &[u32]| -> f64 {
                let ls = sv.iter().map(|v| log_likelihood(v, c, ny)).fold(f64::NEG_INFINITY, f64::max);
                let lt = tv.iter().map(|v| log_likelihood(v, c, ny)).fold(f64::NEG_INFINITY, f64::max);
                if ls == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else if lt == f64::NEG_INFINITY {
                    f64::INFINITY
                } else {
                    ls - lt
                }
            };
            let mut tau = f64::INFINITY;
            for runs in &null_runs {
                let mut values: Vec<f64> = runs.iter().map(|c| stat(c)).collect();
                values.sort_by(f64::total_cmp);
                // Rejecting below the ⌊ε·m⌋-th order statistic keeps the empirical error ≤ ε.
                let k = ((*eps * samples as f64).floor() as usize).min(samples - 1);
                tau = tau.min(values[k]);
            }
            let tau_copy = tau;
            (Box::new(move |c: &[u32]| stat(c) >= tau_copy), Some(tau))
        }
    };
    let worst = |runs: &[Vec<Vec<u32>>], count: &dyn Fn(&[u32]) -> bool| -> (f64, (f64, f64)) {
        runs.iter()
            .map(|r| {
                let hits = r.iter().filter(|c| count(c)).count();
                (hits as f64 / samples as f64, wilson_interval(hits, samples))
            })
            .fold((f64::NEG_INFINITY, (0.0, 0.0)), |a, b| if b.0 > a.0 { b } else { a })
    };
    let (alpha, alpha_ci) = worst(&null_runs, &|c| !accept(c));
    let (beta, beta_ci) = worst(&alt_runs, &|c| accept(c));
    Ok(MonteCarloReport { alpha, beta, alpha_ci, beta_ci, samples, threshold })
}
