//! One function per subcommand, each returning a JSON report and a CSV table.

use std::collections::BTreeMap;

use serde_json::Value;
use sha2::{Digest, Sha256};

use super::config::{
    from_value_at, AdaptiveSpec, DivergenceName, FamilyKindName, HypothesisBlock, PolicySpec, ProblemConfig, Solver,
    Strategy, TestSpec,
};
use super::output::{cell, ext, ext_cell, num, Obj};
use super::CliError;
use crate::channel_div::{
    classical_channel_divergence_witness, quantum_channel_divergence_lower, regularized_bracket, Witness,
    REGULARIZATION_DIM_LIMIT,
};
use crate::divergences::{
    dh_classical, dh_quantum, dmax, kl_divergence, measured_relative_entropy_lower, quantum_relative_entropy, ExtReal,
    NpTest,
};
use crate::exponents::{
    convex_classical_exponent, level_n_hull_bracket_seeded, parallel_exponent_finite_classical, parallel_exponent_with_cap, worst_case_iid_exponent,
    worst_case_iid_exponent_seeded, ExponentReport, HypothesisSet,
};
use crate::model::{to_complex_rows, Channel, ProbVector, State, TestOperator};
use crate::optim::DEFAULT_RESTARTS;
use crate::protocols::{
    adversary_best_response, estimate_exponent, evaluate_adaptive_strategy, evaluate_parallel_strategy, example12,
    monte_carlo_adaptive, universal_adversarial_test, AdaptivePolicy,
    AdversaryPolicy, FamilyKind, FinalTest, HypothesisFamily, DEFAULT_EPS, DEFAULT_SAMPLES,
};
use crate::Error;

/// Output of a command before the reproducibility envelope is added.
pub struct Outcome {
    pub body: Value,
    pub csv: Vec<String>,
}

/// Histories of the adversary table shown in full.
pub const POLICY_DEPTH_SHOWN: usize = 4;

/// Default `n` range for simulations.
pub const DEFAULT_N_LIST: std::ops::RangeInclusive<usize> = 8..=16;

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::DimensionMismatch { .. } | Error::KindMismatch(_) => CliError::Dimension(e.to_string()),
            Error::Invalid { .. } | Error::NotHermitian(_) => CliError::Schema(e.to_string()),
            Error::Precondition(_) | Error::Infeasible | Error::Unbounded => CliError::Precondition(e.to_string()),
            Error::SizeLimit { .. } => CliError::SizeCap(e.to_string()),
        }
    }
}

fn require<'a, T>(field: &'a Option<T>, path: &str) -> Result<&'a T, CliError> {
    field.as_ref().ok_or_else(|| CliError::Schema(format!("{path}: required for this command")))
}

fn eps_of(c: &ProblemConfig) -> f64 {
    c.params.eps.unwrap_or(DEFAULT_EPS)
}

fn seed_of(c: &ProblemConfig) -> u64 {
    c.params.seed.unwrap_or(0)
}

fn restarts_of(c: &ProblemConfig) -> usize {
    c.params.restarts.unwrap_or(DEFAULT_RESTARTS)
}

fn states_at(values: &[Value], path: &str) -> Result<Vec<State>, CliError> {
    values.iter().enumerate().map(|(i, v)| from_value_at(v, &format!("{path}[{i}]"))).collect()
}

fn classical_state(state: State, path: &str) -> Result<ProbVector, CliError> {
    match state {
        State::Classical(p) => Ok(p),
        State::Quantum(_) => Err(CliError::Dimension(format!("{path}: expected a classical state"))),
    }
}

fn two<T>(mut items: Vec<T>, path: &str) -> Result<(T, T), CliError> {
    if items.len() != 2 {
        return Err(CliError::Schema(format!("{path}: expected exactly 2 entries, found {}", items.len())));
    }
    let b = items.pop().expect("two items");
    let a = items.pop().expect("two items");
    Ok((a, b))
}

fn hypothesis_set(block: &HypothesisBlock, path: &str) -> Result<HypothesisSet, CliError> {
    let vertices: Vec<Channel> = block
        .vertices
        .iter()
        .enumerate()
        .map(|(i, v)| from_value_at(v, &format!("{path}.vertices[{i}]")))
        .collect::<Result<_, _>>()?;
    Ok(HypothesisSet::new(vertices, block.take_hull)?)
}

fn family(block: &HypothesisBlock, path: &str) -> Result<HypothesisFamily, CliError> {
    let kind = match block.family_kind {
        FamilyKindName::Iid => FamilyKind::Iid,
        FamilyKindName::ArbitrarilyVarying => FamilyKind::ArbitrarilyVarying,
    };
    Ok(HypothesisFamily::new(hypothesis_set(block, path)?, kind)?)
}

fn state_fragment(p: &ProbVector) -> Value {
    serde_json::to_value(State::Classical(p.clone())).expect("state serializes")
}

fn test_fragment(test: &TestOperator) -> Value {
    match test {
        TestOperator::Classical(m) => Obj::new().set("region", m.iter().copied().map(num).collect::<Vec<_>>()).build(),
        TestOperator::Quantum(m) => Obj::new().set("operator", serde_json::to_value(to_complex_rows(m)).unwrap()).build(),
    }
}

fn np_certificate(np: &NpTest) -> Value {
    Obj::new()
        .set("threshold", num(np.threshold))
        .set("inner_fraction", num(np.inner_fraction))
        .set("achieved_alpha", num(np.achieved_alpha))
        .set("achieved_beta", num(np.achieved_beta))
        .set("test", test_fragment(&np.test))
        .build()
}

fn value_fields(obj: Obj, value: ExtReal) -> Obj {
    obj.set("value", ext(value)).set("infinite", value.is_infinite())
}

/// `-log₂ β / n`, infinite at `β = 0`.
fn exponent_of(beta: f64, n: usize) -> f64 {
    -beta.log2() / n as f64
}

pub fn divergence(c: &ProblemConfig, name: Option<DivergenceName>) -> Result<Outcome, CliError> {
    let name = match name.or(c.divergence) {
        Some(n) => n,
        None => return Err(CliError::Schema("config.divergence: required for this command".into())),
    };
    let (a, b) = two(states_at(require(&c.states, "config.states")?, "states")?, "states")?;
    let eps = eps_of(c);
    let (value, certificate) = match name {
        DivergenceName::Kl => {
            let (p, q) = (classical_state(a, "states[0]")?, classical_state(b, "states[1]")?);
            (kl_divergence(&p, &q)?, Value::Null)
        }
        DivergenceName::Quantum => (quantum_relative_entropy(&a.to_quantum(), &b.to_quantum())?, Value::Null),
        DivergenceName::Dmax => (dmax(&a.to_quantum(), &b.to_quantum())?, Value::Null),
        DivergenceName::Dh => {
            let (v, np) = match (&a, &b) {
                (State::Classical(p), State::Classical(q)) => dh_classical(p, q, eps)?,
                _ => dh_quantum(&a.to_quantum(), &b.to_quantum(), eps)?,
            };
            (v, np_certificate(&np))
        }
        DivergenceName::DmLower => {
            let (v, povm) = measured_relative_entropy_lower(&a.to_quantum(), &b.to_quantum(), restarts_of(c), seed_of(c))?;
            let elements: Vec<Value> =
                povm.elements().iter().map(|m| serde_json::to_value(to_complex_rows(m)).unwrap()).collect();
            (ExtReal::from_f64(v), Obj::new().set("povm", elements).build())
        }
    };
    let label = serde_json::to_value(name).expect("name serializes");
    let body = value_fields(Obj::new().set("divergence", label.clone()), value)
        .set("certificate", certificate)
        .build();
    let csv = vec!["divergence,value".into(), format!("{},{}", label.as_str().unwrap(), ext_cell(value))];
    Ok(Outcome { body, csv })
}

pub fn channel_div(c: &ProblemConfig) -> Result<Outcome, CliError> {
    let values = require(&c.channels, "config.channels")?;
    let channels: Vec<Channel> = values
        .iter()
        .enumerate()
        .map(|(i, v)| from_value_at(v, &format!("channels[{i}]")))
        .collect::<Result<_, _>>()?;
    let (e, f) = two(channels, "channels")?;
    let (lower, upper, input, per_n) = match (&e, &f) {
        (Channel::Classical(e), Channel::Classical(f)) => {
            let (v, x) = classical_channel_divergence_witness(e, f)?;
            let input = state_fragment(&ProbVector::point(e.input_size(), x));
            (v, v, input, BTreeMap::from([(1, v)]))
        }
        _ => {
            let (eq, fq) = (e.to_quantum(), f.to_quantum());
            let small = eq.in_dim().pow(2) * eq.out_dim().pow(2) <= REGULARIZATION_DIM_LIMIT;
            let report = if small {
                regularized_bracket(&eq, &fq, restarts_of(c), seed_of(c))?
            } else {
                quantum_channel_divergence_lower(&eq, &fq, restarts_of(c), seed_of(c))?
            };
            let input = match &report.witness {
                Witness::Quantum(rho) => serde_json::to_value(State::Quantum(rho.clone())).unwrap(),
                Witness::Classical(p) => state_fragment(p),
            };
            (report.lower, report.upper, input, report.per_n_values)
        }
    };
    let per_n: serde_json::Map<String, Value> = per_n.iter().map(|(k, v)| (k.to_string(), ext(*v))).collect();
    let body = value_fields(Obj::new(), lower)
        .set("lower", ext(lower))
        .set("upper", ext(upper))
        .set("certificate", Obj::new().set("input", input).build())
        .set("per_n", Value::Object(per_n))
        .build();
    let csv = vec!["value,lower,upper".into(), format!("{},{},{}", ext_cell(lower), ext_cell(lower), ext_cell(upper))];
    Ok(Outcome { body, csv })
}

fn exponent_body(solver: Solver, r: &ExponentReport) -> Value {
    let pairs: Vec<Value> = r.active_pairs.iter().map(|&(i, j)| Value::from(vec![i, j])).collect();
    let per_level: serde_json::Map<String, Value> = r.per_level.iter().map(|(k, v)| (k.to_string(), ext(*v))).collect();
    let pair = r.pair_certificate.as_ref().map_or(Value::Null, |p| {
        Obj::new()
            .set("null_weights", p.s_weights.iter().copied().map(num).collect::<Vec<_>>())
            .set("alternative_weights", p.t_weights.iter().copied().map(num).collect::<Vec<_>>())
            .build()
    });
    value_fields(Obj::new().set("solver", serde_json::to_value(solver).unwrap()), r.value)
        .set("lower", ext(r.lower))
        .set("upper", ext(r.upper))
        .set("duality_gap", num(r.duality_gap))
        .set("capped", r.capped)
        .set("input_certificate", r.input_certificate.as_ref().map_or(Value::Null, state_fragment))
        .set("pair_certificate", pair)
        .set("active_pairs", pairs)
        .set("per_level", Value::Object(per_level))
        .build()
}

pub fn exponent(c: &ProblemConfig, solver: Option<Solver>) -> Result<Outcome, CliError> {
    let solver = solver
        .or(c.solver)
        .ok_or_else(|| CliError::Schema("config.solver: required for this command".into()))?;
    let s = hypothesis_set(require(&c.null, "config.null")?, "null")?;
    let t = hypothesis_set(require(&c.alternative, "config.alternative")?, "alternative")?;
    let report = match solver {
        Solver::ParallelFinite => parallel_exponent_with_cap(&s, &t, c.params.cap.unwrap_or(crate::exponents::DEFAULT_CAP))?,
        Solver::Convex => convex_classical_exponent(&s, &t)?,
        Solver::IidBound => worst_case_iid_exponent_seeded(&s, &t, restarts_of(c), seed_of(c))?,
        Solver::LevelN => level_n_hull_bracket_seeded(&s, &t, c.params.n.unwrap_or(2), restarts_of(c), seed_of(c))?,
    };
    let instance = c.name.clone().unwrap_or_else(|| "0".into());
    let csv = vec![
        "instance,value,lower,upper".into(),
        format!("{instance},{},{},{}", ext_cell(report.value), ext_cell(report.lower), ext_cell(report.upper)),
    ];
    Ok(Outcome { body: exponent_body(solver, &report), csv })
}

/// One simulated `n`.
struct SimRow {
    n: usize,
    alpha: f64,
    beta: f64,
    ci: (f64, f64),
    method: &'static str,
}

enum Plan {
    Parallel(Vec<ProbVector>),
    Canonical,
    Constant(ProbVector),
    Schedule(Vec<ProbVector>),
}

fn cyclic(inputs: &[ProbVector], n: usize) -> Vec<ProbVector> {
    (0..n).map(|k| inputs[k % inputs.len()].clone()).collect()
}

fn classical_inputs(values: &[Value], path: &str) -> Result<Vec<ProbVector>, CliError> {
    if values.is_empty() {
        return Err(CliError::Schema(format!("{path}: at least one input is required")));
    }
    states_at(values, path)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| classical_state(s, &format!("{path}[{i}]")))
        .collect()
}

impl Plan {
    fn from_config(strategy: &Strategy) -> Result<Self, CliError> {
        Ok(match strategy {
            Strategy::Parallel(v) => Plan::Parallel(classical_inputs(v, "strategy.parallel")?),
            Strategy::Adaptive(AdaptiveSpec::Named(name)) if name == "example12-canonical" => Plan::Canonical,
            Strategy::Adaptive(AdaptiveSpec::Named(name)) => {
                return Err(CliError::Schema(format!("strategy.adaptive: unknown policy {name:?}")))
            }
            Strategy::Adaptive(AdaptiveSpec::Policy(PolicySpec::Constant(v))) => Plan::Constant(classical_state(
                from_value_at(v, "strategy.adaptive.constant")?,
                "strategy.adaptive.constant",
            )?),
            Strategy::Adaptive(AdaptiveSpec::Policy(PolicySpec::Schedule(v))) => {
                Plan::Schedule(classical_inputs(v, "strategy.adaptive.schedule")?)
            }
        })
    }

    fn policy(&self, n: usize, ny: usize, eps: f64) -> crate::Result<AdaptivePolicy> {
        let test = FinalTest::Optimal { eps };
        match self {
            Plan::Canonical => Ok(AdaptivePolicy::second_bit_feedback(n, eps)),
            Plan::Constant(p) => AdaptivePolicy::constant(n, p.clone(), ny, test),
            Plan::Parallel(v) | Plan::Schedule(v) => AdaptivePolicy::schedule(cyclic(v, n), ny, test),
        }
    }

    fn exact(&self, s: &HypothesisFamily, t: &HypothesisFamily, n: usize, eps: f64) -> crate::Result<(f64, f64)> {
        let pair = match self {
            Plan::Parallel(v) => evaluate_parallel_strategy(s, t, &cyclic(v, n), n, eps)?.0,
            _ => evaluate_adaptive_strategy(&self.policy(n, s.base().out_dim(), eps)?, s, t)?,
        };
        Ok((pair.alpha, pair.beta))
    }
}

/// Exact evaluation for each `n`, with Monte Carlo in place of exact
/// evaluation where a size cap is hit and the fallback is enabled.
fn simulate_rows(
    c: &ProblemConfig,
    plan: &Plan,
    s: &HypothesisFamily,
    t: &HypothesisFamily,
    ns: &[usize],
) -> Result<Vec<SimRow>, CliError> {
    let eps = eps_of(c);
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        if n == 0 {
            return Err(CliError::Schema("params.n_list: n must be positive".into()));
        }
        match plan.exact(s, t, n, eps) {
            Ok((alpha, beta)) => rows.push(SimRow { n, alpha, beta, ci: (beta, beta), method: "exact" }),
            Err(Error::SizeLimit { .. }) if c.params.monte_carlo == Some(true) => {
                let policy = plan.policy(n, s.base().out_dim(), eps)?;
                let samples = c.params.samples.unwrap_or(DEFAULT_SAMPLES);
                let mc = monte_carlo_adaptive(&policy, s, t, samples, seed_of(c).wrapping_add(n as u64))?;
                rows.push(SimRow { n, alpha: mc.alpha, beta: mc.beta, ci: mc.beta_ci, method: "monte-carlo" });
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(rows)
}

fn slope_fit(rows: &[SimRow]) -> Option<(f64, f64)> {
    let betas: BTreeMap<usize, f64> = rows.iter().map(|r| (r.n, r.beta)).collect();
    let (lo, hi) = (*betas.keys().next()?, *betas.keys().next_back()?);
    estimate_exponent(&betas, lo, hi).ok()
}

fn n_list(c: &ProblemConfig) -> Vec<usize> {
    match (&c.params.n_list, c.params.n) {
        (Some(list), _) => list.clone(),
        (None, Some(n)) => vec![n],
        (None, None) => DEFAULT_N_LIST.collect(),
    }
}

fn rows_json(rows: &[SimRow]) -> Vec<Value> {
    rows.iter()
        .map(|r| {
            Obj::new()
                .set("n", r.n)
                .set("alpha", num(r.alpha))
                .set("beta", num(r.beta))
                .set("exponent_estimate", num(exponent_of(r.beta, r.n)))
                .set("ci_low", num(exponent_of(r.ci.1, r.n)))
                .set("ci_high", num(exponent_of(r.ci.0, r.n)))
                .set("method", r.method)
                .build()
        })
        .collect()
}

fn slope_lines(prefix: &str, fit: Option<(f64, f64)>) -> Vec<String> {
    vec![
        format!("# {prefix}slope,{}", cell(fit.map(|f| f.0))),
        format!("# {prefix}r_squared,{}", cell(fit.map(|f| f.1))),
    ]
}

pub fn simulate(c: &ProblemConfig) -> Result<Outcome, CliError> {
    let plan = Plan::from_config(require(&c.strategy, "config.strategy")?)?;
    let (s, t) = match (&c.null, &c.alternative, &plan) {
        (None, None, Plan::Canonical) => {
            let (s, t, _) = example12(1);
            (HypothesisFamily::iid(s), HypothesisFamily::iid(t))
        }
        (n, a, _) => (
            family(require(n, "config.null")?, "null")?,
            family(require(a, "config.alternative")?, "alternative")?,
        ),
    };
    let rows = simulate_rows(c, &plan, &s, &t, &n_list(c))?;
    let fit = slope_fit(&rows);
    let body = Obj::new()
        .set("eps", num(eps_of(c)))
        .set("rows", rows_json(&rows))
        .set("slope", fit.map_or(Value::Null, |f| num(f.0)))
        .set("r_squared", fit.map_or(Value::Null, |f| num(f.1)))
        .build();
    let mut csv = vec!["n,alpha,beta,exponent_estimate,ci_low,ci_high".to_string()];
    for r in &rows {
        csv.push(format!(
            "{},{},{},{},{},{}",
            r.n,
            cell(Some(r.alpha)),
            cell(Some(r.beta)),
            cell(Some(exponent_of(r.beta, r.n))),
            cell(Some(exponent_of(r.ci.1, r.n))),
            cell(Some(exponent_of(r.ci.0, r.n)))
        ));
    }
    csv.extend(slope_lines("", fit));
    Ok(Outcome { body, csv })
}

fn history_key(code: usize, depth: usize, alphabet: usize) -> String {
    let mut digits = vec![0; depth];
    let mut c = code;
    for d in digits.iter_mut().rev() {
        *d = c % alphabet;
        c /= alphabet;
    }
    digits.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// The history-to-vertex table up to [`POLICY_DEPTH_SHOWN`] earlier samples,
/// with a digest of the whole table.
fn policy_json(policy: &AdversaryPolicy) -> Value {
    let mut table = serde_json::Map::new();
    for (depth, row) in policy.choices.iter().enumerate().take(POLICY_DEPTH_SHOWN + 1) {
        for (code, &v) in row.iter().enumerate() {
            table.insert(history_key(code, depth, policy.alphabet), Value::from(v));
        }
    }
    let full = serde_json::to_string(&policy.choices).expect("table serializes");
    Obj::new()
        .set("horizon", policy.horizon)
        .set("alphabet", policy.alphabet)
        .set("depth_shown", POLICY_DEPTH_SHOWN.min(policy.horizon.saturating_sub(1)))
        .set("truncated", policy.horizon > POLICY_DEPTH_SHOWN + 1)
        .set("table", Value::Object(table))
        .set("table_sha256", hex::encode(Sha256::digest(full.as_bytes())))
        .build()
}

fn classical_vertices(block: &HypothesisBlock, path: &str) -> Result<Vec<ProbVector>, CliError> {
    classical_inputs(&block.vertices, &format!("{path}.vertices"))
}

pub fn adversary(c: &ProblemConfig) -> Result<Outcome, CliError> {
    let p = classical_vertices(require(&c.null, "config.null")?, "null")?;
    let q = classical_vertices(require(&c.alternative, "config.alternative")?, "alternative")?;
    let n = *require(&c.params.n, "params.n")?;
    let eps = eps_of(c);
    let region = match c.test.as_ref().unwrap_or(&TestSpec::Universal) {
        TestSpec::Universal => universal_adversarial_test(&p, &q, n, eps)?,
        TestSpec::Region(m) => TestOperator::classical(m.clone())?,
    };
    let m = region.as_classical().expect("classical region").to_vec();
    let rejection = TestOperator::classical(m.iter().map(|a| 1.0 - a).collect())?;
    let (alpha, _) = adversary_best_response(&rejection, &p, n)?;
    let (beta, policy) = adversary_best_response(&region, &q, n)?;
    let body = Obj::new()
        .set("n", n)
        .set("eps", num(eps))
        .set("value", num(beta))
        .set("alpha", num(alpha))
        .set("beta", num(beta))
        .set("exponent", num(exponent_of(beta, n)))
        .set("policy", policy_json(&policy))
        .build();
    let csv = vec![
        "n,alpha,beta,exponent".into(),
        format!("{n},{},{},{}", cell(Some(alpha)), cell(Some(beta)), cell(Some(exponent_of(beta, n)))),
    ];
    Ok(Outcome { body, csv })
}

pub fn example12_report(c: &ProblemConfig) -> Result<Outcome, CliError> {
    let eps = eps_of(c);
    let (s, t, _) = example12(1);
    let iid = worst_case_iid_exponent(&s, &t)?;
    let par = parallel_exponent_finite_classical(&s, &t)?;
    let ratio = match (iid.value, par.value) {
        (ExtReal::Finite(a), ExtReal::Finite(b)) if b > 0.0 => num(a / b),
        _ => Value::Null,
    };
    let (sf, tf) = (HypothesisFamily::iid(s), HypothesisFamily::iid(t));
    let ns = n_list(c);
    let alternating = vec![ProbVector::point(2, 0), ProbVector::point(2, 1)];
    let adaptive = simulate_rows(c, &Plan::Canonical, &sf, &tf, &ns)?;
    let parallel = simulate_rows(c, &Plan::Parallel(alternating), &sf, &tf, &ns)?;
    let (fa, fp) = (slope_fit(&adaptive), slope_fit(&parallel));
    let weights = par.input_certificate.as_ref().map_or(Value::Null, state_fragment);
    let body = Obj::new()
        .set("eps", num(eps))
        .set("iid_exponent", ext(iid.value))
        .set("parallel_exponent", ext(par.value))
        .set("ratio", ratio)
        .set("parallel_weights", weights)
        .set("adaptive", rows_json(&adaptive))
        .set("parallel", rows_json(&parallel))
        .set("adaptive_slope", fa.map_or(Value::Null, |f| num(f.0)))
        .set("adaptive_r_squared", fa.map_or(Value::Null, |f| num(f.1)))
        .set("parallel_slope", fp.map_or(Value::Null, |f| num(f.0)))
        .set("parallel_r_squared", fp.map_or(Value::Null, |f| num(f.1)))
        .build();
    let mut csv = vec!["n,adaptive_alpha,adaptive_beta,adaptive_exponent,parallel_alpha,parallel_beta,parallel_exponent".to_string()];
    for (a, p) in adaptive.iter().zip(&parallel) {
        csv.push(format!(
            "{},{},{},{},{},{},{}",
            a.n,
            cell(Some(a.alpha)),
            cell(Some(a.beta)),
            cell(Some(exponent_of(a.beta, a.n))),
            cell(Some(p.alpha)),
            cell(Some(p.beta)),
            cell(Some(exponent_of(p.beta, p.n)))
        ));
    }
    csv.extend(slope_lines("adaptive_", fa));
    csv.extend(slope_lines("parallel_", fp));
    Ok(Outcome { body, csv })
}
