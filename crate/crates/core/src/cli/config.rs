//! Problem configs: JSON documents with optional `"p/q"` rational literals.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::CliError;

pub const CONFIG_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Divergence,
    ChannelDiv,
    Exponent,
    Simulate,
    Adversary,
    Example12,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceName {
    Kl,
    Quantum,
    Dmax,
    Dh,
    DmLower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    ParallelFinite,
    Convex,
    IidBound,
    LevelN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKindName {
    #[default]
    Iid,
    ArbitrarilyVarying,
}

/// A set of channels (or, for `adversary`, of classical states).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisBlock {
    pub vertices: Vec<Value>,
    #[serde(default)]
    pub take_hull: bool,
    #[serde(default)]
    pub family_kind: FamilyKindName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Strategy {
    /// One input state per channel use.
    Parallel(Vec<Value>),
    Adaptive(AdaptiveSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AdaptiveSpec {
    /// `"example12-canonical"`.
    Named(String),
    Policy(PolicySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    /// The same input at every use.
    Constant(Value),
    /// Input `k` at use `k` regardless of outputs.
    Schedule(Vec<Value>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestSpec {
    /// Method-of-types test built from the null set.
    Universal,
    /// Acceptance probability per sample string, first sample most significant.
    Region(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub version: String,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence: Option<DivergenceName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<Solver>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null: Option<HypothesisBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative: Option<HypothesisBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<TestSpec>,
    #[serde(default)]
    pub params: Params,
}

impl ProblemConfig {
    /// A config with no data blocks, for commands that need none.
    pub fn bare(kind: Kind) -> Self {
        ProblemConfig {
            version: CONFIG_VERSION.to_string(),
            kind,
            name: None,
            divergence: None,
            solver: None,
            states: None,
            channels: None,
            null: None,
            alternative: None,
            strategy: None,
            test: None,
            params: Params::default(),
        }
    }

    /// Lowercase hex SHA-256 of the config serialized with sorted keys and no
    /// whitespace, after rational literals are resolved and flags merged.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&sort_keys(value)).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Parses `"3/4"`, `"-1/2"` or a decimal string. Numerator and denominator
/// must be integers for the rational form.
pub fn parse_number(text: &str) -> Option<f64> {
    let text = text.trim();
    match text.split_once('/') {
        Some((num, den)) => {
            let num: i64 = num.trim().parse().ok()?;
            let den: i64 = den.trim().parse().ok()?;
            (den != 0).then(|| num as f64 / den as f64)
        }
        None => text.parse::<f64>().ok().filter(|x| x.is_finite()),
    }
}

/// Replaces numeric strings inside `v` by numbers, reporting the path of any
/// string that is not a number.
fn resolve_numbers(v: &mut Value, path: &str) -> Result<(), CliError> {
    match v {
        Value::String(s) => {
            let x = parse_number(s)
                .ok_or_else(|| CliError::Schema(format!("{path}: expected a number or \"p/q\" literal, found {s:?}")))?;
            *v = serde_json::Number::from_f64(x).map(Value::Number).expect("finite");
        }
        Value::Array(items) => {
            for (i, item) in items.iter_mut().enumerate() {
                resolve_numbers(item, &format!("{path}[{i}]"))?;
            }
        }
        Value::Object(map) => {
            for (k, item) in map.iter_mut() {
                resolve_numbers(item, &format!("{path}.{k}"))?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Numeric subtrees of a config: everything under these keys is numbers.
const NUMERIC_KEYS: [&str; 5] = ["states", "channels", "strategy", "test", "params"];

fn resolve_config_numbers(root: &mut Value) -> Result<(), CliError> {
    let Value::Object(map) = root else {
        return Err(CliError::Schema("config root must be a JSON object".into()));
    };
    for key in NUMERIC_KEYS {
        if let Some(v) = map.get_mut(key) {
            // Named adaptive strategies are the one string leaf allowed here.
            if key == "strategy" {
                if let Some(Value::String(_)) = v.get("adaptive") {
                    continue;
                }
            }
            if key == "test" && v.is_string() {
                continue;
            }
            resolve_numbers(v, key)?;
        }
    }
    for key in ["null", "alternative"] {
        if let Some(Value::Array(vs)) = map.get_mut(key).and_then(|b| b.get_mut("vertices")) {
            for (i, item) in vs.iter_mut().enumerate() {
                resolve_numbers(item, &format!("{key}.vertices[{i}]"))?;
            }
        }
    }
    Ok(())
}

/// Deserializes `value` into `T`, naming the offending field on failure.
pub fn from_value_at<T: DeserializeOwned>(value: &Value, path: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value.clone()).map_err(|e| {
        let inner = e.path().to_string();
        let at = if inner == "." { path.to_string() } else { format!("{path}.{inner}") };
        CliError::Schema(format!("{at}: {}", e.inner()))
    })
}

/// Parses a config document.
pub fn parse_config(text: &str) -> Result<ProblemConfig, CliError> {
    let mut value: Value = serde_json::from_str(text)
        .map_err(|e| CliError::Schema(format!("line {} column {}: {e}", e.line(), e.column())))?;
    resolve_config_numbers(&mut value)?;
    let config: ProblemConfig = from_value_at(&value, "config")?;
    if config.version != CONFIG_VERSION {
        return Err(CliError::Schema(format!(
            "config.version: unsupported version {:?}, expected {CONFIG_VERSION:?}",
            config.version
        )));
    }
    Ok(config)
}
