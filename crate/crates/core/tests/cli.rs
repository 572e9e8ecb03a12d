use std::path::{Path, PathBuf};

use chandisc::channel_div::classical_channel_divergence;
use chandisc::cli::config::parse_config;
use chandisc::cli::{execute, run, Cli};
use chandisc::model::{ClassicalChannel, State};
use clap::Parser;
use serde_json::{json, Value};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &tempfile::TempDir, name: &str, config: &Value) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn run_text(args: &[&str]) -> Result<String, chandisc::cli::CliError> {
    let cli = Cli::try_parse_from(std::iter::once("chandisc").chain(args.iter().copied())).unwrap();
    execute(&cli.command, &cli.common)
}

fn run_json(args: &[&str]) -> Value {
    serde_json::from_str(&run_text(args).unwrap()).unwrap()
}

fn exit_code(args: &[&str]) -> u8 {
    run(std::iter::once("chandisc").chain(args.iter().copied()))
}

fn example12_blocks() -> (Value, Value) {
    let null = json!({"vertices": [
        {"classical": [["1/2", 0, "1/2", 0], ["1/2", 0, "1/2", 0]]},
        {"classical": [[0, "1/2", 0, "1/2"], [0, "1/2", 0, "1/2"]]}
    ]});
    let alt = json!({"vertices": [
        {"classical": [["3/4", 0, "1/4", 0], ["1/2", 0, "1/2", 0]]},
        {"classical": [[0, "1/2", 0, "1/2"], [0, "3/4", 0, "1/4"]]}
    ]});
    (null, alt)
}

#[test]
fn dh_on_identical_states() {
    let path = configs_dir().join("dh-identical.json");
    let r = run_json(&["divergence", "--config", path.to_str().unwrap()]);
    assert_eq!(r["infinite"], json!(false));
    assert!((r["value"].as_f64().unwrap() + 0.9f64.log2()).abs() < 1e-8);
}

#[test]
fn kl_on_example12_marginals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"version": "1", "kind": "divergence", "divergence": "kl",
        "states": [{"classical": ["1/2", 0, "1/2", 0]}, {"classical": ["3/4", 0, "1/4", 0]}]});
    let path = write_config(&dir, "kl.json", &cfg);
    let r = run_json(&["divergence", "--config", path.to_str().unwrap()]);
    assert!((r["value"].as_f64().unwrap() - (4.0f64 / 3.0).log2() / 2.0).abs() < 1e-8);
}

#[test]
fn orthogonal_pure_states_are_infinitely_apart() {
    let path = configs_dir().join("quantum-orthogonal.json");
    let r = run_json(&["divergence", "--config", path.to_str().unwrap()]);
    assert_eq!(r["infinite"], json!(true));
    assert_eq!(r["value"], Value::Null);
}

#[test]
fn reports_carry_the_reproducibility_envelope() {
    let path = configs_dir().join("example12-parallel.json");
    let r = run_json(&["exponent", "--config", path.to_str().unwrap(), "--seed", "7"]);
    let keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).take(4).collect();
    assert_eq!(keys, ["tool_version", "config_hash", "seed", "kind"]);
    assert_eq!(r["tool_version"], json!(env!("CARGO_PKG_VERSION")));
    assert_eq!(r["seed"], json!(7));
    let hash = r["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| matches!(c, '0'..='9' | 'a'..='f')));
    let other = run_json(&["exponent", "--config", path.to_str().unwrap(), "--seed", "8"]);
    assert_ne!(other["config_hash"], r["config_hash"]);
}

#[test]
fn identical_runs_are_byte_identical() {
    for (cmd, file) in [
        ("exponent", "convex-hulls.json"),
        ("adversary", "adversary-universal.json"),
        ("simulate", "example12-canonical.json"),
    ] {
        let path = configs_dir().join(file);
        let a = run_text(&[cmd, "--config", path.to_str().unwrap()]).unwrap();
        let b = run_text(&[cmd, "--config", path.to_str().unwrap()]).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let a = run_text(&["example12", "--n-list", "4,5,6", "--format", "csv"]).unwrap();
    let b = run_text(&["example12", "--n-list", "4,5,6", "--format", "csv"]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn printed_numbers_have_at_most_nine_significant_digits() {
    let path = configs_dir().join("convex-hulls.json");
    let text = run_text(&["exponent", "--config", path.to_str().unwrap()]).unwrap();
    let r: Value = serde_json::from_str(&text).unwrap();
    fn check(v: &Value) {
        match v {
            Value::Number(n) if n.is_f64() => {
                let s = n.to_string();
                let mantissa = s.split(['e', 'E']).next().unwrap();
                let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
                let significant = digits.trim_start_matches('0').trim_end_matches('0');
                assert!(significant.len() <= 9, "{s}");
            }
            Value::Array(a) => a.iter().for_each(check),
            Value::Object(m) => m.values().for_each(check),
            _ => {}
        }
    }
    check(&r);
}

#[test]
fn example12_exponents_through_the_cli() {
    let path = configs_dir().join("example12-parallel.json");
    let p = path.to_str().unwrap();
    let target = (4.0f64 / 3.0).log2();
    let par = run_json(&["exponent", "--config", p]);
    assert!((par["value"].as_f64().unwrap() - target / 4.0).abs() < 1e-8);
    let iid = run_json(&["exponent", "iid-bound", "--config", p]);
    assert!((iid["value"].as_f64().unwrap() - target / 2.0).abs() < 1e-8);
    let both = run_json(&["example12", "--n-list", "4,5,6"]);
    assert!((both["ratio"].as_f64().unwrap() - 2.0).abs() < 1e-6);
}

#[test]
fn convex_on_singletons_is_the_channel_divergence() {
    let e = vec![vec![0.8, 0.2], vec![0.1, 0.9]];
    let f = vec![vec![0.5, 0.5], vec![0.3, 0.7]];
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"version": "1", "kind": "exponent", "solver": "convex",
        "null": {"vertices": [{"classical": e}], "take_hull": true},
        "alternative": {"vertices": [{"classical": f}], "take_hull": true}});
    let path = write_config(&dir, "c.json", &cfg);
    let r = run_json(&["exponent", "--config", path.to_str().unwrap()]);
    let oracle = classical_channel_divergence(
        &ClassicalChannel::from_rows(e).unwrap(),
        &ClassicalChannel::from_rows(f).unwrap(),
    )
    .unwrap()
    .value();
    assert!((r["value"].as_f64().unwrap() - oracle).abs() < 1e-6);
}

#[test]
fn certificates_reparse_as_config_fragments() {
    let path = configs_dir().join("example12-parallel.json");
    let r = run_json(&["exponent", "--config", path.to_str().unwrap()]);
    let cert = r["input_certificate"].clone();
    let state: State = serde_json::from_value(cert.clone()).unwrap();
    assert_eq!(state.dim(), 2);

    // The optimal input feeds straight back in as a parallel strategy.
    let (s_block, alt) = example12_blocks();
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"version": "1", "kind": "simulate", "strategy": {"parallel": [cert]},
        "null": s_block, "alternative": alt, "params": {"n_list": [2, 3]}});
    let path = write_config(&dir, "s.json", &cfg);
    assert!(parse_config(&std::fs::read_to_string(&path).unwrap()).is_ok());
    assert_eq!(exit_code(&["simulate", "--config", path.to_str().unwrap()]), 0);

    // A Neyman-Pearson test is a valid adversary test region.
    let dh = run_json(&["divergence", "--config", configs_dir().join("dh-identical.json").to_str().unwrap()]);
    let region = dh["certificate"]["test"].clone();
    let cfg = json!({"version": "1", "kind": "adversary", "test": region,
        "null": {"vertices": [{"classical": [0.5, 0.5]}]},
        "alternative": {"vertices": [{"classical": [0.5, 0.5]}]}, "params": {"n": 1}});
    let path = write_config(&dir, "a.json", &cfg);
    let a = run_json(&["adversary", "--config", path.to_str().unwrap()]);
    assert!((a["beta"].as_f64().unwrap() - 0.9).abs() < 1e-9);
}

#[test]
fn simulate_identical_sets_has_flat_slope() {
    let dir = tempfile::tempdir().unwrap();
    let ch = json!({"classical": [[0.5, 0.5], [0.2, 0.8]]});
    let cfg = json!({"version": "1", "kind": "simulate", "strategy": {"parallel": [{"classical": [0, 1]}]},
        "null": {"vertices": [ch.clone()]}, "alternative": {"vertices": [ch]},
        "params": {"n_list": [4, 5, 6, 7, 8], "eps": 0.1}});
    let path = write_config(&dir, "flat.json", &cfg);
    let r = run_json(&["simulate", "--config", path.to_str().unwrap()]);
    assert!(r["slope"].as_f64().unwrap().abs() < 1e-3);

    let csv = run_text(&["simulate", "--config", path.to_str().unwrap(), "--format", "csv"]).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,alpha,beta,exponent_estimate,ci_low,ci_high");
    assert_eq!(lines.len(), 1 + 5 + 2);
    assert!(lines[6].starts_with("# slope,"));
    assert!(lines[7].starts_with("# r_squared,"));
}

#[test]
fn adversary_on_a_singleton_is_the_product_probability() {
    let dir = tempfile::tempdir().unwrap();
    let region = [1.0, 0.0, 0.5, 1.0];
    let cfg = json!({"version": "1", "kind": "adversary", "test": {"region": region},
        "null": {"vertices": [{"classical": [0.5, 0.5]}]},
        "alternative": {"vertices": [{"classical": [0.7, 0.3]}]}, "params": {"n": 2}});
    let path = write_config(&dir, "a.json", &cfg);
    let r = run_json(&["adversary", "--config", path.to_str().unwrap()]);
    let q = [0.7, 0.3];
    let oracle: f64 = (0..4).map(|c| region[c] * q[c / 2] * q[c % 2]).sum();
    assert!((r["value"].as_f64().unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn adversary_matches_enumeration_of_all_policies() {
    let q = [[0.8, 0.2], [0.3, 0.7]];
    let region = [0.0, 1.0, 1.0, 0.25, 1.0, 0.0, 0.5, 1.0];
    // Seven decision nodes for n = 3 over a binary alphabet.
    let mut best = 0.0f64;
    for policy in 0u32..(1 << 7) {
        let pick = |node: usize| ((policy >> node) & 1) as usize;
        let mut total = 0.0;
        for s in 0..8usize {
            let (a, b, c) = (s >> 2, (s >> 1) & 1, s & 1);
            let p = q[pick(0)][a] * q[pick(1 + a)][b] * q[pick(3 + 2 * a + b)][c];
            total += p * region[s];
        }
        best = best.max(total);
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"version": "1", "kind": "adversary", "test": {"region": region},
        "null": {"vertices": [{"classical": [0.5, 0.5]}]},
        "alternative": {"vertices": [{"classical": q[0]}, {"classical": q[1]}]}, "params": {"n": 3}});
    let path = write_config(&dir, "a.json", &cfg);
    let r = run_json(&["adversary", "--config", path.to_str().unwrap()]);
    assert!((r["value"].as_f64().unwrap() - best).abs() < 1e-8);
}

#[test]
fn adversary_table_is_truncated_with_a_digest() {
    let path = configs_dir().join("adversary-universal.json");
    let r = run_json(&["adversary", "--config", path.to_str().unwrap(), "--n", "7"]);
    let policy = &r["policy"];
    assert_eq!(policy["truncated"], json!(true));
    assert_eq!(policy["table"].as_object().unwrap().len(), 1 + 2 + 4 + 8 + 16);
    assert_eq!(policy["table_sha256"].as_str().unwrap().len(), 64);
    let short = run_json(&["adversary", "--config", path.to_str().unwrap(), "--n", "3"]);
    assert_eq!(short["policy"]["truncated"], json!(false));
    assert_eq!(short["policy"]["table"].as_object().unwrap().len(), 7);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str, cfg: &Value| write_config(&dir, name, cfg).to_str().unwrap().to_string();

    let ok = configs_dir().join("dh-identical.json");
    let out = dir.path().join("report.json");
    assert_eq!(exit_code(&["divergence", "--config", ok.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    assert!(std::fs::read_to_string(&out).unwrap().contains("config_hash"));

    let schema = p("schema.json", &json!({"version": "1", "kind": "divergence", "states": [{"classical": [0.5, 0.6]}, {"classical": [0.5, 0.5]}]}));
    assert_eq!(exit_code(&["divergence", "--config", &schema, "--divergence", "kl"]), 2);
    std::fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    assert_eq!(exit_code(&["divergence", "--config", dir.path().join("broken.json").to_str().unwrap()]), 2);

    let dims = p("dims.json", &json!({"version": "1", "kind": "divergence", "divergence": "kl",
        "states": [{"classical": [0.5, 0.5]}, {"classical": [0.2, 0.3, 0.5]}]}));
    assert_eq!(exit_code(&["divergence", "--config", &dims]), 3);

    let (s_block, alt) = example12_blocks();
    let pre = p("pre.json", &json!({"version": "1", "kind": "exponent", "solver": "convex", "null": s_block, "alternative": alt}));
    assert_eq!(exit_code(&["exponent", "--config", &pre]), 4);

    let adv = configs_dir().join("adversary-universal.json");
    assert_eq!(exit_code(&["adversary", "--config", adv.to_str().unwrap(), "--n", "13"]), 5);
}

#[test]
fn size_cap_falls_back_to_monte_carlo_when_enabled() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"version": "1", "kind": "simulate", "strategy": {"parallel": [{"classical": [0.5, 0.5]}]},
        "null": {"vertices": [{"classical": [[0.5, 0.3, 0.2], [0.2, 0.3, 0.5]]}, {"classical": [[0.4, 0.4, 0.2], [0.3, 0.3, 0.4]]}]},
        "alternative": {"vertices": [{"classical": [[0.6, 0.2, 0.2], [0.2, 0.2, 0.6]]}]},
        "params": {"n_list": [30]}});
    let path = write_config(&dir, "big.json", &cfg);
    let p = path.to_str().unwrap();
    assert_eq!(exit_code(&["simulate", "--config", p]), 5);
    let r = run_json(&["simulate", "--config", p, "--monte-carlo", "--samples", "2000"]);
    let row = &r["rows"][0];
    assert_eq!(row["method"], json!("monte-carlo"));
    let (lo, hi, est) = (row["ci_low"].as_f64().unwrap(), row["ci_high"].as_f64().unwrap(), row["exponent_estimate"].as_f64().unwrap());
    assert!(lo <= est && est <= hi);
}

#[test]
fn shipped_configs_parse() {
    let mut count = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count >= 5);
    let schema = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/problem-config.v1.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(schema).unwrap()).unwrap();
    assert_eq!(schema["properties"]["version"]["const"], json!("1"));
}
