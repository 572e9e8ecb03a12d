//! Report rendering: fixed field order, nine significant digits.

use serde_json::{Map, Value};

use crate::divergences::ExtReal;

/// Rounds to nine significant digits, ties to even on the exact binary value.
pub fn round9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Applies [`round9`] to every non-integer number in a report.
pub fn round_all(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round9(n.as_f64().expect("f64 number"));
            *v = serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_all),
        Value::Object(map) => map.values_mut().for_each(round_all),
        _ => {}
    }
}

pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn ext(x: ExtReal) -> Value {
    match x {
        ExtReal::Finite(v) => num(v),
        ExtReal::Infinite => Value::Null,
    }
}

/// A CSV cell: rounded, positional for moderate magnitudes, `inf` for
/// infinity, empty for a missing value.
pub fn cell(x: Option<f64>) -> String {
    match x {
        None => String::new(),
        Some(x) if x.is_nan() => "nan".into(),
        Some(x) if x.is_infinite() => if x > 0.0 { "inf" } else { "-inf" }.into(),
        Some(x) => {
            let r = round9(x);
            let a = r.abs();
            if a != 0.0 && !(1e-5..1e15).contains(&a) {
                format!("{r:e}")
            } else {
                format!("{r}")
            }
        }
    }
}

pub fn ext_cell(x: ExtReal) -> String {
    match x {
        ExtReal::Finite(v) => cell(Some(v)),
        ExtReal::Infinite => "inf".into(),
    }
}

/// Ordered object builder.
#[derive(Default)]
pub struct Obj(Map<String, Value>);

impl Obj {
    pub fn new() -> Self {
        Obj(Map::new())
    }

    pub fn set(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn build(self) -> Value {
        Value::Object(self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(round9(0.20751874963942190), 0.20751875);
        assert_eq!(round9(123456789012.0), 123456789000.0);
        assert_eq!(round9(-1.0 / 3.0), -0.333333333);
        assert_eq!(round9(0.0), 0.0);
        assert!(round9(f64::INFINITY).is_infinite());
    }

    #[test]
    fn exact_ties_round_to_even() {
        assert_eq!(format!("{:.0}", 2.5f64), "2");
        assert_eq!(format!("{:.0}", 3.5f64), "4");
        assert_eq!(round9(1234567885.0), 1234567880.0);
        assert_eq!(round9(1234567875.0), 1234567880.0);
        assert_eq!(round9(1234567895.0), 1234567900.0);
    }

    #[test]
    fn rounding_walks_nested_values_and_keeps_integers() {
        let mut v = serde_json::json!({"a": [0.1234567891234, 7], "b": {"c": 2.0}});
        round_all(&mut v);
        assert_eq!(v, serde_json::json!({"a": [0.123456789, 7], "b": {"c": 2.0}}));
    }

    #[test]
    fn csv_cells() {
        assert_eq!(cell(Some(0.20751874963942190)), "0.20751875");
        assert_eq!(cell(Some(1.5e-7)), "1.5e-7");
        assert_eq!(cell(Some(0.0)), "0");
        assert_eq!(cell(None), "");
        assert_eq!(ext_cell(ExtReal::Infinite), "inf");
    }

    #[test]
    fn object_builder_keeps_insertion_order() {
        let v = Obj::new().set("z", 1).set("a", 2).build();
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"z":1,"a":2}"#);
    }
}
