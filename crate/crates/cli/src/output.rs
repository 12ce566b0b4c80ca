//! JSON emission with numbers rounded to 12 significant digits.

use std::io::Write;

use serde_json::{Number, Value};

pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

pub fn round_numbers(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_numbers),
        Value::Object(map) => map.values_mut().for_each(round_numbers),
        _ => {}
    }
}

/// Prints the rounded document. A closed stdout (for example a pipe into
/// `head`) is not treated as an error.
pub fn emit(mut doc: Value) {
    round_numbers(&mut doc);
    let text = serde_json::to_string_pretty(&doc).expect("JSON values always serialize");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounds_to_twelve_digits() {
        assert_eq!(round_sig(1.0847913930123456), 1.08479139301);
        assert_eq!(round_sig(-1.585039101234567e-7), -1.58503910123e-7);
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
        assert_eq!(round_sig(0.0), 0.0);
    }

    #[test]
    fn walks_nested_values_and_keeps_integers() {
        let mut v = json!({"a": [0.1 + 0.2, 3], "b": {"c": 2.0000000000001}, "s": "x"});
        round_numbers(&mut v);
        assert_eq!(v, json!({"a": [0.3, 3], "b": {"c": 2.0}, "s": "x"}));
    }
}
