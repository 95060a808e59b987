//! Bit-stable number formatting shared by the CSV and JSON writers.

use serde::Serialize;
use serde_json::Value;

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// Shortest round-trip decimal of `x` after rounding to 12 significant
/// digits; plain notation for moderate magnitudes, exponent notation
/// otherwise.
pub fn fmt_float(x: f64) -> String {
    let r = round12(x);
    if r == 0.0 {
        return "0".into();
    }
    let a = r.abs();
    if (1e-5..1e15).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

/// Serializes `value` as pretty JSON with lexicographically ordered keys and
/// every float rounded to 12 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("output documents serialize");
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("json values serialize");
    s.push('\n');
    s
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if !n.is_i64() && !n.is_u64() => {
            if let Some(f) = n.as_f64() {
                *v = serde_json::Number::from_f64(round12(f)).map_or(Value::Null, Value::Number);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Accumulates a CSV document.
#[derive(Debug, Default)]
pub struct Csv {
    out: String,
}

impl Csv {
    pub fn with_header<S: AsRef<str>>(columns: &[S]) -> Self {
        let mut csv = Self::default();
        csv.raw_row(columns.iter().map(|c| c.as_ref().to_string()));
        csv
    }

    pub fn raw_row(&mut self, cells: impl IntoIterator<Item = String>) {
        let cells: Vec<String> = cells.into_iter().collect();
        self.out.push_str(&cells.join(","));
        self.out.push('\n');
    }

    pub fn row(&mut self, values: &[f64]) {
        self.raw_row(values.iter().map(|v| fmt_float(*v)));
    }

    pub fn finish(self) -> String {
        self.out
    }
}
