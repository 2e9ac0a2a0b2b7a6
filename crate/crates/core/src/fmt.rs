//! Fixed-notation numbers inside JSON documents.

use serde_json::value::RawValue;

/// `x` rendered with exactly `decimals` fractional digits as a raw JSON number.
pub fn fixed(x: f64, decimals: usize) -> Box<RawValue> {
    let mut s = format!("{x:.decimals$}");
    if s.starts_with("-") && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s.remove(0);
    }
    RawValue::from_string(s).expect("formatted float is valid JSON")
}

/// A micro-unit integer rendered as a 6-decimal fraction, without going
/// through floating point.
pub fn micros(value: u64) -> String {
    format!("{}.{:06}", value / 1_000_000, value % 1_000_000)
}

pub fn micros_raw(value: u64) -> Box<RawValue> {
    RawValue::from_string(micros(value)).expect("valid JSON number")
}
