//! Number formatting for the JSON artifacts.
//!
//! Weights are written with 17 significant digits and positions with at least
//! six decimals. Parsing relies on serde_json's `float_roundtrip` feature so
//! both forms reload bit-exactly.

use serde::Serializer;
use serde_json::value::RawValue;

fn raw(text: String) -> Box<RawValue> {
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

/// 17 significant digits in scientific notation.
pub fn full_precision(x: f64) -> String {
    assert!(x.is_finite(), "non-finite value cannot be written as JSON");
    format!("{x:.16e}")
}

/// At least six decimals; more only when six would not round-trip.
pub fn meters(x: f64) -> String {
    assert!(x.is_finite(), "non-finite value cannot be written as JSON");
    let fixed = format!("{x:.6}");
    if fixed.parse::<f64>().ok() == Some(x) {
        fixed
    } else {
        full_precision(x)
    }
}

pub fn ser_f64_full<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_some(&raw(full_precision(*x)))
}

pub fn ser_vec_full<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| raw(full_precision(*x))))
}

pub fn ser_meters<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_some(&raw(meters(*x)))
}

pub fn ser_point_meters<S: Serializer>(p: &[f64; 2], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(p.iter().map(|x| raw(meters(*x))))
}

pub fn ser_points_meters<S: Serializer>(v: &[[f64; 2]], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    struct P<'a>(&'a [f64; 2]);
    impl serde::Serialize for P<'_> {
        fn serialize<S2: Serializer>(&self, s: S2) -> Result<S2::Ok, S2::Error> {
            ser_point_meters(self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for p in v {
        seq.serialize_element(&P(p))?;
    }
    seq.end()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meters_keeps_six_decimals() {
        assert_eq!(meters(1.125), "1.125000");
        assert_eq!(meters(-0.5), "-0.500000");
        let odd = 0.1 + 0.2;
        assert_eq!(meters(odd).parse::<f64>().unwrap(), odd);
    }

    #[test]
    fn full_precision_round_trips() {
        for x in [0.1, -3.0e-300, 1.0 / 3.0, 123456.789, 0.0, -0.0] {
            let s = full_precision(x);
            let back: f64 = serde_json::from_str(&s).unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }
}
