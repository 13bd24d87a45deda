//! Serde helpers that write floating-point numbers as decimal strings.
//!
//! Rust's `{:?}` formatting of `f64` emits the shortest string that parses
//! back to the identical value, so files written through these helpers
//! round-trip bit-exactly (non-finite values are written as `inf`, `-inf`,
//! `NaN`).

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serializer};

pub fn format(value: f64) -> String {
    format!("{value:?}")
}

pub fn parse(text: &str) -> Result<f64, std::num::ParseFloatError> {
    text.trim().parse()
}

pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    serializer.serialize_str(&format(*value))
}

pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
    let text = String::deserialize(deserializer)?;
    parse(&text).map_err(|e| D::Error::custom(format!("bad decimal `{text}`: {e}")))
}

pub mod opt {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Option<f64>, serializer: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => serializer.serialize_some(&format(*v)),
            None => serializer.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<f64>, D::Error> {
        let text = Option::<String>::deserialize(deserializer)?;
        text.map(|t| parse(&t).map_err(|e| D::Error::custom(format!("bad decimal `{t}`: {e}"))))
            .transpose()
    }
}

pub mod pair {
    use super::*;

    pub fn serialize<S: Serializer>(value: &(f64, f64), serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeTuple;
        let mut tup = serializer.serialize_tuple(2)?;
        tup.serialize_element(&format(value.0))?;
        tup.serialize_element(&format(value.1))?;
        tup.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<(f64, f64), D::Error> {
        let (a, b) = <(String, String)>::deserialize(deserializer)?;
        let lo = parse(&a).map_err(|e| D::Error::custom(format!("bad decimal `{a}`: {e}")))?;
        let hi = parse(&b).map_err(|e| D::Error::custom(format!("bad decimal `{b}`: {e}")))?;
        Ok((lo, hi))
    }
}

pub mod opt_pair {
    use super::*;

    pub fn serialize<S: Serializer>(
        value: &Option<(f64, f64)>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => serializer.serialize_some(&[format(v.0), format(v.1)]),
            None => serializer.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<Option<(f64, f64)>, D::Error> {
        let raw = Option::<(String, String)>::deserialize(deserializer)?;
        raw.map(|(a, b)| {
            let lo = parse(&a).map_err(|e| D::Error::custom(format!("bad decimal `{a}`: {e}")))?;
            let hi = parse(&b).map_err(|e| D::Error::custom(format!("bad decimal `{b}`: {e}")))?;
            Ok((lo, hi))
        })
        .transpose()
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(values: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(values.iter().map(|v| format(*v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<f64>, D::Error> {
        Vec::<String>::deserialize(deserializer)?
            .iter()
            .map(|t| parse(t).map_err(|e| D::Error::custom(format!("bad decimal `{t}`: {e}"))))
            .collect()
    }
}

/// Unsigned integers as decimal strings, for values such as seeds that
/// exceed the exactly representable range of JSON readers using doubles.
pub mod uint {
    use super::*;

    pub fn serialize<S: Serializer>(value: &u64, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&value.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<u64, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.trim()
            .parse()
            .map_err(|e| D::Error::custom(format!("bad integer `{text}`: {e}")))
    }
}
