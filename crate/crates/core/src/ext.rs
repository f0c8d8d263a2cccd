//! Extended nonnegative reals `[0, +inf]` with an exact top element.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A value in `]-inf, +inf]` where `+inf` is a distinguished element rather
/// than a large float. Integrand values live in `[0, +inf]`; residuals and
/// moduli may be negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ext {
    Fin(f64),
    Inf,
}

impl Ext {
    pub const ZERO: Ext = Ext::Fin(0.0);

    /// Wraps a float; `f64::INFINITY` maps to [`Ext::Inf`].
    pub fn from_f64(v: f64) -> Ext {
        if v == f64::INFINITY {
            Ext::Inf
        } else {
            Ext::Fin(v)
        }
    }

    pub fn is_inf(self) -> bool {
        matches!(self, Ext::Inf)
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Ext::Fin(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Ext::Fin(v) => Some(v),
            Ext::Inf => None,
        }
    }

    /// Lossy conversion where `+inf` becomes `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            Ext::Fin(v) => v,
            Ext::Inf => f64::INFINITY,
        }
    }

    /// Multiplication by a strictly positive finite scalar.
    pub fn scale(self, s: f64) -> Ext {
        debug_assert!(s > 0.0);
        match self {
            Ext::Fin(v) => Ext::Fin(s * v),
            Ext::Inf => Ext::Inf,
        }
    }

    pub fn min(self, other: Ext) -> Ext {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Ext) -> Ext {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Default for Ext {
    fn default() -> Self {
        Ext::ZERO
    }
}

impl From<f64> for Ext {
    fn from(v: f64) -> Self {
        Ext::from_f64(v)
    }
}

impl PartialOrd for Ext {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Ext::Inf, Ext::Inf) => Some(Ordering::Equal),
            (Ext::Inf, Ext::Fin(_)) => Some(Ordering::Greater),
            (Ext::Fin(_), Ext::Inf) => Some(Ordering::Less),
            (Ext::Fin(a), Ext::Fin(b)) => a.partial_cmp(b),
        }
    }
}

impl Add for Ext {
    type Output = Ext;
    fn add(self, rhs: Ext) -> Ext {
        match (self, rhs) {
            (Ext::Fin(a), Ext::Fin(b)) => Ext::Fin(a + b),
            _ => Ext::Inf,
        }
    }
}

impl Sum for Ext {
    fn sum<I: Iterator<Item = Ext>>(iter: I) -> Ext {
        iter.fold(Ext::ZERO, |acc, v| acc + v)
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ext::Fin(v) => write!(f, "{v}"),
            Ext::Inf => f.write_str("inf"),
        }
    }
}

// JSON has no infinity, so +inf travels as the string "inf".
impl Serialize for Ext {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Ext::Fin(v) => s.serialize_f64(*v),
            Ext::Inf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Ext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Ext::from_f64(v)),
            Repr::Str(s) if s == "inf" => Ok(Ext::Inf),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("invalid extended real `{s}`"))),
        }
    }
}

/// Serde adapter for plain `f64` fields that may hold `±inf`.
pub mod f64_ext {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("invalid number `{other}`"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinity_is_top() {
        assert!(Ext::Inf > Ext::Fin(1e300));
        assert_eq!(Ext::Fin(1.0) + Ext::Inf, Ext::Inf);
        assert_eq!(Ext::Fin(2.0).min(Ext::Inf), Ext::Fin(2.0));
        assert_eq!(Ext::from_f64(f64::INFINITY), Ext::Inf);
    }

    #[test]
    fn json_round_trip() {
        let v = vec![Ext::Fin(0.5), Ext::Inf];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[0.5,"inf"]"#);
        let back: Vec<Ext> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
