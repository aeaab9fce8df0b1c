//! Extended reals `ℝ ∪ {+∞}`.
//!
//! Infinity is a tag, never an `f64::INFINITY` sentinel floating through
//! arithmetic, so folds over infeasible cells cannot turn into NaN.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    /// Lifts a float. `+inf` maps to [`ExtReal::PosInf`]; NaN and `-inf`
    /// have no representation and are rejected.
    pub fn new(v: f64) -> Result<Self> {
        if v.is_nan() {
            Err(Error::Undefined("NaN"))
        } else if v == f64::INFINITY {
            Ok(ExtReal::PosInf)
        } else if v == f64::NEG_INFINITY {
            Err(Error::Undefined("negative infinity"))
        } else {
            Ok(ExtReal::Finite(v))
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtReal::PosInf)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    /// Float view with `+inf` for the infinite element. Only for display and
    /// comparisons at the edges of the crate.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// `k · self` for `k ≥ 0`. The product `0 · ∞` is undefined.
    pub fn scale(self, k: f64) -> Result<Self> {
        if k.is_nan() || k < 0.0 {
            return Err(Error::Undefined("scale factor must be a nonnegative number"));
        }
        match self {
            ExtReal::Finite(v) => ExtReal::new(k * v),
            ExtReal::PosInf if k == 0.0 => Err(Error::Undefined("0 * inf")),
            ExtReal::PosInf => Ok(ExtReal::PosInf),
        }
    }

    pub fn checked_add(self, other: Self) -> Result<Self> {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::new(a + b),
            _ => Ok(ExtReal::PosInf),
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    /// Overflow of two finite values saturates to `+∞`.
    fn add(self, other: Self) -> Self {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                let s = a + b;
                if s.is_finite() {
                    ExtReal::Finite(s)
                } else if s > 0.0 {
                    ExtReal::PosInf
                } else {
                    // a + b overflowed towards -inf; there is no such element
                    ExtReal::Finite(f64::MIN)
                }
            }
            _ => ExtReal::PosInf,
        }
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.total_cmp(b),
            (ExtReal::Finite(_), ExtReal::PosInf) => Ordering::Less,
            (ExtReal::PosInf, ExtReal::Finite(_)) => Ordering::Greater,
            (ExtReal::PosInf, ExtReal::PosInf) => Ordering::Equal,
        }
    }
}

impl From<f64> for ExtReal {
    /// Panics on NaN or `-inf`; use [`ExtReal::new`] for untrusted input.
    fn from(v: f64) -> Self {
        ExtReal::new(v).expect("ExtReal::from on NaN or -inf")
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => f.write_str("inf"),
        }
    }
}

impl std::iter::Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> Self {
        iter.fold(ExtReal::ZERO, |a, b| a + b)
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::PosInf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => ExtReal::new(v).map_err(serde::de::Error::custom),
            Repr::Str(s) if s == "inf" => Ok(ExtReal::PosInf),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ext() -> impl Strategy<Value = ExtReal> {
        prop_oneof![
            4 => (-1e6f64..1e6).prop_map(ExtReal::Finite),
            1 => Just(ExtReal::PosInf),
        ]
    }

    #[test]
    fn absorbing_infinity() {
        let a = ExtReal::Finite(2.0);
        assert_eq!(a + ExtReal::Finite(3.0), ExtReal::Finite(5.0));
        assert_eq!(a + ExtReal::PosInf, ExtReal::PosInf);
        assert_eq!(a.min(ExtReal::PosInf), a);
        assert!(ExtReal::PosInf > ExtReal::Finite(f64::MAX));
    }

    #[test]
    fn nan_is_rejected() {
        assert!(ExtReal::new(f64::NAN).is_err());
        assert!(ExtReal::new(f64::NEG_INFINITY).is_err());
        assert_eq!(ExtReal::new(f64::INFINITY).unwrap(), ExtReal::PosInf);
        assert!(ExtReal::PosInf.scale(0.0).is_err());
        assert_eq!(ExtReal::Finite(2.0).scale(0.0).unwrap(), ExtReal::ZERO);
    }

    #[test]
    fn serde_uses_inf_literal() {
        let s = serde_json::to_string(&vec![ExtReal::Finite(0.5), ExtReal::PosInf]).unwrap();
        assert_eq!(s, r#"[0.5,"inf"]"#);
        let back: Vec<ExtReal> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![ExtReal::Finite(0.5), ExtReal::PosInf]);
    }

    proptest! {
        #[test]
        fn addition_is_associative(a in ext(), b in ext(), c in ext()) {
            let l = (a + b) + c;
            let r = a + (b + c);
            match (l, r) {
                (ExtReal::Finite(x), ExtReal::Finite(y)) => prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs())),
                _ => prop_assert_eq!(l, r),
            }
        }

        #[test]
        fn min_is_associative_and_monotone(a in ext(), b in ext(), c in ext()) {
            prop_assert_eq!(a.min(b).min(c), a.min(b.min(c)));
            prop_assert!(a.min(b) <= a && a.min(b) <= b);
            // monotone: a ≤ b ⇒ a + c ≤ b + c and min(a,c) ≤ min(b,c)
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(lo + c <= hi + c);
            prop_assert!(lo.min(c) <= hi.min(c));
        }
    }
}
