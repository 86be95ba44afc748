//! Shared domain types: training preferences, the tunable `(M, E)` pair,
//! overhead quadruples, cost constants, and the preference-weighted
//! comparison between two overhead measurements.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for an exact preference sum.
pub const PREFERENCE_SUM_TOLERANCE: f64 = 1e-9;

/// Sums within this distance of 1 are accepted and renormalized, so that
/// rows written as `0.33, 0.33, 0.33, 0.0` remain usable.
pub const PREFERENCE_RENORMALIZE_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("preference weight `{name}` is negative ({value})")]
    NegativeWeight { name: &'static str, value: f64 },
    #[error("preference weights sum to {sum}, expected 1")]
    SumNotOne { sum: f64 },
    #[error("comparison denominator `{component}` is not positive")]
    ZeroDenominator { component: &'static str },
    #[error("cost input `{name}` must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("hyper-parameter `{name}` must be at least 1")]
    ZeroHyperParam { name: &'static str },
    #[error("local passes must be a whole number >= 1 or a fraction in (0, 1), got {0}")]
    InvalidPasses(f64),
}

/// Relative concern for CompT, TransT, CompL and TransL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Preferences {
    /// Validates a preference vector.
    ///
    /// Weights must be nonnegative. A sum within `1e-9` of one is taken as
    /// is; a sum within `0.02` is rescaled to exactly one (and logged);
    /// anything further away is rejected.
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self, TypeError> {
        for (name, value) in [("alpha", alpha), ("beta", beta), ("gamma", gamma), ("delta", delta)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(TypeError::NegativeWeight { name, value });
            }
        }
        let sum = alpha + beta + gamma + delta;
        if (sum - 1.0).abs() <= PREFERENCE_SUM_TOLERANCE {
            return Ok(Self { alpha, beta, gamma, delta });
        }
        if (sum - 1.0).abs() <= PREFERENCE_RENORMALIZE_TOLERANCE {
            log::debug!(
                "renormalizing preferences ({alpha}, {beta}, {gamma}, {delta}) with sum {sum}"
            );
            return Ok(Self {
                alpha: alpha / sum,
                beta: beta / sum,
                gamma: gamma / sum,
                delta: delta / sum,
            });
        }
        Err(TypeError::SumNotOne { sum })
    }

    pub fn from_array(w: [f64; 4]) -> Result<Self, TypeError> {
        Self::new(w[0], w[1], w[2], w[3])
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.delta]
    }

    pub fn equal() -> Self {
        Self { alpha: 0.25, beta: 0.25, gamma: 0.25, delta: 0.25 }
    }

    /// The fifteen preference combinations used for the comparison grid:
    /// four pure, six pairs, four triples and the uniform vector.
    pub fn standard_grid() -> Vec<Self> {
        let rows: [[f64; 4]; 15] = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.5, 0.0, 0.5, 0.0],
            [0.5, 0.0, 0.0, 0.5],
            [0.0, 0.5, 0.5, 0.0],
            [0.0, 0.5, 0.0, 0.5],
            [0.0, 0.0, 0.5, 0.5],
            [0.33, 0.33, 0.33, 0.0],
            [0.33, 0.33, 0.0, 0.33],
            [0.33, 0.0, 0.33, 0.33],
            [0.0, 0.33, 0.33, 0.33],
            [0.25, 0.25, 0.25, 0.25],
        ];
        rows.iter()
            .map(|w| Self::from_array(*w).expect("grid rows are valid"))
            .collect()
    }
}

impl fmt::Display for Preferences {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.alpha, self.beta, self.gamma, self.delta)
    }
}

/// The tunable pair: participants per round and local passes per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HyperParams {
    pub m: usize,
    pub e: u32,
}

impl HyperParams {
    pub fn new(m: usize, e: u32) -> Result<Self, TypeError> {
        if m == 0 {
            return Err(TypeError::ZeroHyperParam { name: "m" });
        }
        if e == 0 {
            return Err(TypeError::ZeroHyperParam { name: "e" });
        }
        Ok(Self { m, e })
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(M={}, E={})", self.m, self.e)
    }
}

/// Local training passes per round. Whole passes drive the tuner; a
/// fraction in `(0, 1)` trains one pass over that share of the shard and is
/// only used by sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalPasses {
    Whole(u32),
    Fraction(f64),
}

impl LocalPasses {
    pub fn from_f64(value: f64) -> Result<Self, TypeError> {
        if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
            Ok(Self::Whole(value as u32))
        } else if value > 0.0 && value < 1.0 {
            Ok(Self::Fraction(value))
        } else {
            Err(TypeError::InvalidPasses(value))
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Self::Whole(e) => e as f64,
            Self::Fraction(f) => f,
        }
    }

    pub fn whole(self) -> Option<u32> {
        match self {
            Self::Whole(e) => Some(e),
            Self::Fraction(_) => None,
        }
    }
}

impl From<u32> for LocalPasses {
    fn from(e: u32) -> Self {
        Self::Whole(e)
    }
}

impl fmt::Display for LocalPasses {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Whole(e) => write!(f, "{e}"),
            Self::Fraction(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for LocalPasses {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Whole(e) => s.serialize_u32(*e),
            Self::Fraction(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for LocalPasses {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(d)?;
        Self::from_f64(value).map_err(serde::de::Error::custom)
    }
}

/// One (CompT, TransT, CompL, TransL) quadruple.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OverheadVector {
    pub comp_time: f64,
    pub trans_time: f64,
    pub comp_load: f64,
    pub trans_load: f64,
}

pub const OVERHEAD_NAMES: [&str; 4] = ["comp_time", "trans_time", "comp_load", "trans_load"];

impl OverheadVector {
    pub const ZERO: Self = Self { comp_time: 0.0, trans_time: 0.0, comp_load: 0.0, trans_load: 0.0 };

    pub fn new(comp_time: f64, trans_time: f64, comp_load: f64, trans_load: f64) -> Self {
        Self { comp_time, trans_time, comp_load, trans_load }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.comp_time, self.trans_time, self.comp_load, self.trans_load]
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_array(self.as_array().map(|x| x * factor))
    }

    /// True when every component of `self` is at least the matching one in `other`.
    pub fn dominates(&self, other: &Self) -> bool {
        self.as_array().iter().zip(other.as_array()).all(|(a, b)| *a >= b)
    }
}

impl Add for OverheadVector {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::new(
            self.comp_time + rhs.comp_time,
            self.trans_time + rhs.trans_time,
            self.comp_load + rhs.comp_load,
            self.trans_load + rhs.trans_load,
        )
    }
}

impl Sub for OverheadVector {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        Self::new(
            self.comp_time - rhs.comp_time,
            self.trans_time - rhs.trans_time,
            self.comp_load - rhs.comp_load,
            self.trans_load - rhs.trans_load,
        )
    }
}

/// Per-unit costs: `c1`/`c3` scale computation, `c2`/`c4` scale transmission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl CostConstants {
    pub fn new(c1: f64, c2: f64, c3: f64, c4: f64) -> Result<Self, TypeError> {
        for (name, value) in [("c1", c1), ("c2", c2), ("c3", c3), ("c4", c4)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(TypeError::NonPositive { name, value });
            }
        }
        Ok(Self { c1, c2, c3, c4 })
    }

    pub fn unit() -> Self {
        Self { c1: 1.0, c2: 1.0, c3: 1.0, c4: 1.0 }
    }

    pub fn scale(&self, factor: f64) -> Result<Self, TypeError> {
        Self::new(self.c1 * factor, self.c2 * factor, self.c3 * factor, self.c4 * factor)
    }
}

/// Preference-weighted sum of relative deltas from `first` to `second`.
///
/// A negative value means `second` is the better configuration. Terms with a
/// zero preference weight are skipped, so only weighted components of
/// `first` need to be positive.
pub fn compare(
    first: &OverheadVector,
    second: &OverheadVector,
    prefs: &Preferences,
) -> Result<f64, TypeError> {
    let weights = prefs.as_array();
    let a = first.as_array();
    let b = second.as_array();
    let mut total = 0.0;
    for i in 0..4 {
        if weights[i] == 0.0 {
            continue;
        }
        if !(a[i] > 0.0) {
            return Err(TypeError::ZeroDenominator { component: OVERHEAD_NAMES[i] });
        }
        total += weights[i] * (b[i] - a[i]) / a[i];
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_rows_validate() {
        assert!(Preferences::new(0.25, 0.25, 0.25, 0.25).is_ok());
        assert!(Preferences::new(1.0, 0.0, 0.0, 0.0).is_ok());
        assert_eq!(Preferences::standard_grid().len(), 15);
    }

    #[test]
    fn rejects_bad_sums_and_signs() {
        assert!(matches!(
            Preferences::new(0.5, 0.6, 0.0, 0.0),
            Err(TypeError::SumNotOne { .. })
        ));
        assert!(matches!(
            Preferences::new(1.2, -0.2, 0.0, 0.0),
            Err(TypeError::NegativeWeight { name: "beta", .. })
        ));
        assert!(Preferences::new(f64::NAN, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn rounded_thirds_are_renormalized() {
        let p = Preferences::new(0.33, 0.33, 0.33, 0.0).unwrap();
        let sum: f64 = p.as_array().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!((p.alpha - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn compare_examples() {
        let x = OverheadVector::new(3.0, 4.0, 5.0, 6.0);
        assert_eq!(compare(&x, &x, &Preferences::equal()).unwrap(), 0.0);

        let pure_t = Preferences::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let a = OverheadVector::new(100.0, 1.0, 1.0, 1.0);
        let b = OverheadVector::new(80.0, 1.0, 1.0, 1.0);
        assert!((compare(&a, &b, &pure_t).unwrap() + 0.2).abs() < 1e-15);

        let half = Preferences::new(0.5, 0.5, 0.0, 0.0).unwrap();
        let a = OverheadVector::new(100.0, 100.0, 1.0, 1.0);
        let b = OverheadVector::new(110.0, 90.0, 1.0, 1.0);
        assert!(compare(&a, &b, &half).unwrap().abs() < 1e-15);
    }

    #[test]
    fn compare_zero_denominator() {
        let a = OverheadVector::new(0.0, 1.0, 1.0, 1.0);
        let b = OverheadVector::new(1.0, 1.0, 1.0, 1.0);
        let err = compare(&a, &b, &Preferences::equal()).unwrap_err();
        assert_eq!(err, TypeError::ZeroDenominator { component: "comp_time" });
        // unweighted components are never divided by
        let p = Preferences::new(0.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(compare(&a, &b, &p).unwrap(), 0.0);
    }

    #[test]
    fn local_passes_parsing() {
        assert_eq!(LocalPasses::from_f64(4.0).unwrap(), LocalPasses::Whole(4));
        assert_eq!(LocalPasses::from_f64(0.5).unwrap(), LocalPasses::Fraction(0.5));
        assert!(LocalPasses::from_f64(1.5).is_err());
        assert!(LocalPasses::from_f64(0.0).is_err());
        let json = serde_json::to_string(&LocalPasses::Whole(3)).unwrap();
        assert_eq!(json, "3");
        let back: LocalPasses = serde_json::from_str("0.5").unwrap();
        assert_eq!(back, LocalPasses::Fraction(0.5));
    }

    fn positive_vector() -> impl Strategy<Value = OverheadVector> {
        prop::array::uniform4(1.0f64..1e6).prop_map(OverheadVector::from_array)
    }

    fn any_prefs() -> impl Strategy<Value = Preferences> {
        prop::array::uniform4(0.0f64..1.0)
            .prop_filter("nonzero", |w| w.iter().sum::<f64>() > 1e-3)
            .prop_map(|w| {
                let s: f64 = w.iter().sum();
                Preferences::from_array(w.map(|x| x / s)).unwrap()
            })
    }

    proptest! {
        #[test]
        fn compare_self_is_zero(x in positive_vector(), p in any_prefs()) {
            prop_assert_eq!(compare(&x, &x, &p).unwrap(), 0.0);
        }

        #[test]
        fn compare_doubles_with_relative_deltas(
            a in positive_vector(),
            rel in prop::array::uniform4(-0.4f64..0.4),
            p in any_prefs(),
        ) {
            let arr = a.as_array();
            let once = OverheadVector::from_array([0, 1, 2, 3].map(|i| arr[i] * (1.0 + rel[i])));
            let twice = OverheadVector::from_array([0, 1, 2, 3].map(|i| arr[i] * (1.0 + 2.0 * rel[i])));
            let i1 = compare(&a, &once, &p).unwrap();
            let i2 = compare(&a, &twice, &p).unwrap();
            prop_assert!((i2 - 2.0 * i1).abs() < 1e-9);
        }

        #[test]
        fn compare_is_scale_free_per_component(
            a in positive_vector(),
            b in positive_vector(),
            k in 0.01f64..100.0,
            which in 0usize..4,
            p in any_prefs(),
        ) {
            let mut sa = a.as_array();
            let mut sb = b.as_array();
            sa[which] *= k;
            sb[which] *= k;
            let base = compare(&a, &b, &p).unwrap();
            let scaled = compare(&OverheadVector::from_array(sa), &OverheadVector::from_array(sb), &p).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-9 * (1.0 + base.abs()));
        }

        #[test]
        fn pure_preference_sign(a in positive_vector(), b in positive_vector(), which in 0usize..4) {
            let mut w = [0.0; 4];
            w[which] = 1.0;
            let p = Preferences::from_array(w).unwrap();
            let i = compare(&a, &b, &p).unwrap();
            let delta = b.as_array()[which] - a.as_array()[which];
            prop_assert_eq!(i.signum() == delta.signum() || (i == 0.0 && delta == 0.0), true);
        }
    }
}
