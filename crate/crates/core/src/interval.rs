//! Finite unions of closed intervals on the real line.
//!
//! [`IntervalUnion`] is the prediction-set object used throughout the crate.
//! A union is always stored normalized: components are sorted and strictly
//! separated (`hi[m] < lo[m + 1]`), so overlapping or touching inputs are
//! merged on construction. Comparisons use exact floating-point order.
//!
//! The full real line is represented by the single component `(-inf, inf)`.
//! In JSON, infinite endpoints are written as the strings `"-inf"` / `"inf"`.

use std::fmt;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed interval `[lo, hi]`, possibly degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        // NaN fails this test as well.
        if !(lo <= hi) {
            return Err(Error::MalformedInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn full_line() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains_point(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }

    pub fn contains(&self, lo: f64, hi: f64) -> bool {
        self.lo <= lo && hi <= self.hi
    }
}

/// A finite disjoint union of closed intervals, sorted and strictly separated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalUnion {
    intervals: Vec<Interval>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn full_line() -> Self {
        Self {
            intervals: vec![Interval::full_line()],
        }
    }

    pub fn single(interval: Interval) -> Self {
        Self {
            intervals: vec![interval],
        }
    }

    /// Sort and merge overlapping or touching intervals.
    pub fn normalize(raw: &[Interval]) -> Result<Self> {
        for iv in raw {
            if !(iv.lo <= iv.hi) {
                return Err(Error::MalformedInterval { lo: iv.lo, hi: iv.hi });
            }
        }
        let mut sorted = raw.to_vec();
        sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
        let mut out: Vec<Interval> = Vec::with_capacity(sorted.len());
        for iv in sorted {
            match out.last_mut() {
                Some(last) if iv.lo <= last.hi => {
                    if iv.hi > last.hi {
                        last.hi = iv.hi;
                    }
                }
                _ => out.push(iv),
            }
        }
        Ok(Self { intervals: out })
    }

    /// Build from `(lo, hi)` pairs, normalizing.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let raw: Vec<Interval> = pairs.iter().map(|&(lo, hi)| Interval { lo, hi }).collect();
        Self::normalize(&raw)
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn is_full_line(&self) -> bool {
        self.intervals.len() == 1
            && self.intervals[0].lo == f64::NEG_INFINITY
            && self.intervals[0].hi == f64::INFINITY
    }

    pub fn to_pairs(&self) -> Vec<(f64, f64)> {
        self.intervals.iter().map(|iv| (iv.lo, iv.hi)).collect()
    }

    /// Lebesgue measure.
    pub fn volume(&self) -> f64 {
        self.intervals.iter().map(Interval::length).sum()
    }

    /// Index of the only component that could contain a point or bracket
    /// starting at `lo`: the last component whose left end is `<= lo`.
    fn candidate(&self, lo: f64) -> Option<&Interval> {
        let idx = self.intervals.partition_point(|iv| iv.lo <= lo);
        if idx == 0 {
            None
        } else {
            Some(&self.intervals[idx - 1])
        }
    }

    pub fn contains_point(&self, y: f64) -> bool {
        self.candidate(y).is_some_and(|iv| y <= iv.hi)
    }

    /// True iff `[y_lo, y_hi]` sits inside a single component.
    pub fn contains_bracket(&self, y_lo: f64, y_hi: f64) -> bool {
        self.candidate(y_lo).is_some_and(|iv| y_hi <= iv.hi)
    }

    /// `mu(A \ B) + mu(B \ A)`, by sweeping the merged endpoint set.
    pub fn sym_diff_volume(&self, other: &IntervalUnion) -> f64 {
        let mut pts: Vec<f64> = self
            .intervals
            .iter()
            .chain(other.intervals.iter())
            .flat_map(|iv| [iv.lo, iv.hi])
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut total = 0.0;
        for w in pts.windows(2) {
            let (p, q) = (w[0], w[1]);
            let mid = match (p.is_finite(), q.is_finite()) {
                (true, true) => 0.5 * (p + q),
                (false, true) => q - 1.0,
                (true, false) => p + 1.0,
                (false, false) => 0.0,
            };
            if self.contains_point(mid) != other.contains_point(mid) {
                total += q - p;
            }
        }
        total
    }

    /// Widen (or shrink, for negative `by`) every component by `by` on each
    /// side, dropping components that become empty and merging overlaps.
    pub fn inflate(&self, by: f64) -> IntervalUnion {
        if by == f64::INFINITY {
            return IntervalUnion::full_line();
        }
        if by == f64::NEG_INFINITY {
            return IntervalUnion::empty();
        }
        let raw: Vec<Interval> = self
            .intervals
            .iter()
            .map(|iv| Interval {
                lo: iv.lo - by,
                hi: iv.hi + by,
            })
            .filter(|iv| iv.lo <= iv.hi)
            .collect();
        IntervalUnion::normalize(&raw).expect("filtered intervals are well formed")
    }

    fn validate_sorted(intervals: Vec<Interval>) -> Result<Self> {
        for iv in &intervals {
            if !(iv.lo <= iv.hi) {
                return Err(Error::MalformedInterval { lo: iv.lo, hi: iv.hi });
            }
        }
        for w in intervals.windows(2) {
            if !(w[0].hi < w[1].lo) {
                return Err(Error::InvalidConfig(format!(
                    "interval union components [{}, {}] and [{}, {}] are not sorted and disjoint",
                    w[0].lo, w[0].hi, w[1].lo, w[1].hi
                )));
            }
        }
        Ok(Self { intervals })
    }
}

impl fmt::Display for IntervalUnion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.intervals.is_empty() {
            return write!(f, "{{}}");
        }
        for (i, iv) in self.intervals.iter().enumerate() {
            if i > 0 {
                write!(f, " u ")?;
            }
            write!(f, "[{}, {}]", iv.lo, iv.hi)?;
        }
        Ok(())
    }
}

pub fn normalize_union(raw: &[Interval]) -> Result<IntervalUnion> {
    IntervalUnion::normalize(raw)
}

pub fn volume(c: &IntervalUnion) -> f64 {
    c.volume()
}

pub fn sym_diff_volume(a: &IntervalUnion, b: &IntervalUnion) -> f64 {
    a.sym_diff_volume(b)
}

pub fn contains_bracket(c: &IntervalUnion, y_lo: f64, y_hi: f64) -> bool {
    c.contains_bracket(y_lo, y_hi)
}

/// Serde adapter writing non-finite endpoints as `"inf"` / `"-inf"`.
pub(crate) struct Endpoint(pub f64);

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct EndpointVisitor;
        impl Visitor<'_> for EndpointVisitor {
            type Value = Endpoint;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"inf\" / \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Endpoint, E> {
                Ok(Endpoint(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Endpoint, E> {
                Ok(Endpoint(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Endpoint, E> {
                Ok(Endpoint(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Endpoint, E> {
                match v {
                    "inf" | "+inf" => Ok(Endpoint(f64::INFINITY)),
                    "-inf" => Ok(Endpoint(f64::NEG_INFINITY)),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(EndpointVisitor)
    }
}

impl Serialize for IntervalUnion {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.intervals.len()))?;
        for iv in &self.intervals {
            seq.serialize_element(&(Endpoint(iv.lo), Endpoint(iv.hi)))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for IntervalUnion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct UnionVisitor;
        impl<'de> Visitor<'de> for UnionVisitor {
            type Value = IntervalUnion;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a sorted array of [lo, hi] pairs")
            }
            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<IntervalUnion, A::Error> {
                let mut out = Vec::new();
                while let Some((lo, hi)) = seq.next_element::<(Endpoint, Endpoint)>()? {
                    out.push(Interval { lo: lo.0, hi: hi.0 });
                }
                IntervalUnion::validate_sorted(out).map_err(de::Error::custom)
            }
        }
        d.deserialize_seq(UnionVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn u(pairs: &[(f64, f64)]) -> IntervalUnion {
        IntervalUnion::from_pairs(pairs).unwrap()
    }

    #[test]
    fn normalize_merges_overlap() {
        assert_eq!(u(&[(0.0, 1.0), (0.5, 2.0)]).to_pairs(), vec![(0.0, 2.0)]);
    }

    #[test]
    fn normalize_sorts() {
        assert_eq!(
            u(&[(3.0, 4.0), (0.0, 1.0)]).to_pairs(),
            vec![(0.0, 1.0), (3.0, 4.0)]
        );
    }

    #[test]
    fn normalize_empty() {
        assert!(u(&[]).is_empty());
    }

    #[test]
    fn normalize_merges_touching() {
        assert_eq!(u(&[(1.0, 2.0), (0.0, 1.0)]).to_pairs(), vec![(0.0, 2.0)]);
    }

    #[test]
    fn normalize_rejects_malformed() {
        let err = IntervalUnion::from_pairs(&[(2.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::MalformedInterval { .. }));
        assert!(IntervalUnion::from_pairs(&[(f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn volume_examples() {
        assert_eq!(u(&[(0.0, 1.0), (3.0, 4.0)]).volume(), 2.0);
        assert_eq!(u(&[(2.0, 2.0)]).volume(), 0.0);
        assert_eq!(u(&[]).volume(), 0.0);
    }

    #[test]
    fn sym_diff_examples() {
        assert_eq!(u(&[(0.0, 1.0)]).sym_diff_volume(&u(&[(0.0, 1.0)])), 0.0);
        assert_eq!(u(&[(0.0, 1.0)]).sym_diff_volume(&u(&[(0.5, 1.5)])), 1.0);
        assert_eq!(
            u(&[(0.0, 1.0), (2.0, 3.0)]).sym_diff_volume(&u(&[(0.0, 3.0)])),
            1.0
        );
    }

    #[test]
    fn sym_diff_with_full_line() {
        let full = IntervalUnion::full_line();
        assert_eq!(full.sym_diff_volume(&full), 0.0);
        assert_eq!(full.sym_diff_volume(&u(&[(0.0, 1.0)])), f64::INFINITY);
    }

    #[test]
    fn contains_bracket_examples() {
        let c = u(&[(0.0, 1.0), (3.0, 4.0)]);
        assert!(c.contains_bracket(0.2, 0.8));
        assert!(!c.contains_bracket(0.5, 3.5));
        assert!(u(&[(0.0, 1.0)]).contains_bracket(1.0, 1.0));
        assert!(!u(&[]).contains_bracket(0.0, 0.0));
        assert!(IntervalUnion::full_line().contains_bracket(-1e300, 1e300));
    }

    #[test]
    fn inflate_merges_and_drops() {
        let c = u(&[(0.0, 1.0), (1.5, 2.0)]);
        assert_eq!(c.inflate(0.3).to_pairs(), vec![(-0.3, 2.3)]);
        assert!(u(&[(0.0, 1.0)]).inflate(-0.6).is_empty());
        assert_eq!(u(&[(0.0, 1.0)]).inflate(-0.5).to_pairs(), vec![(0.5, 0.5)]);
        assert!(c.inflate(f64::INFINITY).is_full_line());
        assert_eq!(c.inflate(0.0), c);
    }

    #[test]
    fn json_round_trip_with_infinities() {
        let c = u(&[(-1.25, 0.5), (3.0, 4.0)]);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, "[[-1.25,0.5],[3.0,4.0]]");
        assert_eq!(serde_json::from_str::<IntervalUnion>(&s).unwrap(), c);

        let full = IntervalUnion::full_line();
        let s = serde_json::to_string(&full).unwrap();
        assert_eq!(s, r#"[["-inf","inf"]]"#);
        assert!(serde_json::from_str::<IntervalUnion>(&s).unwrap().is_full_line());
    }

    #[test]
    fn json_rejects_unsorted() {
        assert!(serde_json::from_str::<IntervalUnion>("[[3,4],[0,1]]").is_err());
        assert!(serde_json::from_str::<IntervalUnion>("[[0,1],[1,2]]").is_err());
        assert!(serde_json::from_str::<IntervalUnion>("[[1,0]]").is_err());
    }

    fn raw_intervals() -> impl Strategy<Value = Vec<Interval>> {
        prop::collection::vec((-20i32..20, 0i32..6), 0..8).prop_map(|v| {
            v.into_iter()
                .map(|(lo, w)| Interval {
                    lo: lo as f64 * 0.5,
                    hi: (lo + w) as f64 * 0.5,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in raw_intervals()) {
            let once = IntervalUnion::normalize(&raw).unwrap();
            let twice = IntervalUnion::normalize(once.intervals()).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn normalized_output_is_strictly_separated(raw in raw_intervals()) {
            let c = IntervalUnion::normalize(&raw).unwrap();
            for w in c.intervals().windows(2) {
                prop_assert!(w[0].hi < w[1].lo);
            }
        }

        #[test]
        fn union_volume_is_subadditive(a in raw_intervals(), b in raw_intervals()) {
            let ua = IntervalUnion::normalize(&a).unwrap();
            let ub = IntervalUnion::normalize(&b).unwrap();
            let mut both = a.clone();
            both.extend(b.iter().copied());
            let uab = IntervalUnion::normalize(&both).unwrap();
            prop_assert!(uab.volume() <= ua.volume() + ub.volume() + 1e-12);
            let disjoint = ua
                .intervals()
                .iter()
                .all(|x| ub.intervals().iter().all(|y| x.hi < y.lo || y.hi < x.lo));
            if disjoint {
                prop_assert_eq!(uab.volume(), ua.volume() + ub.volume());
            }
        }

        #[test]
        fn sym_diff_triangle(a in raw_intervals(), b in raw_intervals(), c in raw_intervals()) {
            let (a, b, c) = (
                IntervalUnion::normalize(&a).unwrap(),
                IntervalUnion::normalize(&b).unwrap(),
                IntervalUnion::normalize(&c).unwrap(),
            );
            prop_assert_eq!(a.sym_diff_volume(&b), b.sym_diff_volume(&a));
            prop_assert!(a.sym_diff_volume(&c) <= a.sym_diff_volume(&b) + b.sym_diff_volume(&c) + 1e-12);
        }

        #[test]
        fn point_bracket_is_membership(raw in raw_intervals(), y in -25i32..25) {
            let c = IntervalUnion::normalize(&raw).unwrap();
            let y = y as f64 * 0.5;
            let member = c.intervals().iter().any(|iv| iv.contains_point(y));
            prop_assert_eq!(c.contains_bracket(y, y), member);
            prop_assert_eq!(c.contains_point(y), member);
        }

        #[test]
        fn contains_bracket_matches_scan(raw in raw_intervals(), lo in -25i32..25, w in 0i32..8) {
            let c = IntervalUnion::normalize(&raw).unwrap();
            let (lo, hi) = (lo as f64 * 0.5, (lo + w) as f64 * 0.5);
            let scan = c.intervals().iter().any(|iv| iv.contains(lo, hi));
            prop_assert_eq!(c.contains_bracket(lo, hi), scan);
        }
    }
}
