//! Domain types shared by the monitor, the protocols and the oracle.
//!
//! Node values are natural numbers. A set of per-node values is passed as a
//! slice indexed by `NodeId::index()`, so it is total over `1..=n` by
//! construction.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed value of a node at one time step.
pub type Value = u64;

/// 1-based node identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(u32);

impl NodeId {
    /// Panics on `0`; identifiers start at 1.
    pub fn new(id: u32) -> Self {
        assert!(id >= 1, "node ids start at 1");
        NodeId(id)
    }

    pub fn from_index(index: usize) -> Self {
        NodeId(index as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Zero-based position in a per-node value slice.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A value extended with the two infinities used as open filter ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExtValue {
    NegInf,
    Finite(Value),
    PosInf,
}

impl fmt::Display for ExtValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtValue::NegInf => f.write_str("-inf"),
            ExtValue::Finite(v) => write!(f, "{v}"),
            ExtValue::PosInf => f.write_str("inf"),
        }
    }
}

impl From<Value> for ExtValue {
    fn from(v: Value) -> Self {
        ExtValue::Finite(v)
    }
}

/// Closed interval `[lower, upper]` over extended values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterInterval {
    lower: ExtValue,
    upper: ExtValue,
}

impl FilterInterval {
    pub fn new(lower: ExtValue, upper: ExtValue) -> Result<Self> {
        if lower > upper {
            return Err(Error::InvertedFilter);
        }
        Ok(FilterInterval { lower, upper })
    }

    /// `[m, inf]`, the filter of a top-k member.
    pub fn at_least(m: Value) -> Self {
        FilterInterval { lower: ExtValue::Finite(m), upper: ExtValue::PosInf }
    }

    /// `[-inf, m]`, the filter of a node outside the top-k.
    pub fn at_most(m: Value) -> Self {
        FilterInterval { lower: ExtValue::NegInf, upper: ExtValue::Finite(m) }
    }

    /// The point filter `[v, v]`.
    pub fn point(v: Value) -> Self {
        FilterInterval { lower: ExtValue::Finite(v), upper: ExtValue::Finite(v) }
    }

    pub fn lower(&self) -> ExtValue {
        self.lower
    }

    pub fn upper(&self) -> ExtValue {
        self.upper
    }

    pub fn contains(&self, v: Value) -> bool {
        let v = ExtValue::Finite(v);
        self.lower <= v && v <= self.upper
    }

    /// A value strictly outside the interval.
    pub fn is_violated_by(&self, v: Value) -> bool {
        !self.contains(v)
    }
}

impl fmt::Display for FilterInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lower, self.upper)
    }
}

/// Ranking key: larger value first, and among equal values the smaller id.
///
/// `RankKey` orders so that `a > b` means `a` ranks higher.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankKey {
    pub value: Value,
    pub node: NodeId,
}

impl RankKey {
    pub fn new(value: Value, node: NodeId) -> Self {
        RankKey { value, node }
    }
}

impl Ord for RankKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value.cmp(&other.value).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for RankKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `Greater` when `a` ranks above `b`.
pub fn rank_compare(a: (Value, NodeId), b: (Value, NodeId)) -> Ordering {
    RankKey::new(a.0, a.1).cmp(&RankKey::new(b.0, b.1))
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n, min: 1, max: n });
    }
    Ok(())
}

/// The `k` highest-ranked nodes, best first.
pub fn compute_top_k(values: &[Value], k: usize) -> Result<Vec<NodeId>> {
    check_k(k, values.len())?;
    let mut keys: Vec<RankKey> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| RankKey::new(v, NodeId::from_index(i)))
        .collect();
    let desc = |a: &RankKey, b: &RankKey| b.cmp(a);
    if k < keys.len() {
        keys.select_nth_unstable_by(k - 1, desc);
        keys.truncate(k);
    }
    keys.sort_unstable_by(desc);
    Ok(keys.into_iter().map(|key| key.node).collect())
}

/// Membership mask of the top-k set.
pub fn top_k_mask(values: &[Value], k: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; values.len()];
    for id in compute_top_k(values, k)? {
        mask[id.index()] = true;
    }
    Ok(mask)
}

/// One broken condition of a filter set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterViolation {
    /// The node's own value lies outside its filter.
    ValueOutside { node: NodeId, value: Value, filter: FilterInterval },
    /// A top-k member's lower bound is below an outsider's upper bound.
    Overlap { inside: NodeId, outside: NodeId, lower: ExtValue, upper: ExtValue },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid(Vec<FilterViolation>),
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }
}

/// Checks that `filters` form a set of filters for `values`: every value is
/// inside its own filter, and every top-k lower bound is at or above every
/// outsider upper bound. All violated conditions are reported.
pub fn validate_filter_set(
    filters: &[FilterInterval],
    values: &[Value],
    k: usize,
) -> Result<Validity> {
    if filters.len() != values.len() {
        return Err(Error::LengthMismatch { expected: values.len(), got: filters.len() });
    }
    let inside = top_k_mask(values, k)?;
    let mut violations = Vec::new();

    for (i, (f, &v)) in filters.iter().zip(values).enumerate() {
        if !f.contains(v) {
            violations.push(FilterViolation::ValueOutside {
                node: NodeId::from_index(i),
                value: v,
                filter: *f,
            });
        }
    }

    let min_lower = (0..values.len()).filter(|&i| inside[i]).map(|i| filters[i].lower).min();
    let max_upper = (0..values.len()).filter(|&i| !inside[i]).map(|i| filters[i].upper).max();
    if let (Some(lo), Some(hi)) = (min_lower, max_upper) {
        if lo < hi {
            for i in (0..values.len()).filter(|&i| inside[i]) {
                for j in (0..values.len()).filter(|&j| !inside[j]) {
                    if filters[i].lower < filters[j].upper {
                        violations.push(FilterViolation::Overlap {
                            inside: NodeId::from_index(i),
                            outside: NodeId::from_index(j),
                            lower: filters[i].lower,
                            upper: filters[j].upper,
                        });
                    }
                }
            }
        }
    }

    Ok(if violations.is_empty() { Validity::Valid } else { Validity::Invalid(violations) })
}

/// `floor((lo + hi) / 2)`.
pub fn midpoint(lo: Value, hi: Value) -> Result<Value> {
    if lo > hi {
        return Err(Error::EmptyInterval { lo, hi });
    }
    Ok(lo + (hi - lo) / 2)
}

/// Running extremes since the last filter reset at `t0`.
///
/// `t_plus` is the smallest value seen at a top-k member, `t_minus` the
/// largest value seen at a node outside the top-k.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowExtremes {
    pub t_plus: ExtValue,
    pub t_minus: ExtValue,
    pub t0: u64,
}

impl WindowExtremes {
    /// The neutral window: nothing observed yet.
    pub fn empty(t0: u64) -> Self {
        WindowExtremes { t_plus: ExtValue::PosInf, t_minus: ExtValue::NegInf, t0 }
    }

    pub fn new(t_plus: Value, t_minus: Value, t0: u64) -> Self {
        WindowExtremes { t_plus: t_plus.into(), t_minus: t_minus.into(), t0 }
    }

    /// True once the insider minimum fell below the outsider maximum.
    pub fn crossed(&self) -> bool {
        self.t_plus < self.t_minus
    }
}

pub fn extremes_update(
    w: WindowExtremes,
    new_min: Option<Value>,
    new_max: Option<Value>,
) -> WindowExtremes {
    let mut out = w;
    if let Some(m) = new_min {
        out.t_plus = out.t_plus.min(m.into());
    }
    if let Some(m) = new_max {
        out.t_minus = out.t_minus.max(m.into());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id(i: u32) -> NodeId {
        NodeId::new(i)
    }

    #[test]
    fn rank_order() {
        assert_eq!(rank_compare((5, id(3)), (7, id(1))), Ordering::Less);
        assert_eq!(rank_compare((5, id(3)), (5, id(1))), Ordering::Less);
        assert_eq!(rank_compare((5, id(3)), (5, id(3))), Ordering::Equal);
    }

    #[test]
    fn ext_value_order() {
        assert!(ExtValue::NegInf < ExtValue::Finite(0));
        assert!(ExtValue::Finite(u64::MAX) < ExtValue::PosInf);
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(compute_top_k(&[9, 7, 5, 3, 1], 2).unwrap(), vec![id(1), id(2)]);
        assert_eq!(compute_top_k(&[3, 9, 9], 2).unwrap(), vec![id(2), id(3)]);
        assert_eq!(compute_top_k(&[3, 9, 9], 3).unwrap(), vec![id(2), id(3), id(1)]);
        assert!(matches!(compute_top_k(&[1, 2], 0), Err(Error::KOutOfRange { .. })));
        assert!(matches!(compute_top_k(&[1, 2], 3), Err(Error::KOutOfRange { .. })));
    }

    #[test]
    fn filter_examples() {
        let ok = [FilterInterval::at_least(5), FilterInterval::at_most(5)];
        assert_eq!(validate_filter_set(&ok, &[8, 3], 1).unwrap(), Validity::Valid);

        let overlap = [FilterInterval::at_least(5), FilterInterval::at_most(6)];
        match validate_filter_set(&overlap, &[8, 3], 1).unwrap() {
            Validity::Invalid(v) => assert_eq!(
                v,
                vec![FilterViolation::Overlap {
                    inside: id(1),
                    outside: id(2),
                    lower: ExtValue::Finite(5),
                    upper: ExtValue::Finite(6),
                }]
            ),
            Validity::Valid => panic!("overlap accepted"),
        }

        let outside = [FilterInterval::at_least(9), FilterInterval::at_most(5)];
        match validate_filter_set(&outside, &[8, 3], 1).unwrap() {
            Validity::Invalid(v) => assert!(matches!(
                v.as_slice(),
                [FilterViolation::ValueOutside { value: 8, .. }]
            )),
            Validity::Valid => panic!("value outside its filter accepted"),
        }
    }

    #[test]
    fn boundary_point_is_inside() {
        let f = FilterInterval::at_least(5);
        assert!(f.contains(5));
        assert!(f.is_violated_by(4));
        assert!(FilterInterval::at_most(5).contains(5));
        assert!(FilterInterval::new(ExtValue::PosInf, ExtValue::Finite(1)).is_err());
    }

    #[test]
    fn midpoint_examples() {
        assert_eq!(midpoint(4, 10).unwrap(), 7);
        assert_eq!(midpoint(4, 5).unwrap(), 4);
        assert_eq!(midpoint(6, 6).unwrap(), 6);
        assert_eq!(midpoint(u64::MAX - 1, u64::MAX).unwrap(), u64::MAX - 1);
        assert!(matches!(midpoint(5, 4), Err(Error::EmptyInterval { lo: 5, hi: 4 })));
    }

    #[test]
    fn extremes_examples() {
        let w = WindowExtremes::new(10, 4, 0);
        assert_eq!(extremes_update(w, Some(7), None), WindowExtremes::new(7, 4, 0));
        assert_eq!(extremes_update(w, None, Some(9)), WindowExtremes::new(10, 9, 0));
        assert_eq!(extremes_update(w, Some(12), None), w);
    }

    fn full_sort_top_k(values: &[Value], k: usize) -> Vec<NodeId> {
        let mut ids: Vec<usize> = (0..values.len()).collect();
        ids.sort_by(|&a, &b| values[b].cmp(&values[a]).then(a.cmp(&b)));
        ids.into_iter().take(k).map(NodeId::from_index).collect()
    }

    proptest! {
        #[test]
        fn top_k_matches_full_sort(
            values in prop::collection::vec(0u64..40, 1..=64),
            k_seed in any::<prop::sample::Index>(),
        ) {
            let k = k_seed.index(values.len()) + 1;
            prop_assert_eq!(compute_top_k(&values, k).unwrap(), full_sort_top_k(&values, k));
        }

        #[test]
        fn rank_compare_is_a_total_order(
            a in (0u64..5, 1u32..5), b in (0u64..5, 1u32..5), c in (0u64..5, 1u32..5),
        ) {
            let (a, b, c) = ((a.0, id(a.1)), (b.0, id(b.1)), (c.0, id(c.1)));
            prop_assert_eq!(rank_compare(a, b), rank_compare(b, a).reverse());
            prop_assert_eq!(rank_compare(a, b) == Ordering::Equal, a == b);
            if rank_compare(a, b) != Ordering::Less && rank_compare(b, c) != Ordering::Less {
                prop_assert_ne!(rank_compare(a, c), Ordering::Less);
            }
        }

        #[test]
        fn midpoint_in_range(lo in any::<u64>(), hi in any::<u64>()) {
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            let m = midpoint(lo, hi).unwrap();
            prop_assert!(lo <= m && m <= hi);
            prop_assert_eq!(midpoint(lo, lo).unwrap(), lo);
        }

        #[test]
        fn extremes_are_monotone(
            updates in prop::collection::vec((prop::option::of(0u64..100), prop::option::of(0u64..100)), 0..40),
        ) {
            let mut w = WindowExtremes::new(60, 40, 3);
            for (lo, hi) in updates {
                let next = extremes_update(w, lo, hi);
                prop_assert!(next.t_plus <= w.t_plus);
                prop_assert!(next.t_minus >= w.t_minus);
                prop_assert_eq!(next.t0, 3);
                w = next;
            }
        }

        /// A valid filter set pins the top-k set under any in-filter move.
        /// Moves keep values pairwise distinct.
        #[test]
        fn valid_filters_freeze_top_k(
            values in prop::sample::subsequence((0u64..200).collect::<Vec<_>>(), 2..=16)
                .prop_shuffle(),
            k_seed in any::<prop::sample::Index>(),
            move_seed in any::<u64>(),
        ) {
            use rand::{seq::index::sample, SeedableRng};

            let n = values.len();
            let k = k_seed.index(n - 1) + 1;
            let mut sorted = values.clone();
            sorted.sort_unstable_by(|a, b| b.cmp(a));
            let m = midpoint(sorted[k], sorted[k - 1]).unwrap();
            let inside = top_k_mask(&values, k).unwrap();
            let filters: Vec<_> = inside
                .iter()
                .map(|&top| if top { FilterInterval::at_least(m) } else { FilterInterval::at_most(m) })
                .collect();
            prop_assert!(validate_filter_set(&filters, &values, k).unwrap().is_valid());

            let before = {
                let mut s = compute_top_k(&values, k).unwrap();
                s.sort();
                s
            };
            // Fresh distinct values: outsiders in [0, m], insiders in [m, m + 300].
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(move_seed);
            let low: Vec<Value> = sample(&mut rng, m as usize + 1, n - k).iter().map(|v| v as u64).collect();
            let base = if low.contains(&m) { m + 1 } else { m };
            let mut high = sample(&mut rng, 301, k).into_iter().map(|v| base + v as u64);
            let mut low = low.into_iter();
            let pool: Vec<Value> = inside
                .iter()
                .map(|&top| if top { high.next().unwrap() } else { low.next().unwrap() })
                .collect();
            prop_assert!(validate_filter_set(&filters, &pool, k).unwrap().is_valid());
            let mut after = compute_top_k(&pool, k).unwrap();
            after.sort();
            prop_assert_eq!(before, after);
        }
    }
}
