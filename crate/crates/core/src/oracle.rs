//! Offline ground truth over a whole trace.
//!
//! Nothing here shares code with the online path: top-k is recomputed by a
//! full sort, and the lower bound on an offline filter-based algorithm comes
//! from a greedy partition of the time axis into windows that a single static
//! filter set can cover.

use serde::Serialize;

use crate::domain::{NodeId, Value};
use crate::error::{Error, Result};
use crate::trace::Trace;

fn check_k(trace: &Trace, k: usize) -> Result<()> {
    if k == 0 || k >= trace.n() {
        return Err(Error::KOutOfRange { k, n: trace.n(), min: 1, max: trace.n() - 1 });
    }
    Ok(())
}

/// Nodes of one row sorted best first: larger value, then smaller id.
fn ranked(row: &[Value]) -> Vec<(Value, u32)> {
    let mut pairs: Vec<(Value, u32)> =
        row.iter().enumerate().map(|(i, &v)| (v, i as u32 + 1)).collect();
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    pairs
}

/// Top-k at time `t` by full sort, best first.
pub fn brute_force_top_k(trace: &Trace, k: usize, t: u64) -> Result<Vec<NodeId>> {
    if k == 0 || k > trace.n() {
        return Err(Error::KOutOfRange { k, n: trace.n(), min: 1, max: trace.n() });
    }
    let snap = trace.snapshot(t)?;
    Ok(ranked(snap.values).into_iter().take(k).map(|(_, id)| NodeId::new(id)).collect())
}

/// Gap between the k-th and (k+1)-st largest value at each step.
pub fn boundary_gaps(trace: &Trace, k: usize) -> Result<Vec<Value>> {
    check_k(trace, k)?;
    Ok(trace
        .rows()
        .iter()
        .map(|row| {
            let r = ranked(row);
            r[k - 1].0 - r[k].0
        })
        .collect())
}

/// Largest boundary gap over the trace.
pub fn compute_delta(trace: &Trace, k: usize) -> Result<Value> {
    Ok(boundary_gaps(trace, k)?.into_iter().max().unwrap_or(0))
}

/// Per-step view used by the feasibility checks.
struct StepSplit {
    members: Vec<bool>,
    min_inside: Value,
    max_outside: Value,
}

fn split(row: &[Value], k: usize) -> StepSplit {
    let r = ranked(row);
    let mut members = vec![false; row.len()];
    for &(_, id) in &r[..k] {
        members[id as usize - 1] = true;
    }
    StepSplit { members, min_inside: r[k - 1].0, max_outside: r[k].0 }
}

/// True iff one filter set can stay valid for all of `[t1, t2]`: the top-k
/// set never changes and the smallest insider value in the window is at least
/// the largest outsider value in the window.
pub fn static_filter_feasible(trace: &Trace, k: usize, t1: u64, t2: u64) -> Result<bool> {
    check_k(trace, k)?;
    if t1 == 0 || t1 > t2 || t2 > trace.len() {
        return Err(Error::InvalidWindow { t1, t2, len: trace.len() });
    }
    let first = split(trace.snapshot(t1)?.values, k);
    let mut lo = Value::MAX;
    let mut hi = Value::MIN;
    for t in t1..=t2 {
        let s = split(trace.snapshot(t)?.values, k);
        if s.members != first.members {
            return Ok(false);
        }
        lo = lo.min(s.min_inside);
        hi = hi.max(s.max_outside);
    }
    Ok(lo >= hi)
}

/// Greedy maximal partition of `[1, T]` into statically coverable windows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OptPartition {
    /// Inclusive `[start, end]` time ranges in order.
    pub intervals: Vec<(u64, u64)>,
    /// Filter assignments any offline filter-based algorithm needs: one per
    /// interval, the initial assignment included.
    pub lower_bound: u64,
}

pub fn opt_lower_bound(trace: &Trace, k: usize) -> Result<OptPartition> {
    check_k(trace, k)?;
    let mut intervals = Vec::new();
    let mut start = 1u64;
    let mut current: Option<StepSplit> = None;

    for (i, row) in trace.rows().iter().enumerate() {
        let t = i as u64 + 1;
        let s = split(row, k);
        current = match current {
            Some(mut c)
                if c.members == s.members
                    && c.min_inside.min(s.min_inside) >= c.max_outside.max(s.max_outside) =>
            {
                c.min_inside = c.min_inside.min(s.min_inside);
                c.max_outside = c.max_outside.max(s.max_outside);
                Some(c)
            }
            Some(_) => {
                intervals.push((start, t - 1));
                start = t;
                Some(s)
            }
            None => Some(s),
        };
    }
    intervals.push((start, trace.len()));
    let lower_bound = intervals.len() as u64;
    Ok(OptPartition { intervals, lower_bound })
}

/// Reference message envelope
/// `(opt + 1) * (log2 delta + 1 + k) * (2 log2 n + 1)`.
///
/// A `delta` of zero (only possible with tied values) is read as one.
pub fn competitive_envelope(delta: Value, k: usize, n: usize, opt_lower_bound: u64) -> f64 {
    let log_delta = (delta.max(1) as f64).log2();
    (opt_lower_bound as f64 + 1.0) * (log_delta + 1.0 + k as f64) * (2.0 * (n as f64).log2() + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Nodes A, B, C over four steps.
    fn three_node() -> Trace {
        Trace::new(3, vec![vec![10, 5, 1], vec![10, 5, 1], vec![4, 8, 1], vec![4, 8, 1]]).unwrap()
    }

    #[test]
    fn top_k_examples() {
        let t = Trace::new(3, vec![vec![3, 9, 5]]).unwrap();
        assert_eq!(brute_force_top_k(&t, 1, 1).unwrap(), vec![NodeId::new(2)]);
        let t = Trace::new(4, vec![vec![9, 7, 4, 1]]).unwrap();
        assert_eq!(brute_force_top_k(&t, 2, 1).unwrap(), vec![NodeId::new(1), NodeId::new(2)]);
        assert!(matches!(brute_force_top_k(&t, 2, 2), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(brute_force_top_k(&t, 2, 0), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn delta_examples() {
        assert_eq!(boundary_gaps(&three_node(), 1).unwrap(), vec![5, 5, 4, 4]);
        assert_eq!(compute_delta(&three_node(), 1).unwrap(), 5);
        let constant = Trace::new(3, vec![vec![9, 6, 1]; 5]).unwrap();
        assert_eq!(compute_delta(&constant, 1).unwrap(), 3);
        assert_eq!(compute_delta(&constant, 2).unwrap(), 5);
        let single = Trace::new(2, vec![vec![2, 9]]).unwrap();
        assert_eq!(compute_delta(&single, 1).unwrap(), 7);
    }

    #[test]
    fn feasibility_examples() {
        let t = three_node();
        assert!(static_filter_feasible(&t, 1, 1, 2).unwrap());
        assert!(!static_filter_feasible(&t, 1, 1, 3).unwrap());
        assert!(static_filter_feasible(&t, 1, 3, 4).unwrap());

        // Insider 1 dips to 6 at step 2, below outsider 2's peak of 7 at step 1.
        let dip = Trace::new(3, vec![vec![10, 7, 1], vec![6, 5, 1]]).unwrap();
        assert!(static_filter_feasible(&dip, 1, 1, 1).unwrap());
        assert!(static_filter_feasible(&dip, 1, 2, 2).unwrap());
        assert!(!static_filter_feasible(&dip, 1, 1, 2).unwrap());

        let constant = Trace::new(3, vec![vec![9, 6, 1]; 5]).unwrap();
        assert!(static_filter_feasible(&constant, 2, 1, 5).unwrap());
        assert!(matches!(static_filter_feasible(&t, 1, 3, 2), Err(Error::InvalidWindow { .. })));
        assert!(matches!(static_filter_feasible(&t, 1, 1, 5), Err(Error::InvalidWindow { .. })));
        assert!(matches!(static_filter_feasible(&t, 3, 1, 1), Err(Error::KOutOfRange { .. })));
    }

    #[test]
    fn partition_examples() {
        let p = opt_lower_bound(&three_node(), 1).unwrap();
        assert_eq!(p.intervals, vec![(1, 2), (3, 4)]);
        assert_eq!(p.lower_bound, 2);

        let constant = Trace::new(3, vec![vec![9, 6, 1]; 5]).unwrap();
        assert_eq!(opt_lower_bound(&constant, 1).unwrap().intervals, vec![(1, 5)]);

        let flip: Vec<Vec<Value>> = (0..7).map(|t| if t % 2 == 0 { vec![5, 3] } else { vec![3, 5] }).collect();
        let flip = Trace::new(2, flip).unwrap();
        assert_eq!(opt_lower_bound(&flip, 1).unwrap().lower_bound, 7);
    }

    #[test]
    fn envelope_examples() {
        assert_eq!(competitive_envelope(1, 1, 2, 1), 12.0);
        let unit = 2.0 * (2.0 * 16f64.log2() + 1.0);
        let step = competitive_envelope(64, 3, 16, 1) - competitive_envelope(32, 3, 16, 1);
        assert!((step - unit).abs() < 1e-9);
        assert!(competitive_envelope(5, 2, 8, 3) < competitive_envelope(6, 2, 8, 3));
        assert!(competitive_envelope(5, 2, 8, 3) < competitive_envelope(5, 3, 8, 3));
        assert!(competitive_envelope(5, 2, 8, 3) < competitive_envelope(5, 2, 9, 3));
        assert!(competitive_envelope(5, 2, 8, 3) < competitive_envelope(5, 2, 8, 4));
    }

    fn small_trace() -> impl Strategy<Value = (Trace, usize)> {
        (2usize..=5, 1usize..=8).prop_flat_map(|(n, len)| {
            (
                prop::collection::vec(prop::collection::vec(0u64..=8, n), len),
                1..n,
            )
                .prop_map(move |(rows, k)| (Trace::new(n, rows).unwrap(), k))
        })
    }

    proptest! {
        #[test]
        fn single_steps_are_feasible((trace, k) in small_trace()) {
            for t in 1..=trace.len() {
                prop_assert!(static_filter_feasible(&trace, k, t, t).unwrap());
            }
        }

        #[test]
        fn partition_intervals_are_feasible_and_maximal((trace, k) in small_trace()) {
            let p = opt_lower_bound(&trace, k).unwrap();
            prop_assert_eq!(p.intervals[0].0, 1);
            prop_assert_eq!(p.intervals.last().unwrap().1, trace.len());
            for w in p.intervals.windows(2) {
                prop_assert_eq!(w[0].1 + 1, w[1].0);
            }
            for &(a, b) in &p.intervals {
                prop_assert!(static_filter_feasible(&trace, k, a, b).unwrap());
                if b < trace.len() {
                    prop_assert!(!static_filter_feasible(&trace, k, a, b + 1).unwrap());
                }
            }
        }

        #[test]
        fn lower_bound_is_monotone_under_concatenation(
            (a, k) in small_trace(),
            rows in prop::collection::vec(prop::collection::vec(0u64..=8, 5), 1..=8),
        ) {
            let b = Trace::new(a.n(), rows.into_iter().map(|mut r| { r.truncate(a.n()); r }).collect()).unwrap();
            let joined = a.concat(&b).unwrap();
            let lb = opt_lower_bound(&joined, k).unwrap().lower_bound;
            prop_assert!(lb >= opt_lower_bound(&a, k).unwrap().lower_bound);
            prop_assert!(lb >= opt_lower_bound(&b, k).unwrap().lower_bound);
        }

        #[test]
        fn brute_force_matches_core(values in prop::collection::vec(0u64..30, 2..=40), k_seed in any::<prop::sample::Index>()) {
            let k = k_seed.index(values.len()) + 1;
            let trace = Trace::new(values.len(), vec![values.clone()]).unwrap();
            prop_assert_eq!(
                brute_force_top_k(&trace, k, 1).unwrap(),
                crate::domain::compute_top_k(&values, k).unwrap()
            );
        }
    }
}
