//! Traces: one value per (time step, node).

use crate::domain::{NodeId, Value};
use crate::error::{Error, Result};

/// Values of all `n` nodes at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Snapshot<'a> {
    pub t: u64,
    pub values: &'a [Value],
}

impl Snapshot<'_> {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, node: NodeId) -> Value {
        self.values[node.index()]
    }
}

/// A finite value matrix. Row `t - 1` holds the values at time `t`; times
/// run `1..=len()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    n: usize,
    rows: Vec<Vec<Value>>,
}

impl Trace {
    pub fn new(n: usize, rows: Vec<Vec<Value>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimensions("a trace needs at least one node".into()));
        }
        if rows.is_empty() {
            return Err(Error::InvalidDimensions("a trace needs at least one time step".into()));
        }
        if let Some(row) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::LengthMismatch { expected: n, got: row.len() });
        }
        Ok(Trace { n, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> u64 {
        self.rows.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn snapshot(&self, t: u64) -> Result<Snapshot<'_>> {
        if t == 0 || t > self.len() {
            return Err(Error::TimeOutOfRange { t, len: self.len() });
        }
        Ok(Snapshot { t, values: &self.rows[t as usize - 1] })
    }

    pub fn snapshots(&self) -> impl Iterator<Item = Snapshot<'_>> {
        self.rows.iter().enumerate().map(|(i, values)| Snapshot { t: i as u64 + 1, values })
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    /// Steps `t1..=t2` as a new trace starting at time 1.
    pub fn slice(&self, t1: u64, t2: u64) -> Result<Trace> {
        if t1 == 0 || t1 > t2 || t2 > self.len() {
            return Err(Error::InvalidWindow { t1, t2, len: self.len() });
        }
        Ok(Trace { n: self.n, rows: self.rows[t1 as usize - 1..t2 as usize].to_vec() })
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &Trace) -> Result<Trace> {
        if self.n != other.n {
            return Err(Error::LengthMismatch { expected: self.n, got: other.n });
        }
        let mut rows = self.rows.clone();
        rows.extend_from_slice(&other.rows);
        Ok(Trace { n: self.n, rows })
    }

    /// True when no snapshot contains a repeated value.
    pub fn is_value_distinct(&self) -> bool {
        self.rows.iter().all(|row| {
            let mut sorted = row.clone();
            sorted.sort_unstable();
            sorted.windows(2).all(|w| w[0] != w[1])
        })
    }
}
