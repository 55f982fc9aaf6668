//! Filter-based top-k position monitoring.
//!
//! Top-k members hold filters `[M, inf]`, everyone else `[-inf, M]`. A node
//! whose value leaves its filter takes part in an extremum protocol: former
//! top-k members look for their minimum (bound `k`), the others for their
//! maximum (bound `n - k`). The coordinator then completes the missing side,
//! folds both into the window extremes and either moves `M` to their midpoint
//! or, once the extremes have crossed, rebuilds the top-k from scratch with
//! `k + 1` maximum searches.

use serde::Serialize;

use crate::domain::{
    extremes_update, midpoint, ExtValue, FilterInterval, NodeId, Value, WindowExtremes,
};
use crate::error::{Error, Result};
use crate::protocols::{run_extremum, InvocationKey, Mode, ProtocolConfig, ProtocolOutcome, RandomSource};
use crate::trace::Snapshot;
use crate::transport::{Fabric, MessageKind, MessageTally, Payload};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MonitorConfig {
    pub k: usize,
    pub seed: u64,
    /// Forwarded to every protocol run.
    pub silent_rounds: bool,
}

impl MonitorConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        MonitorConfig { k, seed, silent_rounds: false }
    }
}

/// What the coordinator knows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoordinatorState {
    /// Top-k as found by the last reset, best first.
    pub top_k: Vec<NodeId>,
    pub members: Vec<bool>,
    pub filters: Vec<FilterInterval>,
    pub extremes: WindowExtremes,
    pub current_m: Value,
    pub k: usize,
    pub n: usize,
}

impl CoordinatorState {
    /// Filters `[m, inf]` for `top_k` and `[-inf, m]` for the rest.
    pub fn anchored(n: usize, top_k: Vec<NodeId>, m: Value, extremes: WindowExtremes) -> Self {
        let mut members = vec![false; n];
        for id in &top_k {
            members[id.index()] = true;
        }
        let filters = members
            .iter()
            .map(|&inside| if inside { FilterInterval::at_least(m) } else { FilterInterval::at_most(m) })
            .collect();
        CoordinatorState { k: top_k.len(), top_k, members, filters, extremes, current_m: m, n }
    }

    /// The monitored top-k set in ascending id order.
    pub fn answer(&self) -> Vec<NodeId> {
        (0..self.n).filter(|&i| self.members[i]).map(NodeId::from_index).collect()
    }
}

/// What a node knows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeView {
    pub id: NodeId,
    pub value: Value,
    pub filter: FilterInterval,
    /// Top-k membership as of the previous time step.
    pub was_top_k: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepReport {
    pub t: u64,
    pub violations: Vec<NodeId>,
    pub handler_invoked: bool,
    pub reset_invoked: bool,
    /// A filter broadcast went out during this step.
    pub filters_changed: bool,
    pub tally_delta: MessageTally,
    /// Monitored top-k set, ascending ids.
    pub answer: Vec<NodeId>,
}

pub struct Monitor {
    config: MonitorConfig,
    state: CoordinatorState,
    nodes: Vec<NodeView>,
    rng: RandomSource,
    time: u64,
    seq: u32,
    /// Handler invocations per reset epoch; the last entry is the open epoch.
    epoch_handlers: Vec<u32>,
    resets: u64,
}

impl Monitor {
    /// Runs the initial filter reset on `snapshot`.
    pub fn initialize(snapshot: Snapshot<'_>, config: MonitorConfig, fabric: &mut Fabric) -> Result<Self> {
        let n = snapshot.n();
        if config.k == 0 || config.k >= n {
            return Err(Error::KOutOfRange { k: config.k, n, min: 1, max: n.saturating_sub(1) });
        }
        let nodes = snapshot
            .values
            .iter()
            .enumerate()
            .map(|(i, &value)| NodeView {
                id: NodeId::from_index(i),
                value,
                filter: FilterInterval::point(value),
                was_top_k: false,
            })
            .collect();
        let mut monitor = Monitor {
            config,
            state: CoordinatorState::anchored(n, Vec::new(), 0, WindowExtremes::empty(snapshot.t)),
            nodes,
            rng: RandomSource::new(config.seed),
            time: snapshot.t,
            seq: 0,
            epoch_handlers: Vec::new(),
            resets: 0,
        };
        monitor.state.k = config.k;
        fabric.set_time(snapshot.t);
        monitor.filter_reset(fabric)?;
        Ok(monitor)
    }

    /// Resumes from an explicit coordinator state with nodes holding `values`
    /// at time `t`. Node filters and memberships are taken from `state`.
    pub fn from_state(state: CoordinatorState, values: &[Value], t: u64, config: MonitorConfig) -> Result<Self> {
        if values.len() != state.n || state.filters.len() != state.n || state.members.len() != state.n {
            return Err(Error::LengthMismatch { expected: state.n, got: values.len() });
        }
        if config.k != state.k || state.k == 0 || state.k >= state.n {
            return Err(Error::KOutOfRange { k: config.k, n: state.n, min: 1, max: state.n - 1 });
        }
        let nodes = values
            .iter()
            .enumerate()
            .map(|(i, &value)| NodeView {
                id: NodeId::from_index(i),
                value,
                filter: state.filters[i],
                was_top_k: state.members[i],
            })
            .collect();
        Ok(Monitor {
            config,
            state,
            nodes,
            rng: RandomSource::new(config.seed),
            time: t,
            seq: 0,
            epoch_handlers: vec![0],
            resets: 0,
        })
    }

    pub fn state(&self) -> &CoordinatorState {
        &self.state
    }

    pub fn nodes(&self) -> &[NodeView] {
        &self.nodes
    }

    /// Filters as currently held by the nodes.
    pub fn node_filters(&self) -> Vec<FilterInterval> {
        self.nodes.iter().map(|v| v.filter).collect()
    }

    pub fn answer(&self) -> Vec<NodeId> {
        self.state.answer()
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn reset_count(&self) -> u64 {
        self.resets
    }

    /// Handler invocations between consecutive resets. Each entry counts the
    /// handlers after one reset up to and including the one that triggered
    /// the next; the last entry is the epoch still open.
    pub fn handlers_per_epoch(&self) -> &[u32] {
        &self.epoch_handlers
    }

    /// Nodes whose current value lies outside their filter.
    pub fn detect_violations(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|v| v.filter.is_violated_by(v.value)).map(|v| v.id).collect()
    }

    pub fn step(&mut self, snapshot: Snapshot<'_>, fabric: &mut Fabric) -> Result<StepReport> {
        if snapshot.t != self.time + 1 {
            return Err(Error::TimeGap { previous: self.time, got: snapshot.t });
        }
        if snapshot.n() != self.state.n {
            return Err(Error::LengthMismatch { expected: self.state.n, got: snapshot.n() });
        }
        self.time = snapshot.t;
        self.seq = 0;
        fabric.set_time(self.time);
        let before = fabric.tally_snapshot();
        let resets_before = self.resets;
        for (node, &value) in self.nodes.iter_mut().zip(snapshot.values) {
            node.value = value;
        }

        let violations = self.detect_violations();
        let (dropped, risen): (Vec<NodeId>, Vec<NodeId>) =
            violations.iter().partition(|id| self.nodes[id.index()].was_top_k);

        let k = self.state.k as u64;
        let n = self.state.n as u64;
        let min = self.self_started(Mode::Min, k, &dropped, fabric)?;
        let max = self.self_started(Mode::Max, n - k, &risen, fabric)?;

        let handler_invoked = min.is_some() || max.is_some();
        if handler_invoked {
            self.filter_violation_handler(min, max, fabric)?;
        }
        let tally_delta = fabric.tally_snapshot() - before;
        Ok(StepReport {
            t: self.time,
            violations,
            handler_invoked,
            reset_invoked: self.resets > resets_before,
            filters_changed: tally_delta.filter_broadcast > 0,
            tally_delta,
            answer: self.answer(),
        })
    }

    /// Protocol run by a group of violators on their own initiative.
    fn self_started(
        &mut self,
        mode: Mode,
        bound: u64,
        group: &[NodeId],
        fabric: &mut Fabric,
    ) -> Result<Option<Value>> {
        if group.is_empty() {
            return Ok(None);
        }
        let participants = group.iter().map(|id| (*id, self.nodes[id.index()].value)).collect();
        Ok(Some(self.protocol(mode, bound, participants, false, fabric)?.winner_value))
    }

    fn protocol(
        &mut self,
        mode: Mode,
        bound: u64,
        participants: Vec<(NodeId, Value)>,
        announce: bool,
        fabric: &mut Fabric,
    ) -> Result<ProtocolOutcome> {
        if announce {
            fabric.record_broadcast(
                MessageKind::InitiationBroadcast,
                Payload::ProtocolStart { mode, bound, participants: participants.len() },
            )?;
        }
        let invocation = InvocationKey { t: self.time, seq: self.seq };
        self.seq += 1;
        let config = ProtocolConfig {
            mode,
            bound,
            participants,
            silent_rounds: self.config.silent_rounds,
        };
        run_extremum(&config, &self.rng, invocation, fabric)
    }

    fn group(&self, inside: bool) -> Vec<(NodeId, Value)> {
        self.nodes
            .iter()
            .filter(|v| self.state.members[v.id.index()] == inside)
            .map(|v| (v.id, v.value))
            .collect()
    }

    /// Completes the missing extremum, updates the window and either moves
    /// the boundary or resets. Returns whether a reset happened.
    pub fn filter_violation_handler(
        &mut self,
        min: Option<Value>,
        max: Option<Value>,
        fabric: &mut Fabric,
    ) -> Result<bool> {
        if min.is_none() && max.is_none() {
            return Err(Error::NothingCommunicated);
        }
        let k = self.state.k as u64;
        let n = self.state.n as u64;
        let (min, max) = match max {
            None => {
                let outsiders = self.group(false);
                let probe = self.protocol(Mode::Max, n - k, outsiders, true, fabric)?;
                (min, probe.winner_value)
            }
            Some(max) => {
                let insiders = self.group(true);
                let probe = self.protocol(Mode::Min, k, insiders, true, fabric)?;
                (Some(probe.winner_value), max)
            }
        };
        if let Some(open) = self.epoch_handlers.last_mut() {
            *open += 1;
        }

        self.state.extremes = extremes_update(self.state.extremes, min, Some(max));
        if self.state.extremes.crossed() {
            self.filter_reset(fabric)?;
            return Ok(true);
        }

        let (ExtValue::Finite(lo), ExtValue::Finite(hi)) =
            (self.state.extremes.t_minus, self.state.extremes.t_plus)
        else {
            unreachable!("both extremes were just folded in");
        };
        let m = midpoint(lo, hi)?;
        fabric.record_broadcast(MessageKind::FilterBroadcast, Payload::Midpoint { m, top_k: None })?;
        self.anchor(m);
        Ok(false)
    }

    /// Finds the top `k + 1` nodes one maximum search at a time and anchors
    /// every filter at the midpoint of the k-th and (k+1)-st value.
    pub fn filter_reset(&mut self, fabric: &mut Fabric) -> Result<()> {
        let k = self.state.k;
        let n = self.state.n as u64;
        let mut taken = vec![false; self.nodes.len()];
        let mut found: Vec<(NodeId, Value)> = Vec::with_capacity(k + 1);
        for _ in 0..=k {
            let rest: Vec<(NodeId, Value)> = self
                .nodes
                .iter()
                .filter(|v| !taken[v.id.index()])
                .map(|v| (v.id, v.value))
                .collect();
            let outcome = self.protocol(Mode::Max, n, rest, true, fabric)?;
            taken[outcome.winner.index()] = true;
            found.push((outcome.winner, outcome.winner_value));
        }

        let kth = found[k - 1].1;
        let next = found[k].1;
        let m = midpoint(next, kth)?;
        let top_k: Vec<NodeId> = found[..k].iter().map(|&(id, _)| id).collect();
        fabric.record_broadcast(
            MessageKind::FilterBroadcast,
            Payload::Midpoint { m, top_k: Some(top_k.clone()) },
        )?;

        self.state = CoordinatorState::anchored(
            self.state.n,
            top_k,
            m,
            WindowExtremes::new(kth, next, self.time),
        );
        self.anchor(m);
        self.resets += 1;
        self.epoch_handlers.push(0);
        Ok(())
    }

    /// Applies a filter broadcast at the nodes and mirrors it at the coordinator.
    fn anchor(&mut self, m: Value) {
        self.state.current_m = m;
        for (i, node) in self.nodes.iter_mut().enumerate() {
            let inside = self.state.members[i];
            let filter = if inside { FilterInterval::at_least(m) } else { FilterInterval::at_most(m) };
            self.state.filters[i] = filter;
            node.filter = filter;
            node.was_top_k = inside;
        }
    }
}
