//! Randomized extremum protocol.
//!
//! Participants hold fixed values. In round `r = 0..=ceil(log2 N)` every
//! active participant first drops out if the extremum broadcast after the
//! previous round already beats its value; otherwise it uploads `(id, value)`
//! with probability `min(2^r / N, 1)` and goes inactive once it has sent.
//! After each round the coordinator broadcasts the best value seen so far.
//! The last round has probability one, so the result is always exact; only
//! the number of uploads is random.

use std::fmt;

use rand::distributions::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{NodeId, RankKey, Value};
use crate::error::{Error, Result};
use crate::transport::{Fabric, MessageKind, Payload};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Max,
    Min,
}

impl Mode {
    /// True when `incumbent` makes a holder of `candidate` drop out.
    fn beats(self, incumbent: Value, candidate: Value) -> bool {
        match self {
            Mode::Max => incumbent > candidate,
            Mode::Min => incumbent < candidate,
        }
    }

    /// True when `a` is a better answer than `b`.
    fn prefers(self, a: RankKey, b: RankKey) -> bool {
        match self {
            Mode::Max => a > b,
            Mode::Min => a < b,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Max => "max",
            Mode::Min => "min",
        })
    }
}

/// Identifies one protocol invocation: the time step and the invocation's
/// sequence number within that step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct InvocationKey {
    pub t: u64,
    pub seq: u32,
}

/// Key of a single coin flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DrawKey {
    pub invocation: InvocationKey,
    pub node: NodeId,
    pub round: u32,
}

/// Counter-based randomness: each draw is a pure function of the master seed
/// and its [`DrawKey`], so outcomes do not depend on iteration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomSource {
    seed: u64,
}

const MAX_SEQ: u32 = 1 << 20;

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// ChaCha stream `t`, positioned at a word offset unique to
    /// `(seq, node, round)`.
    fn stream_for(&self, key: DrawKey) -> ChaCha8Rng {
        debug_assert!(key.invocation.seq < MAX_SEQ && key.round < 128);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(key.invocation.t);
        let slot = (u128::from(key.invocation.seq) << 40)
            | ((key.node.index() as u128) << 7)
            | u128::from(key.round);
        rng.set_word_pos(slot << 1);
        rng
    }

    /// A coin with success probability `p`.
    pub fn bernoulli(&self, p: f64, key: DrawKey) -> bool {
        if p >= 1.0 {
            return true;
        }
        if p <= 0.0 {
            return false;
        }
        let coin = Bernoulli::new(p).expect("probability in (0, 1)");
        coin.sample(&mut self.stream_for(key))
    }
}

/// `bernoulli` as a free function.
pub fn bernoulli(p: f64, rng: &RandomSource, key: DrawKey) -> bool {
    rng.bernoulli(p, key)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub mode: Mode,
    /// Upper bound `N` on the number of participants.
    pub bound: u64,
    pub participants: Vec<(NodeId, Value)>,
    /// Skip round broadcasts whose extremum did not change.
    pub silent_rounds: bool,
}

impl ProtocolConfig {
    pub fn new(mode: Mode, bound: u64, participants: Vec<(NodeId, Value)>) -> Self {
        ProtocolConfig { mode, bound, participants, silent_rounds: false }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProtocolOutcome {
    pub winner: NodeId,
    pub winner_value: Value,
    pub rounds: u32,
    pub uploads: u64,
    pub round_broadcasts: u64,
    /// Whether each participant uploaded, in participant order.
    pub per_node_sent: Vec<(NodeId, bool)>,
}

/// `ceil(log2 n)` for `n >= 1`.
pub fn ceil_log2(n: u64) -> u32 {
    assert!(n >= 1);
    64 - (n - 1).leading_zeros()
}

/// Number of rounds a run with bound `n` takes.
pub fn round_count(bound: u64) -> u32 {
    ceil_log2(bound) + 1
}

/// Send probability in round `r`, `min(2^r / N, 1)`.
pub fn round_probability(round: u32, bound: u64) -> f64 {
    if round >= 64 || (1u64 << round) >= bound {
        1.0
    } else {
        (1u64 << round) as f64 / bound as f64
    }
}

pub fn run_extremum(
    config: &ProtocolConfig,
    rng: &RandomSource,
    invocation: InvocationKey,
    fabric: &mut Fabric,
) -> Result<ProtocolOutcome> {
    let mode = config.mode;
    if config.bound == 0 {
        return Err(Error::ZeroBound);
    }
    if config.participants.is_empty() {
        return Err(Error::EmptyProtocol);
    }
    if config.participants.len() as u64 > config.bound {
        return Err(Error::TooManyParticipants {
            participants: config.participants.len(),
            bound: config.bound,
        });
    }

    let rounds = round_count(config.bound);
    let mut active = vec![true; config.participants.len()];
    let mut sent = vec![false; config.participants.len()];
    let mut best: Option<RankKey> = None;
    let mut announced: Option<Value> = None;
    let mut uploads = 0;
    let mut round_broadcasts = 0;

    for round in 0..rounds {
        let p = round_probability(round, config.bound);
        for (slot, &(node, value)) in config.participants.iter().enumerate() {
            if !active[slot] {
                continue;
            }
            if announced.is_some_and(|a| mode.beats(a, value)) {
                active[slot] = false;
                continue;
            }
            if rng.bernoulli(p, DrawKey { invocation, node, round }) {
                fabric.record_upload(node, Payload::Value(value));
                uploads += 1;
                sent[slot] = true;
                active[slot] = false;
                let key = RankKey::new(value, node);
                if best.is_none_or(|b| mode.prefers(key, b)) {
                    best = Some(key);
                }
            }
        }

        let current = best.map(|b| b.value);
        if !(config.silent_rounds && current == announced) {
            fabric.record_broadcast(
                MessageKind::ProtocolRoundBroadcast,
                Payload::RunningExtremum { mode, value: current },
            )?;
            round_broadcasts += 1;
        }
        announced = current;
    }

    let best = best.expect("the final round has probability one");
    Ok(ProtocolOutcome {
        winner: best.node,
        winner_value: best.value,
        rounds,
        uploads,
        round_broadcasts,
        per_node_sent: config.participants.iter().map(|&(id, _)| id).zip(sent).collect(),
    })
}

/// Upper bound on the probability that the participant of rank `i` (1 is the
/// best) uploads during a run with bound `N`:
/// `1/N + sum_{r=1}^{ceil(log2 N)} p_r (1 - p_{r-1})^i` with
/// `p_r = min(2^r / N, 1)`, clamped to `[0, 1]`.
pub fn lemma3_bound(rank: u64, bound: u64) -> f64 {
    assert!(rank >= 1 && bound >= 1);
    let mut sum = round_probability(0, bound);
    for r in 1..round_count(bound) {
        let survive = 1.0 - round_probability(r - 1, bound);
        sum += round_probability(r, bound) * survive.powi(rank.min(i32::MAX as u64) as i32);
    }
    sum.clamp(0.0, 1.0)
}

/// Expected-upload bound `2 log2 N + 1`.
pub fn expected_upload_bound(bound: u64) -> f64 {
    2.0 * (bound as f64).log2() + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(seq: u32) -> InvocationKey {
        InvocationKey { t: 0, seq }
    }

    fn participants(values: &[Value]) -> Vec<(NodeId, Value)> {
        values.iter().enumerate().map(|(i, &v)| (NodeId::from_index(i), v)).collect()
    }

    #[test]
    fn log_and_rounds() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(1024), 10);
        assert_eq!(ceil_log2(1025), 11);
        assert_eq!(round_count(1), 1);
        assert_eq!(round_probability(0, 4), 0.25);
        assert_eq!(round_probability(2, 4), 1.0);
        assert_eq!(round_probability(2, 3), 1.0);
        assert_eq!(round_probability(1, 3), 2.0 / 3.0);
    }

    #[test]
    fn single_participant() {
        let mut fabric = Fabric::new();
        let cfg = ProtocolConfig::new(Mode::Max, 1, participants(&[42]));
        let out = run_extremum(&cfg, &RandomSource::new(7), key(0), &mut fabric).unwrap();
        assert_eq!(out.winner, NodeId::new(1));
        assert_eq!(out.winner_value, 42);
        assert_eq!(out.uploads, 1);
        assert_eq!(out.rounds, 1);
        assert_eq!(out.round_broadcasts, 1);
        assert_eq!(fabric.tally_snapshot().total, 2);
    }

    #[test]
    fn three_participants_any_seed() {
        for seed in 0..200 {
            let mut fabric = Fabric::new();
            let cfg = ProtocolConfig::new(Mode::Max, 3, participants(&[5, 9, 2]));
            let out = run_extremum(&cfg, &RandomSource::new(seed), key(0), &mut fabric).unwrap();
            assert_eq!(out.winner_value, 9);
            assert_eq!(out.winner, NodeId::new(2));
            assert_eq!(out.rounds, 3);

            let cfg = ProtocolConfig { mode: Mode::Min, ..cfg };
            let out = run_extremum(&cfg, &RandomSource::new(seed), key(1), &mut fabric).unwrap();
            assert_eq!(out.winner_value, 2);
            assert_eq!(out.winner, NodeId::new(3));
        }
    }

    #[test]
    fn ties_resolve_by_rank_key() {
        for seed in 0..100 {
            let mut fabric = Fabric::new();
            let cfg = ProtocolConfig::new(Mode::Max, 4, participants(&[3, 8, 8, 1]));
            let out = run_extremum(&cfg, &RandomSource::new(seed), key(0), &mut fabric).unwrap();
            assert_eq!(out.winner, NodeId::new(2));
            let cfg = ProtocolConfig::new(Mode::Min, 4, participants(&[1, 8, 8, 1]));
            let out = run_extremum(&cfg, &RandomSource::new(seed), key(0), &mut fabric).unwrap();
            assert_eq!(out.winner, NodeId::new(4));
        }
    }

    #[test]
    fn empty_and_oversized() {
        let mut fabric = Fabric::new();
        let rng = RandomSource::new(1);
        let cfg = ProtocolConfig::new(Mode::Max, 4, vec![]);
        assert!(matches!(run_extremum(&cfg, &rng, key(0), &mut fabric), Err(Error::EmptyProtocol)));
        let cfg = ProtocolConfig::new(Mode::Max, 2, participants(&[1, 2, 3]));
        assert!(matches!(
            run_extremum(&cfg, &rng, key(0), &mut fabric),
            Err(Error::TooManyParticipants { .. })
        ));
        let cfg = ProtocolConfig::new(Mode::Max, 0, participants(&[1]));
        assert!(matches!(run_extremum(&cfg, &rng, key(0), &mut fabric), Err(Error::ZeroBound)));
        assert_eq!(fabric.tally_snapshot().total, 0);
    }

    #[test]
    fn non_power_of_two_bound_forces_last_round() {
        let values: Vec<Value> = (0..5).map(|v| v * 3 + 1).collect();
        for seed in 0..300 {
            let mut fabric = Fabric::new();
            let cfg = ProtocolConfig::new(Mode::Max, 5, participants(&values));
            let out = run_extremum(&cfg, &RandomSource::new(seed), key(0), &mut fabric).unwrap();
            assert_eq!(out.winner_value, 13);
            assert_eq!(out.rounds, 4);
        }
    }

    #[test]
    fn silent_rounds_suppress_repeats() {
        let values: Vec<Value> = (0..64).collect();
        for seed in 0..50 {
            let rng = RandomSource::new(seed);
            let mut loud = Fabric::new();
            let cfg = ProtocolConfig::new(Mode::Max, 64, participants(&values));
            let a = run_extremum(&cfg, &rng, key(0), &mut loud).unwrap();
            let mut quiet = Fabric::new();
            let cfg = ProtocolConfig { silent_rounds: true, ..cfg };
            let b = run_extremum(&cfg, &rng, key(0), &mut quiet).unwrap();
            assert_eq!(a.per_node_sent, b.per_node_sent);
            assert_eq!(a.round_broadcasts, 7);
            assert!(b.round_broadcasts >= 1 && b.round_broadcasts <= a.round_broadcasts);
        }
    }

    #[test]
    fn outcome_is_independent_of_participant_order() {
        let values: Vec<Value> = (0..32).map(|v| (v * 37) % 101).collect();
        let forward = participants(&values);
        let mut backward = forward.clone();
        backward.reverse();
        for seed in 0..20 {
            let rng = RandomSource::new(seed);
            let a = run_extremum(&ProtocolConfig::new(Mode::Max, 32, forward.clone()), &rng, key(3), &mut Fabric::new()).unwrap();
            let b = run_extremum(&ProtocolConfig::new(Mode::Max, 32, backward.clone()), &rng, key(3), &mut Fabric::new()).unwrap();
            let mut sa = a.per_node_sent.clone();
            let mut sb = b.per_node_sent.clone();
            sa.sort();
            sb.sort();
            assert_eq!(sa, sb);
            assert_eq!(a.uploads, b.uploads);
        }
    }

    #[test]
    fn bernoulli_extremes_and_mean() {
        let rng = RandomSource::new(99);
        let draw = |p: f64, i: u32| {
            rng.bernoulli(p, DrawKey { invocation: key(i >> 7), node: NodeId::new(1), round: i & 127 })
        };
        assert!((0..1000).all(|i| draw(1.0, i)));
        assert!((0..1000).all(|i| !draw(0.0, i)));

        let hits = (0..100_000u32)
            .filter(|&i| {
                rng.bernoulli(
                    0.5,
                    DrawKey { invocation: InvocationKey { t: u64::from(i), seq: 0 }, node: NodeId::new(1), round: 0 },
                )
            })
            .count();
        let mean = hits as f64 / 100_000.0;
        assert!((mean - 0.5).abs() <= 0.01, "mean {mean}");
    }

    #[test]
    fn bernoulli_is_a_pure_function_of_the_key() {
        let rng = RandomSource::new(5);
        let k = DrawKey { invocation: key(2), node: NodeId::new(9), round: 3 };
        let first = (0..64).map(|_| rng.bernoulli(0.3, k)).collect::<Vec<_>>();
        assert!(first.iter().all(|&b| b == first[0]));
    }

    /// Direct evaluation of the sum, written out term by term.
    #[test]
    fn send_probability_bound_values() {
        assert_eq!(lemma3_bound(1, 1), 1.0);
        let expected = 0.25 + 0.5 * 0.75f64.powi(4) + 1.0 * 0.5f64.powi(4);
        assert!((lemma3_bound(4, 4) - expected).abs() < 1e-12);
        assert!((lemma3_bound(4, 4) - 0.470703125).abs() < 1e-12);
        for n in [2u64, 3, 16, 64, 100, 1024] {
            let mut prev = f64::INFINITY;
            for i in 1..=n {
                let b = lemma3_bound(i, n);
                assert!(b <= prev + 1e-15, "not monotone at i = {i}, N = {n}");
                assert!((0.0..=1.0).contains(&b));
                prev = b;
            }
        }
    }

    #[test]
    fn upload_bound() {
        assert_eq!(expected_upload_bound(1024), 21.0);
        assert_eq!(expected_upload_bound(1), 1.0);
    }
}
