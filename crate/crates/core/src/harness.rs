//! Experiment drivers behind the `topkmon` binary.
//!
//! Every report echoes the configuration it was produced from; rerunning
//! that configuration reproduces the report byte for byte.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{validate_filter_set, NodeId, Value};
use crate::error::{Error, Result};
use crate::monitor::{Monitor, MonitorConfig, StepReport};
use crate::oracle::{brute_force_top_k, competitive_envelope, compute_delta, opt_lower_bound, OptPartition};
use crate::protocols::{
    expected_upload_bound, lemma3_bound, run_extremum, InvocationKey, Mode, ProtocolConfig, RandomSource,
};
use crate::streams::{save_csv, GeneratorSpec};
use crate::trace::Trace;
use crate::transport::{EventLogEntry, Fabric, MessageTally};

/// Slack factor applied to the competitive envelope.
pub const ENVELOPE_SLACK: f64 = 8.0;

/// Handler invocations allowed between two resets: `2 log2 delta + 2`.
pub fn handler_bound(delta: Value) -> f64 {
    2.0 * (delta.max(1) as f64).log2() + 2.0
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TraceSource {
    Generated { spec: GeneratorSpec },
    File { path: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunConfig {
    pub n: usize,
    pub k: usize,
    pub t: u64,
    pub seed: u64,
    pub source: TraceSource,
    pub silent_rounds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepSummary {
    pub t: u64,
    pub violations: usize,
    pub handler_invoked: bool,
    pub reset_invoked: bool,
    pub messages: u64,
    pub answer: Vec<NodeId>,
}

impl From<&StepReport> for StepSummary {
    fn from(r: &StepReport) -> Self {
        StepSummary {
            t: r.t,
            violations: r.violations.len(),
            handler_invoked: r.handler_invoked,
            reset_invoked: r.reset_invoked,
            messages: r.tally_delta.total,
            answer: r.answer.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub tally: MessageTally,
    /// Messages spent on the initial filter assignment.
    pub initialization_messages: u64,
    pub opt_lower_bound: u64,
    pub delta: Value,
    pub empirical_ratio: f64,
    pub envelope: f64,
    pub envelope_slack: f64,
    pub within_envelope: bool,
    pub resets: u64,
    pub handler_invocations: u64,
    pub max_handlers_between_resets: u32,
    pub handler_bound: f64,
    pub handler_bound_ok: bool,
    pub filters_valid: bool,
    pub correctness_checked: bool,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_step: Option<Vec<StepSummary>>,
}

pub struct Simulation {
    pub report: RunReport,
    pub steps: Vec<StepReport>,
    pub partition: OptPartition,
    pub event_log: Vec<EventLogEntry>,
}

impl Simulation {
    pub fn write_event_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for entry in &self.event_log {
            writeln!(out, "{entry}")?;
        }
        Ok(())
    }
}

/// Runs the monitor over `trace`, checking each answer against the oracle.
///
/// A wrong answer aborts with [`Error::OracleMismatch`]. Failed filter or
/// handler-count checks are reported in the result with `passed = false`.
pub fn simulate(trace: &Trace, config: RunConfig, keep_steps: bool) -> Result<Simulation> {
    let k = config.k;
    let monitor_config = MonitorConfig { k, seed: config.seed, silent_rounds: config.silent_rounds };
    let delta = compute_delta(trace, k)?;
    let partition = opt_lower_bound(trace, k)?;

    let mut fabric = Fabric::new();
    let mut snapshots = trace.snapshots();
    let first = snapshots.next().expect("traces are nonempty");
    let mut monitor = Monitor::initialize(first, monitor_config, &mut fabric)?;
    let initialization_messages = fabric.tally_snapshot().total;

    let check = |monitor: &Monitor, t: u64, values: &[Value]| -> Result<bool> {
        let mut oracle = brute_force_top_k(trace, k, t)?;
        oracle.sort();
        let answer = monitor.answer();
        if answer != oracle {
            return Err(Error::OracleMismatch { t, monitor: answer, oracle });
        }
        Ok(validate_filter_set(&monitor.node_filters(), values, k)?.is_valid())
    };

    let mut filters_valid = check(&monitor, first.t, first.values)?;
    let mut steps = Vec::with_capacity(trace.len() as usize);
    for snap in snapshots {
        let report = monitor.step(snap, &mut fabric)?;
        filters_valid &= check(&monitor, snap.t, snap.values)?;
        steps.push(report);
    }

    let tally = fabric.tally_snapshot();
    let handler_invocations = steps.iter().filter(|s| s.handler_invoked).count() as u64;
    let max_handlers = monitor.handlers_per_epoch().iter().copied().max().unwrap_or(0);
    let bound = handler_bound(delta);
    let envelope = competitive_envelope(delta, k, trace.n(), partition.lower_bound);
    let within_envelope = tally.total as f64 <= envelope * ENVELOPE_SLACK;
    let handler_bound_ok = f64::from(max_handlers) <= bound;

    let report = RunReport {
        config,
        tally,
        initialization_messages,
        opt_lower_bound: partition.lower_bound,
        delta,
        empirical_ratio: tally.total as f64 / partition.lower_bound as f64,
        envelope,
        envelope_slack: ENVELOPE_SLACK,
        within_envelope,
        resets: monitor.reset_count(),
        handler_invocations,
        max_handlers_between_resets: max_handlers,
        handler_bound: bound,
        handler_bound_ok,
        filters_valid,
        correctness_checked: true,
        passed: filters_valid && handler_bound_ok && within_envelope,
        per_step: keep_steps.then(|| steps.iter().map(StepSummary::from).collect()),
    };
    Ok(Simulation { report, steps, partition, event_log: fabric.export_event_log() })
}

/// Writes the trace prefix up to `t` and the run configuration into `dir`.
pub fn write_repro_bundle(dir: &Path, trace: &Trace, t: u64, config: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    save_csv(&trace.slice(1, t)?, &dir.join("trace.csv"))?;
    let mut echo = config.clone();
    echo.t = t;
    echo.source = TraceSource::File { path: "trace.csv".into() };
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&echo)? + "\n")?;
    Ok(dir.to_path_buf())
}

pub fn write_per_step_csv<W: Write>(steps: &[StepReport], out: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(["t", "violations", "handler", "reset", "messages", "answer"])
        .map_err(|e| Error::Io(e.into()))?;
    for s in steps {
        let answer = s.answer.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(" ");
        csv.write_record([
            s.t.to_string(),
            s.violations.len().to_string(),
            u8::from(s.handler_invoked).to_string(),
            u8::from(s.reset_invoked).to_string(),
            s.tally_delta.total.to_string(),
            answer,
        ])
        .map_err(|e| Error::Io(e.into()))?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BenchConfig {
    /// Protocol bound `N`.
    pub n: u64,
    /// Number of participants, at most `n`.
    pub participants: usize,
    pub trials: u64,
    pub mode: Mode,
    pub seed: u64,
    pub silent_rounds: bool,
}

impl BenchConfig {
    pub fn new(n: u64, trials: u64, mode: Mode, seed: u64) -> Self {
        BenchConfig { n, participants: n as usize, trials, mode, seed, silent_rounds: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankRow {
    /// 1 is the extremum holder.
    pub rank: u64,
    pub frequency: f64,
    pub std_error: f64,
    pub lemma3_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub mean_uploads: f64,
    pub stddev_uploads: f64,
    pub std_error_uploads: f64,
    pub max_uploads: u64,
    pub mean_round_broadcasts: f64,
    pub max_round_broadcasts: u64,
    pub upload_bound: f64,
    pub mean_within_bound: bool,
    pub tail_threshold: f64,
    pub tail_fraction: f64,
    /// Every run returned the true extremum.
    pub all_correct: bool,
    pub per_rank: Vec<RankRow>,
}

#[derive(Clone, Debug, Default)]
struct BenchTotals {
    uploads: u64,
    uploads_sq: u128,
    max_uploads: u64,
    broadcasts: u64,
    max_broadcasts: u64,
    tail: u64,
    wrong: u64,
    sends_by_rank: Vec<u64>,
}

impl BenchTotals {
    fn merge(mut self, other: BenchTotals) -> BenchTotals {
        self.uploads += other.uploads;
        self.uploads_sq += other.uploads_sq;
        self.max_uploads = self.max_uploads.max(other.max_uploads);
        self.broadcasts += other.broadcasts;
        self.max_broadcasts = self.max_broadcasts.max(other.max_broadcasts);
        self.tail += other.tail;
        self.wrong += other.wrong;
        if self.sends_by_rank.is_empty() {
            return BenchTotals { sends_by_rank: other.sends_by_rank, ..self };
        }
        for (a, b) in self.sends_by_rank.iter_mut().zip(other.sends_by_rank) {
            *a += b;
        }
        self
    }
}

/// Distinct values `1..=participants` in a trial-specific random order.
pub fn bench_values(seed: u64, trial: u64, participants: usize) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5_eed0_f7a1_u64);
    rng.set_stream(trial);
    let mut values: Vec<Value> = (1..=participants as Value).collect();
    values.shuffle(&mut rng);
    values
}

/// Repeated extremum protocol runs on shuffled distinct values.
pub fn protocol_bench(config: BenchConfig) -> Result<BenchReport> {
    if config.trials == 0 {
        return Err(Error::InvalidDimensions("trials must be at least 1".into()));
    }
    if config.participants == 0 || config.participants as u64 > config.n {
        return Err(Error::TooManyParticipants { participants: config.participants, bound: config.n });
    }
    let p = config.participants;
    let tail_threshold = 8.0 * (config.n as f64).log2();
    let rng = RandomSource::new(config.seed);

    let totals = (0..config.trials)
        .into_par_iter()
        .map(|trial| -> Result<BenchTotals> {
            let values = bench_values(config.seed, trial, p);
            let participants: Vec<(NodeId, Value)> =
                values.iter().enumerate().map(|(i, &v)| (NodeId::from_index(i), v)).collect();
            let protocol = ProtocolConfig {
                mode: config.mode,
                bound: config.n,
                participants,
                silent_rounds: config.silent_rounds,
            };
            let mut fabric = Fabric::new();
            let out = run_extremum(&protocol, &rng, InvocationKey { t: trial, seq: 0 }, &mut fabric)?;
            let expected = match config.mode {
                Mode::Max => p as Value,
                Mode::Min => 1,
            };
            let mut sends_by_rank = vec![0; p];
            for (&(_, sent), &v) in out.per_node_sent.iter().zip(&values) {
                if sent {
                    let rank = match config.mode {
                        Mode::Max => p as Value - v + 1,
                        Mode::Min => v,
                    };
                    sends_by_rank[rank as usize - 1] += 1;
                }
            }
            Ok(BenchTotals {
                uploads: out.uploads,
                uploads_sq: u128::from(out.uploads) * u128::from(out.uploads),
                max_uploads: out.uploads,
                broadcasts: out.round_broadcasts,
                max_broadcasts: out.round_broadcasts,
                tail: u64::from(out.uploads as f64 > tail_threshold),
                wrong: u64::from(out.winner_value != expected),
                sends_by_rank,
            })
        })
        .try_reduce(BenchTotals::default, |a, b| Ok(a.merge(b)))?;

    let trials = config.trials as f64;
    let mean = totals.uploads as f64 / trials;
    let variance = if config.trials > 1 {
        ((totals.uploads_sq as f64) - trials * mean * mean).max(0.0) / (trials - 1.0)
    } else {
        0.0
    };
    let stddev = variance.sqrt();
    let std_error = stddev / trials.sqrt();
    let upload_bound = expected_upload_bound(config.n);
    let per_rank = totals
        .sends_by_rank
        .iter()
        .enumerate()
        .map(|(i, &count)| {
            let f = count as f64 / trials;
            RankRow {
                rank: i as u64 + 1,
                frequency: f,
                std_error: (f * (1.0 - f) / trials).sqrt(),
                lemma3_bound: lemma3_bound(i as u64 + 1, config.n),
            }
        })
        .collect();

    Ok(BenchReport {
        config,
        mean_uploads: mean,
        stddev_uploads: stddev,
        std_error_uploads: std_error,
        max_uploads: totals.max_uploads,
        mean_round_broadcasts: totals.broadcasts as f64 / trials,
        max_round_broadcasts: totals.max_broadcasts,
        upload_bound,
        mean_within_bound: mean <= upload_bound + 3.0 * std_error,
        tail_threshold,
        tail_fraction: totals.tail as f64 / trials,
        all_correct: totals.wrong == 0,
        per_rank,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OracleReport {
    pub n: usize,
    pub k: usize,
    pub t: u64,
    pub delta: Value,
    pub lower_bound: u64,
    pub intervals: Vec<(u64, u64)>,
}

pub fn oracle_report(trace: &Trace, k: usize) -> Result<OracleReport> {
    let partition = opt_lower_bound(trace, k)?;
    Ok(OracleReport {
        n: trace.n(),
        k,
        t: trace.len(),
        delta: compute_delta(trace, k)?,
        lower_bound: partition.lower_bound,
        intervals: partition.intervals,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}
